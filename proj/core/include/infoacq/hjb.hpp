#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "infoacq/equilibrium.hpp"
#include "infoacq/model.hpp"
#include "infoacq/riccati.hpp"

namespace infoacq {

struct Grid {
  double lo = 0;
  double hi = 0;
  double spacing = 0;
  std::vector<double> nodes;

  static Grid uniform(double lo, double hi, std::size_t n);
  std::size_t size() const { return nodes.size(); }
};

struct ValueTable {
  Grid grid;
  std::vector<double> v;
  std::vector<double> v_slope;
  std::vector<double> marginal;  // gamma^2 v'(gamma), monotone
  std::vector<double> h_star;
  double gamma_D = 0;
  std::size_t iterations = 0;
  double residual = 0;
  Model model;

  double value_at(double gamma) const;
  double slope_at(double gamma) const;
  double marginal_at(double gamma) const;
  void write_csv(std::ostream& os) const;  // gamma,v,v_prime,h_star
};

struct HamiltonianValue {
  double value;
  double minimizer;
};

// inf over h of f(gamma,h) p + a_bar gamma + c(h). Throws SlopeOutOfRange.
HamiltonianValue hamiltonian(double gamma, double p, const Model& model);

enum class BellmanScheme {
  // Euler foot point, rectangle-rule running cost, linear interpolation.
  FirstOrder,
  // Exact constant-rate flow for the foot point, Simpson running cost, cubic interpolation.
  SecondOrder,
};

struct ValueIterationOptions {
  double dt = 0.0;  // 0 picks min(1e-3, stability bound)
  double tol = 1e-10;
  std::size_t max_iter = 1'000'000;
  BellmanScheme scheme = BellmanScheme::SecondOrder;
  // Solve the linear system of the current policy between improvement steps.
  bool policy_evaluation = true;
};

double max_stable_dt(const Model& model);

ValueTable value_iteration(const Grid& grid, const Model& model, const ValueIterationOptions& options = {});

// Centered differences inside, one-sided at the ends, projected to be nonincreasing.
// Throws ConcavityViolation when the projection moves a slope by more than 100 tol.
std::vector<double> slope_table(const Grid& grid, std::span<const double> v, double tol = 1e-10);
std::vector<double> slope_table(const ValueTable& table, double tol = 1e-10);

double feedback_threshold(const ValueTable& table);
double feedback_map(const ValueTable& table, double gamma);

// Sup over interior nodes of |-delta v + H(gamma, centered v')|.
double hjb_residual(const ValueTable& table);

struct PolicyCost {
  double value;
  double tail_bound;
};
PolicyCost evaluate_policy_cost(double gamma0, const RateSchedule& policy, const Model& model, double horizon,
                                double dt);

struct NoAcquisitionValue {
  double value;   // v^no(gamma0)
  double w_bar;   // v^no + a2 gamma0 + (C1 + a2 sigma2^2)/delta
};
NoAcquisitionValue no_acquisition_value(double gamma0, const Model& model);
// Same quantity from the linear transport equation integrated in gamma.
double no_acquisition_value_transport(double gamma0, const Model& model);

// Quadratic-cost value function from the explicit first-order ODE, integrated
// outward from the equilibrium on a uniform grid over [gamma_lo, gamma_hi].
ValueTable quadratic_ode_oracle(const Model& model, double gamma_lo, double gamma_hi, const EquilibriumPoint& eq,
                                std::size_t n);

// Second differences of the table re-expressed on a uniform precision grid
// over [1/gamma_max, 1/gamma_lo] with gamma_lo = max(gamma_D, gamma_max/10).
std::vector<double> precision_second_differences(const ValueTable& table, std::size_t n = 200);

}  // namespace infoacq
