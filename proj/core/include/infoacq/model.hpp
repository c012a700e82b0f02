#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "infoacq/cost.hpp"

namespace infoacq {

struct ModelParams {
  double lambda = 1.0;  // mean-reversion speed of the hidden drift
  double mu_bar = 0.0;  // long-run mean of the hidden drift
  double sigma1 = 1.0;  // state volatility
  double sigma2 = 1.0;  // drift volatility
  double delta = 1.0;   // discount rate
  double kappa = 1.0;   // state cost weight
  double rho = 1.0;     // control cost weight

  // Throws InvalidParams naming the offending field.
  void validate() const;
  double sigma1_bar_sq() const { return 1.0 / (sigma1 * sigma1); }
};

// Builds validated parameters; throws InvalidParams.
ModelParams make_params(double lambda, double mu_bar, double sigma1, double sigma2, double delta,
                        double kappa, double rho);

struct Coefficients {
  double a1 = 0, a2 = 0, a3 = 0, b1 = 0, b2 = 0;
  double a_bar = 0;
  double C1 = 0;
  double gamma_inf0 = 0;
  double gamma_max = 0;
  double L_v = 0;
  double M0 = 0;
  double h_max = 0;
  bool h_max_clamped = false;
  std::vector<std::string> warnings;

  double hessian_det() const { return 4.0 * a1 * a2 - a3 * a3; }
};

inline constexpr double kDefaultGammaMaxFactor = 2.5;
// Upper cap applied to h_max when (c')^{-1}(M0) overflows.
inline constexpr double kHMaxCeiling = 1e12;

double gamma_inf_uncontrolled(const ModelParams& p);
// factor * gamma_inf0, or 1 when gamma_inf0 = 0.
double default_gamma_max(const ModelParams& p, double factor = kDefaultGammaMaxFactor);

Coefficients derive_coefficients(const ModelParams& p, const CostFunction& cost, double gamma_max);
Coefficients derive_coefficients(const ModelParams& p, const CostFunction& cost);

// The five defining algebraic equations of the quadratic ansatz, evaluated at c.
std::array<double, 5> coefficient_residuals(const ModelParams& p, const Coefficients& c);
// |a3^2/(2 rho) - (a3 - a2 (2 lambda + delta))| / a_bar
double a_bar_identity_residual(const ModelParams& p, const Coefficients& c);
// d a_bar / d kappa from the closed forms.
double d_a_bar_d_kappa(const ModelParams& p);

// Bundle passed to every solver.
struct Model {
  ModelParams params;
  CostFunction cost;
  Coefficients coeffs;

  // Running cost of the reduced problem, a_bar*gamma + c(h).
  double running_cost(double gamma, double h) const { return coeffs.a_bar * gamma + cost.value(h); }
};

Model make_model(const ModelParams& p, const CostFunction& cost,
                 std::optional<double> gamma_max = std::nullopt);

}  // namespace infoacq
