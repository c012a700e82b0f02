#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "infoacq/model.hpp"

namespace infoacq {

struct EquilibriumPoint {
  double gamma_eq = 0;
  double p_eq = 0;
  double h_eq = 0;
  double v_eq = 0;
  double residual = 0;  // max |Phi|
  double alpha = 1.0;
  int newton_iterations = 0;
  bool used_bisection = false;
};

// Phi(gamma, p): stationarity of the variance and of the adjoint.
std::array<double, 2> phi(double gamma, double p, const Model& model, double alpha = 1.0);

// Analytic Jacobian of phi. Throws NonSmoothPoint next to the kink of h_hat.
Eigen::Matrix2d jacobian_phi(double gamma, double p, const Model& model, double alpha = 1.0);

EquilibriumPoint solve_equilibrium(const Model& model, double alpha = 1.0);

// Closed-form v'(gamma_eq), inactive or active branch according to gamma_D.
// grid_spacing is the resolution gamma_D was computed at (CaseMismatch within 2 cells).
double equilibrium_slope(const EquilibriumPoint& eq, const Model& model, double gamma_D, double grid_spacing);

enum class SensitivityParameter { Sigma1, Sigma2Sq, Kappa, Alpha };
std::string_view to_string(SensitivityParameter p);
std::optional<SensitivityParameter> parse_sensitivity_parameter(std::string_view name);

// +1, -1, or 0 when the sign is not asserted.
struct ExpectedSigns {
  int gamma, p, h, v;
};
ExpectedSigns expected_signs(SensitivityParameter param);

struct SensitivityReport {
  SensitivityParameter parameter{};
  double d_gamma_eq = 0, d_p_eq = 0, d_h_eq = 0, d_v_eq = 0;
  double jacobian_det = 0;
  bool one_sided = false;  // equilibrium sits on the kink of h_hat
  ExpectedSigns expected{};
  std::array<bool, 4> sign_ok{};  // gamma, p, h, v; true when unasserted
  bool all_signs_ok() const { return sign_ok[0] && sign_ok[1] && sign_ok[2] && sign_ok[3]; }
};

// Implicit-function-theorem derivatives of (gamma_eq, p_eq, h_eq, v_eq).
// Throws SignMismatch when enforce_signs and any asserted sign fails.
SensitivityReport sensitivity(const EquilibriumPoint& eq, SensitivityParameter parameter, const Model& model,
                              double alpha = 1.0, bool enforce_signs = true);

struct FiniteDifferenceSensitivity {
  double d_gamma_eq = 0, d_p_eq = 0, d_h_eq = 0, d_v_eq = 0;
};
// Central differences of re-solved equilibria at theta (1 +- rel_step).
FiniteDifferenceSensitivity sensitivity_fd(SensitivityParameter parameter, const Model& model, double alpha = 1.0,
                                           double rel_step = 1e-5);

}  // namespace infoacq
