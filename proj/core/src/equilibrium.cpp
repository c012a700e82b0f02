#include "infoacq/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "infoacq/errors.hpp"
#include "infoacq/riccati.hpp"

namespace infoacq {

namespace {

// Rate response psi = h_hat(gamma^2 p / alpha) and its derivative in x = gamma^2 p / alpha.
// Not capped at h_max: the Newton iterates may wander outside [0, L_v].
struct Response {
  double h;
  double dh;  // d h_hat / d x
  bool active;
};

Response response(double gamma, double p, const Model& m, double alpha) {
  const double x = gamma * gamma * std::max(p, 0.0) / alpha;
  const CostFunction& c = m.cost;
  if (x <= c.marginal_at_zero()) return {0.0, 0.0, false};
  const double h = c.inverse_derivative(x);
  return {h, 1.0 / c.second_derivative(h), true};
}

Eigen::Matrix2d jacobian_impl(double gamma, double p, const Model& m, double alpha) {
  const double sb = m.params.sigma1_bar_sq();
  const Response r = response(gamma, p, m, alpha);
  const double f_g = -2.0 * (sb + r.h) * gamma - 2.0 * m.params.lambda;
  const double f_h = -gamma * gamma;
  const double f_gg = -2.0 * (sb + r.h);
  const double f_gh = -2.0 * gamma;
  const double psi_g = r.dh * 2.0 * gamma * p / alpha;
  const double psi_p = r.dh * gamma * gamma / alpha;
  Eigen::Matrix2d J;
  J << f_g + f_h * psi_g, f_h * psi_p, (-f_gg - f_gh * psi_g) * p, m.params.delta - f_g - f_gh * psi_p * p;
  return J;
}

double norm_inf(const std::array<double, 2>& r) { return std::max(std::abs(r[0]), std::abs(r[1])); }

double phi_tolerance(const Model& m) { return 1e-12 * std::max(1.0, m.params.sigma2 * m.params.sigma2); }

bool near_kink(double gamma, double p, const Model& m, double alpha, double tol) {
  const double x = gamma * gamma * p / alpha;
  const double c0 = m.cost.marginal_at_zero();
  return std::abs(x - c0) <= tol * std::max(1.0, c0);
}

// Phi_2 is increasing in p; returns its root for fixed gamma.
double adjoint_for(double gamma, const Model& m, double alpha) {
  double lo = 0.0, hi = m.coeffs.L_v * (1.0 + 1e-6) + 1e-300;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (phi(gamma, mid, m, alpha)[1] < 0.0) lo = mid; else hi = mid;
    if (hi - lo <= 1e-17 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

EquilibriumPoint finish(double gamma, double p, const Model& m, double alpha, int iters, bool bisect) {
  EquilibriumPoint e;
  e.gamma_eq = gamma;
  e.p_eq = p;
  e.h_eq = response(gamma, p, m, alpha).h;
  e.v_eq = (m.coeffs.a_bar * gamma + alpha * m.cost.value(e.h_eq)) / m.params.delta;
  e.residual = norm_inf(phi(gamma, p, m, alpha));
  e.alpha = alpha;
  e.newton_iterations = iters;
  e.used_bisection = bisect;
  return e;
}

// Damped Newton with halving line search on the max-norm of Phi.
bool newton(double& gamma, double& p, const Model& m, double alpha, int& iters) {
  const double tol = phi_tolerance(m);
  auto r = phi(gamma, p, m, alpha);
  for (iters = 0; iters < 100; ++iters) {
    const double nr = norm_inf(r);
    if (nr < tol) return true;
    const Eigen::Matrix2d J = jacobian_impl(gamma, p, m, alpha);
    if (std::abs(J.determinant()) < 1e-300) return false;
    const Eigen::Vector2d step = -J.partialPivLu().solve(Eigen::Vector2d(r[0], r[1]));
    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k <= 40; ++k, t *= 0.5) {
      const double g2 = std::max(gamma + t * step[0], 0.0);
      const double p2 = std::max(p + t * step[1], 0.0);
      const auto r2 = phi(g2, p2, m, alpha);
      if (norm_inf(r2) < nr) {
        gamma = g2;
        p = p2;
        r = r2;
        accepted = true;
        break;
      }
    }
    if (!accepted) return norm_inf(r) < tol;
  }
  return norm_inf(r) < tol;
}

}  // namespace

std::array<double, 2> phi(double gamma, double p, const Model& m, double alpha) {
  const ModelParams& q = m.params;
  const double sb = q.sigma1_bar_sq();
  const double h = response(gamma, p, m, alpha).h;
  return {-(sb + h) * gamma * gamma - 2.0 * q.lambda * gamma + q.sigma2 * q.sigma2,
          (2.0 * (sb + h) * gamma + 2.0 * q.lambda + q.delta) * p - m.coeffs.a_bar};
}

Eigen::Matrix2d jacobian_phi(double gamma, double p, const Model& m, double alpha) {
  if (near_kink(gamma, p, m, alpha, 1e-12)) {
    std::ostringstream os;
    os << "gamma^2 p / alpha = " << gamma * gamma * p / alpha << " sits on the kink c'(0)";
    fail(ErrorCode::NonSmoothPoint, os.str());
  }
  return jacobian_impl(gamma, p, m, alpha);
}

EquilibriumPoint solve_equilibrium(const Model& m, double alpha) {
  if (!(alpha > 0.0)) fail(ErrorCode::InvalidParams, "alpha must be > 0");
  const ModelParams& q = m.params;
  const auto& c = m.coeffs;
  const double g_inf = c.gamma_inf0;
  if (q.sigma2 == 0.0) {
    // gamma = 0 is the only stationary variance; Phi_2 is then linear in p.
    return finish(0.0, c.a_bar / (2.0 * q.lambda + q.delta), m, alpha, 0, false);
  }

  double gamma = g_inf;
  double p = c.a_bar / (2.0 * q.sigma1_bar_sq() * g_inf + 2.0 * q.lambda + q.delta);
  int iters = 0;
  if (newton(gamma, p, m, alpha, iters) && gamma >= 0.0 && gamma <= g_inf * (1.0 + 1e-12) && p >= 0.0 &&
      p <= c.L_v * (1.0 + 1e-9)) {
    return finish(gamma, p, m, alpha, iters, false);
  }

  // Nested bisection: gamma -> Phi_1(gamma, p(gamma)) is decreasing on [0, gamma_inf0].
  double lo = 0.0, hi = g_inf;
  for (int it = 0; it < 200 && hi - lo > 1e-16 * g_inf; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (phi(mid, adjoint_for(mid, m, alpha), m, alpha)[0] > 0.0) lo = mid; else hi = mid;
  }
  gamma = 0.5 * (lo + hi);
  p = adjoint_for(gamma, m, alpha);
  int polish = 0;
  newton(gamma, p, m, alpha, polish);
  EquilibriumPoint e = finish(gamma, p, m, alpha, iters + polish, true);
  if (!(e.residual < phi_tolerance(m))) {
    std::ostringstream os;
    os << "equilibrium solve stalled at gamma = " << e.gamma_eq << ", p = " << e.p_eq
       << ", |Phi| = " << e.residual;
    fail(ErrorCode::NoConvergence, os.str());
  }
  return e;
}

double equilibrium_slope(const EquilibriumPoint& eq, const Model& m, double gamma_D, double grid_spacing) {
  const ModelParams& q = m.params;
  const double g = eq.gamma_eq;
  const double sb = q.sigma1_bar_sq();
  const double inactive = m.coeffs.a_bar / (2.0 * sb * g + 2.0 * q.lambda + q.delta);
  if (g == 0.0) return inactive;
  const double h_active = -(2.0 * q.lambda * g - q.sigma2 * q.sigma2) / (g * g) - sb;
  const double active = eq.alpha * m.cost.derivative(std::max(h_active, 0.0)) / (g * g);
  const double c0 = m.cost.marginal_at_zero();
  if (c0 <= 0.0) return eq.h_eq > 0.0 ? active : inactive;
  if (std::abs(g - gamma_D) < 2.0 * grid_spacing) {
    std::ostringstream os;
    os << "gamma_eq = " << g << " is within two cells of gamma_D = " << gamma_D << " (inactive slope " << inactive
       << ", active slope " << active << ")";
    fail(ErrorCode::CaseMismatch, os.str());
  }
  return g > gamma_D ? active : inactive;
}

std::string_view to_string(SensitivityParameter p) {
  switch (p) {
    case SensitivityParameter::Sigma1: return "sigma1";
    case SensitivityParameter::Sigma2Sq: return "sigma2_sq";
    case SensitivityParameter::Kappa: return "kappa";
    case SensitivityParameter::Alpha: return "alpha";
  }
  return "unknown";
}

std::optional<SensitivityParameter> parse_sensitivity_parameter(std::string_view name) {
  for (auto p : {SensitivityParameter::Sigma1, SensitivityParameter::Sigma2Sq, SensitivityParameter::Kappa,
                 SensitivityParameter::Alpha})
    if (to_string(p) == name) return p;
  return std::nullopt;
}

ExpectedSigns expected_signs(SensitivityParameter param) {
  switch (param) {
    case SensitivityParameter::Sigma1: return {+1, 0, +1, +1};
    case SensitivityParameter::Sigma2Sq: return {+1, -1, +1, +1};
    case SensitivityParameter::Kappa: return {-1, 0, +1, 0};
    case SensitivityParameter::Alpha: return {+1, 0, -1, +1};
  }
  return {0, 0, 0, 0};
}

SensitivityReport sensitivity(const EquilibriumPoint& eq, SensitivityParameter parameter, const Model& m,
                              double alpha, bool enforce_signs) {
  const ModelParams& q = m.params;
  const double g = eq.gamma_eq, p = eq.p_eq;
  SensitivityReport rep;
  rep.parameter = parameter;
  rep.one_sided = near_kink(g, p, m, alpha, 1e-10);
  const Eigen::Matrix2d J = jacobian_impl(g, p, m, alpha);
  rep.jacobian_det = J.determinant();
  if (!(std::abs(rep.jacobian_det) > 1e-14)) fail(ErrorCode::SingularJacobian, "Jacobian of Phi is singular");

  const Response r = response(g, p, m, alpha);
  const double x = g * g * p / alpha;
  const double s1 = q.sigma1;
  double d_psi_d_alpha = 0.0;
  Eigen::Vector2d D;
  switch (parameter) {
    case SensitivityParameter::Sigma2Sq: D << 1.0, 0.0; break;
    case SensitivityParameter::Sigma1:
      D << 2.0 * g * g / (s1 * s1 * s1), -4.0 * g * p / (s1 * s1 * s1);
      break;
    case SensitivityParameter::Kappa: D << 0.0, -d_a_bar_d_kappa(q); break;
    case SensitivityParameter::Alpha:
      d_psi_d_alpha = -r.dh * x / alpha;
      D << -g * g * d_psi_d_alpha, 2.0 * g * p * d_psi_d_alpha;
      break;
  }
  const Eigen::Vector2d dz = -J.partialPivLu().solve(D);
  rep.d_gamma_eq = dz[0];
  rep.d_p_eq = dz[1];
  rep.d_h_eq = r.dh * (2.0 * g * p * dz[0] + g * g * dz[1]) / alpha + d_psi_d_alpha;

  double dv = m.coeffs.a_bar * rep.d_gamma_eq + alpha * m.cost.derivative(r.h) * rep.d_h_eq;
  if (parameter == SensitivityParameter::Kappa) dv += d_a_bar_d_kappa(q) * g;
  if (parameter == SensitivityParameter::Alpha) dv += m.cost.value(r.h);
  rep.d_v_eq = dv / q.delta;

  rep.expected = expected_signs(parameter);
  auto ok = [](int expected, double value) {
    if (expected == 0) return true;
    return expected > 0 ? value > 0.0 : value < 0.0;
  };
  rep.sign_ok = {ok(rep.expected.gamma, rep.d_gamma_eq), ok(rep.expected.p, rep.d_p_eq),
                 ok(rep.expected.h, rep.d_h_eq), ok(rep.expected.v, rep.d_v_eq)};
  if (enforce_signs && !rep.all_signs_ok()) {
    std::ostringstream os;
    os << "derivative signs w.r.t. " << to_string(parameter) << ": d_gamma=" << rep.d_gamma_eq
       << " d_p=" << rep.d_p_eq << " d_h=" << rep.d_h_eq << " d_v=" << rep.d_v_eq;
    fail(ErrorCode::SignMismatch, os.str());
  }
  return rep;
}

FiniteDifferenceSensitivity sensitivity_fd(SensitivityParameter parameter, const Model& m, double alpha,
                                           double rel_step) {
  auto solve_at = [&](double scale) {
    ModelParams q = m.params;
    double a = alpha;
    switch (parameter) {
      case SensitivityParameter::Sigma1: q.sigma1 *= scale; break;
      case SensitivityParameter::Sigma2Sq: q.sigma2 *= std::sqrt(scale); break;
      case SensitivityParameter::Kappa: q.kappa *= scale; break;
      case SensitivityParameter::Alpha: a *= scale; break;
    }
    const Model mm = make_model(q, m.cost, m.coeffs.gamma_max);
    return solve_equilibrium(mm, a);
  };
  double theta = 0.0;
  switch (parameter) {
    case SensitivityParameter::Sigma1: theta = m.params.sigma1; break;
    case SensitivityParameter::Sigma2Sq: theta = m.params.sigma2 * m.params.sigma2; break;
    case SensitivityParameter::Kappa: theta = m.params.kappa; break;
    case SensitivityParameter::Alpha: theta = alpha; break;
  }
  const EquilibriumPoint up = solve_at(1.0 + rel_step);
  const EquilibriumPoint dn = solve_at(1.0 - rel_step);
  const double denom = 2.0 * rel_step * theta;
  return {(up.gamma_eq - dn.gamma_eq) / denom, (up.p_eq - dn.p_eq) / denom, (up.h_eq - dn.h_eq) / denom,
          (up.v_eq - dn.v_eq) / denom};
}

}  // namespace infoacq
