#include "infoacq/model.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "infoacq/errors.hpp"

namespace infoacq {

namespace {

void check(bool ok, const char* field, const char* rule) {
  if (!ok) fail(ErrorCode::InvalidParams, std::string("model.") + field + ": " + rule);
}

}  // namespace

void ModelParams::validate() const {
  check(std::isfinite(lambda) && lambda >= 0.0, "lambda", "must be >= 0");
  check(std::isfinite(mu_bar), "mu_bar", "must be finite");
  check(std::isfinite(sigma1) && sigma1 > 0.0, "sigma1", "must be > 0");
  check(std::isfinite(sigma2) && sigma2 >= 0.0, "sigma2", "must be >= 0");
  check(std::isfinite(delta) && delta > 0.0, "delta", "must be > 0");
  check(std::isfinite(kappa) && kappa > 0.0, "kappa", "must be > 0");
  check(std::isfinite(rho) && rho > 0.0, "rho", "must be > 0");
}

ModelParams make_params(double lambda, double mu_bar, double sigma1, double sigma2, double delta,
                        double kappa, double rho) {
  ModelParams p{lambda, mu_bar, sigma1, sigma2, delta, kappa, rho};
  p.validate();
  return p;
}

double gamma_inf_uncontrolled(const ModelParams& p) {
  p.validate();
  const double s1sq = p.sigma1 * p.sigma1;
  const double num = s1sq * p.sigma2 * p.sigma2;
  if (num == 0.0) return 0.0;
  // -l s1^2 + sqrt(l^2 s1^4 + s1^2 s2^2), rationalised.
  return num / (p.lambda * s1sq + std::sqrt(p.lambda * p.lambda * s1sq * s1sq + num));
}

double default_gamma_max(const ModelParams& p, double factor) {
  const double g = gamma_inf_uncontrolled(p);
  // With sigma2 = 0 the uncontrolled variance collapses to 0; fall back to a unit domain.
  return g > 0.0 ? factor * g : 1.0;
}

Coefficients derive_coefficients(const ModelParams& p, const CostFunction& cost) {
  return derive_coefficients(p, cost, default_gamma_max(p));
}

Coefficients derive_coefficients(const ModelParams& p, const CostFunction& cost, double gamma_max) {
  p.validate();
  cost.validate();
  Coefficients c;
  const double l = p.lambda, mb = p.mu_bar, d = p.delta, k = p.kappa, r = p.rho;

  const double root = std::sqrt(d * d * r * r + 4.0 * k * r);
  c.a1 = k * r / (d * r + root);  // (-d r + root)/4 without cancellation
  c.a3 = 2.0 * c.a1 * r / (d * r + l * r + 2.0 * c.a1);
  c.a2 = c.a3 * (2.0 * r - c.a3) / (2.0 * r * (2.0 * l + d));
  c.b1 = l * mb * c.a3 * r / (d * r + 2.0 * c.a1);
  c.b2 = (2.0 * l * mb * c.a2 * r - c.b1 * c.a3 + c.b1 * r) / (r * (l + d));
  c.a_bar = c.a3 * c.a3 / (2.0 * r);
  c.C1 = p.sigma1 * p.sigma1 * c.a1 + l * mb * c.b2 - c.b1 * c.b1 / (2.0 * r);
  c.gamma_inf0 = gamma_inf_uncontrolled(p);

  if (!std::isfinite(gamma_max) || !(gamma_max > c.gamma_inf0) || !(gamma_max > 0.0)) {
    std::ostringstream os;
    os << "gamma_max = " << gamma_max << " must exceed the uncontrolled equilibrium variance "
       << c.gamma_inf0;
    fail(ErrorCode::InvalidParams, os.str());
  }
  c.gamma_max = gamma_max;
  c.L_v = c.a_bar / d;
  c.M0 = gamma_max * gamma_max * c.L_v;

  if (c.M0 <= cost.marginal_at_zero()) {
    c.h_max = 0.0;  // acquisition never pays off anywhere on [0, gamma_max]
  } else {
    double h = 0.0;
    if (cost.kind() == CostFunction::Kind::Power) {
      const double log_h = std::log(c.M0 / (cost.zeta() * (1.0 + cost.epsilon()))) / cost.epsilon();
      h = log_h > std::log(kHMaxCeiling) ? std::numeric_limits<double>::infinity() : std::exp(log_h);
    } else {
      h = cost.inverse_derivative(c.M0);
    }
    if (!std::isfinite(h) || h > kHMaxCeiling) {
      std::ostringstream os;
      os << "h_max = (c')^{-1}(M0) overflows; clamped to " << kHMaxCeiling;
      c.warnings.push_back(os.str());
      c.h_max_clamped = true;
      h = kHMaxCeiling;
    }
    c.h_max = h;
  }
  return c;
}

std::array<double, 5> coefficient_residuals(const ModelParams& p, const Coefficients& c) {
  const double l = p.lambda, mb = p.mu_bar, d = p.delta, k = p.kappa, r = p.rho;
  return {
      -2.0 * c.a1 * c.a1 / r + k / 2.0 - d * c.a1,
      c.a3 - c.a3 * c.a3 / (2.0 * r) - 2.0 * l * c.a2 - d * c.a2,
      2.0 * c.a1 - 2.0 * c.a1 * c.a3 / r - l * c.a3 - d * c.a3,
      l * mb * c.a3 - 2.0 * c.a1 * c.b1 / r - d * c.b1,
      c.b1 - c.a3 * c.b1 / r + 2.0 * l * mb * c.a2 - l * c.b2 - d * c.b2,
  };
}

double a_bar_identity_residual(const ModelParams& p, const Coefficients& c) {
  const double alt = c.a3 - c.a2 * (2.0 * p.lambda + p.delta);
  return std::abs(c.a3 * c.a3 / (2.0 * p.rho) - alt) / c.a_bar;
}

double d_a_bar_d_kappa(const ModelParams& p) {
  const double l = p.lambda, d = p.delta, k = p.kappa, r = p.rho;
  const double root = std::sqrt(d * d * r * r + 4.0 * k * r);
  const double a1 = k * r / (d * r + root);
  const double D = d * r + l * r + 2.0 * a1;
  const double a3 = 2.0 * a1 * r / D;
  const double da1 = r / (2.0 * root);
  const double da3 = 2.0 * r * r * (d + l) / (D * D) * da1;
  return a3 / r * da3;
}

Model make_model(const ModelParams& p, const CostFunction& cost, std::optional<double> gamma_max) {
  Coefficients c = gamma_max ? derive_coefficients(p, cost, *gamma_max) : derive_coefficients(p, cost);
  return Model{p, cost, std::move(c)};
}

}  // namespace infoacq
