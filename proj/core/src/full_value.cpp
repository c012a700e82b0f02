#include "infoacq/full_value.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "infoacq/errors.hpp"
#include "infoacq/format.hpp"
#include "infoacq/riccati.hpp"

namespace infoacq {

namespace {

void check_gamma(const Model& m, double gamma) {
  const double gm = m.coeffs.gamma_max;
  if (!(gamma >= 0.0 && gamma <= gm * (1.0 + 1e-12))) {
    std::ostringstream os;
    os << "gamma = " << gamma << " outside [0, " << gm << "]";
    fail(ErrorCode::GammaOutOfRange, os.str());
  }
}

}  // namespace

FullValueModel::FullValueModel(ValueTable table) : table_(std::move(table)) {
  const auto& p = table_.model.params;
  const auto& c = table_.model.coeffs;
  constant_term_ = (c.C1 + c.a2 * p.sigma2 * p.sigma2) / p.delta;
}

double FullValueModel::quadratic_part(double x, double m) const {
  const auto& c = coeffs();
  return c.a1 * x * x + c.a2 * m * m + c.a3 * x * m + c.b1 * x + c.b2 * m;
}

double FullValueModel::v_no(double gamma) const { return no_acquisition_value(gamma, model()).value; }

double assemble_W(const FullValueModel& fv, double x, double m, double gamma) {
  check_gamma(fv.model(), gamma);
  return fv.quadratic_part(x, m) + fv.coeffs().a2 * gamma + fv.constant_term() + fv.table().value_at(gamma);
}

double feedback_u(const Model& model, double x, double m) {
  const auto& c = model.coeffs;
  return -(2.0 * c.a1 * x + c.a3 * m + c.b1) / model.params.rho;
}

double c_full(const Model& model) {
  const auto& p = model.params;
  const auto& c = model.coeffs;
  return (p.sigma1 * p.sigma1 * c.a1 + p.sigma2 * p.sigma2 * c.a2 + c.b2 * p.lambda * p.mu_bar -
          c.b1 * c.b1 / (2.0 * p.rho) + model.cost.value(0.0)) /
         p.delta;
}

double value_full_observation(const Model& model, double x, double mu) {
  const auto& c = model.coeffs;
  return c.a1 * x * x + c.a2 * mu * mu + c.a3 * x * mu + c.b1 * x + c.b2 * mu + c_full(model);
}

double value_no_acquisition(const FullValueModel& fv, double x, double m, double gamma) {
  check_gamma(fv.model(), gamma);
  return fv.quadratic_part(x, m) + fv.coeffs().a2 * gamma + fv.constant_term() + fv.v_no(gamma);
}

double value_of_information(const FullValueModel& fv, double gamma) {
  check_gamma(fv.model(), gamma);
  return fv.v_no(gamma) - fv.table().value_at(gamma);
}

double full_hjb_residual(const FullValueModel& fv, double x, double m, double gamma) {
  check_gamma(fv.model(), gamma);
  const Model& md = fv.model();
  const auto& p = md.params;
  const auto& c = md.coeffs;
  const double s1 = p.sigma1, sb = p.sigma1_bar_sq();
  const double W = assemble_W(fv, x, m, gamma);
  const double Wx = 2.0 * c.a1 * x + c.a3 * m + c.b1;
  const double Wm = 2.0 * c.a2 * m + c.a3 * x + c.b2;
  const double Wxx = 2.0 * c.a1, Wmm = 2.0 * c.a2, Wxm = c.a3;
  const double vp = fv.table().slope_at(gamma);
  const double Wg = c.a2 + vp;

  // Generator of (X, m, gamma) under the filter: dX = (m + u)dt + sigma1 dI1,
  // dm = lambda(mu_bar - m)dt + gamma/sigma1 dI1 + sqrt(h) gamma dI2.
  const double u = -Wx / p.rho;
  double best = std::numeric_limits<double>::infinity();
  const double x_h = std::clamp(gamma * gamma * std::max(vp, 0.0), 0.0, md.cost.derivative(c.h_max));
  const double h = h_hat(md.cost, x_h, c.h_max);
  for (double hh : {h, 0.0}) {
    const double gen = (m + u) * Wx + p.lambda * (p.mu_bar - m) * Wm + variance_drift(gamma, hh, p) * Wg +
                       0.5 * s1 * s1 * Wxx + gamma * Wxm + 0.5 * (sb + hh) * gamma * gamma * Wmm;
    const double running = 0.5 * (p.kappa * x * x + p.rho * u * u) + md.cost.value(hh);
    best = std::min(best, gen + running);
  }
  return std::abs(-p.delta * W + best);
}

void write_surface_csv(const FullValueModel& fv, std::span<const double> xs, std::span<const double> ms,
                       double gamma, std::ostream& os) {
  const double v = fv.table().value_at(gamma);
  const double vno = fv.v_no(gamma);
  const double shift = fv.coeffs().a2 * gamma + fv.constant_term();
  os << "x,m,v_full,v,v_no\n";
  for (double x : xs)
    for (double m : ms) {
      const double q = fv.quadratic_part(x, m);
      os << fmt17(x) << ',' << fmt17(m) << ',' << fmt17(value_full_observation(fv.model(), x, m)) << ','
         << fmt17(q + shift + v) << ',' << fmt17(q + shift + vno) << '\n';
    }
}

}  // namespace infoacq
