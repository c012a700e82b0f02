#include "infoacq/riccati.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "infoacq/errors.hpp"
#include "infoacq/format.hpp"

namespace infoacq {

double variance_drift(double gamma, double h, const ModelParams& p) {
  return -(p.sigma1_bar_sq() + h) * gamma * gamma - 2.0 * p.lambda * gamma + p.sigma2 * p.sigma2;
}

double precision_drift(double precision, double h, const ModelParams& p) {
  return p.sigma1_bar_sq() + h + 2.0 * p.lambda * precision - p.sigma2 * p.sigma2 * precision * precision;
}

double stationary_variance(double h, const ModelParams& p) {
  const double b = p.sigma1_bar_sq() + h;
  const double s2 = p.sigma2 * p.sigma2;
  if (s2 == 0.0) return 0.0;
  return s2 / (p.lambda + std::sqrt(p.lambda * p.lambda + b * s2));
}

double solve_constant_rate(double gamma0, double h, double t, const ModelParams& p) {
  if (t == 0.0) return gamma0;
  // b > 0 always since sigma1 is finite, so the linear-growth case cannot occur.
  const double b = p.sigma1_bar_sq() + h;
  const double s2 = p.sigma2 * p.sigma2;
  const double Delta = std::sqrt(p.lambda * p.lambda + b * s2);
  const double g_plus = stationary_variance(h, p);
  const double g_minus = -(p.lambda + Delta) / b;
  const double x = Delta * t;
  const double e = std::exp(-2.0 * x);
  // phi = (1 - e^{-2 Delta t}) / (2 Delta), tends to t as Delta -> 0.
  double phi;
  if (x < 1e-8) {
    phi = t * (1.0 - x);
  } else {
    phi = -std::expm1(-2.0 * x) / (2.0 * Delta);
  }
  return g_plus + (gamma0 - g_plus) * e / (b * (gamma0 - g_minus) * phi + e);
}

RateSchedule RateSchedule::constant(double h) {
  RateSchedule s;
  s.kind_ = Kind::Constant;
  s.constant_ = h;
  return s;
}

RateSchedule RateSchedule::piecewise_constant(std::vector<double> breakpoints, std::vector<double> values) {
  if (breakpoints.empty() || breakpoints.size() != values.size())
    fail(ErrorCode::InvalidParams, "piecewise schedule needs one value per breakpoint");
  if (!std::is_sorted(breakpoints.begin(), breakpoints.end()))
    fail(ErrorCode::InvalidParams, "piecewise schedule breakpoints must be increasing");
  RateSchedule s;
  s.kind_ = Kind::PiecewiseConstant;
  s.breakpoints_ = std::move(breakpoints);
  s.values_ = std::move(values);
  return s;
}

RateSchedule RateSchedule::open_loop(std::function<double(double)> h_of_t) {
  RateSchedule s;
  s.kind_ = Kind::OpenLoop;
  s.fn_ = std::move(h_of_t);
  return s;
}

RateSchedule RateSchedule::feedback(std::function<double(double)> h_of_gamma) {
  RateSchedule s;
  s.kind_ = Kind::Feedback;
  s.fn_ = std::move(h_of_gamma);
  return s;
}

double RateSchedule::rate(double t, double gamma) const {
  switch (kind_) {
    case Kind::Constant: return constant_;
    case Kind::PiecewiseConstant: {
      auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
      if (it == breakpoints_.begin()) return values_.front();
      return values_[static_cast<std::size_t>(it - breakpoints_.begin()) - 1];
    }
    case Kind::OpenLoop: return fn_(t);
    case Kind::Feedback: return fn_(gamma);
  }
  return 0.0;
}

void VariancePath::write_csv(std::ostream& os) const {
  os << "t,gamma,h\n";
  for (std::size_t i = 0; i < times.size(); ++i)
    os << fmt17(times[i]) << ',' << fmt17(values[i]) << ',' << fmt17(rate_used[i]) << '\n';
}

std::vector<double> uniform_time_grid(double horizon, double dt) {
  if (!(dt > 0.0) || !(horizon >= 0.0)) fail(ErrorCode::InvalidParams, "time grid needs dt > 0, horizon >= 0");
  const auto n = static_cast<std::size_t>(std::llround(horizon / dt));
  std::vector<double> t(n + 1);
  for (std::size_t i = 0; i <= n; ++i) t[i] = static_cast<double>(i) * dt;
  t[n] = horizon;
  return t;
}

namespace {

void check_inputs(double gamma0, std::span<const double> t_grid, const Model& model) {
  const auto& c = model.coeffs;
  if (!(gamma0 >= 0.0) || gamma0 > c.gamma_max * (1.0 + 1e-12))
    fail(ErrorCode::DomainError, "initial variance outside [0, gamma_max]");
  if (t_grid.size() < 1) fail(ErrorCode::InvalidParams, "empty time grid");
  const double max_step = 0.1 / (model.params.sigma1_bar_sq() + c.h_max);
  for (std::size_t i = 1; i < t_grid.size(); ++i) {
    const double dt = t_grid[i] - t_grid[i - 1];
    if (!(dt > 0.0)) fail(ErrorCode::InvalidParams, "time grid must be strictly increasing");
    if (dt > max_step * (1.0 + 1e-12)) {
      std::ostringstream os;
      os << "step " << dt << " exceeds stability bound " << max_step;
      fail(ErrorCode::StepSizeError, os.str());
    }
  }
}

double checked_rate(const RateSchedule& s, double t, double gamma, const Model& model) {
  const double h = s.rate(t, gamma);
  const double hm = model.coeffs.h_max;
  if (!(h >= 0.0) || h > hm * (1.0 + 1e-9) + 1e-12) {
    std::ostringstream os;
    os << "rate " << h << " outside [0, h_max=" << hm << "]";
    fail(ErrorCode::DomainError, os.str());
  }
  return std::min(h, hm);
}

// One RK4 step of (gamma, beta). Returns the rate at the step's left end.
template <bool WithBeta>
double rk4_step(double& g, double& beta, double t, double dt, const RateSchedule& s, const Model& m) {
  const ModelParams& p = m.params;
  const double sb = p.sigma1_bar_sq();
  const bool hold = s.held_per_step();
  const double h_hold = hold ? checked_rate(s, t + 0.5 * dt, g, m) : 0.0;
  auto rate = [&](double tt, double gg) { return hold ? h_hold : checked_rate(s, tt, std::max(gg, 0.0), m); };

  const double h1 = rate(t, g);
  const double k1 = variance_drift(g, h1, p);
  const double g2 = g + 0.5 * dt * k1;
  const double h2 = rate(t + 0.5 * dt, g2);
  const double k2 = variance_drift(g2, h2, p);
  const double g3 = g + 0.5 * dt * k2;
  const double h3 = rate(t + 0.5 * dt, g3);
  const double k3 = variance_drift(g3, h3, p);
  const double g4 = g + dt * k3;
  const double h4 = rate(t + dt, g4);
  const double k4 = variance_drift(g4, h4, p);

  if constexpr (WithBeta) {
    // beta' = -2((sb + h) gamma + lambda) beta, rate evaluated at the same stages.
    auto lin = [&](double gg, double hh) { return -2.0 * ((sb + hh) * gg + p.lambda); };
    const double b1 = lin(g, h1) * beta;
    const double b2 = lin(g2, h2) * (beta + 0.5 * dt * b1);
    const double b3 = lin(g3, h3) * (beta + 0.5 * dt * b2);
    const double b4 = lin(g4, h4) * (beta + dt * b3);
    beta += dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
  }
  g += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  g = std::clamp(g, 0.0, m.coeffs.gamma_max + 1e-12);
  return h1;
}

}  // namespace

VariancePath integrate_variance(double gamma0, const RateSchedule& schedule, std::span<const double> t_grid,
                                const Model& model) {
  check_inputs(gamma0, t_grid, model);
  VariancePath path;
  path.times.assign(t_grid.begin(), t_grid.end());
  path.values.resize(t_grid.size());
  path.rate_used.resize(t_grid.size());
  double g = std::min(gamma0, model.coeffs.gamma_max);
  double beta = 1.0;
  path.values[0] = g;
  for (std::size_t i = 1; i < t_grid.size(); ++i) {
    const double dt = t_grid[i] - t_grid[i - 1];
    path.rate_used[i - 1] = rk4_step<false>(g, beta, t_grid[i - 1], dt, schedule, model);
    path.values[i] = g;
  }
  const std::size_t last = t_grid.size() - 1;
  path.rate_used[last] = checked_rate(schedule, t_grid[last], g, model);
  return path;
}

std::vector<double> initial_state_sensitivity(double gamma0, const RateSchedule& schedule,
                                              std::span<const double> t_grid, const Model& model) {
  check_inputs(gamma0, t_grid, model);
  std::vector<double> out(t_grid.size());
  double g = std::min(gamma0, model.coeffs.gamma_max);
  double beta = 1.0;
  out[0] = beta;
  for (std::size_t i = 1; i < t_grid.size(); ++i) {
    rk4_step<true>(g, beta, t_grid[i - 1], t_grid[i] - t_grid[i - 1], schedule, model);
    out[i] = beta;
  }
  return out;
}

}  // namespace infoacq
