#include "infoacq/hjb.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "infoacq/errors.hpp"
#include "infoacq/format.hpp"
#include "infoacq/riccati.hpp"

namespace infoacq {

// ---------------------------------------------------------------------------
// Grid and interpolation

Grid Grid::uniform(double lo, double hi, std::size_t n) {
  if (n < 2 || !(hi > lo)) fail(ErrorCode::InvalidParams, "grid needs n >= 2 and hi > lo");
  Grid g;
  g.lo = lo;
  g.hi = hi;
  g.spacing = (hi - lo) / static_cast<double>(n - 1);
  g.nodes.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.nodes[i] = lo + static_cast<double>(i) * g.spacing;
  g.nodes.back() = hi;
  return g;
}

namespace {

struct Stencil {
  std::size_t start = 0;
  int count = 0;
  std::array<double, 4> w{};

  double apply(const std::vector<double>& v) const {
    double s = 0.0;
    for (int k = 0; k < count; ++k) s += w[static_cast<std::size_t>(k)] * v[start + static_cast<std::size_t>(k)];
    return s;
  }
};

Stencil linear_stencil(const Grid& g, double x) {
  const std::size_t n = g.size();
  const double u = (x - g.lo) / g.spacing;
  auto j = static_cast<std::size_t>(std::clamp(std::floor(u), 0.0, static_cast<double>(n - 2)));
  const double t = std::clamp(u - static_cast<double>(j), 0.0, 1.0);
  Stencil s;
  s.start = j;
  s.count = 2;
  s.w = {1.0 - t, t, 0.0, 0.0};
  return s;
}

// Four-point Lagrange interpolation, stencil shifted inside the grid at the ends.
Stencil cubic_stencil(const Grid& g, double x) {
  const std::size_t n = g.size();
  if (n < 4) return linear_stencil(g, x);
  const double u = (x - g.lo) / g.spacing;
  const auto j = static_cast<std::ptrdiff_t>(std::clamp(std::floor(u), 0.0, static_cast<double>(n - 2)));
  const auto s0 = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(j - 1, 0, static_cast<std::ptrdiff_t>(n) - 4));
  const double r = u - static_cast<double>(s0);
  Stencil s;
  s.start = s0;
  s.count = 4;
  s.w = {-(r - 1.0) * (r - 2.0) * (r - 3.0) / 6.0, r * (r - 2.0) * (r - 3.0) / 2.0,
         -r * (r - 1.0) * (r - 3.0) / 2.0, r * (r - 1.0) * (r - 2.0) / 6.0};
  return s;
}

double interp_linear(const Grid& g, const std::vector<double>& v, double x) {
  return linear_stencil(g, x).apply(v);
}

void check_gamma(const Grid& g, double gamma) {
  const double slack = 1e-12 * std::max(1.0, g.hi);
  if (!(gamma >= g.lo - slack && gamma <= g.hi + slack)) {
    std::ostringstream os;
    os << "gamma = " << gamma << " outside table range [" << g.lo << ", " << g.hi << "]";
    fail(ErrorCode::GammaOutOfRange, os.str());
  }
}

// Pool-adjacent-violators projection onto nonincreasing sequences.
std::vector<double> isotonic_nonincreasing(const std::vector<double>& y) {
  struct Block {
    double sum;
    std::size_t count;
  };
  std::vector<Block> blocks;
  blocks.reserve(y.size());
  for (double v : y) {
    blocks.push_back({v, 1});
    while (blocks.size() > 1) {
      const Block& b = blocks.back();
      const Block& a = blocks[blocks.size() - 2];
      if (a.sum / static_cast<double>(a.count) >= b.sum / static_cast<double>(b.count)) break;
      Block merged{a.sum + b.sum, a.count + b.count};
      blocks.pop_back();
      blocks.back() = merged;
    }
  }
  std::vector<double> out;
  out.reserve(y.size());
  for (const Block& b : blocks) out.insert(out.end(), b.count, b.sum / static_cast<double>(b.count));
  return out;
}

std::vector<double> raw_slopes(const Grid& g, std::span<const double> v) {
  const std::size_t n = g.size();
  const double d = g.spacing;
  std::vector<double> s(n);
  if (n == 2) {
    s[0] = s[1] = (v[1] - v[0]) / d;
    return s;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) s[i] = (v[i + 1] - v[i - 1]) / (2.0 * d);
  s[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * d);
  s[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * d);
  return s;
}

std::vector<double> monotone_marginal(const Grid& g, const std::vector<double>& slopes) {
  std::vector<double> y(g.size());
  double running = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double gi = g.nodes[i];
    running = std::max(running, gi * gi * std::max(slopes[i], 0.0));
    y[i] = running;
  }
  return y;
}

double cap_marginal(const Model& m, double x) {
  return std::clamp(x, 0.0, m.cost.derivative(m.coeffs.h_max));
}

}  // namespace

double ValueTable::value_at(double gamma) const {
  check_gamma(grid, gamma);
  return cubic_stencil(grid, std::clamp(gamma, grid.lo, grid.hi)).apply(v);
}

double ValueTable::slope_at(double gamma) const {
  check_gamma(grid, gamma);
  return interp_linear(grid, v_slope, std::clamp(gamma, grid.lo, grid.hi));
}

double ValueTable::marginal_at(double gamma) const {
  check_gamma(grid, gamma);
  return interp_linear(grid, marginal, std::clamp(gamma, grid.lo, grid.hi));
}

void ValueTable::write_csv(std::ostream& os) const {
  os << "gamma,v,v_prime,h_star\n";
  for (std::size_t i = 0; i < grid.size(); ++i)
    os << fmt17(grid.nodes[i]) << ',' << fmt17(v[i]) << ',' << fmt17(v_slope[i]) << ',' << fmt17(h_star[i]) << '\n';
}

// ---------------------------------------------------------------------------
// Hamiltonian

HamiltonianValue hamiltonian(double gamma, double p, const Model& model) {
  const auto& c = model.coeffs;
  const double upper = gamma > 0.0 ? c.M0 / (gamma * gamma) : std::numeric_limits<double>::infinity();
  if (p < -1e-9 || p > upper + 1e-9) {
    std::ostringstream os;
    os << "slope " << p << " at gamma = " << gamma << " outside [0, " << upper << "]";
    fail(ErrorCode::SlopeOutOfRange, os.str());
  }
  const double x = cap_marginal(model, gamma * gamma * std::max(p, 0.0));
  const double h = h_hat(model.cost, x, c.h_max);
  return {variance_drift(gamma, h, model.params) * p + model.running_cost(gamma, h), h};
}

double max_stable_dt(const Model& model) {
  const auto& c = model.coeffs;
  return 0.5 / (2.0 * (model.params.sigma1_bar_sq() + c.h_max) * c.gamma_max + 2.0 * model.params.lambda);
}

// ---------------------------------------------------------------------------
// Slopes, threshold, feedback

std::vector<double> slope_table(const Grid& grid, std::span<const double> v, double tol) {
  if (v.size() != grid.size() || grid.size() < 3) fail(ErrorCode::InvalidParams, "slope_table needs >= 3 nodes");
  const std::vector<double> raw = raw_slopes(grid, v);
  std::vector<double> proj = isotonic_nonincreasing(raw);
  double worst = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) worst = std::max(worst, std::abs(proj[i] - raw[i]));
  if (worst > 100.0 * tol) {
    std::ostringstream os;
    os << "monotone projection moved a slope by " << worst << " (limit " << 100.0 * tol << ")";
    fail(ErrorCode::ConcavityViolation, os.str());
  }
  return proj;
}

std::vector<double> slope_table(const ValueTable& table, double tol) { return slope_table(table.grid, table.v, tol); }

double feedback_threshold(const ValueTable& table) {
  const double c0 = table.model.cost.marginal_at_zero();
  if (c0 <= 0.0) return 0.0;
  const auto& y = table.marginal;
  const auto& g = table.grid;
  std::size_t i = 0;
  while (i < y.size() && y[i] < c0) ++i;
  if (i == y.size()) return g.hi;
  if (i == 0) return g.lo;
  // Crossing of the piecewise-linear interpolant inside [nodes[i-1], nodes[i]].
  double lo = g.nodes[i - 1], hi = g.nodes[i];
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (interp_linear(g, y, mid) >= c0) hi = mid; else lo = mid;
  }
  return hi;
}

double feedback_map(const ValueTable& table, double gamma) {
  check_gamma(table.grid, gamma);
  if (gamma <= table.gamma_D) return 0.0;
  const Model& m = table.model;
  return h_hat(m.cost, cap_marginal(m, table.marginal_at(gamma)), m.coeffs.h_max);
}

double hjb_residual(const ValueTable& table) {
  const auto& g = table.grid;
  const auto& v = table.v;
  const double delta = table.model.params.delta;
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < g.size(); ++i) {
    const double p = (v[i + 1] - v[i - 1]) / (2.0 * g.spacing);
    const double r = std::abs(-delta * v[i] + hamiltonian(g.nodes[i], p, table.model).value);
    worst = std::max(worst, r);
  }
  return worst;
}

namespace {

// Slopes, marginal, threshold, feedback and residual for a converged table.
void finalize_table(ValueTable& t, double tol) {
  t.v_slope = slope_table(t.grid, t.v, tol);
  t.marginal = monotone_marginal(t.grid, t.v_slope);
  t.gamma_D = feedback_threshold(t);
  t.h_star.resize(t.grid.size());
  for (std::size_t i = 0; i < t.grid.size(); ++i) t.h_star[i] = feedback_map(t, t.grid.nodes[i]);
  t.residual = hjb_residual(t);
}

// ---------------------------------------------------------------------------
// Semi-Lagrangian Bellman operator

class BellmanOperator {
 public:
  BellmanOperator(const Grid& g, const Model& m, double dt, BellmanScheme scheme)
      : g_(g), m_(m), dt_(dt), scheme_(scheme), beta_(std::exp(-m.params.delta * dt)),
        beta_half_(std::exp(-0.5 * m.params.delta * dt)) {}

  struct Transition {
    double running;
    Stencil stencil;
  };

  double beta() const { return beta_; }

  Transition transition(double gamma, double h) const {
    const ModelParams& p = m_.params;
    double foot, running;
    if (scheme_ == BellmanScheme::FirstOrder) {
      foot = gamma + dt_ * variance_drift(gamma, h, p);
      running = dt_ * m_.running_cost(gamma, h);
    } else {
      foot = solve_constant_rate(gamma, h, dt_, p);
      const double mid = solve_constant_rate(gamma, h, 0.5 * dt_, p);
      running = dt_ / 6.0 *
                (m_.running_cost(gamma, h) + 4.0 * beta_half_ * m_.running_cost(mid, h) +
                 beta_ * m_.running_cost(foot, h));
    }
    const double slack = 1e-12 * std::max(1.0, g_.hi);
    if (!(foot >= g_.lo - slack && foot <= g_.hi + slack)) {
      std::ostringstream os;
      os << "foot point " << foot << " from gamma = " << gamma << ", h = " << h << " leaves the grid";
      fail(ErrorCode::FootPointEscape, os.str());
    }
    foot = std::clamp(foot, g_.lo, g_.hi);
    return {running, scheme_ == BellmanScheme::FirstOrder ? linear_stencil(g_, foot) : cubic_stencil(g_, foot)};
  }

  double q(double gamma, double h, const std::vector<double>& v) const {
    const Transition tr = transition(gamma, h);
    return tr.running + beta_ * tr.stencil.apply(v);
  }

  // Closed-form candidate from the slope of the current iterate.
  double candidate(std::size_t i, double h_prev, const std::vector<double>& marginal) const {
    const double gamma = g_.nodes[i];
    double x;
    if (scheme_ == BellmanScheme::FirstOrder) {
      x = marginal[i];
    } else {
      const double mid = std::clamp(gamma + 0.5 * dt_ * variance_drift(gamma, h_prev, m_.params), g_.lo, g_.hi);
      x = interp_linear(g_, marginal, mid);
    }
    return h_hat(m_.cost, cap_marginal(m_, x), m_.coeffs.h_max);
  }

 private:
  const Grid& g_;
  const Model& m_;
  double dt_;
  BellmanScheme scheme_;
  double beta_, beta_half_;
};

// Slopes of an unconverged iterate: centered, clipped to [0, L_v], made nonincreasing.
std::vector<double> iterate_marginal(const Grid& g, const std::vector<double>& v, double L_v) {
  std::vector<double> s = raw_slopes(g, v);
  for (double& x : s) x = std::clamp(x, 0.0, L_v);
  return monotone_marginal(g, isotonic_nonincreasing(s));
}

}  // namespace

ValueTable value_iteration(const Grid& grid, const Model& model, const ValueIterationOptions& opt) {
  if (grid.size() < 201) fail(ErrorCode::InvalidParams, "value iteration needs at least 201 grid nodes");
  if (grid.lo != 0.0 || std::abs(grid.hi - model.coeffs.gamma_max) > 1e-12 * model.coeffs.gamma_max)
    fail(ErrorCode::InvalidParams, "value iteration grid must span [0, gamma_max]");
  const double dt_bound = max_stable_dt(model);
  const double dt = opt.dt > 0.0 ? opt.dt : std::min(1e-3, dt_bound);
  if (dt > dt_bound * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "dt = " << dt << " exceeds the bound " << dt_bound;
    fail(ErrorCode::StepSizeError, os.str());
  }

  const std::size_t n = grid.size();
  const BellmanOperator op(grid, model, dt, opt.scheme);
  const double beta = op.beta();
  const double stop = opt.tol * (1.0 - beta);
  const double c0 = model.cost.value(0.0);
  const bool absorbing_zero = model.params.sigma2 == 0.0;
  const double h_max = model.coeffs.h_max;

  std::vector<double> policy(n, 0.0);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = model.running_cost(grid.nodes[i], 0.0) / model.params.delta;

  auto evaluate = [&](const std::vector<double>& pol) {
    using Sparse = Eigen::SparseMatrix<double>;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(5 * n);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      if (i == 0 && absorbing_zero) {
        trip.emplace_back(row, row, 1.0);
        rhs[row] = c0 / model.params.delta;
        continue;
      }
      const auto tr = op.transition(grid.nodes[i], pol[i]);
      trip.emplace_back(row, row, 1.0);
      for (int k = 0; k < tr.stencil.count; ++k)
        trip.emplace_back(row, static_cast<Eigen::Index>(tr.stencil.start + static_cast<std::size_t>(k)),
                          -beta * tr.stencil.w[static_cast<std::size_t>(k)]);
      rhs[row] = tr.running;
    }
    Sparse A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    A.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<Sparse> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) fail(ErrorCode::NoConvergence, "policy evaluation matrix is singular");
    Eigen::VectorXd x = lu.solve(rhs);
    return std::vector<double>(x.data(), x.data() + n);
  };

  // One Bellman application: returns T v and the chosen rates.
  auto bellman = [&](const std::vector<double>& cur, std::vector<double>& pol) {
    const std::vector<double> marginal = iterate_marginal(grid, cur, model.coeffs.L_v);
    std::vector<double> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (i == 0 && absorbing_zero) {
        next[i] = c0 / model.params.delta;
        pol[i] = 0.0;
        continue;
      }
      const double g = grid.nodes[i];
      const std::array<double, 3> cands{op.candidate(i, pol[i], marginal), 0.0, h_max};
      double best = std::numeric_limits<double>::infinity(), best_h = 0.0;
      for (double h : cands) {
        const double val = op.q(g, h, cur);
        if (val < best) {
          best = val;
          best_h = h;
        }
      }
      next[i] = best;
      pol[i] = best_h;
    }
    return next;
  };

  std::size_t iter = 0;
  bool converged = false;
  if (opt.policy_evaluation) v = evaluate(policy);
  while (iter < opt.max_iter) {
    ++iter;
    std::vector<double> next = bellman(v, policy);
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) change = std::max(change, std::abs(next[i] - v[i]));
    if (change < stop) {
      v = std::move(next);
      converged = true;
      break;
    }
    v = opt.policy_evaluation ? evaluate(policy) : std::move(next);
  }
  if (!converged) {
    std::ostringstream os;
    os << "value iteration did not converge within " << opt.max_iter << " sweeps";
    fail(ErrorCode::NoConvergence, os.str());
  }

  ValueTable t;
  t.grid = grid;
  t.v = std::move(v);
  t.iterations = iter;
  t.model = model;
  finalize_table(t, opt.tol);
  return t;
}

// ---------------------------------------------------------------------------
// Policy cost along a trajectory

namespace {

// Composite Simpson on a uniform grid; a 3/8 panel closes an odd interval count.
double simpson(const std::vector<double>& y, double h) {
  const std::size_t m = y.size() - 1;
  if (m == 0) return 0.0;
  if (m == 1) return 0.5 * h * (y[0] + y[1]);
  std::size_t even_end = (m % 2 == 0) ? m : m - 3;
  double s = 0.0;
  for (std::size_t i = 0; i + 2 <= even_end; i += 2) s += h / 3.0 * (y[i] + 4.0 * y[i + 1] + y[i + 2]);
  if (m % 2 == 1) {
    const std::size_t i = even_end;
    s += 3.0 * h / 8.0 * (y[i] + 3.0 * y[i + 1] + 3.0 * y[i + 2] + y[i + 3]);
  }
  return s;
}

}  // namespace

PolicyCost evaluate_policy_cost(double gamma0, const RateSchedule& policy, const Model& model, double horizon,
                                double dt) {
  const auto t = uniform_time_grid(horizon, dt);
  const VariancePath path = integrate_variance(gamma0, policy, t, model);
  const double delta = model.params.delta;
  std::vector<double> integrand(t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    integrand[i] = std::exp(-delta * t[i]) * model.running_cost(path.values[i], path.rate_used[i]);
  const double step = t.size() > 1 ? t[1] - t[0] : 0.0;
  const double disc = std::exp(-delta * horizon);
  const double continuation = disc * model.running_cost(path.values.back(), path.rate_used.back()) / delta;
  const double bound =
      disc * (model.coeffs.a_bar * model.coeffs.gamma_max + model.cost.value(model.coeffs.h_max)) / delta;
  return {simpson(integrand, step) + continuation, bound};
}

NoAcquisitionValue no_acquisition_value(double gamma0, const Model& model) {
  const ModelParams& p = model.params;
  const auto& c = model.coeffs;
  if (!(gamma0 >= 0.0) || gamma0 > c.gamma_max * (1.0 + 1e-12))
    fail(ErrorCode::GammaOutOfRange, "initial variance outside [0, gamma_max]");
  const double delta = p.delta;
  const double c0 = model.cost.value(0.0);
  // Resolve the fastest time scale of the closed-form path and of the discount.
  const double rate = delta + 2.0 * std::sqrt(p.lambda * p.lambda + p.sigma1_bar_sq() * p.sigma2 * p.sigma2) +
                      2.0 * p.sigma1_bar_sq() * gamma0;
  const double horizon = 50.0 / delta;
  auto n = static_cast<std::size_t>(std::ceil(horizon * rate / 0.01));
  n = std::max<std::size_t>(n + (n % 2), 2000);
  const double h = horizon / static_cast<double>(n);
  double s = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    s += w * std::exp(-delta * t) * solve_constant_rate(gamma0, 0.0, t, p);
  }
  s *= h / 3.0;
  s += std::exp(-delta * horizon) * solve_constant_rate(gamma0, 0.0, horizon, p) / delta;
  const double value = c0 / delta + c.a_bar * s;
  return {value, value + c.a2 * gamma0 + (c.C1 + c.a2 * p.sigma2 * p.sigma2) / delta};
}

double no_acquisition_value_transport(double gamma0, const Model& model) {
  const ModelParams& p = model.params;
  const auto& c = model.coeffs;
  const double delta = p.delta, a = c.a_bar, c0 = model.cost.value(0.0);
  const double sb = p.sigma1_bar_sq();
  const double g_inf = c.gamma_inf0;
  const double f_g = -2.0 * sb * g_inf - 2.0 * p.lambda;
  const double w0 = (a * g_inf + c0) / delta;
  const double w1 = a / (delta - f_g);
  const double w2 = -2.0 * sb * w1 / (delta - 2.0 * f_g);
  const double dist = gamma0 - g_inf;
  const double scale = std::max(g_inf, 1e-3);
  if (std::abs(dist) < 1e-9 * scale) return w0 + w1 * dist + 0.5 * w2 * dist * dist;

  // -delta w + f(gamma,0) w' + a gamma + c0 = 0, started from the stationary point.
  const double dir = dist > 0 ? 1.0 : -1.0;
  const double eps = std::min(1e-7 * scale, 0.5 * std::abs(dist));
  double g = g_inf + dir * eps;
  double w = w0 + w1 * dir * eps + 0.5 * w2 * eps * eps;
  auto rhs = [&](double gg, double ww) { return (delta * ww - a * gg - c0) / variance_drift(gg, 0.0, p); };
  const double cap = std::abs(dist) / 4000.0;
  std::size_t steps = 0;
  while (dir * (gamma0 - g) > 0.0) {
    double step = std::min({cap, 0.25 * std::abs(g - g_inf), std::abs(variance_drift(g, 0.0, p)) / delta,
                            std::abs(gamma0 - g)});
    step = std::max(step, 1e-15 * scale);
    step = std::min(step, std::abs(gamma0 - g));
    const double s = dir * step;
    const double k1 = rhs(g, w);
    const double k2 = rhs(g + 0.5 * s, w + 0.5 * s * k1);
    const double k3 = rhs(g + 0.5 * s, w + 0.5 * s * k2);
    const double k4 = rhs(g + s, w + s * k3);
    w += s / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    g += s;
    if (++steps > 10'000'000) fail(ErrorCode::NoConvergence, "transport integration did not reach gamma0");
  }
  return w;
}

// ---------------------------------------------------------------------------
// Precision-space convexity

std::vector<double> precision_second_differences(const ValueTable& table, std::size_t n) {
  const auto& g = table.grid;
  const double lo = std::max({table.gamma_D, 0.1 * g.hi, g.lo});
  if (n < 3 || !(g.hi > lo)) return {};
  const double q_lo = 1.0 / g.hi, q_hi = 1.0 / lo;
  const double dq = (q_hi - q_lo) / static_cast<double>(n - 1);
  std::vector<double> val(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double q = (k + 1 == n) ? q_hi : q_lo + static_cast<double>(k) * dq;
    val[k] = table.value_at(std::clamp(1.0 / q, g.lo, g.hi));
  }
  std::vector<double> d2(n - 2);
  for (std::size_t k = 1; k + 1 < n; ++k) d2[k - 1] = val[k + 1] - 2.0 * val[k] + val[k - 1];
  return d2;
}

}  // namespace infoacq
