#include "infoacq/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "infoacq/errors.hpp"
#include "infoacq/format.hpp"
#include "infoacq/riccati.hpp"

namespace infoacq {

std::size_t SimConfig::steps() const { return static_cast<std::size_t>(std::llround(horizon / dt)); }

void SimConfig::validate(const Model& model) const {
  auto bad = [](const std::string& field, const std::string& rule) {
    fail(ErrorCode::InvalidParams, "numerics.sim." + field + ": " + rule);
  };
  if (!(dt > 0.0 && dt <= 1e-2)) bad("dt", "must lie in (0, 1e-2]");
  if (!(horizon >= 1.0) || !std::isfinite(horizon)) bad("horizon", "must be >= 1");
  if (n_paths < 1) bad("n_paths", "must be >= 1");
  if (!(gamma0 >= 0.0 && gamma0 <= model.coeffs.gamma_max)) bad("gamma0", "must lie in [0, gamma_max]");
  if (!std::isfinite(x0)) bad("x0", "must be finite");
  if (!std::isfinite(m0)) bad("m0", "must be finite");
  if (!std::isfinite(mu0_value)) bad("mu0_value", "must be finite");
  if (noise_substeps < 1) bad("noise_substeps", "must be >= 1");
}

std::string Policy::label() const {
  switch (kind) {
    case PolicyKind::Optimal: return "optimal";
    case PolicyKind::NoAcquisition: return "no_acquisition";
    case PolicyKind::FullObservation: return "full_observation";
    case PolicyKind::ConstantRate: {
      std::ostringstream os;
      os << "constant_rate(" << rate << ")";
      return os.str();
    }
  }
  return "unknown";
}

double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

namespace {

// Deterministic part of a policy: variance, rate and discount per step.
struct Schedule {
  std::vector<double> t, gamma, h, discount;
};

Schedule make_schedule(const SimConfig& cfg, const Policy& pol, const PolicyArtifacts& art) {
  const Model& m = *art.model;
  cfg.validate(m);
  RateSchedule rs = RateSchedule::constant(0.0);
  switch (pol.kind) {
    case PolicyKind::Optimal: {
      if (art.table == nullptr) fail(ErrorCode::InvalidParams, "the optimal policy needs a solved value table");
      const ValueTable* table = art.table;
      rs = RateSchedule::feedback([table](double g) { return feedback_map(*table, g); });
      break;
    }
    case PolicyKind::NoAcquisition:
    case PolicyKind::FullObservation: break;
    case PolicyKind::ConstantRate: rs = RateSchedule::constant(pol.rate); break;
  }
  Schedule s;
  s.t = uniform_time_grid(cfg.steps() * cfg.dt, cfg.dt);
  const VariancePath path = integrate_variance(cfg.gamma0, rs, s.t, m);
  s.gamma = path.values;
  s.h = path.rate_used;
  s.discount.resize(s.t.size());
  for (std::size_t k = 0; k < s.t.size(); ++k) s.discount[k] = std::exp(-m.params.delta * s.t[k]);
  return s;
}

// Independent Gaussian channels per path: prior draw, B1, B2, B3.
class PathNoise {
 public:
  PathNoise(std::uint64_t seed, std::uint64_t path) {
    for (std::uint32_t c = 0; c < 4; ++c) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32), c};
      engines_[c].seed(seq);
    }
  }

  double prior() { return normals_[0](engines_[0]); }

  void step(double dt, int substeps, double& b1, double& b2, double& b3) {
    const double scale = std::sqrt(dt / substeps);
    b1 = b2 = b3 = 0.0;
    for (int j = 0; j < substeps; ++j) {
      b1 += normals_[1](engines_[1]);
      b2 += normals_[2](engines_[2]);
      b3 += normals_[3](engines_[3]);
    }
    b1 *= scale;
    b2 *= scale;
    b3 *= scale;
  }

 private:
  std::mt19937_64 engines_[4];
  std::normal_distribution<double> normals_[4];
};

struct StepView {
  std::size_t k;
  double t, X, mu, m, gamma, u, h;
  double dI1, dI2, dX, dY;
  double cost;  // accumulated before this step
};

struct PathOutcome {
  double cost = 0;
  double X = 0, mu = 0, m = 0, gamma = 0;
};

template <class Observer>
PathOutcome run_path(const Schedule& s, const SimConfig& cfg, const Policy& pol, const Model& md,
                     std::uint64_t path, Observer&& observe) {
  const ModelParams& p = md.params;
  const double sb1 = 1.0 / p.sigma1;
  const double dt = cfg.dt;
  PathNoise noise(cfg.master_seed, path);
  const double z0 = noise.prior();
  double mu = cfg.mu0_mode == Mu0Mode::Fixed ? cfg.mu0_value : cfg.m0 + std::sqrt(cfg.gamma0) * z0;
  double X = cfg.x0, m = cfg.m0, cost = 0.0;
  const bool full = pol.kind == PolicyKind::FullObservation;
  const std::size_t n = s.t.size() - 1;
  for (std::size_t k = 0; k < n; ++k) {
    const double g = s.gamma[k], h = s.h[k];
    const double u = feedback_u(md, X, full ? mu : m) + pol.control_offset;
    const double running = 0.5 * (p.kappa * X * X + p.rho * u * u) + md.cost.value(h);
    double b1, b2, b3;
    noise.step(dt, cfg.noise_substeps, b1, b2, b3);
    const double sqh = std::sqrt(h);
    const double dX = (mu + u) * dt + p.sigma1 * b1;
    const double dI1 = b1 + sb1 * (mu - m) * dt;
    const double dI2 = sqh * (mu - m) * dt + b3;
    const double dY = sqh * mu * dt + b3;
    observe(StepView{k, s.t[k], X, mu, m, g, u, h, dI1, dI2, dX, dY, cost});
    cost += s.discount[k] * running * dt;
    m += p.lambda * (p.mu_bar - m) * dt + sb1 * g * dI1 + sqh * g * dI2;
    mu += p.lambda * (p.mu_bar - mu) * dt + p.sigma2 * b2;
    X += dX;
    if (!(std::abs(X) <= 1e8)) {
      std::ostringstream os;
      os << "state left [-1e8, 1e8] on path " << path << " at t = " << s.t[k + 1];
      fail(ErrorCode::NumericalBlowup, os.str());
    }
  }
  const double u_end = feedback_u(md, X, full ? mu : m) + pol.control_offset;
  observe(StepView{n, s.t[n], X, mu, m, s.gamma[n], u_end, s.h[n], 0, 0, 0, 0, cost});
  return {cost, X, mu, m, s.gamma[n]};
}

// Static partition of [0, n) over threads; every index is processed exactly once.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
  unsigned t = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  t = static_cast<unsigned>(std::min<std::size_t>(t, std::max<std::size_t>(n, 1)));
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex mu;
  for (unsigned w = 0; w < t; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += t) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// Upper bound of the expected cost-to-go at T, discounted to time 0.
double tail_term(const PathOutcome& o, const Policy& pol, const Model& md, const Schedule& s) {
  const auto& c = md.coeffs;
  const auto& p = md.params;
  const double disc = s.discount.back();
  if (pol.kind == PolicyKind::FullObservation) return disc * value_full_observation(md, o.X, o.mu);
  const double quad = c.a1 * o.X * o.X + c.a2 * o.m * o.m + c.a3 * o.X * o.m + c.b1 * o.X + c.b2 * o.m;
  const double constant = (c.C1 + c.a2 * p.sigma2 * p.sigma2) / p.delta;
  const double v_bound = (c.a_bar * c.gamma_max + md.cost.value(c.h_max)) / p.delta;
  return disc * std::max(quad + c.a2 * o.gamma + constant + v_bound, 0.0);
}

struct NoObserver {
  void operator()(const StepView&) const {}
};

}  // namespace

void PathRecord::write_csv(std::ostream& os) const {
  os << "t,X,mu,m,gamma,u,h\n";
  for (std::size_t k = 0; k < t.size(); ++k)
    os << fmt17(t[k]) << ',' << fmt17(X[k]) << ',' << fmt17(mu[k]) << ',' << fmt17(m[k]) << ','
       << fmt17(gamma[k]) << ',' << fmt17(u[k]) << ',' << fmt17(h[k]) << '\n';
}

PathRecord simulate_path(const SimConfig& config, const Policy& policy, const PolicyArtifacts& art,
                         std::uint64_t path_index) {
  const Schedule s = make_schedule(config, policy, art);
  PathRecord r;
  const std::size_t n = s.t.size();
  for (auto* v : {&r.t, &r.X, &r.mu, &r.m, &r.gamma, &r.u, &r.h, &r.dI1, &r.dI2, &r.dX, &r.dY, &r.running_cost})
    v->reserve(n);
  run_path(s, config, policy, *art.model, path_index, [&](const StepView& sv) {
    r.t.push_back(sv.t);
    r.X.push_back(sv.X);
    r.mu.push_back(sv.mu);
    r.m.push_back(sv.m);
    r.gamma.push_back(sv.gamma);
    r.u.push_back(sv.u);
    r.h.push_back(sv.h);
    r.dI1.push_back(sv.dI1);
    r.dI2.push_back(sv.dI2);
    r.dX.push_back(sv.dX);
    r.dY.push_back(sv.dY);
    r.running_cost.push_back(sv.cost);
  });
  return r;
}

KalmanSequence discrete_kalman_oracle(const std::vector<double>& dX, const std::vector<double>& dY,
                                      const std::vector<double>& u, const std::vector<double>& h,
                                      const SimConfig& cfg, const Model& model) {
  const ModelParams& p = model.params;
  const double dt = cfg.dt;
  const std::size_t n = std::min({dX.size(), dY.size(), u.size(), h.size()});
  KalmanSequence out;
  out.m.resize(n + 1);
  out.gamma.resize(n + 1);
  double m = cfg.m0, P = cfg.gamma0;
  out.m[0] = m;
  out.gamma[0] = P;
  const double a = 1.0 - p.lambda * dt;
  for (std::size_t k = 0; k < n; ++k) {
    // z1 = dX - u dt = mu dt + sigma1 dB1;  z2 = dY = sqrt(h) mu dt + dB3.
    const double H1 = dt, R1 = p.sigma1 * p.sigma1 * dt;
    const double z1 = dX[k] - u[k] * dt;
    double S = H1 * H1 * P + R1;
    double K = P * H1 / S;
    m += K * (z1 - H1 * m);
    P = P * R1 / S;
    const double H2 = std::sqrt(h[k]) * dt, R2 = dt;
    if (H2 > 0.0) {
      S = H2 * H2 * P + R2;
      K = P * H2 / S;
      m += K * (dY[k] - H2 * m);
      P = P * R2 / S;
    }
    m = a * m + p.lambda * p.mu_bar * dt;
    P = a * a * P + p.sigma2 * p.sigma2 * dt;
    out.m[k + 1] = m;
    out.gamma[k + 1] = P;
  }
  return out;
}

FilterDeviation filter_deviation(const SimConfig& config, const Policy& policy, const PolicyArtifacts& art,
                                 std::uint64_t path_index) {
  const PathRecord r = simulate_path(config, policy, art, path_index);
  const std::size_t n = r.t.size() - 1;
  const std::vector<double> dX(r.dX.begin(), r.dX.begin() + static_cast<std::ptrdiff_t>(n));
  const std::vector<double> dY(r.dY.begin(), r.dY.begin() + static_cast<std::ptrdiff_t>(n));
  const std::vector<double> u(r.u.begin(), r.u.begin() + static_cast<std::ptrdiff_t>(n));
  const std::vector<double> h(r.h.begin(), r.h.begin() + static_cast<std::ptrdiff_t>(n));
  const KalmanSequence kf = discrete_kalman_oracle(dX, dY, u, h, config, *art.model);
  FilterDeviation d;
  for (std::size_t k = 0; k <= n; ++k) {
    d.max_mean = std::max(d.max_mean, std::abs(r.m[k] - kf.m[k]));
    d.max_variance = std::max(d.max_variance, std::abs(r.gamma[k] - kf.gamma[k]));
  }
  return d;
}

MCEstimate mc_cost(const SimConfig& config, const Policy& policy, const PolicyArtifacts& art) {
  const Schedule s = make_schedule(config, policy, art);
  const Model& md = *art.model;
  const std::size_t n = config.n_paths;
  std::vector<double> cost(n, 0.0), tail(n, 0.0);
  std::vector<char> failed(n, 0);
  parallel_for(n, config.threads, [&](std::size_t i) {
    try {
      const PathOutcome o = run_path(s, config, policy, md, i, NoObserver{});
      cost[i] = o.cost;
      tail[i] = tail_term(o, policy, md, s);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NumericalBlowup) throw;
      failed[i] = 1;
    }
  });
  MCEstimate est;
  est.policy = policy.label();
  std::vector<double> ok_cost, ok_tail;
  ok_cost.reserve(n);
  ok_tail.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (failed[i]) {
      ++est.n_failed;
      continue;
    }
    ok_cost.push_back(cost[i]);
    ok_tail.push_back(tail[i]);
  }
  if (static_cast<double>(est.n_failed) > 0.01 * static_cast<double>(n)) {
    std::ostringstream os;
    os << est.n_failed << " of " << n << " paths blew up";
    fail(ErrorCode::NumericalBlowup, os.str());
  }
  const std::size_t k = ok_cost.size();
  est.n_paths = k;
  est.mean = pairwise_sum(ok_cost.data(), k) / static_cast<double>(k);
  if (k > 1) {
    std::vector<double> sq(k);
    for (std::size_t i = 0; i < k; ++i) sq[i] = (ok_cost[i] - est.mean) * (ok_cost[i] - est.mean);
    const double var = pairwise_sum(sq.data(), k) / static_cast<double>(k - 1);
    est.std_error = std::sqrt(var / static_cast<double>(k));
  }
  est.truncation_bound = pairwise_sum(ok_tail.data(), k) / static_cast<double>(k);
  est.per_path = std::move(ok_cost);
  return est;
}

double policy_oracle(const SimConfig& cfg, const Policy& pol, const FullValueModel& fv) {
  const Model& md = fv.model();
  const auto& c = md.coeffs;
  const double shift = c.a2 * cfg.gamma0 + fv.constant_term();
  switch (pol.kind) {
    case PolicyKind::Optimal: return assemble_W(fv, cfg.x0, cfg.m0, cfg.gamma0);
    case PolicyKind::NoAcquisition: return value_no_acquisition(fv, cfg.x0, cfg.m0, cfg.gamma0);
    case PolicyKind::FullObservation:
      if (cfg.mu0_mode == Mu0Mode::Fixed) return value_full_observation(md, cfg.x0, cfg.mu0_value);
      // E[V_full(x0, mu0)] with mu0 ~ N(m0, gamma0).
      return value_full_observation(md, cfg.x0, cfg.m0) + c.a2 * cfg.gamma0;
    case PolicyKind::ConstantRate: {
      const double dt = std::min(1e-3, 0.1 / (md.params.sigma1_bar_sq() + c.h_max));
      const PolicyCost pc =
          evaluate_policy_cost(cfg.gamma0, RateSchedule::constant(pol.rate), md, 40.0 / md.params.delta, dt);
      return fv.quadratic_part(cfg.x0, cfg.m0) + shift + pc.value;
    }
  }
  return 0.0;
}

PolicyComparison compare_policies(const SimConfig& config, const ValueTable& table, bool enforce) {
  const PolicyArtifacts art(table);
  PolicyComparison r;
  r.full = mc_cost(config, Policy::full_observation(), art);
  r.optimal = mc_cost(config, Policy::optimal(), art);
  r.no_acquisition = mc_cost(config, Policy::no_acquisition(), art);
  auto pooled = [](const MCEstimate& a, const MCEstimate& b) {
    return 3.0 * std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
  };
  r.full_vs_optimal_gap = r.optimal.mean - r.full.mean;
  r.optimal_vs_no_gap = r.no_acquisition.mean - r.optimal.mean;
  r.full_vs_optimal_tol = pooled(r.full, r.optimal);
  r.optimal_vs_no_tol = pooled(r.optimal, r.no_acquisition);
  r.ordering_holds = r.full_vs_optimal_gap >= -r.full_vs_optimal_tol && r.optimal_vs_no_gap >= -r.optimal_vs_no_tol;
  if (enforce && !r.ordering_holds) {
    std::ostringstream os;
    os << "expected full <= optimal <= no_acquisition, got " << r.full.mean << ", " << r.optimal.mean << ", "
       << r.no_acquisition.mean;
    fail(ErrorCode::OrderingViolation, os.str());
  }
  return r;
}

bool InnovationStatistics::passes() const {
  return std::abs(mean1) < mean_bound && std::abs(mean2) < mean_bound && std::abs(var1 - 1.0) < 0.05 &&
         std::abs(var2 - 1.0) < 0.05;
}

InnovationStatistics innovation_statistics(const SimConfig& config, const Policy& policy,
                                           const PolicyArtifacts& art) {
  const Schedule s = make_schedule(config, policy, art);
  const std::size_t n = config.n_paths;
  const double inv = 1.0 / std::sqrt(config.dt);
  std::vector<double> s1(n), q1(n), s2(n), q2(n);
  parallel_for(n, config.threads, [&](std::size_t i) {
    double a = 0, b = 0, c = 0, d = 0;
    run_path(s, config, policy, *art.model, i, [&](const StepView& sv) {
      if (sv.k + 1 == s.t.size()) return;
      const double z1 = sv.dI1 * inv, z2 = sv.dI2 * inv;
      a += z1;
      b += z1 * z1;
      c += z2;
      d += z2 * z2;
    });
    s1[i] = a;
    q1[i] = b;
    s2[i] = c;
    q2[i] = d;
  });
  InnovationStatistics st;
  st.samples = n * (s.t.size() - 1);
  const double N = static_cast<double>(st.samples);
  st.mean1 = pairwise_sum(s1.data(), n) / N;
  st.mean2 = pairwise_sum(s2.data(), n) / N;
  st.var1 = pairwise_sum(q1.data(), n) / N - st.mean1 * st.mean1;
  st.var2 = pairwise_sum(q2.data(), n) / N - st.mean2 * st.mean2;
  st.mean_bound = 4.0 / std::sqrt(N);
  return st;
}

std::vector<FilterBiasPoint> filter_bias(const SimConfig& config, const Policy& policy, const PolicyArtifacts& art,
                                         const std::vector<double>& times) {
  const Schedule s = make_schedule(config, policy, art);
  const std::size_t n = config.n_paths;
  std::vector<std::size_t> idx;
  for (double t : times) {
    const auto k = static_cast<std::size_t>(std::llround(t / config.dt));
    if (k >= s.t.size()) fail(ErrorCode::InvalidParams, "filter_bias time beyond the horizon");
    idx.push_back(k);
  }
  std::vector<std::vector<double>> err(idx.size(), std::vector<double>(n));
  parallel_for(n, config.threads, [&](std::size_t i) {
    run_path(s, config, policy, *art.model, i, [&](const StepView& sv) {
      for (std::size_t j = 0; j < idx.size(); ++j)
        if (sv.k == idx[j]) err[j][i] = sv.mu - sv.m;
    });
  });
  std::vector<FilterBiasPoint> out;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    FilterBiasPoint b;
    b.t = s.t[idx[j]];
    b.gamma = s.gamma[idx[j]];
    b.mean_error = pairwise_sum(err[j].data(), n) / static_cast<double>(n);
    std::vector<double> sq(n), dev(n);
    for (std::size_t i = 0; i < n; ++i) {
      sq[i] = err[j][i] * err[j][i];
      dev[i] = (err[j][i] - b.mean_error) * (err[j][i] - b.mean_error);
    }
    b.mean_sq_error = pairwise_sum(sq.data(), n) / static_cast<double>(n);
    b.error_se = n > 1 ? std::sqrt(pairwise_sum(dev.data(), n) / static_cast<double>(n - 1) / static_cast<double>(n))
                       : 0.0;
    out.push_back(b);
  }
  return out;
}

}  // namespace infoacq
