#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"

using namespace infoacq;

namespace {

Model canon_model() { return make_model(ModelParams{}, CostFunction::quadratic(1e-3), 1.0); }

}  // namespace

TEST(Drift, Examples) {
  const ModelParams p;
  for (double h : {0.0, 1.0, 50.0}) EXPECT_EQ(variance_drift(0.0, h, p), p.sigma2 * p.sigma2);
  EXPECT_NEAR(variance_drift(gamma_inf_uncontrolled(p), 0.0, p), 0.0, 1e-15);
  EXPECT_EQ(variance_drift(1.0, 0.0, p), -2.0);
  EXPECT_EQ(precision_drift(1.0, 0.0, p), 2.0);
  for (double h : {0.5, 2.0}) EXPECT_LT(variance_drift(0.4, h + 0.1, p), variance_drift(0.4, h, p));

  ModelParams q = make_params(0.0, 0.0, 2.0, 0.0, 1.0, 1.0, 1.0);
  EXPECT_EQ(precision_drift(0.3, 1.5, q), precision_drift(7.0, 1.5, q));
}

TEST(Drift, PrecisionConsistency) {
  const ModelParams p;
  EXPECT_NEAR(precision_drift(2.0, 3.0, p), -variance_drift(0.5, 3.0, p) / 0.25, 1e-14);
  for (int i = 0; i <= 200; ++i) {
    const double g = 1e-6 * std::pow(1e6, i / 200.0);
    for (double h : {0.0, 0.7, 13.0}) {
      const double lhs = precision_drift(1.0 / g, h, p);
      const double rhs = -variance_drift(g, h, p) / (g * g);
      EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(rhs)));
    }
  }
}

TEST(ClosedForm, Examples) {
  const ModelParams p;
  for (double h : {0.0, 1.0, 10.0}) {
    const double gp = stationary_variance(h, p);
    for (double t : {0.0, 0.3, 5.0}) EXPECT_NEAR(solve_constant_rate(gp, h, t, p), gp, 1e-15);
    EXPECT_EQ(solve_constant_rate(0.7, h, 0.0, p), 0.7);
  }
  EXPECT_LT(std::abs(solve_constant_rate(1.0, 0.0, 20.0, p) - (std::sqrt(2.0) - 1.0)), 1e-6);
  const auto rk = oracle::rk4_variance(1.0, [](double, double) { return 0.0; }, 20.0, 1e-4, p);
  EXPECT_NEAR(solve_constant_rate(1.0, 0.0, 20.0, p), rk.back(), 1e-12);
}

TEST(ClosedForm, SatisfiesOdeAndAgreesWithRk4) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ug(0.0, 1.0), uh(0.0, 13.9);
  const ModelParams p;
  for (int k = 0; k < 20; ++k) {
    const double g0 = ug(rng), h = uh(rng);
    const auto rk = oracle::rk4_variance(g0, [h](double, double) { return h; }, 2.0, 1e-4, p);
    for (int i = 1; i <= 20; ++i) {
      const double t = 0.1 * i;
      EXPECT_NEAR(solve_constant_rate(g0, h, t, p), rk[static_cast<std::size_t>(i * 1000)], 1e-11);
      const double e = 1e-5;
      const double d = (solve_constant_rate(g0, h, t + e, p) - solve_constant_rate(g0, h, t - e, p)) / (2 * e);
      EXPECT_LT(std::abs(d - variance_drift(solve_constant_rate(g0, h, t, p), h, p)), 1e-8);
    }
    EXPECT_NEAR(solve_constant_rate(g0, h, 200.0, p), stationary_variance(h, p), 1e-14);
  }
}

TEST(ClosedForm, DegenerateLimits) {
  // lambda = sigma2 = 0: gamma' = -b gamma^2.
  const ModelParams p = make_params(0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0);
  for (double t : {0.0, 1e-9, 0.5, 3.0}) EXPECT_NEAR(solve_constant_rate(0.8, 2.0, t, p), 0.8 / (1 + 3 * 0.8 * t), 1e-14);
  // Tiny Delta t uses the series branch and must stay continuous.
  const ModelParams q;
  const double a = solve_constant_rate(0.9, 0.0, 1e-9, q), b = solve_constant_rate(0.9, 0.0, 2e-8, q);
  EXPECT_NEAR((b - a) / (2e-8 - 1e-9), variance_drift(0.9, 0.0, q), 1e-6);
}

TEST(Integrate, EquilibriumPathIsConstant) {
  const Model m = canon_model();
  const auto t = uniform_time_grid(10.0, 1e-3);
  const VariancePath path = integrate_variance(m.coeffs.gamma_inf0, RateSchedule::constant(0.0), t, m);
  for (double g : path.values) EXPECT_NEAR(g, m.coeffs.gamma_inf0, 1e-14);
}

TEST(Integrate, MaximalRateMatchesClosedForm) {
  const Model m = canon_model();
  const double dt = std::min(1e-3, 0.1 / (1.0 + m.coeffs.h_max));
  const auto t = uniform_time_grid(10.0, dt);
  const double h = m.coeffs.h_max;
  const VariancePath path = integrate_variance(1.0, RateSchedule::constant(h), t, m);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_NEAR(path.values[i], solve_constant_rate(1.0, h, t[i], m.params), 1e-8);
    if (i > 0) {
      EXPECT_LE(path.values[i], path.values[i - 1]);
    }
  }
  EXPECT_NEAR(path.values.back(), stationary_variance(h, m.params), 1e-10);
}

TEST(Integrate, AlternatingScheduleMatchesChainedClosedForm) {
  const Model m = canon_model();
  std::vector<double> bp, vals;
  for (int k = 0; k < 10; ++k) {
    bp.push_back(k);
    vals.push_back(k % 2 ? 5.0 : 0.0);
  }
  const auto t = uniform_time_grid(10.0, 1e-3);
  const VariancePath path = integrate_variance(0.9, RateSchedule::piecewise_constant(bp, vals), t, m);
  double g = 0.9;
  for (int k = 0; k < 10; ++k) {
    for (int j = 1; j <= 1000; ++j) {
      const double exact = solve_constant_rate(g, vals[k], j * 1e-3, m.params);
      EXPECT_NEAR(path.values[static_cast<std::size_t>(k * 1000 + j)], exact, 1e-8);
    }
    g = solve_constant_rate(g, vals[k], 1.0, m.params);
  }
}

TEST(Integrate, Errors) {
  const Model m = canon_model();
  const auto coarse = uniform_time_grid(1.0, 0.05);
  try {
    integrate_variance(0.5, RateSchedule::constant(0.0), coarse, m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StepSizeError);
  }
  const auto t = uniform_time_grid(1.0, 1e-3);
  EXPECT_THROW(integrate_variance(0.5, RateSchedule::constant(m.coeffs.h_max * 2), t, m), Error);
  EXPECT_THROW(integrate_variance(0.5, RateSchedule::constant(-1.0), t, m), Error);
  EXPECT_THROW(integrate_variance(1.5, RateSchedule::constant(0.0), t, m), Error);
}

TEST(Integrate, ComparisonAndBounds) {
  const Model m = canon_model();
  const auto t = uniform_time_grid(8.0, 1e-3);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    std::vector<double> bp, lo, hi;
    for (int j = 0; j < 16; ++j) {
      bp.push_back(0.5 * j);
      const double a = u(rng) * m.coeffs.h_max;
      const double b = a + u(rng) * (m.coeffs.h_max - a);
      lo.push_back(a);
      hi.push_back(b);
    }
    const double g0 = u(rng);
    const auto p1 = integrate_variance(g0, RateSchedule::piecewise_constant(bp, lo), t, m);
    const auto p2 = integrate_variance(g0, RateSchedule::piecewise_constant(bp, hi), t, m);
    const auto p0 = integrate_variance(g0, RateSchedule::constant(0.0), t, m);
    const double cap = std::max(m.coeffs.gamma_inf0, g0);
    for (std::size_t i = 0; i < t.size(); ++i) {
      EXPECT_LE(p2.values[i], p1.values[i] + 1e-15);
      EXPECT_GE(p2.values[i], 0.0);
      EXPECT_LE(p1.values[i], p0.values[i] + 1e-15);
      EXPECT_LE(p0.values[i], cap + 1e-15);
    }
  }
}

TEST(Integrate, UncontrolledFlowIsMonotone) {
  const Model m = canon_model();
  const auto t = uniform_time_grid(10.0, 1e-3);
  for (double g0 : {0.0, 0.2, 0.8, 1.0}) {
    const auto p = integrate_variance(g0, RateSchedule::constant(0.0), t, m);
    const double dir = g0 < m.coeffs.gamma_inf0 ? 1.0 : -1.0;
    for (std::size_t i = 1; i < t.size(); ++i) {
      EXPECT_GE(dir * (p.values[i] - p.values[i - 1]), 0.0);
    }
  }
}

TEST(Integrate, ConcaveInInitialCondition) {
  const Model m = canon_model();
  const auto t = uniform_time_grid(2.0, 1e-3);
  const RateSchedule h = RateSchedule::open_loop([](double s) { return 3.0 + 2.0 * std::sin(3.0 * s); });
  const double e = 1e-3;
  for (double g0 : {0.1, 0.4, 0.7}) {
    const auto a = integrate_variance(g0 - e, h, t, m).values;
    const auto b = integrate_variance(g0, h, t, m).values;
    const auto c = integrate_variance(g0 + e, h, t, m).values;
    for (std::size_t i = 1; i < t.size(); ++i) EXPECT_LE(a[i] - 2 * b[i] + c[i], 1e-8);
  }
}

TEST(Sensitivity, InitialStateExamples) {
  const Model m = canon_model();
  const auto t = uniform_time_grid(3.0, 1e-3);
  const auto beta = initial_state_sensitivity(0.5, RateSchedule::constant(0.0), t, m);
  EXPECT_EQ(beta[0], 1.0);
  for (std::size_t i = 1; i < beta.size(); ++i) {
    EXPECT_GT(beta[i], 0.0);
    EXPECT_LE(beta[i], beta[i - 1]);
  }
  const double e = 1e-6;
  const auto up = integrate_variance(0.5 + e, RateSchedule::constant(0.0), t, m).values;
  const auto dn = integrate_variance(0.5 - e, RateSchedule::constant(0.0), t, m).values;
  const double fd = (up[1000] - dn[1000]) / (2 * e);
  EXPECT_NEAR(beta[1000], fd, 1e-5 * fd);

  const Model flat = make_model(make_params(0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0), CostFunction::quadratic(1e-3));
  for (double b : initial_state_sensitivity(0.0, RateSchedule::constant(0.0), t, flat)) EXPECT_EQ(b, 1.0);
}

TEST(Sensitivity, OpenLoopScheduleMatchesFiniteDifference) {
  const Model m = canon_model();
  const auto t = uniform_time_grid(3.0, 1e-3);
  const RateSchedule fb = RateSchedule::open_loop([](double s) { return 6.0 + 5.0 * std::cos(2.0 * s); });
  const auto beta = initial_state_sensitivity(0.6, fb, t, m);
  const double e = 1e-6;
  const auto up = integrate_variance(0.6 + e, fb, t, m).values;
  const auto dn = integrate_variance(0.6 - e, fb, t, m).values;
  for (std::size_t i : {250u, 500u, 1000u}) EXPECT_NEAR(beta[i], (up[i] - dn[i]) / (2 * e), 1e-5 * beta[i]);
}

TEST(VariancePathCsv, Header) {
  const Model m = canon_model();
  const auto t = uniform_time_grid(0.002, 1e-3);
  std::ostringstream os;
  integrate_variance(0.5, RateSchedule::constant(1.0), t, m).write_csv(os);
  const std::string text = os.str();
  EXPECT_EQ(text.substr(0, 10), "t,gamma,h\n");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}
