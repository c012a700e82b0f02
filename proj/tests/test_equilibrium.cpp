#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"

using namespace infoacq;

namespace {

Model canon_model() { return make_model(ModelParams{}, CostFunction::quadratic(1e-3), 1.0); }

constexpr SensitivityParameter kAll[] = {SensitivityParameter::Sigma1, SensitivityParameter::Sigma2Sq,
                                         SensitivityParameter::Kappa, SensitivityParameter::Alpha};

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST(Equilibrium, CanonAgreesWithBisectionOracle) {
  const Model m = canon_model();
  const EquilibriumPoint eq = solve_equilibrium(m);
  const oracle::Eq o = oracle::equilibrium_bisection(m);
  EXPECT_NEAR(eq.gamma_eq, o.gamma, 1e-12);
  EXPECT_NEAR(eq.p_eq, o.p, 1e-14);
  EXPECT_NEAR(eq.h_eq, o.h, 1e-10);
  // Frozen from the bisection oracle.
  EXPECT_NEAR(eq.gamma_eq, 0.38733045062399, 1e-12);
  EXPECT_NEAR(eq.h_eq, 0.50201154491980, 1e-10);
  EXPECT_NEAR(eq.p_eq, 0.00669237731338, 1e-13);
  EXPECT_NEAR(eq.v_eq, 0.0110446086975, 1e-12);
  EXPECT_LT(eq.residual, 1e-12);
  EXPECT_FALSE(eq.used_bisection);
}

TEST(Equilibrium, Invariants) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.5, 2.0), z(-3.0, -1.0);
  for (int k = 0; k < 50; ++k) {
    const ModelParams p = make_params(u(rng), 0.0, u(rng), u(rng), u(rng), u(rng), u(rng));
    const Model m = make_model(p, CostFunction::quadratic(std::pow(10.0, z(rng))));
    const EquilibriumPoint eq = solve_equilibrium(m);
    EXPECT_GE(eq.gamma_eq, 0.0);
    EXPECT_LE(eq.gamma_eq, m.coeffs.gamma_inf0);
    EXPECT_GE(eq.h_eq, 0.0);
    EXPECT_LE(eq.h_eq, m.coeffs.h_max);
    EXPECT_GT(eq.p_eq, 0.0);
    const double scale = 1.0 + p.sigma2 * p.sigma2;
    EXPECT_LT(eq.residual, 1e-12 * scale);
    EXPECT_NEAR(variance_drift(eq.gamma_eq, eq.h_eq, p), 0.0, 1e-12 * scale);
    const oracle::Eq o = oracle::equilibrium_bisection(m);
    EXPECT_NEAR(eq.gamma_eq, o.gamma, 1e-10);
    EXPECT_NEAR(eq.p_eq, o.p, 1e-10 * o.p);
  }
}

TEST(Equilibrium, PhiExamples) {
  const Model m = canon_model();
  const auto r = phi(m.coeffs.gamma_inf0, 0.0, m);
  EXPECT_NEAR(r[0], 0.0, 1e-15);
  EXPECT_NEAR(r[1], -m.coeffs.a_bar, 1e-15);
  const auto z = phi(0.0, 0.01, m);
  EXPECT_EQ(z[0], 1.0);
  EXPECT_NEAR(z[1], 3.0 * 0.01 - m.coeffs.a_bar, 1e-15);
}

TEST(Equilibrium, DegenerateNoiseFree) {
  const ModelParams p = make_params(1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0);
  const Model m = make_model(p, CostFunction::quadratic(1e-3), 1.0);
  const EquilibriumPoint eq = solve_equilibrium(m);
  EXPECT_EQ(eq.gamma_eq, 0.0);
  EXPECT_EQ(eq.h_eq, 0.0);
  EXPECT_NEAR(eq.p_eq, m.coeffs.a_bar / 3.0, 1e-15);
  EXPECT_THROW(jacobian_phi(eq.gamma_eq, eq.p_eq, m), Error);
}

TEST(Equilibrium, ExpensiveCostsApproachUncontrolledLevel) {
  // Fixed marginal price at zero: the rate switches off exactly.
  const Model af = make_model(ModelParams{}, CostFunction::affine_quadratic(1e-3, 1.0), 1.0);
  const EquilibriumPoint a = solve_equilibrium(af);
  EXPECT_EQ(a.h_eq, 0.0);
  EXPECT_NEAR(a.gamma_eq, af.coeffs.gamma_inf0, 1e-10);
  // Pure quadratic with a large weight: a tiny positive rate remains.
  const Model q = make_model(ModelParams{}, CostFunction::quadratic(1e3), 1.0);
  const EquilibriumPoint b = solve_equilibrium(q);
  EXPECT_GT(b.h_eq, 0.0);
  EXPECT_LT(b.h_eq, 1e-6);
  EXPECT_NEAR(b.gamma_eq, q.coeffs.gamma_inf0, 1e-7);
}

TEST(Jacobian, MatchesFiniteDifferences) {
  const Model m = canon_model();
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int k = 0; k < 10; ++k) {
    const double g = u(rng) * m.coeffs.gamma_inf0, p = u(rng) * m.coeffs.a_bar;
    const Eigen::Matrix2d J = jacobian_phi(g, p, m);
    const double e = 1e-7;
    const auto gp = phi(g + e, p, m), gm = phi(g - e, p, m);
    const auto pp = phi(g, p + e * 0.01, m), pm = phi(g, p - e * 0.01, m);
    for (int i = 0; i < 2; ++i) {
      EXPECT_NEAR(J(i, 0), (gp[i] - gm[i]) / (2 * e), 1e-6 * (1 + std::abs(J(i, 0))));
      EXPECT_NEAR(J(i, 1), (pp[i] - pm[i]) / (2 * e * 0.01), 1e-6 * (1 + std::abs(J(i, 1))));
    }
  }
  const EquilibriumPoint eq = solve_equilibrium(m);
  const double det = jacobian_phi(eq.gamma_eq, eq.p_eq, m).determinant();
  EXPECT_LT(det, 0.0);
}

TEST(Sensitivity, CanonSignsAndFiniteDifferences) {
  const Model m = canon_model();
  const EquilibriumPoint eq = solve_equilibrium(m);
  for (SensitivityParameter s : kAll) {
    const SensitivityReport r = sensitivity(eq, s, m);
    EXPECT_TRUE(r.all_signs_ok()) << to_string(s);
    EXPECT_LT(r.jacobian_det, 0.0);
    EXPECT_FALSE(r.one_sided);
    const FiniteDifferenceSensitivity fd = sensitivity_fd(s, m);
    EXPECT_LT(rel(r.d_gamma_eq, fd.d_gamma_eq), 1e-3) << to_string(s);
    EXPECT_LT(rel(r.d_h_eq, fd.d_h_eq), 1e-3) << to_string(s);
    EXPECT_LT(rel(r.d_v_eq, fd.d_v_eq), 1e-3) << to_string(s);
    if (s != SensitivityParameter::Kappa) {
      EXPECT_LT(rel(r.d_p_eq, fd.d_p_eq), 1e-3) << to_string(s);
    }
    EXPECT_EQ(parse_sensitivity_parameter(to_string(s)), s);
  }
  EXPECT_FALSE(parse_sensitivity_parameter("lambda").has_value());
}

TEST(Sensitivity, RandomParameterSets) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (int k = 0; k < 10; ++k) {
    const ModelParams p = make_params(u(rng), 0.0, u(rng), u(rng), u(rng), u(rng), u(rng));
    const Model m = make_model(p, CostFunction::quadratic(1e-2));
    const EquilibriumPoint eq = solve_equilibrium(m);
    ASSERT_GT(eq.h_eq, 0.0);
    for (SensitivityParameter s : kAll) {
      const SensitivityReport r = sensitivity(eq, s, m, 1.0, false);
      EXPECT_TRUE(r.all_signs_ok()) << to_string(s) << " set " << k;
      const FiniteDifferenceSensitivity fd = sensitivity_fd(s, m);
      EXPECT_LT(rel(r.d_gamma_eq, fd.d_gamma_eq), 1e-3) << to_string(s) << " set " << k;
      EXPECT_LT(rel(r.d_h_eq, fd.d_h_eq), 1e-3) << to_string(s) << " set " << k;
    }
  }
}

TEST(Sensitivity, AlphaScalesCost) {
  const Model m = canon_model();
  const EquilibriumPoint a = solve_equilibrium(m, 2.0);
  const Model m2 = make_model(ModelParams{}, CostFunction::quadratic(2e-3), 1.0);
  const EquilibriumPoint b = solve_equilibrium(m2);
  EXPECT_NEAR(a.gamma_eq, b.gamma_eq, 1e-12);
  EXPECT_NEAR(a.h_eq, b.h_eq, 1e-10);
  EXPECT_THROW(solve_equilibrium(m, 0.0), Error);
}

TEST(Slope, ClosedFormBranches) {
  const Model m = canon_model();
  const EquilibriumPoint eq = solve_equilibrium(m);
  EXPECT_NEAR(equilibrium_slope(eq, m, 0.0, 2.5e-4), eq.p_eq, 1e-12);
  const ValueTable t = value_iteration(Grid::uniform(0.0, 1.0, 4001), m);
  EXPECT_NEAR(t.slope_at(eq.gamma_eq), eq.p_eq, 1e-4 * eq.p_eq);

  const Model af = make_model(ModelParams{}, CostFunction::affine_quadratic(1e-3, 1.0), 1.0);
  const EquilibriumPoint ea = solve_equilibrium(af);
  const double s = equilibrium_slope(ea, af, 1.0, 2.5e-4);
  EXPECT_NEAR(s, af.coeffs.a_bar / (2.0 * ea.gamma_eq + 3.0), 1e-15);
  EXPECT_NEAR(s, ea.p_eq, 1e-12);

  const Model aff = make_model(ModelParams{}, CostFunction::affine_quadratic(1e-3, 0.005), 1.0);
  const EquilibriumPoint eb = solve_equilibrium(aff);
  try {
    equilibrium_slope(eb, aff, eb.gamma_eq + 1e-4, 2.5e-4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CaseMismatch);
  }
}

TEST(Equilibrium, MonotoneInStateNoise) {
  double prev_g = -1.0, prev_h = -1.0;
  for (int k = 1; k <= 20; ++k) {
    const double s2 = 0.1 * k;
    const Model m = make_model(make_params(1, 0, 1, s2, 1, 1, 1), CostFunction::quadratic(1e-3));
    const EquilibriumPoint eq = solve_equilibrium(m);
    EXPECT_GT(eq.gamma_eq, prev_g);
    EXPECT_GT(eq.h_eq, prev_h);
    prev_g = eq.gamma_eq;
    prev_h = eq.h_eq;
  }
}

TEST(Equilibrium, OptimalRolloutsConverge) {
  const Model m = canon_model();
  const ValueTable t = value_iteration(Grid::uniform(0.0, 1.0, 4001), m);
  const EquilibriumPoint eq = solve_equilibrium(m);
  const RateSchedule opt = RateSchedule::feedback([&t](double g) { return feedback_map(t, g); });
  const double dt = std::min(1e-3, 0.1 / (1.0 + m.coeffs.h_max));
  const auto times = uniform_time_grid(50.0, dt);
  for (double g0 : {0.0, 0.2, 0.38, 0.6, 1.0}) {
    const VariancePath path = integrate_variance(g0, opt, times, m);
    const double dir = g0 < eq.gamma_eq ? 1.0 : -1.0;
    for (std::size_t i = 1; i < path.values.size(); ++i) EXPECT_GE(dir * (path.values[i] - path.values[i - 1]), -1e-13);
    EXPECT_NEAR(path.values.back(), eq.gamma_eq, 1e-6);
  }
}
