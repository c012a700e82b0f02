#include <algorithm>
#include <cmath>
#include <sstream>

#include "infoacq/errors.hpp"
#include "infoacq/hjb.hpp"

namespace infoacq {

namespace {

// For c = zeta h^2 the reduced HJB is quadratic in y = gamma^2 v':
//   -y^2/(4 zeta) + A y + a_bar gamma - delta v = 0,
//   A = -1/sigma1^2 - 2 lambda/gamma + sigma2^2/gamma^2.
// The radicand vanishes at the equilibrium (double root), where the branch
// switches: "+" above gamma_eq, "-" below.
class QuadraticOde {
 public:
  QuadraticOde(const Model& m, double zeta) : m_(m), zeta_(zeta) {}

  double A(double g) const {
    const auto& p = m_.params;
    return -p.sigma1_bar_sq() - 2.0 * p.lambda / g + p.sigma2 * p.sigma2 / (g * g);
  }
  double dA(double g) const {
    const auto& p = m_.params;
    return 2.0 * p.lambda / (g * g) - 2.0 * p.sigma2 * p.sigma2 / (g * g * g);
  }
  double d2A(double g) const {
    const auto& p = m_.params;
    return -4.0 * p.lambda / (g * g * g) + 6.0 * p.sigma2 * p.sigma2 / (g * g * g * g);
  }

  double radicand(double g, double v) const {
    const double a = A(g);
    const double r = zeta_ * zeta_ * a * a + zeta_ * (m_.coeffs.a_bar * g - m_.params.delta * v);
    const double scale = zeta_ * zeta_ * a * a + zeta_ * (m_.coeffs.a_bar * g + m_.params.delta * std::abs(v));
    if (r < 0.0) {
      if (r < -1e-9 * scale) {
        std::ostringstream os;
        os << "radicand " << r << " at gamma = " << g << ", v = " << v;
        fail(ErrorCode::NegativeRadicand, os.str());
      }
      return 0.0;
    }
    return r;
  }

  double marginal(double g, double v, double branch) const {
    return 2.0 * zeta_ * A(g) + branch * 2.0 * std::sqrt(radicand(g, v));
  }
  double slope(double g, double v, double branch) const { return marginal(g, v, branch) / (g * g); }

 private:
  const Model& m_;
  double zeta_;
};

}  // namespace

ValueTable quadratic_ode_oracle(const Model& model, double gamma_lo, double gamma_hi, const EquilibriumPoint& eq,
                                std::size_t n) {
  const CostFunction& cost = model.cost;
  double zeta = 0.0;
  if (cost.kind() == CostFunction::Kind::Quadratic ||
      (cost.kind() == CostFunction::Kind::Power && cost.epsilon() == 1.0)) {
    zeta = cost.zeta();
  } else {
    fail(ErrorCode::InvalidParams, "the explicit ODE oracle requires a quadratic cost");
  }
  const double ge = eq.gamma_eq;
  if (!(gamma_lo > 0.0 && gamma_lo < ge && ge < gamma_hi))
    fail(ErrorCode::InvalidParams, "oracle range must satisfy 0 < gamma_lo < gamma_eq < gamma_hi");
  if (gamma_hi > model.coeffs.gamma_max * (1.0 + 1e-12))
    fail(ErrorCode::GammaOutOfRange, "oracle range exceeds gamma_max");

  const QuadraticOde ode(model, zeta);
  const double delta = model.params.delta;
  const double pe = eq.p_eq;
  const double ve = (model.coeffs.a_bar * ge + cost.value(eq.h_eq)) / delta;
  const double ye = ge * ge * pe;

  // Second-order start: differentiating the HJB twice at the double root gives
  //   y'^2 - 2 zeta (2A' - delta/g^2) y' - 2 zeta y (A'' + 2 delta/g^3) = 0,
  // whose positive root is the branch with increasing marginal value.
  const double b = zeta * (2.0 * ode.dA(ge) - delta / (ge * ge));
  const double disc = b * b + 2.0 * zeta * ye * (ode.d2A(ge) + 2.0 * delta / (ge * ge * ge));
  if (disc < 0.0) fail(ErrorCode::NegativeRadicand, "no real marginal slope at the equilibrium");
  const double dy = b + std::sqrt(disc);
  const double v2 = (dy - 2.0 * ge * pe) / (ge * ge);

  ValueTable t;
  t.grid = Grid::uniform(gamma_lo, gamma_hi, n);
  t.model = model;
  t.v.assign(n, 0.0);
  t.v_slope.assign(n, 0.0);
  const auto& nodes = t.grid.nodes;
  const double seed_eps = 1e-6 * ge;
  std::size_t steps = 0;

  auto march = [&](double dir) {
    double g = ge + dir * seed_eps;
    double v = ve + pe * dir * seed_eps + 0.5 * v2 * seed_eps * seed_eps;
    auto rhs = [&](double gg, double vv) { return ode.slope(gg, vv, dir); };
    const double cap = t.grid.spacing;
    auto advance_to = [&](double target) {
      while (dir * (target - g) > 0.0) {
        double step = std::min({cap, 0.5 * std::abs(g - ge), std::abs(target - g)});
        const double s = dir * step;
        const double k1 = rhs(g, v);
        const double k2 = rhs(g + 0.5 * s, v + 0.5 * s * k1);
        const double k3 = rhs(g + 0.5 * s, v + 0.5 * s * k2);
        const double k4 = rhs(g + s, v + s * k3);
        v += s / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        g = (step == std::abs(target - g)) ? target : g + s;
        ++steps;
      }
    };
    if (dir > 0) {
      for (std::size_t i = 0; i < n; ++i) {
        if (nodes[i] <= ge + seed_eps) continue;
        advance_to(nodes[i]);
        t.v[i] = v;
        t.v_slope[i] = rhs(nodes[i], v);
      }
    } else {
      for (std::size_t k = n; k-- > 0;) {
        if (nodes[k] >= ge - seed_eps) continue;
        advance_to(nodes[k]);
        t.v[k] = v;
        t.v_slope[k] = rhs(nodes[k], v);
      }
    }
  };
  march(+1.0);
  march(-1.0);
  // Nodes inside the seed neighbourhood use the Taylor expansion directly.
  for (std::size_t i = 0; i < n; ++i) {
    const double d = nodes[i] - ge;
    if (std::abs(d) <= seed_eps) {
      t.v[i] = ve + pe * d + 0.5 * v2 * d * d;
      t.v_slope[i] = pe + v2 * d;
    }
  }

  t.marginal.resize(n);
  t.h_star.resize(n);
  double running = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    running = std::max(running, nodes[i] * nodes[i] * t.v_slope[i]);
    t.marginal[i] = running;
  }
  t.gamma_D = 0.0;
  for (std::size_t i = 0; i < n; ++i) t.h_star[i] = feedback_map(t, nodes[i]);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    worst = std::max(worst, std::abs(-delta * t.v[i] + hamiltonian(nodes[i], t.v_slope[i], model).value));
  t.residual = worst;
  t.iterations = steps;
  return t;
}

}  // namespace infoacq
