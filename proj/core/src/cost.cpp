#include "infoacq/cost.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "infoacq/errors.hpp"

namespace infoacq {

namespace {

constexpr double kInverseTol = 1e-12;

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorCode::InvalidParams, std::string(what) + " must be > 0");
}

double bisect_inverse(const CostFunction& c, double x, double lo, double hi) {
  while (hi - lo > kInverseTol) {
    const double mid = 0.5 * (lo + hi);
    if (c.derivative(mid) < x) lo = mid; else hi = mid;
    if (mid == lo && mid == hi) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

CostFunction CostFunction::power(double zeta, double epsilon) {
  require_positive(zeta, "cost.zeta");
  require_positive(epsilon, "cost.epsilon");
  CostFunction c;
  c.kind_ = Kind::Power;
  c.zeta_ = zeta;
  c.epsilon_ = epsilon;
  return c;
}

CostFunction CostFunction::quadratic(double zeta) {
  require_positive(zeta, "cost.zeta");
  CostFunction c;
  c.kind_ = Kind::Quadratic;
  c.zeta_ = zeta;
  return c;
}

CostFunction CostFunction::affine_quadratic(double zeta, double linear) {
  require_positive(zeta, "cost.zeta");
  if (!(linear >= 0.0) || !std::isfinite(linear)) fail(ErrorCode::InvalidParams, "cost.linear must be >= 0");
  CostFunction c;
  c.kind_ = Kind::AffineQuadratic;
  c.zeta_ = zeta;
  c.linear_ = linear;
  return c;
}

CostFunction CostFunction::custom(Fn c, Fn dc, Fn d2c) {
  if (!c || !dc || !d2c) fail(ErrorCode::InvalidParams, "custom cost needs c, c' and c''");
  CostFunction out;
  out.kind_ = Kind::Custom;
  out.c_ = std::move(c);
  out.dc_ = std::move(dc);
  out.d2c_ = std::move(d2c);
  out.validate();
  return out;
}

std::string CostFunction::name() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::Power: os << "power(zeta=" << zeta_ << ", epsilon=" << epsilon_ << ")"; break;
    case Kind::Quadratic: os << "quadratic(zeta=" << zeta_ << ")"; break;
    case Kind::AffineQuadratic: os << "affine_quadratic(zeta=" << zeta_ << ", linear=" << linear_ << ")"; break;
    case Kind::Custom: os << "custom"; break;
  }
  return os.str();
}

double CostFunction::value(double h) const {
  switch (kind_) {
    case Kind::Power: return zeta_ * std::pow(h, 1.0 + epsilon_);
    case Kind::Quadratic: return zeta_ * h * h;
    case Kind::AffineQuadratic: return zeta_ * h * h + linear_ * h;
    case Kind::Custom: return c_(h);
  }
  return 0.0;
}

double CostFunction::derivative(double h) const {
  switch (kind_) {
    case Kind::Power: return zeta_ * (1.0 + epsilon_) * std::pow(h, epsilon_);
    case Kind::Quadratic: return 2.0 * zeta_ * h;
    case Kind::AffineQuadratic: return 2.0 * zeta_ * h + linear_;
    case Kind::Custom: return dc_(h);
  }
  return 0.0;
}

double CostFunction::second_derivative(double h) const {
  switch (kind_) {
    case Kind::Power:
      if (epsilon_ == 1.0) return 2.0 * zeta_;
      return zeta_ * (1.0 + epsilon_) * epsilon_ * std::pow(h, epsilon_ - 1.0);
    case Kind::Quadratic:
    case Kind::AffineQuadratic: return 2.0 * zeta_;
    case Kind::Custom: return d2c_(h);
  }
  return 0.0;
}

double CostFunction::inverse_derivative(double x, double upper) const {
  const double d0 = marginal_at_zero();
  if (x <= d0) return 0.0;
  switch (kind_) {
    case Kind::Power: return std::pow(x / (zeta_ * (1.0 + epsilon_)), 1.0 / epsilon_);
    case Kind::Quadratic: return x / (2.0 * zeta_);
    case Kind::AffineQuadratic: return (x - linear_) / (2.0 * zeta_);
    case Kind::Custom: break;
  }
  double hi = upper;
  if (!(hi > 0.0)) {
    hi = 1.0;
    int doublings = 0;
    while (derivative(hi) < x) {
      hi *= 2.0;
      if (++doublings > 200) fail(ErrorCode::CostRangeError, "c' never reaches the requested marginal value");
    }
  } else if (derivative(hi) < x) {
    return hi;
  }
  return bisect_inverse(*this, x, 0.0, hi);
}

void CostFunction::validate() const {
  const double c0 = value(0.0);
  if (!std::isfinite(c0) || c0 < 0.0) fail(ErrorCode::InvalidParams, "cost: c(0) must be finite and >= 0");
  if (derivative(0.0) < 0.0) fail(ErrorCode::InvalidParams, "cost: c'(0) must be >= 0");
  for (int k = -6; k <= 6; ++k) {
    for (double mant : {1.0, 3.0}) {
      const double h = mant * std::pow(10.0, k);
      const double c = value(h), d = derivative(h), d2 = second_derivative(h);
      if (!(c >= 0.0) || !std::isfinite(c)) fail(ErrorCode::InvalidParams, "cost: c(h) must be finite and >= 0");
      if (!(d > 0.0)) fail(ErrorCode::InvalidParams, "cost: c'(h) must be > 0 for h > 0");
      if (!(d2 > 0.0)) fail(ErrorCode::InvalidParams, "cost: c''(h) must be > 0 for h > 0");
    }
  }
}

namespace {

void check_domain(const CostFunction& cost, double x, double h_max) {
  const double top = cost.derivative(h_max);
  if (!std::isfinite(x) || x < -1e-12 || x > top * (1.0 + 1e-6) + 1e-14) {
    std::ostringstream os;
    os << "marginal value " << x << " outside [0, " << top << "]";
    fail(ErrorCode::DomainError, os.str());
  }
}

}  // namespace

double h_hat(const CostFunction& cost, double x, double h_max) {
  check_domain(cost, x, h_max);
  if (x <= cost.marginal_at_zero()) return 0.0;
  return std::min(cost.inverse_derivative(x, h_max * (1.0 + 1e-6)), h_max);
}

double c_star(const CostFunction& cost, double x, double h_max) {
  check_domain(cost, x, h_max);
  if (x < cost.marginal_at_zero()) return -cost.value(0.0);
  const double h = std::min(cost.inverse_derivative(x, h_max * (1.0 + 1e-6)), h_max);
  return h * x - cost.value(h);
}

double h_hat_derivative(const CostFunction& cost, double x, double h_max) {
  check_domain(cost, x, h_max);
  if (x <= cost.marginal_at_zero()) return 0.0;
  const double h = cost.inverse_derivative(x, h_max * (1.0 + 1e-6));
  if (h >= h_max) return 0.0;
  return 1.0 / cost.second_derivative(h);
}

}  // namespace infoacq
