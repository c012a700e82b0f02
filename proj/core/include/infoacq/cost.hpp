#pragma once

#include <functional>
#include <string>

namespace infoacq {

// Convex, increasing acquisition cost c(h) on [0, inf) with first and second
// derivatives and the inverse of c'.
class CostFunction {
 public:
  enum class Kind { Power, Quadratic, AffineQuadratic, Custom };
  using Fn = std::function<double(double)>;

  // Placeholder equal to quadratic(1).
  CostFunction() = default;

  // c(h) = zeta * h^(1+epsilon)
  static CostFunction power(double zeta, double epsilon);
  // c(h) = zeta * h^2
  static CostFunction quadratic(double zeta);
  // c(h) = zeta * h^2 + linear * h
  static CostFunction affine_quadratic(double zeta, double linear);
  // Arbitrary triple (c, c', c''). Validated on a probe set only.
  static CostFunction custom(Fn c, Fn dc, Fn d2c);

  Kind kind() const { return kind_; }
  double zeta() const { return zeta_; }
  double epsilon() const { return epsilon_; }
  double linear() const { return linear_; }
  std::string name() const;

  double value(double h) const;
  double derivative(double h) const;
  double second_derivative(double h) const;
  double operator()(double h) const { return value(h); }

  // c'(0); the threshold below which acquiring is never optimal.
  double marginal_at_zero() const { return derivative(0.0); }

  // Solves c'(h) = x for h >= 0 (x >= c'(0)). Closed form where available,
  // otherwise bisection to 1e-12 on [0, upper]. upper <= 0 means "search".
  double inverse_derivative(double x, double upper = 0.0) const;

  // Throws InvalidParams if the sampled invariants fail on a log-spaced probe set.
  void validate() const;

 private:
  Kind kind_ = Kind::Quadratic;
  double zeta_ = 1.0;
  double epsilon_ = 1.0;
  double linear_ = 0.0;
  Fn c_, dc_, d2c_;
};

// Maximiser of h*x - c(h) over [0, h_max]. Zero below c'(0).
double h_hat(const CostFunction& cost, double x, double h_max);
// Convex conjugate c*(x) = max_h {h*x - c(h)}.
double c_star(const CostFunction& cost, double x, double h_max);
// Derivative of h_hat, 1/c''((c')^{-1}(x)); zero on the inactive side.
double h_hat_derivative(const CostFunction& cost, double x, double h_max);

}  // namespace infoacq
