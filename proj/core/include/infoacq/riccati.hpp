#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "infoacq/model.hpp"

namespace infoacq {

// f(gamma, h) = -(1/sigma1^2 + h) gamma^2 - 2 lambda gamma + sigma2^2
double variance_drift(double gamma, double h, const ModelParams& p);
// Drift of the precision 1/gamma.
double precision_drift(double precision, double h, const ModelParams& p);
// Exact solution of gamma' = f(gamma, h) with constant h.
double solve_constant_rate(double gamma0, double h, double t, const ModelParams& p);
// Stable root gamma_+(h) of f(., h).
double stationary_variance(double h, const ModelParams& p);

// Acquisition rate as a function of time and/or current variance.
class RateSchedule {
 public:
  enum class Kind { Constant, PiecewiseConstant, OpenLoop, Feedback };

  static RateSchedule constant(double h);
  // values[k] applies on [breakpoints[k], breakpoints[k+1]); last value extends to infinity.
  static RateSchedule piecewise_constant(std::vector<double> breakpoints, std::vector<double> values);
  static RateSchedule open_loop(std::function<double(double)> h_of_t);
  static RateSchedule feedback(std::function<double(double)> h_of_gamma);

  Kind kind() const { return kind_; }
  // Constant and piecewise-constant schedules are held fixed across an integration step.
  bool held_per_step() const { return kind_ == Kind::Constant || kind_ == Kind::PiecewiseConstant; }
  double rate(double t, double gamma) const;

 private:
  Kind kind_ = Kind::Constant;
  double constant_ = 0.0;
  std::vector<double> breakpoints_, values_;
  std::function<double(double)> fn_;
};

struct VariancePath {
  std::vector<double> times;
  std::vector<double> values;
  std::vector<double> rate_used;

  void write_csv(std::ostream& os) const;  // t,gamma,h
};

std::vector<double> uniform_time_grid(double horizon, double dt);

// Fixed-step RK4 along t_grid. Throws StepSizeError / DomainError.
VariancePath integrate_variance(double gamma0, const RateSchedule& schedule, std::span<const double> t_grid,
                                const Model& model);

// beta_t = d gamma_t / d gamma_0, integrated jointly with gamma.
std::vector<double> initial_state_sensitivity(double gamma0, const RateSchedule& schedule,
                                              std::span<const double> t_grid, const Model& model);

}  // namespace infoacq
