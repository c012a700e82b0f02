#pragma once

#include <iosfwd>
#include <span>

#include "infoacq/hjb.hpp"
#include "infoacq/model.hpp"

namespace infoacq {

// Full-information value W(x, m, gamma) built from a reduced value table.
class FullValueModel {
 public:
  explicit FullValueModel(ValueTable table);

  const Model& model() const { return table_.model; }
  const Coefficients& coeffs() const { return table_.model.coeffs; }
  const ValueTable& table() const { return table_; }
  // (C1 + a2 sigma2^2) / delta
  double constant_term() const { return constant_term_; }

  // a1 x^2 + a2 m^2 + a3 x m + b1 x + b2 m
  double quadratic_part(double x, double m) const;
  // v^no(gamma), cached per call site by the caller if needed.
  double v_no(double gamma) const;

 private:
  ValueTable table_;
  double constant_term_;
};

double assemble_W(const FullValueModel& fv, double x, double m, double gamma);
// Optimal state control, identical for all three information structures.
double feedback_u(const Model& model, double x, double m);
// c^full = (sigma1^2 a1 + sigma2^2 a2 + b2 lambda mu_bar - b1^2/(2 rho) + c(0)) / delta
double c_full(const Model& model);
double value_full_observation(const Model& model, double x, double mu);
double value_no_acquisition(const FullValueModel& fv, double x, double m, double gamma);
double value_of_information(const FullValueModel& fv, double gamma);

// Residual of the full HJB at (x, m, gamma): quadratic-part derivatives in closed form,
// v' from the table.
double full_hjb_residual(const FullValueModel& fv, double x, double m, double gamma);

// x,m,v_full,v,v_no on the lattice xs x ms at fixed gamma.
void write_surface_csv(const FullValueModel& fv, std::span<const double> xs, std::span<const double> ms,
                       double gamma, std::ostream& os);

}  // namespace infoacq
