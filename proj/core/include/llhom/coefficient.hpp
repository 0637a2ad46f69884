#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace llhom {

/// Scalar exchange coefficient kappa(x, y) with declared bounds.
struct CoefficientField {
  std::string name;
  std::function<double(double, double)> evaluator;
  double kappa_min = 0.0;
  double kappa_max = 0.0;

  double operator()(double x, double y) const { return evaluator(x, y); }
  bool within_bounds(double value) const { return value >= kappa_min && value <= kappa_max; }
};

/// Oscillatory six-scale trigonometric coefficient on [0,1]^2.
double ms_trig(double x, double y);

/// One of the five quotient terms of ms_trig; `term` in 1..5.
double ms_trig_term(int term, double x, double y);

/// ms_trig with bounds from a 1024^2 grid scan, widened by 5% of the sampled
/// range so that off-grid quadrature samples stay inside. Computed once.
const CoefficientField& ms_trig_field();

/// Throws llhom::Error if c <= 0.
CoefficientField constant_coefficient(double c);

/// Accepts "mstrig" or "constant:<c>".
CoefficientField coefficient_from_name(std::string_view spec);

}  // namespace llhom
