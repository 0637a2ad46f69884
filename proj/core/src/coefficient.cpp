#include "llhom/coefficient.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "llhom/error.hpp"

namespace llhom {

namespace {

constexpr std::array<double, 5> kScales = {1.0 / 5.0, 1.0 / 13.0, 1.0 / 17.0, 1.0 / 31.0, 1.0 / 65.0};

}  // namespace

double ms_trig_term(int term, double x, double y) {
  if (term < 1 || term > 5) throw Error("ms_trig_term: term must be in 1..5");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double eps = kScales.at(static_cast<std::size_t>(term - 1));
  const double sx = std::sin(two_pi * x / eps), cx = std::cos(two_pi * x / eps);
  const double sy = std::sin(two_pi * y / eps);
  switch (term) {
    case 1:
      return (1.1 + sx) / (1.1 + sy);
    case 2:
    case 4:
      return (1.1 + sy) / (1.1 + cx);
    case 3:
    case 5:
      return (1.1 + cx) / (1.1 + sy);
    default:
      throw Error("ms_trig_term: term must be in 1..5");
  }
}

double ms_trig(double x, double y) {
  double sum = 0.0;
  for (int i = 1; i <= 5; ++i) sum += ms_trig_term(i, x, y);
  return (sum + std::sin(4.0 * x * x * y * y) + 1.0) / 6.0;
}

const CoefficientField& ms_trig_field() {
  static const CoefficientField field = [] {
    constexpr int n = 1024;
    double lo = ms_trig(0.0, 0.0), hi = lo;
    for (int j = 0; j <= n; ++j) {
      for (int i = 0; i <= n; ++i) {
        const double v = ms_trig(static_cast<double>(i) / n, static_cast<double>(j) / n);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    const double pad = 0.05 * (hi - lo);
    CoefficientField f;
    f.name = "mstrig";
    f.evaluator = [](double x, double y) { return ms_trig(x, y); };
    f.kappa_min = std::max(lo - pad, 0.5 * lo);
    f.kappa_max = hi + pad;
    return f;
  }();
  return field;
}

CoefficientField constant_coefficient(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw Error("constant coefficient must be positive");
  CoefficientField f;
  f.name = "constant:" + std::to_string(c);
  f.evaluator = [c](double, double) { return c; };
  f.kappa_min = c;
  f.kappa_max = c;
  return f;
}

CoefficientField coefficient_from_name(std::string_view spec) {
  if (spec == "mstrig") return ms_trig_field();
  constexpr std::string_view prefix = "constant:";
  if (spec.substr(0, prefix.size()) == prefix) {
    const std::string value(spec.substr(prefix.size()));
    std::size_t used = 0;
    double c = 0.0;
    try {
      c = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) throw Error("bad constant coefficient: " + std::string(spec));
    CoefficientField f = constant_coefficient(c);
    f.name = std::string(spec);
    return f;
  }
  throw Error("unknown coefficient: " + std::string(spec));
}

}  // namespace llhom
