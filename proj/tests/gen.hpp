#pragma once

#include <array>
#include <cmath>
#include <random>

#include "llhom/fem.hpp"

// Small deterministic generators for property tests.
namespace gen {

struct Source {
  std::mt19937_64 rng;
  explicit Source(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

  llhom::Vector vector(int n, double lo = -1.0, double hi = 1.0) {
    llhom::Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }

  llhom::VectorField3 field(int n, double lo = -1.0, double hi = 1.0) {
    llhom::VectorField3 m(n);
    for (int c = 0; c < 3; ++c) m[c] = vector(n, lo, hi);
    return m;
  }

  llhom::VectorField3 unit_field(int n) {
    llhom::VectorField3 m = field(n);
    for (int i = 0; i < n; ++i) {
      const double r = std::sqrt(m[0][i] * m[0][i] + m[1][i] * m[1][i] + m[2][i] * m[2][i]);
      for (int c = 0; c < 3; ++c) m[c][i] /= r;
    }
    return m;
  }
};

inline constexpr int kCases = 25;

}  // namespace gen
