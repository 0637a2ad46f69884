#include <gtest/gtest.h>

#include <cmath>

#include "llhom/coefficient.hpp"
#include "llhom/error.hpp"

using namespace llhom;

TEST(MsTrig, Origin) {
  const double expected = (2.0 + 2.0 * (1.1 / 2.1) + 2.0 * (2.1 / 1.1)) / 6.0;
  EXPECT_NEAR(ms_trig(0.0, 0.0), expected, 1e-15);
  EXPECT_NEAR(ms_trig(0.0, 0.0), 1.1443002, 1e-7);
}

TEST(MsTrig, FirstTermOnDiagonal) {
  for (double x : {0.0, 0.1, 0.37, 0.5, 0.999}) EXPECT_DOUBLE_EQ(ms_trig_term(1, x, x), 1.0);
}

// Independent re-derivation of the formula.
static double oracle(double x, double y) {
  const double pi = std::acos(-1.0);
  const double eps[5] = {1.0 / 5, 1.0 / 13, 1.0 / 17, 1.0 / 31, 1.0 / 65};
  double s = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double e = eps[i];
    double num, den;
    switch (i) {
      case 0: num = 1.1 + std::sin(2 * pi * x / e); den = 1.1 + std::sin(2 * pi * y / e); break;
      case 1: num = 1.1 + std::sin(2 * pi * y / e); den = 1.1 + std::cos(2 * pi * x / e); break;
      case 2: num = 1.1 + std::cos(2 * pi * x / e); den = 1.1 + std::sin(2 * pi * y / e); break;
      case 3: num = 1.1 + std::sin(2 * pi * y / e); den = 1.1 + std::cos(2 * pi * x / e); break;
      default: num = 1.1 + std::cos(2 * pi * x / e); den = 1.1 + std::sin(2 * pi * y / e); break;
    }
    s += num / den;
  }
  return (s + std::sin(4 * x * x * y * y) + 1.0) / 6.0;
}

TEST(MsTrig, MatchesIndependentFormula) {
  for (int i = 0; i <= 20; ++i)
    for (int j = 0; j <= 20; ++j) {
      const double x = i / 20.0 + 0.0123, y = j / 20.0 + 0.0071;
      EXPECT_NEAR(ms_trig(x, y), oracle(x, y), 1e-13);
    }
}

TEST(MsTrig, BoundsDominateSamples) {
  const auto& f = ms_trig_field();
  EXPECT_GT(f.kappa_min, 0.0);
  EXPECT_LT(f.kappa_min, f.kappa_max);
  for (int i = 0; i < 300; ++i)
    for (int j = 0; j < 300; ++j) {
      const double v = f(i / 299.0, j / 299.0);
      EXPECT_TRUE(f.within_bounds(v)) << v;
    }
}

TEST(MsTrig, Deterministic) {
  EXPECT_EQ(ms_trig(0.123456, 0.654321), ms_trig(0.123456, 0.654321));
  EXPECT_EQ(&ms_trig_field(), &ms_trig_field());
}

TEST(Constant, Values) {
  EXPECT_EQ(constant_coefficient(1.0)(0.3, 0.7), 1.0);
  const auto two = constant_coefficient(2.0);
  EXPECT_EQ(two(0.9, 0.1), 2.0);
  EXPECT_EQ(two.kappa_min, 2.0);
  EXPECT_EQ(two.kappa_max, 2.0);
  EXPECT_THROW(constant_coefficient(0.0), Error);
  EXPECT_THROW(constant_coefficient(-1.0), Error);
}

TEST(Constant, ByName) {
  EXPECT_EQ(coefficient_from_name("constant:2.5")(0.1, 0.2), 2.5);
  EXPECT_EQ(coefficient_from_name("mstrig").name, "mstrig");
  EXPECT_THROW(coefficient_from_name("constant:0"), Error);
  EXPECT_THROW(coefficient_from_name("constant:abc"), Error);
  EXPECT_THROW(coefficient_from_name("unknown"), Error);
}
