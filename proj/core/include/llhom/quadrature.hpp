#pragma once

#include <array>

namespace llhom {

/// Symmetric triangle rule in barycentric coordinates; weights sum to one and
/// are multiplied by the triangle area at use.
template <int N>
struct TriangleRule {
  static constexpr int size = N;
  std::array<std::array<double, 3>, N> points;
  std::array<double, N> weights;
};

/// Interior three-point rule, exact for quadratics.
inline constexpr TriangleRule<3> kRule3{
    {{{2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0}, {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0}, {1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0}}},
    {{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}}};

namespace detail {
inline constexpr double a1 = 0.44594849091596488632;
inline constexpr double b1 = 1.0 - 2.0 * a1;
inline constexpr double w1 = 0.22338158967801146570;
inline constexpr double a2 = 0.09157621350977074346;
inline constexpr double b2 = 1.0 - 2.0 * a2;
inline constexpr double w2 = 0.10995174365532186764;
}  // namespace detail

/// Six-point rule (Dunavant degree 4), exact for quartics.
inline constexpr TriangleRule<6> kRule6{
    {{{detail::a1, detail::a1, detail::b1},
      {detail::a1, detail::b1, detail::a1},
      {detail::b1, detail::a1, detail::a1},
      {detail::a2, detail::a2, detail::b2},
      {detail::a2, detail::b2, detail::a2},
      {detail::b2, detail::a2, detail::a2}}},
    {{detail::w1, detail::w1, detail::w1, detail::w2, detail::w2, detail::w2}}};

}  // namespace llhom
