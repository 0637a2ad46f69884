#pragma once

#include <Eigen/SparseLU>
#include <memory>
#include <string>
#include <string_view>

#include "llhom/fem.hpp"

namespace llhom {

enum class Scheme { cimrak, gao, an };

Scheme scheme_from_name(std::string_view name);
std::string scheme_name(Scheme s);

struct SchemeConfig {
  Scheme scheme = Scheme::gao;
  double damping = 1.0;  // lambda
  double dt = 0.0;
  bool anisotropy = true;

  /// Throws llhom::Error unless dt > 0 and damping > 0.
  void validate() const;
};

/// One backward-Euler step A^n(m^{n+1}, v) = (f^n, v) on the fine block layout.
struct SchemeSystem {
  SparseMatrix matrix;  // 3N x 3N
  Vector rhs;           // 3N
  Scheme scheme = Scheme::gao;
  int step = 0;
};

/// lambda kappa-stiffness on every component, lambda anisotropy mass, and the
/// cross term built from m_prev.
SparseMatrix assemble_common_B(const FineSpace& space, double lambda, const VectorField3& m_prev,
                               bool anisotropy = true);

/// Full per-scheme system. The nonlinear coupling of each scheme:
///   cimrak: +lambda (s m^{n+1}, v) with s = m^n . h_eff^n
///   gao:    -lambda (s m^n, v) on the right
///   an:     -lambda (hbar(m^{n+1}) m^n, v) with
///           hbar(w) = sum_c kappa grad w_c . grad m_c^n + lambda sum_c w_c (m_a^n)_c
SchemeSystem assemble_step(const SchemeConfig& cfg, const FineSpace& space, const VectorField3& m_prev, int step = 0);

/// Cimrak-form system whose reaction field s is replaced by
/// -(kappa * kappa_part + plain_part), both given as nodal P1 fields.
SchemeSystem assemble_step_substituted(const SchemeConfig& cfg, const FineSpace& space, const VectorField3& m_prev,
                                       const Vector& kappa_part, const Vector& plain_part, int step = 0);

/// || 1 - |m|^2 ||_{L2} by six-point quadrature of the interpolated field.
double unit_length_deviation(const FineSpace& space, const VectorField3& m);

/// Nodewise m / |m|; throws llhom::Error naming the first zero-length node.
VectorField3 normalize_nodes(const VectorField3& m);

/// Sparse LU solver for fine scheme systems. The symbolic analysis is done
/// once, since every step shares the block pattern.
class FineSolver {
 public:
  FineSolver();
  ~FineSolver();
  FineSolver(FineSolver&&) noexcept;
  FineSolver& operator=(FineSolver&&) noexcept;

  /// Throws SolveError on factorization failure or relative residual > 1e-10.
  Vector solve(const SchemeSystem& sys);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One fine step (no post-normalization).
VectorField3 step_fine(const SchemeConfig& cfg, const FineSpace& space, const VectorField3& m_prev, FineSolver& solver,
                       int step = 0);

}  // namespace llhom
