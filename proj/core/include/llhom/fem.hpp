#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <vector>

#include "llhom/coefficient.hpp"
#include "llhom/mesh.hpp"
#include "llhom/quadrature.hpp"

namespace llhom {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;  // column-major

/// Nodal P1 field on the fine mesh.
using ScalarField = Vector;

/// Magnetization-like field: three nodal components on the fine mesh. Unit
/// length is not assumed.
struct VectorField3 {
  std::array<Vector, 3> comp;

  VectorField3() = default;
  explicit VectorField3(int num_nodes) {
    for (auto& c : comp) c = Vector::Zero(num_nodes);
  }
  static VectorField3 constant(int num_nodes, const std::array<double, 3>& value);

  int size() const { return static_cast<int>(comp[0].size()); }
  Vector& operator[](int c) { return comp[c]; }
  const Vector& operator[](int c) const { return comp[c]; }
  Eigen::Vector3d at(int node) const { return {comp[0][node], comp[1][node], comp[2][node]}; }

  /// Component-major stacking [m1; m2; m3].
  Vector stacked() const;
  static VectorField3 from_stacked(const Vector& v);
};

/// Fine P1 space over (mesh, kappa): element geometry, kappa samples at the
/// quadrature points, static operators, and the sparsity patterns used by the
/// per-step assemblers. Immutable after construction.
class FineSpace {
 public:
  /// Throws llhom::Error when a kappa sample falls outside the declared bounds.
  FineSpace(const HierMesh& mesh, const CoefficientField& kappa);

  const HierMesh& mesh() const { return *mesh_; }
  const CoefficientField& kappa() const { return kappa_; }
  int num_nodes() const { return mesh_->num_fine_nodes(); }
  int num_triangles() const { return mesh_->num_fine_triangles(); }

  double area(int t) const { return area_[t]; }
  const std::array<Eigen::Vector2d, 3>& gradients(int t) const { return grad_[t]; }
  double kappa3(int t, int q) const { return kappa3_[3 * t + q]; }
  double kappa6(int t, int q) const { return kappa6_[6 * t + q]; }
  /// Mean of kappa over triangle t by the three-point rule.
  double kappa_mean3(int t) const { return (kappa3(t, 0) + kappa3(t, 1) + kappa3(t, 2)) / 3.0; }

  const SparseMatrix& stiffness() const { return stiffness_; }       // kappa-weighted
  const SparseMatrix& unit_stiffness() const { return unit_stiffness_; }
  const SparseMatrix& mass() const { return mass_; }
  const Vector& lumped_mass() const { return lumped_; }

  /// Zero-valued N x N matrix with the P1 pattern and its per-element slots.
  const SparseMatrix& scalar_pattern() const { return scalar_pattern_; }
  int scalar_slot(int t, int i, int j) const { return scalar_slot_[9 * t + 3 * i + j]; }

  /// Zero-valued 3N x 3N matrix with every 3x3 node block filled.
  const SparseMatrix& block_pattern() const { return block_pattern_; }
  int block_slot(int t, int a, int b, int i, int j) const {
    return block_slot_[81 * t + 27 * a + 9 * b + 3 * i + j];
  }

 private:
  const HierMesh* mesh_;
  CoefficientField kappa_;
  std::vector<double> area_;
  std::vector<std::array<Eigen::Vector2d, 3>> grad_;
  std::vector<double> kappa3_, kappa6_;
  SparseMatrix stiffness_, unit_stiffness_, mass_;
  Vector lumped_;
  SparseMatrix scalar_pattern_, block_pattern_;
  std::vector<int> scalar_slot_, block_slot_;
};

/// Accumulates element contributions into the fixed 3N x 3N block pattern.
/// Row block a is the test component, column block b the trial component.
class BlockAssembler {
 public:
  explicit BlockAssembler(const FineSpace& space);

  /// coef[c] * consistent mass on diagonal block c.
  void add_mass(const std::array<double, 3>& coef);
  /// coef[c] * kappa-stiffness on diagonal block c.
  void add_stiffness(const std::array<double, 3>& coef);
  /// scale * ( -sum_k int kappa (m x d_k w) . d_k v ).
  void add_cross(const VectorField3& m, double scale);
  /// scale * ( -int (m x w_a) . v ) with w_a = (0, w2, w3).
  void add_anisotropy_cross(const VectorField3& m, double scale);
  /// int (plain + kappa * weighted) w . v, both P1 nodal fields (either may be null).
  void add_reaction(const Vector* plain, const Vector* kappa_weighted, double scale);
  /// scale * int [ sum_b (kappa grad w_b . grad m_b + lambda w_b (m_a)_b) ] (m . v).
  void add_projection_coupling(const VectorField3& m, double lambda, double scale);

  SparseMatrix matrix() const;
  const std::vector<double>& values() const { return values_; }

 private:
  const FineSpace* space_;
  std::vector<double> values_;
};

SparseMatrix assemble_stiffness(const FineSpace& space);
SparseMatrix assemble_mass(const FineSpace& space, bool lumped);
/// 3N x 3N skew operator; its quadratic form vanishes.
SparseMatrix assemble_cross_term(const FineSpace& space, const VectorField3& m_prev);
/// Block-diagonal diag(0, M, M).
SparseMatrix assemble_anisotropy_mass(const FineSpace& space);

/// Lumped-mass solution of M_L h_c = -K m_c - (A m)_c, natural boundary rows.
VectorField3 discrete_effective_field(const FineSpace& space, const VectorField3& m, bool anisotropy = true);

/// 1/2 int kappa |grad m|^2 + m2^2 + m3^2 with the six-point rule.
double ll_energy(const FineSpace& space, const VectorField3& m);

/// Load vector b_i = int g phi_i for a nodal P1 field g (six-point rule,
/// optionally kappa-weighted).
Vector load_vector(const FineSpace& space, const Vector& g, bool kappa_weighted = false);

/// b_i = int |grad m|^2 phi_i (sum over components, unweighted).
Vector gradient_energy_load(const FineSpace& space, const VectorField3& m);

/// b_i = int (m2^2 + m3^2) phi_i.
Vector anisotropy_energy_load(const FineSpace& space, const VectorField3& m);

/// Field value at barycentric point `bary` of triangle t.
inline double eval_p1(const HierMesh& mesh, const Vector& u, int t, const std::array<double, 3>& bary) {
  const auto& tri = mesh.fine_triangles[t];
  return bary[0] * u[tri[0]] + bary[1] * u[tri[1]] + bary[2] * u[tri[2]];
}

}  // namespace llhom
