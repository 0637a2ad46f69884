#pragma once

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include "llhom/fem.hpp"
#include "llhom/grps.hpp"
#include "llhom/schemes.hpp"

namespace llhom {

/// Which variational form(s) back the three components. `mixed` uses V1 for
/// m1 and V2 for m2, m3.
enum class FormChoice { mixed, v1, v2 };

FormChoice form_choice_from_name(std::string_view name);
std::string form_choice_name(FormChoice f);

/// Component-wise coarse space: one basis for m1, one shared by m2 and m3.
struct CoarseSpace {
  const FineSpace* fine = nullptr;
  MeasurementSet measurements;
  std::shared_ptr<const BasisSet> basis1;   // component 1 (also the projection basis)
  std::shared_ptr<const BasisSet> basis23;  // components 2 and 3
  SparseMatrix prolongation;                // 3N x dim, block diagonal
  std::array<int, 3> offset{};
  std::array<int, 3> dims{};

  const BasisSet& basis(int component) const { return component == 0 ? *basis1 : *basis23; }
  int dim() const { return offset[2] + dims[2]; }
  bool shared_basis() const { return basis1 == basis23; }
};

/// Builds the bases for `choice` with the given measurement kind and layer.
CoarseSpace make_coarse_space(const FineSpace& fine, MeasurementKind kind, FormChoice choice, int layer);

/// Wraps precomputed bases (basis23 may equal basis1).
CoarseSpace coarse_space_from_bases(const FineSpace& fine, MeasurementSet measurements,
                                    std::shared_ptr<const BasisSet> basis1, std::shared_ptr<const BasisSet> basis23);

/// Nodal basis with point-value measurements: the coarse space is all of V_h.
CoarseSpace full_coarse_space(const FineSpace& fine);

struct CoarseState {
  std::array<Vector, 3> coefficients;
  /// Fine-node field. Equals the basis expansion of `coefficients`, except
  /// right after a length-preserving normalization, where it holds the
  /// normalized field the coefficients were interpolated from. Left empty by
  /// the accelerated stepper until requested through fine_trace().
  VectorField3 fine_trace;

  Vector stacked() const;
};

VectorField3 expand(const CoarseSpace& cs, const std::array<Vector, 3>& coefficients);

/// The fine trace, expanding it first if the state only holds coefficients.
const VectorField3& fine_trace(const CoarseSpace& cs, CoarseState& state);

/// c_j = <phi_j, m0_c> per component.
CoarseState interpolate_initial(const CoarseSpace& cs, const VectorField3& m0);

/// Galerkin-projected step: fine assembly from the trace, then P^T A P.
CoarseState step_coarse(const SchemeConfig& cfg, const CoarseSpace& cs, CoarseState& state, int step = 0);

/// Dense projected left-hand side P^T A P and right-hand side P^T f.
struct CoarseSystem {
  Eigen::MatrixXd matrix;
  Vector rhs;
};
CoarseSystem project_system(const CoarseSpace& cs, const SchemeSystem& sys);

/// Dense LU with a reciprocal-condition check; throws SolveError citing `step`.
Vector solve_coarse(const CoarseSystem& sys, int step);

using StepObserver = std::function<void(int step, const CoarseSpace&, CoarseState&)>;
using FineObserver = std::function<void(int step, const VectorField3&)>;

/// `steps` coarse steps without normalization. The observer sees step 0 and
/// every state after a step.
CoarseState run_algorithm1(const SchemeConfig& cfg, const CoarseSpace& cs, const VectorField3& m0, int steps,
                           const StepObserver& observe = {});

/// Before each step the fine trace is normalized nodewise and the coefficients
/// re-interpolated from it; the final state is normalized the same way.
CoarseState run_algorithm2(const SchemeConfig& cfg, const CoarseSpace& cs, const VectorField3& m0, int steps,
                           const StepObserver& observe = {});

/// Replaces the trace by its nodewise normalization and re-interpolates.
void normalize_state(const CoarseSpace& cs, CoarseState& state);

/// Fine reference loop. An's scheme normalizes after every step.
VectorField3 run_reference(const SchemeConfig& cfg, const FineSpace& fine, const VectorField3& m0, int steps,
                           const FineObserver& observe = {});

// ---------------------------------------------------------------------------
// Triple-product tensors and the accelerated Cimrak step.

/// T[x][y, z] = int w psi^X_x f(psi^Y_y, psi^Z_z), stored as one sparse
/// ny x nz slice per x; untouched entries (empty triple support) are absent.
struct Tensor3 {
  int nx = 0, ny = 0, nz = 0;
  std::vector<SparseMatrix> slices;

  double at(int x, int y, int z) const { return slices[x].coeff(y, z); }
  long stored() const;
  /// sum_x w_x T[x]  (ny x nz)
  Eigen::MatrixXd contract_first(const Vector& w) const;
  /// d_x = a^T T[x] b
  Vector contract_pair(const Vector& a, const Vector& b) const;
  /// M[z, x] = sum_y w_y T[x][y, z]
  Eigen::MatrixXd contract_second(const Vector& w) const;
};

enum class TripleKind {
  value3,                 // int psi_x psi_y psi_z
  kappa_value3,           // int kappa psi_x psi_y psi_z
  grad_grad_value,        // int psi_x grad psi_y . grad psi_z
  kappa_value_grad_grad,  // int kappa psi_x grad psi_y . grad psi_z
};

/// Six-point quadrature, accumulated per coarse element over the bases active
/// on it.
Tensor3 build_tensor(const FineSpace& fine, TripleKind kind, const BasisSet& x, const BasisSet& y, const BasisSet& z);

/// Everything the accelerated step needs, with no fine-mesh data.
struct TripleTensorSet {
  // index b: 0 for basis1, 1 for basis23 (left empty when the bases are shared)
  std::array<Tensor3, 2> omega;         // grad_grad_value(P; B_b, B_b), P = basis1
  std::array<Tensor3, 2> omega_bar;     // value3(P; B_b, B_b)
  std::array<Tensor3, 2> omega_bar_k;   // kappa_value3(P; B_b, B_b)
  Tensor3 cross_1_23;                   // kappa_value_grad_grad(B1; B23, B23)
  Tensor3 cross_23_1;                   // kappa_value_grad_grad(B23; B1, B23), empty when shared
  Eigen::MatrixXd gram;                 // (psi^P_l, psi^P_i)
  Eigen::LLT<Eigen::MatrixXd> gram_llt;
  std::array<Eigen::MatrixXd, 2> mass;       // Psi_b^T M Psi_b
  std::array<Eigen::MatrixXd, 2> stiffness;  // Psi_b^T K Psi_b
  bool shared = false;
  std::array<int, 3> offset{}, dims{};

  int basis_index(int component) const { return (component == 0 || shared) ? 0 : 1; }
};

TripleTensorSet precompute_tensors(const CoarseSpace& cs);

/// P_GRPS data for the current coefficients: d and rho = M^{-1} d for the
/// gradient-energy density |grad m|^2 and the anisotropy density m2^2 + m3^2.
struct ProjectedDensities {
  Vector d_grad, rho_grad;
  Vector d_aniso, rho_aniso;
};
ProjectedDensities p_grps(const TripleTensorSet& tensors, const std::array<Vector, 3>& coefficients);

/// rho = M^{-1} d for an arbitrary load vector d.
Vector p_grps(const TripleTensorSet& tensors, const Vector& d);

/// Dense left-hand side and right-hand side of the accelerated step.
CoarseSystem accelerated_system(const SchemeConfig& cfg, const TripleTensorSet& tensors,
                                const std::array<Vector, 3>& coefficients);

/// The same matrix through fine assembly: P_GRPS densities expanded on the
/// fine mesh, substituted into the Cimrak reaction, projected by congruence.
CoarseSystem substituted_baseline_system(const SchemeConfig& cfg, const CoarseSpace& cs, CoarseState& state);

/// Cimrak only; coefficients are updated and the fine trace is left empty.
CoarseState step_coarse_accelerated(const SchemeConfig& cfg, const TripleTensorSet& tensors, const CoarseState& state,
                                    int step = 0);

CoarseState run_accelerated(const SchemeConfig& cfg, const CoarseSpace& cs, const TripleTensorSet& tensors,
                            const VectorField3& m0, int steps, const StepObserver& observe = {});

/// Binary tensor cache keyed by (N_c, J, kappa name, basis hashes).
std::string tensor_cache_key(const CoarseSpace& cs);
void write_tensors(const std::filesystem::path& path, const TripleTensorSet& tensors, const std::string& key);
/// Throws llhom::Error when the file is malformed or was written for another key.
TripleTensorSet read_tensors(const std::filesystem::path& path, const std::string& key);

// ---------------------------------------------------------------------------

/// CSV snapshot: node,x,y,m1,m2,m3.
void write_trajectory_csv(const std::filesystem::path& path, const HierMesh& mesh, const VectorField3& m);

}  // namespace llhom
