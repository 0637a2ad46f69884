#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "llhom/fem.hpp"
#include "llhom/mesh.hpp"

namespace llhom {

/// Energy used for the basis minimization: V1 is the kappa-stiffness, V2 adds
/// the consistent mass. `identity` tags the nodal basis spanning all of V_h.
enum class VariationalForm : std::uint32_t { identity = 0, v1 = 1, v2 = 2 };

using RowSparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Measurement functionals as rows acting on nodal vectors: <phi_j, u> = row_j . u.
/// Edge rows integrate u along the coarse edge exactly for P1 u (d = 2 scaling is 1);
/// volume rows give sqrt|tau| * int_tau u. Nodal rows are point evaluations and
/// pair with identity_basis.
struct MeasurementSet {
  MeasurementKind kind = MeasurementKind::volume;
  RowSparseMatrix functionals;
  std::vector<int> support;  // coarse triangle, coarse edge, or fine node

  int count() const { return static_cast<int>(functionals.rows()); }
  Vector apply(const Vector& u) const { return functionals * u; }
};

MeasurementSet build_measurements(const HierMesh& mesh, MeasurementKind kind);

SparseMatrix energy_matrix(const FineSpace& space, VariationalForm form);

struct SparseColumn {
  std::vector<int> index;  // ascending fine node indices
  std::vector<double> value;
};

/// Localized operator-adapted basis, one sparse fine-nodal column per measurement.
struct BasisSet {
  VariationalForm form = VariationalForm::v1;
  MeasurementKind kind = MeasurementKind::volume;
  int layer = 0;
  int num_fine_nodes = 0;
  std::vector<SparseColumn> columns;
  Eigen::MatrixXd gram;  // (psi_l, psi_i)

  int size() const { return static_cast<int>(columns.size()); }
  /// N x N_H matrix with the columns as stored.
  SparseMatrix matrix() const;
  Vector expand(const Vector& coefficients) const;
  Vector column_dense(int i) const;
};

/// Entries with magnitude below this are dropped from stored columns.
inline constexpr double kPruneThreshold = 1e-14;

/// Solves the saddle-point problem for basis i on its layer-l patch: minimize
/// the form's energy over free patch nodes subject to <phi_j, psi> = delta_ij for
/// every measurement inside the patch. Throws SolveError when the constraint
/// block is rank-deficient on the patch.
SparseColumn solve_basis(const FineSpace& space, VariationalForm form, const MeasurementSet& measurements, int i,
                         int layer);

/// All columns (concurrently); saturated patches share one factorization.
BasisSet build_basis(const FineSpace& space, VariationalForm form, const MeasurementSet& measurements, int layer);

/// Nodal hat-function basis; with `nodal` measurements it spans V_h exactly.
BasisSet identity_basis(const FineSpace& space);

void compute_gram(BasisSet& basis, const FineSpace& space);

/// max_{i,j} |<phi_j, psi_i> - delta_ij| over all pairs.
double max_constraint_residual(const BasisSet& basis, const MeasurementSet& measurements);

struct DecayRow {
  int layer = 0;
  double l2 = 0.0;      // relative L2 localization error
  double energy = 0.0;  // relative energy-norm error (reported as H1)
  double linf = 0.0;
};

/// Localization error ratios ||psi_i - psi_i^l|| / ||psi_i|| for each layer.
std::vector<DecayRow> decay_profile(const FineSpace& space, VariationalForm form, const MeasurementSet& measurements,
                                    int i, const std::vector<int>& layers);

/// Same, with the global column already computed.
std::vector<DecayRow> decay_profile(const FineSpace& space, VariationalForm form, const MeasurementSet& measurements,
                                    int i, const std::vector<int>& layers, const Vector& global_column);

/// Binary cache: "GRPSBAS1", then uint32 N_H, form, kind, layer, fine node
/// count; per column uint32 nnz, uint32 indices[nnz], float64 values[nnz].
/// All little-endian.
void write_basis(const std::filesystem::path& path, const BasisSet& basis);
/// Recomputes the Gram matrix; throws llhom::Error on a malformed file or a
/// node-count mismatch with `space`.
BasisSet read_basis(const std::filesystem::path& path, const FineSpace& space);

std::uint64_t basis_hash(const BasisSet& basis);

}  // namespace llhom
