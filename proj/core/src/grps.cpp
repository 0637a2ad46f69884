#include "llhom/grps.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>

#include "llhom/error.hpp"
#include "llhom/parallel.hpp"

namespace llhom {

MeasurementSet build_measurements(const HierMesh& mesh, MeasurementKind kind) {
  MeasurementSet set;
  set.kind = kind;
  const int n = mesh.num_fine_nodes();
  std::vector<Eigen::Triplet<double>> trips;

  switch (kind) {
    case MeasurementKind::volume: {
      for (int tau = 0; tau < mesh.num_coarse_triangles(); ++tau) {
        const auto& ct = mesh.coarse_triangles[tau];
        const double scale = std::sqrt(
            triangle_area(mesh.coarse_nodes[ct[0]], mesh.coarse_nodes[ct[1]], mesh.coarse_nodes[ct[2]]));
        for (int ft : mesh.child_map[tau]) {
          const auto& tri = mesh.fine_triangles[ft];
          const double a =
              triangle_area(mesh.fine_nodes[tri[0]], mesh.fine_nodes[tri[1]], mesh.fine_nodes[tri[2]]);
          for (int v : tri) trips.emplace_back(tau, v, scale * a / 3.0);
        }
        set.support.push_back(tau);
      }
      set.functionals.resize(mesh.num_coarse_triangles(), n);
      break;
    }
    case MeasurementKind::edge: {
      for (int e = 0; e < mesh.num_coarse_edges(); ++e) {
        for (int fe : mesh.coarse_edge_fine_edges[e]) {
          const auto [a, b] = mesh.fine_edges[fe];
          const Point2& pa = mesh.fine_nodes[a];
          const Point2& pb = mesh.fine_nodes[b];
          const double len = std::hypot(pb[0] - pa[0], pb[1] - pa[1]);
          trips.emplace_back(e, a, 0.5 * len);
          trips.emplace_back(e, b, 0.5 * len);
        }
        set.support.push_back(e);
      }
      set.functionals.resize(mesh.num_coarse_edges(), n);
      break;
    }
    case MeasurementKind::nodal: {
      for (int v = 0; v < n; ++v) {
        trips.emplace_back(v, v, 1.0);
        set.support.push_back(v);
      }
      set.functionals.resize(n, n);
      break;
    }
  }
  set.functionals.setFromTriplets(trips.begin(), trips.end());
  set.functionals.makeCompressed();
  return set;
}

SparseMatrix energy_matrix(const FineSpace& space, VariationalForm form) {
  switch (form) {
    case VariationalForm::v1:
      return space.stiffness();
    case VariationalForm::v2:
      return space.stiffness() + space.mass();
    case VariationalForm::identity:
      break;
  }
  throw Error("energy_matrix: identity basis has no energy form");
}

SparseMatrix BasisSet::matrix() const {
  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < size(); ++i)
    for (std::size_t k = 0; k < columns[i].index.size(); ++k)
      trips.emplace_back(columns[i].index[k], i, columns[i].value[k]);
  SparseMatrix m(num_fine_nodes, size());
  m.setFromTriplets(trips.begin(), trips.end());
  m.makeCompressed();
  return m;
}

Vector BasisSet::expand(const Vector& coefficients) const {
  Vector out = Vector::Zero(num_fine_nodes);
  for (int i = 0; i < size(); ++i) {
    const double c = coefficients[i];
    if (c == 0.0) continue;
    const auto& col = columns[i];
    for (std::size_t k = 0; k < col.index.size(); ++k) out[col.index[k]] += c * col.value[k];
  }
  return out;
}

Vector BasisSet::column_dense(int i) const {
  Vector out = Vector::Zero(num_fine_nodes);
  const auto& col = columns[i];
  for (std::size_t k = 0; k < col.index.size(); ++k) out[col.index[k]] = col.value[k];
  return out;
}

namespace {

// Factored saddle-point system of one patch.
struct LocalProblem {
  std::vector<int> free_nodes;
  std::vector<int> constraints;  // global measurement indices, ascending
  SparseMatrix kkt;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
};

std::string describe(const Patch& patch) {
  return "patch(center=" + std::to_string(patch.center) + ", layer=" + std::to_string(patch.layer) +
         ", elements=" + std::to_string(patch.coarse_elements.size()) + ")";
}

std::unique_ptr<LocalProblem> factor_local(const FineSpace& space, const SparseMatrix& energy,
                                           const MeasurementSet& measurements, const Patch& patch) {
  auto prob = std::make_unique<LocalProblem>();
  prob->free_nodes = patch.fine_interior_nodes;
  prob->constraints = measurements_in_patch(space.mesh(), patch);
  const int nf = static_cast<int>(prob->free_nodes.size());
  const int nc = static_cast<int>(prob->constraints.size());

  std::vector<int> local(space.num_nodes(), -1);
  for (int k = 0; k < nf; ++k) local[prob->free_nodes[k]] = k;

  std::vector<Eigen::Triplet<double>> trips;
  for (int k = 0; k < nf; ++k)
    for (SparseMatrix::InnerIterator it(energy, prob->free_nodes[k]); it; ++it)
      if (local[it.row()] >= 0) trips.emplace_back(local[it.row()], k, it.value());
  for (int c = 0; c < nc; ++c) {
    int seen = 0;
    for (RowSparseMatrix::InnerIterator it(measurements.functionals, prob->constraints[c]); it; ++it) {
      const int k = local[it.col()];
      if (k < 0) continue;
      trips.emplace_back(nf + c, k, it.value());
      trips.emplace_back(k, nf + c, it.value());
      ++seen;
    }
    if (seen == 0)
      throw SolveError("singular saddle system on " + describe(patch) + ": measurement " +
                       std::to_string(prob->constraints[c]) + " sees no free node");
  }
  prob->kkt.resize(nf + nc, nf + nc);
  prob->kkt.setFromTriplets(trips.begin(), trips.end());
  prob->kkt.makeCompressed();
  prob->lu.compute(prob->kkt);
  if (prob->lu.info() != Eigen::Success)
    throw SolveError("singular saddle system on " + describe(patch) + ": " + prob->lu.lastErrorMessage());
  return prob;
}

SparseColumn solve_local(const LocalProblem& prob, int i, const Patch& patch) {
  const auto it = std::lower_bound(prob.constraints.begin(), prob.constraints.end(), i);
  if (it == prob.constraints.end() || *it != i)
    throw SolveError("basis " + std::to_string(i) + " has no constraint inside " + describe(patch));
  const int nf = static_cast<int>(prob.free_nodes.size());
  Vector rhs = Vector::Zero(prob.kkt.rows());
  rhs[nf + (it - prob.constraints.begin())] = 1.0;
  const Vector x = prob.lu.solve(rhs);
  const double residual = (prob.kkt * x - rhs).norm();
  if (!x.allFinite() || residual > 1e-10)
    throw SolveError("saddle solve residual " + std::to_string(residual) + " on " + describe(patch));

  SparseColumn col;
  for (int k = 0; k < nf; ++k) {
    if (std::abs(x[k]) < kPruneThreshold) continue;
    col.index.push_back(prob.free_nodes[k]);
    col.value.push_back(x[k]);
  }
  return col;
}

}  // namespace

SparseColumn solve_basis(const FineSpace& space, VariationalForm form, const MeasurementSet& measurements, int i,
                         int layer) {
  if (measurements.kind == MeasurementKind::nodal) throw Error("solve_basis: nodal measurements use identity_basis");
  if (i < 0 || i >= measurements.count()) throw Error("solve_basis: measurement index out of range");
  const Patch patch = build_patch(space.mesh(), measurements.support[i], measurements.kind, layer);
  const SparseMatrix energy = energy_matrix(space, form);
  const auto prob = factor_local(space, energy, measurements, patch);
  return solve_local(*prob, i, patch);
}

BasisSet build_basis(const FineSpace& space, VariationalForm form, const MeasurementSet& measurements, int layer) {
  if (measurements.kind == MeasurementKind::nodal) return identity_basis(space);
  BasisSet basis;
  basis.form = form;
  basis.kind = measurements.kind;
  basis.layer = layer;
  basis.num_fine_nodes = space.num_nodes();
  basis.columns.resize(measurements.count());

  const SparseMatrix energy = energy_matrix(space, form);
  std::once_flag global_once;
  std::unique_ptr<LocalProblem> global;
  std::unique_ptr<Patch> global_patch;

  parallel_for(measurements.count(), [&](int i) {
    const Patch patch = build_patch(space.mesh(), measurements.support[i], measurements.kind, layer);
    if (patch.saturated) {
      std::call_once(global_once, [&] {
        global_patch = std::make_unique<Patch>(patch);
        global = factor_local(space, energy, measurements, patch);
      });
      basis.columns[i] = solve_local(*global, i, patch);
    } else {
      const auto prob = factor_local(space, energy, measurements, patch);
      basis.columns[i] = solve_local(*prob, i, patch);
    }
  });
  compute_gram(basis, space);
  return basis;
}

BasisSet identity_basis(const FineSpace& space) {
  BasisSet basis;
  basis.form = VariationalForm::identity;
  basis.kind = MeasurementKind::nodal;
  basis.layer = 0;
  basis.num_fine_nodes = space.num_nodes();
  basis.columns.resize(space.num_nodes());
  for (int v = 0; v < space.num_nodes(); ++v) basis.columns[v] = SparseColumn{{v}, {1.0}};
  compute_gram(basis, space);
  return basis;
}

void compute_gram(BasisSet& basis, const FineSpace& space) {
  if (basis.num_fine_nodes != space.num_nodes()) throw Error("compute_gram: basis and space mismatch");
  const SparseMatrix psi = basis.matrix();
  const SparseMatrix mpsi = space.mass() * psi;
  const Eigen::MatrixXd g = Eigen::MatrixXd(SparseMatrix(psi.transpose() * mpsi));
  basis.gram = 0.5 * (g + g.transpose());
}

double max_constraint_residual(const BasisSet& basis, const MeasurementSet& measurements) {
  if (basis.size() != measurements.count()) throw Error("max_constraint_residual: size mismatch");
  const SparseMatrix psi = basis.matrix();
  const Eigen::MatrixXd pairing = Eigen::MatrixXd(SparseMatrix(measurements.functionals * psi));
  return (pairing - Eigen::MatrixXd::Identity(pairing.rows(), pairing.cols())).cwiseAbs().maxCoeff();
}

std::vector<DecayRow> decay_profile(const FineSpace& space, VariationalForm form, const MeasurementSet& measurements,
                                    int i, const std::vector<int>& layers) {
  const SparseColumn global = solve_basis(space, form, measurements, i, saturation_layer(space.mesh()));
  Vector dense = Vector::Zero(space.num_nodes());
  for (std::size_t k = 0; k < global.index.size(); ++k) dense[global.index[k]] = global.value[k];
  return decay_profile(space, form, measurements, i, layers, dense);
}

std::vector<DecayRow> decay_profile(const FineSpace& space, VariationalForm form, const MeasurementSet& measurements,
                                    int i, const std::vector<int>& layers, const Vector& global_column) {
  const SparseMatrix energy = energy_matrix(space, form);
  const SparseMatrix& mass = space.mass();
  const double ref_l2 = std::sqrt(global_column.dot(mass * global_column));
  const double ref_en = std::sqrt(global_column.dot(energy * global_column));
  const double ref_inf = global_column.cwiseAbs().maxCoeff();

  std::vector<DecayRow> rows;
  for (int layer : layers) {
    const SparseColumn loc = solve_basis(space, form, measurements, i, layer);
    Vector diff = global_column;
    for (std::size_t k = 0; k < loc.index.size(); ++k) diff[loc.index[k]] -= loc.value[k];
    DecayRow row;
    row.layer = layer;
    row.l2 = std::sqrt(std::max(0.0, diff.dot(mass * diff))) / ref_l2;
    row.energy = std::sqrt(std::max(0.0, diff.dot(energy * diff))) / ref_en;
    row.linf = diff.cwiseAbs().maxCoeff() / ref_inf;
    rows.push_back(row);
  }
  return rows;
}

namespace {

static_assert(std::endian::native == std::endian::little, "cache IO assumes a little-endian host");

constexpr char kBasisMagic[8] = {'G', 'R', 'P', 'S', 'B', 'A', 'S', '1'};

template <class T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put(out, bits);
}

template <class T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error("basis cache: truncated file");
  return value;
}

double get_f64(std::istream& in) {
  const auto bits = get<std::uint64_t>(in);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

void write_basis(const std::filesystem::path& path, const BasisSet& basis) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write basis cache " + path.string());
  out.write(kBasisMagic, sizeof kBasisMagic);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(basis.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(basis.form));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(basis.kind));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(basis.layer));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(basis.num_fine_nodes));
  for (const auto& col : basis.columns) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(col.index.size()));
    for (int idx : col.index) put<std::uint32_t>(out, static_cast<std::uint32_t>(idx));
    for (double v : col.value) put_f64(out, v);
  }
  if (!out) throw Error("failed writing basis cache " + path.string());
}

BasisSet read_basis(const std::filesystem::path& path, const FineSpace& space) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open basis cache " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kBasisMagic, sizeof magic) != 0) throw Error("basis cache: bad magic");
  BasisSet basis;
  const auto count = get<std::uint32_t>(in);
  const auto form = get<std::uint32_t>(in);
  const auto kind = get<std::uint32_t>(in);
  if (form > 2 || kind > 2) throw Error("basis cache: bad form or measurement tag");
  basis.form = static_cast<VariationalForm>(form);
  basis.kind = static_cast<MeasurementKind>(kind);
  basis.layer = static_cast<int>(get<std::uint32_t>(in));
  basis.num_fine_nodes = static_cast<int>(get<std::uint32_t>(in));
  if (basis.num_fine_nodes != space.num_nodes())
    throw Error("basis cache: fine node count " + std::to_string(basis.num_fine_nodes) + " does not match mesh (" +
                std::to_string(space.num_nodes()) + ")");
  basis.columns.resize(count);
  for (auto& col : basis.columns) {
    const auto nnz = get<std::uint32_t>(in);
    if (nnz > static_cast<std::uint32_t>(basis.num_fine_nodes)) throw Error("basis cache: bad column size");
    col.index.resize(nnz);
    col.value.resize(nnz);
    for (auto& idx : col.index) {
      idx = static_cast<int>(get<std::uint32_t>(in));
      if (idx >= basis.num_fine_nodes) throw Error("basis cache: node index out of range");
    }
    for (auto& v : col.value) v = get_f64(in);
  }
  compute_gram(basis, space);
  return basis;
}

std::uint64_t basis_hash(const BasisSet& basis) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < n; ++k) {
      h ^= p[k];
      h *= 1099511628211ull;
    }
  };
  const std::uint32_t header[4] = {static_cast<std::uint32_t>(basis.form), static_cast<std::uint32_t>(basis.kind),
                                   static_cast<std::uint32_t>(basis.layer),
                                   static_cast<std::uint32_t>(basis.num_fine_nodes)};
  mix(header, sizeof header);
  for (const auto& col : basis.columns) {
    mix(col.index.data(), col.index.size() * sizeof(int));
    mix(col.value.data(), col.value.size() * sizeof(double));
  }
  return h;
}

}  // namespace llhom
