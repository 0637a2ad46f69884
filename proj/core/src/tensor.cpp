#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#include "llhom/error.hpp"
#include "llhom/ms_solver.hpp"
#include "llhom/parallel.hpp"

namespace llhom {

long Tensor3::stored() const {
  long n = 0;
  for (const auto& s : slices) n += s.nonZeros();
  return n;
}

Eigen::MatrixXd Tensor3::contract_first(const Vector& w) const {
  if (w.size() != nx) throw Error("Tensor3::contract_first: size mismatch");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(ny, nz);
  for (int x = 0; x < nx; ++x) {
    const double wx = w[x];
    if (wx == 0.0) continue;
    const SparseMatrix& s = slices[x];
    for (int z = 0; z < s.outerSize(); ++z)
      for (SparseMatrix::InnerIterator it(s, z); it; ++it) out(it.row(), z) += wx * it.value();
  }
  return out;
}

Vector Tensor3::contract_pair(const Vector& a, const Vector& b) const {
  if (a.size() != ny || b.size() != nz) throw Error("Tensor3::contract_pair: size mismatch");
  Vector d(nx);
  for (int x = 0; x < nx; ++x) {
    const SparseMatrix& s = slices[x];
    double acc = 0.0;
    for (int z = 0; z < s.outerSize(); ++z) {
      double col = 0.0;
      for (SparseMatrix::InnerIterator it(s, z); it; ++it) col += a[it.row()] * it.value();
      acc += col * b[z];
    }
    d[x] = acc;
  }
  return d;
}

Eigen::MatrixXd Tensor3::contract_second(const Vector& w) const {
  if (w.size() != ny) throw Error("Tensor3::contract_second: size mismatch");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(nz, nx);
  for (int x = 0; x < nx; ++x) {
    const SparseMatrix& s = slices[x];
    for (int z = 0; z < s.outerSize(); ++z) {
      double col = 0.0;
      for (SparseMatrix::InnerIterator it(s, z); it; ++it) col += w[it.row()] * it.value();
      out(z, x) = col;
    }
  }
  return out;
}

namespace {

using RowMajorMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Nodal values of the bases active on one coarse element.
struct LocalBasis {
  std::vector<int> active;  // global basis indices
  Eigen::MatrixXd nodal;    // local node x active
};

LocalBasis gather(const RowMajorMatrix& rows, const std::vector<int>& nodes, std::vector<int>& scratch) {
  LocalBasis lb;
  for (int v : nodes)
    for (RowMajorMatrix::InnerIterator it(rows, v); it; ++it)
      if (scratch[it.col()] < 0) {
        scratch[it.col()] = static_cast<int>(lb.active.size());
        lb.active.push_back(it.col());
      }
  lb.nodal = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nodes.size()), static_cast<Eigen::Index>(lb.active.size()));
  for (std::size_t k = 0; k < nodes.size(); ++k)
    for (RowMajorMatrix::InnerIterator it(rows, nodes[k]); it; ++it)
      lb.nodal(static_cast<Eigen::Index>(k), scratch[it.col()]) = it.value();
  for (int a : lb.active) scratch[a] = -1;
  return lb;
}

bool kappa_weighted(TripleKind k) { return k == TripleKind::kappa_value3 || k == TripleKind::kappa_value_grad_grad; }
bool gradient_kind(TripleKind k) {
  return k == TripleKind::grad_grad_value || k == TripleKind::kappa_value_grad_grad;
}

}  // namespace

Tensor3 build_tensor(const FineSpace& fine, TripleKind kind, const BasisSet& bx, const BasisSet& by,
                     const BasisSet& bz) {
  const HierMesh& mesh = fine.mesh();
  for (const BasisSet* b : {&bx, &by, &bz})
    if (b->num_fine_nodes != fine.num_nodes()) throw Error("build_tensor: basis built on another mesh");

  Tensor3 t;
  t.nx = bx.size();
  t.ny = by.size();
  t.nz = bz.size();
  const RowMajorMatrix rx = RowMajorMatrix(bx.matrix());
  const RowMajorMatrix ry = RowMajorMatrix(by.matrix());
  const RowMajorMatrix rz = RowMajorMatrix(bz.matrix());
  const bool weighted = kappa_weighted(kind);
  const bool grad = gradient_kind(kind);

  // Dense accumulation over slabs of x to bound memory.
  const long slab_entries = 1L << 25;
  const long per_x = std::max<long>(1, static_cast<long>(t.ny) * t.nz);
  const int slab = static_cast<int>(std::clamp<long>(slab_entries / per_x, 1, std::max(1, t.nx)));
  t.slices.resize(t.nx);

  std::vector<int> scratch_x(t.nx, -1), scratch_y(t.ny, -1), scratch_z(t.nz, -1);
  std::vector<int> local_of(fine.num_nodes(), -1);

  for (int x0 = 0; x0 < t.nx; x0 += slab) {
    const int x1 = std::min(t.nx, x0 + slab);
    std::vector<double> acc(static_cast<std::size_t>(x1 - x0) * per_x, 0.0);

    for (int e = 0; e < mesh.num_coarse_triangles(); ++e) {
      const auto& children = mesh.child_map[e];
      std::vector<int> nodes;
      for (int ft : children)
        for (int v : mesh.fine_triangles[ft])
          if (local_of[v] < 0) {
            local_of[v] = static_cast<int>(nodes.size());
            nodes.push_back(v);
          }
      LocalBasis lx = gather(rx, nodes, scratch_x);
      // keep only x inside the current slab
      {
        std::vector<int> keep;
        for (std::size_t k = 0; k < lx.active.size(); ++k)
          if (lx.active[k] >= x0 && lx.active[k] < x1) keep.push_back(static_cast<int>(k));
        Eigen::MatrixXd nodal(lx.nodal.rows(), static_cast<Eigen::Index>(keep.size()));
        std::vector<int> act;
        for (std::size_t k = 0; k < keep.size(); ++k) {
          nodal.col(static_cast<Eigen::Index>(k)) = lx.nodal.col(keep[k]);
          act.push_back(lx.active[keep[k]]);
        }
        lx.nodal = std::move(nodal);
        lx.active = std::move(act);
      }
      if (lx.active.empty()) {
        for (int v : nodes) local_of[v] = -1;
        continue;
      }
      const LocalBasis ly = gather(ry, nodes, scratch_y);
      const LocalBasis lz = gather(rz, nodes, scratch_z);
      if (ly.active.empty() || lz.active.empty()) {
        for (int v : nodes) local_of[v] = -1;
        continue;
      }

      const int nt = static_cast<int>(children.size());
      const int rows_per = grad ? 2 : 6;
      const int r = nt * rows_per;
      Eigen::MatrixXd u(r, lx.active.size()), y(r, ly.active.size()), z(r, lz.active.size());
      for (int k = 0; k < nt; ++k) {
        const int ft = children[k];
        const auto& tri = mesh.fine_triangles[ft];
        const int l0 = local_of[tri[0]], l1 = local_of[tri[1]], l2 = local_of[tri[2]];
        const double area = fine.area(ft);
        if (grad) {
          const auto& g = fine.gradients(ft);
          Eigen::RowVectorXd ux = Eigen::RowVectorXd::Zero(lx.active.size());
          for (int q = 0; q < 6; ++q) {
            const auto& b = kRule6.points[q];
            double w = area * kRule6.weights[q];
            if (weighted) w *= fine.kappa6(ft, q);
            ux += w * (b[0] * lx.nodal.row(l0) + b[1] * lx.nodal.row(l1) + b[2] * lx.nodal.row(l2));
          }
          for (int d = 0; d < 2; ++d) {
            const int row = k * 2 + d;
            u.row(row) = ux;
            y.row(row) = g[0][d] * ly.nodal.row(l0) + g[1][d] * ly.nodal.row(l1) + g[2][d] * ly.nodal.row(l2);
            z.row(row) = g[0][d] * lz.nodal.row(l0) + g[1][d] * lz.nodal.row(l1) + g[2][d] * lz.nodal.row(l2);
          }
        } else {
          for (int q = 0; q < 6; ++q) {
            const auto& b = kRule6.points[q];
            double w = area * kRule6.weights[q];
            if (weighted) w *= fine.kappa6(ft, q);
            const int row = k * 6 + q;
            u.row(row) = w * (b[0] * lx.nodal.row(l0) + b[1] * lx.nodal.row(l1) + b[2] * lx.nodal.row(l2));
            y.row(row) = b[0] * ly.nodal.row(l0) + b[1] * ly.nodal.row(l1) + b[2] * ly.nodal.row(l2);
            z.row(row) = b[0] * lz.nodal.row(l0) + b[1] * lz.nodal.row(l1) + b[2] * lz.nodal.row(l2);
          }
        }
      }
      for (int v : nodes) local_of[v] = -1;

      const Eigen::MatrixXd yt = y.transpose();
      parallel_for(static_cast<int>(lx.active.size()), [&](int kx) {
        const Eigen::MatrixXd block = yt * (u.col(kx).asDiagonal() * z);
        double* base = acc.data() + static_cast<std::size_t>(lx.active[kx] - x0) * per_x;
        for (std::size_t jz = 0; jz < lz.active.size(); ++jz) {
          const int gz = lz.active[jz];
          for (std::size_t jy = 0; jy < ly.active.size(); ++jy)
            base[static_cast<long>(ly.active[jy]) * t.nz + gz] += block(static_cast<Eigen::Index>(jy),
                                                                        static_cast<Eigen::Index>(jz));
        }
      });
    }

    for (int x = x0; x < x1; ++x) {
      const double* base = acc.data() + static_cast<std::size_t>(x - x0) * per_x;
      std::vector<Eigen::Triplet<double>> trips;
      for (int yy = 0; yy < t.ny; ++yy)
        for (int zz = 0; zz < t.nz; ++zz) {
          const double v = base[static_cast<long>(yy) * t.nz + zz];
          if (v != 0.0) trips.emplace_back(yy, zz, v);
        }
      SparseMatrix s(t.ny, t.nz);
      s.setFromTriplets(trips.begin(), trips.end());
      s.makeCompressed();
      t.slices[x] = std::move(s);
    }
  }
  return t;
}

namespace {

Eigen::MatrixXd projected(const SparseMatrix& op, const BasisSet& b) {
  const SparseMatrix psi = b.matrix();
  const Eigen::MatrixXd m = Eigen::MatrixXd(SparseMatrix(SparseMatrix(psi.transpose()) * (op * psi)));
  return 0.5 * (m + m.transpose());
}

}  // namespace

TripleTensorSet precompute_tensors(const CoarseSpace& cs) {
  const FineSpace& fine = *cs.fine;
  TripleTensorSet ts;
  ts.shared = cs.shared_basis();
  ts.offset = cs.offset;
  ts.dims = cs.dims;
  const BasisSet& p = *cs.basis1;
  const int nb = ts.shared ? 1 : 2;
  for (int b = 0; b < nb; ++b) {
    const BasisSet& bb = b == 0 ? *cs.basis1 : *cs.basis23;
    ts.omega[b] = build_tensor(fine, TripleKind::grad_grad_value, p, bb, bb);
    ts.omega_bar[b] = build_tensor(fine, TripleKind::value3, p, bb, bb);
    ts.omega_bar_k[b] = build_tensor(fine, TripleKind::kappa_value3, p, bb, bb);
    ts.mass[b] = projected(fine.mass(), bb);
    ts.stiffness[b] = projected(fine.stiffness(), bb);
  }
  ts.cross_1_23 = build_tensor(fine, TripleKind::kappa_value_grad_grad, *cs.basis1, *cs.basis23, *cs.basis23);
  if (!ts.shared)
    ts.cross_23_1 = build_tensor(fine, TripleKind::kappa_value_grad_grad, *cs.basis23, *cs.basis1, *cs.basis23);
  ts.gram = p.gram;
  ts.gram_llt.compute(ts.gram);
  if (ts.gram_llt.info() != Eigen::Success) throw SolveError("Gram matrix is not positive definite");
  return ts;
}

Vector p_grps(const TripleTensorSet& tensors, const Vector& d) {
  if (d.size() != tensors.gram.rows()) throw Error("p_grps: load size does not match the projection basis");
  Vector rho = tensors.gram_llt.solve(d);
  if (!rho.allFinite()) throw SolveError("p_grps: Gram solve failed");
  return rho;
}

ProjectedDensities p_grps(const TripleTensorSet& tensors, const std::array<Vector, 3>& c) {
  ProjectedDensities out;
  const int np = static_cast<int>(tensors.gram.rows());
  out.d_grad = Vector::Zero(np);
  out.d_aniso = Vector::Zero(np);
  for (int comp = 0; comp < 3; ++comp) {
    const int b = tensors.basis_index(comp);
    out.d_grad += tensors.omega[b].contract_pair(c[comp], c[comp]);
    if (comp > 0) out.d_aniso += tensors.omega_bar[b].contract_pair(c[comp], c[comp]);
  }
  out.rho_grad = p_grps(tensors, out.d_grad);
  out.rho_aniso = p_grps(tensors, out.d_aniso);
  return out;
}

namespace {

// Levi-Civita symbol on 0-based indices.
int levi(int i, int j, int k) {
  if (i == j || j == k || i == k) return 0;
  return ((j - i + 3) % 3 == 1) ? 1 : -1;
}

// M[i, j] = sum_k c_k int kappa psi^c_k grad psi^b_j . grad psi^a_i
Eigen::MatrixXd cross_contraction(const TripleTensorSet& ts, int c, int b, int a, const Vector& cc) {
  if (ts.shared) return ts.cross_1_23.contract_first(cc).transpose();
  if (c == 0) return ts.cross_1_23.contract_first(cc).transpose();  // (B1; B23, B23)
  // c in {1,2}: one of a, b is component 0
  const Eigen::MatrixXd m = ts.cross_23_1.contract_first(cc);  // (j in B1, i in B23)
  return b == 0 ? Eigen::MatrixXd(m.transpose()) : m;
}

// M[i, j] = sum_k c_k int psi^c_k psi^b_j psi^a_i
Eigen::MatrixXd value_contraction(const TripleTensorSet& ts, int c, int b, int a, const Vector& cc) {
  const int bi = ts.basis_index(1);
  const Tensor3& t = ts.omega_bar[bi];  // (B1; B23, B23)
  if (ts.shared) return t.contract_first(cc).transpose();
  if (c == 0) return t.contract_first(cc).transpose();
  // k and one of (j, i) in B23, the other in B1
  const Eigen::MatrixXd m = t.contract_second(cc);  // (z in B23, x in B1)
  return a == 0 ? Eigen::MatrixXd(m.transpose()) : m;
}

}  // namespace

CoarseSystem accelerated_system(const SchemeConfig& cfg, const TripleTensorSet& ts, const std::array<Vector, 3>& c) {
  cfg.validate();
  if (cfg.scheme != Scheme::cimrak) throw Error("accelerated step is only defined for the Cimrak scheme");
  const int dim = ts.offset[2] + ts.dims[2];
  const double lam = cfg.damping;
  const double inv = 1.0 / cfg.dt;
  CoarseSystem sys;
  sys.matrix = Eigen::MatrixXd::Zero(dim, dim);
  sys.rhs = Vector::Zero(dim);
  const ProjectedDensities pd = p_grps(ts, c);

  for (int a = 0; a < 3; ++a) {
    const int b = ts.basis_index(a);
    auto blk = sys.matrix.block(ts.offset[a], ts.offset[a], ts.dims[a], ts.dims[a]);
    double mass_coef = inv;
    if (cfg.anisotropy && a > 0) mass_coef += lam;
    blk += mass_coef * ts.mass[b] + lam * ts.stiffness[b];
    blk -= lam * ts.omega_bar_k[b].contract_first(pd.rho_grad);
    if (cfg.anisotropy) blk -= lam * ts.omega_bar[b].contract_first(pd.rho_aniso);
    sys.rhs.segment(ts.offset[a], ts.dims[a]) = inv * (ts.mass[b] * c[a]);
  }
  for (int a = 0; a < 3; ++a)
    for (int bcol = 0; bcol < 3; ++bcol) {
      if (a == bcol) continue;
      auto blk = sys.matrix.block(ts.offset[a], ts.offset[bcol], ts.dims[a], ts.dims[bcol]);
      for (int cc = 0; cc < 3; ++cc) {
        const int e = levi(cc, bcol, a);
        if (e == 0) continue;
        blk -= e * cross_contraction(ts, cc, bcol, a, c[cc]);
        if (cfg.anisotropy && bcol > 0) blk -= e * value_contraction(ts, cc, bcol, a, c[cc]);
      }
    }
  return sys;
}

CoarseSystem substituted_baseline_system(const SchemeConfig& cfg, const CoarseSpace& cs, CoarseState& state) {
  const FineSpace& fine = *cs.fine;
  const VectorField3& m = fine_trace(cs, state);
  const BasisSet& p = *cs.basis1;
  const SparseMatrix psi = p.matrix();
  const Eigen::LLT<Eigen::MatrixXd> llt(p.gram);
  const Vector g1 = psi * Vector(llt.solve(psi.transpose() * gradient_energy_load(fine, m)));
  Vector g2 = Vector::Zero(fine.num_nodes());
  if (cfg.anisotropy) g2 = psi * Vector(llt.solve(psi.transpose() * anisotropy_energy_load(fine, m)));
  return project_system(cs, assemble_step_substituted(cfg, fine, m, g1, g2));
}

CoarseState step_coarse_accelerated(const SchemeConfig& cfg, const TripleTensorSet& ts, const CoarseState& state,
                                    int step) {
  const Vector x = solve_coarse(accelerated_system(cfg, ts, state.coefficients), step);
  CoarseState out;
  for (int c = 0; c < 3; ++c) out.coefficients[c] = x.segment(ts.offset[c], ts.dims[c]);
  return out;
}

CoarseState run_accelerated(const SchemeConfig& cfg, const CoarseSpace& cs, const TripleTensorSet& ts,
                            const VectorField3& m0, int steps, const StepObserver& observe) {
  if (steps < 0) throw Error("negative step count");
  CoarseState st = interpolate_initial(cs, m0);
  if (observe) observe(0, cs, st);
  for (int n = 0; n < steps; ++n) {
    st = step_coarse_accelerated(cfg, ts, st, n);
    if (observe) observe(n + 1, cs, st);
  }
  return st;
}

// ---------------------------------------------------------------------------
// Cache file: "LLTENS01", key, then the set. Little-endian.

namespace {

static_assert(std::endian::native == std::endian::little, "cache IO assumes a little-endian host");
constexpr char kTensorMagic[8] = {'L', 'L', 'T', 'E', 'N', 'S', '0', '1'};

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("tensor cache: truncated file");
  return v;
}

void put_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}
Eigen::MatrixXd get_matrix(std::istream& in) {
  const auto r = get<std::uint32_t>(in), c = get<std::uint32_t>(in);
  if (static_cast<std::uint64_t>(r) * c > (1ull << 30)) throw Error("tensor cache: implausible matrix size");
  Eigen::MatrixXd m(r, c);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in) throw Error("tensor cache: truncated file");
  return m;
}

void put_tensor(std::ostream& out, const Tensor3& t) {
  put<std::uint32_t>(out, t.nx);
  put<std::uint32_t>(out, t.ny);
  put<std::uint32_t>(out, t.nz);
  for (const auto& s : t.slices) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.nonZeros()));
    out.write(reinterpret_cast<const char*>(s.outerIndexPtr()), sizeof(int) * (s.outerSize() + 1));
    out.write(reinterpret_cast<const char*>(s.innerIndexPtr()), sizeof(int) * s.nonZeros());
    out.write(reinterpret_cast<const char*>(s.valuePtr()), sizeof(double) * s.nonZeros());
  }
}
Tensor3 get_tensor(std::istream& in) {
  Tensor3 t;
  t.nx = static_cast<int>(get<std::uint32_t>(in));
  t.ny = static_cast<int>(get<std::uint32_t>(in));
  t.nz = static_cast<int>(get<std::uint32_t>(in));
  if (t.nx > (1 << 20) || t.ny > (1 << 20) || t.nz > (1 << 20)) throw Error("tensor cache: implausible tensor size");
  t.slices.resize(t.nx);
  for (auto& s : t.slices) {
    const auto nnz = get<std::uint32_t>(in);
    if (static_cast<std::uint64_t>(nnz) > static_cast<std::uint64_t>(t.ny) * t.nz)
      throw Error("tensor cache: bad slice");
    std::vector<int> outer(t.nz + 1), inner(nnz);
    std::vector<double> values(nnz);
    in.read(reinterpret_cast<char*>(outer.data()), sizeof(int) * outer.size());
    in.read(reinterpret_cast<char*>(inner.data()), sizeof(int) * inner.size());
    in.read(reinterpret_cast<char*>(values.data()), sizeof(double) * values.size());
    if (!in) throw Error("tensor cache: truncated file");
    if (outer.front() != 0 || outer.back() != static_cast<int>(nnz)) throw Error("tensor cache: bad slice");
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(nnz);
    for (int z = 0; z < t.nz; ++z) {
      if (outer[z] > outer[z + 1]) throw Error("tensor cache: bad slice");
      for (int k = outer[z]; k < outer[z + 1]; ++k) {
        if (inner[k] < 0 || inner[k] >= t.ny) throw Error("tensor cache: bad slice");
        trips.emplace_back(inner[k], z, values[k]);
      }
    }
    s.resize(t.ny, t.nz);
    s.setFromTriplets(trips.begin(), trips.end());
    s.makeCompressed();
  }
  return t;
}

}  // namespace

std::string tensor_cache_key(const CoarseSpace& cs) {
  const HierMesh& m = cs.fine->mesh();
  char buf[64];
  std::string key = "nc=" + std::to_string(m.coarse_divisions) + ";J=" + std::to_string(m.refinement_levels) +
                    ";kappa=" + cs.fine->kappa().name;
  std::snprintf(buf, sizeof buf, ";b1=%016llx", static_cast<unsigned long long>(basis_hash(*cs.basis1)));
  key += buf;
  std::snprintf(buf, sizeof buf, ";b23=%016llx", static_cast<unsigned long long>(basis_hash(*cs.basis23)));
  key += buf;
  return key;
}

void write_tensors(const std::filesystem::path& path, const TripleTensorSet& ts, const std::string& key) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write tensor cache " + path.string());
  out.write(kTensorMagic, sizeof kTensorMagic);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(key.size()));
  out.write(key.data(), static_cast<std::streamsize>(key.size()));
  put<std::uint32_t>(out, ts.shared ? 1u : 0u);
  for (int c = 0; c < 3; ++c) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ts.offset[c]));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ts.dims[c]));
  }
  put_matrix(out, ts.gram);
  const int nb = ts.shared ? 1 : 2;
  for (int b = 0; b < nb; ++b) {
    put_matrix(out, ts.mass[b]);
    put_matrix(out, ts.stiffness[b]);
    put_tensor(out, ts.omega[b]);
    put_tensor(out, ts.omega_bar[b]);
    put_tensor(out, ts.omega_bar_k[b]);
  }
  put_tensor(out, ts.cross_1_23);
  if (!ts.shared) put_tensor(out, ts.cross_23_1);
  if (!out) throw Error("failed writing tensor cache " + path.string());
}

TripleTensorSet read_tensors(const std::filesystem::path& path, const std::string& key) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open tensor cache " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kTensorMagic, sizeof magic) != 0) throw Error("tensor cache: bad magic");
  const auto klen = get<std::uint32_t>(in);
  if (klen > 4096) throw Error("tensor cache: bad key");
  std::string stored(klen, '\0');
  in.read(stored.data(), klen);
  if (!in) throw Error("tensor cache: truncated file");
  if (stored != key) throw Error("tensor cache key mismatch: file has '" + stored + "'");
  TripleTensorSet ts;
  ts.shared = get<std::uint32_t>(in) != 0;
  for (int c = 0; c < 3; ++c) {
    ts.offset[c] = static_cast<int>(get<std::uint32_t>(in));
    ts.dims[c] = static_cast<int>(get<std::uint32_t>(in));
  }
  ts.gram = get_matrix(in);
  const int nb = ts.shared ? 1 : 2;
  for (int b = 0; b < nb; ++b) {
    ts.mass[b] = get_matrix(in);
    ts.stiffness[b] = get_matrix(in);
    ts.omega[b] = get_tensor(in);
    ts.omega_bar[b] = get_tensor(in);
    ts.omega_bar_k[b] = get_tensor(in);
  }
  ts.cross_1_23 = get_tensor(in);
  if (!ts.shared) ts.cross_23_1 = get_tensor(in);
  ts.gram_llt.compute(ts.gram);
  if (ts.gram_llt.info() != Eigen::Success) throw Error("tensor cache: Gram matrix is not positive definite");
  return ts;
}

void write_trajectory_csv(const std::filesystem::path& path, const HierMesh& mesh, const VectorField3& m) {
  if (m.size() != mesh.num_fine_nodes()) throw Error("trajectory: field size does not match the mesh");
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.imbue(std::locale::classic());
  out.precision(17);
  out << "node,x,y,m1,m2,m3\n";
  for (int v = 0; v < m.size(); ++v)
    out << v << ',' << mesh.fine_nodes[v][0] << ',' << mesh.fine_nodes[v][1] << ',' << m[0][v] << ',' << m[1][v]
        << ',' << m[2][v] << '\n';
}

}  // namespace llhom
