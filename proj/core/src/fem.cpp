#include "llhom/fem.hpp"

#include <algorithm>
#include <string>

#include "llhom/error.hpp"

namespace llhom {

namespace {

// (u x e_b)_a for basis vector e_b.
inline double cross_with_unit(const Eigen::Vector3d& u, int b, int a) {
  return u.cross(Eigen::Vector3d::Unit(b))[a];
}

int find_slot(const SparseMatrix& pattern, int row, int col) {
  const int begin = pattern.outerIndexPtr()[col];
  const int end = pattern.outerIndexPtr()[col + 1];
  const int* inner = pattern.innerIndexPtr();
  const int* it = std::lower_bound(inner + begin, inner + end, row);
  if (it == inner + end || *it != row) throw Error("internal: missing sparsity slot");
  return static_cast<int>(it - inner);
}

constexpr double kMassLocal[3][3] = {{2, 1, 1}, {1, 2, 1}, {1, 1, 2}};

}  // namespace

VectorField3 VectorField3::constant(int num_nodes, const std::array<double, 3>& value) {
  VectorField3 f;
  for (int c = 0; c < 3; ++c) f.comp[c] = Vector::Constant(num_nodes, value[c]);
  return f;
}

Vector VectorField3::stacked() const {
  const int n = size();
  Vector v(3 * n);
  for (int c = 0; c < 3; ++c) v.segment(c * n, n) = comp[c];
  return v;
}

VectorField3 VectorField3::from_stacked(const Vector& v) {
  const int n = static_cast<int>(v.size() / 3);
  VectorField3 f;
  for (int c = 0; c < 3; ++c) f.comp[c] = v.segment(c * n, n);
  return f;
}

FineSpace::FineSpace(const HierMesh& mesh, const CoefficientField& kappa) : mesh_(&mesh), kappa_(kappa) {
  const int nt = mesh.num_fine_triangles();
  const int n = mesh.num_fine_nodes();
  area_.resize(nt);
  grad_.resize(nt);
  kappa3_.resize(3 * static_cast<std::size_t>(nt));
  kappa6_.resize(6 * static_cast<std::size_t>(nt));

  for (int t = 0; t < nt; ++t) {
    const auto& tri = mesh.fine_triangles[t];
    const Point2& p0 = mesh.fine_nodes[tri[0]];
    const Point2& p1 = mesh.fine_nodes[tri[1]];
    const Point2& p2 = mesh.fine_nodes[tri[2]];
    const double a = triangle_area(p0, p1, p2);
    if (!(a > 0.0)) throw Error("FineSpace: degenerate or clockwise triangle " + std::to_string(t));
    area_[t] = a;
    const double inv = 1.0 / (2.0 * a);
    grad_[t][0] = Eigen::Vector2d(p1[1] - p2[1], p2[0] - p1[0]) * inv;
    grad_[t][1] = Eigen::Vector2d(p2[1] - p0[1], p0[0] - p2[0]) * inv;
    grad_[t][2] = Eigen::Vector2d(p0[1] - p1[1], p1[0] - p0[0]) * inv;

    auto sample = [&](const std::array<double, 3>& bary) {
      const double x = bary[0] * p0[0] + bary[1] * p1[0] + bary[2] * p2[0];
      const double y = bary[0] * p0[1] + bary[1] * p1[1] + bary[2] * p2[1];
      const double k = kappa_(x, y);
      if (!kappa_.within_bounds(k))
        throw Error("kappa sample " + std::to_string(k) + " outside declared bounds [" +
                    std::to_string(kappa_.kappa_min) + ", " + std::to_string(kappa_.kappa_max) + "]");
      return k;
    };
    for (int q = 0; q < 3; ++q) kappa3_[3 * t + q] = sample(kRule3.points[q]);
    for (int q = 0; q < 6; ++q) kappa6_[6 * t + q] = sample(kRule6.points[q]);
  }

  // Scalar pattern and slots.
  {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(9 * static_cast<std::size_t>(nt));
    for (const auto& tri : mesh.fine_triangles)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) trips.emplace_back(tri[i], tri[j], 0.0);
    scalar_pattern_.resize(n, n);
    scalar_pattern_.setFromTriplets(trips.begin(), trips.end());
    scalar_pattern_.makeCompressed();
    scalar_slot_.resize(9 * static_cast<std::size_t>(nt));
    for (int t = 0; t < nt; ++t) {
      const auto& tri = mesh.fine_triangles[t];
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) scalar_slot_[9 * t + 3 * i + j] = find_slot(scalar_pattern_, tri[i], tri[j]);
    }
  }
  // Block pattern: each scalar entry replicated over the 3x3 component blocks.
  {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(9 * static_cast<std::size_t>(scalar_pattern_.nonZeros()));
    for (int col = 0; col < n; ++col)
      for (SparseMatrix::InnerIterator it(scalar_pattern_, col); it; ++it)
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) trips.emplace_back(a * n + it.row(), b * n + col, 0.0);
    block_pattern_.resize(3 * n, 3 * n);
    block_pattern_.setFromTriplets(trips.begin(), trips.end());
    block_pattern_.makeCompressed();
    block_slot_.resize(81 * static_cast<std::size_t>(nt));
    for (int t = 0; t < nt; ++t) {
      const auto& tri = mesh.fine_triangles[t];
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
              block_slot_[81 * t + 27 * a + 9 * b + 3 * i + j] =
                  find_slot(block_pattern_, a * n + tri[i], b * n + tri[j]);
    }
  }

  // Static scalar operators.
  stiffness_ = scalar_pattern_;
  unit_stiffness_ = scalar_pattern_;
  mass_ = scalar_pattern_;
  double* ks = stiffness_.valuePtr();
  double* us = unit_stiffness_.valuePtr();
  double* ms = mass_.valuePtr();
  lumped_ = Vector::Zero(n);
  for (int t = 0; t < nt; ++t) {
    const double a = area_[t];
    const double kbar = kappa_mean3(t);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const int s = scalar_slot(t, i, j);
        const double g = grad_[t][i].dot(grad_[t][j]) * a;
        us[s] += g;
        ks[s] += kbar * g;
        ms[s] += a * kMassLocal[i][j] / 12.0;
      }
      lumped_[mesh.fine_triangles[t][i]] += a / 3.0;
    }
  }
}

BlockAssembler::BlockAssembler(const FineSpace& space)
    : space_(&space), values_(static_cast<std::size_t>(space.block_pattern().nonZeros()), 0.0) {}

void BlockAssembler::add_mass(const std::array<double, 3>& coef) {
  const FineSpace& s = *space_;
  for (int t = 0; t < s.num_triangles(); ++t) {
    const double a = s.area(t) / 12.0;
    for (int c = 0; c < 3; ++c) {
      if (coef[c] == 0.0) continue;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) values_[s.block_slot(t, c, c, i, j)] += coef[c] * a * kMassLocal[i][j];
    }
  }
}

void BlockAssembler::add_stiffness(const std::array<double, 3>& coef) {
  const FineSpace& s = *space_;
  for (int t = 0; t < s.num_triangles(); ++t) {
    const double w = s.area(t) * s.kappa_mean3(t);
    const auto& g = s.gradients(t);
    for (int c = 0; c < 3; ++c) {
      if (coef[c] == 0.0) continue;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) values_[s.block_slot(t, c, c, i, j)] += coef[c] * w * g[i].dot(g[j]);
    }
  }
}

void BlockAssembler::add_cross(const VectorField3& m, double scale) {
  const FineSpace& s = *space_;
  const HierMesh& mesh = s.mesh();
  for (int t = 0; t < s.num_triangles(); ++t) {
    Eigen::Vector3d km = Eigen::Vector3d::Zero();
    for (int q = 0; q < 6; ++q) {
      const double w = kRule6.weights[q] * s.kappa6(t, q);
      for (int c = 0; c < 3; ++c) km[c] += w * eval_p1(mesh, m[c], t, kRule6.points[q]);
    }
    km *= s.area(t);
    const auto& g = s.gradients(t);
    for (int b = 0; b < 3; ++b) {
      const Eigen::Vector3d col = km.cross(Eigen::Vector3d::Unit(b));
      for (int a = 0; a < 3; ++a) {
        if (col[a] == 0.0) continue;
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) values_[s.block_slot(t, a, b, i, j)] -= scale * col[a] * g[j].dot(g[i]);
      }
    }
  }
}

void BlockAssembler::add_anisotropy_cross(const VectorField3& m, double scale) {
  const FineSpace& s = *space_;
  const HierMesh& mesh = s.mesh();
  for (int t = 0; t < s.num_triangles(); ++t) {
    // W[c][i][j] = int m_c phi_i phi_j
    double w_loc[3][3][3] = {};
    for (int q = 0; q < 6; ++q) {
      const auto& bary = kRule6.points[q];
      const double w = kRule6.weights[q] * s.area(t);
      for (int c = 0; c < 3; ++c) {
        const double mc = w * eval_p1(mesh, m[c], t, bary);
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) w_loc[c][i][j] += mc * bary[i] * bary[j];
      }
    }
    for (int b = 1; b < 3; ++b) {
      for (int a = 0; a < 3; ++a) {
        for (int c = 0; c < 3; ++c) {
          const double e = cross_with_unit(Eigen::Vector3d::Unit(c), b, a);
          if (e == 0.0) continue;
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) values_[s.block_slot(t, a, b, i, j)] -= scale * e * w_loc[c][i][j];
        }
      }
    }
  }
}

void BlockAssembler::add_reaction(const Vector* plain, const Vector* kappa_weighted, double scale) {
  if (plain == nullptr && kappa_weighted == nullptr) return;
  const FineSpace& s = *space_;
  const HierMesh& mesh = s.mesh();
  for (int t = 0; t < s.num_triangles(); ++t) {
    double r[3][3] = {};
    for (int q = 0; q < 6; ++q) {
      const auto& bary = kRule6.points[q];
      double val = 0.0;
      if (plain) val += eval_p1(mesh, *plain, t, bary);
      if (kappa_weighted) val += s.kappa6(t, q) * eval_p1(mesh, *kappa_weighted, t, bary);
      val *= kRule6.weights[q] * s.area(t);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r[i][j] += val * bary[i] * bary[j];
    }
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) values_[s.block_slot(t, c, c, i, j)] += scale * r[i][j];
  }
}

void BlockAssembler::add_projection_coupling(const VectorField3& m, double lambda, double scale) {
  const FineSpace& s = *space_;
  const HierMesh& mesh = s.mesh();
  for (int t = 0; t < s.num_triangles(); ++t) {
    const auto& tri = mesh.fine_triangles[t];
    const auto& g = s.gradients(t);
    std::array<Eigen::Vector2d, 3> gm;
    for (int c = 0; c < 3; ++c) gm[c] = m[c][tri[0]] * g[0] + m[c][tri[1]] * g[1] + m[c][tri[2]] * g[2];

    // km[a][i] = int kappa m_a phi_i ; mm[a][b][i][j] = int m_a m_b phi_i phi_j
    double km[3][3] = {};
    double mm[3][3][3][3] = {};
    for (int q = 0; q < 6; ++q) {
      const auto& bary = kRule6.points[q];
      const double w = kRule6.weights[q] * s.area(t);
      double mq[3];
      for (int c = 0; c < 3; ++c) mq[c] = eval_p1(mesh, m[c], t, bary);
      for (int a = 0; a < 3; ++a) {
        for (int i = 0; i < 3; ++i) km[a][i] += w * s.kappa6(t, q) * mq[a] * bary[i];
        for (int b = 1; b < 3; ++b)
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) mm[a][b][i][j] += w * mq[a] * mq[b] * bary[i] * bary[j];
      }
    }
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        for (int i = 0; i < 3; ++i) {
          for (int j = 0; j < 3; ++j) {
            double v = g[j].dot(gm[b]) * km[a][i];
            if (b >= 1) v += lambda * mm[a][b][i][j];
            values_[s.block_slot(t, a, b, i, j)] += scale * v;
          }
        }
      }
    }
  }
}

SparseMatrix BlockAssembler::matrix() const {
  SparseMatrix out = space_->block_pattern();
  std::copy(values_.begin(), values_.end(), out.valuePtr());
  return out;
}

SparseMatrix assemble_stiffness(const FineSpace& space) { return space.stiffness(); }

SparseMatrix assemble_mass(const FineSpace& space, bool lumped) {
  if (!lumped) return space.mass();
  const int n = space.num_nodes();
  SparseMatrix d(n, n);
  d.reserve(Eigen::VectorXi::Constant(n, 1));
  for (int i = 0; i < n; ++i) d.insert(i, i) = space.lumped_mass()[i];
  d.makeCompressed();
  return d;
}

SparseMatrix assemble_cross_term(const FineSpace& space, const VectorField3& m_prev) {
  BlockAssembler asmb(space);
  asmb.add_cross(m_prev, 1.0);
  return asmb.matrix();
}

SparseMatrix assemble_anisotropy_mass(const FineSpace& space) {
  BlockAssembler asmb(space);
  asmb.add_mass({0.0, 1.0, 1.0});
  return asmb.matrix();
}

VectorField3 discrete_effective_field(const FineSpace& space, const VectorField3& m, bool anisotropy) {
  VectorField3 h;
  const Vector& ml = space.lumped_mass();
  for (int c = 0; c < 3; ++c) {
    Vector r = space.stiffness() * m[c];
    if (anisotropy && c > 0) r += space.mass() * m[c];
    h.comp[c] = -r.cwiseQuotient(ml);
  }
  return h;
}

double ll_energy(const FineSpace& space, const VectorField3& m) {
  const HierMesh& mesh = space.mesh();
  double total = 0.0;
  for (int t = 0; t < space.num_triangles(); ++t) {
    const auto& tri = mesh.fine_triangles[t];
    const auto& g = space.gradients(t);
    double grad2 = 0.0;
    for (int c = 0; c < 3; ++c) {
      const Eigen::Vector2d gc = m[c][tri[0]] * g[0] + m[c][tri[1]] * g[1] + m[c][tri[2]] * g[2];
      grad2 += gc.squaredNorm();
    }
    double kint = 0.0, aniso = 0.0;
    for (int q = 0; q < 6; ++q) {
      const double m2 = eval_p1(mesh, m[1], t, kRule6.points[q]);
      const double m3 = eval_p1(mesh, m[2], t, kRule6.points[q]);
      kint += kRule6.weights[q] * space.kappa6(t, q);
      aniso += kRule6.weights[q] * (m2 * m2 + m3 * m3);
    }
    total += space.area(t) * (kint * grad2 + aniso);
  }
  return 0.5 * total;
}

Vector load_vector(const FineSpace& space, const Vector& g, bool kappa_weighted) {
  const HierMesh& mesh = space.mesh();
  Vector b = Vector::Zero(space.num_nodes());
  for (int t = 0; t < space.num_triangles(); ++t) {
    const auto& tri = mesh.fine_triangles[t];
    for (int q = 0; q < 6; ++q) {
      const auto& bary = kRule6.points[q];
      double val = kRule6.weights[q] * space.area(t) * eval_p1(mesh, g, t, bary);
      if (kappa_weighted) val *= space.kappa6(t, q);
      for (int i = 0; i < 3; ++i) b[tri[i]] += val * bary[i];
    }
  }
  return b;
}

Vector gradient_energy_load(const FineSpace& space, const VectorField3& m) {
  const HierMesh& mesh = space.mesh();
  Vector b = Vector::Zero(space.num_nodes());
  for (int t = 0; t < space.num_triangles(); ++t) {
    const auto& tri = mesh.fine_triangles[t];
    const auto& g = space.gradients(t);
    double grad2 = 0.0;
    for (int c = 0; c < 3; ++c)
      grad2 += (m[c][tri[0]] * g[0] + m[c][tri[1]] * g[1] + m[c][tri[2]] * g[2]).squaredNorm();
    const double share = grad2 * space.area(t) / 3.0;
    for (int i = 0; i < 3; ++i) b[tri[i]] += share;
  }
  return b;
}

Vector anisotropy_energy_load(const FineSpace& space, const VectorField3& m) {
  const HierMesh& mesh = space.mesh();
  Vector b = Vector::Zero(space.num_nodes());
  for (int t = 0; t < space.num_triangles(); ++t) {
    const auto& tri = mesh.fine_triangles[t];
    for (int q = 0; q < 6; ++q) {
      const auto& bary = kRule6.points[q];
      const double m2 = eval_p1(mesh, m[1], t, bary);
      const double m3 = eval_p1(mesh, m[2], t, bary);
      const double val = kRule6.weights[q] * space.area(t) * (m2 * m2 + m3 * m3);
      for (int i = 0; i < 3; ++i) b[tri[i]] += val * bary[i];
    }
  }
  return b;
}

}  // namespace llhom
