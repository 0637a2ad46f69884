#include "llhom/schemes.hpp"

#include <cmath>
#include <string>

#include "llhom/error.hpp"

#ifdef LLHOM_HAVE_UMFPACK
#include <Eigen/UmfPackSupport>
#endif

namespace llhom {

Scheme scheme_from_name(std::string_view name) {
  if (name == "cimrak") return Scheme::cimrak;
  if (name == "gao") return Scheme::gao;
  if (name == "an") return Scheme::an;
  throw Error("unknown scheme '" + std::string(name) + "' (expected cimrak, gao or an)");
}

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::cimrak: return "cimrak";
    case Scheme::gao: return "gao";
    case Scheme::an: return "an";
  }
  return "?";
}

void SchemeConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error("time step must be positive");
  if (!(damping > 0.0) || !std::isfinite(damping)) throw Error("damping must be positive");
}

namespace {

// (1/dt) M + B^n - (m^n x m_a^{n+1}, v), shared by every scheme.
void add_common(BlockAssembler& asmb, const SchemeConfig& cfg, const VectorField3& m_prev) {
  const double lam = cfg.damping;
  const double inv = 1.0 / cfg.dt;
  if (cfg.anisotropy) {
    asmb.add_mass({inv, inv + lam, inv + lam});
    asmb.add_anisotropy_cross(m_prev, 1.0);
  } else {
    asmb.add_mass({inv, inv, inv});
  }
  asmb.add_stiffness({lam, lam, lam});
  asmb.add_cross(m_prev, 1.0);
}

Vector nodal_dot(const VectorField3& a, const VectorField3& b) {
  return a[0].cwiseProduct(b[0]) + a[1].cwiseProduct(b[1]) + a[2].cwiseProduct(b[2]);
}

Vector base_rhs(const SchemeConfig& cfg, const FineSpace& space, const VectorField3& m_prev) {
  const int n = space.num_nodes();
  Vector rhs(3 * n);
  for (int c = 0; c < 3; ++c) rhs.segment(c * n, n) = (space.mass() * m_prev[c]) / cfg.dt;
  return rhs;
}

}  // namespace

SparseMatrix assemble_common_B(const FineSpace& space, double lambda, const VectorField3& m_prev, bool anisotropy) {
  BlockAssembler asmb(space);
  asmb.add_stiffness({lambda, lambda, lambda});
  if (anisotropy) asmb.add_mass({0.0, lambda, lambda});
  asmb.add_cross(m_prev, 1.0);
  return asmb.matrix();
}

SchemeSystem assemble_step(const SchemeConfig& cfg, const FineSpace& space, const VectorField3& m_prev, int step) {
  cfg.validate();
  if (m_prev.size() != space.num_nodes()) throw Error("assemble_step: field size does not match the mesh");
  BlockAssembler asmb(space);
  add_common(asmb, cfg, m_prev);
  SchemeSystem sys;
  sys.scheme = cfg.scheme;
  sys.step = step;
  sys.rhs = base_rhs(cfg, space, m_prev);
  const double lam = cfg.damping;

  switch (cfg.scheme) {
    case Scheme::cimrak: {
      const Vector s = nodal_dot(m_prev, discrete_effective_field(space, m_prev, cfg.anisotropy));
      asmb.add_reaction(&s, nullptr, lam);
      break;
    }
    case Scheme::gao: {
      const Vector s = nodal_dot(m_prev, discrete_effective_field(space, m_prev, cfg.anisotropy));
      BlockAssembler react(space);
      react.add_reaction(&s, nullptr, 1.0);
      sys.rhs -= lam * (react.matrix() * m_prev.stacked());
      break;
    }
    case Scheme::an: {
      if (cfg.anisotropy) {
        asmb.add_projection_coupling(m_prev, lam, -lam);
      } else {
        asmb.add_projection_coupling(m_prev, 0.0, -lam);
      }
      break;
    }
  }
  sys.matrix = asmb.matrix();
  return sys;
}

SchemeSystem assemble_step_substituted(const SchemeConfig& cfg, const FineSpace& space, const VectorField3& m_prev,
                                       const Vector& kappa_part, const Vector& plain_part, int step) {
  cfg.validate();
  BlockAssembler asmb(space);
  add_common(asmb, cfg, m_prev);
  asmb.add_reaction(&plain_part, &kappa_part, -cfg.damping);
  SchemeSystem sys;
  sys.scheme = Scheme::cimrak;
  sys.step = step;
  sys.rhs = base_rhs(cfg, space, m_prev);
  sys.matrix = asmb.matrix();
  return sys;
}

double unit_length_deviation(const FineSpace& space, const VectorField3& m) {
  const HierMesh& mesh = space.mesh();
  double total = 0.0;
  for (int t = 0; t < space.num_triangles(); ++t) {
    double acc = 0.0;
    for (int q = 0; q < 6; ++q) {
      double r2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double v = eval_p1(mesh, m[c], t, kRule6.points[q]);
        r2 += v * v;
      }
      acc += kRule6.weights[q] * (1.0 - r2) * (1.0 - r2);
    }
    total += space.area(t) * acc;
  }
  return std::sqrt(total);
}

VectorField3 normalize_nodes(const VectorField3& m) {
  VectorField3 out = m;
  for (int v = 0; v < m.size(); ++v) {
    const double r = std::sqrt(m[0][v] * m[0][v] + m[1][v] * m[1][v] + m[2][v] * m[2][v]);
    if (!(r > 0.0) || !std::isfinite(r)) throw Error("cannot normalize: zero magnitude at node " + std::to_string(v));
    for (int c = 0; c < 3; ++c) out[c][v] /= r;
  }
  return out;
}

struct FineSolver::Impl {
#ifdef LLHOM_HAVE_UMFPACK
  Eigen::UmfPackLU<SparseMatrix> lu;
  static std::string describe(const Eigen::UmfPackLU<SparseMatrix>& s) {
    return "umfpack status " + std::to_string(s.umfpackFactorizeReturncode());
  }
#else
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  static std::string describe(Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>& s) {
    return s.lastErrorMessage();
  }
#endif
  bool analyzed = false;
  long rows = -1;
};

FineSolver::FineSolver() : impl_(std::make_unique<Impl>()) {}
FineSolver::~FineSolver() = default;
FineSolver::FineSolver(FineSolver&&) noexcept = default;
FineSolver& FineSolver::operator=(FineSolver&&) noexcept = default;

Vector FineSolver::solve(const SchemeSystem& sys) {
  if (!impl_->analyzed || impl_->rows != sys.matrix.rows()) {
    impl_->lu.analyzePattern(sys.matrix);
    impl_->analyzed = true;
    impl_->rows = sys.matrix.rows();
  }
  impl_->lu.factorize(sys.matrix);
  if (impl_->lu.info() != Eigen::Success)
    throw SolveError("step " + std::to_string(sys.step) + ": factorization failed: " + Impl::describe(impl_->lu));
  Vector x = impl_->lu.solve(sys.rhs);
  const double scale = std::max(sys.rhs.norm(), 1e-300);
  const double residual = (sys.matrix * x - sys.rhs).norm() / scale;
  if (!x.allFinite() || residual > 1e-10)
    throw SolveError("step " + std::to_string(sys.step) + ": relative residual " + std::to_string(residual));
  return x;
}

VectorField3 step_fine(const SchemeConfig& cfg, const FineSpace& space, const VectorField3& m_prev, FineSolver& solver,
                       int step) {
  return VectorField3::from_stacked(solver.solve(assemble_step(cfg, space, m_prev, step)));
}

}  // namespace llhom
