#include "llhom/ms_solver.hpp"

#include <Eigen/LU>
#include <cmath>
#include <string>

#include "llhom/error.hpp"

namespace llhom {

FormChoice form_choice_from_name(std::string_view name) {
  if (name == "mixed") return FormChoice::mixed;
  if (name == "v1") return FormChoice::v1;
  if (name == "v2") return FormChoice::v2;
  throw Error("unknown form '" + std::string(name) + "' (expected v1, v2 or mixed)");
}

std::string form_choice_name(FormChoice f) {
  switch (f) {
    case FormChoice::mixed: return "mixed";
    case FormChoice::v1: return "v1";
    case FormChoice::v2: return "v2";
  }
  return "?";
}

namespace {

SparseMatrix block_prolongation(const CoarseSpace& cs) {
  const int n = cs.fine->num_nodes();
  std::vector<Eigen::Triplet<double>> trips;
  for (int c = 0; c < 3; ++c) {
    const BasisSet& b = cs.basis(c);
    for (int i = 0; i < b.size(); ++i)
      for (std::size_t k = 0; k < b.columns[i].index.size(); ++k)
        trips.emplace_back(c * n + b.columns[i].index[k], cs.offset[c] + i, b.columns[i].value[k]);
  }
  SparseMatrix p(3 * n, cs.dim());
  p.setFromTriplets(trips.begin(), trips.end());
  p.makeCompressed();
  return p;
}

}  // namespace

CoarseSpace coarse_space_from_bases(const FineSpace& fine, MeasurementSet measurements,
                                    std::shared_ptr<const BasisSet> basis1, std::shared_ptr<const BasisSet> basis23) {
  if (!basis1 || !basis23) throw Error("coarse space needs two bases");
  if (basis1->size() != measurements.count() || basis23->size() != measurements.count())
    throw Error("coarse space: basis size does not match the measurement count");
  if (basis1->num_fine_nodes != fine.num_nodes() || basis23->num_fine_nodes != fine.num_nodes())
    throw Error("coarse space: basis built on another mesh");
  CoarseSpace cs;
  cs.fine = &fine;
  cs.measurements = std::move(measurements);
  cs.basis1 = std::move(basis1);
  cs.basis23 = std::move(basis23);
  int off = 0;
  for (int c = 0; c < 3; ++c) {
    cs.offset[c] = off;
    cs.dims[c] = cs.basis(c).size();
    off += cs.dims[c];
  }
  cs.prolongation = block_prolongation(cs);
  return cs;
}

CoarseSpace make_coarse_space(const FineSpace& fine, MeasurementKind kind, FormChoice choice, int layer) {
  MeasurementSet ms = build_measurements(fine.mesh(), kind);
  if (kind == MeasurementKind::nodal) {
    auto id = std::make_shared<const BasisSet>(identity_basis(fine));
    return coarse_space_from_bases(fine, std::move(ms), id, id);
  }
  switch (choice) {
    case FormChoice::v1: {
      auto b = std::make_shared<const BasisSet>(build_basis(fine, VariationalForm::v1, ms, layer));
      return coarse_space_from_bases(fine, std::move(ms), b, b);
    }
    case FormChoice::v2: {
      auto b = std::make_shared<const BasisSet>(build_basis(fine, VariationalForm::v2, ms, layer));
      return coarse_space_from_bases(fine, std::move(ms), b, b);
    }
    case FormChoice::mixed:
      break;
  }
  auto b1 = std::make_shared<const BasisSet>(build_basis(fine, VariationalForm::v1, ms, layer));
  auto b2 = std::make_shared<const BasisSet>(build_basis(fine, VariationalForm::v2, ms, layer));
  return coarse_space_from_bases(fine, std::move(ms), b1, b2);
}

CoarseSpace full_coarse_space(const FineSpace& fine) {
  return make_coarse_space(fine, MeasurementKind::nodal, FormChoice::v1, 0);
}

Vector CoarseState::stacked() const {
  Vector out(coefficients[0].size() + coefficients[1].size() + coefficients[2].size());
  out << coefficients[0], coefficients[1], coefficients[2];
  return out;
}

VectorField3 expand(const CoarseSpace& cs, const std::array<Vector, 3>& coefficients) {
  VectorField3 m;
  for (int c = 0; c < 3; ++c) m[c] = cs.basis(c).expand(coefficients[c]);
  return m;
}

const VectorField3& fine_trace(const CoarseSpace& cs, CoarseState& state) {
  if (state.fine_trace.size() == 0) state.fine_trace = expand(cs, state.coefficients);
  return state.fine_trace;
}

CoarseState interpolate_initial(const CoarseSpace& cs, const VectorField3& m0) {
  if (m0.size() != cs.fine->num_nodes()) throw Error("interpolate_initial: field size does not match the mesh");
  CoarseState st;
  for (int c = 0; c < 3; ++c) st.coefficients[c] = cs.measurements.apply(m0[c]);
  st.fine_trace = expand(cs, st.coefficients);
  return st;
}

namespace {

CoarseState state_from_stacked(const CoarseSpace& cs, const Vector& x, bool with_trace) {
  CoarseState st;
  for (int c = 0; c < 3; ++c) st.coefficients[c] = x.segment(cs.offset[c], cs.dims[c]);
  if (with_trace) st.fine_trace = expand(cs, st.coefficients);
  return st;
}

}  // namespace

CoarseSystem project_system(const CoarseSpace& cs, const SchemeSystem& sys) {
  const SparseMatrix& p = cs.prolongation;
  const SparseMatrix ap = sys.matrix * p;
  const SparseMatrix ptap = SparseMatrix(p.transpose()) * ap;
  CoarseSystem out;
  out.matrix = Eigen::MatrixXd(ptap);
  out.rhs = p.transpose() * sys.rhs;
  return out;
}

Vector solve_coarse(const CoarseSystem& sys, int step) {
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys.matrix);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-14))
    throw SolveError("coarse matrix singular at step " + std::to_string(step) + " (rcond " + std::to_string(rcond) +
                     ")");
  Vector x = lu.solve(sys.rhs);
  const double scale = std::max(sys.rhs.norm(), 1e-300);
  const double residual = (sys.matrix * x - sys.rhs).norm() / scale;
  if (!x.allFinite() || residual > 1e-10)
    throw SolveError("coarse solve at step " + std::to_string(step) + ": relative residual " +
                     std::to_string(residual));
  return x;
}

CoarseState step_coarse(const SchemeConfig& cfg, const CoarseSpace& cs, CoarseState& state, int step) {
  const SchemeSystem sys = assemble_step(cfg, *cs.fine, fine_trace(cs, state), step);
  return state_from_stacked(cs, solve_coarse(project_system(cs, sys), step), true);
}

CoarseState run_algorithm1(const SchemeConfig& cfg, const CoarseSpace& cs, const VectorField3& m0, int steps,
                           const StepObserver& observe) {
  if (steps < 0) throw Error("negative step count");
  CoarseState st = interpolate_initial(cs, m0);
  if (observe) observe(0, cs, st);
  for (int n = 0; n < steps; ++n) {
    st = step_coarse(cfg, cs, st, n);
    if (observe) observe(n + 1, cs, st);
  }
  return st;
}

void normalize_state(const CoarseSpace& cs, CoarseState& state) {
  const VectorField3 unit = normalize_nodes(fine_trace(cs, state));
  for (int c = 0; c < 3; ++c) state.coefficients[c] = cs.measurements.apply(unit[c]);
  state.fine_trace = unit;
}

CoarseState run_algorithm2(const SchemeConfig& cfg, const CoarseSpace& cs, const VectorField3& m0, int steps,
                           const StepObserver& observe) {
  if (steps < 0) throw Error("negative step count");
  CoarseState st = interpolate_initial(cs, m0);
  if (observe) observe(0, cs, st);
  for (int n = 0; n < steps; ++n) {
    normalize_state(cs, st);
    st = step_coarse(cfg, cs, st, n);
    if (observe) observe(n + 1, cs, st);
  }
  normalize_state(cs, st);
  return st;
}

VectorField3 run_reference(const SchemeConfig& cfg, const FineSpace& fine, const VectorField3& m0, int steps,
                           const FineObserver& observe) {
  if (steps < 0) throw Error("negative step count");
  FineSolver solver;
  VectorField3 m = m0;
  if (observe) observe(0, m);
  for (int n = 0; n < steps; ++n) {
    m = step_fine(cfg, fine, m, solver, n);
    if (cfg.scheme == Scheme::an) m = normalize_nodes(m);
    if (observe) observe(n + 1, m);
  }
  return m;
}

}  // namespace llhom
