// End-to-end acceptance checks; one PASS/FAIL line per criterion.
// Usage: acceptance [--out DIR] [--only 1,2,...]

#include <cmath>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>

#include "llhom/error.hpp"
#include "llhom/harness.hpp"

using namespace llhom;

namespace {

// Tolerances and windows.
constexpr double kConstraintTol = 1e-9;
constexpr double kDecayPerLayer = 0.15;
constexpr double kDecayFraction = 0.90;
constexpr double kFullSpaceTol = 1e-9;
constexpr double kRateV_H2[2] = {-1.25, -0.75};
constexpr double kRateV_H[2] = {-0.70, -0.30};
constexpr double kRateE_H[2] = {-0.70, -0.30};
constexpr double kLengthPreservingShift = 0.2;
constexpr double kDeviationFactor[2] = {2.5, 6.0};
constexpr double kAcceleratedH1 = 0.05;
constexpr double kAcceleratedMatrixTol = 1e-9;
constexpr double kStepCostBand = 0.20;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

bool within(double v, const double (&w)[2]) { return v >= w[0] && v <= w[1]; }

SchemeConfig scheme(Scheme s, double dt) {
  SchemeConfig c;
  c.scheme = s;
  c.dt = dt;
  return c;
}

Outcome criterion1() {
  const HierMesh mesh = build_hier_mesh(4, 3);
  const FineSpace fine(mesh, ms_trig_field());
  const int sat = saturation_layer(mesh);
  double worst = 0.0;
  int built = 0;
  for (auto kind : {MeasurementKind::edge, MeasurementKind::volume}) {
    const MeasurementSet ms = build_measurements(mesh, kind);
    for (auto form : {VariationalForm::v1, VariationalForm::v2})
      for (int layer : {2, 4, sat}) {
        worst = std::max(worst, max_constraint_residual(build_basis(fine, form, ms, layer), ms));
        ++built;
      }
  }
  return {worst <= kConstraintTol,
          std::to_string(built) + " bases, max residual " + fmt(worst) + " (tol " + fmt(kConstraintTol) + ")"};
}

Outcome criterion2() {
  const HierMesh mesh = build_hier_mesh(8, 3);
  const FineSpace fine(mesh, ms_trig_field());
  const std::vector<int> layers{2, 3, 4, 5, 6};
  std::ostringstream detail;
  bool pass = true;
  for (auto kind : {MeasurementKind::volume, MeasurementKind::edge}) {
    const std::vector<int> centers = interior_centers(mesh, kind);
    for (auto form : {VariationalForm::v1, VariationalForm::v2}) {
      const auto entries = decay_study(fine, kind, form, centers, layers);
      int good = 0;
      double mean_slope = 0.0;
      for (int c : centers) {
        std::vector<double> r;
        for (const auto& e : entries)
          if (e.center == c && e.norm == Norm::H1) r.push_back(e.ratio);
        bool monotone = true;
        for (std::size_t k = 1; k < r.size(); ++k) monotone &= r[k] <= r[k - 1];
        // saturated patches give ratio 0; floor at round-off
        const double lo = std::log10(std::max(r.back(), 1e-16)), hi = std::log10(std::max(r.front(), 1e-16));
        const double slope = (hi - lo) / (layers.back() - layers.front());
        mean_slope += slope / centers.size();
        if (monotone && slope >= kDecayPerLayer) ++good;
      }
      const double frac = static_cast<double>(good) / centers.size();
      pass &= frac >= kDecayFraction;
      detail << (kind == MeasurementKind::volume ? "V" : "E") << "/v" << static_cast<int>(form) << " " << good << "/"
             << centers.size() << " centers (mean " << fmt(mean_slope) << " decades/layer); ";
    }
  }
  return {pass, detail.str() + "need >= " + fmt(kDecayPerLayer) + " on " + fmt(100 * kDecayFraction) + "%"};
}

Outcome criterion3() {
  const HierMesh mesh = build_hier_mesh(2, 1);
  const FineSpace fine(mesh, ms_trig_field());
  const CoarseSpace cs = full_coarse_space(fine);
  const double h = mesh.fine_size();
  const SchemeConfig cfg = scheme(Scheme::gao, h * h);
  const VectorField3 m0 = default_initial(fine.num_nodes());
  std::vector<VectorField3> ref;
  run_reference(cfg, fine, m0, 10, [&](int, const VectorField3& m) { ref.push_back(m); });
  double worst = 0.0;
  run_algorithm1(cfg, cs, m0, 10, [&](int n, const CoarseSpace& c, CoarseState& st) {
    worst = std::max(worst, relative_error(fine, ref.at(n), fine_trace(c, st), Norm::H1));
  });
  return {worst <= kFullSpaceTol, "10 Gao steps, max relative H1 " + fmt(worst)};
}

struct SweepResult {
  ConvergenceReport report;
  const RateRow* find(Scheme s, MeasurementKind k, TauChoice::Kind tau, int alg) const {
    for (const RateRow& r : report.rates)
      if (r.scheme == s && r.measurement == k && r.tau.kind == tau && r.algorithm == alg && !r.accelerated)
        return &r;
    return nullptr;
  }
};

SweepResult run_sweep(const std::filesystem::path& out) {
  RunConfig cfg;
  cfg.nc = {2, 4, 8};
  cfg.fine_exponent = 6;
  cfg.measurements = {MeasurementKind::volume, MeasurementKind::edge};
  cfg.forms = {FormChoice::mixed};
  cfg.layers = {6};
  cfg.taus = {TauChoice{TauChoice::Kind::H}, TauChoice{TauChoice::Kind::H2}};
  cfg.length_preserving = true;
  cfg.out = out / "convergence";
  return {convergence_study(cfg)};
}

Outcome criterion4(const SweepResult& sw) {
  std::ostringstream d;
  bool pass = true;
  struct Cell {
    MeasurementKind kind;
    TauChoice::Kind tau;
    const double (*window)[2];
    const char* label;
  };
  const Cell cells[] = {{MeasurementKind::volume, TauChoice::Kind::H2, &kRateV_H2, "V/H2"},
                        {MeasurementKind::volume, TauChoice::Kind::H, &kRateV_H, "V/H"},
                        {MeasurementKind::edge, TauChoice::Kind::H, &kRateE_H, "E/H"}};
  for (Scheme s : {Scheme::cimrak, Scheme::gao, Scheme::an}) {
    d << scheme_name(s) << "[";
    for (const Cell& c : cells) {
      const RateRow* r = sw.find(s, c.kind, c.tau, 1);
      const double v = r ? r->rate_vs_dofs : std::nan("");
      const bool ok = r && within(v, *c.window);
      pass &= ok;
      d << c.label << " " << fmt(v) << (ok ? "" : "!") << " ";
    }
    d << "] ";
  }
  return {pass, d.str() + "(slope of log H1 error vs log coarse dofs)"};
}

Outcome criterion5(const SweepResult& sw) {
  std::ostringstream d;
  bool pass = true;
  for (Scheme s : {Scheme::cimrak, Scheme::gao, Scheme::an}) {
    const RateRow* a = sw.find(s, MeasurementKind::volume, TauChoice::Kind::H2, 1);
    const RateRow* b = sw.find(s, MeasurementKind::volume, TauChoice::Kind::H2, 2);
    const double shift = (a && b) ? std::abs(a->rate_vs_dofs - b->rate_vs_dofs) : std::nan("");
    const bool ok = shift <= kLengthPreservingShift;
    pass &= ok;
    d << scheme_name(s) << " " << fmt(a ? a->rate_vs_dofs : std::nan("")) << " -> "
      << fmt(b ? b->rate_vs_dofs : std::nan("")) << " (shift " << fmt(shift) << "); ";
  }
  return {pass, d.str() + "max shift " + fmt(kLengthPreservingShift)};
}

Outcome criterion6() {
  double dev[2];
  for (int k = 0; k < 2; ++k) {
    const HierMesh mesh = build_hier_mesh(1, 4 + k);
    const FineSpace fine(mesh, ms_trig_field());
    const double h = mesh.fine_size();
    const int steps = static_cast<int>(std::lround(1.0 / (h * h)));
    const VectorField3 m = run_reference(scheme(Scheme::gao, h * h), fine, default_initial(fine.num_nodes()), steps);
    dev[k] = unit_length_deviation(fine, m);
  }
  const double factor = dev[0] / dev[1];
  return {within(factor, kDeviationFactor), "deviation h=1/16 " + fmt(dev[0]) + ", h=1/32 " + fmt(dev[1]) +
                                                ", factor " + fmt(factor) + " (window [" +
                                                fmt(kDeviationFactor[0]) + ", " + fmt(kDeviationFactor[1]) + "])"};
}

Outcome criterion7(const std::filesystem::path& out) {
  // trajectories
  const HierMesh mesh = build_hier_mesh(4, 2);
  const FineSpace fine(mesh, ms_trig_field());
  const CoarseSpace cs = cached_coarse_space(fine, MeasurementKind::volume, FormChoice::mixed, 6, out / "cache");
  const TripleTensorSet tt = cached_tensors(cs, out / "cache");
  const double H = mesh.coarse_size();
  const SchemeConfig cfg = scheme(Scheme::cimrak, H * H);
  const VectorField3 m0 = default_initial(fine.num_nodes());
  CoarseState base = run_algorithm1(cfg, cs, m0, 20);
  CoarseState acc = run_accelerated(cfg, cs, tt, m0, 20);
  const double err = relative_error(fine, fine_trace(cs, base), fine_trace(cs, acc), Norm::H1);

  // matrices on a small mesh from a textured unit field
  const HierMesh small = build_hier_mesh(2, 2);
  const FineSpace sf(small, ms_trig_field());
  const CoarseSpace scs = make_coarse_space(sf, MeasurementKind::volume, FormChoice::mixed, 1);
  const TripleTensorSet stt = precompute_tensors(scs);
  VectorField3 m(sf.num_nodes());
  for (int v = 0; v < sf.num_nodes(); ++v) {
    const double x = small.fine_nodes[v][0], y = small.fine_nodes[v][1];
    const double th = 0.9 * std::sin(2.0 * x + y), ph = 1.7 * x * y;
    m[0][v] = std::cos(th);
    m[1][v] = std::sin(th) * std::cos(ph);
    m[2][v] = std::sin(th) * std::sin(ph);
  }
  CoarseState st = interpolate_initial(scs, m);
  const CoarseSystem a = accelerated_system(cfg, stt, st.coefficients);
  const CoarseSystem b = substituted_baseline_system(cfg, scs, st);
  const double merr = (a.matrix - b.matrix).cwiseAbs().maxCoeff() / b.matrix.cwiseAbs().maxCoeff();
  return {err <= kAcceleratedH1 && merr <= kAcceleratedMatrixTol && small.num_fine_nodes() <= 200,
          "20 steps relative H1 " + fmt(err) + " (max " + fmt(kAcceleratedH1) + "); matrix rel diff " + fmt(merr) +
              " on " + std::to_string(small.num_fine_nodes()) + " nodes"};
}

Outcome criterion8(const std::filesystem::path& out) {
  RunConfig cfg;
  cfg.nc = {2, 4, 8};
  cfg.fine_exponent = 6;
  cfg.layers = {6};
  cfg.forms = {FormChoice::mixed};
  cfg.out = out / "convergence";  // shares the cached reference
  const TimingReport rep = timing_report(cfg);
  const TimingRow& ct0 = rep.rows[0];
  const TimingRow& ct4 = rep.rows[4];
  bool pass = rep.rows.size() == 5;
  std::ostringstream d;
  for (std::size_t i = 0; i < rep.nc.size(); ++i) {
    pass &= ct4.seconds[i] < ct0.seconds[i];
    d << "nc=" << rep.nc[i] << " CT4 " << fmt(ct4.seconds[i]) << "s vs CT0 " << fmt(ct0.seconds[i]) << "s; ";
  }
  // per-step cost under J = 2 -> 4 at N_c = 4
  double cost[2];
  for (int k = 0; k < 2; ++k) {
    const HierMesh mesh = build_hier_mesh(4, 2 + 2 * k);
    const FineSpace fine(mesh, ms_trig_field());
    const CoarseSpace cs = cached_coarse_space(fine, MeasurementKind::volume, FormChoice::mixed, 6, out / "cache");
    const TripleTensorSet tt = cached_tensors(cs, out / "cache");
    const CoarseState start = interpolate_initial(cs, default_initial(fine.num_nodes()));
    cost[k] = accelerated_step_cost(scheme(Scheme::cimrak, 1.0 / 16.0), tt, start, 400, 20);
  }
  const double ratio = cost[1] / cost[0];
  pass &= std::abs(ratio - 1.0) <= kStepCostBand;
  d << "step cost J=2 " << fmt(cost[0]) << "s, J=4 " << fmt(cost[1]) << "s (ratio " << fmt(ratio) << ")";
  return {pass, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::filesystem::path out = "acceptance-out";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out" && i + 1 < argc) {
      out = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else {
      std::cerr << "usage: acceptance [--out DIR] [--only 1,2,...]\n";
      return 2;
    }
  }
  auto wanted = [&](int k) { return only.empty() || only.count(k); };
  int failures = 0;
  auto report = [&](int k, const Outcome& o, double secs) {
    std::cout << "criterion " << k << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  [" << fmt(secs)
              << " s]" << std::endl;
    if (!o.pass) ++failures;
  };
  auto run = [&](int k, auto&& fn) {
    if (!wanted(k)) return;
    const Stopwatch sw;
    try {
      const Outcome o = fn();
      report(k, o, sw.seconds());
    } catch (const std::exception& e) {
      report(k, {false, std::string("exception: ") + e.what()}, sw.seconds());
    }
  };
  run(1, criterion1);
  run(2, criterion2);
  run(3, criterion3);
  if (wanted(4) || wanted(5)) {
    const Stopwatch sw;
    try {
      const SweepResult res = run_sweep(out);
      const double secs = sw.seconds();
      if (wanted(4)) report(4, criterion4(res), secs);
      if (wanted(5)) report(5, criterion5(res), 0.0);
    } catch (const std::exception& e) {
      if (wanted(4)) report(4, {false, std::string("exception: ") + e.what()}, sw.seconds());
      if (wanted(5)) report(5, {false, std::string("exception: ") + e.what()}, 0.0);
    }
  }
  run(6, criterion6);
  run(7, [&] { return criterion7(out); });
  run(8, [&] { return criterion8(out); });
  return failures == 0 ? 0 : 1;
}
