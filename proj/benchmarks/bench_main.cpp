#include <benchmark/benchmark.h>

#include "llhom/harness.hpp"

using namespace llhom;

namespace {

struct Problem {
  HierMesh mesh;
  FineSpace fine;
  Problem(int nc, int j) : mesh(build_hier_mesh(nc, j)), fine(mesh, ms_trig_field()) {}
};

SchemeConfig cfg(Scheme s, double dt) {
  SchemeConfig c;
  c.scheme = s;
  c.dt = dt;
  return c;
}

void BM_FineAssembly(benchmark::State& state) {
  const Problem p(8, static_cast<int>(state.range(0)));
  const VectorField3 m = default_initial(p.fine.num_nodes());
  const auto scheme = static_cast<Scheme>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(assemble_step(cfg(scheme, 1e-3), p.fine, m));
}
BENCHMARK(BM_FineAssembly)->ArgsProduct({{2, 3}, {0, 1, 2}})->Unit(benchmark::kMillisecond);

void BM_FineStep(benchmark::State& state) {
  const Problem p(8, static_cast<int>(state.range(0)));
  VectorField3 m = default_initial(p.fine.num_nodes());
  FineSolver solver;
  const SchemeConfig c = cfg(Scheme::cimrak, 1e-3);
  m = step_fine(c, p.fine, m, solver);  // symbolic analysis outside the loop
  for (auto _ : state) m = step_fine(c, p.fine, m, solver);
}
BENCHMARK(BM_FineStep)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_BasisBuild(benchmark::State& state) {
  const Problem p(4, 3);
  const auto kind = state.range(0) ? MeasurementKind::edge : MeasurementKind::volume;
  const MeasurementSet ms = build_measurements(p.mesh, kind);
  const int layer = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(build_basis(p.fine, VariationalForm::v1, ms, layer));
}
BENCHMARK(BM_BasisBuild)->ArgsProduct({{0, 1}, {1, 2, 4}})->Unit(benchmark::kMillisecond);

void BM_TensorBuild(benchmark::State& state) {
  const Problem p(static_cast<int>(state.range(0)), 2);
  const CoarseSpace cs = make_coarse_space(p.fine, MeasurementKind::volume, FormChoice::mixed, 2);
  for (auto _ : state) benchmark::DoNotOptimize(precompute_tensors(cs));
}
BENCHMARK(BM_TensorBuild)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_CoarseStep(benchmark::State& state) {
  const Problem p(4, 2);
  const CoarseSpace cs = make_coarse_space(p.fine, MeasurementKind::volume, FormChoice::mixed, 2);
  CoarseState st = interpolate_initial(cs, default_initial(p.fine.num_nodes()));
  const SchemeConfig c = cfg(Scheme::cimrak, 1.0 / 16.0);
  for (auto _ : state) st = step_coarse(c, cs, st);
}
BENCHMARK(BM_CoarseStep)->Unit(benchmark::kMicrosecond);

void BM_AcceleratedStep(benchmark::State& state) {
  const Problem p(static_cast<int>(state.range(0)), 2);
  const CoarseSpace cs = make_coarse_space(p.fine, MeasurementKind::volume, FormChoice::mixed, 2);
  const TripleTensorSet tt = precompute_tensors(cs);
  CoarseState st = interpolate_initial(cs, default_initial(p.fine.num_nodes()));
  const SchemeConfig c = cfg(Scheme::cimrak, 1.0 / 16.0);
  for (auto _ : state) st = step_coarse_accelerated(c, tt, st);
}
BENCHMARK(BM_AcceleratedStep)->Arg(2)->Arg(4)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
