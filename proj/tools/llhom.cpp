#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <deque>
#include <map>

#include "llhom/error.hpp"
#include "llhom/harness.hpp"

using namespace llhom;

namespace {

// Flag values are kept as strings and routed through RunConfig::set so file
// and command line share one parser.
struct Flags {
  std::string config;
  std::vector<std::pair<std::string, std::string*>> values;
  std::vector<std::pair<std::string, bool*>> switches;
  std::map<std::string, CLI::Option*> options;
  std::deque<std::string> store;
  std::deque<bool> bools;

  void value(CLI::App* app, const std::string& name, const std::string& help) {
    store.emplace_back();
    options[name] = app->add_option("--" + name, store.back(), help);
    values.push_back({name, &store.back()});
  }
  void flag(CLI::App* app, const std::string& name, const std::string& help) {
    bools.push_back(false);
    options[name] = app->add_flag("--" + name, bools.back(), help);
    switches.push_back({name, &bools.back()});
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config.empty()) cfg.load_file(config);
    // --paper-scale first so explicit flags still override it
    for (auto& [name, v] : switches)
      if (name == "paper-scale" && options.at(name)->count()) cfg.set(name, "true");
    for (auto& [name, v] : values)
      if (options.at(name)->count()) cfg.set(name, *v);
    for (auto& [name, v] : switches)
      if (name != "paper-scale" && options.at(name)->count()) cfg.set(name, *v ? "true" : "false");
    cfg.validate();
    return cfg;
  }
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "key=value configuration file (flags override it)");
  f.value(app, "nc", "coarse divisions N_c (comma list for sweeps)");
  f.value(app, "refine-J", "fine refinement levels J for single-mesh commands");
  f.value(app, "fine-exponent", "reference mesh h = 2^-k");
  f.value(app, "fine-dt", "fine time step (default h^2)");
  f.value(app, "scheme", "cimrak|gao|an (comma list)");
  f.value(app, "measurement", "edge|volume (comma list)");
  f.value(app, "form", "v1|v2|mixed (comma list)");
  f.value(app, "layers", "localization layers (comma list)");
  f.value(app, "tau", "coarse time step H|H2|<float> (comma list)");
  f.value(app, "coeff", "mstrig|constant:<c>");
  f.value(app, "T", "final time");
  f.value(app, "lambda", "damping parameter");
  f.value(app, "anisotropy", "true|false");
  f.value(app, "out", "output directory");
  f.value(app, "seed", "reserved; runs are deterministic");
  f.flag(app, "length-preserving", "normalize every step (algorithm 2)");
  f.flag(app, "accelerated", "use the precomputed tensor path (Cimrak)");
  f.flag(app, "paper-scale", "large problem sizes (h = 2^-7, N_c up to 16)");
}

int first_nc(const RunConfig& cfg) {
  if (cfg.nc.empty()) throw Error("--nc is required");
  return cfg.nc.front();
}

void write_step_row(CsvWriter& w, int step, double t, const FineSpace& fine, const VectorField3& m) {
  w << step << t << ll_energy(fine, m) << unit_length_deviation(fine, m);
  w.end_row();
}

int cmd_mesh_info(const RunConfig& cfg) {
  const HierMesh mesh = build_hier_mesh(first_nc(cfg), cfg.refine_J);
  std::cout << "N_c " << mesh.coarse_divisions << "  J " << mesh.refinement_levels << "  H " << mesh.coarse_size()
            << "  h " << mesh.fine_size() << "\n"
            << "coarse: " << mesh.coarse_nodes.size() << " nodes, " << mesh.num_coarse_triangles() << " triangles, "
            << mesh.num_coarse_edges() << " edges\n"
            << "fine:   " << mesh.num_fine_nodes() << " nodes, " << mesh.num_fine_triangles() << " triangles, "
            << mesh.fine_edges.size() << " edges\n";
  CsvWriter w(cfg.out / "mesh.csv", {"nc", "J", "H", "h", "coarse_nodes", "coarse_triangles", "coarse_edges",
                                     "fine_nodes", "fine_triangles", "fine_edges"});
  w << mesh.coarse_divisions << mesh.refinement_levels << mesh.coarse_size() << mesh.fine_size()
    << static_cast<long>(mesh.coarse_nodes.size()) << mesh.num_coarse_triangles() << mesh.num_coarse_edges()
    << mesh.num_fine_nodes() << mesh.num_fine_triangles() << static_cast<long>(mesh.fine_edges.size());
  w.end_row();
  write_manifest(cfg.out / "manifest.txt", cfg, "mesh-info");
  return 0;
}

int cmd_basis(const RunConfig& cfg) {
  const HierMesh mesh = build_hier_mesh(first_nc(cfg), cfg.refine_J);
  const FineSpace fine(mesh, coefficient_from_name(cfg.coeff));
  CsvWriter w(cfg.out / "basis.csv", {"measurement", "form", "layers", "count", "max_constraint_residual",
                                      "mean_support", "build_s", "file"});
  for (MeasurementKind kind : cfg.measurements) {
    const MeasurementSet ms = build_measurements(mesh, kind);
    for (FormChoice fc : cfg.forms) {
      std::vector<VariationalForm> forms;
      if (fc != FormChoice::v2) forms.push_back(VariationalForm::v1);
      if (fc != FormChoice::v1) forms.push_back(VariationalForm::v2);
      for (VariationalForm form : forms) {
        for (int layer : cfg.layers) {
          const Stopwatch sw;
          const BasisSet b = build_basis(fine, form, ms, layer);
          const double secs = sw.seconds();
          const std::string name = "basis_" + measurement_name(kind) + "_v" + std::to_string(static_cast<int>(form)) +
                                   "_l" + std::to_string(layer) + ".bin";
          write_basis(cfg.out / name, b);
          double support = 0.0;
          for (const auto& c : b.columns) support += c.index.size();
          const double res = max_constraint_residual(b, ms);
          w << measurement_name(kind) << ("v" + std::to_string(static_cast<int>(form))) << layer << b.size() << res
            << support / b.size() << secs << name;
          w.end_row();
          std::cout << measurement_name(kind) << " v" << static_cast<int>(form) << " l=" << layer << ": " << b.size()
                    << " functions, residual " << res << ", " << secs << " s\n";
        }
        // localization decay over interior centers, layers 1..max
        int lmax = 1;
        for (int l : cfg.layers) lmax = std::max(lmax, l);
        std::vector<int> layers;
        for (int l = 1; l <= lmax; ++l) layers.push_back(l);
        decay_study(fine, kind, form, interior_centers(mesh, kind), layers,
                    cfg.out / ("decay_" + measurement_name(kind) + "_v" + std::to_string(static_cast<int>(form)) +
                               ".csv"));
      }
    }
  }
  write_manifest(cfg.out / "manifest.txt", cfg, "basis");
  return 0;
}

int cmd_solve_fine(const RunConfig& cfg) {
  const HierMesh mesh = build_hier_mesh(first_nc(cfg), cfg.refine_J);
  const FineSpace fine(mesh, coefficient_from_name(cfg.coeff));
  const double h = mesh.fine_size();
  SchemeConfig sc;
  sc.scheme = cfg.schemes.at(0);
  sc.damping = cfg.lambda;
  sc.anisotropy = cfg.anisotropy;
  const int steps = std::max(1L, std::lround(cfg.T / (cfg.fine_dt ? *cfg.fine_dt : h * h)));
  sc.dt = cfg.T / steps;
  sc.validate();
  std::filesystem::create_directories(cfg.out);
  CsvWriter w(cfg.out / "steps.csv", {"step", "time", "energy", "unit_deviation"});
  const Stopwatch sw;
  const VectorField3 m = run_reference(sc, fine, default_initial(fine.num_nodes()), steps,
                                       [&](int n, const VectorField3& f) { write_step_row(w, n, n * sc.dt, fine, f); });
  const double secs = sw.seconds();
  write_trajectory_csv(cfg.out / "trajectory.csv", mesh, m);
  write_manifest(cfg.out / "manifest.txt", cfg, "solve-fine",
                 {{"steps", std::to_string(steps)}, {"wall_s", std::to_string(secs)}});
  std::cout << scheme_name(sc.scheme) << ": " << steps << " steps in " << secs << " s\n";
  return 0;
}

int cmd_solve_ms(const RunConfig& cfg) {
  const HierMesh mesh = build_hier_mesh(first_nc(cfg), cfg.refine_J);
  const FineSpace fine(mesh, coefficient_from_name(cfg.coeff));
  const auto cache = cfg.out / "cache";
  const int layer = cfg.layers.at(0);
  const Stopwatch bw;
  const CoarseSpace cs = cached_coarse_space(fine, cfg.measurements.at(0), cfg.forms.at(0), layer, cache);
  const double basis_s = bw.seconds();
  SchemeConfig sc;
  sc.scheme = cfg.schemes.at(0);
  sc.damping = cfg.lambda;
  sc.anisotropy = cfg.anisotropy;
  const double tau = cfg.taus.at(0).resolve(mesh.coarse_size());
  const int steps = std::max(1L, std::lround(cfg.T / tau));
  sc.dt = cfg.T / steps;
  sc.validate();
  std::filesystem::create_directories(cfg.out);
  CsvWriter w(cfg.out / "steps.csv", {"step", "time", "energy", "unit_deviation"});
  const VectorField3 m0 = default_initial(fine.num_nodes());
  auto observe = [&](int n, const CoarseSpace& c, CoarseState& st) {
    write_step_row(w, n, n * sc.dt, fine, fine_trace(c, st));
  };
  double tensor_s = 0.0;
  const Stopwatch sw;
  CoarseState st;
  std::string mode;
  if (cfg.accelerated) {
    if (sc.scheme != Scheme::cimrak) throw Error("--accelerated requires --scheme cimrak");
    if (cfg.length_preserving) throw Error("--accelerated does not support --length-preserving");
    const Stopwatch tw;
    const TripleTensorSet tt = cached_tensors(cs, cache);
    tensor_s = tw.seconds();
    st = run_accelerated(sc, cs, tt, m0, steps, observe);
    mode = "accelerated";
  } else if (cfg.length_preserving) {
    st = run_algorithm2(sc, cs, m0, steps, observe);
    mode = "algorithm2";
  } else {
    st = run_algorithm1(sc, cs, m0, steps, observe);
    mode = "algorithm1";
  }
  const double secs = sw.seconds() - tensor_s;
  write_trajectory_csv(cfg.out / "trajectory.csv", mesh, fine_trace(cs, st));
  write_manifest(cfg.out / "manifest.txt", cfg, "solve-ms",
                 {{"mode", mode},
                  {"steps", std::to_string(steps)},
                  {"coarse_dofs", std::to_string(cs.dim())},
                  {"basis_s", std::to_string(basis_s)},
                  {"tensor_s", std::to_string(tensor_s)},
                  {"step_s", std::to_string(secs)}});
  std::cout << mode << " " << scheme_name(sc.scheme) << ": " << cs.dim() << " coarse dofs, " << steps
            << " steps in " << secs << " s\n";
  return 0;
}

int cmd_convergence(const RunConfig& cfg) {
  const ConvergenceReport rep = convergence_study(cfg);
  for (const RateRow& r : rep.rates)
    std::cout << scheme_name(r.scheme) << " " << measurement_name(r.measurement) << " " << form_choice_name(r.form)
              << " tau=" << r.tau.name() << " alg" << r.algorithm << (r.accelerated ? " accel" : "") << " l="
              << r.layer << ": rate " << r.rate_vs_dofs << " (vs nc " << r.rate_vs_nc << ")\n";
  return 0;
}

int cmd_timing(const RunConfig& cfg) {
  const TimingReport rep = timing_report(cfg);
  for (const TimingRow& r : rep.rows) {
    std::cout << r.label << (r.estimate ? " (estimate)" : "") << ":";
    for (double s : r.seconds) std::cout << " " << s;
    std::cout << " s\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiscale Landau-Lifshitz solver with localized operator-adapted bases"};
  app.require_subcommand(1);
  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
  };
  const Sub subs[] = {{"mesh-info", "print mesh statistics", cmd_mesh_info},
                      {"basis", "build, cache and measure decay of the coarse bases", cmd_basis},
                      {"solve-fine", "fine-scale time integration", cmd_solve_fine},
                      {"solve-ms", "multiscale time integration", cmd_solve_ms},
                      {"convergence", "convergence-rate sweep against the fine reference", cmd_convergence},
                      {"timing", "CT0..CT4 timing report", cmd_timing}};
  std::deque<Flags> flags;
  std::vector<CLI::App*> apps;
  for (const Sub& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    flags.emplace_back();
    add_common(sub, flags.back());
    apps.push_back(sub);
  }
  CLI11_PARSE(app, argc, argv);
  try {
    for (std::size_t i = 0; i < apps.size(); ++i)
      if (apps[i]->parsed()) return subs[i].run(flags[i].resolve());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
