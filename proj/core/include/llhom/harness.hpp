#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "llhom/ms_solver.hpp"

namespace llhom {

/// Coarse time step: tau = H, tau = H^2, or a fixed value.
struct TauChoice {
  enum class Kind { H, H2, fixed } kind = Kind::H2;
  double value = 0.0;

  static TauChoice parse(std::string_view text);
  std::string name() const;
  double resolve(double coarse_size) const;
};

/// Resolved run configuration. Keys accepted by set() match the CLI flag names
/// without the leading dashes; list-valued keys take comma-separated values.
struct RunConfig {
  std::vector<int> nc{2, 4, 8};
  int refine_J = 3;                // single-mesh commands
  int fine_exponent = 6;           // reference h = 2^-fine_exponent
  std::vector<Scheme> schemes{Scheme::cimrak, Scheme::gao, Scheme::an};
  std::vector<MeasurementKind> measurements{MeasurementKind::volume, MeasurementKind::edge};
  std::vector<FormChoice> forms{FormChoice::mixed};
  std::vector<int> layers{6};
  std::vector<TauChoice> taus{TauChoice{TauChoice::Kind::H}, TauChoice{TauChoice::Kind::H2}};
  std::string coeff = "mstrig";
  double T = 1.0;
  double lambda = 1.0;
  std::optional<double> fine_dt;  // default h^2
  bool length_preserving = false;
  bool accelerated = false;
  bool anisotropy = true;
  std::filesystem::path out = "llhom-out";
  std::optional<std::uint64_t> seed;  // reserved
  bool paper_scale = false;

  /// Throws llhom::Error on an unknown key or malformed value.
  void set(const std::string& key, const std::string& value);
  /// key=value lines; '#' starts a comment.
  void load_file(const std::filesystem::path& path);
  /// Switches to the published sizes (h = 2^-7, N_c up to 16).
  void apply_paper_scale();
  void validate() const;

  /// Resolved values, one "key = value" per entry, in a fixed order.
  std::vector<std::pair<std::string, std::string>> echo() const;
  int refinement_for(int nc) const;  // J with N_c 2^J = 2^fine_exponent
  double reference_dt() const;
};

enum class Norm { H1, L2, Linf };
std::string norm_name(Norm n);

/// ||a - b|| / ||a||. H1 is the unit-coefficient seminorm plus the L2 part;
/// Linf is the largest nodal vector length. Throws when ||a|| = 0.
double relative_error(const FineSpace& space, const VectorField3& reference, const VectorField3& approx, Norm norm);

/// Least-squares slope of log(error) against log(abscissa). Needs at least two
/// points with positive values; identical abscissae throw.
double fit_rate(const std::vector<double>& abscissa, const std::vector<double>& errors);

/// Monotonic stopwatch.
class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// CSV writer with a fixed header, classic locale and round-trip precision.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);
  CsvWriter& operator<<(const std::string& field);
  CsvWriter& operator<<(const char* field) { return *this << std::string(field); }
  CsvWriter& operator<<(double value);
  CsvWriter& operator<<(long value);
  CsvWriter& operator<<(int value) { return *this << static_cast<long>(value); }
  void end_row();

 private:
  std::unique_ptr<std::ofstream> out_;
  std::size_t columns_ = 0, filled_ = 0;
};

void write_manifest(const std::filesystem::path& path, const RunConfig& cfg, const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& extra = {});

/// make_coarse_space backed by GRPSBAS1 files in `cache_dir` (built and
/// written on a miss; an unreadable file is rebuilt).
CoarseSpace cached_coarse_space(const FineSpace& fine, MeasurementKind kind, FormChoice form, int layer,
                                const std::filesystem::path& cache_dir);

/// precompute_tensors backed by a tensor cache file in `cache_dir`.
TripleTensorSet cached_tensors(const CoarseSpace& cs, const std::filesystem::path& cache_dir);

MeasurementKind measurement_from_name(const std::string& name);
std::string measurement_name(MeasurementKind kind);

/// Initial magnetization (1/sqrt2, 1/sqrt3, 1/sqrt6).
VectorField3 default_initial(int num_nodes);

struct ReferenceRun {
  VectorField3 field;
  int steps = 0;
  double dt = 0.0;
  double seconds = 0.0;       // wall time of the stepping loop
  double step_seconds = 0.0;  // mean per step, first step excluded
  bool cached = false;
};

/// Fine reference on the 2^-fine_exponent lattice, cached under `cache_dir`
/// when it is non-empty.
ReferenceRun reference_solution(const RunConfig& cfg, Scheme scheme, const std::filesystem::path& cache_dir);

struct ConvergenceRow {
  Scheme scheme;
  MeasurementKind measurement;
  FormChoice form;
  TauChoice tau;
  int algorithm = 1;
  bool accelerated = false;
  int nc = 0;
  int layer = 0;
  int dofs = 0;
  int steps = 0;
  double h1 = 0, l2 = 0, linf = 0;
  double deviation = 0;
  double basis_seconds = 0, tensor_seconds = 0, step_seconds = 0;
  bool failed = false;  // a step solve failed; metrics are NaN
};

struct RateRow {
  Scheme scheme;
  MeasurementKind measurement;
  FormChoice form;
  TauChoice tau;
  int algorithm = 1;
  bool accelerated = false;
  int layer = 0;
  int points = 0;
  double rate_vs_dofs = 0.0;  // headline rate; NaN when a point failed
  double rate_vs_nc = 0.0;
};

struct ConvergenceReport {
  std::vector<ConvergenceRow> rows;
  std::vector<RateRow> rates;
  std::map<Scheme, ReferenceRun> references;
};

/// Runs every (scheme, N_c, measurement, form, layer, tau, algorithm) cell.
/// Algorithm 2 is added when length_preserving is set; accelerated Cimrak
/// runs are added when accelerated is set. Writes convergence.csv and
/// rates.csv under cfg.out as rows complete.
ConvergenceReport convergence_study(const RunConfig& cfg);

struct DecayEntry {
  int center = 0;
  int layer = 0;
  Norm norm = Norm::H1;
  double ratio = 0.0;
};

/// Centers whose coarse element (or edge) lies off the boundary.
std::vector<int> interior_centers(const HierMesh& mesh, MeasurementKind kind);

/// Localization ratios per (center, layer, norm); writes decay.csv when `csv`
/// is non-empty.
std::vector<DecayEntry> decay_study(const FineSpace& fine, MeasurementKind kind, VariationalForm form,
                                    const std::vector<int>& centers, const std::vector<int>& layers,
                                    const std::filesystem::path& csv = {});

struct TimingRow {
  std::string label;  // CT0 .. CT4
  std::string description;
  std::vector<double> seconds;  // per N_c
  bool estimate = false;
};

struct TimingReport {
  std::vector<int> nc;
  std::vector<TimingRow> rows;  // exactly five
  std::vector<double> accelerated_step_seconds;  // median per-step CT4 cost per N_c
};

/// CT0 fine reference, CT1 (estimated) fine four-index tensor assembly, CT2
/// basis build, CT3 tensor precomputation, CT4 accelerated coarse stepping
/// (tau = H^2, GRPS-V with the first configured form and layer). Writes
/// timing.csv under cfg.out.
TimingReport timing_report(const RunConfig& cfg);

/// Median wall time of one accelerated step with the first `warmup` steps
/// discarded.
double accelerated_step_cost(const SchemeConfig& scfg, const TripleTensorSet& tensors, const CoarseState& start,
                             int steps, int warmup = 1);

}  // namespace llhom
