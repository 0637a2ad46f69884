#include "llhom/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <limits>
#include <locale>
#include <numeric>
#include <sstream>

#include "llhom/error.hpp"

namespace llhom {

namespace {

std::string trim(std::string s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c); };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), is_space));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), is_space).base(), s.end());
  return s;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  in.imbue(std::locale::classic());
  double v = 0.0;
  in >> v;
  if (in.fail() || !(in >> std::ws).eof()) throw Error("config: " + key + " expects a number, got '" + value + "'");
  return v;
}

long parse_long(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(value, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != value.size()) throw Error("config: " + key + " expects an integer, got '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off") return false;
  throw Error("config: " + key + " expects true/false, got '" + value + "'");
}

std::string format_double(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

template <class T, class F>
std::string join(const std::vector<T>& v, F&& fmt) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

int exact_log2(int n) {
  int k = 0;
  while ((1 << k) < n) ++k;
  return (1 << k) == n ? k : -1;
}

SchemeConfig scheme_config(const RunConfig& cfg, Scheme s, double dt) {
  SchemeConfig sc;
  sc.scheme = s;
  sc.damping = cfg.lambda;
  sc.dt = dt;
  sc.anisotropy = cfg.anisotropy;
  sc.validate();
  return sc;
}

int step_count(double T, double dt) {
  const long n = std::lround(T / dt);
  return static_cast<int>(std::max(1L, n));
}

double h1_norm_sq(const FineSpace& s, const VectorField3& e) {
  double v = 0.0;
  for (int c = 0; c < 3; ++c) v += e[c].dot(s.unit_stiffness() * e[c]) + e[c].dot(s.mass() * e[c]);
  return v;
}

double l2_norm_sq(const FineSpace& s, const VectorField3& e) {
  double v = 0.0;
  for (int c = 0; c < 3; ++c) v += e[c].dot(s.mass() * e[c]);
  return v;
}

double linf_norm(const VectorField3& e) {
  double v = 0.0;
  for (int i = 0; i < e.size(); ++i) v = std::max(v, e.at(i).norm());
  return v;
}

// --- reference cache ------------------------------------------------------

constexpr char kRefMagic[8] = {'L', 'L', 'R', 'E', 'F', '0', '0', '1'};

std::string reference_key(const RunConfig& cfg, Scheme s) {
  return "scheme=" + scheme_name(s) + ";exp=" + std::to_string(cfg.fine_exponent) + ";kappa=" + cfg.coeff +
         ";T=" + format_double(cfg.T) + ";lambda=" + format_double(cfg.lambda) +
         ";dt=" + format_double(cfg.reference_dt()) + ";aniso=" + (cfg.anisotropy ? "1" : "0");
}

bool read_reference(const std::filesystem::path& path, const std::string& key, int n, ReferenceRun& run) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char magic[8];
  std::uint32_t len = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&len), 4);
  if (!in || std::memcmp(magic, kRefMagic, 8) != 0 || len > 4096) return false;
  std::string stored(len, '\0');
  in.read(stored.data(), len);
  std::uint32_t nodes = 0, steps = 0;
  double secs = 0.0, per = 0.0;
  in.read(reinterpret_cast<char*>(&nodes), 4);
  in.read(reinterpret_cast<char*>(&steps), 4);
  in.read(reinterpret_cast<char*>(&secs), 8);
  in.read(reinterpret_cast<char*>(&per), 8);
  if (!in || stored != key || static_cast<int>(nodes) != n) return false;
  VectorField3 m(n);
  for (int c = 0; c < 3; ++c) in.read(reinterpret_cast<char*>(m[c].data()), sizeof(double) * n);
  if (!in) return false;
  run.field = std::move(m);
  run.steps = static_cast<int>(steps);
  run.seconds = secs;
  run.step_seconds = per;
  run.cached = true;
  return true;
}

void write_reference(const std::filesystem::path& path, const std::string& key, const ReferenceRun& run) {
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    const std::uint32_t len = static_cast<std::uint32_t>(key.size());
    const std::uint32_t nodes = static_cast<std::uint32_t>(run.field.size());
    const std::uint32_t steps = static_cast<std::uint32_t>(run.steps);
    out.write(kRefMagic, 8);
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(key.data(), len);
    out.write(reinterpret_cast<const char*>(&nodes), 4);
    out.write(reinterpret_cast<const char*>(&steps), 4);
    out.write(reinterpret_cast<const char*>(&run.seconds), 8);
    out.write(reinterpret_cast<const char*>(&run.step_seconds), 8);
    for (int c = 0; c < 3; ++c) out.write(reinterpret_cast<const char*>(run.field[c].data()), sizeof(double) * nodes);
    if (!out) throw Error("short write on " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

MeasurementKind measurement_from_name(const std::string& s) {
  if (s == "edge") return MeasurementKind::edge;
  if (s == "volume") return MeasurementKind::volume;
  throw Error("unknown measurement '" + s + "' (edge|volume)");
}

std::string measurement_name(MeasurementKind k) {
  switch (k) {
    case MeasurementKind::edge:
      return "edge";
    case MeasurementKind::volume:
      return "volume";
    case MeasurementKind::nodal:
      return "nodal";
  }
  return "?";
}

// --- caches -------------------------------------------------------------------

namespace {

std::shared_ptr<const BasisSet> cached_basis(const FineSpace& fine, const MeasurementSet& ms, VariationalForm form,
                                             int layer, const std::filesystem::path& dir) {
  const HierMesh& mesh = fine.mesh();
  const auto file = dir / ("basis_nc" + std::to_string(mesh.coarse_divisions) + "_J" +
                           std::to_string(mesh.refinement_levels) + "_" + measurement_name(ms.kind) + "_v" +
                           std::to_string(static_cast<int>(form)) + "_l" + std::to_string(layer) + "_" +
                           fine.kappa().name + ".bin");
  if (std::filesystem::exists(file)) {
    try {
      BasisSet b = read_basis(file, fine);
      if (b.form == form && b.kind == ms.kind && b.layer == layer && b.size() == ms.count())
        return std::make_shared<const BasisSet>(std::move(b));
    } catch (const Error&) {
    }
  }
  auto b = std::make_shared<const BasisSet>(build_basis(fine, form, ms, layer));
  std::filesystem::create_directories(dir);
  write_basis(file, *b);
  return b;
}

}  // namespace

CoarseSpace cached_coarse_space(const FineSpace& fine, MeasurementKind kind, FormChoice form, int layer,
                                const std::filesystem::path& cache_dir) {
  if (cache_dir.empty() || kind == MeasurementKind::nodal) return make_coarse_space(fine, kind, form, layer);
  MeasurementSet ms = build_measurements(fine.mesh(), kind);
  std::shared_ptr<const BasisSet> b1, b23;
  switch (form) {
    case FormChoice::v1:
      b1 = b23 = cached_basis(fine, ms, VariationalForm::v1, layer, cache_dir);
      break;
    case FormChoice::v2:
      b1 = b23 = cached_basis(fine, ms, VariationalForm::v2, layer, cache_dir);
      break;
    case FormChoice::mixed:
      b1 = cached_basis(fine, ms, VariationalForm::v1, layer, cache_dir);
      b23 = cached_basis(fine, ms, VariationalForm::v2, layer, cache_dir);
      break;
  }
  return coarse_space_from_bases(fine, std::move(ms), b1, b23);
}

TripleTensorSet cached_tensors(const CoarseSpace& cs, const std::filesystem::path& cache_dir) {
  if (cache_dir.empty()) return precompute_tensors(cs);
  const std::string key = tensor_cache_key(cs);
  std::ostringstream name;
  name << "tensors_" << std::hex << std::hash<std::string>{}(key) << ".bin";
  const auto file = cache_dir / name.str();
  if (std::filesystem::exists(file)) {
    try {
      return read_tensors(file, key);
    } catch (const Error&) {
    }
  }
  TripleTensorSet t = precompute_tensors(cs);
  std::filesystem::create_directories(cache_dir);
  write_tensors(file, t, key);
  return t;
}

// --- TauChoice / RunConfig --------------------------------------------------

TauChoice TauChoice::parse(std::string_view text) {
  if (text == "H") return {Kind::H, 0.0};
  if (text == "H2") return {Kind::H2, 0.0};
  const double v = parse_double("tau", std::string(text));
  if (!(v > 0.0)) throw Error("tau must be positive");
  return {Kind::fixed, v};
}

std::string TauChoice::name() const {
  switch (kind) {
    case Kind::H:
      return "H";
    case Kind::H2:
      return "H2";
    case Kind::fixed:
      return format_double(value);
  }
  return "?";
}

double TauChoice::resolve(double H) const {
  switch (kind) {
    case Kind::H:
      return H;
    case Kind::H2:
      return H * H;
    case Kind::fixed:
      return value;
  }
  return value;
}

void RunConfig::set(const std::string& raw_key, const std::string& raw_value) {
  std::string key = trim(raw_key);
  std::replace(key.begin(), key.end(), '_', '-');
  const std::string value = trim(raw_value);
  if (key == "nc") {
    nc.clear();
    for (const auto& s : split_list(value)) nc.push_back(static_cast<int>(parse_long(key, s)));
  } else if (key == "refine-J" || key == "refine-j") {
    refine_J = static_cast<int>(parse_long(key, value));
  } else if (key == "fine-exponent") {
    fine_exponent = static_cast<int>(parse_long(key, value));
  } else if (key == "scheme") {
    schemes.clear();
    for (const auto& s : split_list(value)) schemes.push_back(scheme_from_name(s));
  } else if (key == "measurement") {
    measurements.clear();
    for (const auto& s : split_list(value)) measurements.push_back(measurement_from_name(s));
  } else if (key == "form") {
    forms.clear();
    for (const auto& s : split_list(value)) forms.push_back(form_choice_from_name(s));
  } else if (key == "layers") {
    layers.clear();
    for (const auto& s : split_list(value)) layers.push_back(static_cast<int>(parse_long(key, s)));
  } else if (key == "tau") {
    taus.clear();
    for (const auto& s : split_list(value)) taus.push_back(TauChoice::parse(s));
  } else if (key == "coeff") {
    coefficient_from_name(value);  // validates
    coeff = value;
  } else if (key == "T") {
    T = parse_double(key, value);
  } else if (key == "lambda") {
    lambda = parse_double(key, value);
  } else if (key == "fine-dt") {
    fine_dt = parse_double(key, value);
  } else if (key == "length-preserving") {
    length_preserving = parse_bool(key, value);
  } else if (key == "accelerated") {
    accelerated = parse_bool(key, value);
  } else if (key == "anisotropy") {
    anisotropy = parse_bool(key, value);
  } else if (key == "out") {
    out = value;
  } else if (key == "seed") {
    seed = static_cast<std::uint64_t>(parse_long(key, value));
  } else if (key == "paper-scale") {
    paper_scale = parse_bool(key, value);
    if (paper_scale) apply_paper_scale();
  } else {
    throw Error("config: unknown key '" + raw_key + "'");
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

void RunConfig::apply_paper_scale() {
  paper_scale = true;
  fine_exponent = 7;
  nc = {2, 4, 8, 16};
  refine_J = 4;
}

void RunConfig::validate() const {
  if (fine_exponent < 1 || fine_exponent > 10) throw Error("fine-exponent out of range");
  for (int n : nc) {
    if (n < 1 || exact_log2(n) < 0) throw Error("nc values must be powers of two, got " + std::to_string(n));
    if (exact_log2(n) > fine_exponent) throw Error("nc " + std::to_string(n) + " is finer than the reference");
  }
  if (refine_J < 0) throw Error("refine-J must be non-negative");
  for (int l : layers)
    if (l < 0) throw Error("layers must be non-negative");
  if (!(T > 0.0)) throw Error("T must be positive");
  if (!(lambda > 0.0)) throw Error("lambda must be positive");
  if (fine_dt && !(*fine_dt > 0.0)) throw Error("fine-dt must be positive");
}

std::vector<std::pair<std::string, std::string>> RunConfig::echo() const {
  auto ints = [](const std::vector<int>& v) { return join(v, [](int x) { return std::to_string(x); }); };
  return {
      {"nc", ints(nc)},
      {"refine-J", std::to_string(refine_J)},
      {"fine-exponent", std::to_string(fine_exponent)},
      {"reference-h", format_double(std::ldexp(1.0, -fine_exponent))},
      {"fine-dt", format_double(reference_dt())},
      {"scheme", join(schemes, [](Scheme s) { return scheme_name(s); })},
      {"measurement", join(measurements, [](MeasurementKind k) { return measurement_name(k); })},
      {"form", join(forms, [](FormChoice f) { return form_choice_name(f); })},
      {"layers", ints(layers)},
      {"tau", join(taus, [](const TauChoice& t) { return t.name(); })},
      {"coeff", coeff},
      {"T", format_double(T)},
      {"lambda", format_double(lambda)},
      {"anisotropy", anisotropy ? "true" : "false"},
      {"length-preserving", length_preserving ? "true" : "false"},
      {"accelerated", accelerated ? "true" : "false"},
      {"out", out.string()},
      {"seed", seed ? std::to_string(*seed) + " (unused)" : "unset (unused)"},
      {"paper-scale", paper_scale ? "true" : "false"},
  };
}

int RunConfig::refinement_for(int n) const {
  const int k = exact_log2(n);
  if (k < 0 || k > fine_exponent) throw Error("nc " + std::to_string(n) + " incompatible with the reference lattice");
  return fine_exponent - k;
}

double RunConfig::reference_dt() const {
  if (fine_dt) return *fine_dt;
  const double h = std::ldexp(1.0, -fine_exponent);
  return h * h;
}

// --- metrics ----------------------------------------------------------------

std::string norm_name(Norm n) {
  switch (n) {
    case Norm::H1:
      return "H1";
    case Norm::L2:
      return "L2";
    case Norm::Linf:
      return "Linf";
  }
  return "?";
}

double relative_error(const FineSpace& space, const VectorField3& reference, const VectorField3& approx, Norm norm) {
  if (reference.size() != space.num_nodes() || approx.size() != space.num_nodes())
    throw Error("relative_error: field sizes do not match the mesh");
  VectorField3 diff(space.num_nodes());
  for (int c = 0; c < 3; ++c) diff[c] = approx[c] - reference[c];
  double num = 0.0, den = 0.0;
  switch (norm) {
    case Norm::H1:
      num = std::sqrt(h1_norm_sq(space, diff));
      den = std::sqrt(h1_norm_sq(space, reference));
      break;
    case Norm::L2:
      num = std::sqrt(l2_norm_sq(space, diff));
      den = std::sqrt(l2_norm_sq(space, reference));
      break;
    case Norm::Linf:
      num = linf_norm(diff);
      den = linf_norm(reference);
      break;
  }
  if (!(den > 0.0)) throw Error("relative_error: reference has zero " + norm_name(norm) + " norm");
  return num / den;
}

double fit_rate(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error("fit_rate: abscissa and error counts differ");
  if (x.size() < 2) throw Error("fit_rate: need at least two points");
  const std::size_t n = x.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x[i] > 0.0)) throw Error("fit_rate: abscissa must be positive");
    if (!(y[i] > 0.0) || !std::isfinite(y[i])) throw Error("fit_rate: errors must be positive and finite");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx == 0.0) throw Error("fit_rate: abscissae are all equal");
  return sxy / sxx;
}

// --- output -------------------------------------------------------------------

CsvWriter::CsvWriter(const std::filesystem::path& path, std::vector<std::string> header) : columns_(header.size()) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_ = std::make_unique<std::ofstream>(path, std::ios::trunc);
  if (!*out_) throw Error("cannot write " + path.string());
  out_->imbue(std::locale::classic());
  for (std::size_t i = 0; i < header.size(); ++i) *out_ << (i ? "," : "") << header[i];
  *out_ << '\n' << std::flush;
}

CsvWriter& CsvWriter::operator<<(const std::string& field) {
  if (filled_ == columns_) throw Error("csv: too many fields in row");
  if (field.find_first_of(",\"\n") != std::string::npos) throw Error("csv: field needs quoting: " + field);
  *out_ << (filled_++ ? "," : "") << field;
  return *this;
}

CsvWriter& CsvWriter::operator<<(double value) { return *this << format_double(value); }
CsvWriter& CsvWriter::operator<<(long value) { return *this << std::to_string(value); }

void CsvWriter::end_row() {
  if (filled_ != columns_) throw Error("csv: row has " + std::to_string(filled_) + " of " + std::to_string(columns_) + " fields");
  *out_ << '\n' << std::flush;
  filled_ = 0;
}

void write_manifest(const std::filesystem::path& path, const RunConfig& cfg, const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& extra) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.imbue(std::locale::classic());
  out << "command = " << command << '\n';
  for (const auto& [k, v] : cfg.echo()) out << k << " = " << v << '\n';
  out << "initial = 0.70710678118654752,0.57735026918962576,0.40824829046386302\n";
  for (const auto& [k, v] : extra) out << k << " = " << v << '\n';
}

VectorField3 default_initial(int n) {
  return VectorField3::constant(n, {1.0 / std::sqrt(2.0), 1.0 / std::sqrt(3.0), 1.0 / std::sqrt(6.0)});
}

// --- reference ------------------------------------------------------------------

ReferenceRun reference_solution(const RunConfig& cfg, Scheme scheme, const std::filesystem::path& cache_dir) {
  cfg.validate();
  const HierMesh mesh = build_hier_mesh(1, cfg.fine_exponent);
  const FineSpace fine(mesh, coefficient_from_name(cfg.coeff));
  const std::string key = reference_key(cfg, scheme);
  std::filesystem::path file;
  ReferenceRun run;
  run.dt = cfg.reference_dt();
  if (!cache_dir.empty()) {
    std::ostringstream name;
    name << "reference_" << scheme_name(scheme) << "_h" << cfg.fine_exponent << "_" << std::hex
         << std::hash<std::string>{}(key) << ".bin";
    file = cache_dir / name.str();
    if (read_reference(file, key, fine.num_nodes(), run)) return run;
  }
  const SchemeConfig sc = scheme_config(cfg, scheme, run.dt);
  run.steps = step_count(cfg.T, run.dt);
  double first = 0.0;
  const Stopwatch total;
  Stopwatch lap;
  run.field = run_reference(sc, fine, default_initial(fine.num_nodes()), run.steps, [&](int step, const VectorField3&) {
    if (step == 1) first = lap.seconds();
  });
  run.seconds = total.seconds();
  run.step_seconds = run.steps > 1 ? (run.seconds - first) / (run.steps - 1) : run.seconds;
  if (!file.empty()) write_reference(file, key, run);
  return run;
}

// --- convergence -----------------------------------------------------------

ConvergenceReport convergence_study(const RunConfig& cfg) {
  cfg.validate();
  ConvergenceReport report;
  std::filesystem::create_directories(cfg.out);
  CsvWriter rows(cfg.out / "convergence.csv",
                 {"scheme", "measurement", "form", "tau", "algorithm", "accelerated", "nc", "layers", "dofs", "steps",
                  "h1", "l2", "linf", "unit_deviation", "basis_s", "tensor_s", "step_s", "status"});
  write_manifest(cfg.out / "manifest.txt", cfg, "convergence",
                 {{"rate-fit", "least squares over all nc points; headline abscissa = coarse dofs"}});
  if (cfg.nc.empty() || cfg.schemes.empty()) {
    CsvWriter(cfg.out / "rates.csv", {"scheme", "measurement", "form", "tau", "algorithm", "accelerated", "layers",
                                      "points", "rate_vs_dofs", "rate_vs_nc"});
    return report;
  }
  const CoefficientField kappa = coefficient_from_name(cfg.coeff);
  for (Scheme s : cfg.schemes) report.references[s] = reference_solution(cfg, s, cfg.out / "cache");

  std::vector<int> algorithms{1};
  if (cfg.length_preserving) algorithms.push_back(2);

  for (int nc : cfg.nc) {
    const HierMesh mesh = build_hier_mesh(nc, cfg.refinement_for(nc));
    const FineSpace fine(mesh, kappa);
    for (const auto& [s, ref] : report.references)
      if (ref.field.size() != fine.num_nodes()) throw Error("reference lattice mismatch");
    const VectorField3 m0 = default_initial(fine.num_nodes());
    for (MeasurementKind kind : cfg.measurements) {
      for (FormChoice form : cfg.forms) {
        for (int layer : cfg.layers) {
          const Stopwatch bw;
          const CoarseSpace cs = cached_coarse_space(fine, kind, form, layer, cfg.out / "cache");
          const double basis_s = bw.seconds();
          std::optional<TripleTensorSet> tensors;
          double tensor_s = 0.0;
          for (Scheme s : cfg.schemes) {
            for (const TauChoice& tau : cfg.taus) {
              const double t = tau.resolve(mesh.coarse_size());
              const int steps = step_count(cfg.T, t);
              const SchemeConfig sc = scheme_config(cfg, s, cfg.T / steps);
              std::vector<std::pair<int, bool>> variants;
              for (int a : algorithms) variants.push_back({a, false});
              if (cfg.accelerated && s == Scheme::cimrak) variants.push_back({1, true});
              for (auto [alg, acc] : variants) {
                ConvergenceRow r{s, kind, form, tau, alg, acc, nc, layer, cs.dim(), steps};
                r.basis_seconds = basis_s;
                const Stopwatch sw;
                try {
                  CoarseState st;
                  if (acc) {
                    if (!tensors) {
                      const Stopwatch tw;
                      tensors = cached_tensors(cs, cfg.out / "cache");
                      tensor_s = tw.seconds();
                    }
                    st = run_accelerated(sc, cs, *tensors, m0, steps);
                  } else if (alg == 2) {
                    st = run_algorithm2(sc, cs, m0, steps);
                  } else {
                    st = run_algorithm1(sc, cs, m0, steps);
                  }
                  r.step_seconds = sw.seconds();
                  const VectorField3& trace = fine_trace(cs, st);
                  const VectorField3& ref = report.references.at(s).field;
                  r.h1 = relative_error(fine, ref, trace, Norm::H1);
                  r.l2 = relative_error(fine, ref, trace, Norm::L2);
                  r.linf = relative_error(fine, ref, trace, Norm::Linf);
                  r.deviation = unit_length_deviation(fine, trace);
                } catch (const SolveError&) {
                  // diverged cell: recorded, the sweep continues
                  r.failed = true;
                  r.step_seconds = sw.seconds();
                  r.h1 = r.l2 = r.linf = r.deviation = std::numeric_limits<double>::quiet_NaN();
                }
                r.tensor_seconds = acc ? tensor_s : 0.0;
                rows << scheme_name(s) << measurement_name(kind) << form_choice_name(form) << tau.name() << alg
                     << (acc ? "true" : "false") << nc << layer << r.dofs << steps << r.h1 << r.l2 << r.linf
                     << r.deviation << basis_s << r.tensor_seconds << r.step_seconds
                     << (r.failed ? "solve_failed" : "ok");
                rows.end_row();
                report.rows.push_back(r);
              }
            }
          }
        }
      }
    }
  }

  CsvWriter rates(cfg.out / "rates.csv", {"scheme", "measurement", "form", "tau", "algorithm", "accelerated",
                                          "layers", "points", "rate_vs_dofs", "rate_vs_nc"});
  // group rows by everything except nc
  std::vector<bool> used(report.rows.size(), false);
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    if (used[i]) continue;
    const ConvergenceRow& a = report.rows[i];
    std::vector<double> nc, dofs, err;
    bool failed = false;
    for (std::size_t j = i; j < report.rows.size(); ++j) {
      const ConvergenceRow& b = report.rows[j];
      if (used[j] || b.scheme != a.scheme || b.measurement != a.measurement || b.form != a.form ||
          b.tau.name() != a.tau.name() || b.algorithm != a.algorithm || b.accelerated != a.accelerated ||
          b.layer != a.layer)
        continue;
      used[j] = true;
      nc.push_back(b.nc);
      dofs.push_back(b.dofs);
      err.push_back(b.h1);
      failed |= b.failed;
    }
    if (nc.size() < 3) continue;
    RateRow rr{a.scheme, a.measurement, a.form, a.tau, a.algorithm, a.accelerated, a.layer,
               static_cast<int>(nc.size())};
    if (failed) {
      rr.rate_vs_dofs = rr.rate_vs_nc = std::numeric_limits<double>::quiet_NaN();
    } else {
      rr.rate_vs_dofs = fit_rate(dofs, err);
      rr.rate_vs_nc = fit_rate(nc, err);
    }
    rates << scheme_name(rr.scheme) << measurement_name(rr.measurement) << form_choice_name(rr.form)
          << rr.tau.name() << rr.algorithm << (rr.accelerated ? "true" : "false") << rr.layer << rr.points
          << rr.rate_vs_dofs << rr.rate_vs_nc;
    rates.end_row();
    report.rates.push_back(rr);
  }
  return report;
}

// --- decay -----------------------------------------------------------------

std::vector<int> interior_centers(const HierMesh& mesh, MeasurementKind kind) {
  std::vector<int> out;
  if (kind == MeasurementKind::volume) {
    for (int t = 0; t < mesh.num_coarse_triangles(); ++t) {
      bool inner = true;
      for (int v : mesh.coarse_triangles[t]) {
        const auto& p = mesh.coarse_nodes[v];
        inner &= p[0] > 0.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 1.0;
      }
      if (inner) out.push_back(t);
    }
  } else if (kind == MeasurementKind::edge) {
    for (int e = 0; e < mesh.num_coarse_edges(); ++e) {
      bool inner = true;
      for (int v : mesh.coarse_edges[e]) {
        const auto& p = mesh.coarse_nodes[v];
        inner &= p[0] > 0.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 1.0;
      }
      if (inner) out.push_back(e);
    }
  } else {
    throw Error("interior_centers: nodal measurements have no coarse centers");
  }
  return out;
}

std::vector<DecayEntry> decay_study(const FineSpace& fine, MeasurementKind kind, VariationalForm form,
                                    const std::vector<int>& centers, const std::vector<int>& layers,
                                    const std::filesystem::path& csv) {
  const MeasurementSet ms = build_measurements(fine.mesh(), kind);
  std::vector<DecayEntry> out;
  std::unique_ptr<CsvWriter> w;
  if (!csv.empty()) w = std::make_unique<CsvWriter>(csv, std::vector<std::string>{"i", "layer", "norm", "ratio"});
  for (int i : centers) {
    const std::vector<DecayRow> prof = decay_profile(fine, form, ms, i, layers);
    for (const DecayRow& r : prof) {
      for (auto [norm, v] : {std::pair{Norm::H1, r.energy}, std::pair{Norm::L2, r.l2}, std::pair{Norm::Linf, r.linf}}) {
        out.push_back({i, r.layer, norm, v});
        if (w) {
          *w << i << r.layer << norm_name(norm) << v;
          w->end_row();
        }
      }
    }
  }
  return out;
}

// --- timing ----------------------------------------------------------------

double accelerated_step_cost(const SchemeConfig& scfg, const TripleTensorSet& tensors, const CoarseState& start,
                             int steps, int warmup) {
  CoarseState st = start;
  std::vector<double> t;
  for (int n = 0; n < steps + warmup; ++n) {
    const Stopwatch sw;
    st = step_coarse_accelerated(scfg, tensors, st, n);
    if (n >= warmup) t.push_back(sw.seconds());
  }
  if (t.empty()) return 0.0;
  std::nth_element(t.begin(), t.begin() + t.size() / 2, t.end());
  return t[t.size() / 2];
}

namespace {

// Naive fine-level assembly of int grad psi_a . grad psi_b psi_c psi_d for
// every quadruple of bases touching each fine triangle; run on a prefix of
// triangles until `budget` seconds, then extrapolated by quadruple count.
double estimate_four_index_seconds(const CoarseSpace& cs, double budget) {
  const FineSpace& fine = *cs.fine;
  const HierMesh& mesh = fine.mesh();
  const BasisSet& b = *cs.basis1;
  const int nt = fine.num_triangles();
  // bases active per coarse element
  std::vector<std::vector<int>> active(mesh.num_coarse_triangles());
  std::vector<std::vector<int>> node_tris = mesh.fine_node_triangles;
  for (int i = 0; i < b.size(); ++i) {
    std::vector<int> elems;
    for (int v : b.columns[i].index)
      for (int t : node_tris[v]) elems.push_back(mesh.parent[t]);
    std::sort(elems.begin(), elems.end());
    elems.erase(std::unique(elems.begin(), elems.end()), elems.end());
    for (int e : elems) active[e].push_back(i);
  }
  double total_quads = 0.0;
  for (int t = 0; t < nt; ++t) total_quads += std::pow(static_cast<double>(active[mesh.parent[t]].size()), 4);
  // dense local values per basis on the element's three nodes
  std::vector<Vector> dense(b.size());
  for (int i = 0; i < b.size(); ++i) dense[i] = b.column_dense(i);

  double done = 0.0, sink = 0.0;
  const Stopwatch sw;
  for (int t = 0; t < nt && sw.seconds() < budget; ++t) {
    const auto& tri = mesh.fine_triangles[t];
    const auto& g = fine.gradients(t);
    const double area = fine.area(t);
    const auto& act = active[mesh.parent[t]];
    const int k = static_cast<int>(act.size());
    std::vector<Eigen::Vector2d> grad(k);
    std::vector<std::array<double, 6>> val(k);
    for (int a = 0; a < k; ++a) {
      const Vector& d = dense[act[a]];
      grad[a] = d[tri[0]] * g[0] + d[tri[1]] * g[1] + d[tri[2]] * g[2];
      for (int q = 0; q < 6; ++q)
        val[a][q] = kRule6.points[q][0] * d[tri[0]] + kRule6.points[q][1] * d[tri[1]] + kRule6.points[q][2] * d[tri[2]];
    }
    for (int a = 0; a < k && sw.seconds() < budget; ++a)
      for (int bb = 0; bb < k; ++bb) {
        const double gg = grad[a].dot(grad[bb]) * area;
        for (int c = 0; c < k; ++c)
          for (int d = 0; d < k; ++d) {
            double s = 0.0;
            for (int q = 0; q < 6; ++q) s += kRule6.weights[q] * val[c][q] * val[d][q];
            sink += gg * s;
            done += 1.0;
          }
      }
  }
  const double elapsed = sw.seconds();
  if (sink == 12345.678) return 0.0;  // keep the loop observable
  return done > 0.0 ? elapsed / done * total_quads : 0.0;
}

}  // namespace

TimingReport timing_report(const RunConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out);
  TimingReport rep;
  rep.nc = cfg.nc;
  const CoefficientField kappa = coefficient_from_name(cfg.coeff);
  const FormChoice form = cfg.forms.empty() ? FormChoice::mixed : cfg.forms.front();
  const int layer = cfg.layers.empty() ? 6 : cfg.layers.front();

  const ReferenceRun ref = reference_solution(cfg, Scheme::cimrak, cfg.out / "cache");
  // first step excluded as warm-up, rescaled to the full run
  const double ct0 = ref.step_seconds * ref.steps;

  rep.rows = {{"CT0", "fine reference solve (Cimrak all steps)", {}, false},
              {"CT1", "fine four-index tensor assembly", {}, true},
              {"CT2", "basis generation", {}, false},
              {"CT3", "three-index tensor assembly", {}, false},
              {"CT4", "accelerated coarse stepping (tau = H^2)", {}, false}};
  for (int nc : cfg.nc) {
    const HierMesh mesh = build_hier_mesh(nc, cfg.refinement_for(nc));
    const FineSpace fine(mesh, kappa);
    const Stopwatch bw;
    const CoarseSpace cs = make_coarse_space(fine, MeasurementKind::volume, form, layer);
    const double ct2 = bw.seconds();
    const Stopwatch tw;
    const TripleTensorSet tensors = precompute_tensors(cs);
    const double ct3 = tw.seconds();
    const double H = mesh.coarse_size();
    const int steps = step_count(cfg.T, H * H);
    const SchemeConfig sc = scheme_config(cfg, Scheme::cimrak, cfg.T / steps);
    const CoarseState start = interpolate_initial(cs, default_initial(fine.num_nodes()));
    // two repetitions; the first is warm-up
    double ct4 = 0.0;
    for (int rep_i = 0; rep_i < 2; ++rep_i) {
      CoarseState st = start;
      const Stopwatch sw;
      for (int n = 0; n < steps; ++n) st = step_coarse_accelerated(sc, tensors, st, n);
      ct4 = sw.seconds();
    }
    rep.accelerated_step_seconds.push_back(accelerated_step_cost(sc, tensors, start, std::min(steps, 50) + 5));
    rep.rows[0].seconds.push_back(ct0);
    rep.rows[1].seconds.push_back(estimate_four_index_seconds(cs, 0.5));
    rep.rows[2].seconds.push_back(ct2);
    rep.rows[3].seconds.push_back(ct3);
    rep.rows[4].seconds.push_back(ct4);
  }
  std::vector<std::string> header{"label", "description", "estimate"};
  for (int nc : cfg.nc) header.push_back("nc" + std::to_string(nc) + "_s");
  CsvWriter w(cfg.out / "timing.csv", header);
  for (const TimingRow& r : rep.rows) {
    w << r.label << r.description << (r.estimate ? "true" : "false");
    for (double s : r.seconds) w << s;
    w.end_row();
  }
  write_manifest(cfg.out / "manifest.txt", cfg, "timing",
                 {{"timing-form", form_choice_name(form)},
                  {"timing-layer", std::to_string(layer)},
                  {"CT1", "extrapolated from a truncated naive assembly (estimate)"}});
  return rep;
}

}  // namespace llhom
