// orbitflow: simulate reduced ballistic dynamics, compare against the
// eigenvalue-flow oracle, trace chamber billiards, and compute orbit
// distances.
//
// Exit codes: 0 success, 1 numeric failure, 2 usage or parse error.

#include "orbitflow/orbitflow.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

using namespace orbitflow;

namespace {

constexpr int kExitNumeric = 1;
constexpr int kExitUsage = 2;

// ---------------------------------------------------------------------------
// Logging, controlled by ORBITFLOW_LOG = error | warn | info | debug.

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("ORBITFLOW_LOG");
    const std::string v = env ? env : "warn";
    if (v == "error") return LogLevel::error;
    if (v == "info") return LogLevel::info;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::warn;
  }();
  return level;
}

void log(LogLevel level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= log_level()) std::cerr << "orbitflow [" << names[int(level)] << "] " << msg << '\n';
}

/// Thrown for failures that map to exit code 1.
struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Config {
  std::string model = "hermitian";
  int n = 3;
  std::uint64_t seed = 1;
  double t_end = 1.0;
  double tol = 1e-10;
  int samples = 200;
  std::string out = "-";
  std::string format = "csv";
  double threshold = 1e-6;
  std::string root_file;
  double gap_floor = 1e-7;
  bool flip_sign = false;
  std::string init;
  int batch = 1;
  std::string x0;
  std::string v0;
};

IntegrateOptions integrate_options(const Config& c) {
  IntegrateOptions o;
  o.rtol = c.tol;
  o.atol = c.tol * 1e-2;
  o.samples = c.samples;
  o.gap_floor = c.gap_floor;
  o.sign = c.flip_sign ? SpinSign::flipped : SpinSign::standard;
  return o;
}

std::string with_index(const std::string& path, int k) {
  if (path == "-") return path;
  const auto dot = path.find_last_of('.');
  const auto slash = path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
    return path + "." + std::to_string(k);
  }
  return path.substr(0, dot) + "." + std::to_string(k) + path.substr(dot);
}

void write_output(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
  if (!out) throw InputError("write failed for '" + path + "'");
  log(LogLevel::info, "wrote " + path);
}

std::string render(const TrajectoryDocument& doc, const std::string& format) {
  std::ostringstream os;
  if (format == "json") {
    write_json(os, doc);
  } else {
    write_csv(os, doc);
  }
  return os.str();
}

Vector parse_vector(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    char* end = nullptr;
    const double x = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') throw ParseError("bad vector entry '" + tok + "'");
    v.push_back(x);
  }
  if (v.empty()) throw ParseError("empty vector");
  return Vector::Map(v.data(), Eigen::Index(v.size()));
}

MatrixModel matrix_model(const Config& c) {
  if (c.model == "polar") throw InputError("this command needs --model hermitian or symmetric");
  return {parse_model_kind(c.model), c.n};
}

/// Explicit (A, alpha) from --init, or a seeded random regular pair.
template <class S>
CotangentPoint<S> initial_pair(const Config& c, std::uint64_t seed) {
  if (!c.init.empty()) {
    const auto entries = read_matrix_file(c.init);
    if (entries.size() != 2) throw ParseError("--init file must hold two matrices (A, alpha)");
    CotangentPoint<S> x{convert_matrix<S>(entries[0].value), convert_matrix<S>(entries[1].value)};
    if (x.A.rows() != x.alpha.rows()) throw ParseError("A and alpha differ in size");
    if constexpr (!is_complex_v<S>) {
      for (const auto& e : entries) {
        if (e.value.imag().cwiseAbs().maxCoeff() != 0) {
          throw InputError("complex entries for the symmetric model");
        }
      }
    }
    x.validate();
    return x;
  }
  std::mt19937_64 rng(seed);
  return random_regular_pair<S>(c.n, rng);
}

void add_run_metadata(TrajectoryDocument& doc, const Config& c, std::uint64_t seed, int n) {
  auto meta = nlohmann::ordered_json::object();
  meta["model"] = c.model;
  meta["n"] = n;
  if (c.init.empty() && c.model != "polar") {
    meta["seed"] = seed;
  } else if (c.model == "polar") {
    meta["seed"] = seed;
    meta["root_file"] = c.root_file;
  } else {
    meta["init"] = c.init;
  }
  meta["t_end"] = c.t_end;
  for (const auto& [k, v] : doc.metadata.items()) meta[k] = v;
  doc.metadata = std::move(meta);
}

// ---------------------------------------------------------------------------
// simulate

template <class S>
int simulate_matrix(const Config& c, std::uint64_t seed, const std::string& out) {
  const auto x = initial_pair<S>(c, seed);
  auto [s0, frame] = reduce(x);
  log(LogLevel::debug, "residual gauge: " + frame.describe_residual());
  try {
    const auto traj = integrate(s0, c.t_end, integrate_options(c));
    auto doc = make_document(traj);
    add_run_metadata(doc, c, seed, s0.dim());
    write_output(out, render(doc, c.format));
    if (traj.has_event(EventKind::frozen_violation)) {
      log(LogLevel::warn, "frozen spin entries exceeded the monitor bound");
    }
    log(LogLevel::info, "steps accepted " + std::to_string(traj.steps_accepted) + ", rejected " +
                            std::to_string(traj.steps_rejected));
    return 0;
  } catch (const IntegrationError<S>& e) {
    auto doc = make_document(e.partial);
    add_run_metadata(doc, c, seed, s0.dim());
    doc.metadata["error"] = e.what();
    write_output(out, render(doc, c.format));
    throw NumericFailure(std::string("integration failed: ") + e.what());
  }
}

/// Random polar state: A0 folded into the chamber and kept away from the
/// walls, p0 Gaussian, spin scaled to unit norm.
PolarReducedState random_polar_state(const RestrictedRootSystem& rs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  const int d = rs.section_dim();
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Vector x(d);
    for (auto& v : x) v = 2 * g(rng);
    for (int guard = 0; guard < 10000; ++guard) {
      int bad = -1;
      for (int r = 0; r < rs.root_count(); ++r) {
        if (rs.root_value(r, x) < 0) {
          bad = r;
          break;
        }
      }
      if (bad < 0) break;
      x = rs.reflect(bad, x);
    }
    bool ok = true;
    for (int r = 0; r < rs.root_count(); ++r) {
      if (rs.root_value(r, x) < 0.2 * rs.root(r).coeffs.norm()) ok = false;
    }
    if (!ok) continue;
    PolarReducedState s{x, Vector(d), {}};
    for (auto& v : s.p0) v = g(rng);
    double norm2 = 0;
    for (const auto& r : rs.roots()) {
      Vector y(r.multiplicity);
      for (auto& v : y) v = g(rng);
      norm2 += y.squaredNorm();
      s.Yroots.push_back(std::move(y));
    }
    for (auto& y : s.Yroots) y /= std::sqrt(norm2);
    return s;
  }
  throw InputError("could not sample a chamber point away from the walls");
}

int simulate_polar(const Config& c, std::uint64_t seed, const std::string& out) {
  if (c.root_file.empty()) throw InputError("--model polar needs --root-file");
  const auto rs = read_root_file(c.root_file);
  const auto report = verify_root_system(rs, 20);
  if (!report.passed()) {
    throw InputError("root data fails verification (relation " +
                     std::to_string(report.relation_defect) + ", antisymmetry " +
                     std::to_string(report.antisymmetry_defect) + ", jacobi " +
                     std::to_string(report.jacobi_defect) + ")");
  }
  const auto s0 = random_polar_state(rs, seed);
  PolarTrajectory traj;
  try {
    traj = polar_integrate(s0, rs, c.t_end, integrate_options(c));
  } catch (const std::runtime_error& e) {
    throw NumericFailure(e.what());
  }
  auto doc = make_document(traj);
  doc.metadata["rtol"] = c.tol;
  doc.metadata["atol"] = c.tol * 1e-2;
  doc.metadata["gap_floor"] = c.gap_floor;
  doc.metadata["sign_flipped"] = c.flip_sign;
  add_run_metadata(doc, c, seed, rs.section_dim());
  write_output(out, render(doc, c.format));
  return 0;
}

int simulate_one(const Config& c, std::uint64_t seed, const std::string& out) {
  if (c.model == "polar") return simulate_polar(c, seed, out);
  const auto model = matrix_model(c);
  return model.kind == ModelKind::hermitian ? simulate_matrix<Complex>(c, seed, out)
                                            : simulate_matrix<double>(c, seed, out);
}

int cmd_simulate(const Config& c) {
  if (c.batch <= 1) return simulate_one(c, c.seed, c.out);
  if (c.out == "-") throw InputError("--batch needs --out");
  if (!c.init.empty()) throw InputError("--batch uses seeded random data, not --init");
  // Independent runs; each owns its state and output file.
  std::vector<std::future<int>> runs;
  for (int k = 0; k < c.batch; ++k) {
    runs.push_back(std::async(std::launch::async, [&c, k] {
      return simulate_one(c, c.seed + std::uint64_t(k), with_index(c.out, k));
    }));
  }
  int status = 0;
  std::string first_error;
  for (auto& r : runs) {
    try {
      status = std::max(status, r.get());
    } catch (const NumericFailure& e) {
      status = std::max(status, kExitNumeric);
      if (first_error.empty()) first_error = e.what();
    }
  }
  if (!first_error.empty()) throw NumericFailure(first_error);
  return status;
}

// ---------------------------------------------------------------------------
// compare-oracle

template <class S>
int compare_matrix(const Config& c) {
  const MatrixModel model{kind_of<S>(), c.n};
  const auto x = initial_pair<S>(c, c.seed);
  const MatrixModel m{model.kind, x.dim()};
  const auto s0 = reduce(x).first;
  auto opts = integrate_options(c);
  opts.include_steps = true;
  Trajectory<S> traj;
  std::string failure;
  try {
    traj = integrate(s0, c.t_end, opts);
  } catch (const IntegrationError<S>& e) {
    traj = e.partial;
    failure = e.what();
  }
  const RealMatrix rows = eigenflow<S>(x.A, x.alpha, m, traj.times);
  Vector dev = Vector::Zero(m.n);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    dev = dev.cwiseMax((traj.states[k].a - rows.row(Eigen::Index(k)).transpose()).cwiseAbs());
  }
  const double worst = dev.size() ? dev.maxCoeff() : 0.0;
  const bool pass = failure.empty() && worst < c.threshold;

  std::ostringstream os;
  char buf[64];
  os << "model " << to_string(m.kind) << " n " << m.n << " t_end " << format_double(c.t_end)
     << " samples " << traj.size() << (c.flip_sign ? " sign flipped" : "") << '\n';
  for (int i = 0; i < m.n; ++i) {
    std::snprintf(buf, sizeof buf, "%.6e", dev[i]);
    os << "channel " << i + 1 << " max_dev " << buf << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.6e", worst);
  os << "max_dev " << buf;
  std::snprintf(buf, sizeof buf, "%.1e", c.threshold);
  os << " threshold " << buf << ' ' << (pass ? "PASS" : "FAIL") << '\n';
  if (!failure.empty()) os << "integration error: " << failure << '\n';
  write_output(c.out, os.str());
  return pass ? 0 : kExitNumeric;
}

int cmd_compare(const Config& c) {
  const auto model = matrix_model(c);
  return model.kind == ModelKind::hermitian ? compare_matrix<Complex>(c) : compare_matrix<double>(c);
}

// ---------------------------------------------------------------------------
// billiard

int cmd_billiard(const Config& c) {
  const RestrictedRootSystem rs =
      c.root_file.empty() ? builtin_root_system(matrix_model(c)) : read_root_file(c.root_file);
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> g;
  Vector x0, v0;
  if (!c.x0.empty()) {
    x0 = parse_vector(c.x0);
  } else {
    x0 = random_polar_state(rs, c.seed).A0;
  }
  if (!c.v0.empty()) {
    v0 = parse_vector(c.v0);
  } else {
    v0.resize(rs.section_dim());
    for (auto& v : v0) v = g(rng);
  }
  if (x0.size() != rs.section_dim() || v0.size() != rs.section_dim()) {
    throw InputError("x0 and v0 need " + std::to_string(rs.section_dim()) + " components");
  }
  const auto path = billiard_geodesic(rs, x0, v0, c.t_end);
  const int d = rs.section_dim();
  std::ostringstream os;
  auto vec = [](const Vector& v) {
    std::vector<double> out(v.begin(), v.end());
    return out;
  };
  if (c.format == "json") {
    nlohmann::ordered_json j;
    j["section_dim"] = d;
    j["x0"] = vec(x0);
    j["v0"] = vec(v0);
    auto& verts = j["vertices"] = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < path.vertices.size(); ++k) {
      verts.push_back({{"t", path.vertex_times[k]}, {"x", vec(path.vertices[k])},
                       {"v", vec(path.velocities[k])}});
    }
    auto& evs = j["events"] = nlohmann::ordered_json::array();
    for (const auto& e : path.events) {
      std::vector<int> walls;
      for (int w : e.walls) walls.push_back(w + 1);
      evs.push_back({{"t", e.time}, {"walls", walls}, {"corner", e.corner()}, {"v_in", vec(e.v_in)},
                     {"v_out", vec(e.v_out)}});
    }
    os << j.dump(1) << '\n';
  } else {
    os << "# seed = " << c.seed << '\n';
    for (const auto& e : path.events) {
      os << "# event t = " << format_double(e.time) << " walls =";
      for (int w : e.walls) os << ' ' << w + 1;
      os << (e.corner() ? " corner" : "") << " v_in =";
      for (double v : e.v_in) os << ' ' << format_double(v);
      os << " v_out =";
      for (double v : e.v_out) os << ' ' << format_double(v);
      os << '\n';
    }
    os << 't';
    for (int i = 1; i <= d; ++i) os << ",x_" << i;
    for (int i = 1; i <= d; ++i) os << ",v_" << i;
    os << '\n';
    for (std::size_t k = 0; k < path.vertices.size(); ++k) {
      os << format_double(path.vertex_times[k]);
      for (double v : path.vertices[k]) os << ',' << format_double(v);
      for (double v : path.velocities[k]) os << ',' << format_double(v);
      os << '\n';
    }
  }
  write_output(c.out, os.str());
  return 0;
}

// ---------------------------------------------------------------------------
// distance

int cmd_distance(const Config& c, const std::string& file_a, const std::string& file_b,
                 bool model_given) {
  auto load = [&](const std::string& path) {
    const auto entries = read_matrix_file(path);
    if (entries.empty()) throw ParseError("'" + path + "' holds no matrix");
    const auto& e = entries.front();
    const ModelKind kind = model_given ? parse_model_kind(c.model) : e.kind;
    const MatrixModel m{kind, int(e.value.rows())};
    return kind == ModelKind::hermitian ? chamber_map<Complex>(e.value, m)
                                        : chamber_map<double>(convert_matrix<double>(e.value), m);
  };
  const auto p = load(file_a);
  const auto q = load(file_b);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g\n", distance(p, q));
  write_output(c.out, buf);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reduced ballistic dynamics on orbit spaces of matrix models"};
  app.require_subcommand(1);
  Config c;

  auto common = [&c](CLI::App* sub) {
    sub->add_option("--model", c.model, "hermitian | symmetric | polar")
        ->check(CLI::IsMember({"hermitian", "symmetric", "polar"}));
    sub->add_option("--n", c.n, "matrix dimension")->check(CLI::Range(1, 64));
    sub->add_option("--seed", c.seed, "seed for random initial data");
    sub->add_option("--out", c.out, "output path ('-' for stdout)");
    sub->add_option("--root-file", c.root_file, "restricted root data (JSON)");
  };
  auto dynamic = [&c](CLI::App* sub) {
    sub->add_option("--t-end", c.t_end, "final time")->check(CLI::PositiveNumber);
    sub->add_option("--tol", c.tol, "relative tolerance (absolute = tol / 100)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--samples", c.samples, "uniform output samples")->check(CLI::Range(2, 10000000));
    sub->add_option("--gap-floor", c.gap_floor, "reject steps with a smaller interacting gap")
        ->check(CLI::NonNegativeNumber);
    sub->add_flag("--debug-flip-sign", c.flip_sign, "negate the spin flow (negative control)");
    sub->add_option("--init", c.init, "matrix file with A then alpha");
  };

  auto* simulate = app.add_subcommand("simulate", "integrate the reduced equations");
  common(simulate);
  dynamic(simulate);
  simulate->add_option("--format", c.format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
  simulate->add_option("--batch", c.batch, "run seeds seed..seed+batch-1 concurrently")
      ->check(CLI::Range(1, 4096));

  auto* compare = app.add_subcommand("compare-oracle", "compare against eigenvalues of A + t alpha");
  common(compare);
  dynamic(compare);
  compare->add_option("--threshold", c.threshold, "pass threshold on max deviation")
      ->check(CLI::PositiveNumber);

  auto* billiard = app.add_subcommand("billiard", "geodesic billiard in the Weyl chamber");
  common(billiard);
  billiard->add_option("--t-end", c.t_end, "final time")->check(CLI::NonNegativeNumber);
  billiard->add_option("--format", c.format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
  billiard->add_option("--x0", c.x0, "start point, comma separated");
  billiard->add_option("--v0", c.v0, "direction, comma separated");

  auto* dist = app.add_subcommand("distance", "orbit-space distance of two matrix files");
  std::string file_a, file_b;
  dist->add_option("file_a", file_a, "first matrix file")->required();
  dist->add_option("file_b", file_b, "second matrix file")->required();
  auto* model_opt = dist->add_option("--model", c.model, "override the kind in the files")
                        ->check(CLI::IsMember({"hermitian", "symmetric"}));
  dist->add_option("--out", c.out, "output path ('-' for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(c);
    if (*compare) return cmd_compare(c);
    if (*billiard) return cmd_billiard(c);
    if (*dist) return cmd_distance(c, file_a, file_b, model_opt->count() > 0);
  } catch (const NumericFailure& e) {
    log(LogLevel::error, e.what());
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {  // InputError, ParseError
    log(LogLevel::error, e.what());
    return kExitUsage;
  } catch (const InvariantError& e) {
    log(LogLevel::error, e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    log(LogLevel::error, e.what());
    return kExitNumeric;
  }
  return kExitUsage;
}
