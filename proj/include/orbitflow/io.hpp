#pragma once

// Text formats: matrix files, restricted root data (JSON), and trajectory
// output (CSV or JSON).
//
// Matrix file: first line "n kind" (kind = hermitian | symmetric), then n
// rows of whitespace-separated entries; complex entries are written "re+imi".
// A file may hold several matrices back to back.

#include "orbitflow/integrate.hpp"
#include "orbitflow/polar.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace orbitflow {

/// Malformed file contents.
class ParseError : public InputError {
 public:
  using InputError::InputError;
};

// ---------------------------------------------------------------------------
// Numbers and matrices.

/// Shortest round-trip representation of a double.
inline std::string format_double(double x) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

inline Complex parse_complex(const std::string& token) {
  const char* s = token.c_str();
  char* end = nullptr;
  const double first = std::strtod(s, &end);
  if (end == s) throw ParseError("bad matrix entry '" + token + "'");
  if (*end == '\0') return {first, 0.0};
  if (*end == 'i' && end[1] == '\0') return {0.0, first};
  if (*end != '+' && *end != '-') throw ParseError("bad matrix entry '" + token + "'");
  const char* im_start = end;
  const double second = std::strtod(im_start, &end);
  if (end == im_start || *end != 'i' || end[1] != '\0') {
    throw ParseError("bad matrix entry '" + token + "'");
  }
  return {first, second};
}

inline std::string format_complex(const Complex& z) {
  std::string im = format_double(z.imag());
  if (im.front() != '-') im = "+" + im;
  return format_double(z.real()) + im + "i";
}

struct MatrixFileEntry {
  ModelKind kind = ModelKind::real_symmetric;
  ComplexMatrix value;
};

/// Reads every matrix in the stream.
inline std::vector<MatrixFileEntry> read_matrices(std::istream& in) {
  std::vector<MatrixFileEntry> out;
  std::string line;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  while (next_line()) {
    std::istringstream header(line);
    int n = 0;
    std::string kind;
    if (!(header >> n >> kind) || n < 1) throw ParseError("bad matrix header '" + line + "'");
    MatrixFileEntry entry;
    entry.kind = parse_model_kind(kind);
    entry.value.resize(n, n);
    for (int i = 0; i < n; ++i) {
      if (!next_line()) throw ParseError("matrix ends after " + std::to_string(i) + " rows");
      std::istringstream row(line);
      std::string token;
      int j = 0;
      while (row >> token) {
        if (j >= n) throw ParseError("too many entries in row " + std::to_string(i + 1));
        entry.value(i, j++) = parse_complex(token);
      }
      if (j != n) throw ParseError("too few entries in row " + std::to_string(i + 1));
    }
    if (entry.kind == ModelKind::real_symmetric && entry.value.imag().cwiseAbs().maxCoeff() != 0) {
      throw ParseError("complex entry in a symmetric matrix");
    }
    require_hermitian(entry.value, "matrix file");
    out.push_back(std::move(entry));
  }
  return out;
}

inline std::vector<MatrixFileEntry> read_matrix_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return read_matrices(in);
}

inline void write_matrix(std::ostream& os, const ComplexMatrix& m, ModelKind kind) {
  os << m.rows() << ' ' << to_string(kind) << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      os << (kind == ModelKind::hermitian ? format_complex(m(i, j)) : format_double(m(i, j).real()));
    }
    os << '\n';
  }
}

template <class Scalar>
Matrix<Scalar> convert_matrix(const ComplexMatrix& m) {
  if constexpr (is_complex_v<Scalar>) {
    return m;
  } else {
    return m.real();
  }
}

// ---------------------------------------------------------------------------
// Restricted root data.
//
// {
//   "section_dim": d, "h_dim": h,
//   "roots": [{"coeffs": [...], "multiplicity": k}, ...],
//   "brackets": [["E1", 1, "B2", 1, "E3", 2, 0.5], ...]
// }
// Labels are "h", "s", "E<r>", "B<r>" with 1-based root and element indices;
// a tuple (x, i, y, j, z, k, c) means [x_i, y_j] contains c z_k.

inline std::string basis_label_name(const BasisLabel& l) {
  switch (l.part) {
    case BasisPart::h: return "h";
    case BasisPart::s: return "s";
    case BasisPart::E: return "E" + std::to_string(l.root + 1);
    case BasisPart::B: return "B" + std::to_string(l.root + 1);
  }
  return "?";
}

inline BasisLabel parse_basis_label(const std::string& name, int index) {
  if (index < 1) throw ParseError("basis indices are 1-based");
  if (name == "h") return {BasisPart::h, -1, index - 1};
  if (name == "s") return {BasisPart::s, -1, index - 1};
  if (name.size() >= 2 && (name[0] == 'E' || name[0] == 'B')) {
    try {
      std::size_t used = 0;
      const int root = std::stoi(name.substr(1), &used);
      if (used + 1 == name.size() && root >= 1) {
        return {name[0] == 'E' ? BasisPart::E : BasisPart::B, root - 1, index - 1};
      }
    } catch (const std::exception&) {
    }
  }
  throw ParseError("bad basis label '" + name + "'");
}

inline nlohmann::ordered_json root_system_to_json(const RestrictedRootSystem& rs) {
  nlohmann::ordered_json j;
  j["section_dim"] = rs.section_dim();
  j["h_dim"] = rs.h_dim();
  j["roots"] = nlohmann::ordered_json::array();
  for (const auto& r : rs.roots()) {
    j["roots"].push_back({{"coeffs", std::vector<double>(r.coeffs.begin(), r.coeffs.end())},
                          {"multiplicity", r.multiplicity}});
  }
  auto& brackets = j["brackets"] = nlohmann::ordered_json::array();
  for (int x = 0; x < rs.dim(); ++x) {
    for (int y = 0; y < rs.dim(); ++y) {
      for (const auto& [z, v] : rs.bracket_terms(x, y)) {
        const auto lx = rs.label_of(x), ly = rs.label_of(y), lz = rs.label_of(z);
        brackets.push_back({basis_label_name(lx), lx.index + 1, basis_label_name(ly), ly.index + 1,
                            basis_label_name(lz), lz.index + 1, v});
      }
    }
  }
  return j;
}

inline RestrictedRootSystem root_system_from_json(const nlohmann::json& j) {
  try {
    std::vector<RestrictedRoot> roots;
    const int d = j.at("section_dim").get<int>();
    for (const auto& r : j.at("roots")) {
      const auto c = r.at("coeffs").get<std::vector<double>>();
      roots.push_back({Vector::Map(c.data(), Eigen::Index(c.size())), r.at("multiplicity").get<int>()});
    }
    RestrictedRootSystem rs(d, j.value("h_dim", 0), std::move(roots));
    for (const auto& t : j.at("brackets")) {
      if (!t.is_array() || t.size() != 7) throw ParseError("bracket tuples need 7 entries");
      const int x = rs.index_of(parse_basis_label(t[0].get<std::string>(), t[1].get<int>()));
      const int y = rs.index_of(parse_basis_label(t[2].get<std::string>(), t[3].get<int>()));
      const int z = rs.index_of(parse_basis_label(t[4].get<std::string>(), t[5].get<int>()));
      rs.add_bracket_term(x, y, z, t[6].get<double>());
    }
    return rs;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("root data: ") + e.what());
  }
}

inline RestrictedRootSystem read_root_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("root data '" + path + "': " + e.what());
  }
  return root_system_from_json(j);
}

// ---------------------------------------------------------------------------
// Trajectory documents.

struct SampleRecord {
  double t = 0;
  std::vector<double> a;
  std::vector<double> p;
  double energy = 0;
  double min_gap = 0;
  std::array<double, 3> casimir{};
  /// (i, j, re, im), 1-based; for polar runs (root, index, value, 0).
  std::vector<std::array<double, 4>> spin;
};

struct EventRecord {
  double time = 0;
  std::string kind;
  int i = 0;
  int j = 0;
};

/// Model-independent form of a trajectory, as written to disk.
struct TrajectoryDocument {
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
  std::vector<SampleRecord> samples;
  std::vector<EventRecord> events;
};

template <class Scalar>
TrajectoryDocument make_document(const Trajectory<Scalar>& traj) {
  TrajectoryDocument doc;
  doc.metadata["sign_convention"] = traj.metadata.sign_convention;
  doc.metadata["sign_flipped"] = traj.metadata.sign_flipped;
  doc.metadata["rtol"] = traj.metadata.rtol;
  doc.metadata["atol"] = traj.metadata.atol;
  doc.metadata["gap_floor"] = traj.metadata.gap_floor;
  doc.metadata["steps_accepted"] = traj.steps_accepted;
  doc.metadata["steps_rejected"] = traj.steps_rejected;
  doc.metadata["max_frozen_defect"] = traj.max_frozen_defect;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto& s = traj.states[k];
    SampleRecord r;
    r.t = traj.times[k];
    r.a.assign(s.a.begin(), s.a.end());
    r.p.assign(s.p.begin(), s.p.end());
    r.energy = traj.energy[k];
    r.min_gap = traj.min_gap[k];
    r.casimir = traj.casimir[k];
    for (int i = 0; i < s.dim(); ++i) {
      for (int j = 0; j < s.dim(); ++j) {
        if (i != j) r.spin.push_back({double(i + 1), double(j + 1), real_part(s.Y(i, j)), imag_part(s.Y(i, j))});
      }
    }
    doc.samples.push_back(std::move(r));
  }
  for (const auto& e : traj.events) {
    doc.events.push_back({e.time, std::string(to_string(e.kind)), e.i + 1, e.j + 1});
  }
  return doc;
}

inline TrajectoryDocument make_document(const PolarTrajectory& traj) {
  TrajectoryDocument doc;
  doc.metadata["sign_convention"] = "dY/dt = -[Y, Z], Z = sum_r Y_r / r(A)^2";
  doc.metadata["spin_layout"] = "root";
  doc.metadata["casimir"] = "Tr(ad_Y^(2k))";
  doc.metadata["max_frozen_defect"] = traj.max_frozen_defect;
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    const auto& s = traj.states[k];
    SampleRecord r;
    r.t = traj.times[k];
    r.a.assign(s.A0.begin(), s.A0.end());
    r.p.assign(s.p0.begin(), s.p0.end());
    r.energy = traj.energy[k];
    r.min_gap = traj.min_root_value[k];
    r.casimir = traj.casimir[k];
    for (std::size_t root = 0; root < s.Yroots.size(); ++root) {
      for (Eigen::Index i = 0; i < s.Yroots[root].size(); ++i) {
        r.spin.push_back({double(root + 1), double(i + 1), s.Yroots[root][i], 0.0});
      }
    }
    doc.samples.push_back(std::move(r));
  }
  for (const auto& e : traj.events) {
    doc.events.push_back({e.time, std::string(to_string(e.kind)), e.i + 1, e.j + 1});
  }
  return doc;
}

/// CSV: '#' metadata lines, then columns
/// t,a_1..a_n,p_1..p_n,energy,min_gap,casimir_1..casimir_3.
inline void write_csv(std::ostream& os, const TrajectoryDocument& doc) {
  for (const auto& [key, value] : doc.metadata.items()) {
    os << "# " << key << " = " << (value.is_string() ? value.get<std::string>() : value.dump()) << '\n';
  }
  for (const auto& e : doc.events) {
    os << "# event " << e.kind << " t = " << format_double(e.time) << " pair = " << e.i << ','
       << e.j << '\n';
  }
  const std::size_t n = doc.samples.empty() ? 0 : doc.samples.front().a.size();
  os << 't';
  for (std::size_t i = 1; i <= n; ++i) os << ",a_" << i;
  for (std::size_t i = 1; i <= n; ++i) os << ",p_" << i;
  os << ",energy,min_gap,casimir_1,casimir_2,casimir_3\n";
  for (const auto& s : doc.samples) {
    os << format_double(s.t);
    for (double v : s.a) os << ',' << format_double(v);
    for (double v : s.p) os << ',' << format_double(v);
    os << ',' << format_double(s.energy) << ',' << format_double(s.min_gap);
    for (double c : s.casimir) os << ',' << format_double(c);
    os << '\n';
  }
}

inline nlohmann::ordered_json to_json(const TrajectoryDocument& doc) {
  nlohmann::ordered_json j;
  j["metadata"] = doc.metadata;
  auto& samples = j["samples"] = nlohmann::ordered_json::array();
  for (const auto& s : doc.samples) {
    nlohmann::ordered_json r;
    r["t"] = s.t;
    r["a"] = s.a;
    r["p"] = s.p;
    r["energy"] = s.energy;
    r["min_gap"] = s.min_gap;
    r["casimirs"] = s.casimir;
    auto& spin = r["Y"] = nlohmann::ordered_json::array();
    for (const auto& y : s.spin) spin.push_back({int(y[0]), int(y[1]), y[2], y[3]});
    samples.push_back(std::move(r));
  }
  auto& events = j["events"] = nlohmann::ordered_json::array();
  for (const auto& e : doc.events) {
    events.push_back({{"time", e.time}, {"kind", e.kind}, {"i", e.i}, {"j", e.j}});
  }
  return j;
}

inline TrajectoryDocument document_from_json(const nlohmann::ordered_json& j) {
  try {
    TrajectoryDocument doc;
    doc.metadata = j.at("metadata");
    for (const auto& r : j.at("samples")) {
      SampleRecord s;
      s.t = r.at("t").get<double>();
      s.a = r.at("a").get<std::vector<double>>();
      s.p = r.at("p").get<std::vector<double>>();
      s.energy = r.at("energy").get<double>();
      s.min_gap = r.at("min_gap").get<double>();
      s.casimir = r.at("casimirs").get<std::array<double, 3>>();
      for (const auto& y : r.at("Y")) {
        s.spin.push_back({double(y.at(0).get<int>()), double(y.at(1).get<int>()),
                          y.at(2).get<double>(), y.at(3).get<double>()});
      }
      doc.samples.push_back(std::move(s));
    }
    for (const auto& e : j.at("events")) {
      doc.events.push_back({e.at("time").get<double>(), e.at("kind").get<std::string>(),
                            e.at("i").get<int>(), e.at("j").get<int>()});
    }
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("trajectory json: ") + e.what());
  }
}

inline void write_json(std::ostream& os, const TrajectoryDocument& doc) {
  os << to_json(doc).dump(1) << '\n';
}

inline TrajectoryDocument read_json_document(std::istream& in) {
  // Ordered parsing keeps metadata keys in file order for byte-exact rewrites.
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("trajectory json: ") + e.what());
  }
  return document_from_json(j);
}

}  // namespace orbitflow
