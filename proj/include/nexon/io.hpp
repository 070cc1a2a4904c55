#pragma once

// File formats: data and manifest CSVs, key = value run configs, and the
// versioned JSON documents for truth, fits and nu0 selections.

#include "nexon/core.hpp"
#include "nexon/simulate.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace nexon::io {

namespace fs = std::filesystem;
using Json = nlohmann::json;

inline constexpr int kSchemaMajor = 1;
inline constexpr const char* kSchemaVersion = "1.0";

// ---------------------------------------------------------------- text utils

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto t = trim(s);
  const auto* end = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(t.data(), end, v);
  if (ec != std::errc() || ptr != end || t.empty())
    throw DataError(where + ": '" + t + "' is not a number");
  return v;
}

inline long long parse_int(std::string_view s, const std::string& where) {
  long long v = 0;
  const auto t = trim(s);
  const auto* end = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(t.data(), end, v);
  if (ec != std::errc() || ptr != end || t.empty())
    throw DataError(where + ": '" + t + "' is not an integer");
  return v;
}

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::ofstream open_output(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::out | std::ios::binary | mode);
  if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
  return out;
}

/// Checks that `path` can be written without altering an existing file.
inline void ensure_writable(const fs::path& path) {
  const bool existed = fs::exists(path);
  open_output(path, std::ios::app).close();
  if (!existed) fs::remove(path);
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  if (!out) throw ConfigError("write to '" + path.string() + "' failed");
}

// ------------------------------------------------------------------- data csv

struct DataTable {
  std::vector<std::string> names;
  Matrix values;
};

inline DataTable read_data_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  const std::string where = path.string();
  std::string line;
  if (!std::getline(in, line)) throw DataError(where + ": empty file");
  DataTable t;
  t.names = split(line, ',');
  const auto P = t.names.size();
  std::vector<double> buf;
  std::size_t rows = 0, lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != P)
      throw DataError(where + ":" + std::to_string(lineno) + ": expected " + std::to_string(P) +
                      " fields, got " + std::to_string(cells.size()));
    for (const auto& c : cells) {
      buf.push_back(parse_double(c, where + ":" + std::to_string(lineno)));
      if (!std::isfinite(buf.back()))
        throw DataError(where + ":" + std::to_string(lineno) + ": non-finite value '" + std::string(trim(c)) + "'");
    }
    ++rows;
  }
  t.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      buf.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(P));
  return t;
}

inline void write_data_csv(const fs::path& path, const std::vector<std::string>& names,
                           const Matrix& data) {
  if (static_cast<Eigen::Index>(names.size()) != data.cols())
    throw DataError("write_data_csv: header and column counts differ");
  std::string text;
  for (std::size_t c = 0; c < names.size(); ++c) text += (c ? "," : "") + names[c];
  text += '\n';
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) text += (c ? "," : "") + format_double(data(r, c));
    text += '\n';
  }
  write_text(path, text);
}

// ------------------------------------------------------------------- manifest

struct ManifestEntry {
  std::string file;  // relative to the manifest's directory unless absolute
  int level;
  int n;
};

inline std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::istringstream in(read_text(path));
  const std::string where = path.string();
  std::string line;
  if (!std::getline(in, line) || split(line, ',') != std::vector<std::string>{"file", "level", "n"})
    throw DataError(where + ": header must be 'file,level,n'");
  std::vector<ManifestEntry> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    const auto loc = where + ":" + std::to_string(lineno);
    if (cells.size() != 3) throw DataError(loc + ": expected 3 fields");
    out.push_back({cells[0], static_cast<int>(parse_int(cells[1], loc)),
                   static_cast<int>(parse_int(cells[2], loc))});
  }
  if (out.empty()) throw DataError(where + ": no levels listed");
  return out;
}

inline void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::string text = "file,level,n\n";
  for (const auto& e : entries)
    text += e.file + "," + std::to_string(e.level) + "," + std::to_string(e.n) + "\n";
  write_text(path, text);
}

/// Loads every file listed in the manifest. Column names must agree across
/// files and row counts must match the manifest.
inline GroupedDataset load_dataset(const fs::path& manifest_path) {
  const auto entries = read_manifest(manifest_path);
  const auto dir = manifest_path.parent_path();
  GroupedDataset ds;
  std::string first_file;
  for (const auto& e : entries) {
    const fs::path file = fs::path(e.file).is_absolute() ? fs::path(e.file) : dir / e.file;
    auto table = read_data_csv(file);
    if (table.values.rows() != e.n)
      throw DataError(file.string() + ": manifest says n=" + std::to_string(e.n) + " but file has " +
                      std::to_string(table.values.rows()) + " rows");
    if (ds.groups.empty()) {
      ds.variable_names = table.names;
      first_file = file.string();
    } else if (table.names.size() != ds.variable_names.size()) {
      throw DataError("dimension mismatch: " + file.string() + " has " +
                      std::to_string(table.names.size()) + " columns, " + first_file + " has " +
                      std::to_string(ds.variable_names.size()));
    } else if (table.names != ds.variable_names) {
      throw DataError("column names differ between " + first_file + " and " + file.string());
    }
    ds.groups.push_back({OrdinalLevel{e.level}, std::move(table.values)});
  }
  ds.validate();
  return ds;
}

// ----------------------------------------------------------------- run config

/// Flat key = value file. Lines starting with '#' are comments. Every key
/// must be one the caller declares; unknown keys are an error.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& where = "config") {
    KeyValueConfig c;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto t = trim(line);
      if (t.empty() || t.front() == '#') continue;
      const auto eq = t.find('=');
      const auto loc = where + ":" + std::to_string(lineno);
      if (eq == std::string::npos) throw ConfigError(loc + ": expected 'key = value'");
      auto key = trim(std::string_view(t).substr(0, eq));
      auto value = trim(std::string_view(t).substr(eq + 1));
      if (key.empty()) throw ConfigError(loc + ": empty key");
      if (c.values_.contains(key)) throw ConfigError(loc + ": duplicate key '" + key + "'");
      c.values_[key] = value;
    }
    return c;
  }

  static KeyValueConfig load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  void reject_unknown(const std::vector<std::string>& known) const {
    for (const auto& [k, v] : values_)
      if (std::find(known.begin(), known.end(), k) == known.end())
        throw ConfigError("unknown config key '" + k + "'");
  }

  bool has(const std::string& key) const { return values_.contains(key); }
  const std::string& raw(const std::string& key) const { return values_.at(key); }

  template <typename T>
  void read(const std::string& key, T& out) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return;
    try {
      if constexpr (std::is_same_v<T, std::string>) {
        out = it->second;
      } else if constexpr (std::is_same_v<T, bool>) {
        if (it->second == "true") out = true;
        else if (it->second == "false") out = false;
        else throw DataError("expected true or false");
      } else if constexpr (std::is_floating_point_v<T>) {
        out = static_cast<T>(parse_double(it->second, key));
      } else {
        out = static_cast<T>(parse_int(it->second, key));
      }
    } catch (const DataError& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }

  std::optional<std::vector<double>> list(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    std::vector<double> out;
    try {
      for (const auto& cell : split(it->second, ',')) out.push_back(parse_double(cell, key));
    } catch (const DataError& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------- json

inline void check_schema(const Json& doc, const std::string& kind, const std::string& where) {
  if (!doc.is_object() || !doc.contains("schema_version") || !doc["schema_version"].is_string())
    throw DataError(where + ": missing schema_version");
  const auto version = doc["schema_version"].get<std::string>();
  const auto dot = version.find('.');
  int major = -1;
  try {
    major = static_cast<int>(parse_int(version.substr(0, dot), where));
  } catch (const DataError&) {
  }
  if (major != kSchemaMajor)
    throw DataError(where + ": unsupported schema_version '" + version + "' (this build reads " +
                    std::to_string(kSchemaMajor) + ".x)");
  if (doc.value("kind", std::string{}) != kind)
    throw DataError(where + ": expected a '" + kind + "' document");
}

inline Json read_json(const fs::path& path, const std::string& kind) {
  Json doc;
  try {
    doc = Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  check_schema(doc, kind, path.string());
  return doc;
}

inline void write_json(const fs::path& path, const Json& doc) { write_text(path, doc.dump(1) + "\n"); }

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const Json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw DataError(what + ": expected a non-empty matrix");
  const auto R = static_cast<Eigen::Index>(j.size());
  const auto C = static_cast<Eigen::Index>(j[0].size());
  Matrix m(R, C);
  for (Eigen::Index r = 0; r < R; ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != C)
      throw DataError(what + ": ragged matrix");
    for (Eigen::Index c = 0; c < C; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

inline Json edges_to_json(const EdgeSet& e) {
  Json out = Json::array();
  for (auto [i, j] : e) out.push_back({i, j});
  return out;
}

inline EdgeSet edges_from_json(const Json& j) {
  EdgeSet e;
  for (const auto& pair : j) e.insert(pair.at(0).get<int>(), pair.at(1).get<int>());
  return e;
}

// Truth document -------------------------------------------------------------

inline Json truth_to_json(const SimulationTruth& t, const std::vector<std::string>& names) {
  Json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["kind"] = "truth";
  doc["P"] = names.size();
  doc["variable_names"] = names;
  Json levels = Json::array();
  for (std::size_t k = 0; k < t.levels.size(); ++k) {
    Json lv;
    lv["level"] = t.levels[k].value;
    lv["edges"] = edges_to_json(t.adjacency[k]);
    Json pc = Json::array();
    for (auto [i, j] : t.adjacency[k]) pc.push_back({i, j, t.partial_corr[k](i, j)});
    lv["partial_correlations"] = std::move(pc);
    levels.push_back(std::move(lv));
  }
  doc["levels"] = std::move(levels);
  doc["appearing"] = edges_to_json(t.appearing);
  doc["disappearing"] = edges_to_json(t.disappearing);
  doc["stable"] = edges_to_json(t.stable);
  return doc;
}

struct TruthDocument {
  int P = 0;
  std::vector<std::string> variable_names;
  std::vector<int> levels;
  std::vector<EdgeSet> adjacency;
  EdgeSet appearing, disappearing, stable;
};

inline TruthDocument truth_from_json(const Json& doc) {
  TruthDocument t;
  try {
    t.P = doc.at("P").get<int>();
    t.variable_names = doc.at("variable_names").get<std::vector<std::string>>();
    for (const auto& lv : doc.at("levels")) {
      t.levels.push_back(lv.at("level").get<int>());
      t.adjacency.push_back(edges_from_json(lv.at("edges")));
    }
    t.appearing = edges_from_json(doc.at("appearing"));
    t.disappearing = edges_from_json(doc.at("disappearing"));
    t.stable = edges_from_json(doc.at("stable"));
  } catch (const Json::exception& e) {
    throw DataError(std::string("truth document: ") + e.what());
  }
  return t;
}

// Fit document ---------------------------------------------------------------

struct FitDocument {
  std::string method;  // "nexon" or "ssl"
  std::vector<std::string> variable_names;
  std::vector<int> levels;
  std::vector<double> nu0;
  std::vector<Matrix> ppi;
  std::vector<Matrix> omega;
  std::optional<Matrix> zeta_mean;
  std::optional<Matrix> beta_mean;
  std::optional<Matrix> beta_var;
  std::vector<std::vector<double>> elbo_traces;  // one per engine run
  std::vector<bool> converged;
  std::vector<int> iterations;
  Json hyperparameters;
};

inline Json fit_to_json(const FitDocument& f) {
  Json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["kind"] = "fit";
  doc["method"] = f.method;
  doc["variable_names"] = f.variable_names;
  doc["hyperparameters"] = f.hyperparameters;
  doc["converged"] = f.converged;
  doc["iterations"] = f.iterations;
  doc["elbo_traces"] = f.elbo_traces;
  Json levels = Json::array();
  for (std::size_t k = 0; k < f.levels.size(); ++k) {
    Json lv;
    lv["level"] = f.levels[k];
    lv["nu0"] = f.nu0[k];
    lv["ppi"] = matrix_to_json(f.ppi[k]);
    lv["omega"] = matrix_to_json(f.omega[k]);
    levels.push_back(std::move(lv));
  }
  doc["levels"] = std::move(levels);
  if (f.zeta_mean) doc["zeta_mean"] = matrix_to_json(*f.zeta_mean);
  if (f.beta_mean) doc["beta_mean"] = matrix_to_json(*f.beta_mean);
  if (f.beta_var) doc["beta_var"] = matrix_to_json(*f.beta_var);
  return doc;
}

inline FitDocument fit_from_json(const Json& doc) {
  FitDocument f;
  try {
    f.method = doc.at("method").get<std::string>();
    f.variable_names = doc.at("variable_names").get<std::vector<std::string>>();
    f.hyperparameters = doc.at("hyperparameters");
    f.converged = doc.at("converged").get<std::vector<bool>>();
    f.iterations = doc.at("iterations").get<std::vector<int>>();
    f.elbo_traces = doc.at("elbo_traces").get<std::vector<std::vector<double>>>();
    for (const auto& lv : doc.at("levels")) {
      f.levels.push_back(lv.at("level").get<int>());
      f.nu0.push_back(lv.at("nu0").get<double>());
      f.ppi.push_back(matrix_from_json(lv.at("ppi"), "ppi"));
      f.omega.push_back(matrix_from_json(lv.at("omega"), "omega"));
    }
    if (doc.contains("zeta_mean")) f.zeta_mean = matrix_from_json(doc["zeta_mean"], "zeta_mean");
    if (doc.contains("beta_mean")) f.beta_mean = matrix_from_json(doc["beta_mean"], "beta_mean");
    if (doc.contains("beta_var")) f.beta_var = matrix_from_json(doc["beta_var"], "beta_var");
  } catch (const Json::exception& e) {
    throw DataError(std::string("fit document: ") + e.what());
  }
  return f;
}

}  // namespace nexon::io
