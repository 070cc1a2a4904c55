#pragma once

// Command implementations behind the nexon executable: run configuration,
// simulate / select-nu0 / fit / evaluate / rank, and the replicate harness.

#include "nexon/baseline.hpp"
#include "nexon/core.hpp"
#include "nexon/engine.hpp"
#include "nexon/io.hpp"
#include "nexon/metrics.hpp"
#include "nexon/selection.hpp"
#include "nexon/simulate.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace nexon {

namespace fs = std::filesystem;

struct RunConfig {
  SimulationConfig simulation;
  // Unset model constants are resolved per dataset by resolve_hyperparameters.
  std::optional<std::vector<double>> nu0;
  double nu1 = 1.0;
  double lambda_diag = 1.0;
  std::optional<double> n0;
  std::optional<double> t0_sq;
  std::optional<double> prior_edges_mean;  // default P
  std::optional<double> prior_edges_sd;    // default P/2
  double alpha_sigma = 2.0;
  double beta_sigma = 2.0;
  double gamma_ebic = 0.5;
  FitControls controls;
  std::vector<double> nu0_grid;  // empty: default grid
  int nu0_grid_points = 20;
  bool scale_columns = false;
  int replicates = 1;

  static const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys{
        "P", "levels", "n_base_edges", "n_appearing", "n_disappearing", "n_per_group",
        "partial_corr_magnitude", "jitter_margin", "seed",
        "nu0", "nu1", "lambda_diag", "n0", "t0_sq", "prior_edges_mean", "prior_edges_sd",
        "alpha_sigma", "beta_sigma", "gamma_ebic",
        "max_iter", "elbo_rel_tol", "min_iter", "threads", "warm_start_sweeps", "warm_start_ppi",
        "nu0_grid", "nu0_grid_points", "scale_columns", "replicates"};
    return keys;
  }

  static RunConfig from_text(const std::string& text, const std::string& where = "config") {
    return from_kv(io::KeyValueConfig::parse(text, where));
  }

  static RunConfig load(const fs::path& path) { return from_kv(io::KeyValueConfig::load(path)); }

  static RunConfig from_kv(const io::KeyValueConfig& kv) {
    kv.reject_unknown(known_keys());
    RunConfig c;
    auto& s = c.simulation;
    kv.read("P", s.P);
    if (auto lv = kv.list("levels")) {
      s.levels.clear();
      for (double v : *lv) {
        if (v != std::floor(v)) throw ConfigError("config key 'levels': levels must be integers");
        s.levels.push_back(OrdinalLevel{static_cast<int>(v)});
      }
    }
    kv.read("n_base_edges", s.n_base_edges);
    kv.read("n_appearing", s.n_appearing);
    kv.read("n_disappearing", s.n_disappearing);
    kv.read("n_per_group", s.n_per_group);
    kv.read("partial_corr_magnitude", s.partial_corr_magnitude);
    kv.read("jitter_margin", s.jitter_margin);
    kv.read("seed", s.seed);
    c.nu0 = kv.list("nu0");
    kv.read("nu1", c.nu1);
    kv.read("lambda_diag", c.lambda_diag);
    if (kv.has("n0")) kv.read("n0", c.n0.emplace());
    if (kv.has("t0_sq")) kv.read("t0_sq", c.t0_sq.emplace());
    if (kv.has("prior_edges_mean")) kv.read("prior_edges_mean", c.prior_edges_mean.emplace());
    if (kv.has("prior_edges_sd")) kv.read("prior_edges_sd", c.prior_edges_sd.emplace());
    kv.read("alpha_sigma", c.alpha_sigma);
    kv.read("beta_sigma", c.beta_sigma);
    kv.read("gamma_ebic", c.gamma_ebic);
    kv.read("max_iter", c.controls.max_iter);
    kv.read("elbo_rel_tol", c.controls.elbo_rel_tol);
    kv.read("min_iter", c.controls.min_iter);
    kv.read("threads", c.controls.threads);
    kv.read("warm_start_sweeps", c.controls.warm_start_sweeps);
    kv.read("warm_start_ppi", c.controls.warm_start_ppi);
    if (auto g = kv.list("nu0_grid")) c.nu0_grid = *g;
    kv.read("nu0_grid_points", c.nu0_grid_points);
    kv.read("scale_columns", c.scale_columns);
    kv.read("replicates", c.replicates);
    c.validate();
    return c;
  }

  void validate() const {
    controls.validate();
    if (!(nu1 > 0.0)) throw ConfigError("nu1 must be positive");
    if (nu0_grid_points < 1) throw ConfigError("nu0_grid_points must be at least 1");
    if (replicates < 1) throw ConfigError("replicates must be at least 1");
    if (t0_sq && !(*t0_sq > 0.0)) throw ConfigError("t0_sq must be positive");
    if (!(gamma_ebic >= 0.0 && gamma_ebic <= 1.0)) throw ConfigError("gamma_ebic must lie in [0, 1]");
    search_config().resolved_grid(nu1);
  }

  Nu0SearchConfig search_config() const {
    Nu0SearchConfig sc;
    sc.grid = nu0_grid.empty() ? Nu0SearchConfig::default_grid(nu1, nu0_grid_points) : nu0_grid;
    sc.gamma_ebic = gamma_ebic;
    return sc;
  }

  /// Model constants for a dataset with P variables and L levels. nu0 comes
  /// from `selected` when given, else from the config, else nu1/20.
  Hyperparameters resolve_hyperparameters(int P, std::size_t L,
                                          const std::vector<double>* selected = nullptr) const {
    Hyperparameters h;
    h.nu1 = nu1;
    h.lambda_diag = lambda_diag;
    h.alpha_sigma = alpha_sigma;
    h.beta_sigma = beta_sigma;
    h.gamma_ebic = gamma_ebic;
    const auto prior = edge_count_prior(P, prior_edges_mean.value_or(P),
                                        prior_edges_sd.value_or(0.5 * P));
    h.n0 = n0.value_or(prior.n0);
    h.t0_sq = t0_sq.value_or(prior.t0_sq);
    if (selected) {
      h.nu0 = *selected;
    } else if (nu0) {
      if (nu0->size() == 1) h.nu0.assign(L, nu0->front());
      else h.nu0 = *nu0;
    } else {
      h.nu0.assign(L, nu1 / 20.0);
    }
    h.validate(L);
    return h;
  }
};

// ------------------------------------------------------------------ simulate

struct SimulateOutputs {
  std::vector<fs::path> data_files;
  fs::path manifest;
  fs::path truth;
};

inline SimulateOutputs cmd_simulate(const RunConfig& config, const fs::path& out_dir) {
  config.simulation.validate();
  SimulateOutputs out;
  out.manifest = out_dir / "manifest.csv";
  out.truth = out_dir / "truth.json";
  io::ensure_writable(out.manifest);

  const auto ex = simulate_experiment(config.simulation);
  std::vector<io::ManifestEntry> entries;
  for (const auto& g : ex.data.groups) {
    const std::string name = "level_" + std::to_string(g.level.value) + ".csv";
    io::write_data_csv(out_dir / name, ex.data.variable_names, g.data);
    entries.push_back({name, g.level.value, static_cast<int>(g.data.rows())});
    out.data_files.push_back(out_dir / name);
  }
  io::write_manifest(out.manifest, entries);
  io::write_json(out.truth, io::truth_to_json(ex.truth, ex.data.variable_names));
  return out;
}

// ---------------------------------------------------------------- select-nu0

inline io::Json selection_to_json(const std::vector<Nu0Selection>& sel, double gamma) {
  io::Json doc;
  doc["schema_version"] = io::kSchemaVersion;
  doc["kind"] = "selection";
  doc["gamma_ebic"] = gamma;
  io::Json levels = io::Json::array();
  for (const auto& s : sel) {
    io::Json lv;
    lv["level"] = s.level;
    lv["grid"] = s.grid;
    io::Json scores = io::Json::array();
    for (double v : s.ebic) scores.push_back(std::isfinite(v) ? io::Json(v) : io::Json(nullptr));
    lv["ebic"] = std::move(scores);
    lv["failures"] = s.failures;
    lv["selected_nu0"] = s.selected_nu0;
    levels.push_back(std::move(lv));
  }
  doc["levels"] = std::move(levels);
  return doc;
}

/// Selected nu0 per level, in the order of `levels`.
inline std::vector<double> selected_nu0_from_json(const io::Json& doc, const std::vector<int>& levels) {
  std::vector<double> out;
  try {
    for (int level : levels) {
      bool found = false;
      for (const auto& lv : doc.at("levels"))
        if (lv.at("level").get<int>() == level) {
          out.push_back(lv.at("selected_nu0").get<double>());
          found = true;
          break;
        }
      if (!found)
        throw DataError("selection report has no entry for level " + std::to_string(level));
    }
  } catch (const io::Json::exception& e) {
    throw DataError(std::string("selection document: ") + e.what());
  }
  return out;
}

inline GroupedDataset load_prepared(const fs::path& manifest, bool scale) {
  return center_groups(io::load_dataset(manifest), scale);
}

inline std::vector<int> level_ints(const GroupedDataset& ds) {
  std::vector<int> out;
  for (const auto& g : ds.groups) out.push_back(g.level.value);
  return out;
}

inline SslParams ssl_params(const Hyperparameters& h, std::size_t k) {
  return {h.nu0.at(k), h.nu1, h.lambda_diag, h.n0, h.t0_sq};
}

inline std::vector<Nu0Selection> run_select_nu0(const RunConfig& config, const GroupedDataset& ds) {
  const auto h = config.resolve_hyperparameters(static_cast<int>(ds.num_variables()), ds.num_levels());
  SslParams base = ssl_params(h, 0);
  return line_search_nu0(ds, base, config.search_config(), config.controls);
}

inline void cmd_select_nu0(const RunConfig& config, const fs::path& manifest, const fs::path& out) {
  io::ensure_writable(out);
  const auto ds = load_prepared(manifest, config.scale_columns);
  io::write_json(out, selection_to_json(run_select_nu0(config, ds), config.gamma_ebic));
}

// ----------------------------------------------------------------------- fit

inline io::Json hyperparameters_to_json(const Hyperparameters& h) {
  return {{"nu0", h.nu0},       {"nu1", h.nu1},
          {"lambda_diag", h.lambda_diag}, {"n0", h.n0},
          {"t0_sq", h.t0_sq},   {"alpha_sigma", h.alpha_sigma},
          {"beta_sigma", h.beta_sigma}, {"gamma_ebic", h.gamma_ebic}};
}

inline io::FitDocument run_fit(const GroupedDataset& ds, const Hyperparameters& h,
                               const FitControls& controls, const std::string& method) {
  io::FitDocument doc;
  doc.method = method;
  doc.variable_names = ds.variable_names;
  doc.levels = level_ints(ds);
  doc.nu0 = h.nu0;
  doc.hyperparameters = hyperparameters_to_json(h);
  if (method == "nexon") {
    auto report = fit(ds, h, controls);
    auto& s = report.final_state;
    doc.ppi = s.ppi;
    doc.omega = s.omega;
    doc.zeta_mean = s.zeta_mean;
    doc.beta_mean = s.beta_mean;
    doc.beta_var = s.beta_var;
    doc.elbo_traces.push_back(report.elbo_trace);
    doc.converged.push_back(report.converged);
    doc.iterations.push_back(report.iterations);
  } else if (method == "ssl") {
    const auto L = ds.num_levels();
    std::vector<SslFit> fits(L);
    FitControls inner = controls;
    inner.threads = 1;
    parallel_for(L, controls.threads,
                 [&](std::size_t k) { fits[k] = fit_ssl(ds.groups[k].data, ssl_params(h, k), inner); });
    for (auto& f : fits) {
      doc.ppi.push_back(std::move(f.ppi));
      doc.omega.push_back(std::move(f.omega));
      doc.elbo_traces.push_back(std::move(f.elbo_trace));
      doc.converged.push_back(f.converged);
      doc.iterations.push_back(f.iterations);
    }
  } else {
    throw ConfigError("unknown method '" + method + "' (expected nexon or ssl)");
  }
  return doc;
}

inline void cmd_fit(const RunConfig& config, const fs::path& manifest,
                    const std::optional<fs::path>& selection, const std::string& method,
                    const fs::path& out) {
  if (method != "nexon" && method != "ssl")
    throw ConfigError("unknown method '" + method + "' (expected nexon or ssl)");
  io::ensure_writable(out);
  const auto ds = load_prepared(manifest, config.scale_columns);
  std::optional<std::vector<double>> chosen;
  if (selection)
    chosen = selected_nu0_from_json(io::read_json(*selection, "selection"), level_ints(ds));
  const auto h = config.resolve_hyperparameters(static_cast<int>(ds.num_variables()), ds.num_levels(),
                                                chosen ? &*chosen : nullptr);
  io::write_json(out, io::fit_to_json(run_fit(ds, h, config.controls, method)));
}

// ------------------------------------------------------------------ evaluate

struct MetricsRow {
  std::string replicate;
  std::string method;
  int level;
  double auc;
  double precision;
  double recall;
};

inline std::vector<MetricsRow> evaluate_fit(const io::FitDocument& fit, const io::TruthDocument& truth,
                                            const std::string& replicate) {
  if (fit.levels != truth.levels) throw DataError("fit and truth list different levels");
  if (fit.variable_names.size() != static_cast<std::size_t>(truth.P))
    throw DataError("fit and truth disagree on the number of variables");
  const auto report = evaluate_levels(fit.levels, fit.ppi, truth.adjacency);
  std::vector<MetricsRow> rows;
  for (const auto& m : report.per_level)
    rows.push_back({replicate, fit.method, m.level, m.auc, m.precision, m.recall});
  return rows;
}

inline constexpr const char* kMetricsHeader = "replicate,method,level,auc,precision,recall";

/// Appends rows to `path`, writing the header first when the file is new.
inline void append_metrics_csv(const fs::path& path, const std::vector<MetricsRow>& rows) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  if (!fresh) {
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    if (io::trim(header) != kMetricsHeader)
      throw DataError(path.string() + ": existing file has a different header");
  }
  auto out = io::open_output(path, std::ios::app);
  if (fresh) out << kMetricsHeader << '\n';
  for (const auto& r : rows)
    out << r.replicate << ',' << r.method << ',' << r.level << ',' << io::format_double(r.auc) << ','
        << io::format_double(r.precision) << ',' << io::format_double(r.recall) << '\n';
}

inline void cmd_evaluate(const fs::path& fit_path, const fs::path& truth_path, const fs::path& out,
                         const std::string& replicate) {
  const auto fit = io::fit_from_json(io::read_json(fit_path, "fit"));
  const auto truth = io::truth_from_json(io::read_json(truth_path, "truth"));
  append_metrics_csv(out, evaluate_fit(fit, truth, replicate));
}

// ---------------------------------------------------------------------- rank

struct RankOutputs {
  fs::path ranking;
  fs::path positive_edges;
  fs::path negative_edges;
};

/// Beta matrix used for ranking: the fitted posterior mean, or for a fit
/// without one, the least-squares slope of omega on level when allowed.
inline Matrix ranking_beta(const io::FitDocument& fit, bool allow_ols_proxy) {
  if (fit.beta_mean) return *fit.beta_mean;
  if (!allow_ols_proxy)
    throw DataError("fit has no beta estimates (method '" + fit.method +
                    "'); rerun rank with --ols-proxy to use least-squares slopes of omega on level");
  std::vector<double> levels(fit.levels.begin(), fit.levels.end());
  return ols_beta_proxy(levels, fit.omega);
}

inline RankOutputs cmd_rank(const fs::path& fit_path, std::size_t k, const fs::path& out_prefix,
                            bool allow_ols_proxy = false) {
  const auto fit = io::fit_from_json(io::read_json(fit_path, "fit"));
  const Matrix beta = ranking_beta(fit, allow_ols_proxy);
  const auto& names = fit.variable_names;
  const auto sub = top_k_edge_subnetworks(beta, k);

  RankOutputs out{out_prefix.string() + "_nodes.csv", out_prefix.string() + "_positive_edges.csv",
                  out_prefix.string() + "_negative_edges.csv"};
  std::string ranking = "subnetwork,rank,node,score\n";
  auto emit = [&](const char* label, const EdgeSet& edges) {
    int r = 0;
    for (const auto& ns : rank_nodes_by_beta(beta, edges)) {
      if (!(ns.score > 0.0)) break;
      ranking += std::string(label) + "," + std::to_string(++r) + "," + names[ns.node] + "," +
                 io::format_double(ns.score) + "\n";
    }
  };
  emit("positive", sub.positive);
  emit("negative", sub.negative);
  auto edge_list = [&](const EdgeSet& edges) {
    std::string t = "node_i,node_j,beta\n";
    for (auto [i, j] : edges)
      t += names[i] + "," + names[j] + "," + io::format_double(beta(i, j)) + "\n";
    return t;
  };
  io::write_text(out.ranking, ranking);
  io::write_text(out.positive_edges, edge_list(sub.positive));
  io::write_text(out.negative_edges, edge_list(sub.negative));
  return out;
}

// ----------------------------------------------------------------- benchmark

struct ReplicateResult {
  std::vector<Nu0Selection> selection;
  io::FitDocument nexon;
  io::FitDocument ssl;
  std::vector<MetricsRow> rows;  // ssl rows then nexon rows
  SimulationTruth truth;
};

/// One replicate of the simulation study: simulate, select nu0 per level on
/// the baseline, fit both methods at the selected values, and score them.
/// The baseline fit at the selected nu0 is the one from the line search.
inline ReplicateResult run_replicate(const RunConfig& config, std::uint64_t seed,
                                     const std::string& replicate_id) {
  SimulationConfig sc = config.simulation;
  sc.seed = seed;
  auto ex = simulate_experiment(sc);
  const auto ds = center_groups(ex.data, config.scale_columns);

  ReplicateResult r;
  r.selection = run_select_nu0(config, ds);
  std::vector<double> chosen;
  for (const auto& s : r.selection) chosen.push_back(s.selected_nu0);
  const auto h = config.resolve_hyperparameters(sc.P, ds.num_levels(), &chosen);

  r.ssl.method = "ssl";
  r.ssl.variable_names = ds.variable_names;
  r.ssl.levels = level_ints(ds);
  r.ssl.nu0 = chosen;
  r.ssl.hyperparameters = hyperparameters_to_json(h);
  for (auto& s : r.selection) {
    r.ssl.ppi.push_back(s.selected_fit.ppi);
    r.ssl.omega.push_back(s.selected_fit.omega);
    r.ssl.elbo_traces.push_back(s.selected_fit.elbo_trace);
    r.ssl.converged.push_back(s.selected_fit.converged);
    r.ssl.iterations.push_back(s.selected_fit.iterations);
  }
  r.nexon = run_fit(ds, h, config.controls, "nexon");

  io::TruthDocument truth;
  truth.P = sc.P;
  truth.variable_names = ds.variable_names;
  truth.levels = level_ints(ds);
  truth.adjacency = ex.truth.adjacency;
  for (const auto* doc : {&r.ssl, &r.nexon})
    for (auto& row : evaluate_fit(*doc, truth, replicate_id)) r.rows.push_back(row);
  r.truth = std::move(ex.truth);
  return r;
}

/// Runs `config.replicates` replicates with seeds derived from the config
/// seed, appending every metrics row to `metrics_out`.
inline std::vector<MetricsRow> cmd_benchmark(const RunConfig& config, const fs::path& metrics_out) {
  io::ensure_writable(metrics_out);
  std::vector<MetricsRow> all;
  for (int rep = 1; rep <= config.replicates; ++rep) {
    const auto seed = derive_seed(config.simulation.seed, 1000 + static_cast<std::uint64_t>(rep));
    auto r = run_replicate(config, seed, std::to_string(rep));
    append_metrics_csv(metrics_out, r.rows);
    all.insert(all.end(), r.rows.begin(), r.rows.end());
  }
  return all;
}

}  // namespace nexon
