// nexon: command-line front end.
//
//   nexon simulate   --config run.cfg --out DIR
//   nexon select-nu0 --config run.cfg --manifest DIR/manifest.csv --out selection.json
//   nexon fit        --config run.cfg --manifest DIR/manifest.csv [--selection selection.json]
//                    [--method nexon|ssl] --out fit.json
//   nexon evaluate   --fit fit.json --truth DIR/truth.json --out metrics.csv [--replicate ID]
//   nexon rank       --fit fit.json [--k 50] [--ols-proxy] --out-prefix PREFIX
//   nexon benchmark  --config run.cfg --out metrics.csv
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.

#include "nexon/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

nexon::RunConfig load_config(const std::string& path) {
  return path.empty() ? nexon::RunConfig{} : nexon::RunConfig::load(path);
}

void apply_threads(nexon::RunConfig& c, int threads) {
  if (threads > 0) c.controls.threads = threads;
  c.validate();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NExON-Bayes: covariate-dependent joint Gaussian graphical models"};
  app.require_subcommand(1);

  std::string config_path, out, manifest, selection, method = "nexon", fit_path, truth_path,
                                                      replicate = "1", out_prefix;
  int threads = 0;
  std::size_t k = 50;
  bool ols_proxy = false;

  auto* sim = app.add_subcommand("simulate", "simulate grouped data and write data CSVs, manifest and truth");
  sim->add_option("--config", config_path, "run configuration file");
  sim->add_option("--out", out, "output directory")->required();

  auto* sel = app.add_subcommand("select-nu0", "EBIC line search for the spike scale of each level");
  sel->add_option("--config", config_path, "run configuration file");
  sel->add_option("--manifest", manifest, "levels manifest CSV")->required()->check(CLI::ExistingFile);
  sel->add_option("--out", out, "selection report JSON")->required();
  sel->add_option("--threads", threads, "worker threads (overrides config)");

  auto* fit = app.add_subcommand("fit", "fit NExON or the single-network baseline");
  fit->add_option("--config", config_path, "run configuration file");
  fit->add_option("--manifest", manifest, "levels manifest CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--selection", selection, "selection report supplying nu0 per level")
      ->check(CLI::ExistingFile);
  fit->add_option("--method", method, "nexon or ssl")->check(CLI::IsMember({"nexon", "ssl"}));
  fit->add_option("--out", out, "fit report JSON")->required();
  fit->add_option("--threads", threads, "worker threads (overrides config)");

  auto* eval = app.add_subcommand("evaluate", "score a fit against a truth file");
  eval->add_option("--fit", fit_path, "fit report JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--truth", truth_path, "truth JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", out, "metrics CSV (rows are appended)")->required();
  eval->add_option("--replicate", replicate, "replicate identifier written to each row");

  auto* rank = app.add_subcommand("rank", "rank nodes by adjacent |beta| in the top-k subnetworks");
  rank->add_option("--fit", fit_path, "fit report JSON")->required()->check(CLI::ExistingFile);
  rank->add_option("--k", k, "edges per signed subnetwork");
  rank->add_flag("--ols-proxy", ols_proxy, "use least-squares slopes of omega when the fit has no beta");
  rank->add_option("--out-prefix", out_prefix, "prefix for the ranking and edge-list CSVs")->required();

  auto* bench = app.add_subcommand("benchmark", "replicated simulation study of NExON against the baseline");
  bench->add_option("--config", config_path, "run configuration file");
  bench->add_option("--out", out, "metrics CSV (rows are appended)")->required();
  bench->add_option("--threads", threads, "worker threads (overrides config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sim) {
      const auto r = nexon::cmd_simulate(load_config(config_path), out);
      std::cout << "wrote " << r.data_files.size() << " data files, " << r.manifest.string() << ", "
                << r.truth.string() << "\n";
    } else if (*sel) {
      auto c = load_config(config_path);
      apply_threads(c, threads);
      nexon::cmd_select_nu0(c, manifest, out);
      std::cout << "wrote " << out << "\n";
    } else if (*fit) {
      auto c = load_config(config_path);
      apply_threads(c, threads);
      std::optional<std::filesystem::path> s;
      if (!selection.empty()) s = selection;
      nexon::cmd_fit(c, manifest, s, method, out);
      std::cout << "wrote " << out << "\n";
    } else if (*eval) {
      nexon::cmd_evaluate(fit_path, truth_path, out, replicate);
      std::cout << "appended to " << out << "\n";
    } else if (*rank) {
      const auto r = nexon::cmd_rank(fit_path, k, out_prefix, ols_proxy);
      std::cout << "wrote " << r.ranking.string() << ", " << r.positive_edges.string() << ", "
                << r.negative_edges.string() << "\n";
    } else if (*bench) {
      auto c = load_config(config_path);
      apply_threads(c, threads);
      const auto rows = nexon::cmd_benchmark(c, out);
      std::cout << "appended " << rows.size() << " rows to " << out << "\n";
    }
  } catch (const nexon::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nexon::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const nexon::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
