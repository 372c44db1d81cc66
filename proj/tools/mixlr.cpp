// Command-line front end: list the study catalog, run simulation cells, or
// run the subsampling analysis on a CSV file.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 every replication of
// some method failed.

#include "mixlr/mixlr.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitAllFailed = 3;

void print_report(const mixlr::ExperimentReport& report) {
  std::printf("cell %s\n", report.label.c_str());
  if (report.reference_params) {
    std::printf("  reference fit (full data, ML):\n");
    const auto& ref = *report.reference_params;
    for (int j = 0; j < ref.components(); ++j) {
      std::printf("    component %d: pi=%.4f beta=(", j + 1, ref.pi[j]);
      for (int k = 0; k < ref.coef_len(); ++k)
        std::printf("%s%.4g", k ? ", " : "", ref.betas[j][k]);
      std::printf(")\n");
    }
  }
  for (const auto& m : report.methods) {
    std::printf("  %-5s  effective %d/%d", mixlr::solver_name(m.method), m.n_effective,
                m.n_total);
    for (const auto& [reason, count] : m.failure_reasons)
      std::printf("  [%s: %d]", reason.c_str(), count);
    std::printf("\n");
    for (const auto& [name, stat] : m.criteria) {
      if (stat)
        std::printf("    %-16s M=%-10.4g L=%-10.4g U=%-10.4g (missing %d)\n", name.c_str(),
                    stat->median, stat->lower, stat->upper, stat->n_missing);
      else
        std::printf("    %-16s (no usable values)\n", name.c_str());
    }
  }
}

int finish_run(const mixlr::ExperimentReport& report, const mixlr::ExperimentConfig& cfg) {
  print_report(report);
  if (!cfg.out_dir.empty()) std::printf("wrote reports under %s\n", cfg.out_dir.c_str());
  const auto failed = report.all_failed_methods();
  if (!failed.empty()) {
    for (const auto m : failed) {
      std::fprintf(stderr, "error: all replications failed for %s:", mixlr::solver_name(m));
      for (const auto& ms : report.methods)
        if (ms.method == m)
          for (const auto& [reason, count] : ms.failure_reasons)
            std::fprintf(stderr, " %s=%d", reason.c_str(), count);
      std::fprintf(stderr, "\n");
    }
    return kExitAllFailed;
  }
  return 0;
}

int run_cells(const std::vector<mixlr::ExperimentConfig>& cells) {
  int rc = 0;
  for (const auto& cfg : cells) {
    const mixlr::ExperimentReport report = mixlr::run_experiment(cfg);
    const int cell_rc = finish_run(report, cfg);
    if (cell_rc != 0) rc = cell_rc;
  }
  return rc;
}

std::vector<std::string> read_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw mixlr::DataError(mixlr::DataErrorCode::IoError, "cannot open grid file '" + path + "'");
  std::vector<std::string> cells;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = mixlr::detail::trim(line);
    if (!line.empty()) cells.push_back(line);
  }
  if (cells.empty())
    throw mixlr::DataError(mixlr::DataErrorCode::IoError, "grid file '" + path + "' lists no cells");
  return cells;
}

struct FitTuning {
  std::optional<int> max_iters, restarts, inner_iters, min_partition;
  std::optional<double> loglik_tol, inner_tol;
  bool single_newton_step = false;
  bool terminal = false;

  void apply(mixlr::FitConfig& fc) const {
    if (max_iters) fc.max_iters = *max_iters;
    if (restarts) fc.n_restarts = *restarts;
    if (inner_iters) fc.inner_iters = *inner_iters;
    if (min_partition) fc.min_partition_size = *min_partition;
    if (loglik_tol) fc.loglik_tol = *loglik_tol;
    if (inner_tol) fc.inner_tol = *inner_tol;
    if (single_newton_step) fc.single_newton_step = true;
    if (terminal) fc.return_terminal = true;
  }
};

void add_tuning_options(CLI::App* cmd, FitTuning& t) {
  cmd->add_option("--max-iters", t.max_iters, "SEM iteration cap per restart");
  cmd->add_option("--tol", t.loglik_tol, "log-likelihood convergence tolerance");
  cmd->add_option("--restarts", t.restarts, "additional seeded restarts");
  cmd->add_option("--inner-iters", t.inner_iters, "IRWLS iterations per M-step");
  cmd->add_option("--inner-tol", t.inner_tol, "IRWLS step tolerance");
  cmd->add_option("--min-partition", t.min_partition, "degeneracy threshold per component");
  cmd->add_flag("--single-newton-step", t.single_newton_step,
                "one IRWLS update per M-step (the update-formula schedule)");
  cmd->add_flag("--terminal-iterate", t.terminal,
                "return the final SEM iterate instead of the trace-best one");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixture-of-logistic-regressions fitting and study runner"};
  app.require_subcommand(1);

  // ---- scenarios ----
  auto* cmd_scenarios = app.add_subcommand("scenarios", "list the built-in study catalog");

  // ---- simulate ----
  auto* cmd_sim = app.add_subcommand("simulate", "run replications of a synthetic study cell");
  std::string sim_scenario, sim_out, sim_config, sim_grid, sim_methods = "ML,RIDGE,LT";
  int sim_reps = 0, sim_workers = 1;
  std::uint64_t sim_seed = 0;
  bool sim_rep_log = false, sim_fixed_x = false;
  FitTuning sim_tuning;
  cmd_sim->add_option("--scenario", sim_scenario, "catalog id (see `scenarios`)");
  cmd_sim->add_option("--reps", sim_reps, "replications (0 = scenario default)");
  cmd_sim->add_option("--methods", sim_methods, "comma list from ML,RIDGE,LT");
  cmd_sim->add_option("--workers", sim_workers, "worker threads");
  cmd_sim->add_option("--seed", sim_seed, "base seed (0 = scenario default)");
  cmd_sim->add_option("--out", sim_out, "output directory for report files");
  cmd_sim->add_option("--config", sim_config, "key=value config file for this cell");
  cmd_sim->add_option("--grid", sim_grid, "file listing config files, one cell per line");
  cmd_sim->add_flag("--rep-log", sim_rep_log, "also write per-replication rows");
  cmd_sim->add_flag("--fixed-covariates", sim_fixed_x,
                    "share one covariate draw across replications");
  add_tuning_options(cmd_sim, sim_tuning);

  // ---- fit ----
  auto* cmd_fit = app.add_subcommand("fit", "subsampling analysis of a CSV data file");
  std::string fit_data, fit_response, fit_covariates, fit_method = "ML,RIDGE,LT";
  std::string fit_out, fit_config, fit_grid;
  int fit_components = 2, fit_reps = 100, fit_workers = 1, fit_train = 40, fit_test = 50;
  std::uint64_t fit_seed = 0;
  bool fit_rep_log = false, fit_no_standardize = false;
  FitTuning fit_tuning;
  cmd_fit->add_option("--data", fit_data, "CSV file (header row, comma separated)");
  cmd_fit->add_option("--response", fit_response, "binary response column name");
  cmd_fit->add_option("--covariates", fit_covariates, "comma list of covariate columns");
  cmd_fit->add_option("--components", fit_components, "number of mixture components");
  cmd_fit->add_option("--method", fit_method, "method(s), comma list from ML,RIDGE,LT");
  cmd_fit->add_option("--reps", fit_reps, "subsampling replications");
  cmd_fit->add_option("--train-size", fit_train, "training rows per replication");
  cmd_fit->add_option("--test-size", fit_test, "held-out rows per replication");
  cmd_fit->add_option("--workers", fit_workers, "worker threads");
  cmd_fit->add_option("--seed", fit_seed, "base seed");
  cmd_fit->add_option("--out", fit_out, "output directory for report files");
  cmd_fit->add_option("--config", fit_config, "key=value config file for this cell");
  cmd_fit->add_option("--grid", fit_grid, "file listing config files, one cell per line");
  cmd_fit->add_flag("--rep-log", fit_rep_log, "also write per-replication rows");
  cmd_fit->add_flag("--no-standardize", fit_no_standardize, "skip covariate standardization");
  add_tuning_options(cmd_fit, fit_tuning);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (cmd_scenarios->parsed()) {
      std::printf("%-22s %2s %2s %7s %7s %5s %5s %6s %s\n", "id", "M", "p", "n_train", "n_valid",
                  "phi", "rho", "reps", "grid");
      for (const auto& sc : mixlr::scenario_catalog()) {
        char rho[16] = "-";
        if (sc.rho) std::snprintf(rho, sizeof rho, "%.2f", *sc.rho);
        std::printf("%-22s %2d %2d %7d %7d %5.2f %5s %6d %s\n", sc.id.c_str(), sc.M, sc.p,
                    sc.n_train, sc.n_valid, sc.phi, rho, sc.n_reps, sc.grid_source.c_str());
      }
      std::printf("\nfirst study's in-text phi grid (tables use the values above):");
      for (double phi : mixlr::alternate_phi_grid_study1()) std::printf(" %.2f", phi);
      std::printf("\n");
      return 0;
    }

    if (cmd_sim->parsed()) {
      if (!sim_grid.empty()) {
        std::vector<mixlr::ExperimentConfig> cells;
        for (const auto& path : read_grid_file(sim_grid)) {
          mixlr::ExperimentConfig cfg = mixlr::parse_config_file(path);
          cfg.mode = mixlr::RunMode::Simulate;
          cells.push_back(std::move(cfg));
        }
        return run_cells(cells);
      }
      mixlr::ExperimentConfig cfg;
      if (!sim_config.empty()) cfg = mixlr::parse_config_file(sim_config);
      cfg.mode = mixlr::RunMode::Simulate;
      if (!sim_scenario.empty()) cfg.scenario_id = sim_scenario;
      if (sim_reps > 0) cfg.n_reps = sim_reps;
      if (cmd_sim->count("--methods")) {
        cfg.methods.clear();
        for (const auto& name : mixlr::detail::split_list(sim_methods))
          cfg.methods.push_back(mixlr::parse_solver(name));
      }
      if (cmd_sim->count("--workers")) cfg.n_workers = sim_workers;
      if (sim_seed != 0) cfg.seed = sim_seed;
      if (!sim_out.empty()) cfg.out_dir = sim_out;
      if (sim_rep_log) cfg.rep_log = true;
      if (sim_fixed_x) cfg.fixed_covariates = true;
      sim_tuning.apply(cfg.fit);
      if (cfg.scenario_id.empty()) {
        std::fprintf(stderr, "error: --scenario (or a config file naming one) is required\n");
        return kExitUsage;
      }
      return finish_run(mixlr::run_experiment(cfg), cfg);
    }

    if (cmd_fit->parsed()) {
      if (!fit_grid.empty()) {
        std::vector<mixlr::ExperimentConfig> cells;
        for (const auto& path : read_grid_file(fit_grid)) {
          mixlr::ExperimentConfig cfg = mixlr::parse_config_file(path);
          cfg.mode = mixlr::RunMode::FitData;
          cells.push_back(std::move(cfg));
        }
        return run_cells(cells);
      }
      mixlr::ExperimentConfig cfg;
      if (!fit_config.empty()) cfg = mixlr::parse_config_file(fit_config);
      cfg.mode = mixlr::RunMode::FitData;
      if (!fit_data.empty()) cfg.data_spec.path = fit_data;
      if (!fit_response.empty()) cfg.data_spec.response = fit_response;
      if (!fit_covariates.empty())
        cfg.data_spec.covariates = mixlr::detail::split_list(fit_covariates);
      if (fit_no_standardize) cfg.data_spec.standardize = false;
      if (cmd_fit->count("--components")) cfg.components = fit_components;
      if (cmd_fit->count("--method")) {
        cfg.methods.clear();
        for (const auto& name : mixlr::detail::split_list(fit_method))
          cfg.methods.push_back(mixlr::parse_solver(name));
      }
      if (cmd_fit->count("--reps")) cfg.n_reps = fit_reps;
      else if (cfg.n_reps <= 0) cfg.n_reps = fit_reps;
      if (cmd_fit->count("--train-size")) cfg.train_size = fit_train;
      if (cmd_fit->count("--test-size")) cfg.test_size = fit_test;
      if (cmd_fit->count("--workers")) cfg.n_workers = fit_workers;
      if (fit_seed != 0) cfg.seed = fit_seed;
      if (!fit_out.empty()) cfg.out_dir = fit_out;
      if (fit_rep_log) cfg.rep_log = true;
      fit_tuning.apply(cfg.fit);
      if (cfg.data_spec.path.empty() || cfg.data_spec.response.empty() ||
          cfg.data_spec.covariates.empty()) {
        std::fprintf(stderr, "error: --data, --response and --covariates are required\n");
        return kExitUsage;
      }
      return finish_run(mixlr::run_experiment(cfg), cfg);
    }
  } catch (const mixlr::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return 0;
}
