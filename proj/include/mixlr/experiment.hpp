#pragma once

#include "mixlr/csv.hpp"
#include "mixlr/metrics.hpp"
#include "mixlr/model.hpp"
#include "mixlr/rng.hpp"
#include "mixlr/sem.hpp"
#include "mixlr/simulate.hpp"

#include <atomic>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mixlr {

enum class RunMode { Simulate, FitData };

/// One experiment cell: a scenario (or a real-data subsampling design), the
/// methods to compare, replication count, seeding and output location.
/// Mirrored one-to-one by the flat key=value config-file format.
struct ExperimentConfig {
  RunMode mode = RunMode::Simulate;

  // simulate mode
  std::string scenario_id;
  std::optional<SimScenario> scenario_override;  // programmatic cells (tests, tools)
  bool fixed_covariates = false;                 // one covariate draw shared by all replications

  // fit-data mode
  RealDataSpec data_spec;
  int components = 2;
  int train_size = 40;
  int test_size = 50;

  std::vector<Solver> methods = {Solver::ML, Solver::Ridge, Solver::LT};
  FitConfig fit;       // solver and seed fields are managed per method/replication
  int n_reps = 0;      // 0 = scenario default (simulate); required >= 1 for fit-data
  int n_workers = 1;
  std::uint64_t seed = 0;  // 0 = scenario default seed (simulate) / 20200501 (fit-data)
  std::string out_dir;
  bool rep_log = false;
  PredictionRule prediction_rule = PredictionRule::MixtureAverage;
};

struct ReplicationMetrics {
  bool usable = false;
  std::string failure_reason;  // empty when usable
  double sse_beta = missing_value();
  double sse_pi = missing_value();
  double sse_pi_raw = missing_value();
  double error = missing_value();
  double sensitivity = missing_value();
  double specificity = missing_value();
  double final_loglik = missing_value();
  int iterations = 0;
  Termination termination = Termination::MaxIters;
  int restart_index = 0;
  int solve_failures = 0;
  int separations = 0;
};

inline const std::vector<std::string>& criterion_names() {
  static const std::vector<std::string> names = {"sqrt_sse_beta", "sqrt_sse_pi",
                                                 "sqrt_sse_pi_raw", "error",
                                                 "sensitivity", "specificity"};
  return names;
}

inline double criterion_value(const ReplicationMetrics& m, const std::string& name) {
  if (name == "sqrt_sse_beta") return m.sse_beta;
  if (name == "sqrt_sse_pi") return m.sse_pi;
  if (name == "sqrt_sse_pi_raw") return m.sse_pi_raw;
  if (name == "error") return m.error;
  if (name == "sensitivity") return m.sensitivity;
  if (name == "specificity") return m.specificity;
  throw std::invalid_argument("unknown criterion " + name);
}

struct MethodSummary {
  Solver method;
  std::vector<std::pair<std::string, std::optional<SummaryStat>>> criteria;
  int n_effective = 0;
  int n_total = 0;
  std::map<std::string, int> failure_reasons;

  const std::optional<SummaryStat>& stat(const std::string& name) const {
    for (const auto& [k, v] : criteria)
      if (k == name) return v;
    throw std::invalid_argument("unknown criterion " + name);
  }
};

struct ExperimentReport {
  std::string label;  // scenario id, or data-file tag in fit-data mode
  std::vector<MethodSummary> methods;
  std::vector<std::vector<ReplicationMetrics>> replications;  // [rep][method]
  std::optional<MixtureParams> reference_params;              // fit-data mode only

  std::vector<Solver> all_failed_methods() const {
    std::vector<Solver> out;
    for (const auto& m : methods)
      if (m.n_effective == 0) out.push_back(m.method);
    return out;
  }
};

// ---------------------------------------------------------------------------
// formatting: shortest exact decimal form, so emitted files parse back to the
// same doubles and runs are byte-comparable
// ---------------------------------------------------------------------------

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "";  // missing, never 0
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

template <class F>
void parallel_for(int n_tasks, int n_workers, F&& body) {
  if (n_workers < 1) n_workers = 1;
  if (n_workers > n_tasks) n_workers = n_tasks;
  if (n_workers <= 1) {
    for (int i = 0; i < n_tasks; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto run = [&] {
    try {
      for (int i = next.fetch_add(1); i < n_tasks; i = next.fetch_add(1)) body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
      next.store(n_tasks);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_workers) - 1);
  for (int t = 0; t < n_workers - 1; ++t) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Seed streams hanging off the base seed; replication r then derives its own
// sub-streams (0 = data, 1 = fits).
inline std::uint64_t replication_seed(std::uint64_t base, int rep) {
  return derive_seed(derive_seed(base, 1), static_cast<std::uint64_t>(rep));
}
inline std::uint64_t fixed_covariate_seed(std::uint64_t base) { return derive_seed(base, 2); }
inline std::uint64_t reference_fit_seed(std::uint64_t base) { return derive_seed(base, 3); }

inline ReplicationMetrics evaluate_fit(const FitResult& fr, const MixtureParams& truth,
                                       const Dataset& valid, PredictionRule rule) {
  ReplicationMetrics m;
  m.final_loglik = fr.final_loglik;
  m.iterations = fr.iterations;
  m.termination = fr.termination;
  m.restart_index = fr.restart_index;
  m.solve_failures = fr.solve_failures;
  m.separations = fr.separations;

  if (!fr.params.all_finite()) {
    m.failure_reason = "non-finite";
    return m;
  }
  if (fr.iterations == 0) {
    // every restart died at its first S-step; the "estimate" is a raw start
    m.failure_reason = "degenerate-at-start";
    return m;
  }
  m.usable = true;

  const std::vector<int> perm = align_labels(fr.params, truth);
  const MixtureParams aligned = apply_alignment(fr.params, perm);
  m.sse_beta = sqrt_sse_beta(aligned, truth);
  m.sse_pi = sqrt_sse_pi(aligned.pi, truth.pi);
  m.sse_pi_raw = sqrt_sse_pi(fr.params.pi, truth.pi);

  const std::vector<int> pred = predict_binary(fr.params, valid.X, rule);
  const ClassificationMetrics cm = confusion_metrics(confusion_counts(pred, valid.y));
  m.error = cm.error;
  m.sensitivity = cm.sensitivity;
  m.specificity = cm.specificity;
  return m;
}

inline MethodSummary summarize_method(Solver method, int method_idx,
                                      const std::vector<std::vector<ReplicationMetrics>>& reps) {
  MethodSummary s;
  s.method = method;
  s.n_total = static_cast<int>(reps.size());
  for (const auto& rec : reps) {
    const auto& m = rec[static_cast<std::size_t>(method_idx)];
    if (m.usable) ++s.n_effective;
    else s.failure_reasons[m.failure_reason] += 1;
  }
  for (const auto& name : criterion_names()) {
    std::vector<double> values;
    values.reserve(reps.size());
    for (const auto& rec : reps) {
      const auto& m = rec[static_cast<std::size_t>(method_idx)];
      if (m.usable) values.push_back(criterion_value(m, name));
    }
    bool any_finite = false;
    for (double v : values)
      if (std::isfinite(v)) any_finite = true;
    if (any_finite)
      s.criteria.emplace_back(name, summarize(values));
    else
      s.criteria.emplace_back(name, std::nullopt);
  }
  return s;
}

inline std::string sanitize_label(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = '_';
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// report emission
// ---------------------------------------------------------------------------

inline void write_summary(std::ostream& os, const ExperimentReport& report) {
  os << "scenario,method,criterion,median,lower,upper,n_used,n_missing,n_effective,n_total\n";
  for (const auto& m : report.methods)
    for (const auto& [name, stat] : m.criteria) {
      os << report.label << ',' << solver_name(m.method) << ',' << name << ',';
      if (stat)
        os << fmt_double(stat->median) << ',' << fmt_double(stat->lower) << ','
           << fmt_double(stat->upper) << ',' << stat->n_used << ',' << stat->n_missing;
      else
        os << ",,,0," << m.n_effective;
      os << ',' << m.n_effective << ',' << m.n_total << '\n';
    }
}

/// Long-format table, one row per (method, criterion): ready for any plotting
/// tool. Missing summaries leave their fields empty.
inline void write_plot_data(std::ostream& os, const ExperimentReport& report) {
  os << "scenario,method,criterion,M,L,U\n";
  for (const auto& m : report.methods)
    for (const auto& [name, stat] : m.criteria) {
      os << report.label << ',' << solver_name(m.method) << ',' << name << ',';
      if (stat)
        os << fmt_double(stat->median) << ',' << fmt_double(stat->lower) << ','
           << fmt_double(stat->upper);
      else
        os << ",,";
      os << '\n';
    }
}

inline void write_replication_log(std::ostream& os, const ExperimentReport& report,
                                  const std::vector<Solver>& methods) {
  os << "rep,method,usable,sqrt_sse_beta,sqrt_sse_pi,sqrt_sse_pi_raw,error,sensitivity,"
        "specificity,final_loglik,iterations,termination,restart,solve_failures,separations,"
        "failure_reason\n";
  for (std::size_t r = 0; r < report.replications.size(); ++r)
    for (std::size_t k = 0; k < methods.size(); ++k) {
      const auto& m = report.replications[r][k];
      os << r << ',' << solver_name(methods[k]) << ',' << (m.usable ? 1 : 0) << ','
         << fmt_double(m.sse_beta) << ',' << fmt_double(m.sse_pi) << ','
         << fmt_double(m.sse_pi_raw) << ',' << fmt_double(m.error) << ','
         << fmt_double(m.sensitivity) << ',' << fmt_double(m.specificity) << ','
         << fmt_double(m.final_loglik) << ',' << m.iterations << ','
         << termination_name(m.termination) << ',' << m.restart_index << ','
         << m.solve_failures << ',' << m.separations << ',' << m.failure_reason << '\n';
    }
}

inline void write_reference_fit(std::ostream& os, const MixtureParams& params) {
  os << "component,pi";
  for (int k = 0; k < params.coef_len(); ++k) os << ",beta" << k;
  os << '\n';
  for (int j = 0; j < params.components(); ++j) {
    os << (j + 1) << ',' << fmt_double(params.pi[j]);
    for (int k = 0; k < params.coef_len(); ++k) os << ',' << fmt_double(params.betas[j][k]);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// the runner
// ---------------------------------------------------------------------------

namespace detail {

// Fold a scenario id into a default base seed (FNV-1a, then finalized).
inline std::uint64_t seed_from_string(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return splitmix64(h);
}

inline const SimScenario& resolve_scenario(const ExperimentConfig& cfg,
                                           std::vector<SimScenario>& catalog_storage) {
  if (cfg.scenario_override) return *cfg.scenario_override;
  catalog_storage = scenario_catalog();
  const SimScenario* sc = find_scenario(catalog_storage, cfg.scenario_id);
  if (!sc) throw std::invalid_argument("unknown scenario '" + cfg.scenario_id + "'");
  return *sc;
}

inline void write_file(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer) {
  std::ofstream os(path);
  if (!os) throw DataError(DataErrorCode::IoError, "cannot write '" + path.string() + "'");
  writer(os);
  if (!os.good()) throw DataError(DataErrorCode::IoError, "write failed for '" + path.string() + "'");
}

}  // namespace detail

/// Run every replication of one experiment cell, summarize per method, and
/// write summary.csv / plot_data.csv (plus replications.csv and, in fit-data
/// mode, reference_fit.csv) under out_dir. Replications are independent work
/// items distributed over n_workers threads and gathered in index order, so
/// outputs are byte-identical for any worker count.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  if (cfg.methods.empty()) throw std::invalid_argument("no methods requested");
  const int n_methods = static_cast<int>(cfg.methods.size());

  ExperimentReport report;
  int n_reps = cfg.n_reps;
  std::uint64_t base_seed = cfg.seed;

  // mode-specific setup
  std::vector<SimScenario> catalog_storage;
  const SimScenario* scenario = nullptr;
  std::optional<LoadedData> loaded;
  std::optional<MatrixXd> fixed_train_X, fixed_valid_X;
  MixtureParams truth;
  int fit_M = 0;

  if (cfg.mode == RunMode::Simulate) {
    scenario = &detail::resolve_scenario(cfg, catalog_storage);
    if (n_reps <= 0) n_reps = scenario->n_reps;
    if (base_seed == 0) base_seed = detail::seed_from_string(scenario->id);
    report.label = detail::sanitize_label(scenario->id);
    truth = scenario->truth();
    truth.validate();
    fit_M = scenario->M;
    if (scenario->n_train < fit_M * cfg.fit.min_partition_size)
      throw std::invalid_argument("scenario training size too small for M components");
    if (cfg.fixed_covariates) {
      Rng rng(detail::fixed_covariate_seed(base_seed));
      fixed_train_X = gen_scenario_covariates(*scenario, scenario->n_train, rng);
      fixed_valid_X = gen_scenario_covariates(*scenario, scenario->n_valid, rng);
    }
  } else {
    if (n_reps <= 0) throw std::invalid_argument("fit-data mode needs n_reps >= 1");
    if (base_seed == 0) base_seed = 20200501u;
    loaded = load_csv(cfg.data_spec);
    fit_M = cfg.components;
    const int n = loaded->data.n();
    if (cfg.train_size + cfg.test_size > n)
      throw std::invalid_argument("train_size + test_size exceeds the data size " +
                                  std::to_string(n));
    if (cfg.train_size < fit_M * cfg.fit.min_partition_size)
      throw std::invalid_argument("train_size too small for M components");
    if (cfg.test_size < 1) throw std::invalid_argument("test_size must be >= 1");
    report.label = detail::sanitize_label(
        std::filesystem::path(cfg.data_spec.path).filename().string());

    // the whole file stands in for the population: its ML fit is the reference
    FitConfig ref = cfg.fit;
    ref.solver = Solver::ML;
    ref.seed = detail::reference_fit_seed(base_seed);
    const FitResult ref_fit = fit(loaded->data, fit_M, ref);
    truth = ref_fit.params;
    report.reference_params = truth;
  }

  report.replications.assign(static_cast<std::size_t>(n_reps),
                             std::vector<ReplicationMetrics>(static_cast<std::size_t>(n_methods)));

  const auto run_one = [&](int rep) {
    const std::uint64_t rep_seed = detail::replication_seed(base_seed, rep);
    Rng data_rng(derive_seed(rep_seed, 0));

    std::optional<Dataset> train, valid;
    if (cfg.mode == RunMode::Simulate) {
      if (cfg.fixed_covariates) {
        train = gen_responses(*fixed_train_X, scenario->pi0, scenario->betas0, data_rng).data;
        valid = gen_responses(*fixed_valid_X, scenario->pi0, scenario->betas0, data_rng).data;
      } else {
        train = generate_sample(*scenario, scenario->n_train, data_rng).data;
        valid = generate_sample(*scenario, scenario->n_valid, data_rng).data;
      }
    } else {
      // disjoint subsamples within the replication: a partial Fisher-Yates
      // shuffle picks train then test rows
      const int n = loaded->data.n();
      std::vector<int> idx(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
      const int want = cfg.train_size + cfg.test_size;
      for (int i = 0; i < want; ++i) {
        const int j = i + static_cast<int>(data_rng.uniform01() * (n - i));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
      }
      const auto take = [&](int from, int count) {
        MatrixXd X(count, loaded->data.X.cols());
        VectorXd y(count);
        for (int i = 0; i < count; ++i) {
          X.row(i) = loaded->data.X.row(idx[static_cast<std::size_t>(from + i)]);
          y[i] = loaded->data.y[idx[static_cast<std::size_t>(from + i)]];
        }
        return Dataset(std::move(X), std::move(y));
      };
      train = take(0, cfg.train_size);
      valid = take(cfg.train_size, cfg.test_size);
    }

    const std::uint64_t fit_seed = derive_seed(rep_seed, 1);
    for (int k = 0; k < n_methods; ++k) {
      FitConfig fc = cfg.fit;
      fc.solver = cfg.methods[static_cast<std::size_t>(k)];
      fc.seed = fit_seed;
      const FitResult fr = fit(*train, fit_M, fc);
      report.replications[static_cast<std::size_t>(rep)][static_cast<std::size_t>(k)] =
          detail::evaluate_fit(fr, truth, *valid, cfg.prediction_rule);
    }
  };

  detail::parallel_for(n_reps, cfg.n_workers, run_one);

  for (int k = 0; k < n_methods; ++k)
    report.methods.push_back(detail::summarize_method(cfg.methods[static_cast<std::size_t>(k)], k,
                                                      report.replications));

  if (!cfg.out_dir.empty()) {
    const std::filesystem::path dir(cfg.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError(DataErrorCode::IoError, "cannot create '" + cfg.out_dir + "'");
    detail::write_file(dir / "summary.csv", [&](std::ostream& os) { write_summary(os, report); });
    detail::write_file(dir / "plot_data.csv",
                       [&](std::ostream& os) { write_plot_data(os, report); });
    if (cfg.rep_log)
      detail::write_file(dir / "replications.csv", [&](std::ostream& os) {
        write_replication_log(os, report, cfg.methods);
      });
    if (report.reference_params)
      detail::write_file(dir / "reference_fit.csv", [&](std::ostream& os) {
        write_reference_fit(os, *report.reference_params);
      });
  }
  return report;
}

// ---------------------------------------------------------------------------
// flat key=value config files (one file = one experiment cell)
// ---------------------------------------------------------------------------

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      if (!(cur = trim(cur)).empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!(cur = trim(cur)).empty()) out.push_back(cur);
  return out;
}

}  // namespace detail

inline Solver parse_solver(std::string name) {
  for (char& c : name) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (name == "ML") return Solver::ML;
  if (name == "RIDGE") return Solver::Ridge;
  if (name == "LT") return Solver::LT;
  throw std::invalid_argument("unknown method '" + name + "' (expected ML, RIDGE or LT)");
}

/// Apply one config key. Shared by the config-file reader and CLI overrides.
inline void apply_config_key(ExperimentConfig& cfg, const std::string& key,
                             const std::string& value) {
  const auto to_int = [&](const std::string& v) {
    std::size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("config: bad integer for " + key);
    return x;
  };
  const auto to_double = [&](const std::string& v) {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("config: bad number for " + key);
    return x;
  };

  if (key == "mode") {
    if (value == "simulate") cfg.mode = RunMode::Simulate;
    else if (value == "fit-data") cfg.mode = RunMode::FitData;
    else throw std::invalid_argument("config: mode must be simulate or fit-data");
  } else if (key == "scenario") cfg.scenario_id = value;
  else if (key == "data") cfg.data_spec.path = value;
  else if (key == "response") cfg.data_spec.response = value;
  else if (key == "covariates") cfg.data_spec.covariates = detail::split_list(value);
  else if (key == "standardize") cfg.data_spec.standardize = detail::parse_bool(value, key);
  else if (key == "components") cfg.components = to_int(value);
  else if (key == "train_size") cfg.train_size = to_int(value);
  else if (key == "test_size") cfg.test_size = to_int(value);
  else if (key == "methods") {
    cfg.methods.clear();
    for (const auto& name : detail::split_list(value)) cfg.methods.push_back(parse_solver(name));
  } else if (key == "n_reps" || key == "reps") cfg.n_reps = to_int(value);
  else if (key == "n_workers" || key == "workers") cfg.n_workers = to_int(value);
  else if (key == "seed") cfg.seed = std::stoull(value);
  else if (key == "out_dir" || key == "out") cfg.out_dir = value;
  else if (key == "rep_log") cfg.rep_log = detail::parse_bool(value, key);
  else if (key == "fixed_covariates") cfg.fixed_covariates = detail::parse_bool(value, key);
  else if (key == "prediction_rule") {
    if (value == "mixture") cfg.prediction_rule = PredictionRule::MixtureAverage;
    else if (value == "max-component") cfg.prediction_rule = PredictionRule::MaxWeightComponent;
    else throw std::invalid_argument("config: prediction_rule must be mixture or max-component");
  } else if (key == "max_iters") cfg.fit.max_iters = to_int(value);
  else if (key == "loglik_tol") cfg.fit.loglik_tol = to_double(value);
  else if (key == "min_partition_size") cfg.fit.min_partition_size = to_int(value);
  else if (key == "n_restarts" || key == "restarts") cfg.fit.n_restarts = to_int(value);
  else if (key == "inner_iters") cfg.fit.inner_iters = to_int(value);
  else if (key == "inner_tol") cfg.fit.inner_tol = to_double(value);
  else if (key == "single_newton_step") cfg.fit.single_newton_step = detail::parse_bool(value, key);
  else if (key == "return_terminal") cfg.fit.return_terminal = detail::parse_bool(value, key);
  else if (key == "divergence_bound") cfg.fit.divergence_bound = to_double(value);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

/// Read a flat key=value config file. '#' starts a comment; blank lines are
/// skipped. Later keys override earlier ones.
inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataErrorCode::IoError, "cannot open config '" + path + "'");
  ExperimentConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    apply_config_key(cfg, key, value);
  }
  return cfg;
}

}  // namespace mixlr
