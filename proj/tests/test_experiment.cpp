#include "mixlr/experiment.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "oracles.hpp"

using namespace mixlr;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() / ("mixlr_test_" + std::to_string(::getpid()) +
                                                    "_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// quick deliberately-easy cell so experiment tests stay fast
ExperimentConfig small_cell() {
  SimScenario sc;
  sc.id = "test-cell";
  sc.M = 2;
  sc.p = 2;
  sc.pi0 = (VectorXd(2) << 0.6, 0.4).finished();
  sc.betas0 = {(VectorXd(3) << 0.5, 2.0, -1.0).finished(),
               (VectorXd(3) << -0.5, -2.0, 1.5).finished()};
  sc.phi = 0.4;
  sc.rho = std::nullopt;
  sc.n_train = 40;
  sc.n_valid = 30;
  sc.n_reps = 6;

  ExperimentConfig cfg;
  cfg.mode = RunMode::Simulate;
  cfg.scenario_override = sc;
  cfg.n_reps = 6;
  cfg.seed = 99;
  cfg.fit.max_iters = 40;
  cfg.fit.n_restarts = 1;
  return cfg;
}

}  // namespace

TEST_CASE("config files parse into experiment cells") {
  const fs::path dir = temp_dir();
  const fs::path cfg_path = dir / "cell.cfg";
  write_text(cfg_path,
             "# one grid cell\n"
             "mode = simulate\n"
             "scenario = s1-n25-phi0.85-rho0.90\n"
             "methods = ML, LT\n"
             "reps = 12\n"
             "workers = 3\n"
             "seed = 4242\n"
             "out = results/cell1   # trailing comment\n"
             "max_iters = 123\n"
             "loglik_tol = 1e-5\n"
             "restarts = 4\n"
             "single_newton_step = true\n"
             "rep_log = yes\n");
  const ExperimentConfig cfg = parse_config_file(cfg_path.string());
  CHECK(cfg.mode == RunMode::Simulate);
  CHECK(cfg.scenario_id == "s1-n25-phi0.85-rho0.90");
  REQUIRE(cfg.methods.size() == 2);
  CHECK(cfg.methods[0] == Solver::ML);
  CHECK(cfg.methods[1] == Solver::LT);
  CHECK(cfg.n_reps == 12);
  CHECK(cfg.n_workers == 3);
  CHECK(cfg.seed == 4242);
  CHECK(cfg.out_dir == "results/cell1");
  CHECK(cfg.fit.max_iters == 123);
  CHECK(cfg.fit.loglik_tol == 1e-5);
  CHECK(cfg.fit.n_restarts == 4);
  CHECK(cfg.fit.single_newton_step);
  CHECK(cfg.rep_log);

  write_text(dir / "bad.cfg", "no_such_key = 1\n");
  CHECK_THROWS_AS(parse_config_file((dir / "bad.cfg").string()), std::invalid_argument);
}

TEST_CASE("load_csv happy path and diagnostics") {
  const fs::path dir = temp_dir();
  const fs::path csv = dir / "data.csv";
  write_text(csv,
             "y,a,b\n"
             "1,0.5,2.0\n"
             "0,-0.5,1.0\n"
             "1,1.5,3.5\n"
             "0,0.1,0.4\n"
             "1,-1.2,-2.0\n");

  RealDataSpec spec{csv.string(), "y", {"a", "b"}, false};
  const LoadedData loaded = load_csv(spec);
  CHECK(loaded.data.n() == 5);
  CHECK(loaded.data.p() == 2);
  CHECK(loaded.data.X.col(0) == VectorXd::Ones(5));
  CHECK(loaded.full_rank);

  spec.standardize = true;
  const LoadedData std_loaded = load_csv(spec);
  for (int c = 1; c <= 2; ++c) {
    CHECK(std_loaded.data.X.col(c).mean() == Catch::Approx(0.0).margin(1e-12));
    const double var = std_loaded.data.X.col(c).squaredNorm() / 4.0;
    CHECK(var == Catch::Approx(1.0).margin(1e-12));
  }
  // correlations are computed on the raw columns, unaffected by scaling
  CHECK(std_loaded.correlations(0, 1) == Catch::Approx(loaded.correlations(0, 1)).margin(1e-12));
}

TEST_CASE("load_csv error diagnostics carry row and column context") {
  const fs::path dir = temp_dir();

  write_text(dir / "nonbinary.csv", "y,a\n0,1.0\n2,2.0\n1,3.0\n");
  try {
    load_csv({(dir / "nonbinary.csv").string(), "y", {"a"}, false});
    FAIL("expected NonBinaryResponse");
  } catch (const DataError& e) {
    CHECK(e.code() == DataErrorCode::NonBinaryResponse);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }

  write_text(dir / "nonnumeric.csv", "y,a\n0,1.0\n1,oops\n0,2.0\n1,1.5\n");
  try {
    load_csv({(dir / "nonnumeric.csv").string(), "y", {"a"}, false});
    FAIL("expected NonNumericCell");
  } catch (const DataError& e) {
    CHECK(e.code() == DataErrorCode::NonNumericCell);
    CHECK(std::string(e.what()).find("'a'") != std::string::npos);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }

  write_text(dir / "missingcol.csv", "y,a\n0,1.0\n1,2.0\n0,0.5\n");
  try {
    load_csv({(dir / "missingcol.csv").string(), "y", {"b"}, false});
    FAIL("expected MissingColumn");
  } catch (const DataError& e) {
    CHECK(e.code() == DataErrorCode::MissingColumn);
  }

  write_text(dir / "short.csv", "y,a,b\n0,1,2\n1,2,3\n");
  try {
    load_csv({(dir / "short.csv").string(), "y", {"a", "b"}, false});
    FAIL("expected TooFewRows");
  } catch (const DataError& e) {
    CHECK(e.code() == DataErrorCode::TooFewRows);
  }
}

TEST_CASE("perfectly collinear covariates load with a correlation of one") {
  const fs::path dir = temp_dir();
  std::ostringstream body;
  body << "y,a,b\n";
  Rng rng(12);
  for (int i = 0; i < 12; ++i) {
    const double a = 0.25 * i - 1.5;  // exactly representable, so b stays exactly 2a
    body << (rng.bernoulli(0.5) ? 1 : 0) << ',' << a << ',' << 2.0 * a << '\n';
  }
  write_text(dir / "collinear.csv", body.str());
  const LoadedData loaded = load_csv({(dir / "collinear.csv").string(), "y", {"a", "b"}, false});
  CHECK(loaded.correlations(0, 1) == Catch::Approx(1.0).margin(1e-12));
  CHECK_FALSE(loaded.full_rank);
}

TEST_CASE("run_experiment is deterministic and worker-count independent") {
  ExperimentConfig cfg = small_cell();
  const fs::path out1 = temp_dir(), out2 = temp_dir(), out3 = temp_dir();

  cfg.out_dir = out1.string();
  cfg.n_workers = 1;
  run_experiment(cfg);

  cfg.out_dir = out2.string();
  run_experiment(cfg);
  CHECK(read_text(out1 / "summary.csv") == read_text(out2 / "summary.csv"));
  CHECK(read_text(out1 / "plot_data.csv") == read_text(out2 / "plot_data.csv"));

  cfg.out_dir = out3.string();
  cfg.n_workers = 3;
  run_experiment(cfg);
  CHECK(read_text(out1 / "summary.csv") == read_text(out3 / "summary.csv"));
  CHECK(read_text(out1 / "plot_data.csv") == read_text(out3 / "plot_data.csv"));
}

TEST_CASE("plot data round-trips exactly and keeps missing fields empty") {
  ExperimentReport report;
  report.label = "cell";
  MethodSummary ms;
  ms.method = Solver::LT;
  ms.n_effective = 3;
  ms.n_total = 3;
  ms.criteria.emplace_back("sqrt_sse_beta",
                           SummaryStat{30.123456789012345, 21.0 / 7.0, 36.5, 3, 0});
  ms.criteria.emplace_back("sensitivity", std::nullopt);
  report.methods.push_back(ms);

  std::ostringstream os;
  write_plot_data(os, report);
  const std::string text = os.str();

  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  CHECK(line == "scenario,method,criterion,M,L,U");
  std::getline(is, line);
  {
    std::stringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    CHECK(cell == "cell");
    std::getline(row, cell, ',');
    CHECK(cell == "LT");
    std::getline(row, cell, ',');
    CHECK(cell == "sqrt_sse_beta");
    std::getline(row, cell, ',');
    CHECK(std::stod(cell) == 30.123456789012345);  // exact round trip
    std::getline(row, cell, ',');
    CHECK(std::stod(cell) == 21.0 / 7.0);
  }
  std::getline(is, line);
  CHECK(line == "cell,LT,sensitivity,,,");  // missing stays empty, never 0
}

TEST_CASE("replication log is written on request") {
  ExperimentConfig cfg = small_cell();
  cfg.rep_log = true;
  const fs::path out = temp_dir();
  cfg.out_dir = out.string();
  run_experiment(cfg);
  const std::string log = read_text(out / "replications.csv");
  int lines = 0;
  for (char c : log) lines += c == '\n' ? 1 : 0;
  CHECK(lines == 1 + cfg.n_reps * static_cast<int>(cfg.methods.size()));
}

TEST_CASE("summary reports effective replication counts") {
  ExperimentConfig cfg = small_cell();
  const ExperimentReport report = run_experiment(cfg);
  REQUIRE(report.methods.size() == 3);
  for (const auto& m : report.methods) {
    CHECK(m.n_total == cfg.n_reps);
    CHECK(m.n_effective >= 1);
    CHECK(m.n_effective <= m.n_total);
  }
  CHECK(report.all_failed_methods().empty());
}

TEST_CASE("fit-data mode runs on the bundled stand-in file") {
  ExperimentConfig cfg;
  cfg.mode = RunMode::FitData;
  cfg.data_spec = {std::string(MIXLR_DATA_DIR) + "/bone_standin.csv",
                   "osteo",
                   {"arm_circ_cm", "hip_circ_cm"},
                   true};
  cfg.components = 2;
  cfg.train_size = 40;
  cfg.test_size = 50;
  cfg.n_reps = 3;
  cfg.methods = {Solver::LT};
  cfg.seed = 7;
  cfg.fit.max_iters = 80;
  cfg.fit.n_restarts = 2;
  const fs::path out = temp_dir();
  cfg.out_dir = out.string();

  const ExperimentReport report = run_experiment(cfg);
  REQUIRE(report.reference_params.has_value());
  CHECK(report.reference_params->components() == 2);
  CHECK(report.methods[0].n_effective >= 1);
  CHECK(fs::exists(out / "reference_fit.csv"));
  CHECK(fs::exists(out / "summary.csv"));

  // the stand-in mirrors the real covariate correlation of about 0.81
  const LoadedData loaded = load_csv(cfg.data_spec);
  CHECK(loaded.data.n() == 182);
  CHECK(loaded.correlations(0, 1) == Catch::Approx(0.81).margin(0.05));
}

TEST_CASE("fit-data mode validates subsample sizes") {
  ExperimentConfig cfg;
  cfg.mode = RunMode::FitData;
  cfg.data_spec = {std::string(MIXLR_DATA_DIR) + "/bone_standin.csv",
                   "osteo",
                   {"arm_circ_cm", "hip_circ_cm"},
                   true};
  cfg.n_reps = 1;
  cfg.train_size = 150;
  cfg.test_size = 80;  // 230 > 182
  CHECK_THROWS_AS(run_experiment(cfg), std::invalid_argument);
}
