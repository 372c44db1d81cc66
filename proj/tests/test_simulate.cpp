#include "mixlr/simulate.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"

using namespace mixlr;

TEST_CASE("independent covariates when phi = rho = 0") {
  Rng rng(1);
  const MatrixXd X = gen_covariates_4(10000, 0.0, 0.0, rng);
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b)
      CHECK(std::abs(oracle::sample_corr(X.col(a), X.col(b))) < 0.05);
    const double var = (X.col(a).array() - X.col(a).mean()).square().sum() / (X.rows() - 1);
    CHECK(var == Catch::Approx(1.0).margin(0.05));
  }
}

TEST_CASE("covariate correlations follow phi^2, rho^2 and phi*rho") {
  Rng rng(2);
  const double phi = 0.9, rho = 0.99;
  const MatrixXd X = gen_covariates_4(10000, phi, rho, rng);
  CHECK(oracle::sample_corr(X.col(0), X.col(1)) == Catch::Approx(phi * phi).margin(0.02));
  CHECK(oracle::sample_corr(X.col(0), X.col(2)) == Catch::Approx(phi * rho).margin(0.02));
  CHECK(oracle::sample_corr(X.col(2), X.col(3)) == Catch::Approx(rho * rho).margin(0.02));

  // within three standard errors of the closed forms
  const auto se = [](double r) { return (1.0 - r * r) / 100.0; };
  CHECK(std::abs(oracle::sample_corr(X.col(1), X.col(3)) - phi * rho) < 3.0 * se(phi * rho) + 1e-3);
}

TEST_CASE("two-covariate generator shares one factor") {
  Rng rng(3);
  const double phi = 0.85;
  const MatrixXd X = gen_covariates_2(10000, phi, rng);
  CHECK(oracle::sample_corr(X.col(0), X.col(1)) == Catch::Approx(phi * phi).margin(0.02));
  for (int c = 0; c < 2; ++c) {
    const double var = (X.col(c).array() - X.col(c).mean()).square().sum() / (X.rows() - 1);
    CHECK(var == Catch::Approx(1.0).margin(0.05));
  }
}

TEST_CASE("generation is deterministic in the seed") {
  const auto catalog = scenario_catalog();
  const SimScenario* sc = find_scenario(catalog, "s1-n25-phi0.85-rho0.90");
  REQUIRE(sc != nullptr);
  Rng a(555), b(555);
  const GeneratedSample sa = generate_sample(*sc, 40, a);
  const GeneratedSample sb = generate_sample(*sc, 40, b);
  CHECK(sa.data.X == sb.data.X);
  CHECK(sa.data.y == sb.data.y);
  CHECK(sa.true_labels == sb.true_labels);
}

TEST_CASE("responses are fair coin flips under zero coefficients") {
  Rng rng(4);
  const MatrixXd Z = gen_covariates_2(10000, 0.5, rng);
  const VectorXd pi0 = VectorXd::Ones(1);
  const GeneratedSample s = gen_responses(Z, pi0, {VectorXd::Zero(3)}, rng);
  CHECK(s.data.y.mean() == Catch::Approx(0.5).margin(0.02));
  for (int label : s.true_labels) CHECK(label == 0);
}

TEST_CASE("first-study scenario draws component one with probability 0.7") {
  const auto catalog = scenario_catalog();
  const SimScenario* sc = find_scenario(catalog, "s1-n100-phi0.85-rho0.90");
  REQUIRE(sc != nullptr);
  Rng rng(6);
  const GeneratedSample s = generate_sample(*sc, 10000, rng);
  int ones = 0;
  for (int label : s.true_labels) ones += label == 0 ? 1 : 0;
  CHECK(static_cast<double>(ones) / 10000.0 == Catch::Approx(0.7).margin(0.02));
}

TEST_CASE("scenario catalog covers the published grid") {
  const auto catalog = scenario_catalog();
  CHECK(catalog.size() == 20);  // 12 two-component cells + 8 three-component cells

  const SimScenario* t1 = find_scenario(catalog, "s1-n25-phi0.85-rho0.90");
  REQUIRE(t1 != nullptr);
  CHECK(t1->M == 2);
  CHECK(t1->p == 4);
  CHECK(t1->n_train == 25);
  CHECK(t1->n_valid == 100);
  CHECK(t1->n_reps == 2000);
  CHECK(t1->pi0[0] == 0.7);
  CHECK(t1->betas0[0] == (VectorXd(5) << 1, 3, 4, 5, 6).finished());
  CHECK(t1->betas0[1] == (VectorXd(5) << -1, -1, -2, -3, -5).finished());

  const SimScenario* t2 = find_scenario(catalog, "s2-n50-phi0.85");
  REQUIRE(t2 != nullptr);
  CHECK(t2->M == 3);
  CHECK(t2->p == 2);
  CHECK(t2->n_train == 50);
  CHECK_FALSE(t2->rho.has_value());
  CHECK(t2->betas0[0] == (VectorXd(3) << 2.85, -10, -5.11).finished());

  // the text/table phi discrepancy: both variants present and tagged
  const SimScenario* table = find_scenario(catalog, "s2-n50-phi0.99");
  const SimScenario* text = find_scenario(catalog, "s2-n50-phi0.98");
  REQUIRE(table != nullptr);
  REQUIRE(text != nullptr);
  CHECK(table->grid_source == "table");
  CHECK(text->grid_source == "text");

  for (const auto& sc : catalog) {
    CHECK(std::abs(sc.pi0.sum() - 1.0) <= 1e-12);
    for (const auto& b : sc.betas0) CHECK(b.size() == sc.p + 1);
    CHECK(sc.M == static_cast<int>(sc.betas0.size()));
  }

  CHECK(alternate_phi_grid_study1() == std::vector<double>{0.8, 0.9, 0.99});
}

TEST_CASE("generator rejects out-of-range collinearity parameters") {
  Rng rng(9);
  CHECK_THROWS_AS(gen_covariates_4(10, 1.0, 0.5, rng), std::invalid_argument);
  CHECK_THROWS_AS(gen_covariates_2(10, -0.1, rng), std::invalid_argument);
}
