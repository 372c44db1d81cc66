#pragma once

#include "mixlr/model.hpp"
#include "mixlr/rng.hpp"

#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixlr {

/// One cell of the synthetic-study grid.
struct SimScenario {
  std::string id;
  int M = 2;
  int p = 4;
  VectorXd pi0;
  std::vector<VectorXd> betas0;  // intercept first, length p+1
  double phi = 0.0;              // shared-factor loading of covariates 1-2
  std::optional<double> rho;     // loading of covariates 3-4; absent for p = 2
  int n_train = 100;
  int n_valid = 100;
  int n_reps = 2000;
  std::string grid_source = "table";  // which published grid the phi value comes from

  MixtureParams truth() const { return {pi0, betas0}; }
};

/// Four covariates built from five shared standard normals:
///   x_{i,1..2} = sqrt(1-phi^2) w_{i,1..2} + phi w_{i,5}
///   x_{i,3..4} = sqrt(1-rho^2) w_{i,3..4} + rho w_{i,5}
/// Each column is marginally N(0,1); corr(x1,x2)=phi^2, corr(x3,x4)=rho^2,
/// cross pairs phi*rho.
template <class RngLike>
MatrixXd gen_covariates_4(int n, double phi, double rho, RngLike& rng) {
  if (phi < 0.0 || phi >= 1.0 || rho < 0.0 || rho >= 1.0)
    throw std::invalid_argument("gen_covariates_4: phi and rho must lie in [0,1)");
  const double a = std::sqrt(1.0 - phi * phi);
  const double b = std::sqrt(1.0 - rho * rho);
  MatrixXd X(n, 4);
  for (int i = 0; i < n; ++i) {
    double w[5];
    for (double& v : w) v = rng.normal();
    X(i, 0) = a * w[0] + phi * w[4];
    X(i, 1) = a * w[1] + phi * w[4];
    X(i, 2) = b * w[2] + rho * w[4];
    X(i, 3) = b * w[3] + rho * w[4];
  }
  return X;
}

/// Two-covariate variant of the same construction: both columns load on one
/// shared normal with weight phi.
template <class RngLike>
MatrixXd gen_covariates_2(int n, double phi, RngLike& rng) {
  if (phi < 0.0 || phi >= 1.0)
    throw std::invalid_argument("gen_covariates_2: phi must lie in [0,1)");
  const double a = std::sqrt(1.0 - phi * phi);
  MatrixXd X(n, 2);
  for (int i = 0; i < n; ++i) {
    double w[3];
    for (double& v : w) v = rng.normal();
    X(i, 0) = a * w[0] + phi * w[2];
    X(i, 1) = a * w[1] + phi * w[2];
  }
  return X;
}

struct GeneratedSample {
  Dataset data;
  std::vector<int> true_labels;  // 0-based generating component per observation
};

/// Draw the latent component and then the Bernoulli response for each row of
/// a raw covariate matrix (intercept prepended here). Per row: one categorical
/// draw, then one Bernoulli draw.
template <class RngLike>
GeneratedSample gen_responses(const MatrixXd& covariates, const VectorXd& pi0,
                              const std::vector<VectorXd>& betas0, RngLike& rng) {
  const int n = static_cast<int>(covariates.rows());
  MatrixXd X(n, covariates.cols() + 1);
  X.col(0).setOnes();
  X.rightCols(covariates.cols()) = covariates;

  VectorXd y(n);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    const int c = rng.categorical(pi0);
    labels[i] = c;
    const double prob = inverse_link(X.row(i).dot(betas0[c]));
    y[i] = rng.bernoulli(prob) ? 1.0 : 0.0;
  }
  return {Dataset(std::move(X), std::move(y)), std::move(labels)};
}

template <class RngLike>
MatrixXd gen_scenario_covariates(const SimScenario& sc, int n, RngLike& rng) {
  return sc.rho ? gen_covariates_4(n, sc.phi, *sc.rho, rng) : gen_covariates_2(n, sc.phi, rng);
}

template <class RngLike>
GeneratedSample generate_sample(const SimScenario& sc, int n, RngLike& rng) {
  return gen_responses(gen_scenario_covariates(sc, n, rng), sc.pi0, sc.betas0, rng);
}

namespace detail {

inline VectorXd vec(std::initializer_list<double> vals) {
  VectorXd v(static_cast<Eigen::Index>(vals.size()));
  Eigen::Index i = 0;
  for (double x : vals) v[i++] = x;
  return v;
}

inline std::string scenario_id(int study, int n, double phi, std::optional<double> rho) {
  char buf[64];
  if (rho)
    std::snprintf(buf, sizeof buf, "s%d-n%d-phi%.2f-rho%.2f", study, n, phi, *rho);
  else
    std::snprintf(buf, sizeof buf, "s%d-n%d-phi%.2f", study, n, phi);
  return buf;
}

}  // namespace detail

/// The phi values the first study's running text quotes; the tables (and the
/// catalog) use {0.85, 0.95, 0.98} instead.
inline std::vector<double> alternate_phi_grid_study1() { return {0.8, 0.9, 0.99}; }

/// The full published grid. Study 1: a two-component mixture with four
/// covariates over n_train {25,100} x phi {0.85,0.95,0.98} x rho {0.9,0.99}.
/// Study 2: a three-component mixture with two covariates over n_train
/// {50,100} x phi {0.85,0.95,0.99}, plus the 0.98 value quoted in the text
/// (tagged grid_source = "text").
inline std::vector<SimScenario> scenario_catalog() {
  std::vector<SimScenario> out;

  const VectorXd pi1 = detail::vec({0.7, 0.3});
  const std::vector<VectorXd> betas1 = {detail::vec({1, 3, 4, 5, 6}),
                                        detail::vec({-1, -1, -2, -3, -5})};
  for (int n : {25, 100})
    for (double phi : {0.85, 0.95, 0.98})
      for (double rho : {0.9, 0.99}) {
        SimScenario sc;
        sc.id = detail::scenario_id(1, n, phi, rho);
        sc.M = 2;
        sc.p = 4;
        sc.pi0 = pi1;
        sc.betas0 = betas1;
        sc.phi = phi;
        sc.rho = rho;
        sc.n_train = n;
        sc.n_valid = 100;
        sc.n_reps = 2000;
        out.push_back(std::move(sc));
      }

  const VectorXd pi2 = detail::vec({0.3, 0.4, 0.3});
  const std::vector<VectorXd> betas2 = {detail::vec({2.85, -10, -5.11}),
                                        detail::vec({10, 9.90, 5.11}),
                                        detail::vec({-3.84, 9.90, 5.11})};
  for (int n : {50, 100})
    for (double phi : {0.85, 0.95, 0.99, 0.98}) {
      SimScenario sc;
      sc.id = detail::scenario_id(2, n, phi, std::nullopt);
      sc.M = 3;
      sc.p = 2;
      sc.pi0 = pi2;
      sc.betas0 = betas2;
      sc.phi = phi;
      sc.rho = std::nullopt;
      sc.n_train = n;
      sc.n_valid = 100;
      sc.n_reps = 2000;
      sc.grid_source = (phi == 0.98) ? "text" : "table";
      out.push_back(std::move(sc));
    }

  return out;
}

inline const SimScenario* find_scenario(const std::vector<SimScenario>& catalog,
                                        const std::string& id) {
  for (const auto& sc : catalog)
    if (sc.id == id) return &sc;
  return nullptr;
}

}  // namespace mixlr
