#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixlr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Probabilities are clamped away from {0,1} before any log is taken, so that
// separation on a small partition cannot inject +-inf into the likelihood
// mid-iteration.
inline constexpr double kProbFloor = 1e-12;
inline const double kLogProbFloor = std::log(kProbFloor);
inline const double kLogProbCeil = std::log1p(-kProbFloor);  // log(1 - 1e-12)

/// Logistic inverse link 1/(1+exp(-eta)), clamped to [1e-12, 1-1e-12].
/// Stable for any finite eta (saturates instead of overflowing).
inline double inverse_link(double eta) {
  double p;
  if (eta >= 0.0) {
    p = 1.0 / (1.0 + std::exp(-eta));
  } else {
    const double e = std::exp(eta);
    p = e / (1.0 + e);
  }
  return std::clamp(p, kProbFloor, 1.0 - kProbFloor);
}

/// log g^{-1}(eta) with the same clamping as inverse_link.
inline double log_inverse_link(double eta) {
  // softplus(-eta) computed without overflow
  const double sp = eta < 0.0 ? -eta + std::log1p(std::exp(eta))
                              : std::log1p(std::exp(-eta));
  return std::clamp(-sp, kLogProbFloor, kLogProbCeil);
}

/// Binary-response design matrix with an explicit leading column of ones.
struct Dataset {
  MatrixXd X;  // n x (p+1), first column identically 1
  VectorXd y;  // entries exactly 0 or 1

  Dataset(MatrixXd X_in, VectorXd y_in) : X(std::move(X_in)), y(std::move(y_in)) {
    if (X.rows() == 0 || X.cols() == 0) throw std::invalid_argument("Dataset: empty design matrix");
    if (X.rows() != y.size()) throw std::invalid_argument("Dataset: X rows and y length differ");
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      if (X(i, 0) != 1.0) throw std::invalid_argument("Dataset: first column must be all ones");
      if (y[i] != 0.0 && y[i] != 1.0)
        throw std::invalid_argument("Dataset: response must be 0/1 at row " + std::to_string(i));
    }
    if (!X.allFinite()) throw std::invalid_argument("Dataset: non-finite covariate value");
  }

  /// Prepend the intercept column to a raw covariate matrix.
  static Dataset with_intercept(const MatrixXd& covariates, VectorXd y) {
    MatrixXd X(covariates.rows(), covariates.cols() + 1);
    X.col(0).setOnes();
    X.rightCols(covariates.cols()) = covariates;
    return Dataset(std::move(X), std::move(y));
  }

  int n() const { return static_cast<int>(X.rows()); }
  int p() const { return static_cast<int>(X.cols()) - 1; }  // covariates, intercept excluded
};

/// Mixing proportions plus one coefficient vector (intercept first) per component.
struct MixtureParams {
  VectorXd pi;
  std::vector<VectorXd> betas;

  int components() const { return static_cast<int>(betas.size()); }
  int coef_len() const { return betas.empty() ? 0 : static_cast<int>(betas.front().size()); }

  bool all_finite() const {
    if (!pi.allFinite()) return false;
    for (const auto& b : betas)
      if (!b.allFinite()) return false;
    return true;
  }

  void validate() const {
    if (betas.empty() || pi.size() != static_cast<Eigen::Index>(betas.size()))
      throw std::invalid_argument("MixtureParams: pi and betas sizes disagree");
    if (std::abs(pi.sum() - 1.0) > 1e-12) throw std::invalid_argument("MixtureParams: pi must sum to 1");
    for (Eigen::Index j = 0; j < pi.size(); ++j)
      if (!(pi[j] > 0.0)) throw std::invalid_argument("MixtureParams: pi entries must be positive");
    const Eigen::Index len = betas.front().size();
    for (const auto& b : betas) {
      if (b.size() != len) throw std::invalid_argument("MixtureParams: coefficient lengths differ");
      if (!b.allFinite()) throw std::invalid_argument("MixtureParams: non-finite coefficient");
    }
  }
};

/// n x M responsibility matrix; rows sum to one.
struct PosteriorMatrix {
  MatrixXd tau;

  int n() const { return static_cast<int>(tau.rows()); }
  int components() const { return static_cast<int>(tau.cols()); }
};

inline double component_prob(const VectorXd& x, const VectorXd& beta) {
  if (x.size() != beta.size()) throw std::invalid_argument("component_prob: dimension mismatch");
  return inverse_link(x.dot(beta));
}

namespace detail {

// Sum of exp(l_j - m) accumulated in ascending order of value. The ordering
// makes the result invariant, to the bit, under permutation of the inputs.
template <std::size_t N>
inline double sorted_exp_sum(std::array<double, N>& vals, int m_count, double shift) {
  std::sort(vals.begin(), vals.begin() + m_count);
  double s = 0.0;
  for (int j = 0; j < m_count; ++j) s += std::exp(vals[j] - shift);
  return s;
}

// log of the Bernoulli density p^y (1-p)^{1-y} at the clamped component probability
inline double log_bernoulli(double eta, double y) {
  return y != 0.0 ? log_inverse_link(eta) : log_inverse_link(-eta);
}

}  // namespace detail

/// Observed-data log-likelihood of the mixture (log-sum-exp per observation).
inline double mixture_loglik(const MixtureParams& params, const Dataset& data) {
  const int M = params.components();
  if (M > 64) throw std::invalid_argument("mixture_loglik: too many components");
  std::vector<double> log_pi(M);
  for (int j = 0; j < M; ++j) log_pi[j] = std::log(params.pi[j]);

  MatrixXd eta(data.n(), M);
  for (int j = 0; j < M; ++j) eta.col(j) = data.X * params.betas[j];

  double total = 0.0;
  std::array<double, 64> terms{};
  for (int i = 0; i < data.n(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < M; ++j) {
      terms[j] = log_pi[j] + detail::log_bernoulli(eta(i, j), data.y[i]);
      m = std::max(m, terms[j]);
    }
    total += m + std::log(detail::sorted_exp_sum(terms, M, m));
  }
  return total;
}

/// Complete-data log-likelihood under hard labels (0-based component indices).
/// A component with pi_j = 0 that still owns observations yields -inf.
inline double complete_loglik(const MixtureParams& params, const Dataset& data,
                              const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != data.n())
    throw std::invalid_argument("complete_loglik: label count and n differ");
  const int M = params.components();
  double total = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    const int z = labels[i];
    if (z < 0 || z >= M) throw std::invalid_argument("complete_loglik: label out of range");
    const double eta = data.X.row(i).dot(params.betas[z]);
    total += std::log(params.pi[z]) + detail::log_bernoulli(eta, data.y[i]);
  }
  return total;
}

}  // namespace mixlr
