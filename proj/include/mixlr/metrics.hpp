#pragma once

#include "mixlr/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace mixlr {

inline double missing_value() { return std::numeric_limits<double>::quiet_NaN(); }

/// Component alignment between an estimate and a reference: the permutation
/// minimizing the total squared coefficient distance, found by exhausting all
/// M! orders (M is small throughout). perm[j] is the estimate's component
/// matched to reference slot j.
inline std::vector<int> align_labels(const MixtureParams& est, const MixtureParams& truth) {
  const int M = est.components();
  if (truth.components() != M || est.coef_len() != truth.coef_len())
    throw std::invalid_argument("align_labels: shapes disagree");

  std::vector<int> perm(M), best(M);
  std::iota(perm.begin(), perm.end(), 0);
  best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (int j = 0; j < M; ++j) cost += (est.betas[perm[j]] - truth.betas[j]).squaredNorm();
    if (cost < best_cost) {
      best_cost = cost;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline MixtureParams apply_alignment(const MixtureParams& est, const std::vector<int>& perm) {
  MixtureParams out;
  out.pi.resize(est.pi.size());
  out.betas.resize(est.betas.size());
  for (std::size_t j = 0; j < perm.size(); ++j) {
    out.pi[static_cast<Eigen::Index>(j)] = est.pi[perm[j]];
    out.betas[j] = est.betas[perm[j]];
  }
  return out;
}

/// sqrt(SSE) of the stacked coefficient vectors (alignment is the caller's job).
inline double sqrt_sse_beta(const MixtureParams& est_aligned, const MixtureParams& truth) {
  double sse = 0.0;
  for (int j = 0; j < est_aligned.components(); ++j)
    sse += (est_aligned.betas[j] - truth.betas[j]).squaredNorm();
  return std::sqrt(sse);
}

inline double sqrt_sse_pi(const VectorXd& est_pi, const VectorXd& truth_pi) {
  return (est_pi - truth_pi).norm();
}

enum class PredictionRule {
  MixtureAverage,      // threshold sum_j pi_j p_j(x) at 0.5
  MaxWeightComponent,  // threshold the highest-weight component's probability
};

inline VectorXd mixture_probability(const MixtureParams& params, const MatrixXd& X) {
  VectorXd prob = VectorXd::Zero(X.rows());
  for (int j = 0; j < params.components(); ++j) {
    const VectorXd eta = X * params.betas[j];
    for (Eigen::Index i = 0; i < X.rows(); ++i) prob[i] += params.pi[j] * inverse_link(eta[i]);
  }
  return prob;
}

/// Predicted 0/1 responses; the boundary value 0.5 predicts 1.
inline std::vector<int> predict_binary(const MixtureParams& params, const MatrixXd& X,
                                       PredictionRule rule = PredictionRule::MixtureAverage) {
  VectorXd prob;
  if (rule == PredictionRule::MixtureAverage) {
    prob = mixture_probability(params, X);
  } else {
    Eigen::Index top = 0;
    params.pi.maxCoeff(&top);
    const VectorXd eta = X * params.betas[top];
    prob.resize(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) prob[i] = inverse_link(eta[i]);
  }
  std::vector<int> pred(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) pred[i] = prob[i] >= 0.5 ? 1 : 0;
  return pred;
}

struct ConfusionCounts {
  int tp = 0, tn = 0, fp = 0, fn = 0;
  int total() const { return tp + tn + fp + fn; }
};

inline ConfusionCounts confusion_counts(const std::vector<int>& pred, const VectorXd& actual) {
  if (static_cast<Eigen::Index>(pred.size()) != actual.size())
    throw std::invalid_argument("confusion_counts: length mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool hat = pred[i] != 0;
    const bool obs = actual[static_cast<Eigen::Index>(i)] != 0.0;
    if (hat && obs) ++c.tp;
    else if (!hat && !obs) ++c.tn;
    else if (hat && !obs) ++c.fp;
    else ++c.fn;
  }
  return c;
}

/// Error, sensitivity, specificity; a zero denominator yields NaN (missing),
/// which summaries exclude rather than treating as zero.
struct ClassificationMetrics {
  double error;
  double sensitivity;
  double specificity;
};

inline ClassificationMetrics confusion_metrics(const ConfusionCounts& c) {
  ClassificationMetrics m{};
  m.error = static_cast<double>(c.fp + c.fn) / c.total();
  m.sensitivity = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : missing_value();
  m.specificity = (c.tn + c.fp) > 0 ? static_cast<double>(c.tn) / (c.tn + c.fp) : missing_value();
  return m;
}

/// Linear-interpolation quantile on a sorted sample (the h = (n-1)p + 1 rule).
inline double quantile_linear(const std::vector<double>& sorted, double prob) {
  const std::size_t n = sorted.size();
  if (n == 0) throw std::invalid_argument("quantile_linear: empty sample");
  if (n == 1) return sorted[0];
  const double h = (n - 1) * prob;
  const std::size_t lo = static_cast<std::size_t>(h);
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= n) return sorted[n - 1];
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

/// Median and 2.5/97.5 empirical percentiles of the finite values.
struct SummaryStat {
  double median;
  double lower;
  double upper;
  int n_used;
  int n_missing;
};

inline SummaryStat summarize(const std::vector<double>& values) {
  std::vector<double> finite;
  finite.reserve(values.size());
  int missing = 0;
  for (double v : values) {
    if (std::isfinite(v)) finite.push_back(v);
    else ++missing;
  }
  if (finite.empty()) throw std::invalid_argument("summarize: no finite values");
  std::sort(finite.begin(), finite.end());
  return {quantile_linear(finite, 0.5), quantile_linear(finite, 0.025),
          quantile_linear(finite, 0.975), static_cast<int>(finite.size()), missing};
}

}  // namespace mixlr
