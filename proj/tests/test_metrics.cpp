#include "mixlr/metrics.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "oracles.hpp"

using namespace mixlr;

namespace {

MixtureParams random_params(int M, int len, Rng& rng, double scale = 3.0) {
  MixtureParams p;
  VectorXd raw(M);
  for (int j = 0; j < M; ++j) raw[j] = rng.uniform(0.1, 1.0);
  p.pi = raw / raw.sum();
  p.betas.resize(M);
  for (int j = 0; j < M; ++j) {
    p.betas[j] = VectorXd(len);
    for (int k = 0; k < len; ++k) p.betas[j][k] = rng.uniform(-scale, scale);
  }
  return p;
}

// independent recursive enumeration of permutations (the oracle)
void best_alignment_recursive(const MixtureParams& est, const MixtureParams& truth,
                              std::vector<int>& current, std::vector<bool>& used,
                              double cost_so_far, double& best_cost, std::vector<int>& best) {
  const int j = static_cast<int>(current.size());
  if (j == est.components()) {
    if (cost_so_far < best_cost) {
      best_cost = cost_so_far;
      best = current;
    }
    return;
  }
  for (int c = 0; c < est.components(); ++c) {
    if (used[c]) continue;
    used[c] = true;
    current.push_back(c);
    best_alignment_recursive(est, truth, current, used,
                             cost_so_far + (est.betas[c] - truth.betas[j]).squaredNorm(),
                             best_cost, best);
    current.pop_back();
    used[c] = false;
  }
}

std::vector<int> oracle_alignment(const MixtureParams& est, const MixtureParams& truth) {
  std::vector<int> current, best;
  std::vector<bool> used(est.components(), false);
  double best_cost = std::numeric_limits<double>::infinity();
  best_alignment_recursive(est, truth, current, used, 0.0, best_cost, best);
  return best;
}

}  // namespace

TEST_CASE("align_labels identity and swap") {
  Rng rng(1);
  const MixtureParams truth = random_params(2, 4, rng);
  CHECK(align_labels(truth, truth) == std::vector<int>{0, 1});

  MixtureParams swapped;
  swapped.pi = (VectorXd(2) << truth.pi[1], truth.pi[0]).finished();
  swapped.betas = {truth.betas[1], truth.betas[0]};
  CHECK(align_labels(swapped, truth) == std::vector<int>{1, 0});
}

TEST_CASE("align_labels agrees with exhaustive enumeration and is optimal") {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const int M = t % 2 == 0 ? 3 : 2;
    const MixtureParams truth = random_params(M, 3, rng);
    const MixtureParams est = random_params(M, 3, rng);
    const std::vector<int> perm = align_labels(est, truth);
    CHECK(perm == oracle_alignment(est, truth));

    const double chosen = sqrt_sse_beta(apply_alignment(est, perm), truth);
    std::vector<int> other(M);
    std::iota(other.begin(), other.end(), 0);
    do {
      CHECK(chosen <= sqrt_sse_beta(apply_alignment(est, other), truth) + 1e-12);
    } while (std::next_permutation(other.begin(), other.end()));
  }
}

TEST_CASE("aligned error is invariant to the estimate's labeling") {
  Rng rng(3);
  const MixtureParams truth = random_params(3, 3, rng);
  const MixtureParams est = random_params(3, 3, rng);
  const double base = sqrt_sse_beta(apply_alignment(est, align_labels(est, truth)), truth);

  std::vector<int> relabel = {2, 0, 1};
  const MixtureParams shuffled = apply_alignment(est, relabel);
  const double again =
      sqrt_sse_beta(apply_alignment(shuffled, align_labels(shuffled, truth)), truth);
  CHECK(again == Catch::Approx(base).margin(1e-12));
}

TEST_CASE("sqrt_sse values") {
  Rng rng(4);
  const MixtureParams truth = random_params(2, 4, rng);
  CHECK(sqrt_sse_beta(truth, truth) == 0.0);

  MixtureParams off = truth;
  off.betas[1][2] += 3.0;
  CHECK(sqrt_sse_beta(off, truth) == Catch::Approx(3.0).margin(1e-12));

  const MixtureParams est = random_params(2, 4, rng);
  long double sse = 0.0L;
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 4; ++k) {
      const long double d = est.betas[j][k] - truth.betas[j][k];
      sse += d * d;
    }
  CHECK(sqrt_sse_beta(est, truth) ==
        Catch::Approx(std::sqrt(static_cast<double>(sse))).margin(1e-12));

  CHECK(sqrt_sse_pi((VectorXd(2) << 0.6, 0.4).finished(),
                    (VectorXd(2) << 0.7, 0.3).finished()) ==
        Catch::Approx(std::sqrt(0.02)).margin(1e-12));
  CHECK(sqrt_sse_pi(truth.pi, truth.pi) == 0.0);
}

TEST_CASE("predict_binary") {
  MixtureParams boundary;
  boundary.pi = VectorXd::Ones(1);
  boundary.betas = {VectorXd::Zero(3)};
  MatrixXd X(1, 3);
  X << 1, 0.4, -0.2;
  CHECK(predict_binary(boundary, X) == std::vector<int>{1});  // exactly 0.5 predicts 1

  MixtureParams sure;
  sure.pi = (VectorXd(2) << 0.5, 0.5).finished();
  sure.betas = {(VectorXd(3) << 5.0, 0, 0).finished(), (VectorXd(3) << 4.0, 0, 0).finished()};
  CHECK(predict_binary(sure, X) == std::vector<int>{1});

  Rng rng(5);
  const MixtureParams params = random_params(2, 3, rng);
  MatrixXd Xr(20, 3);
  for (int i = 0; i < 20; ++i) {
    Xr(i, 0) = 1.0;
    Xr(i, 1) = rng.normal();
    Xr(i, 2) = rng.normal();
  }
  const std::vector<int> pred = predict_binary(params, Xr);
  for (int i = 0; i < 20; ++i) {
    double prob = 0.0;
    for (int j = 0; j < 2; ++j)
      prob += params.pi[j] * oracle::sigmoid(Xr.row(i).dot(params.betas[j]));
    CHECK(pred[i] == (prob >= 0.5 ? 1 : 0));
  }

  // alternate rule: only the heaviest component decides
  MixtureParams lopsided;
  lopsided.pi = (VectorXd(2) << 0.9, 0.1).finished();
  lopsided.betas = {(VectorXd(3) << -3.0, 0, 0).finished(), (VectorXd(3) << 9.0, 0, 0).finished()};
  CHECK(predict_binary(lopsided, X, PredictionRule::MaxWeightComponent) == std::vector<int>{0});
}

TEST_CASE("confusion metrics") {
  const ClassificationMetrics perfect =
      confusion_metrics(ConfusionCounts{.tp = 6, .tn = 4, .fp = 0, .fn = 0});
  CHECK(perfect.error == 0.0);
  CHECK(perfect.sensitivity == 1.0);
  CHECK(perfect.specificity == 1.0);

  // all-ones prediction against all-zeros actual
  const std::vector<int> ones(5, 1);
  const VectorXd zeros = VectorXd::Zero(5);
  const ConfusionCounts c = confusion_counts(ones, zeros);
  CHECK(c.fp == 5);
  const ClassificationMetrics m = confusion_metrics(c);
  CHECK(m.error == 1.0);
  CHECK(m.specificity == 0.0);
  CHECK(std::isnan(m.sensitivity));

  const ClassificationMetrics mixed =
      confusion_metrics(ConfusionCounts{.tp = 3, .tn = 4, .fp = 2, .fn = 1});
  CHECK(mixed.error == Catch::Approx(0.3).margin(1e-15));
  CHECK(mixed.sensitivity == Catch::Approx(0.75).margin(1e-15));
  CHECK(mixed.specificity == Catch::Approx(2.0 / 3.0).margin(1e-15));

  // error complements accuracy (up to one rounding of the two ratios)
  Rng rng(6);
  for (int t = 0; t < 50; ++t) {
    ConfusionCounts cc;
    cc.tp = static_cast<int>(rng.uniform01() * 20);
    cc.tn = static_cast<int>(rng.uniform01() * 20);
    cc.fp = 1 + static_cast<int>(rng.uniform01() * 20);
    cc.fn = static_cast<int>(rng.uniform01() * 20);
    const double err = confusion_metrics(cc).error;
    CHECK(err == Catch::Approx(1.0 - static_cast<double>(cc.tp + cc.tn) / cc.total())
                     .margin(1e-15));
  }
}

TEST_CASE("summarize quantiles") {
  CHECK(summarize({4.0, 4.0, 4.0}).median == 4.0);
  CHECK(summarize({4.0, 4.0, 4.0}).lower == 4.0);
  CHECK(summarize({4.0, 4.0, 4.0}).upper == 4.0);

  std::vector<double> ramp(1000);
  std::iota(ramp.begin(), ramp.end(), 1.0);
  const SummaryStat s = summarize(ramp);
  CHECK(s.median == Catch::Approx(500.5).margin(1e-12));
  CHECK(s.lower == Catch::Approx(25.975).margin(1e-12));
  CHECK(s.upper == Catch::Approx(975.025).margin(1e-12));
  CHECK(s.n_used == 1000);
  CHECK(s.n_missing == 0);

  const SummaryStat single = summarize({7.5});
  CHECK(single.median == 7.5);
  CHECK(single.lower == 7.5);
  CHECK(single.upper == 7.5);

  CHECK_THROWS_AS(summarize({}), std::invalid_argument);
  CHECK_THROWS_AS(summarize({missing_value()}), std::invalid_argument);

  // missing values excluded, not zeroed
  const SummaryStat with_missing = summarize({1.0, missing_value(), 3.0});
  CHECK(with_missing.n_used == 2);
  CHECK(with_missing.n_missing == 1);
  CHECK(with_missing.median == 2.0);

  Rng rng(7);
  for (int t = 0; t < 30; ++t) {
    std::vector<double> values(5 + static_cast<int>(rng.uniform01() * 40));
    for (double& v : values) v = rng.uniform(-100.0, 100.0);
    const SummaryStat st = summarize(values);
    CHECK(st.lower <= st.median);
    CHECK(st.median <= st.upper);
    CHECK(st.median == Catch::Approx(oracle::quantile_by_hand(values, 0.5)).margin(1e-12));
    CHECK(st.lower == Catch::Approx(oracle::quantile_by_hand(values, 0.025)).margin(1e-12));
    CHECK(st.upper == Catch::Approx(oracle::quantile_by_hand(values, 0.975)).margin(1e-12));

    // appending a new maximum cannot pull the upper bound down
    std::vector<double> extended = values;
    extended.push_back(*std::max_element(values.begin(), values.end()) + 5.0);
    CHECK(summarize(extended).upper >= st.upper - 1e-12);
  }
}
