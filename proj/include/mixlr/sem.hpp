#pragma once

#include "mixlr/model.hpp"
#include "mixlr/rng.hpp"
#include "mixlr/solvers.hpp"

#include <array>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixlr {

enum class Solver { ML, Ridge, LT };

inline const char* solver_name(Solver s) {
  switch (s) {
    case Solver::ML: return "ML";
    case Solver::Ridge: return "RIDGE";
    case Solver::LT: return "LT";
  }
  return "?";
}

enum class Termination { Tolerance, MaxIters, DegeneratePartition };

inline const char* termination_name(Termination t) {
  switch (t) {
    case Termination::Tolerance: return "tolerance";
    case Termination::MaxIters: return "max-iters";
    case Termination::DegeneratePartition: return "degenerate-partition";
  }
  return "?";
}

/// Stochastic classification of every observation to one component.
struct HardAssignment {
  std::vector<int> labels;  // 0-based component index per observation
  std::vector<int> sizes;   // per-component counts, summing to n
};

struct FitConfig {
  int max_iters = 500;
  double loglik_tol = 1e-6;       // absolute change of the observed-data log-likelihood
  int min_partition_size = 2;     // below this a partition is degenerate (empty-or-singleton rule)
  int n_restarts = 9;             // additional seeded starts; best final log-likelihood wins
  std::uint64_t seed = 1;
  Solver solver = Solver::ML;
  int inner_iters = 25;           // IRWLS iterations per M-step solve
  double inner_tol = 1e-8;
  bool single_newton_step = false;  // one IRWLS update per M-step, the update-formula reading
  bool return_terminal = false;     // return the final iterate instead of the trace-best one
  double divergence_bound = kDivergenceBound;

  int effective_inner_iters() const { return single_newton_step ? 1 : inner_iters; }
};

struct ComponentPenalty {
  double lambda = 0.0;
  double d = 0.0;
};

struct FitResult {
  MixtureParams params;
  double final_loglik = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  Termination termination = Termination::MaxIters;
  std::vector<double> loglik_trace;               // observed-data log-likelihood per iteration
  std::vector<ComponentPenalty> penalty_report;   // (lambda_j, d_j) behind the returned params
  int solve_failures = 0;   // singular unpenalized systems encountered
  int separations = 0;      // divergence-guard trips on the unpenalized path
  int restart_index = 0;    // which seeded start produced this result
};

/// Posterior responsibilities tau_ij, computed in log space so that no row can
/// underflow to all zeros.
inline PosteriorMatrix e_step(const MixtureParams& params, const Dataset& data) {
  const int M = params.components();
  if (M > 64) throw std::invalid_argument("e_step: too many components");
  std::vector<double> log_pi(M);
  for (int j = 0; j < M; ++j) log_pi[j] = std::log(params.pi[j]);

  MatrixXd eta(data.n(), M);
  for (int j = 0; j < M; ++j) eta.col(j) = data.X * params.betas[j];

  PosteriorMatrix post;
  post.tau.resize(data.n(), M);
  std::array<double, 64> terms{};
  for (int i = 0; i < data.n(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < M; ++j) {
      terms[j] = log_pi[j] + detail::log_bernoulli(eta(i, j), data.y[i]);
      m = std::max(m, terms[j]);
    }
    double denom = 0.0;
    for (int j = 0; j < M; ++j) {
      const double t = std::exp(terms[j] - m);
      post.tau(i, j) = t;
      denom += t;
    }
    post.tau.row(i) /= denom;
  }
  return post;
}

/// Draw one component label per observation from its responsibility row.
/// Consumes exactly one uniform per observation.
template <class RngLike>
HardAssignment s_step(const PosteriorMatrix& post, RngLike& rng) {
  HardAssignment a;
  a.labels.resize(post.n());
  a.sizes.assign(post.components(), 0);
  for (int i = 0; i < post.n(); ++i) {
    const double u = rng.uniform01();
    double cum = 0.0;
    int label = post.components() - 1;
    for (int j = 0; j < post.components(); ++j) {
      cum += post.tau(i, j);
      if (u < cum) {
        label = j;
        break;
      }
    }
    a.labels[i] = label;
    a.sizes[label] += 1;
  }
  return a;
}

/// Empty-or-undersized partition rule: the SEM chain must stop and return the
/// previous iterate when this reports true.
inline bool check_degeneracy(const HardAssignment& a, int min_partition_size) {
  for (int nj : a.sizes)
    if (nj < min_partition_size) return true;
  return false;
}

/// pi_j = n_j / n.
inline VectorXd update_mixing_proportions(const HardAssignment& a) {
  int n = 0;
  for (int nj : a.sizes) {
    if (nj == 0) throw std::invalid_argument("update_mixing_proportions: empty partition");
    n += nj;
  }
  VectorXd pi(a.sizes.size());
  for (std::size_t j = 0; j < a.sizes.size(); ++j) pi[j] = static_cast<double>(a.sizes[j]) / n;
  return pi;
}

/// Uniform mixing proportions and coefficients drawn i.i.d. uniform on
/// [-0.5, 0.5] per coordinate.
template <class RngLike>
MixtureParams initialize(const Dataset& data, int M, RngLike& rng) {
  MixtureParams params;
  params.pi = VectorXd::Constant(M, 1.0 / M);
  params.betas.resize(M);
  for (int j = 0; j < M; ++j) {
    VectorXd b(data.X.cols());
    for (Eigen::Index k = 0; k < b.size(); ++k) b[k] = rng.uniform(-0.5, 0.5);
    params.betas[j] = std::move(b);
  }
  return params;
}

namespace detail {

struct ComponentUpdate {
  VectorXd beta;
  ComponentPenalty penalty;
  int solve_failures = 0;
  int separations = 0;
};

// Per-component warm starts for the auxiliary recursions the penalized stages
// depend on. The plug-in lambdas read "the ML estimate" and "the ridge
// estimate" of a partition, each being the running iterate of its own IRWLS
// recursion across SEM iterations, so those chains persist here instead of
// being re-derived from the (shrunken) main iterate every time.
struct MStepState {
  std::vector<VectorXd> ml;
  std::vector<VectorXd> ridge;
};

// One M-step solve on a partition's rows. The ridge stage takes its lambda
// from the ML chain, the LT stage re-derives lambda from the ridge chain and
// then picks d by minimizing the estimated MSE, once per SEM iteration.
inline ComponentUpdate update_component(Solver solver, const MatrixXd& X, const VectorXd& y,
                                        const VectorXd& beta_cur, MStepState& state, int j,
                                        const FitConfig& cfg) {
  ComponentUpdate out;
  const int iters = cfg.effective_inner_iters();
  const VectorXd cold = cfg.single_newton_step ? beta_cur : VectorXd::Zero(X.cols()).eval();

  const SolveResult ml = irwls_ml(X, y, cold, iters, cfg.inner_tol, cfg.divergence_bound);
  if (ml.status == SolveStatus::SolveFailure) out.solve_failures += 1;
  if (ml.status == SolveStatus::Separation) out.separations += 1;
  if (ml.status != SolveStatus::SolveFailure) state.ml[j] = ml.beta;

  if (solver == Solver::ML) {
    // on a singular system keep the current coefficients; a diverged iterate
    // is kept as-is (that IS the ML estimate under separation)
    out.beta = (ml.status == SolveStatus::SolveFailure) ? beta_cur : ml.beta;
    return out;
  }

  const double lambda_ridge = select_lambda(state.ml[j]).lambda;
  SolveResult ridge = irwls_ridge(X, y, cold, lambda_ridge, iters, cfg.inner_tol);
  if (ridge.status != SolveStatus::Ok) {
    out.solve_failures += 1;
    ridge.beta = solver == Solver::Ridge ? beta_cur : state.ridge[j];
  }
  state.ridge[j] = ridge.beta;

  if (solver == Solver::Ridge) {
    out.beta = ridge.beta;
    out.penalty = {lambda_ridge, 0.0};
    return out;
  }

  // One application of the LT update from the ridge state: with W, V taken at
  // the ridge estimate this is A(X'WX - dI)A X'WV + correction, the estimator
  // whose variance and bias the d-selection MSE describes (and d = 0 leaves
  // the ridge fixed point untouched).
  const double lambda_lt = select_lambda(ridge.beta).lambda;
  const double d = select_d(lambda_lt, X, ridge.beta);
  SolveResult lt = irwls_lt(X, y, ridge.beta, lambda_lt, d, ridge.beta, 1, cfg.inner_tol);
  if (lt.status != SolveStatus::Ok) {
    out.solve_failures += 1;
    lt.beta = beta_cur;
  }
  out.beta = lt.beta;
  out.penalty = {lambda_lt, d};
  return out;
}

inline void gather_partition(const Dataset& data, const std::vector<int>& labels, int j, int nj,
                             MatrixXd& Xj, VectorXd& yj) {
  Xj.resize(nj, data.X.cols());
  yj.resize(nj);
  int r = 0;
  for (int i = 0; i < data.n(); ++i) {
    if (labels[i] == j) {
      Xj.row(r) = data.X.row(i);
      yj[r] = data.y[i];
      ++r;
    }
  }
}

}  // namespace detail

/// One SEM chain from the supplied starting point. Alternates E-, S- and
/// M-steps until the observed-data log-likelihood change drops below
/// loglik_tol, max_iters is reached, or the S-step produces a degenerate
/// partition (in which case the previous iterate stands, as the stop rule
/// requires). By default the returned parameters are the best iterate of the
/// trace rather than the terminal one; see FitConfig::return_terminal.
template <class RngLike>
FitResult run_sem_chain(const Dataset& data, const MixtureParams& start, const FitConfig& cfg,
                        RngLike& rng) {
  start.validate();
  const int M = start.components();

  MixtureParams cur = start;
  double cur_ll = mixture_loglik(cur, data);

  FitResult res;
  MixtureParams best = cur;
  double best_ll = cur_ll;
  std::vector<ComponentPenalty> cur_penalties(M), best_penalties(M);
  detail::MStepState state{start.betas, start.betas};

  MatrixXd Xj;
  VectorXd yj;
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    const PosteriorMatrix post = e_step(cur, data);
    const HardAssignment assign = s_step(post, rng);
    if (check_degeneracy(assign, cfg.min_partition_size)) {
      res.termination = Termination::DegeneratePartition;
      break;
    }

    MixtureParams next;
    next.pi = update_mixing_proportions(assign);
    next.betas.resize(M);
    for (int j = 0; j < M; ++j) {
      detail::gather_partition(data, assign.labels, j, assign.sizes[j], Xj, yj);
      auto upd = detail::update_component(cfg.solver, Xj, yj, cur.betas[j], state, j, cfg);
      next.betas[j] = std::move(upd.beta);
      cur_penalties[j] = upd.penalty;
      res.solve_failures += upd.solve_failures;
      res.separations += upd.separations;
    }

    cur = std::move(next);
    const double new_ll = mixture_loglik(cur, data);
    res.loglik_trace.push_back(new_ll);
    if (new_ll > best_ll) {
      best_ll = new_ll;
      best = cur;
      best_penalties = cur_penalties;
    }
    const double delta = std::abs(new_ll - cur_ll);
    cur_ll = new_ll;
    if (delta < cfg.loglik_tol) {
      res.converged = true;
      res.termination = Termination::Tolerance;
      break;
    }
  }

  res.iterations = static_cast<int>(res.loglik_trace.size());
  if (cfg.return_terminal) {
    res.params = std::move(cur);
    res.final_loglik = cur_ll;
    res.penalty_report = cur_penalties;
  } else {
    res.params = std::move(best);
    res.final_loglik = best_ll;
    res.penalty_report = best_penalties;
  }
  return res;
}

/// Fit an M-component mixture with n_restarts+1 seeded SEM chains; the chain
/// with the highest final observed-data log-likelihood wins. Deterministic in
/// (data, cfg): restart r runs from seed derive_seed(cfg.seed, r).
inline FitResult fit(const Dataset& data, int M, const FitConfig& cfg) {
  if (M < 1) throw std::invalid_argument("fit: need at least one component");
  if (data.n() < M * cfg.min_partition_size)
    throw std::invalid_argument("fit: need n >= M * min_partition_size (n=" +
                                std::to_string(data.n()) + ", M=" + std::to_string(M) + ")");

  FitResult best;
  for (int r = 0; r <= cfg.n_restarts; ++r) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(r)));
    const MixtureParams start = initialize(data, M, rng);
    FitResult res = run_sem_chain(data, start, cfg, rng);
    res.restart_index = r;
    if (r == 0 || res.final_loglik > best.final_loglik) best = std::move(res);
  }
  return best;
}

}  // namespace mixlr
