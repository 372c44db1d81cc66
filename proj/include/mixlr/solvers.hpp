#pragma once

#include "mixlr/model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace mixlr {

enum class SolveStatus { Ok, SolveFailure, Separation };

struct SolveResult {
  VectorXd beta;
  SolveStatus status = SolveStatus::Ok;
  int iterations = 0;
};

// ---------------------------------------------------------------------------
// Per-partition objectives and gradients.
//
// The three M-step solvers maximize, on the rows of one partition:
//   ML:    l(b)  = sum_i y_i eta_i - log(1 + exp(eta_i))
//   ridge: l(b)  - (lambda/2) b'b
//   LT:    l(b)  - d * b_ref'b - (lambda/2) b'b
// ---------------------------------------------------------------------------

inline double partition_loglik(const VectorXd& beta, const MatrixXd& X, const VectorXd& y) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double eta = X.row(i).dot(beta);
    const double softplus =
        eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
    total += y[i] * eta - softplus;
  }
  return total;
}

inline VectorXd partition_loglik_grad(const VectorXd& beta, const MatrixXd& X, const VectorXd& y) {
  VectorXd resid(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) resid[i] = y[i] - inverse_link(X.row(i).dot(beta));
  return X.transpose() * resid;
}

inline double ridge_objective(const VectorXd& beta, const MatrixXd& X, const VectorXd& y,
                              double lambda) {
  return partition_loglik(beta, X, y) - 0.5 * lambda * beta.squaredNorm();
}

inline VectorXd ridge_objective_grad(const VectorXd& beta, const MatrixXd& X, const VectorXd& y,
                                     double lambda) {
  return partition_loglik_grad(beta, X, y) - lambda * beta;
}

inline double lt_objective(const VectorXd& beta, const MatrixXd& X, const VectorXd& y,
                           double lambda, double d, const VectorXd& beta_ref) {
  return partition_loglik(beta, X, y) - d * beta_ref.dot(beta) - 0.5 * lambda * beta.squaredNorm();
}

inline VectorXd lt_objective_grad(const VectorXd& beta, const MatrixXd& X, const VectorXd& y,
                                  double lambda, double d, const VectorXd& beta_ref) {
  return partition_loglik_grad(beta, X, y) - d * beta_ref - lambda * beta;
}

namespace detail {

// One pass of weights and the weighted working response:
//   w_i   = p_i (1 - p_i)
//   X'W V = X'(w . eta + (y - p))          (the W^{-1} in V cancels)
inline void irwls_normal_equations(const MatrixXd& X, const VectorXd& y, const VectorXd& beta,
                                   double lambda, MatrixXd& U, VectorXd& rhs) {
  const Eigen::Index n = X.rows();
  VectorXd eta = X * beta;
  VectorXd w(n), r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = inverse_link(eta[i]);
    w[i] = p * (1.0 - p);
    r[i] = w[i] * eta[i] + (y[i] - p);
  }
  U.noalias() = X.transpose() * w.asDiagonal() * X;
  U.diagonal().array() += lambda;
  rhs.noalias() = X.transpose() * r;
}

}  // namespace detail

/// Weight/working-response state of one IRWLS pass, exposed for diagnostics.
struct IRWLSState {
  VectorXd W;  // diagonal of the weight matrix, entries in (0, 0.25]
  VectorXd V;  // working response X b + W^{-1}(y - p)
  MatrixXd U;  // X'WX + lambda I
};

inline IRWLSState irwls_state(const MatrixXd& X, const VectorXd& y, const VectorXd& beta,
                              double lambda) {
  IRWLSState s;
  VectorXd eta = X * beta;
  s.W.resize(X.rows());
  s.V.resize(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double p = inverse_link(eta[i]);
    s.W[i] = p * (1.0 - p);
    s.V[i] = eta[i] + (y[i] - p) / s.W[i];
  }
  s.U.noalias() = X.transpose() * s.W.asDiagonal() * X;
  s.U.diagonal().array() += lambda;
  return s;
}

namespace detail {

// objective that the inner loop monitors: the clamped bernoulli log-likelihood
// plus the penalties, so that fully saturated fits plateau instead of creeping
inline double clamped_penalized_objective(const MatrixXd& X, const VectorXd& y,
                                          const VectorXd& beta, double lambda, double d,
                                          const VectorXd* beta_ref) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) total += log_bernoulli(X.row(i).dot(beta), y[i]);
  total -= 0.5 * lambda * beta.squaredNorm();
  if (d != 0.0) total -= d * beta_ref->dot(beta);
  return total;
}

// Shared inner loop:  b <- (X'WX + lambda I)^{-1} (X'WV - d b_ref).
// Stops on a small step, on iteration budget, or once the monitored objective
// stalls; a stalled loop returns its best-objective iterate, which pins down
// the estimate when the likelihood has flattened (saturation) or the solve
// has started to cycle. divergence_bound > 0 turns on the separation guard
// (the unpenalized path).
inline SolveResult penalized_irwls(const MatrixXd& X, const VectorXd& y, VectorXd beta,
                                   double lambda, double d, const VectorXd* beta_ref,
                                   int max_iters, double tol, double divergence_bound) {
  const Eigen::Index k = X.cols();
  MatrixXd U(k, k);
  VectorXd rhs(k), beta_new(k);
  double obj = clamped_penalized_objective(X, y, beta, lambda, d, beta_ref);
  VectorXd best_beta = beta;
  double best_obj = obj;
  for (int it = 1; it <= max_iters; ++it) {
    irwls_normal_equations(X, y, beta, lambda, U, rhs);
    if (d != 0.0) rhs.noalias() -= d * (*beta_ref);

    if (lambda > 0.0) {
      beta_new = U.ldlt().solve(rhs);
    } else {
      Eigen::FullPivLU<MatrixXd> lu(U);
      if (!lu.isInvertible()) return {std::move(beta), SolveStatus::SolveFailure, it};
      beta_new = lu.solve(rhs);
    }
    if (!beta_new.allFinite()) return {std::move(beta), SolveStatus::SolveFailure, it};
    if (divergence_bound > 0.0 && beta_new.lpNorm<Eigen::Infinity>() > divergence_bound)
      return {std::move(beta_new), SolveStatus::Separation, it};

    const double obj_new = clamped_penalized_objective(X, y, beta_new, lambda, d, beta_ref);
    if (obj_new > best_obj) {
      best_obj = obj_new;
      best_beta = beta_new;
    }
    const bool small_step = (beta_new - beta).lpNorm<Eigen::Infinity>() < tol;
    const bool stalled = obj_new <= obj + 1e-10 * (1.0 + std::abs(obj));
    beta = beta_new;
    obj = obj_new;
    if (small_step) return {std::move(beta), SolveStatus::Ok, it};
    if (stalled) return {std::move(best_beta), SolveStatus::Ok, it};
  }
  return {std::move(beta), SolveStatus::Ok, max_iters};
}

}  // namespace detail

inline constexpr double kDivergenceBound = 1e4;

/// Unpenalized IRWLS (Newton) on one partition. Flags rank deficiency as
/// SolveFailure and runaway coefficients (separation) once the sup-norm
/// crosses divergence_bound.
inline SolveResult irwls_ml(const MatrixXd& X, const VectorXd& y, const VectorXd& beta_init,
                            int max_iters = 25, double tol = 1e-8,
                            double divergence_bound = kDivergenceBound) {
  return detail::penalized_irwls(X, y, beta_init, 0.0, 0.0, nullptr, max_iters, tol,
                                 divergence_bound);
}

/// Ridge IRWLS: b <- (X'WX + lambda I)^{-1} X'WV. Always solvable for lambda > 0;
/// lambda = 0 degrades to the ML path.
inline SolveResult irwls_ridge(const MatrixXd& X, const VectorXd& y, const VectorXd& beta_init,
                               double lambda, int max_iters = 25, double tol = 1e-8) {
  return detail::penalized_irwls(X, y, beta_init, lambda, 0.0, nullptr, max_iters, tol, 0.0);
}

/// Liu-type IRWLS: b <- (X'WX + lambda I)^{-1} (X'WV - d b_ridge).
/// With d = 0 this performs exactly the ridge iteration.
inline SolveResult irwls_lt(const MatrixXd& X, const VectorXd& y, const VectorXd& beta_init,
                            double lambda, double d, const VectorXd& beta_ridge,
                            int max_iters = 25, double tol = 1e-8) {
  return detail::penalized_irwls(X, y, beta_init, lambda, d, &beta_ridge, max_iters, tol, 0.0);
}

// ---------------------------------------------------------------------------
// Penalty parameter selection
// ---------------------------------------------------------------------------

inline constexpr double kLambdaMax = 1e6;

struct LambdaSelection {
  double lambda;
  bool capped;  // true when beta'beta was (near) zero and the cap applied
};

/// Plug-in ridge parameter (p+1) / beta'beta. Used with the ML estimate for
/// the ridge stage and with the ridge estimate for the LT stage.
inline LambdaSelection select_lambda(const VectorXd& beta, double lambda_max = kLambdaMax) {
  const double btb = beta.squaredNorm();
  const double raw = static_cast<double>(beta.size()) / btb;
  if (!(raw <= lambda_max)) return {lambda_max, true};  // also catches btb == 0 -> inf
  return {raw, false};
}

/// Estimated MSE of the Liu-type estimator at bias parameter d, split into the
/// variance trace and squared-bias parts:
///   A = (X'WX + lambda I)^{-1},  S_d = A (X'WX - d I) A,
///   mse(d) = tr[S_d (X'WX) S_d] + || S_d X'W p_ref - beta_ref ||^2,
/// a quadratic polynomial in d. The weight matrix W is the working IRWLS
/// weight (evaluated at beta_weights, the running iterate); only the response
/// surface p_ref = g^{-1}(X beta_ref) and the comparison target carry the
/// ridge estimate that stands in for the unknown truth.
struct LtMse {
  double variance;
  double bias_sq;
  double total() const { return variance + bias_sq; }
};

namespace detail {

struct LtMseQuadratic {
  // total mse as a2 d^2 + a1 d + a0
  double a2, a1, a0;
  double vertex() const { return -a1 / (2.0 * a2); }
  double at(double d) const { return (a2 * d + a1) * d + a0; }
  // the two parts, each quadratic as well
  double var_a2, var_a1, var_a0;
  double variance_at(double d) const { return (var_a2 * d + var_a1) * d + var_a0; }
};

inline double trace_product(const MatrixXd& P, const MatrixXd& Q) {
  return P.cwiseProduct(Q.transpose()).sum();
}

inline LtMseQuadratic lt_mse_quadratic(double lambda, const MatrixXd& X, const VectorXd& beta_ref,
                                       const VectorXd& beta_weights) {
  const Eigen::Index k = X.cols();
  VectorXd eta_w = X * beta_weights;
  VectorXd eta_ref = X * beta_ref;
  VectorXd w(X.rows()), wp(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double pw = inverse_link(eta_w[i]);
    w[i] = pw * (1.0 - pw);
    wp[i] = w[i] * inverse_link(eta_ref[i]);
  }
  MatrixXd B = X.transpose() * w.asDiagonal() * X;  // X'WX
  MatrixXd reg = B;
  reg.diagonal().array() += lambda;
  MatrixXd A = reg.ldlt().solve(MatrixXd::Identity(k, k));
  const VectorXd u = X.transpose() * wp;  // X'W g^{-1}(X beta_ref)

  const MatrixXd C0 = A * B * A;  // S_d = C0 - d C1
  const MatrixXd C1 = A * A;
  const VectorXd v0 = C0 * u - beta_ref;
  const VectorXd v1 = C1 * u;

  LtMseQuadratic q;
  q.var_a2 = trace_product(C1 * B, C1);
  q.var_a1 = -2.0 * trace_product(C0 * B, C1);
  q.var_a0 = trace_product(C0 * B, C0);
  q.a2 = q.var_a2 + v1.squaredNorm();
  q.a1 = q.var_a1 - 2.0 * v0.dot(v1);
  q.a0 = q.var_a0 + v0.squaredNorm();
  return q;
}

}  // namespace detail

inline LtMse lt_mse_parts(double d, double lambda, const MatrixXd& X, const VectorXd& beta_ref,
                          const VectorXd& beta_weights) {
  const auto q = detail::lt_mse_quadratic(lambda, X, beta_ref, beta_weights);
  const double var = q.variance_at(d);
  return {var, q.at(d) - var};
}

inline LtMse lt_mse_parts(double d, double lambda, const MatrixXd& X, const VectorXd& beta_ref) {
  return lt_mse_parts(d, lambda, X, beta_ref, beta_ref);
}

inline double lt_mse(double d, double lambda, const MatrixXd& X, const VectorXd& beta_ref,
                     const VectorXd& beta_weights) {
  return detail::lt_mse_quadratic(lambda, X, beta_ref, beta_weights).at(d);
}

inline double lt_mse(double d, double lambda, const MatrixXd& X, const VectorXd& beta_ref) {
  return lt_mse(d, lambda, X, beta_ref, beta_ref);
}

/// Bias-correction parameter minimizing the estimated MSE: the vertex of the
/// quadratic when its leading coefficient is positive, otherwise the best
/// point of the fallback grid {-5, -4.9, ..., 5}.
inline double select_d(double lambda, const MatrixXd& X, const VectorXd& beta_ridge,
                       const VectorXd& beta_weights) {
  const auto q = detail::lt_mse_quadratic(lambda, X, beta_ridge, beta_weights);
  if (q.a2 > 0.0 && std::isfinite(q.a2) && std::isfinite(q.a1)) {
    const double vertex = q.vertex();
    if (std::isfinite(vertex)) return vertex;
  }
  double best_d = -5.0;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 100; ++i) {
    const double d = -5.0 + 0.1 * i;
    const double value = q.at(d);
    if (value < best) {
      best = value;
      best_d = d;
    }
  }
  return best_d;
}

inline double select_d(double lambda, const MatrixXd& X, const VectorXd& beta_ridge) {
  return select_d(lambda, X, beta_ridge, beta_ridge);
}

}  // namespace mixlr
