#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "latentgeo/common.hpp"
#include "latentgeo/kernel.hpp"

namespace latentgeo {

namespace detail {

// Cholesky of a noisy Gram matrix. On failure adds 1e-10 * alpha to the
// diagonal and retries once; a second failure is a hard error.
inline Eigen::LLT<Eigen::MatrixXd> factor_gram(Eigen::MatrixXd ktilde,
                                               double alpha) {
  Eigen::LLT<Eigen::MatrixXd> llt(ktilde);
  if (llt.info() == Eigen::Success) return llt;
  ktilde.diagonal().array() += 1e-10 * alpha;
  llt.compute(ktilde);
  if (llt.info() == Eigen::Success) return llt;
  throw NumericalError("Gram matrix factorization failed after jitter retry");
}

}  // namespace detail

/// A Gaussian-process latent variable model: latent inputs X (N x q),
/// centered observations Y (N x p), kernel hyperparameters, and cached
/// factorizations of the noisy Gram matrix. Immutable once built.
class LatentModel {
 public:
  /// Builds a model from given latents and observations. Y is used as-is
  /// and assumed centered; y_mean records the offset removed from the raw
  /// data (zero when constructing directly from centered data).
  LatentModel(Eigen::MatrixXd X, Eigen::MatrixXd Y, KernelParams params,
              Eigen::VectorXd y_mean = Eigen::VectorXd())
      : X_(std::move(X)), Y_(std::move(Y)), params_(params) {
    params_.validate();
    if (X_.rows() < 1 || X_.cols() < 1) {
      throw InputError("LatentModel: X must be a non-empty N x q matrix");
    }
    if (Y_.rows() != X_.rows() || Y_.cols() < 1) {
      throw InputError("LatentModel: Y must be N x p with the same N as X");
    }
    if (!X_.allFinite() || !Y_.allFinite()) {
      throw InputError("LatentModel: X and Y must be finite");
    }
    if (y_mean.size() == 0) {
      y_mean_ = Eigen::VectorXd::Zero(Y_.cols());
    } else if (y_mean.size() == Y_.cols()) {
      y_mean_ = std::move(y_mean);
    } else {
      throw InputError("LatentModel: y_mean length must equal p");
    }
    if (!y_mean_.allFinite()) {
      throw InputError("LatentModel: y_mean must be finite");
    }
    llt_ = detail::factor_gram(kernel::gram_matrix(X_, params_, true),
                               params_.alpha);
    alpha_vec_ = llt_.solve(Y_);
  }

  /// Centers the raw observations column-wise and stores the offset.
  static LatentModel from_raw(Eigen::MatrixXd X, const Eigen::MatrixXd& Y_raw,
                              KernelParams params) {
    if (Y_raw.rows() < 1) throw InputError("LatentModel: empty data");
    Eigen::VectorXd mean = Y_raw.colwise().mean().transpose();
    Eigen::MatrixXd Yc = Y_raw.rowwise() - mean.transpose();
    return LatentModel(std::move(X), std::move(Yc), params, std::move(mean));
  }

  Eigen::Index n() const { return X_.rows(); }
  Eigen::Index q() const { return X_.cols(); }
  Eigen::Index p() const { return Y_.cols(); }

  const Eigen::MatrixXd& latents() const { return X_; }
  const Eigen::MatrixXd& observations() const { return Y_; }
  const Eigen::VectorXd& observation_mean() const { return y_mean_; }
  const KernelParams& params() const { return params_; }

  /// K_tilde^{-1} Y, cached.
  const Eigen::MatrixXd& weights() const { return alpha_vec_; }

  /// Solves K_tilde Z = B with the cached factorization.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const {
    return llt_.solve(B);
  }

  /// log det of the noisy Gram matrix.
  double log_det_gram() const {
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  }

 private:
  Eigen::MatrixXd X_;
  Eigen::MatrixXd Y_;
  Eigen::VectorXd y_mean_;
  KernelParams params_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd alpha_vec_;
};

/// Sum over output dimensions of log N(y_:,j | 0, K + beta^{-1} I).
inline double log_marginal_likelihood(const LatentModel& m) {
  const double n = static_cast<double>(m.n());
  const double p = static_cast<double>(m.p());
  const double quad = (m.observations().array() * m.weights().array()).sum();
  return -0.5 * n * p * std::log(2.0 * M_PI) - 0.5 * p * m.log_det_gram() -
         0.5 * quad;
}

namespace detail {

struct LikelihoodTerms {
  double value;
  Eigen::MatrixXd grad_x;       // N x q
  Eigen::Vector3d grad_hyper;   // d/d log(alpha), log(omega), log(beta)
};

// Likelihood and gradients at (X, params) for given centered Y. The
// gradient with respect to X uses dL/dK = (K^{-1} Y Y^T K^{-1} - p K^{-1})/2
// chained through the squared-exponential kernel, which collapses to
//   dL/dX = -2 omega (diag(W 1) - W) X,  W = dL/dK .* K.
inline LikelihoodTerms likelihood_terms(const Eigen::MatrixXd& X,
                                        const Eigen::MatrixXd& Y,
                                        const KernelParams& params,
                                        bool want_hyper) {
  const Eigen::Index n = X.rows();
  const double p = static_cast<double>(Y.cols());

  const Eigen::MatrixXd K = kernel::gram_matrix(X, params, false);
  Eigen::MatrixXd Kt = K;
  Kt.diagonal().array() += 1.0 / params.beta;
  const Eigen::LLT<Eigen::MatrixXd> llt = factor_gram(std::move(Kt), params.alpha);

  const Eigen::MatrixXd alpha_vec = llt.solve(Y);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double quad = (Y.array() * alpha_vec.array()).sum();

  LikelihoodTerms out;
  out.value = -0.5 * static_cast<double>(n) * p * std::log(2.0 * M_PI) -
              0.5 * p * log_det - 0.5 * quad;

  const Eigen::MatrixXd k_inv =
      llt.solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd A =
      0.5 * (alpha_vec * alpha_vec.transpose() - p * k_inv);

  const Eigen::MatrixXd W = A.cwiseProduct(K);
  const Eigen::VectorXd row_sums = W.rowwise().sum();
  out.grad_x =
      -2.0 * params.omega * (row_sums.asDiagonal() * X - W * X);

  out.grad_hyper.setZero();
  if (want_hyper) {
    out.grad_hyper(0) = (A.array() * K.array()).sum();
    double g_omega = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double d2 = (X.row(i) - X.row(j)).squaredNorm();
        g_omega += 2.0 * A(i, j) * (-0.5 * params.omega * d2) * K(i, j);
      }
    }
    out.grad_hyper(1) = g_omega;
    out.grad_hyper(2) = -A.trace() / params.beta;
  }
  return out;
}

inline double likelihood_value(const Eigen::MatrixXd& X,
                               const Eigen::MatrixXd& Y,
                               const KernelParams& params) {
  const Eigen::Index n = X.rows();
  const double p = static_cast<double>(Y.cols());
  Eigen::MatrixXd Kt = kernel::gram_matrix(X, params, true);
  const Eigen::LLT<Eigen::MatrixXd> llt = factor_gram(std::move(Kt), params.alpha);
  const Eigen::MatrixXd alpha_vec = llt.solve(Y);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double quad = (Y.array() * alpha_vec.array()).sum();
  return -0.5 * static_cast<double>(n) * p * std::log(2.0 * M_PI) -
         0.5 * p * log_det - 0.5 * quad;
}

// Median of the pairwise Euclidean distances between rows.
inline double median_pairwise_distance(const Eigen::MatrixXd& X) {
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(X.rows()) * (X.rows() - 1) / 2);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < X.rows(); ++j) {
      d.push_back((X.row(i) - X.row(j)).norm());
    }
  }
  if (d.empty()) return 0.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

}  // namespace detail

/// Gradient of the log marginal likelihood with respect to the latents.
/// Rows sum to zero (the likelihood is invariant under translating X).
inline Eigen::MatrixXd likelihood_grad_X(const LatentModel& m) {
  return detail::likelihood_terms(m.latents(), m.observations(), m.params(),
                                  false)
      .grad_x;
}

struct TrainOptions {
  int max_iterations = 2000;
  double initial_step = 1e-4;
  double grad_tolerance = 1e-4;  ///< infinity norm of the full gradient
  bool learn_hyperparameters = false;
  std::uint64_t seed = 0;  ///< reserved; the trainer itself is deterministic
  std::optional<double> alpha;
  std::optional<double> omega;  ///< default: median-distance heuristic
  std::optional<double> beta;
};

struct TrainReport {
  int iterations = 0;
  double initial_log_likelihood = 0.0;
  double final_log_likelihood = 0.0;
  bool converged = false;  ///< gradient tolerance reached
};

/// Fits a GP-LVM by maximum a posteriori gradient ascent on the latents
/// (and optionally the log hyperparameters). X is initialized from the top
/// q principal component scores of the centered data; omega defaults to
/// one over the squared median pairwise distance of that initialization.
/// Plain gradient ascent with a halving line search (up to 30 halvings)
/// keeps the likelihood trace non-decreasing; iteration stops when the
/// gradient infinity norm drops below grad_tolerance, when no uphill step
/// can be found, or at max_iterations.
inline LatentModel fit_gplvm(const Eigen::MatrixXd& Y_raw, Eigen::Index q,
                             const TrainOptions& opts = {},
                             TrainReport* report = nullptr) {
  const Eigen::Index n = Y_raw.rows();
  const Eigen::Index p = Y_raw.cols();
  if (n < 2) throw InputError("fit_gplvm: need at least two observations");
  if (q < 1 || q >= p) {
    throw InputError("fit_gplvm: latent dimension must satisfy 1 <= q < p");
  }
  if (!Y_raw.allFinite()) throw InputError("fit_gplvm: Y must be finite");
  if (opts.max_iterations < 0 || !(opts.initial_step > 0.0) ||
      !(opts.grad_tolerance > 0.0)) {
    throw InputError("fit_gplvm: invalid training options");
  }

  const Eigen::VectorXd y_mean = Y_raw.colwise().mean().transpose();
  const Eigen::MatrixXd Y = Y_raw.rowwise() - y_mean.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(Y, Eigen::ComputeThinU);
  Eigen::MatrixXd X = svd.matrixU().leftCols(q) *
                      svd.singularValues().head(q).asDiagonal();

  KernelParams params;
  params.alpha = opts.alpha.value_or(1.0);
  params.beta = opts.beta.value_or(100.0);
  if (opts.omega) {
    params.omega = *opts.omega;
  } else {
    const double med = detail::median_pairwise_distance(X);
    params.omega = (std::isfinite(med) && med > 0.0) ? 1.0 / (med * med) : 1.0;
  }
  params.validate();

  double step = opts.initial_step;
  detail::LikelihoodTerms cur = detail::likelihood_terms(
      X, Y, params, opts.learn_hyperparameters);
  if (!std::isfinite(cur.value)) {
    throw NumericalError("fit_gplvm: non-finite likelihood at iteration 0");
  }

  TrainReport rep;
  rep.initial_log_likelihood = cur.value;

  int iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    double grad_norm = cur.grad_x.cwiseAbs().maxCoeff();
    if (opts.learn_hyperparameters) {
      grad_norm = std::max(grad_norm, cur.grad_hyper.cwiseAbs().maxCoeff());
    }
    if (grad_norm < opts.grad_tolerance) {
      rep.converged = true;
      break;
    }

    bool accepted = false;
    for (int halving = 0; halving <= 30; ++halving) {
      Eigen::MatrixXd X_trial = X + step * cur.grad_x;
      KernelParams trial_params = params;
      if (opts.learn_hyperparameters) {
        trial_params.alpha = params.alpha * std::exp(step * cur.grad_hyper(0));
        trial_params.omega = params.omega * std::exp(step * cur.grad_hyper(1));
        trial_params.beta = params.beta * std::exp(step * cur.grad_hyper(2));
      }
      double trial_value = -std::numeric_limits<double>::infinity();
      try {
        trial_value = detail::likelihood_value(X_trial, Y, trial_params);
      } catch (const NumericalError&) {
        // reject the step and shrink
      }
      if (std::isfinite(trial_value) && trial_value > cur.value) {
        X = std::move(X_trial);
        params = trial_params;
        cur = detail::likelihood_terms(X, Y, params,
                                       opts.learn_hyperparameters);
        if (!std::isfinite(cur.value)) {
          throw NumericalError("fit_gplvm: non-finite likelihood at iteration " +
                               std::to_string(iter + 1));
        }
        step *= 1.5;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // line search exhausted: no uphill step remains
  }

  rep.iterations = iter;
  rep.final_log_likelihood = cur.value;
  if (report) *report = rep;
  return LatentModel(std::move(X), Y, params, y_mean);
}

/// Posterior mean of the mapping at x_star in centered data space:
/// k_*^T K_tilde^{-1} Y with noise-free cross covariances k_*.
inline Eigen::VectorXd posterior_mean(const LatentModel& m,
                                      const Eigen::VectorXd& x_star) {
  if (x_star.size() != m.q()) {
    throw InputError("posterior_mean: x_star dimension mismatch");
  }
  if (!x_star.allFinite()) {
    throw InputError("posterior_mean: x_star must be finite");
  }
  return m.weights().transpose() *
         kernel::cross_vector(x_star, m.latents(), m.params());
}

/// Mean Euclidean distance between the posterior mean at each training
/// latent and the corresponding observation.
inline double avg_training_error(const LatentModel& m) {
  const Eigen::MatrixXd K =
      kernel::gram_matrix(m.latents(), m.params(), false);
  const Eigen::MatrixXd fitted = K * m.weights();
  return (fitted - m.observations()).rowwise().norm().mean();
}

}  // namespace latentgeo
