#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "latentgeo/common.hpp"

namespace latentgeo {

/// Hyperparameters of the squared-exponential covariance
///
///   k(x, x') = alpha * exp(-omega/2 * |x - x'|^2)
///
/// together with the observation noise precision beta. The noisy Gram
/// matrix is K + beta^{-1} I.
struct KernelParams {
  double alpha = 1.0;   ///< signal variance
  double omega = 1.0;   ///< inverse squared length-scale
  double beta = 100.0;  ///< noise precision

  double length_scale() const { return 1.0 / std::sqrt(omega); }

  void validate() const {
    if (!(std::isfinite(alpha) && alpha > 0.0)) {
      throw InputError("kernel parameter alpha must be finite and positive");
    }
    if (!(std::isfinite(omega) && omega > 0.0)) {
      throw InputError("kernel parameter omega must be finite and positive");
    }
    if (!(std::isfinite(beta) && beta > 0.0)) {
      throw InputError("kernel parameter beta must be finite and positive");
    }
  }
};

namespace kernel {

inline double eval(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2,
                   const KernelParams& p) {
  if (x1.size() != x2.size()) {
    throw InputError("kernel eval: point dimensions disagree");
  }
  return p.alpha * std::exp(-0.5 * p.omega * (x1 - x2).squaredNorm());
}

/// Covariances k(x_n, x_star) between every row of X and x_star, noise-free.
inline Eigen::VectorXd cross_vector(const Eigen::VectorXd& x_star,
                                    const Eigen::MatrixXd& X,
                                    const KernelParams& p) {
  if (X.cols() != x_star.size()) {
    throw InputError("kernel cross_vector: dimension mismatch between X and x_star");
  }
  Eigen::VectorXd k(X.rows());
  for (Eigen::Index n = 0; n < X.rows(); ++n) {
    k(n) = p.alpha *
           std::exp(-0.5 * p.omega * (X.row(n).transpose() - x_star).squaredNorm());
  }
  return k;
}

/// N x N Gram matrix of the rows of X. With add_noise the diagonal becomes
/// alpha + beta^{-1}; smallest eigenvalue is then at least beta^{-1}.
inline Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& X,
                                   const KernelParams& p, bool add_noise) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    K(i, i) = p.alpha;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v =
          p.alpha * std::exp(-0.5 * p.omega * (X.row(i) - X.row(j)).squaredNorm());
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  if (add_noise) K.diagonal().array() += 1.0 / p.beta;
  return K;
}

/// Derivatives of the cross covariances with respect to x_star.
/// Entry (n, l) is d k(x_n, x_star) / d x_star^(l)
///   = -omega * (x_star^(l) - x_n^(l)) * k(x_n, x_star).
inline Eigen::MatrixXd grad_block(const Eigen::VectorXd& x_star,
                                  const Eigen::MatrixXd& X,
                                  const KernelParams& p) {
  if (X.cols() != x_star.size()) {
    throw InputError("kernel grad_block: dimension mismatch between X and x_star");
  }
  const Eigen::Index n = X.rows();
  const Eigen::Index q = x_star.size();
  Eigen::MatrixXd G(n, q);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd delta = x_star - X.row(i).transpose();
    const double k = p.alpha * std::exp(-0.5 * p.omega * delta.squaredNorm());
    G.row(i) = (-p.omega * k) * delta.transpose();
  }
  return G;
}

/// Covariance of the derivative process at coincident points,
/// cov(df(x)/dx) for the squared-exponential prior: omega * alpha * I_q.
inline Eigen::MatrixXd cross_hessian_at_point(const KernelParams& p,
                                              Eigen::Index q) {
  if (q < 1) throw InputError("kernel cross_hessian_at_point: q must be >= 1");
  return (p.omega * p.alpha) * Eigen::MatrixXd::Identity(q, q);
}

/// Second derivatives of the cross covariances with respect to x_star.
/// Slice n holds the q x q matrix with entry (i, l)
///   = d^2 k(x_n, x_star) / d x_star^(i) d x_star^(l)
///   = (omega^2 * delta^(i) * delta^(l) - omega * [i == l]) * k(x_n, x_star),
/// where delta = x_star - x_n.
inline std::vector<Eigen::MatrixXd> second_deriv_block(
    const Eigen::VectorXd& x_star, const Eigen::MatrixXd& X,
    const KernelParams& p) {
  if (X.cols() != x_star.size()) {
    throw InputError(
        "kernel second_deriv_block: dimension mismatch between X and x_star");
  }
  const Eigen::Index n = X.rows();
  const Eigen::Index q = x_star.size();
  std::vector<Eigen::MatrixXd> H;
  H.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd delta = x_star - X.row(i).transpose();
    const double k = p.alpha * std::exp(-0.5 * p.omega * delta.squaredNorm());
    Eigen::MatrixXd slice =
        (p.omega * p.omega * k) * (delta * delta.transpose());
    slice.diagonal().array() -= p.omega * k;
    H.push_back(std::move(slice));
  }
  return H;
}

}  // namespace kernel
}  // namespace latentgeo
