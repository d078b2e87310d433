#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <concepts>
#include <random>
#include <vector>

#include "latentgeo/common.hpp"
#include "latentgeo/gp_model.hpp"
#include "latentgeo/kernel.hpp"
#include "latentgeo/parallel.hpp"

namespace latentgeo {

/// Posterior distribution of the p x q Jacobian of the latent-to-data
/// mapping at a point: every row is Gaussian with its own mean and a
/// covariance shared across rows.
struct JacobianPosterior {
  Eigen::MatrixXd mean;  ///< p x q, row j is the posterior mean of row j of J
  Eigen::MatrixXd cov;   ///< q x q shared row covariance, symmetric PSD
  double clipped_mass = 0.0;  ///< total negative eigenvalue mass removed
};

/// A metric tensor evaluation. dg is empty unless derivatives were
/// requested; when present it is q^2 x q, column m holding vec(dG/dx^(m))
/// with vec stacking columns.
struct MetricEvaluation {
  Eigen::MatrixXd g;
  Eigen::MatrixXd dg;
  bool jittered = false;  ///< diagonal jitter was needed to make g SPD
};

/// Parameters of the non-central Wishart law of the metric J^T J:
/// degrees of freedom p, scale Sigma_J, and the term E[J^T] E[J] from
/// which the non-centrality is formed.
struct WishartParams {
  Eigen::Index dof = 0;
  Eigen::MatrixXd scale;
  Eigen::MatrixXd noncentrality_base;
};

/// Axis-aligned box in latent space.
struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
};

namespace detail {

struct JacobianParts {
  JacobianPosterior post;
  Eigen::MatrixXd grad;    // N x q cross-covariance derivatives
  Eigen::MatrixXd solved;  // K_tilde^{-1} grad
};

inline JacobianParts jacobian_parts(const LatentModel& m,
                                    const Eigen::VectorXd& x_star) {
  if (x_star.size() != m.q()) {
    throw InputError("jacobian_posterior: x_star dimension mismatch");
  }
  if (!x_star.allFinite()) {
    throw InputError("jacobian_posterior: x_star must be finite");
  }
  JacobianParts parts;
  parts.grad = kernel::grad_block(x_star, m.latents(), m.params());
  parts.solved = m.solve(parts.grad);
  parts.post.mean = m.weights().transpose() * parts.grad;

  Eigen::MatrixXd cov =
      kernel::cross_hessian_at_point(m.params(), m.q()) -
      parts.grad.transpose() * parts.solved;
  cov = 0.5 * (cov + cov.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("jacobian_posterior: eigendecomposition failed");
  }
  Eigen::VectorXd lambda = eig.eigenvalues();
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) < 0.0) {
      parts.post.clipped_mass += -lambda(i);
      lambda(i) = 0.0;
    }
  }
  parts.post.cov = eig.eigenvectors() * lambda.asDiagonal() *
                   eig.eigenvectors().transpose();
  parts.post.cov = 0.5 * (parts.post.cov + parts.post.cov.transpose()).eval();
  return parts;
}

// Symmetrize and, if the LLT rejects the matrix, add 1e-12 * trace/q to the
// diagonal once.
inline void make_spd(Eigen::MatrixXd& g, bool& jittered) {
  g = 0.5 * (g + g.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> llt(g);
  if (llt.info() == Eigen::Success) return;
  const double jitter = 1e-12 * g.trace() / static_cast<double>(g.rows());
  g.diagonal().array() += jitter;
  jittered = true;
}

}  // namespace detail

/// Posterior over the Jacobian at x_star. The mean stacks
/// dk_*^T K_tilde^{-1} y_:,j row-wise; the shared covariance is
/// omega * alpha * I - dk_*^T K_tilde^{-1} dk_*, symmetrized and with any
/// negative eigenvalues clipped to zero.
inline JacobianPosterior jacobian_posterior(const LatentModel& m,
                                            const Eigen::VectorXd& x_star) {
  return detail::jacobian_parts(m, x_star).post;
}

/// Expected metric tensor E[J^T J] = E[J^T] E[J] + p * Sigma_J.
inline MetricEvaluation expected_metric(const LatentModel& m,
                                        const Eigen::VectorXd& x_star) {
  const JacobianPosterior post = jacobian_posterior(m, x_star);
  MetricEvaluation out;
  out.g = post.mean.transpose() * post.mean +
          static_cast<double>(m.p()) * post.cov;
  detail::make_spd(out.g, out.jittered);
  return out;
}

/// Expected metric together with its derivative. Column m of dg is
/// vec(dG/dx^(m)) where, writing D_m for the second-derivative slices
/// rearranged along coordinate m and B = K_tilde^{-1} dk_*,
///   dG/dx^(m) = dMu_m^T Mu + Mu^T dMu_m - p (D_m^T B + B^T D_m),
/// with Mu the Jacobian mean and dMu_m = Y^T K_tilde^{-1} D_m. Each slice
/// is symmetrized exactly.
inline MetricEvaluation metric_derivative(const LatentModel& m,
                                          const Eigen::VectorXd& x_star) {
  const Eigen::Index q = m.q();
  const Eigen::Index n = m.n();
  const double p = static_cast<double>(m.p());

  const detail::JacobianParts parts = detail::jacobian_parts(m, x_star);
  const std::vector<Eigen::MatrixXd> hess =
      kernel::second_deriv_block(x_star, m.latents(), m.params());

  MetricEvaluation out;
  out.g = parts.post.mean.transpose() * parts.post.mean + p * parts.post.cov;
  detail::make_spd(out.g, out.jittered);
  out.dg.resize(q * q, q);

  Eigen::MatrixXd dm(n, q);
  for (Eigen::Index coord = 0; coord < q; ++coord) {
    for (Eigen::Index i = 0; i < n; ++i) dm.row(i) = hess[i].row(coord);
    const Eigen::MatrixXd dmean = m.weights().transpose() * dm;
    Eigen::MatrixXd slice = dmean.transpose() * parts.post.mean +
                            parts.post.mean.transpose() * dmean -
                            p * (dm.transpose() * parts.solved +
                                 parts.solved.transpose() * dm);
    slice = 0.5 * (slice + slice.transpose()).eval();
    out.dg.col(coord) =
        Eigen::Map<const Eigen::VectorXd>(slice.data(), q * q);
  }
  return out;
}

/// sqrt(det E[J^T J]) through the Cholesky factor, so the result is the
/// product of the factor's diagonal and strictly positive.
inline double magnification_factor(const LatentModel& m,
                                   const Eigen::VectorXd& x_star) {
  const MetricEvaluation me = expected_metric(m, x_star);
  Eigen::LLT<Eigen::MatrixXd> llt(me.g);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("magnification_factor: metric not positive definite");
  }
  return llt.matrixLLT().diagonal().prod();
}

/// Parameters of the non-central Wishart distribution of the metric.
inline WishartParams wishart_params(const LatentModel& m,
                                    const Eigen::VectorXd& x_star) {
  const JacobianPosterior post = jacobian_posterior(m, x_star);
  WishartParams w;
  w.dof = m.p();
  w.scale = post.cov;
  w.noncentrality_base = post.mean.transpose() * post.mean;
  return w;
}

/// Draws J with independent Gaussian rows (mean row j, shared covariance)
/// and returns J^T J, one sample of the random metric.
inline Eigen::MatrixXd sample_metric(const JacobianPosterior& post,
                                     std::mt19937_64& rng) {
  const Eigen::Index p = post.mean.rows();
  const Eigen::Index q = post.mean.cols();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(post.cov);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("sample_metric: covariance eigendecomposition failed");
  }
  const Eigen::MatrixXd factor =
      eig.eigenvectors() *
      eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd z(p, q);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < q; ++j) z(i, j) = normal(rng);
  }
  const Eigen::MatrixXd jac = post.mean + z * factor.transpose();
  return jac.transpose() * jac;
}

inline Eigen::MatrixXd sample_metric(const LatentModel& m,
                                     const Eigen::VectorXd& x_star,
                                     std::mt19937_64& rng) {
  return sample_metric(jacobian_posterior(m, x_star), rng);
}

/// Magnification factors over a box, evaluated at cell centers in
/// row-major order (last axis fastest).
struct MfGrid {
  Box bounds;
  std::vector<int> resolution;
  std::vector<double> values;

  /// Center coordinate of cell idx along one axis.
  double center(Eigen::Index axis, Eigen::Index idx) const {
    const int res = resolution[static_cast<std::size_t>(axis)];
    const double width = (bounds.hi(axis) - bounds.lo(axis)) / res;
    return bounds.lo(axis) + (static_cast<double>(idx) + 0.5) * width;
  }
};

inline MfGrid mf_grid(const LatentModel& m, const Box& bounds,
                      const std::vector<int>& resolution) {
  const Eigen::Index q = m.q();
  if (bounds.lo.size() != q || bounds.hi.size() != q) {
    throw InputError("mf_grid: bounds dimension must match the latent dimension");
  }
  if (static_cast<Eigen::Index>(resolution.size()) != q) {
    throw InputError("mf_grid: one resolution per axis required");
  }
  std::size_t cells = 1;
  for (Eigen::Index i = 0; i < q; ++i) {
    if (resolution[static_cast<std::size_t>(i)] < 1) {
      throw InputError("mf_grid: resolution must be at least 1 per axis");
    }
    if (!(bounds.lo(i) < bounds.hi(i))) {
      throw InputError("mf_grid: bounds must satisfy lo < hi per axis");
    }
    cells *= static_cast<std::size_t>(resolution[static_cast<std::size_t>(i)]);
  }

  MfGrid grid;
  grid.bounds = bounds;
  grid.resolution = resolution;
  grid.values.assign(cells, 0.0);

  parallel_for(cells, [&](std::size_t cell) {
    Eigen::VectorXd x(q);
    std::size_t rem = cell;
    for (Eigen::Index axis = q - 1; axis >= 0; --axis) {
      const int res = resolution[static_cast<std::size_t>(axis)];
      const std::size_t idx = rem % static_cast<std::size_t>(res);
      rem /= static_cast<std::size_t>(res);
      const double width = (bounds.hi(axis) - bounds.lo(axis)) / res;
      x(axis) = bounds.lo(axis) + (static_cast<double>(idx) + 0.5) * width;
    }
    grid.values[cell] = magnification_factor(m, x);
  });
  return grid;
}

/// Anything that can stand in for a Riemannian metric over latent space:
/// the model-backed expected metric in production, analytic test metrics
/// in the suites.
template <typename F>
concept MetricField = requires(const F& f, const Eigen::VectorXd& x) {
  { f.dim() } -> std::convertible_to<Eigen::Index>;
  { f.metric(x) } -> std::convertible_to<Eigen::MatrixXd>;
  { f.metric_with_derivative(x) } -> std::convertible_to<MetricEvaluation>;
};

/// The expected metric of a model as a MetricField.
class GpMetric {
 public:
  explicit GpMetric(const LatentModel& m) : model_(&m) {}

  Eigen::Index dim() const { return model_->q(); }

  Eigen::MatrixXd metric(const Eigen::VectorXd& x) const {
    return expected_metric(*model_, x).g;
  }

  MetricEvaluation metric_with_derivative(const Eigen::VectorXd& x) const {
    return metric_derivative(*model_, x);
  }

 private:
  const LatentModel* model_;
};

}  // namespace latentgeo
