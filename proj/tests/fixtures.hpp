#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "latentgeo/latentgeo.hpp"

namespace fixtures {

/// Ring of latent points in the plane mapped to R^10 through random
/// low-order Fourier features plus observation noise. The angles carry a
/// smooth perturbation so the configuration has no reflection symmetry
/// (a perfectly symmetric ring would leave the antipodal boundary-value
/// problem stuck on the straight-chord saddle).
struct Circle {
  Eigen::MatrixXd X;      ///< 60 x 2 latents on a radius-2 ring
  Eigen::MatrixXd Y_raw;  ///< 60 x 10 observations, uncentered
  latentgeo::KernelParams params;
};

inline const Circle& circle() {
  static const Circle fixture = [] {
    const int n = 60;
    const int p = 10;
    const double radius = 2.0;
    std::mt19937_64 rng(424242);
    std::normal_distribution<double> unit(0.0, 1.0);

    Eigen::VectorXd c1(p), s1(p), c2(p), s2(p);
    for (int j = 0; j < p; ++j) c1(j) = unit(rng);
    for (int j = 0; j < p; ++j) s1(j) = unit(rng);
    for (int j = 0; j < p; ++j) c2(j) = 0.35 * unit(rng);
    for (int j = 0; j < p; ++j) s2(j) = 0.35 * unit(rng);

    Circle out;
    out.X.resize(n, 2);
    out.Y_raw.resize(n, p);
    for (int i = 0; i < n; ++i) {
      const double base = 2.0 * M_PI * i / n;
      const double theta = base + 0.12 * std::cos(3.0 * base + 0.7);
      out.X(i, 0) = radius * std::cos(theta);
      out.X(i, 1) = radius * std::sin(theta);
      for (int j = 0; j < p; ++j) {
        out.Y_raw(i, j) = c1(j) * std::cos(theta) + s1(j) * std::sin(theta) +
                          c2(j) * std::cos(2.0 * theta) +
                          s2(j) * std::sin(2.0 * theta) + 0.1 * unit(rng);
      }
    }
    out.params.alpha = 1.0;
    // Unit length-scale: wide enough that the low-metric channel along the
    // ring is smooth on the scale of a lattice cell, so grid shortest paths
    // and the continuous solver agree closely.
    out.params.omega = 1.0;
    out.params.beta = 100.0;
    return out;
  }();
  return fixture;
}

inline const latentgeo::LatentModel& circle_model() {
  static const latentgeo::LatentModel model = [] {
    const Circle& c = circle();
    return latentgeo::LatentModel::from_raw(c.X, c.Y_raw, c.params);
  }();
  return model;
}

/// One training point at the origin of a two-dimensional latent space.
inline latentgeo::LatentModel single_point_model(double beta = 100.0) {
  Eigen::MatrixXd x(1, 2);
  x << 0.0, 0.0;
  Eigen::MatrixXd y(1, 1);
  y << 1.0;
  latentgeo::KernelParams params;
  params.alpha = 1.0;
  params.omega = 4.0;
  params.beta = beta;
  return latentgeo::LatentModel(x, y, params);
}

/// A 5x5 grid of latents spaced well inside one length-scale, so the
/// posterior constrains the mapping's derivative in every direction at the
/// central point. An isolated training point cannot do that: the kernel
/// gradient vanishes at the point itself, leaving the Jacobian at its
/// prior even where the function value is pinned.
inline latentgeo::LatentModel cluster_model(double beta) {
  latentgeo::KernelParams params;
  params.alpha = 1.0;
  params.omega = 4.0;  // length-scale 0.5, spacing 0.2
  params.beta = beta;
  Eigen::MatrixXd x(25, 2);
  Eigen::MatrixXd y(25, 3);
  std::mt19937_64 rng(555);
  std::normal_distribution<double> unit(0.0, 1.0);
  int row = 0;
  for (int i = -2; i <= 2; ++i) {
    for (int j = -2; j <= 2; ++j, ++row) {
      x(row, 0) = 0.2 * i;
      x(row, 1) = 0.2 * j;
      for (int k = 0; k < 3; ++k) y(row, k) = unit(rng);
    }
  }
  return latentgeo::LatentModel(x, y, params);
}

/// Collinear latents spaced four length-scales apart: far enough that the
/// Gram matrix stays well-conditioned as beta grows.
inline latentgeo::LatentModel well_separated_model(double beta) {
  latentgeo::KernelParams params;
  params.alpha = 1.0;
  params.omega = 4.0;  // length-scale 0.5, spacing 2.0 = 4 length-scales
  params.beta = beta;
  const int n = 5;
  Eigen::MatrixXd x(n, 2);
  Eigen::MatrixXd y(n, 3);
  std::mt19937_64 rng(777);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 2.0 * i;
    x(i, 1) = 0.0;
    for (int j = 0; j < 3; ++j) y(i, j) = unit(rng);
  }
  return latentgeo::LatentModel(x, y, params);
}

/// Constant metric: straight geodesics, zero derivative.
class ConstantMetric {
 public:
  explicit ConstantMetric(Eigen::MatrixXd g) : g_(std::move(g)) {}

  Eigen::Index dim() const { return g_.rows(); }
  Eigen::MatrixXd metric(const Eigen::VectorXd&) const { return g_; }
  latentgeo::MetricEvaluation metric_with_derivative(
      const Eigen::VectorXd&) const {
    latentgeo::MetricEvaluation out;
    out.g = g_;
    out.dg = Eigen::MatrixXd::Zero(g_.rows() * g_.cols(), g_.cols());
    return out;
  }

 private:
  Eigen::MatrixXd g_;
};

/// Conformal plane: G(x) = exp(2 x_1) I. Geodesics are known in closed
/// form because w = exp(x_1) and angle x_2 are polar coordinates of a
/// flat plane, so the image of a geodesic is a Euclidean straight line in
/// those coordinates.
class ConformalMetric {
 public:
  Eigen::Index dim() const { return 2; }

  Eigen::MatrixXd metric(const Eigen::VectorXd& x) const {
    return std::exp(2.0 * x(0)) * Eigen::MatrixXd::Identity(2, 2);
  }

  latentgeo::MetricEvaluation metric_with_derivative(
      const Eigen::VectorXd& x) const {
    latentgeo::MetricEvaluation out;
    out.g = metric(x);
    out.dg = Eigen::MatrixXd::Zero(4, 2);
    const Eigen::MatrixXd slice = 2.0 * out.g;  // dG/dx_1 = 2 exp(2x_1) I
    out.dg.col(0) = Eigen::Map<const Eigen::VectorXd>(slice.data(), 4);
    return out;
  }

  /// Hand-derived Christoffel acceleration for this metric:
  /// gamma_1'' = -v_1^2 + v_2^2, gamma_2'' = -2 v_1 v_2.
  static Eigen::VectorXd christoffel_rhs(const Eigen::VectorXd& v) {
    Eigen::VectorXd out(2);
    out << -v(0) * v(0) + v(1) * v(1), -2.0 * v(0) * v(1);
    return out;
  }

  /// Euclidean distance in the flat chart (w cos x2, w sin x2), w = e^{x1}:
  /// the exact geodesic distance between two points.
  static double exact_distance(const Eigen::VectorXd& a,
                               const Eigen::VectorXd& b) {
    const double wa = std::exp(a(0));
    const double wb = std::exp(b(0));
    return std::sqrt(wa * wa + wb * wb -
                     2.0 * wa * wb * std::cos(a(1) - b(1)));
  }
};

}  // namespace fixtures
