#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "latentgeo/common.hpp"
#include "latentgeo/geometry.hpp"
#include "latentgeo/gp_model.hpp"

namespace latentgeo {

/// A polyline in latent space. params holds the curve parameters of the
/// nodes, strictly increasing from 0 to 1. velocities is empty unless the
/// curve came from an initial value integration.
struct Curve {
  Eigen::MatrixXd nodes;
  Eigen::VectorXd params;
  Eigen::MatrixXd velocities;
};

struct GeodesicResult {
  Curve curve;
  double length = 0.0;
  double endpoint_residual = 0.0;
  bool converged = false;
  std::string method;  ///< "shooting" or "relaxation"
  int relaxation_iterations = 0;
  int newton_iterations = 0;
};

struct BvpOptions {
  int relaxation_nodes = 32;
  int relaxation_max_iterations = 500;
  double relaxation_energy_tolerance = 1e-6;  ///< relative decrease cutoff
  int shooting_steps = 128;
  int newton_max_iterations = 40;
  double tolerance = 0.0;  ///< endpoint residual; <= 0 means 1e-4 * |x2 - x1|
  bool detour_starts = true;  ///< also relax two bowed seeds, keep shortest
};

/// Acceleration of a geodesic: gamma'' = -Gamma^k_{ij} gamma'_i gamma'_j
/// assembled from the metric derivative slices S_m = dG/dx^(m) as
///   gamma'' = -1/2 G^{-1} [ 2 (sum_m gamma'_m S_m) gamma' - u ],
/// where u_m = gamma'^T S_m gamma'.
template <MetricField F>
Eigen::VectorXd geodesic_rhs(const F& field, const Eigen::VectorXd& gamma,
                             const Eigen::VectorXd& gamma_dot) {
  const Eigen::Index q = field.dim();
  if (gamma.size() != q || gamma_dot.size() != q) {
    throw InputError("geodesic_rhs: state dimension mismatch");
  }
  const MetricEvaluation me = field.metric_with_derivative(gamma);

  Eigen::MatrixXd directional = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd quad(q);
  for (Eigen::Index m = 0; m < q; ++m) {
    const Eigen::Map<const Eigen::MatrixXd> slice(me.dg.col(m).data(), q, q);
    directional.noalias() += gamma_dot(m) * slice;
    quad(m) = gamma_dot.dot(slice * gamma_dot);
  }
  const Eigen::VectorXd rhs = 2.0 * (directional * gamma_dot) - quad;

  Eigen::LLT<Eigen::MatrixXd> llt(me.g);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("geodesic_rhs: metric not positive definite");
  }
  return -0.5 * llt.solve(rhs);
}

inline Eigen::VectorXd geodesic_rhs(const LatentModel& m,
                                    const Eigen::VectorXd& gamma,
                                    const Eigen::VectorXd& gamma_dot) {
  return geodesic_rhs(GpMetric(m), gamma, gamma_dot);
}

/// Integrates the geodesic equation from (x0, v0) over t in [0, 1] with
/// the classical fixed-step fourth-order Runge-Kutta scheme.
template <MetricField F>
Curve integrate_ivp(const F& field, const Eigen::VectorXd& x0,
                    const Eigen::VectorXd& v0, int steps) {
  const Eigen::Index q = field.dim();
  if (x0.size() != q || v0.size() != q) {
    throw InputError("integrate_ivp: state dimension mismatch");
  }
  if (steps < 8) throw InputError("integrate_ivp: need at least 8 steps");

  const double h = 1.0 / steps;
  Curve curve;
  curve.nodes.resize(steps + 1, q);
  curve.velocities.resize(steps + 1, q);
  curve.params.resize(steps + 1);

  Eigen::VectorXd x = x0;
  Eigen::VectorXd v = v0;
  curve.nodes.row(0) = x.transpose();
  curve.velocities.row(0) = v.transpose();
  curve.params(0) = 0.0;

  for (int k = 0; k < steps; ++k) {
    const Eigen::VectorXd a1 = geodesic_rhs(field, x, v);
    const Eigen::VectorXd x2 = x + 0.5 * h * v;
    const Eigen::VectorXd v2 = v + 0.5 * h * a1;
    const Eigen::VectorXd a2 = geodesic_rhs(field, x2, v2);
    const Eigen::VectorXd x3 = x + 0.5 * h * v2;
    const Eigen::VectorXd v3 = v + 0.5 * h * a2;
    const Eigen::VectorXd a3 = geodesic_rhs(field, x3, v3);
    const Eigen::VectorXd x4 = x + h * v3;
    const Eigen::VectorXd v4 = v + h * a3;
    const Eigen::VectorXd a4 = geodesic_rhs(field, x4, v4);

    x += (h / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4);
    v += (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
    if (!x.allFinite() || !v.allFinite()) {
      throw NumericalError("integrate_ivp: non-finite state at step " +
                           std::to_string(k + 1));
    }
    curve.nodes.row(k + 1) = x.transpose();
    curve.velocities.row(k + 1) = v.transpose();
    curve.params(k + 1) = (k + 1) * h;
  }
  curve.params(steps) = 1.0;
  return curve;
}

inline Curve integrate_ivp(const LatentModel& m, const Eigen::VectorXd& x0,
                           const Eigen::VectorXd& v0, int steps) {
  return integrate_ivp(GpMetric(m), x0, v0, steps);
}

/// Riemannian length of a polyline: per segment sqrt(d^T G(mid) d) with
/// the metric at the segment midpoint.
template <MetricField F>
double curve_length(const F& field, const Curve& curve) {
  if (curve.nodes.rows() < 2) {
    throw InputError("curve_length: a curve needs at least two nodes");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i + 1 < curve.nodes.rows(); ++i) {
    const Eigen::VectorXd delta =
        (curve.nodes.row(i + 1) - curve.nodes.row(i)).transpose();
    const Eigen::VectorXd mid =
        0.5 * (curve.nodes.row(i + 1) + curve.nodes.row(i)).transpose();
    const double quad = delta.dot(field.metric(mid) * delta);
    total += std::sqrt(std::max(quad, 0.0));
  }
  return total;
}

inline double curve_length(const LatentModel& m, const Curve& curve) {
  return curve_length(GpMetric(m), curve);
}

namespace detail {

// Discrete path energy sum_i d_i^T G(mid_i) d_i / dt on a uniform
// parameter grid.
template <MetricField F>
double discrete_energy(const F& field, const Eigen::MatrixXd& nodes) {
  const Eigen::Index t = nodes.rows();
  const double inv_dt = static_cast<double>(t - 1);
  double energy = 0.0;
  for (Eigen::Index i = 0; i + 1 < t; ++i) {
    const Eigen::VectorXd delta = (nodes.row(i + 1) - nodes.row(i)).transpose();
    const Eigen::VectorXd mid =
        0.5 * (nodes.row(i + 1) + nodes.row(i)).transpose();
    energy += inv_dt * delta.dot(field.metric(mid) * delta);
  }
  return energy;
}

// Gradient of the discrete energy with respect to the interior nodes
// (first and last rows of the result are zero), and the energy itself
// from the same metric evaluations.
template <MetricField F>
Eigen::MatrixXd energy_gradient(const F& field, const Eigen::MatrixXd& nodes,
                                double* energy_out) {
  const Eigen::Index t = nodes.rows();
  const Eigen::Index q = nodes.cols();
  const double inv_dt = static_cast<double>(t - 1);

  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(t, q);
  double energy = 0.0;
  // Per segment: f = 2 G(mid) d / dt pulls the right node forward and the
  // left node back; u_l = d^T S_l(mid) d / dt enters both nodes through
  // the midpoint with weight 1/2.
  for (Eigen::Index i = 0; i + 1 < t; ++i) {
    const Eigen::VectorXd delta = (nodes.row(i + 1) - nodes.row(i)).transpose();
    const Eigen::VectorXd mid =
        0.5 * (nodes.row(i + 1) + nodes.row(i)).transpose();
    const MetricEvaluation me = field.metric_with_derivative(mid);
    energy += inv_dt * delta.dot(me.g * delta);

    const Eigen::VectorXd pull = (2.0 * inv_dt) * (me.g * delta);
    Eigen::VectorXd u(q);
    for (Eigen::Index l = 0; l < q; ++l) {
      const Eigen::Map<const Eigen::MatrixXd> slice(me.dg.col(l).data(), q, q);
      u(l) = inv_dt * delta.dot(slice * delta);
    }
    if (i > 0) grad.row(i) += (-pull + 0.5 * u).transpose();
    if (i + 1 < t - 1) grad.row(i + 1) += (pull + 0.5 * u).transpose();
  }
  if (energy_out) *energy_out = energy;
  return grad;
}

/// Riemannian length of a polyline given as raw nodes.
template <MetricField F>
double polyline_length(const F& field, const Eigen::MatrixXd& nodes) {
  double total = 0.0;
  for (Eigen::Index i = 0; i + 1 < nodes.rows(); ++i) {
    const Eigen::VectorXd delta = (nodes.row(i + 1) - nodes.row(i)).transpose();
    const Eigen::VectorXd mid =
        0.5 * (nodes.row(i + 1) + nodes.row(i)).transpose();
    const double quad = delta.dot(field.metric(mid) * delta);
    total += std::sqrt(std::max(quad, 0.0));
  }
  return total;
}

/// Gradient descent on the discrete path energy with a halving line
/// search, until the relative energy decrease falls below the tolerance,
/// no downhill step exists, or the iteration budget runs out. Boundary
/// rows stay fixed. Returns the iterations spent.
template <MetricField F>
int relax_chain(const F& field, Eigen::MatrixXd& nodes, double separation,
                const BvpOptions& opts) {
  const Eigen::Index t = nodes.rows();
  int iters = 0;
  double step = -1.0;
  for (; iters < opts.relaxation_max_iterations; ++iters) {
    double energy = 0.0;
    const Eigen::MatrixXd grad = energy_gradient(field, nodes, &energy);
    const double gmax = grad.cwiseAbs().maxCoeff();
    if (!(gmax > 0.0)) break;
    if (step <= 0.0) {
      step = 0.1 * separation / static_cast<double>(t - 1) / gmax;
    }

    bool accepted = false;
    double rel_decrease = 0.0;
    for (int halving = 0; halving <= 30; ++halving) {
      Eigen::MatrixXd trial = nodes - step * grad;
      const double trial_energy = discrete_energy(field, trial);
      if (std::isfinite(trial_energy) && trial_energy < energy) {
        rel_decrease =
            (energy - trial_energy) /
            std::max(std::abs(energy), std::numeric_limits<double>::min());
        nodes = std::move(trial);
        step *= 1.5;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    if (rel_decrease < opts.relaxation_energy_tolerance) {
      ++iters;
      break;
    }
  }
  return iters;
}

}  // namespace detail

/// Two-phase boundary value solver. Phase 1 relaxes discrete-energy
/// paths of relaxation_nodes nodes (gradient descent with a halving line
/// search, stopping when the relative energy decrease falls below the
/// tolerance). The straight segment seeds the first path; two bowed
/// detours (transverse sinusoidal offsets of amplitude half the endpoint
/// separation) seed further candidates, because between well-separated
/// points the straight channel can relax onto a locally-but-not-globally
/// shortest geodesic — e.g. cutting across a region the data avoids. The
/// shortest relaxed candidate wins; ties go to the straight seed, so flat
/// metrics keep the exact straight segment. Phase 2 polishes by single
/// shooting: Newton iteration on the initial velocity with a
/// finite-difference sensitivity (step 1e-5 * (1 + |v0|)). If shooting
/// fails to reach the endpoint tolerance, or lands on a path more than
/// 10% longer than the relaxed candidate (a sign it left the candidate's
/// basin), the relaxed path is returned with converged = false and
/// method = "relaxation".
template <MetricField F>
GeodesicResult solve_geodesic_bvp(const F& field, const Eigen::VectorXd& x1,
                                  const Eigen::VectorXd& x2,
                                  const BvpOptions& opts = {}) {
  const Eigen::Index q = field.dim();
  if (x1.size() != q || x2.size() != q) {
    throw InputError("solve_geodesic_bvp: endpoint dimension mismatch");
  }
  if (!x1.allFinite() || !x2.allFinite()) {
    throw InputError("solve_geodesic_bvp: endpoints must be finite");
  }
  if (opts.relaxation_nodes < 2 || opts.relaxation_max_iterations < 0 ||
      opts.shooting_steps < 8 || opts.newton_max_iterations < 0) {
    throw InputError("solve_geodesic_bvp: invalid solver options");
  }

  GeodesicResult result;
  if (x1 == x2) {
    result.curve.nodes.resize(2, q);
    result.curve.nodes.row(0) = x1.transpose();
    result.curve.nodes.row(1) = x1.transpose();
    result.curve.params.resize(2);
    result.curve.params << 0.0, 1.0;
    result.length = 0.0;
    result.endpoint_residual = 0.0;
    result.converged = true;
    result.method = "shooting";
    return result;
  }

  const double separation = (x2 - x1).norm();
  const double tol =
      opts.tolerance > 0.0 ? opts.tolerance : 1e-4 * separation;

  // Phase 1 candidates: the straight segment, then two bowed detours.
  const Eigen::Index t = opts.relaxation_nodes;
  Eigen::MatrixXd straight(t, q);
  for (Eigen::Index i = 0; i < t; ++i) {
    const double s = static_cast<double>(i) / static_cast<double>(t - 1);
    straight.row(i) = ((1.0 - s) * x1 + s * x2).transpose();
  }
  std::vector<Eigen::MatrixXd> candidates;
  candidates.push_back(straight);
  if (q >= 2 && opts.detour_starts) {
    // A deterministic unit vector orthogonal to the chord: take the
    // coordinate axis least aligned with it and project the chord out.
    const Eigen::VectorXd dir = (x2 - x1) / separation;
    Eigen::Index axis = 0;
    dir.cwiseAbs().minCoeff(&axis);
    Eigen::VectorXd normal = Eigen::VectorXd::Unit(q, axis) - dir(axis) * dir;
    normal /= normal.norm();  // norm >= sqrt(1 - 1/q) > 0 for q >= 2
    const double amplitude = 0.5 * separation;
    for (const double sign : {1.0, -1.0}) {
      Eigen::MatrixXd bow = straight;
      for (Eigen::Index i = 0; i < t; ++i) {
        const double s = static_cast<double>(i) / static_cast<double>(t - 1);
        bow.row(i) += (sign * amplitude * std::sin(std::numbers::pi * s)) *
                      normal.transpose();
      }
      candidates.push_back(std::move(bow));
    }
  }

  int relax_iters = 0;
  Eigen::MatrixXd nodes;
  double relaxed_length = std::numeric_limits<double>::infinity();
  for (auto& candidate : candidates) {
    relax_iters += detail::relax_chain(field, candidate, separation, opts);
    const double len = detail::polyline_length(field, candidate);
    // Strict improvement required: ties keep the earlier (straight) seed.
    if (len < relaxed_length * (1.0 - 1e-9)) {
      relaxed_length = len;
      nodes = std::move(candidate);
    }
  }
  result.relaxation_iterations = relax_iters;

  // Phase 2: single shooting from the relaxed initial direction.
  Eigen::VectorXd v = (nodes.row(1) - nodes.row(0)).transpose() *
                      static_cast<double>(t - 1);

  const auto shoot = [&](const Eigen::VectorXd& v0,
                         Curve& out) -> Eigen::VectorXd {
    out = integrate_ivp(field, x1, v0, opts.shooting_steps);
    return (out.nodes.row(opts.shooting_steps).transpose() - x2).eval();
  };

  bool shot_ok = false;
  Curve trajectory;
  Eigen::VectorXd residual;
  try {
    residual = shoot(v, trajectory);
    shot_ok = true;
  } catch (const NumericalError&) {
  }

  int newton_iters = 0;
  bool converged = shot_ok && residual.norm() < tol;
  while (shot_ok && !converged &&
         newton_iters < opts.newton_max_iterations) {
    ++newton_iters;
    const double fd_step = 1e-5 * (1.0 + v.norm());
    Eigen::MatrixXd sensitivity(q, q);
    bool fd_ok = true;
    for (Eigen::Index j = 0; j < q && fd_ok; ++j) {
      Curve probe_curve;
      Eigen::VectorXd probe = v;
      probe(j) += fd_step;
      try {
        sensitivity.col(j) =
            (shoot(probe, probe_curve) - residual) / fd_step;
      } catch (const NumericalError&) {
        fd_ok = false;
      }
    }
    if (!fd_ok) break;

    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(sensitivity);
    const Eigen::VectorXd full_step = lu.solve(-residual);
    if (!full_step.allFinite()) break;

    bool improved = false;
    Eigen::VectorXd delta = full_step;
    for (int backtrack = 0; backtrack <= 20; ++backtrack) {
      Curve trial_curve;
      Eigen::VectorXd trial_residual;
      try {
        trial_residual = shoot(v + delta, trial_curve);
      } catch (const NumericalError&) {
        delta *= 0.5;
        continue;
      }
      if (trial_residual.norm() < residual.norm()) {
        v += delta;
        residual = trial_residual;
        trajectory = std::move(trial_curve);
        improved = true;
        break;
      }
      delta *= 0.5;
    }
    if (!improved) break;
    converged = residual.norm() < tol;
  }
  result.newton_iterations = newton_iters;

  if (converged) {
    const double shot_length = curve_length(field, trajectory);
    // Keep the shot only while it stays near the relaxed candidate's
    // length; a much longer trajectory means Newton left its basin.
    if (shot_length <= relaxed_length * 1.10) {
      result.curve = std::move(trajectory);
      result.endpoint_residual = residual.norm();
      result.converged = true;
      result.method = "shooting";
      result.length = shot_length;
      return result;
    }
  }
  result.curve.nodes = std::move(nodes);
  result.curve.params.resize(t);
  for (Eigen::Index i = 0; i < t; ++i) {
    result.curve.params(i) =
        static_cast<double>(i) / static_cast<double>(t - 1);
  }
  result.endpoint_residual = 0.0;
  result.converged = false;
  result.method = "relaxation";
  result.length = curve_length(field, result.curve);
  return result;
}

inline GeodesicResult solve_geodesic_bvp(const LatentModel& m,
                                         const Eigen::VectorXd& x1,
                                         const Eigen::VectorXd& x2,
                                         const BvpOptions& opts = {}) {
  return solve_geodesic_bvp(GpMetric(m), x1, x2, opts);
}

/// n points equally spaced in arc length along the curve, found by
/// piecewise-linear inversion of the cumulative Riemannian length. The
/// first and last rows are exactly the curve endpoints; a zero-length
/// curve yields n copies of the endpoint.
template <MetricField F>
Eigen::MatrixXd interpolate_equidistant(const F& field,
                                        const GeodesicResult& result, int n) {
  if (n < 2) throw InputError("interpolate_equidistant: need n >= 2 samples");
  const Eigen::MatrixXd& nodes = result.curve.nodes;
  const Eigen::Index t = nodes.rows();
  if (t < 2) {
    throw InputError("interpolate_equidistant: curve needs at least two nodes");
  }
  const Eigen::Index q = nodes.cols();

  Eigen::VectorXd cumulative(t);
  cumulative(0) = 0.0;
  for (Eigen::Index i = 0; i + 1 < t; ++i) {
    const Eigen::VectorXd delta = (nodes.row(i + 1) - nodes.row(i)).transpose();
    const Eigen::VectorXd mid =
        0.5 * (nodes.row(i + 1) + nodes.row(i)).transpose();
    const double quad = delta.dot(field.metric(mid) * delta);
    cumulative(i + 1) = cumulative(i) + std::sqrt(std::max(quad, 0.0));
  }
  const double total = cumulative(t - 1);

  Eigen::MatrixXd samples(n, q);
  if (!(total > 0.0)) {
    for (int k = 0; k < n; ++k) samples.row(k) = nodes.row(t - 1);
    return samples;
  }

  samples.row(0) = nodes.row(0);
  samples.row(n - 1) = nodes.row(t - 1);
  Eigen::Index seg = 0;
  for (int k = 1; k + 1 < n; ++k) {
    const double target =
        total * static_cast<double>(k) / static_cast<double>(n - 1);
    while (seg + 2 < t && cumulative(seg + 1) < target) ++seg;
    const double seg_len = cumulative(seg + 1) - cumulative(seg);
    const double frac =
        seg_len > 0.0 ? (target - cumulative(seg)) / seg_len : 0.0;
    samples.row(k) =
        nodes.row(seg) + frac * (nodes.row(seg + 1) - nodes.row(seg));
  }
  return samples;
}

inline Eigen::MatrixXd interpolate_equidistant(const LatentModel& m,
                                               const GeodesicResult& result,
                                               int n) {
  return interpolate_equidistant(GpMetric(m), result, n);
}

/// Maps latent points back to data space: posterior mean plus the stored
/// centering offset, one row per input row.
inline Eigen::MatrixXd reconstruct_path(const LatentModel& m,
                                        const Eigen::MatrixXd& points) {
  if (points.cols() != m.q()) {
    throw InputError("reconstruct_path: point dimension mismatch");
  }
  Eigen::MatrixXd out(points.rows(), m.p());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    out.row(i) =
        (posterior_mean(m, points.row(i).transpose()) + m.observation_mean())
            .transpose();
  }
  return out;
}

}  // namespace latentgeo
