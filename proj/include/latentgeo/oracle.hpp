#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <random>
#include <utility>
#include <vector>

#include "latentgeo/common.hpp"
#include "latentgeo/geometry.hpp"
#include "latentgeo/gp_model.hpp"
#include "latentgeo/parallel.hpp"

namespace latentgeo {
namespace oracle {

/// Central-difference Jacobian of an R^q -> R^p function.
template <typename Fn>
Eigen::MatrixXd fd_jacobian_of(Fn&& fn, const Eigen::VectorXd& x, double h) {
  if (!(h > 0.0)) throw InputError("fd_jacobian: step must be positive");
  const Eigen::VectorXd f0 = fn(x);
  Eigen::MatrixXd jac(f0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Eigen::VectorXd hi = x;
    Eigen::VectorXd lo = x;
    hi(j) += h;
    lo(j) -= h;
    jac.col(j) = (fn(hi) - fn(lo)) / (2.0 * h);
  }
  return jac;
}

/// Central-difference Jacobian of the posterior mean of a model.
inline Eigen::MatrixXd fd_jacobian(const LatentModel& m,
                                   const Eigen::VectorXd& x_star,
                                   double h = 1e-5) {
  return fd_jacobian_of(
      [&](const Eigen::VectorXd& x) { return posterior_mean(m, x); }, x_star,
      h);
}

/// Central-difference derivative of the expected metric: q^2 x q, column m
/// is vec(dG/dx^(m)), with vec stacking columns.
inline Eigen::MatrixXd fd_metric_derivative(const LatentModel& m,
                                            const Eigen::VectorXd& x_star,
                                            double h = 1e-5) {
  if (!(h > 0.0)) {
    throw InputError("fd_metric_derivative: step must be positive");
  }
  const Eigen::Index q = m.q();
  Eigen::MatrixXd dg(q * q, q);
  for (Eigen::Index j = 0; j < q; ++j) {
    Eigen::VectorXd hi = x_star;
    Eigen::VectorXd lo = x_star;
    hi(j) += h;
    lo(j) -= h;
    const Eigen::MatrixXd diff =
        (expected_metric(m, hi).g - expected_metric(m, lo).g) / (2.0 * h);
    dg.col(j) = Eigen::Map<const Eigen::VectorXd>(diff.data(), q * q);
  }
  return dg;
}

struct McMetric {
  Eigen::MatrixXd mean;            ///< entrywise Monte Carlo mean of J^T J
  Eigen::MatrixXd standard_error;  ///< entrywise standard error of the mean
};

/// Monte Carlo estimate of E[J^T J] by drawing Jacobians row-wise from the
/// posterior. Independent of the analytic expected-metric code path.
inline McMetric mc_expected_metric(const JacobianPosterior& post, int n,
                                   std::mt19937_64& rng) {
  if (n < 1000) {
    throw InputError("mc_expected_metric: need at least 1000 samples");
  }
  const Eigen::Index p = post.mean.rows();
  const Eigen::Index q = post.mean.cols();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(post.cov);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("mc_expected_metric: eigendecomposition failed");
  }
  const Eigen::MatrixXd factor =
      eig.eigenvectors() *
      eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(q, q);
  Eigen::MatrixXd sum_sq = Eigen::MatrixXd::Zero(q, q);
  Eigen::MatrixXd z(p, q);
  for (int s = 0; s < n; ++s) {
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index j = 0; j < q; ++j) z(i, j) = normal(rng);
    }
    const Eigen::MatrixXd jac = post.mean + z * factor.transpose();
    const Eigen::MatrixXd metric = jac.transpose() * jac;
    sum += metric;
    sum_sq += metric.cwiseProduct(metric);
  }

  McMetric out;
  out.mean = sum / static_cast<double>(n);
  const Eigen::MatrixXd variance =
      (sum_sq - sum.cwiseProduct(sum) / static_cast<double>(n)) /
      static_cast<double>(n - 1);
  out.standard_error =
      (variance.cwiseMax(0.0) / static_cast<double>(n)).cwiseSqrt();
  return out;
}

inline McMetric mc_expected_metric(const LatentModel& m,
                                   const Eigen::VectorXd& x_star, int n,
                                   std::mt19937_64& rng) {
  return mc_expected_metric(jacobian_posterior(m, x_star), n, rng);
}

/// Forward lattice step. The full neighbourhood is this set plus its
/// negations, so storing weights for the forward half covers every edge
/// once and keeps weight(u,v) = weight(v,u) structural.
struct GridOffset {
  int di;
  int dj;
};

/// Two-dimensional lattice with per-edge Riemannian segment lengths.
/// weights[o][node] is the length of the edge from node along offsets[o]
/// (infinity when that step leaves the lattice).
struct GridGraph {
  Box bounds;
  std::array<int, 2> resolution{0, 0};
  std::vector<GridOffset> offsets;
  std::vector<std::vector<double>> weights;

  int node_count() const { return resolution[0] * resolution[1]; }
  double spacing(int axis) const {
    return (bounds.hi(axis) - bounds.lo(axis)) / (resolution[axis] - 1);
  }
  int index(int i, int j) const { return i * resolution[1] + j; }
  Eigen::Vector2d coords(int i, int j) const {
    Eigen::Vector2d x;
    x << bounds.lo(0) + i * spacing(0), bounds.lo(1) + j * spacing(1);
    return x;
  }
};

namespace grid_detail {

inline std::vector<GridOffset> offsets_for(int connectivity) {
  if (connectivity == 8) {
    return {{1, 0}, {0, 1}, {1, 1}, {1, -1}};
  }
  if (connectivity == 16) {
    return {{1, 0}, {0, 1}, {1, 1}, {1, -1},
            {2, 1}, {1, 2}, {2, -1}, {1, -2}};
  }
  throw InputError("grid_geodesic: connectivity must be 8 or 16");
}

}  // namespace grid_detail

/// Builds the lattice over the given box and fills every edge with the
/// segment length sqrt(d^T G(mid) d), metric taken at the edge midpoint.
/// Edge evaluation runs in parallel (each edge touches only its own slot).
template <MetricField F>
GridGraph build_grid_graph(const F& field, const Box& bounds,
                           const std::array<int, 2>& resolution,
                           int connectivity = 16) {
  if (field.dim() != 2) {
    throw InputError("grid_geodesic: only two-dimensional latent spaces");
  }
  if (bounds.lo.size() != 2 || bounds.hi.size() != 2 ||
      !(bounds.lo(0) < bounds.hi(0)) || !(bounds.lo(1) < bounds.hi(1))) {
    throw InputError("grid_geodesic: invalid bounds");
  }
  if (resolution[0] < 2 || resolution[1] < 2) {
    throw InputError("grid_geodesic: resolution must be at least 2 per axis");
  }

  GridGraph graph;
  graph.bounds = bounds;
  graph.resolution = resolution;
  graph.offsets = grid_detail::offsets_for(connectivity);

  const int ni = resolution[0];
  const int nj = resolution[1];
  const std::size_t n_nodes = static_cast<std::size_t>(ni) * nj;
  graph.weights.resize(graph.offsets.size());
  for (auto& w : graph.weights) {
    w.assign(n_nodes, std::numeric_limits<double>::infinity());
  }
  parallel_for(n_nodes, [&](std::size_t node) {
    const int i = static_cast<int>(node) / nj;
    const int j = static_cast<int>(node) % nj;
    const Eigen::Vector2d a = graph.coords(i, j);
    for (std::size_t o = 0; o < graph.offsets.size(); ++o) {
      const int i2 = i + graph.offsets[o].di;
      const int j2 = j + graph.offsets[o].dj;
      if (i2 < 0 || i2 >= ni || j2 < 0 || j2 >= nj) continue;
      const Eigen::Vector2d b = graph.coords(i2, j2);
      const Eigen::Vector2d delta = b - a;
      const Eigen::Vector2d mid = 0.5 * (a + b);
      const double quad = delta.dot(field.metric(mid) * delta);
      graph.weights[o][node] = std::sqrt(std::max(quad, 0.0));
    }
  });
  return graph;
}

/// Shortest lattice path found by Dijkstra on a two-dimensional grid.
struct GridPath {
  Eigen::MatrixXd nodes;  ///< lattice points visited, one row each
  double length = 0.0;
  double snap_distance_from = 0.0;  ///< endpoint-to-lattice snap distances
  double snap_distance_to = 0.0;
};

/// Dijkstra between x1 and x2 on a prebuilt lattice. Endpoints snap to
/// the nearest node; the snap distance must stay below half a cell
/// diagonal.
inline GridPath shortest_grid_path(const GridGraph& graph,
                                   const Eigen::VectorXd& x1,
                                   const Eigen::VectorXd& x2) {
  if (x1.size() != 2 || x2.size() != 2) {
    throw InputError("grid_geodesic: endpoint dimension mismatch");
  }
  const Box& bounds = graph.bounds;
  for (int axis = 0; axis < 2; ++axis) {
    for (const auto* pt : {&x1, &x2}) {
      if ((*pt)(axis) < bounds.lo(axis) || (*pt)(axis) > bounds.hi(axis)) {
        throw InputError("grid_geodesic: endpoint outside bounds");
      }
    }
  }
  const int ni = graph.resolution[0];
  const int nj = graph.resolution[1];
  const double di = graph.spacing(0);
  const double dj = graph.spacing(1);

  const auto snap = [&](const Eigen::VectorXd& x, double& dist) {
    int i = static_cast<int>(std::lround((x(0) - bounds.lo(0)) / di));
    int j = static_cast<int>(std::lround((x(1) - bounds.lo(1)) / dj));
    i = std::min(std::max(i, 0), ni - 1);
    j = std::min(std::max(j, 0), nj - 1);
    dist = (graph.coords(i, j) - x).norm();
    return std::pair<int, int>(i, j);
  };

  GridPath out;
  const auto [si, sj] = snap(x1, out.snap_distance_from);
  const auto [ti, tj] = snap(x2, out.snap_distance_to);
  const double half_diag = 0.5 * std::hypot(di, dj);
  if (out.snap_distance_from > half_diag || out.snap_distance_to > half_diag) {
    throw NumericalError("grid_geodesic: endpoint snap exceeded half a cell");
  }

  const std::size_t n_nodes = static_cast<std::size_t>(graph.node_count());
  std::vector<double> dist(n_nodes, std::numeric_limits<double>::infinity());
  std::vector<std::int32_t> prev(n_nodes, -1);
  using Entry = std::pair<double, std::int32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> queue;
  const std::int32_t src = graph.index(si, sj);
  const std::int32_t dst = graph.index(ti, tj);
  dist[static_cast<std::size_t>(src)] = 0.0;
  queue.emplace(0.0, src);
  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (d > dist[static_cast<std::size_t>(u)]) continue;
    if (u == dst) break;
    const int i = u / nj;
    const int j = u % nj;
    for (std::size_t o = 0; o < graph.offsets.size(); ++o) {
      // Each stored offset is traversed both ways at the same weight.
      for (int sign : {1, -1}) {
        const int i2 = i + sign * graph.offsets[o].di;
        const int j2 = j + sign * graph.offsets[o].dj;
        if (i2 < 0 || i2 >= ni || j2 < 0 || j2 >= nj) continue;
        const std::int32_t vtx = graph.index(i2, j2);
        const std::size_t from = sign > 0 ? static_cast<std::size_t>(u)
                                          : static_cast<std::size_t>(vtx);
        const double candidate = d + graph.weights[o][from];
        if (candidate < dist[static_cast<std::size_t>(vtx)]) {
          dist[static_cast<std::size_t>(vtx)] = candidate;
          prev[static_cast<std::size_t>(vtx)] = u;
          queue.emplace(candidate, vtx);
        }
      }
    }
  }

  if (!std::isfinite(dist[static_cast<std::size_t>(dst)])) {
    throw NumericalError("grid_geodesic: endpoint not reachable on the grid");
  }
  out.length = dist[static_cast<std::size_t>(dst)];

  std::vector<std::int32_t> path;
  for (std::int32_t u = dst; u != -1; u = prev[static_cast<std::size_t>(u)]) {
    path.push_back(u);
  }
  out.nodes.resize(static_cast<Eigen::Index>(path.size()), 2);
  for (std::size_t k = 0; k < path.size(); ++k) {
    const std::int32_t u = path[path.size() - 1 - k];
    out.nodes.row(static_cast<Eigen::Index>(k)) =
        graph.coords(u / nj, u % nj).transpose();
  }
  return out;
}

/// Shortest-path length between two points under a metric field,
/// discretizing the given box.
template <MetricField F>
GridPath grid_geodesic(const F& field, const Eigen::VectorXd& x1,
                       const Eigen::VectorXd& x2, const Box& bounds,
                       const std::array<int, 2>& resolution,
                       int connectivity = 16) {
  const GridGraph graph =
      build_grid_graph(field, bounds, resolution, connectivity);
  return shortest_grid_path(graph, x1, x2);
}

/// Model-backed grid bounds: the bounding box of the training latents and
/// both endpoints, padded by one kernel length-scale per side.
inline Box grid_bounds(const LatentModel& m, const Eigen::VectorXd& x1,
                       const Eigen::VectorXd& x2) {
  Box bounds;
  bounds.lo = m.latents().colwise().minCoeff().transpose();
  bounds.hi = m.latents().colwise().maxCoeff().transpose();
  bounds.lo = bounds.lo.cwiseMin(x1).cwiseMin(x2);
  bounds.hi = bounds.hi.cwiseMax(x1).cwiseMax(x2);
  const double pad = m.params().length_scale();
  bounds.lo.array() -= pad;
  bounds.hi.array() += pad;
  return bounds;
}

inline GridPath grid_geodesic(const LatentModel& m, const Eigen::VectorXd& x1,
                              const Eigen::VectorXd& x2,
                              const std::array<int, 2>& resolution,
                              int connectivity = 16) {
  if (m.q() != 2) {
    throw InputError("grid_geodesic: only two-dimensional latent spaces");
  }
  if (x1.size() != 2 || x2.size() != 2) {
    throw InputError("grid_geodesic: endpoint dimension mismatch");
  }
  return grid_geodesic(GpMetric(m), x1, x2, grid_bounds(m, x1, x2),
                       resolution, connectivity);
}

}  // namespace oracle
}  // namespace latentgeo
