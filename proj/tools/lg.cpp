#include <CLI11.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <iostream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "latentgeo/latentgeo.hpp"

namespace lg = latentgeo;

namespace {

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = v[i];
  }
  return out;
}

struct FitOpts {
  std::string data_path;
  std::string out_path;
  int q = 2;
  int iterations = 2000;
  double step = 1e-4;
  double tolerance = 1e-4;
  bool learn_hyperparameters = false;
  std::uint64_t seed = 0;
  double alpha = -1.0;  // negative = use default / heuristic
  double omega = -1.0;
  double beta = -1.0;
};

int run_fit(const FitOpts& o) {
  const Eigen::MatrixXd y = lg::io::read_csv_matrix(o.data_path);
  lg::TrainOptions opts;
  opts.max_iterations = o.iterations;
  opts.initial_step = o.step;
  opts.grad_tolerance = o.tolerance;
  opts.learn_hyperparameters = o.learn_hyperparameters;
  opts.seed = o.seed;
  if (o.alpha > 0.0) opts.alpha = o.alpha;
  if (o.omega > 0.0) opts.omega = o.omega;
  if (o.beta > 0.0) opts.beta = o.beta;

  lg::TrainReport report;
  const lg::LatentModel model =
      lg::fit_gplvm(y, static_cast<Eigen::Index>(o.q), opts, &report);
  lg::io::write_model(model, o.out_path);

  std::cout << "N = " << model.n() << "\n";
  std::cout << "p = " << model.p() << "\n";
  std::cout << "q = " << model.q() << "\n";
  std::cout << "iterations = " << report.iterations << "\n";
  std::cout << "converged = " << (report.converged ? "yes" : "no") << "\n";
  std::cout << "initial log-likelihood = "
            << lg::io::format_double(report.initial_log_likelihood) << "\n";
  std::cout << "final log-likelihood = "
            << lg::io::format_double(report.final_log_likelihood) << "\n";
  std::cout << "avg training error = "
            << lg::io::format_double(lg::avg_training_error(model)) << "\n";
  std::cout << "model written to " << o.out_path << "\n";
  return 0;
}

struct GeodesicOpts {
  std::string model_path;
  std::string out_prefix;
  std::vector<double> from;
  std::vector<double> to;
  int nodes = 32;
  int steps = 128;
  int relax_iterations = 500;
  int newton_iterations = 40;
  double tolerance = 0.0;
  int samples = 50;
  bool compare_straight = false;
  bool oracle = false;
  int oracle_resolution = 200;
};

/// Distance from each reconstructed row to its nearest (un-centered)
/// training observation.
Eigen::VectorXd nearest_training_distances(const lg::LatentModel& model,
                                           const Eigen::MatrixXd& recon) {
  Eigen::MatrixXd train = model.observations();
  train.rowwise() += model.observation_mean().transpose();
  Eigen::VectorXd out(recon.rows());
  for (Eigen::Index i = 0; i < recon.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index n = 0; n < train.rows(); ++n) {
      best = std::min(best, (recon.row(i) - train.row(n)).norm());
    }
    out(i) = best;
  }
  return out;
}

int run_geodesic(const GeodesicOpts& o) {
  const lg::LatentModel model = lg::io::read_model(o.model_path);
  const Eigen::VectorXd x1 = to_vector(o.from);
  const Eigen::VectorXd x2 = to_vector(o.to);

  lg::BvpOptions opts;
  opts.relaxation_nodes = o.nodes;
  opts.relaxation_max_iterations = o.relax_iterations;
  opts.shooting_steps = o.steps;
  opts.newton_max_iterations = o.newton_iterations;
  opts.tolerance = o.tolerance;

  const lg::GeodesicResult result = lg::solve_geodesic_bvp(model, x1, x2, opts);
  lg::io::write_curve_csv(result.curve, o.out_prefix + "_curve.csv");

  std::vector<lg::io::JsonExtra> extras;
  if (o.compare_straight || o.oracle) {
    // Straight segment sampled as densely as the geodesic curve.
    const Eigen::Index t = result.curve.nodes.rows();
    lg::GeodesicResult straight;
    straight.curve.nodes.resize(t, model.q());
    straight.curve.params.resize(t);
    for (Eigen::Index i = 0; i < t; ++i) {
      const double f = static_cast<double>(i) / static_cast<double>(t - 1);
      straight.curve.nodes.row(i) = ((1.0 - f) * x1 + f * x2).transpose();
      straight.curve.params(i) = f;
    }

    if (o.compare_straight) {
      const double straight_length =
          lg::curve_length(model, straight.curve);
      extras.push_back({"straight_length", straight_length});
      extras.push_back(
          {"avg_training_error", lg::avg_training_error(model)});

      const Eigen::MatrixXd geo_pts =
          lg::interpolate_equidistant(model, result, o.samples);
      const Eigen::MatrixXd str_pts =
          lg::interpolate_equidistant(model, straight, o.samples);
      const Eigen::VectorXd geo_nn = nearest_training_distances(
          model, lg::reconstruct_path(model, geo_pts));
      const Eigen::VectorXd str_nn = nearest_training_distances(
          model, lg::reconstruct_path(model, str_pts));
      Eigen::MatrixXd table(o.samples, 3);
      for (int k = 0; k < o.samples; ++k) {
        table(k, 0) = static_cast<double>(k) / (o.samples - 1);
        table(k, 1) = geo_nn(k);
        table(k, 2) = str_nn(k);
      }
      lg::io::write_csv_matrix(table, o.out_prefix + "_compare.csv",
                               "s,geodesic_nn,straight_nn");
      // The sample points themselves, so the profile can be re-derived
      // through the reconstruct subcommand.
      lg::Curve sampled;
      sampled.nodes = geo_pts;
      sampled.params = table.col(0);
      lg::io::write_curve_csv(sampled, o.out_prefix + "_samples.csv");
    }

    if (o.oracle) {
      const lg::oracle::GridPath grid = lg::oracle::grid_geodesic(
          model, x1, x2, {o.oracle_resolution, o.oracle_resolution});
      extras.push_back({"grid_length", grid.length});
    }
  }

  lg::io::write_geodesic_json(result, o.out_prefix + ".json", extras);
  std::cout << "method = " << result.method << "\n";
  std::cout << "converged = " << (result.converged ? "yes" : "no") << "\n";
  std::cout << "length = " << lg::io::format_double(result.length) << "\n";
  std::cout << "endpoint residual = "
            << lg::io::format_double(result.endpoint_residual) << "\n";
  for (const auto& extra : extras) {
    std::cout << extra.key << " = " << lg::io::format_double(extra.value)
              << "\n";
  }
  return 0;
}

struct MfGridOpts {
  std::string model_path;
  std::string out_path;
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<int> resolution{60, 60};
};

int run_mf_grid(const MfGridOpts& o) {
  const lg::LatentModel model = lg::io::read_model(o.model_path);
  if (model.q() != 2) {
    throw lg::InputError(
        "mf-grid supports two-dimensional latent spaces only");
  }
  lg::Box bounds;
  if (o.lo.empty() != o.hi.empty()) {
    throw lg::InputError("mf-grid: give both --lo and --hi, or neither");
  }
  if (o.lo.empty()) {
    bounds.lo = model.latents().colwise().minCoeff().transpose();
    bounds.hi = model.latents().colwise().maxCoeff().transpose();
    const double pad = model.params().length_scale();
    bounds.lo.array() -= pad;
    bounds.hi.array() += pad;
  } else {
    bounds.lo = to_vector(o.lo);
    bounds.hi = to_vector(o.hi);
  }
  std::vector<int> resolution = o.resolution;
  if (resolution.size() == 1) resolution.push_back(resolution[0]);
  const lg::MfGrid grid = lg::mf_grid(model, bounds, resolution);
  lg::io::write_mf_grid_csv(grid, o.out_path);
  std::cout << "grid written to " << o.out_path << " (" << grid.values.size()
            << " cells)\n";
  return 0;
}

struct ReconstructOpts {
  std::string model_path;
  std::string points_path;
  std::string out_path;
};

int run_reconstruct(const ReconstructOpts& o) {
  const lg::LatentModel model = lg::io::read_model(o.model_path);
  Eigen::MatrixXd points = lg::io::read_csv_matrix(o.points_path);
  // Curve CSVs (as written by the geodesic subcommand) carry a leading
  // parameter column announced by a "t,..." header; accept them directly.
  std::ifstream peek(o.points_path);
  std::string first_line;
  std::getline(peek, first_line);
  if (first_line.rfind("t,", 0) == 0 && points.cols() == model.q() + 1) {
    points = points.rightCols(model.q()).eval();
  }
  const Eigen::MatrixXd recon = lg::reconstruct_path(model, points);
  lg::io::write_csv_matrix(recon, o.out_path);
  std::cout << recon.rows() << " rows written to " << o.out_path << "\n";
  return 0;
}

struct SampleMetricOpts {
  std::string model_path;
  std::string out_path;
  std::vector<double> at;
  int n = 100;
  std::uint64_t seed = 42;
};

int run_sample_metric(const SampleMetricOpts& o) {
  const lg::LatentModel model = lg::io::read_model(o.model_path);
  if (o.n < 1) throw lg::InputError("sample-metric: need n >= 1");
  const Eigen::VectorXd at = to_vector(o.at);
  const lg::JacobianPosterior post = lg::jacobian_posterior(model, at);
  std::mt19937_64 rng(o.seed);
  std::vector<Eigen::MatrixXd> samples;
  samples.reserve(static_cast<std::size_t>(o.n));
  for (int k = 0; k < o.n; ++k) {
    samples.push_back(lg::sample_metric(post, rng));
  }
  lg::io::write_metric_samples_json(at, o.seed, samples, o.out_path);
  std::cout << o.n << " metric samples written to " << o.out_path << "\n";
  return 0;
}

struct VerifyOpts {
  std::string model_path;
  std::string out_path;
  int points = 20;
  std::uint64_t seed = 12345;
  int mc_samples = 20000;
  int grid_resolution = 200;
};

int run_verify(const VerifyOpts& o) {
  const lg::LatentModel model = lg::io::read_model(o.model_path);
  if (o.points < 1) throw lg::InputError("verify: need at least one point");
  const Eigen::Index q = model.q();

  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Eigen::VectorXd lo = model.latents().colwise().minCoeff().transpose();
  const Eigen::VectorXd hi = model.latents().colwise().maxCoeff().transpose();
  const double pad = 0.5 * model.params().length_scale();
  std::vector<Eigen::VectorXd> points;
  points.reserve(static_cast<std::size_t>(o.points));
  for (int k = 0; k < o.points; ++k) {
    Eigen::VectorXd x(q);
    for (Eigen::Index i = 0; i < q; ++i) {
      x(i) = lo(i) - pad + (hi(i) - lo(i) + 2.0 * pad) * unif(rng);
    }
    points.push_back(x);
  }

  std::vector<lg::io::CheckResult> checks;
  const double floor = 1e-10;

  {
    double worst = 0.0;
    for (const auto& x : points) {
      const Eigen::MatrixXd analytic = lg::jacobian_posterior(model, x).mean;
      const Eigen::MatrixXd fd = lg::oracle::fd_jacobian(model, x);
      worst = std::max(worst, (analytic - fd).norm() /
                                  std::max(fd.norm(), floor));
    }
    checks.push_back({"fd_jacobian_mean", worst, 1e-4, worst <= 1e-4});
  }

  {
    double worst = 0.0;
    for (const auto& x : points) {
      const Eigen::MatrixXd analytic = lg::metric_derivative(model, x).dg;
      const Eigen::MatrixXd fd = lg::oracle::fd_metric_derivative(model, x);
      worst = std::max(worst, (analytic - fd).norm() /
                                  std::max(fd.norm(), floor));
    }
    checks.push_back({"fd_metric_derivative", worst, 1e-3, worst <= 1e-3});
  }

  {
    // Worst deviation of the analytic expected metric from a Monte Carlo
    // mean, in standard-error units.
    double worst = 0.0;
    const std::size_t n_mc = std::min<std::size_t>(points.size(), 3);
    for (std::size_t k = 0; k < n_mc; ++k) {
      const Eigen::VectorXd& x = points[k];
      const lg::JacobianPosterior post = lg::jacobian_posterior(model, x);
      const Eigen::MatrixXd analytic = lg::expected_metric(model, x).g;
      const lg::oracle::McMetric mc =
          lg::oracle::mc_expected_metric(post, o.mc_samples, rng);
      const Eigen::MatrixXd units =
          (analytic - mc.mean).cwiseAbs().cwiseQuotient(
              mc.standard_error.array().max(floor).matrix());
      worst = std::max(worst, units.maxCoeff());
    }
    checks.push_back({"mc_expected_metric", worst, 4.0, worst <= 4.0});
  }

  if (q == 2) {
    // Grid-search oracle against the BVP solver, between the two most
    // widely separated training latents.
    Eigen::Index a = 0;
    Eigen::Index b = 1;
    double best = -1.0;
    const Eigen::MatrixXd& latents = model.latents();
    for (Eigen::Index i = 0; i < latents.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < latents.rows(); ++j) {
        const double d = (latents.row(i) - latents.row(j)).norm();
        if (d > best) {
          best = d;
          a = i;
          b = j;
        }
      }
    }
    const Eigen::VectorXd x1 = latents.row(a).transpose();
    const Eigen::VectorXd x2 = latents.row(b).transpose();
    const lg::GeodesicResult bvp = lg::solve_geodesic_bvp(model, x1, x2);
    const lg::oracle::GridPath grid = lg::oracle::grid_geodesic(
        model, x1, x2, {o.grid_resolution, o.grid_resolution});
    const double value =
        std::abs(bvp.length - grid.length) / std::max(grid.length, floor);
    checks.push_back({"grid_geodesic", value, 0.05, value <= 0.05});
  }

  bool all = true;
  for (const auto& c : checks) {
    all = all && c.pass;
    std::cout << "check " << c.name
              << ": value = " << lg::io::format_double(c.value)
              << ", tolerance = " << lg::io::format_double(c.tolerance)
              << ", " << (c.pass ? "PASS" : "FAIL") << "\n";
  }
  std::cout << (all ? "all checks passed" : "some checks FAILED") << "\n";
  if (!o.out_path.empty()) {
    lg::io::write_check_report(checks, o.out_path);
    std::cout << "report written to " << o.out_path << "\n";
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Latent-space Riemannian geometry for Gaussian-process latent "
      "variable models"};
  app.require_subcommand(1);

  FitOpts fit;
  CLI::App* cmd_fit =
      app.add_subcommand("fit", "Fit a model to a CSV of observations");
  cmd_fit->add_option("data", fit.data_path, "input CSV, one row per point")
      ->required();
  cmd_fit->add_option("--q", fit.q, "latent dimension")->required();
  cmd_fit->add_option("--out", fit.out_path, "output model JSON")->required();
  cmd_fit->add_option("--iterations", fit.iterations, "max ascent iterations");
  cmd_fit->add_option("--step", fit.step, "initial ascent step size");
  cmd_fit->add_option("--tolerance", fit.tolerance,
                      "gradient infinity-norm stop");
  cmd_fit->add_flag("--learn-hyperparameters", fit.learn_hyperparameters,
                    "also ascend the kernel hyperparameters");
  cmd_fit->add_option("--alpha", fit.alpha, "kernel variance (fixed)");
  cmd_fit->add_option("--omega", fit.omega,
                      "inverse squared length-scale (fixed)");
  cmd_fit->add_option("--beta", fit.beta, "noise precision (fixed)");
  cmd_fit->add_option("--seed", fit.seed, "rng seed");

  GeodesicOpts geo;
  CLI::App* cmd_geo = app.add_subcommand(
      "geodesic", "Solve the geodesic boundary-value problem");
  cmd_geo->add_option("model", geo.model_path, "model JSON")->required();
  cmd_geo->add_option("--from", geo.from, "start point, comma-separated")
      ->required()
      ->delimiter(',');
  cmd_geo->add_option("--to", geo.to, "end point, comma-separated")
      ->required()
      ->delimiter(',');
  cmd_geo->add_option("--out", geo.out_prefix,
                      "output prefix (writes <prefix>.json, "
                      "<prefix>_curve.csv)")
      ->required();
  cmd_geo->add_option("--nodes", geo.nodes, "relaxation nodes");
  cmd_geo->add_option("--steps", geo.steps, "shooting integration steps");
  cmd_geo->add_option("--relax-iterations", geo.relax_iterations,
                      "max relaxation iterations");
  cmd_geo->add_option("--newton-iterations", geo.newton_iterations,
                      "max shooting Newton iterations");
  cmd_geo->add_option("--tolerance", geo.tolerance,
                      "endpoint residual tolerance (0 = auto)");
  cmd_geo->add_option("--samples", geo.samples,
                      "equidistant samples for --compare-straight");
  cmd_geo->add_flag("--compare-straight", geo.compare_straight,
                    "also write straight-segment comparison profiles");
  cmd_geo->add_flag("--oracle", geo.oracle,
                    "cross-check the length against a grid search (q=2)");
  cmd_geo->add_option("--oracle-resolution", geo.oracle_resolution,
                      "grid nodes per axis for --oracle");

  MfGridOpts mf;
  CLI::App* cmd_mf = app.add_subcommand(
      "mf-grid", "Magnification factors over a two-dimensional grid");
  cmd_mf->add_option("model", mf.model_path, "model JSON")->required();
  cmd_mf->add_option("--out", mf.out_path, "output CSV")->required();
  cmd_mf->add_option("--lo", mf.lo, "lower bounds, comma-separated")
      ->delimiter(',');
  cmd_mf->add_option("--hi", mf.hi, "upper bounds, comma-separated")
      ->delimiter(',');
  cmd_mf->add_option("--resolution", mf.resolution,
                     "cells per axis, comma-separated")
      ->delimiter(',');

  ReconstructOpts rec;
  CLI::App* cmd_rec = app.add_subcommand(
      "reconstruct", "Map latent points back to data space");
  cmd_rec->add_option("model", rec.model_path, "model JSON")->required();
  cmd_rec
      ->add_option("points", rec.points_path,
                   "latent points CSV; curve CSVs with a leading t column "
                   "are accepted as-is")
      ->required();
  cmd_rec->add_option("--out", rec.out_path, "output CSV")->required();

  VerifyOpts ver;
  CLI::App* cmd_ver = app.add_subcommand(
      "verify", "Cross-check analytic results against brute-force oracles");
  cmd_ver->add_option("model", ver.model_path, "model JSON")->required();
  cmd_ver->add_option("--out", ver.out_path, "report JSON (optional)");
  cmd_ver->add_option("--points", ver.points, "random evaluation points");
  cmd_ver->add_option("--seed", ver.seed, "rng seed");
  cmd_ver->add_option("--mc-samples", ver.mc_samples,
                      "Monte Carlo samples per point");
  cmd_ver->add_option("--grid-resolution", ver.grid_resolution,
                      "grid nodes per axis for the geodesic oracle");

  SampleMetricOpts sm;
  CLI::App* cmd_sm = app.add_subcommand(
      "sample-metric", "Draw metric tensors from the posterior at a point");
  cmd_sm->add_option("model", sm.model_path, "model JSON")->required();
  cmd_sm->add_option("--at", sm.at, "latent point, comma-separated")
      ->required()
      ->delimiter(',');
  cmd_sm->add_option("--n", sm.n, "number of samples");
  cmd_sm->add_option("--seed", sm.seed, "rng seed");
  cmd_sm->add_option("--out", sm.out_path, "output JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cmd_fit->parsed()) return run_fit(fit);
    if (cmd_geo->parsed()) return run_geodesic(geo);
    if (cmd_mf->parsed()) return run_mf_grid(mf);
    if (cmd_rec->parsed()) return run_reconstruct(rec);
    if (cmd_ver->parsed()) return run_verify(ver);
    if (cmd_sm->parsed()) return run_sample_metric(sm);
  } catch (const lg::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const lg::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
