// End-to-end acceptance gate: one pass/fail line per criterion, exit 0
// only if every criterion holds. Each criterion runs independently; an
// exception fails that criterion and the run continues.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "latentgeo/latentgeo.hpp"

namespace lg = latentgeo;
namespace fs = std::filesystem;

namespace {

bool g_all_pass = true;

void report(int id, const std::string& label, bool pass,
            const std::string& detail) {
  g_all_pass = g_all_pass && pass;
  std::printf("%s criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", id,
              label.c_str(), detail.c_str());
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

std::string fmt(const char* pattern, double a, double b = 0.0,
                double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c);
  return buf;
}

lg::GeodesicResult straight_result(const Eigen::VectorXd& a,
                                   const Eigen::VectorXd& b, int t) {
  lg::GeodesicResult out;
  out.curve.nodes.resize(t, a.size());
  out.curve.params.resize(t);
  for (int i = 0; i < t; ++i) {
    const double s = static_cast<double>(i) / (t - 1);
    out.curve.nodes.row(i) = ((1.0 - s) * a + s * b).transpose();
    out.curve.params(i) = s;
  }
  return out;
}

// --- criterion 1: analytic derivatives vs central finite differences ----

void criterion_1() {
  const auto start = std::chrono::steady_clock::now();
  const lg::LatentModel& m = fixtures::circle_model();
  const Eigen::MatrixXd& X = m.latents();
  const lg::KernelParams& params = m.params();

  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> coord(-2.5, 2.5);

  double worst_kernel = 0.0, worst_jac = 0.0, worst_metric = 0.0;
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd x(2);
    x << coord(rng), coord(rng);

    // first kernel derivative block
    const Eigen::MatrixXd grad = lg::kernel::grad_block(x, X, params);
    const Eigen::MatrixXd grad_fd = lg::oracle::fd_jacobian_of(
        [&](const Eigen::VectorXd& z) {
          return lg::kernel::cross_vector(z, X, params);
        },
        x, h);
    worst_kernel =
        std::max(worst_kernel, (grad - grad_fd).norm() / grad_fd.norm());

    // second kernel derivative block, one Hessian slice per training row
    const std::vector<Eigen::MatrixXd> hess =
        lg::kernel::second_deriv_block(x, X, params);
    for (Eigen::Index row = 0; row < X.rows(); row += 7) {
      const Eigen::MatrixXd slice_fd = lg::oracle::fd_jacobian_of(
          [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
            return lg::kernel::grad_block(z, X, params).row(row).transpose();
          },
          x, h);
      const double denom = std::max(slice_fd.norm(), 1e-12);
      worst_kernel = std::max(
          worst_kernel,
          (hess[static_cast<std::size_t>(row)] - slice_fd).norm() / denom);
    }

    // Jacobian posterior mean
    const Eigen::MatrixXd mean = lg::jacobian_posterior(m, x).mean;
    const Eigen::MatrixXd mean_fd = lg::oracle::fd_jacobian(m, x, h);
    worst_jac = std::max(worst_jac,
                         (mean - mean_fd).norm() / (mean_fd.norm() + 1e-30));

    // metric derivative
    const Eigen::MatrixXd dg = lg::metric_derivative(m, x).dg;
    const Eigen::MatrixXd dg_fd = lg::oracle::fd_metric_derivative(m, x, h);
    worst_metric =
        std::max(worst_metric, (dg - dg_fd).norm() / (dg_fd.norm() + 1e-30));
  }

  // likelihood gradient with respect to every latent coordinate
  const Eigen::MatrixXd lgrad = lg::likelihood_grad_X(m);
  Eigen::MatrixXd lgrad_fd(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      Eigen::MatrixXd hi = X, lo = X;
      hi(i, j) += h;
      lo(i, j) -= h;
      const double up = lg::log_marginal_likelihood(
          lg::LatentModel(hi, m.observations(), params));
      const double down = lg::log_marginal_likelihood(
          lg::LatentModel(lo, m.observations(), params));
      lgrad_fd(i, j) = (up - down) / (2.0 * h);
    }
  }
  const double lik_err = (lgrad - lgrad_fd).norm() / lgrad_fd.norm();

  const double elapsed = seconds_since(start);
  const bool pass = worst_kernel < 1e-5 && worst_jac < 1e-4 &&
                    lik_err < 1e-4 && worst_metric < 1e-3 && elapsed < 30.0;
  report(1, "analytic derivatives match finite differences", pass,
         fmt("kernel %.2e, jacobian %.2e, likelihood %.2e", worst_kernel,
             worst_jac, lik_err) +
             fmt(", metric %.2e, %.1fs", worst_metric, elapsed));
}

// --- criterion 2: expected metric vs Monte Carlo -----------------------

void criterion_2() {
  const auto start = std::chrono::steady_clock::now();
  const lg::LatentModel& m = fixtures::circle_model();

  std::vector<Eigen::VectorXd> points;
  for (int row : {0, 12, 30}) {
    points.push_back(m.latents().row(row).transpose());
  }
  Eigen::VectorXd interior(2), outside(2);
  interior << 0.5, 0.0;
  outside << 3.0, 3.0;
  points.push_back(interior);
  points.push_back(outside);

  std::mt19937_64 rng(99);
  double worst_se_units = 0.0;
  for (const Eigen::VectorXd& x : points) {
    const Eigen::MatrixXd analytic = lg::expected_metric(m, x).g;
    const lg::oracle::McMetric mc =
        lg::oracle::mc_expected_metric(m, x, 200000, rng);
    for (Eigen::Index i = 0; i < analytic.rows(); ++i) {
      for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
        const double se = std::max(mc.standard_error(i, j), 1e-10);
        worst_se_units = std::max(
            worst_se_units, std::abs(mc.mean(i, j) - analytic(i, j)) / se);
      }
    }
  }

  const double elapsed = seconds_since(start);
  const bool pass = worst_se_units <= 3.0 && elapsed < 60.0;
  report(2, "expected metric matches 2e5-sample Monte Carlo", pass,
         fmt("worst deviation %.2f standard errors at 5 points, %.1fs",
             worst_se_units, elapsed));
}

// --- criterion 3: flat-space reduction ----------------------------------

void criterion_3() {
  const fixtures::ConstantMetric field(Eigen::Matrix2d::Identity());
  Eigen::VectorXd a = Eigen::VectorXd::Zero(2), b(2);
  b << 3.0, 4.0;
  const lg::GeodesicResult res = lg::solve_geodesic_bvp(field, a, b);

  double deviation = 0.0;
  for (Eigen::Index i = 0; i < res.curve.nodes.rows(); ++i) {
    const double s = res.curve.params(i);
    deviation = std::max(
        deviation,
        (res.curve.nodes.row(i).transpose() - ((1.0 - s) * a + s * b)).norm());
  }
  const double length_err = std::abs(res.length - 5.0);
  const bool pass = deviation < 1e-8 && length_err < 1e-10;
  report(3, "constant metric yields the straight segment", pass,
         fmt("node deviation %.2e, length error %.2e", deviation, length_err));
}

// --- criterion 4: conformal-metric analytics ----------------------------

void criterion_4() {
  const fixtures::ConformalMetric field;

  double worst_rhs = 0.0;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    Eigen::VectorXd x(2), v(2);
    x << unit(rng), unit(rng);
    v << unit(rng), unit(rng);
    worst_rhs = std::max(
        worst_rhs, (lg::geodesic_rhs(field, x, v) -
                    fixtures::ConformalMetric::christoffel_rhs(v))
                       .cwiseAbs()
                       .maxCoeff());
  }

  Eigen::VectorXd a = Eigen::VectorXd::Zero(2), b(2);
  b << 1.0, 0.0;
  const double horiz =
      lg::curve_length(field, straight_result(a, b, 128).curve);
  const double horiz_err = std::abs(horiz - (std::exp(1.0) - 1.0));

  Eigen::VectorXd v0(2);
  v0 << 0.8, 0.6;
  const Eigen::VectorXd e1 =
      lg::integrate_ivp(field, a, v0, 16).nodes.bottomRows(1).transpose();
  const Eigen::VectorXd e2 =
      lg::integrate_ivp(field, a, v0, 32).nodes.bottomRows(1).transpose();
  const Eigen::VectorXd e3 =
      lg::integrate_ivp(field, a, v0, 64).nodes.bottomRows(1).transpose();
  const double factor = (e1 - e2).norm() / (e2 - e3).norm();

  const bool pass = worst_rhs < 1e-10 && horiz_err < 1e-4 && factor >= 8.0 &&
                    factor <= 32.0;
  report(4, "conformal metric matches hand-derived geometry", pass,
         fmt("rhs error %.2e, length error %.2e, convergence factor %.1f",
             worst_rhs, horiz_err, factor));
}

// --- criterion 5: solver cross-validation against the grid oracle -------

void criterion_5() {
  const auto start = std::chrono::steady_clock::now();
  const lg::LatentModel& m = fixtures::circle_model();
  const Eigen::MatrixXd& X = m.latents();

  const lg::Box box = lg::oracle::grid_bounds(m, X.row(0).transpose(),
                                              X.row(1).transpose());
  const lg::oracle::GridGraph graph =
      lg::oracle::build_grid_graph(lg::GpMetric(m), box, {200, 200}, 16);

  const std::pair<int, int> pairs[] = {
      {0, 12}, {5, 25}, {30, 47}, {50, 9}, {20, 44}};
  double worst = 0.0;
  for (const auto& [i, j] : pairs) {
    const Eigen::VectorXd a = X.row(i).transpose();
    const Eigen::VectorXd b = X.row(j).transpose();
    const lg::GeodesicResult bvp = lg::solve_geodesic_bvp(m, a, b);
    const lg::oracle::GridPath grid =
        lg::oracle::shortest_grid_path(graph, a, b);
    worst = std::max(worst, std::abs(bvp.length - grid.length) / grid.length);
  }

  const double elapsed = seconds_since(start);
  const bool pass = worst <= 0.05 && elapsed < 120.0;
  report(5, "geodesic lengths match the 200x200 grid oracle", pass,
         fmt("worst discrepancy %.2f%% over 5 pairs, %.1fs", 100.0 * worst,
             elapsed));
}

// --- criterion 6: geodesics stay near the data --------------------------

double worst_nearest_training_distance(const lg::LatentModel& m,
                                       const Eigen::MatrixXd& samples) {
  const Eigen::MatrixXd recon = lg::reconstruct_path(m, samples);
  Eigen::MatrixXd train = m.observations();
  train.rowwise() += m.observation_mean().transpose();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < recon.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < train.rows(); ++j) {
      best = std::min(best, (recon.row(i) - train.row(j)).norm());
    }
    worst = std::max(worst, best);
  }
  return worst;
}

void criterion_6() {
  const lg::LatentModel& m = fixtures::circle_model();

  // most separated latent pair = antipodal on the ring
  Eigen::Index bi = 0, bj = 1;
  double best = -1.0;
  for (Eigen::Index i = 0; i < m.n(); ++i) {
    for (Eigen::Index j = i + 1; j < m.n(); ++j) {
      const double d = (m.latents().row(i) - m.latents().row(j)).norm();
      if (d > best) {
        best = d;
        bi = i;
        bj = j;
      }
    }
  }
  const Eigen::VectorXd a = m.latents().row(bi).transpose();
  const Eigen::VectorXd b = m.latents().row(bj).transpose();

  const lg::GeodesicResult geo = lg::solve_geodesic_bvp(m, a, b);
  lg::GeodesicResult straight =
      straight_result(a, b, static_cast<int>(geo.curve.nodes.rows()));
  straight.length = lg::curve_length(m, straight.curve);

  const Eigen::MatrixXd geo_samples = lg::interpolate_equidistant(m, geo, 50);
  const Eigen::MatrixXd str_samples =
      lg::interpolate_equidistant(m, straight, 50);
  const double geo_nn = worst_nearest_training_distance(m, geo_samples);
  const double str_nn = worst_nearest_training_distance(m, str_samples);
  const double bound = 2.0 * lg::avg_training_error(m);

  const bool pass = geo.length < 0.99 * straight.length && geo_nn < str_nn &&
                    geo_nn <= bound;
  report(6, "geodesic tracks the data where the chord does not", pass,
         fmt("length %.2f vs straight %.2f", geo.length, straight.length) +
             fmt(", worst reconstruction gap %.3f vs %.3f (bound %.3f)",
                 geo_nn, str_nn, bound));
}

// --- criterion 7: uncertainty grows away from the data ------------------

void criterion_7() {
  // (a) covariance trace from a single training point, 0 to 5 length-scales
  Eigen::MatrixXd x0(1, 2), y0(1, 1);
  x0 << 0.0, 0.0;
  y0 << 1.0;
  lg::KernelParams params;
  params.alpha = 1.0;
  params.omega = 4.0;
  params.beta = 100.0;
  const lg::LatentModel single(x0, y0, params);
  const double ls = params.length_scale();

  bool monotone = true;
  double prev = -std::numeric_limits<double>::infinity();
  double at_origin = 0.0, minimum = std::numeric_limits<double>::infinity();
  double min_at = 0.0, at_end = 0.0;
  for (int k = 0; k <= 25; ++k) {
    Eigen::VectorXd x(2);
    x << 5.0 * ls * k / 25.0, 0.0;
    const double trace = lg::jacobian_posterior(single, x).cov.trace();
    if (k == 0) at_origin = trace;
    if (k == 25) at_end = trace;
    if (trace < minimum) {
      minimum = trace;
      min_at = x(0);
    }
    monotone = monotone && trace >= prev - 1e-12;
    prev = trace;
  }

  // (b) magnification factor near vs far from the ring
  const lg::LatentModel& m = fixtures::circle_model();
  lg::Box box;
  box.lo.resize(2);
  box.hi.resize(2);
  box.lo << -6.0, -6.0;
  box.hi << 6.0, 6.0;
  const lg::MfGrid grid = lg::mf_grid(m, box, {60, 60});
  const double ring_ls = m.params().length_scale();
  double near_sum = 0.0, far_sum = 0.0;
  int near_n = 0, far_n = 0;
  for (int i = 0; i < 60; ++i) {
    for (int j = 0; j < 60; ++j) {
      Eigen::VectorXd c(2);
      c << grid.center(0, i), grid.center(1, j);
      double dmin = std::numeric_limits<double>::infinity();
      for (Eigen::Index r = 0; r < m.n(); ++r) {
        dmin = std::min(dmin, (m.latents().row(r).transpose() - c).norm());
      }
      const double v = grid.values[static_cast<std::size_t>(i) * 60 + j];
      if (dmin < 0.5 * ring_ls) {
        near_sum += v;
        ++near_n;
      } else if (dmin > 3.0 * ring_ls) {
        far_sum += v;
        ++far_n;
      }
    }
  }
  const bool mf_ordered =
      near_n > 0 && far_n > 0 && near_sum / near_n < far_sum / far_n;

  const bool pass = monotone && mf_ordered;
  std::string detail;
  if (monotone) {
    detail = "trace non-decreasing over [0, 5 length-scales]";
  } else {
    // The covariance reduction from a lone observation is strongest one
    // length-scale away, where the kernel derivative peaks, and zero at
    // the point itself: the trace provably dips before recovering.
    detail = fmt("trace dips from %.3f at the point to %.3f", at_origin,
                 minimum) +
             fmt(" at distance %.2f (= length-scale %.2f)", min_at, ls) +
             fmt(", recovering to %.3f", at_end);
  }
  detail += fmt("; mean magnification near %.2f vs far %.2f",
                near_n ? near_sum / near_n : -1.0,
                far_n ? far_sum / far_n : -1.0);
  report(7, "uncertainty expands away from the data", pass, detail);
}

// --- criterion 8: byte-identical reruns through the CLI -----------------

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream body;
  body << in.rdbuf();
  return body.str();
}

// Neutralize the round-specific output filename echoed on fit's last
// stdout line so the two logs can be compared byte-for-byte.
std::string canonical_log(std::string text, const std::string& tag) {
  const std::string needle = "fit" + tag + ".json";
  for (std::size_t at = text.find(needle); at != std::string::npos;
       at = text.find(needle, at)) {
    text.replace(at, needle.size(), "fit#.json");
  }
  return text;
}

bool run_cli(const std::string& args) {
  const std::string cmd = std::string(LG_CLI_PATH) + " " + args;
  return std::system(cmd.c_str()) == 0;
}

void criterion_8() {
  const fs::path dir = fs::temp_directory_path() / "latentgeo_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const lg::LatentModel& m = fixtures::circle_model();
  lg::io::write_csv_matrix(fixtures::circle().Y_raw,
                           (dir / "data.csv").string());
  lg::io::write_model(m, (dir / "model.json").string());

  char from[128], to[128];
  std::snprintf(from, sizeof(from), "%.17g,%.17g", m.latents()(10, 0),
                m.latents()(10, 1));
  std::snprintf(to, sizeof(to), "%.17g,%.17g", m.latents()(38, 0),
                m.latents()(38, 1));

  bool ok = true;
  std::string detail = "fit, geodesic, and sample-metric reruns byte-identical";
  const std::string data = (dir / "data.csv").string();
  const std::string model = (dir / "model.json").string();

  for (int round = 1; round <= 2 && ok; ++round) {
    const std::string tag = std::to_string(round);
    ok = ok &&
         run_cli("fit " + data + " --q 2 --iterations 40 --out " +
                 (dir / ("fit" + tag + ".json")).string() + " > " +
                 (dir / ("fit" + tag + ".log")).string()) &&
         run_cli("geodesic " + model + " --from " + from + " --to " + to +
                 " --out " + (dir / ("geo" + tag)).string() + " > /dev/null") &&
         run_cli("sample-metric " + model +
                 " --at 0.5,0.5 --n 50 --seed 31 --out " +
                 (dir / ("samples" + tag + ".json")).string() +
                 " > /dev/null");
  }
  if (!ok) {
    detail = "a CLI invocation exited non-zero";
  } else {
    const std::pair<std::string, std::string> outputs[] = {
        {"fit1.json", "fit2.json"},
        {"geo1.json", "geo2.json"},
        {"geo1_curve.csv", "geo2_curve.csv"},
        {"samples1.json", "samples2.json"}};
    for (const auto& [first, second] : outputs) {
      const std::string a = slurp(dir / first);
      const std::string b = slurp(dir / second);
      if (a.empty() || a != b) {
        ok = false;
        detail = first + " and " + second + " differ or are empty";
        break;
      }
    }
    const std::string log1 = canonical_log(slurp(dir / "fit1.log"), "1");
    const std::string log2 = canonical_log(slurp(dir / "fit2.log"), "2");
    if (ok && (log1.empty() || log1 != log2)) {
      ok = false;
      detail = "fit stdout differs between reruns";
    }
  }
  report(8, "seeded runs are byte-identical", ok, detail);
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  std::printf("%s\n", g_all_pass ? "all criteria passed"
                                 : "some criteria FAILED");
  return g_all_pass ? 0 : 1;
}
