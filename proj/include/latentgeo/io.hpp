#pragma once

#include <Eigen/Dense>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentgeo/common.hpp"
#include "latentgeo/geodesic.hpp"
#include "latentgeo/geometry.hpp"
#include "latentgeo/gp_model.hpp"

namespace latentgeo {
namespace io {

/// Round-trippable decimal rendering of a double (17 significant digits).
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.16e", v);
  return buf;
}

namespace detail {

inline void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) {
    throw NumericalError(std::string(what) + ": non-finite values");
  }
}

inline std::string json_array(const double* data, Eigen::Index n) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i) out += ", ";
    out += format_double(data[i]);
  }
  out += "]";
  return out;
}

/// Row-major flattening of a matrix as a JSON array.
inline std::string json_flat_rowmajor(const Eigen::MatrixXd& m) {
  std::string out = "[";
  bool first = true;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (!first) out += ", ";
      first = false;
      out += format_double(m(i, j));
    }
  }
  out += "]";
  return out;
}

/// Matrix as a JSON array of row arrays.
inline std::string json_nested(const Eigen::MatrixXd& m) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (i) out += ", ";
    Eigen::RowVectorXd row = m.row(i);
    out += json_array(row.data(), row.size());
  }
  out += "]";
  return out;
}

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open for writing: " + path);
  out << body;
  if (!out) throw InputError("write failed: " + path);
}

inline nlohmann::json parse_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("invalid JSON in " + path + ": " + e.what());
  }
}

inline Eigen::MatrixXd matrix_from_flat(const std::vector<double>& flat,
                                        Eigen::Index rows, Eigen::Index cols,
                                        const char* what) {
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) {
    throw InputError(std::string(what) + ": element count mismatch");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      m(i, j) = flat[static_cast<std::size_t>(i * cols + j)];
    }
  }
  if (!m.allFinite()) {
    throw InputError(std::string(what) + ": non-finite values");
  }
  return m;
}

}  // namespace detail

/// Serialize a fitted model. X is flat row-major, Y is the centered
/// observation block flat row-major, Y_mean the per-column mean removed.
inline void write_model(const LatentModel& m, const std::string& path) {
  detail::require_finite(m.latents(), "model latents");
  detail::require_finite(m.observations(), "model observations");
  std::string body = "{\n";
  body += "  \"q\": " + std::to_string(m.q()) + ",\n";
  body += "  \"params\": {\n";
  body += "    \"alpha\": " + format_double(m.params().alpha) + ",\n";
  body += "    \"omega\": " + format_double(m.params().omega) + ",\n";
  body += "    \"beta\": " + format_double(m.params().beta) + "\n";
  body += "  },\n";
  body += "  \"X\": " + detail::json_flat_rowmajor(m.latents()) + ",\n";
  const Eigen::VectorXd& mean = m.observation_mean();
  body += "  \"Y_mean\": " + detail::json_array(mean.data(), mean.size()) +
          ",\n";
  body += "  \"Y\": " + detail::json_flat_rowmajor(m.observations()) + "\n";
  body += "}\n";
  detail::write_text_file(path, body);
}

inline LatentModel read_model(const std::string& path) {
  const nlohmann::json doc = detail::parse_json_file(path);
  try {
    const Eigen::Index q = doc.at("q").get<Eigen::Index>();
    if (q < 1) throw InputError("model: q must be positive");
    const auto& par = doc.at("params");
    KernelParams params;
    params.alpha = par.at("alpha").get<double>();
    params.omega = par.at("omega").get<double>();
    params.beta = par.at("beta").get<double>();
    params.validate();

    const auto x_flat = doc.at("X").get<std::vector<double>>();
    if (x_flat.empty() || x_flat.size() % static_cast<std::size_t>(q) != 0) {
      throw InputError("model: |X| must be a positive multiple of q");
    }
    const Eigen::Index n = static_cast<Eigen::Index>(x_flat.size()) / q;

    const auto mean_vec = doc.at("Y_mean").get<std::vector<double>>();
    if (mean_vec.empty()) throw InputError("model: Y_mean must be non-empty");
    const Eigen::Index p = static_cast<Eigen::Index>(mean_vec.size());

    const auto y_flat = doc.at("Y").get<std::vector<double>>();
    const Eigen::MatrixXd x =
        detail::matrix_from_flat(x_flat, n, q, "model X");
    const Eigen::MatrixXd y =
        detail::matrix_from_flat(y_flat, n, p, "model Y");
    Eigen::VectorXd mean(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      mean(j) = mean_vec[static_cast<std::size_t>(j)];
      if (!std::isfinite(mean(j))) {
        throw InputError("model Y_mean: non-finite values");
      }
    }
    return LatentModel(x, y, params, mean);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("invalid model file " + path + ": " + e.what());
  }
}

/// CSV with header "t,x1,...,xq": curve parameter then latent coordinates.
inline void write_curve_csv(const Curve& curve, const std::string& path) {
  detail::require_finite(curve.nodes, "curve nodes");
  std::string body = "t";
  for (Eigen::Index j = 0; j < curve.nodes.cols(); ++j) {
    body += ",x" + std::to_string(j + 1);
  }
  body += "\n";
  for (Eigen::Index i = 0; i < curve.nodes.rows(); ++i) {
    body += format_double(curve.params(i));
    for (Eigen::Index j = 0; j < curve.nodes.cols(); ++j) {
      body += "," + format_double(curve.nodes(i, j));
    }
    body += "\n";
  }
  detail::write_text_file(path, body);
}

/// One extra top-level scalar field in a geodesic report.
struct JsonExtra {
  std::string key;
  double value = 0.0;
};

inline void write_geodesic_json(const GeodesicResult& result,
                                const std::string& path,
                                const std::vector<JsonExtra>& extras = {}) {
  detail::require_finite(result.curve.nodes, "geodesic nodes");
  std::string body = "{\n";
  body += "  \"length\": " + format_double(result.length) + ",\n";
  body += "  \"endpoint_residual\": " +
          format_double(result.endpoint_residual) + ",\n";
  body += std::string("  \"converged\": ") +
          (result.converged ? "true" : "false") + ",\n";
  body += "  \"method\": \"" + result.method + "\",\n";
  body += "  \"relaxation_iterations\": " +
          std::to_string(result.relaxation_iterations) + ",\n";
  body += "  \"newton_iterations\": " +
          std::to_string(result.newton_iterations) + ",\n";
  for (const auto& extra : extras) {
    if (!std::isfinite(extra.value)) {
      throw NumericalError("geodesic report field " + extra.key +
                           ": non-finite value");
    }
    body += "  \"" + extra.key + "\": " + format_double(extra.value) + ",\n";
  }
  body += "  \"nodes\": " + detail::json_nested(result.curve.nodes) + ",\n";
  body += "  \"params\": " +
          detail::json_array(result.curve.params.data(),
                             result.curve.params.size()) +
          "\n";
  body += "}\n";
  detail::write_text_file(path, body);
}

/// CSV "x1,x2,mf" over a two-dimensional grid, row-major with the second
/// coordinate varying fastest.
inline void write_mf_grid_csv(const MfGrid& grid, const std::string& path) {
  if (grid.resolution.size() != 2) {
    throw InputError("mf grid CSV requires a two-dimensional grid");
  }
  const Eigen::Index n0 = grid.resolution[0];
  const Eigen::Index n1 = grid.resolution[1];
  std::string body = "x1,x2,mf\n";
  for (Eigen::Index i = 0; i < n0; ++i) {
    for (Eigen::Index j = 0; j < n1; ++j) {
      const double v = grid.values[static_cast<std::size_t>(i * n1 + j)];
      if (!std::isfinite(v)) {
        throw NumericalError("mf grid: non-finite magnification factor");
      }
      body += format_double(grid.center(0, i)) + "," +
              format_double(grid.center(1, j)) + "," + format_double(v) +
              "\n";
    }
  }
  detail::write_text_file(path, body);
}

/// Square matrices serialized as a JSON array of nested arrays.
inline void write_matrix_list_json(const std::vector<Eigen::MatrixXd>& mats,
                                   const std::string& path) {
  std::string body = "[\n";
  for (std::size_t k = 0; k < mats.size(); ++k) {
    detail::require_finite(mats[k], "matrix list entry");
    if (k) body += ",\n";
    body += "  " + detail::json_nested(mats[k]);
  }
  body += "\n]\n";
  detail::write_text_file(path, body);
}

/// Metric tensors drawn at one latent point, with the draw metadata.
inline void write_metric_samples_json(const Eigen::VectorXd& at,
                                      std::uint64_t seed,
                                      const std::vector<Eigen::MatrixXd>& mats,
                                      const std::string& path) {
  std::string body = "{\n";
  body += "  \"at\": " + detail::json_array(at.data(), at.size()) + ",\n";
  body += "  \"seed\": " + std::to_string(seed) + ",\n";
  body += "  \"n\": " + std::to_string(mats.size()) + ",\n";
  body += "  \"samples\": [\n";
  for (std::size_t k = 0; k < mats.size(); ++k) {
    detail::require_finite(mats[k], "metric sample");
    if (k) body += ",\n";
    body += "    " + detail::json_nested(mats[k]);
  }
  body += "\n  ]\n}\n";
  detail::write_text_file(path, body);
}

/// One line of a verification report.
struct CheckResult {
  std::string name;
  double value = 0.0;      ///< observed worst-case error for the check
  double tolerance = 0.0;  ///< pass iff value <= tolerance
  bool pass = false;
};

inline void write_check_report(const std::vector<CheckResult>& checks,
                               const std::string& path) {
  bool all = true;
  std::string body = "{\n  \"checks\": [\n";
  for (std::size_t k = 0; k < checks.size(); ++k) {
    const auto& c = checks[k];
    all = all && c.pass;
    if (k) body += ",\n";
    body += "    {\"name\": \"" + c.name + "\", ";
    body += "\"value\": " + format_double(c.value) + ", ";
    body += "\"tolerance\": " + format_double(c.tolerance) + ", ";
    body += std::string("\"pass\": ") + (c.pass ? "true" : "false") + "}";
  }
  body += "\n  ],\n";
  body += std::string("  \"all_pass\": ") + (all ? "true" : "false") + "\n}\n";
  detail::write_text_file(path, body);
}

namespace detail {

inline bool parse_row(const std::string& line, std::vector<double>& row) {
  row.clear();
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    const std::string cell = line.substr(
        start, comma == std::string::npos ? std::string::npos : comma - start);
    std::size_t consumed = 0;
    double value = 0.0;
    try {
      value = std::stod(cell, &consumed);
    } catch (const std::exception&) {
      return false;
    }
    // Reject trailing garbage such as "1.5abc", but allow spaces.
    for (std::size_t i = consumed; i < cell.size(); ++i) {
      if (!std::isspace(static_cast<unsigned char>(cell[i]))) return false;
    }
    row.push_back(value);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return true;
}

}  // namespace detail

/// Read a numeric CSV into a matrix. A first line that does not parse as
/// numbers is treated as a header. Error messages carry 1-based line
/// numbers of the offending row.
inline Eigen::MatrixXd read_csv_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open: " + path);

  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t cols = 0;
  bool first_data_line = true;
  std::vector<double> row;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // Skip blank lines anywhere.
    bool blank = true;
    for (char c : line) {
      if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
    }
    if (blank) continue;
    if (!detail::parse_row(line, row)) {
      if (first_data_line) {
        first_data_line = false;  // header line
        continue;
      }
      throw InputError(path + ": line " + std::to_string(line_no) +
                       " is not numeric");
    }
    first_data_line = false;
    if (cols == 0) {
      cols = row.size();
    } else if (row.size() != cols) {
      throw InputError(path + ": line " + std::to_string(line_no) + " has " +
                       std::to_string(row.size()) + " fields, expected " +
                       std::to_string(cols));
    }
    for (double v : row) {
      if (!std::isfinite(v)) {
        throw InputError(path + ": line " + std::to_string(line_no) +
                         " has a non-finite value");
      }
    }
    rows.push_back(row);
  }
  if (rows.empty()) throw InputError(path + ": no numeric rows");

  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
    }
  }
  return m;
}

/// Write a matrix as CSV with an optional header line.
inline void write_csv_matrix(const Eigen::MatrixXd& m, const std::string& path,
                             const std::string& header = "") {
  detail::require_finite(m, "csv matrix");
  std::string body;
  if (!header.empty()) body += header + "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) body += ",";
      body += format_double(m(i, j));
    }
    body += "\n";
  }
  detail::write_text_file(path, body);
}

}  // namespace io
}  // namespace latentgeo
