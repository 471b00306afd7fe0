#pragma once

// Plain-text dataset loaders.  One observation per line, comma or whitespace
// separated; blank lines and lines starting with '#' are skipped.

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "uniqtest/curve_fit.hpp"
#include "uniqtest/errors.hpp"
#include "uniqtest/geometry.hpp"

namespace uniqtest {

enum class DatasetKind { circle, sphere, curve, euclidean };
enum class AngleUnit { rad, deg };

/// Numeric rows of a CSV-like file.  Every row must have the same width.
inline std::vector<std::vector<double>> read_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    for (char& c : line)
      if (c == ',' || c == ';' || c == '\t' || c == '\r') c = ' ';
    std::istringstream fields(line);
    std::vector<double> row;
    std::string token;
    while (fields >> token) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(token, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != token.size() || !std::isfinite(v))
        throw DataError(path + ":" + std::to_string(line_no) + ": not a finite number: '" + token + "'");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(rows.front().size()) +
                      " columns, found " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path + ": no data rows");
  return rows;
}

inline std::vector<Angle> load_circle(const std::string& path, AngleUnit unit) {
  const auto rows = read_rows(path);
  if (rows.front().size() != 1) throw DataError(path + ": circle data needs one angle per line");
  const double scale = unit == AngleUnit::deg ? std::numbers::pi / 180.0 : 1.0;
  std::vector<Angle> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.emplace_back(r[0] * scale);
  return out;
}

/// Rows of p+1 coordinates; a row whose norm is off by more than 0.01 is an
/// error, otherwise it is renormalized.
inline std::vector<SpherePoint> load_sphere(const std::string& path) {
  const auto rows = read_rows(path);
  if (rows.front().size() < 2) throw DataError(path + ": sphere data needs at least 2 coordinates per line");
  std::vector<SpherePoint> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(rows[i].data(), static_cast<Eigen::Index>(rows[i].size()));
    if (std::abs(v.norm() - 1.0) > 0.01)
      throw DataError(path + ": row " + std::to_string(i + 1) + " has norm " + std::to_string(v.norm()));
    out.emplace_back(std::move(v));
  }
  return out;
}

inline std::vector<CurvePoint> load_curve(const std::string& path) {
  const auto rows = read_rows(path);
  if (rows.front().size() != 2) throw DataError(path + ": curve data needs two columns t,length");
  std::vector<CurvePoint> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back({r[0], r[1]});
  return out;
}

/// n x q feature matrix.
inline Eigen::MatrixXd load_euclidean(const std::string& path) {
  const auto rows = read_rows(path);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return out;
}

}  // namespace uniqtest
