#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "advbayes/core/random.hpp"
#include "advbayes/core/types.hpp"

namespace advbayes {

/// Column-wise z-scoring fitted on the training rows.
struct Standardizer {
  Vector mean;
  Vector sd;

  static Standardizer fit(const Matrix& X) {
    Standardizer s;
    const double n = static_cast<double>(X.rows());
    s.mean = X.colwise().mean().transpose();
    s.sd = Vector::Ones(X.cols());
    if (X.rows() > 1) {
      for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double v = (X.col(j).array() - s.mean[j]).square().sum() / (n - 1.0);
        // constant columns are centred but left unscaled
        if (v > 0.0) s.sd[j] = std::sqrt(v);
      }
    }
    return s;
  }

  Matrix apply(const Matrix& X) const {
    return ((X.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array()).matrix();
  }
};

struct LoadedDataset {
  Dataset train;
  Dataset test;
  std::vector<std::string> features;
  std::string response;
  /// Set when standardisation was requested.
  std::optional<Standardizer> standardizer;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw DatasetError("csv: non-numeric cell '" + cell + "' at data row " + std::to_string(row + 1) +
                       ", column '" + column + "'");
  }
  return v;
}

}  // namespace detail

/// Reads a numeric CSV with a header row. Returns all rows with `response`
/// as y and every other column as a covariate.
inline Dataset read_csv_dataset(const std::string& path, const std::string& response,
                                std::vector<std::string>* feature_names = nullptr) {
  std::ifstream in(path);
  if (!in) throw DatasetError("csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DatasetError("csv: '" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  const auto it = std::find(header.begin(), header.end(), response);
  if (it == header.end()) throw DatasetError("csv: response column '" + response + "' not found in '" + path + "'");
  const auto response_col = static_cast<std::size_t>(it - header.begin());

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DatasetError("csv: data row " + std::to_string(rows.size() + 1) + " has " +
                         std::to_string(cells.size()) + " cells, header has " + std::to_string(header.size()));
    }
    std::vector<double> r(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) r[j] = detail::parse_cell(cells[j], rows.size(), header[j]);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DatasetError("csv: '" + path + "' has no data rows");

  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(header.size() - 1);
  Matrix X(n, p);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index c = 0;
    for (std::size_t j = 0; j < header.size(); ++j) {
      const double v = rows[static_cast<std::size_t>(i)][j];
      if (j == response_col) {
        y[i] = v;
      } else {
        X(i, c++) = v;
      }
    }
  }
  if (feature_names) {
    feature_names->clear();
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j != response_col) feature_names->push_back(header[j]);
    }
  }
  return Dataset(std::move(X), std::move(y));
}

/// Shuffled train/test split of a CSV; the training share is
/// round(split * n). Standardisation is fitted on the training covariates
/// and reused on the test covariates.
inline LoadedDataset load_dataset(const std::string& path, const std::string& response, double split,
                                  bool standardize, std::uint64_t seed) {
  if (!(split > 0.0 && split < 1.0)) throw InvalidArgument("load_dataset: split must lie in (0, 1)");
  LoadedDataset out;
  out.response = response;
  const Dataset all = read_csv_dataset(path, response, &out.features);
  const std::size_t n = all.rows();
  if (n < 2) throw DatasetError("load_dataset: need at least 2 rows to split");

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng = make_rng(seed, {0x5eedULL});
  std::shuffle(order.begin(), order.end(), rng);

  auto n_train = static_cast<std::size_t>(std::llround(split * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  const auto take = [&](std::size_t begin, std::size_t count) {
    Matrix X(static_cast<Eigen::Index>(count), all.X.cols());
    Vector y(static_cast<Eigen::Index>(count));
    for (std::size_t i = 0; i < count; ++i) {
      X.row(static_cast<Eigen::Index>(i)) = all.X.row(order[begin + i]);
      y[static_cast<Eigen::Index>(i)] = all.y[order[begin + i]];
    }
    return Dataset(std::move(X), std::move(y));
  };
  out.train = take(0, n_train);
  out.test = take(n_train, n - n_train);
  if (standardize) {
    out.standardizer = Standardizer::fit(out.train.X);
    out.train.X = out.standardizer->apply(out.train.X);
    out.test.X = out.standardizer->apply(out.test.X);
  }
  return out;
}

/// Writes covariates x0..x{p-1} followed by y.
inline void write_dataset_csv(std::ostream& os, const Dataset& d, const std::string& response = "y") {
  for (Eigen::Index j = 0; j < d.X.cols(); ++j) os << 'x' << j << ',';
  os << response << '\n';
  os.precision(17);
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.X.cols(); ++j) os << d.X(i, j) << ',';
    os << d.y[i] << '\n';
  }
}

}  // namespace advbayes
