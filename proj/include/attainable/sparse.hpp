#pragma once

// Sparsification layer  Z' = ReLU(Z + alpha W^T (Z - W Z) - alpha lambda).

#include "errors.hpp"
#include "types.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace attainable {

struct SparseLayer {
  Mat weight;       // n x n
  double alpha = 0.0;
  double lambda1 = 0.0;
  std::optional<Vec> lambda_per_coordinate;  // overrides lambda1 when set

  int width() const { return static_cast<int>(weight.rows()); }

  void validate() const {
    detail::require_dims(weight.rows() == weight.cols(), "SparseLayer: weight must be square");
    if (!weight.allFinite() || !std::isfinite(alpha) || !std::isfinite(lambda1))
      throw DomainError("SparseLayer: non-finite parameter");
    if (alpha < 0.0 || lambda1 < 0.0) throw DomainError("SparseLayer: alpha and lambda1 must be >= 0");
    if (lambda_per_coordinate) {
      detail::require_dims(lambda_per_coordinate->size() == weight.rows(), "SparseLayer: threshold length");
      if (!lambda_per_coordinate->allFinite() || (lambda_per_coordinate->array() < 0.0).any())
        throw DomainError("SparseLayer: thresholds must be finite and >= 0");
    }
  }

  Vec thresholds() const {
    return lambda_per_coordinate ? *lambda_per_coordinate : Vec::Constant(weight.rows(), lambda1);
  }
};

/// Column-wise on a batch (one sample per column).
inline Mat sparse_forward_batch(const SparseLayer& layer, const Mat& z) {
  layer.validate();
  detail::require_dims(z.rows() == layer.weight.rows(), "sparse_forward: input dimension");
  const Mat residual = z - layer.weight * z;
  Mat r = z + layer.alpha * (layer.weight.transpose() * residual);
  r.colwise() -= layer.alpha * layer.thresholds();
  return r.cwiseMax(0.0);
}

inline Vec sparse_forward(const SparseLayer& layer, const Vec& z) {
  return sparse_forward_batch(layer, Mat(z)).col(0);
}

/// Fraction of exactly-zero entries; an empty vector counts as fully sparse.
inline double sparsity_fraction(const Vec& z) {
  if (z.size() == 0) return 1.0;
  return static_cast<double>((z.array() == 0.0).count()) / static_cast<double>(z.size());
}

/// Layer CSV: first line "alpha,lambda1", then n rows of n weights; an optional final row
/// "lambda,<n values>" sets per-coordinate thresholds.
inline SparseLayer load_sparse_layer_csv(std::istream& is) {
  int line_no = 0;
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  auto number = [&line_no](const std::string& cell) {
    try {
      std::size_t used = 0;
      const double v = std::stod(cell, &used);
      if (used == cell.size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("sparse layer csv: bad number '" + cell + "' on line " + std::to_string(line_no));
  };
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("sparse layer csv: empty file");
  line_no = 1;
  const auto head = split(line);
  if (head.size() != 2) throw ConfigError("sparse layer csv: first line must be alpha,lambda1");
  SparseLayer layer;
  layer.alpha = number(head[0]);
  layer.lambda1 = number(head[1]);
  std::vector<std::vector<double>> rows;
  std::optional<Vec> thresholds;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (!cells.empty() && cells[0] == "lambda") {
      Vec t(static_cast<Eigen::Index>(cells.size() - 1));
      for (std::size_t i = 1; i < cells.size(); ++i) t(static_cast<Eigen::Index>(i - 1)) = number(cells[i]);
      thresholds = t;
      continue;
    }
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(number(c));
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  layer.weight.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != n) throw ConfigError("sparse layer csv: weight must be square");
    for (Eigen::Index j = 0; j < n; ++j) layer.weight(i, j) = rows[i][j];
  }
  layer.lambda_per_coordinate = thresholds;
  try {
    layer.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("sparse layer csv: ") + e.what());
  }
  return layer;
}

inline SparseLayer load_sparse_layer_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path);
  return load_sparse_layer_csv(is);
}

}  // namespace attainable
