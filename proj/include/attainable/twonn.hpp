#pragma once

// TWO-NN intrinsic dimension estimator.
//
// For every point the ratio mu = r2 / r1 of its second to first nearest-neighbour distance is
// Pareto(d) distributed on a d-dimensional manifold, so -log(1 - F(mu)) = d log(mu). The
// dimension is the slope of a line through the origin fitted to the sorted ratios.

#include "errors.hpp"
#include "types.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace attainable {

/// N points of common dimension, finite and pairwise distinct.
class PointCloud {
 public:
  PointCloud() = default;

  /// Copies the rows, removing exact duplicates. Keeps first occurrences in input order.
  explicit PointCloud(const RowMat& rows) : dim_(static_cast<int>(rows.cols())) {
    if (!rows.allFinite()) throw DomainError("PointCloud: non-finite coordinate");
    std::vector<Eigen::Index> order(rows.rows());
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    auto less = [&rows](Eigen::Index a, Eigen::Index b) {
      for (Eigen::Index c = 0; c < rows.cols(); ++c) {
        if (rows(a, c) < rows(b, c)) return true;
        if (rows(b, c) < rows(a, c)) return false;
      }
      return a < b;
    };
    std::sort(order.begin(), order.end(), less);
    std::vector<char> keep(rows.rows(), 1);
    for (std::size_t i = 1; i < order.size(); ++i)
      if (rows.row(order[i]) == rows.row(order[i - 1])) keep[order[i]] = 0;
    const auto kept = std::count(keep.begin(), keep.end(), char{1});
    points_.resize(kept, rows.cols());
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
      if (keep[i]) points_.row(r++) = rows.row(i);
    duplicates_ = static_cast<int>(rows.rows() - kept);
  }

  explicit PointCloud(const std::vector<Vec>& points) : PointCloud(to_rows(points)) {}

  Eigen::Index size() const { return points_.rows(); }
  int dim() const { return dim_; }
  int duplicates_removed() const { return duplicates_; }
  const RowMat& points() const { return points_; }

  PointCloud subset(const std::vector<Eigen::Index>& idx) const {
    PointCloud out;
    out.dim_ = dim_;
    out.points_.resize(static_cast<Eigen::Index>(idx.size()), points_.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.points_.row(static_cast<Eigen::Index>(i)) = points_.row(idx[i]);
    return out;
  }

 private:
  static RowMat to_rows(const std::vector<Vec>& points) {
    if (points.empty()) return RowMat(0, 0);
    RowMat rows(static_cast<Eigen::Index>(points.size()), points.front().size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      detail::require_dims(points[i].size() == rows.cols(), "PointCloud: ragged points");
      rows.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
    }
    return rows;
  }

  RowMat points_;
  int dim_ = 0;
  int duplicates_ = 0;
};

struct DimensionEstimate {
  double d_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int subsamples = 0;
  int subsample_size = 0;
  std::vector<double> estimates;
};

/// Indices and squared distances of the two nearest other points.
struct TwoNeighbours {
  Eigen::Index first = -1;
  Eigen::Index second = -1;
  double d1 = 0.0;  // squared
  double d2 = 0.0;  // squared
};

namespace detail {

/// Keeps the two best (distance, index) candidates; ties go to the smaller index.
struct BestTwo {
  double d1 = std::numeric_limits<double>::infinity();
  double d2 = std::numeric_limits<double>::infinity();
  Eigen::Index i1 = -1;
  Eigen::Index i2 = -1;

  void offer(double d, Eigen::Index i) {
    if (d < d1 || (d == d1 && i < i1)) {
      d2 = d1;
      i2 = i1;
      d1 = d;
      i1 = i;
    } else if (d < d2 || (d == d2 && i < i2)) {
      d2 = d;
      i2 = i;
    }
  }
  TwoNeighbours result() const { return {i1, i2, d1, d2}; }
};

}  // namespace detail

/// Exact O(N^2) search.
inline std::vector<TwoNeighbours> two_nearest_brute_force(const RowMat& pts) {
  const Eigen::Index n = pts.rows();
  std::vector<TwoNeighbours> out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    detail::BestTwo best;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      best.offer((pts.row(i) - pts.row(j)).squaredNorm(), j);
    }
    out[i] = best.result();
  }
  return out;
}

/// Exact k-d tree for two-nearest-neighbour queries over a fixed point set.
class KdTree {
 public:
  explicit KdTree(const RowMat& pts, int leaf_size = 12) : pts_(pts), leaf_size_(leaf_size) {
    index_.resize(pts.rows());
    std::iota(index_.begin(), index_.end(), Eigen::Index{0});
    if (pts.rows() > 0) build(0, static_cast<Eigen::Index>(index_.size()));
  }

  TwoNeighbours query_two(Eigen::Index self) const {
    detail::BestTwo best;
    search(0, self, best);
    return best.result();
  }

 private:
  struct Node {
    Eigen::Index begin, end;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    int left = -1, right = -1;
  };

  int build(Eigen::Index begin, Eigen::Index end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= leaf_size_) return id;
    // Split on the coordinate of largest spread at the median.
    const Eigen::Index d = pts_.cols();
    int axis = 0;
    double spread = -1.0;
    for (Eigen::Index c = 0; c < d; ++c) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (Eigen::Index k = begin; k < end; ++k) {
        lo = std::min(lo, pts_(index_[k], c));
        hi = std::max(hi, pts_(index_[k], c));
      }
      if (hi - lo > spread) {
        spread = hi - lo;
        axis = static_cast<int>(c);
      }
    }
    if (spread <= 0.0) return id;
    const Eigen::Index mid = begin + (end - begin) / 2;
    std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                     [&](Eigen::Index a, Eigen::Index b) { return pts_(a, axis) < pts_(b, axis); });
    const double split = pts_(index_[mid], axis);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(int node_id, Eigen::Index self, detail::BestTwo& best) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      for (Eigen::Index k = node.begin; k < node.end; ++k) {
        const Eigen::Index j = index_[k];
        if (j == self) continue;
        best.offer((pts_.row(self) - pts_.row(j)).squaredNorm(), j);
      }
      return;
    }
    const double diff = pts_(self, node.axis) - node.split;
    const int near = diff < 0.0 ? node.left : node.right;
    const int far = diff < 0.0 ? node.right : node.left;
    search(near, self, best);
    // Points equal to the split value may sit on either side, so only strictly farther planes prune.
    if (diff * diff <= best.d2) search(far, self, best);
  }

  const RowMat& pts_;
  int leaf_size_;
  std::vector<Eigen::Index> index_;
  std::vector<Node> nodes_;
};

inline constexpr Eigen::Index kBruteForceLimit = 20000;

inline std::vector<TwoNeighbours> two_nearest(const RowMat& pts) {
  if (pts.rows() < kBruteForceLimit) return two_nearest_brute_force(pts);
  const KdTree tree(pts);
  std::vector<TwoNeighbours> out(pts.rows());
  for (Eigen::Index i = 0; i < pts.rows(); ++i) out[i] = tree.query_two(i);
  return out;
}

/// mu_i = r_{i,2} / r_{i,1} for every point.
inline std::vector<double> two_nn_ratios(const PointCloud& cloud) {
  if (cloud.size() < 3) throw DegenerateError("two_nn_ratios: need at least 3 distinct points");
  const auto nn = two_nearest(cloud.points());
  std::vector<double> mus(nn.size());
  for (std::size_t i = 0; i < nn.size(); ++i) {
    if (!(nn[i].d1 > 0.0)) throw DegenerateError("two_nn_ratios: zero nearest-neighbour distance");
    mus[i] = std::sqrt(nn[i].d2 / nn[i].d1);
  }
  return mus;
}

/// Slope through the origin of -log(1 - i/(N+1)) against log(mu_(i)), dropping the largest
/// trim_fraction of the sorted ratios.
inline double fit_dimension(std::vector<double> mus, double trim_fraction = 0.0) {
  if (mus.empty()) throw DegenerateError("fit_dimension: no ratios");
  if (!(trim_fraction >= 0.0 && trim_fraction < 0.5)) throw DomainError("fit_dimension: trim_fraction must be in [0, 0.5)");
  std::sort(mus.begin(), mus.end());
  const std::size_t n = mus.size();
  const auto keep = n - static_cast<std::size_t>(std::floor(trim_fraction * static_cast<double>(n)));
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    const double x = std::log(mus[i]);
    const double y = -std::log(1.0 - static_cast<double>(i + 1) / static_cast<double>(n + 1));
    sxy += x * y;
    sxx += x * x;
  }
  if (!(sxx > 0.0)) throw DegenerateError("fit_dimension: all ratios equal to 1");
  return sxy / sxx;
}

inline double estimate_dimension(const PointCloud& cloud, double trim_fraction = 0.0) {
  return fit_dimension(two_nn_ratios(cloud), trim_fraction);
}

/// Repeated uniform subsamples without replacement; d_hat is the mean and the interval is
/// mean +- 1.96 sd / sqrt(subsamples).
inline DimensionEstimate estimate_with_ci(const PointCloud& cloud, int subsamples, int subsample_size,
                                          double trim_fraction, std::uint64_t seed) {
  if (subsamples < 1) throw DomainError("estimate_with_ci: subsamples must be >= 1");
  if (subsample_size < 3 || subsample_size > cloud.size())
    throw DomainError("estimate_with_ci: subsample_size must be in [3, N]");
  Rng rng(seed);
  std::vector<Eigen::Index> perm(cloud.size());
  DimensionEstimate est;
  est.subsamples = subsamples;
  est.subsample_size = subsample_size;
  for (int s = 0; s < subsamples; ++s) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    // Partial Fisher-Yates: the first subsample_size entries are a uniform draw.
    for (Eigen::Index i = 0; i < subsample_size; ++i) {
      std::uniform_int_distribution<Eigen::Index> pick(i, cloud.size() - 1);
      std::swap(perm[i], perm[pick(rng)]);
    }
    std::vector<Eigen::Index> idx(perm.begin(), perm.begin() + subsample_size);
    est.estimates.push_back(estimate_dimension(cloud.subset(idx), trim_fraction));
  }
  const double mean = std::accumulate(est.estimates.begin(), est.estimates.end(), 0.0) / subsamples;
  double var = 0.0;
  for (double e : est.estimates) var += (e - mean) * (e - mean);
  const double sd = subsamples > 1 ? std::sqrt(var / (subsamples - 1)) : 0.0;
  const double half = 1.96 * sd / std::sqrt(static_cast<double>(subsamples));
  est.d_hat = mean;
  est.ci_low = mean - half;
  est.ci_high = mean + half;
  return est;
}

// ---------------------------------------------------------------------------
// CSV point clouds: one point per row, comma separated. A first row that does not parse as
// numbers is treated as a header.

inline RowMat read_point_csv(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) numeric = false;
        row.push_back(v);
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (rows.empty() && width == 0) {
        width = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',') + 1);
        continue;
      }
      throw ConfigError("point csv: malformed value on line " + std::to_string(line_no));
    }
    if (width == 0) width = row.size();
    if (row.size() != width) throw ConfigError("point csv: wrong column count on line " + std::to_string(line_no));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("point csv: no data rows");
  RowMat out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return out;
}

inline RowMat read_point_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path);
  return read_point_csv(is);
}

}  // namespace attainable
