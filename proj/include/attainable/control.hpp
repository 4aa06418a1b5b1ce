#pragma once

// Kalman reachability of linear systems  ds/dt = A s + B u.

#include "errors.hpp"
#include "types.hpp"

#include <vector>

namespace attainable {

struct LinearSystem {
  Mat a;
  Mat b;

  LinearSystem(Mat a_, Mat b_) : a(std::move(a_)), b(std::move(b_)) {
    detail::require_dims(a.rows() == a.cols(), "LinearSystem: A must be square");
    detail::require_dims(b.rows() == a.rows() && b.cols() >= 1, "LinearSystem: B rows must match A");
    if (!a.allFinite() || !b.allFinite()) throw DomainError("LinearSystem: non-finite entries");
  }
  int state_dim() const { return static_cast<int>(a.rows()); }
  int input_dim() const { return static_cast<int>(b.cols()); }
};

struct ControllabilityReport {
  int rank = 0;
  bool full = false;
  std::vector<double> singular_values;
};

/// [B, AB, A^2 B, ..., A^{ds-1} B] by repeated multiplication.
inline Mat controllability_matrix(const LinearSystem& sys) {
  const int d = sys.state_dim();
  const int m = sys.input_dim();
  Mat c(d, static_cast<Eigen::Index>(d) * m);
  Mat block = sys.b;
  for (int k = 0; k < d; ++k) {
    if (k > 0) block = sys.a * block;
    if (!block.allFinite()) throw DomainError("controllability_matrix: overflow at power " + std::to_string(k));
    c.middleCols(static_cast<Eigen::Index>(k) * m, m) = block;
  }
  return c;
}

/// Numerical rank counts singular values above tol * sigma_max * max(rows, cols).
inline ControllabilityReport is_fully_reachable(const LinearSystem& sys, double tol = 1e-10) {
  if (!(tol > 0.0)) throw DomainError("is_fully_reachable: tol must be positive");
  const Mat c = controllability_matrix(sys);
  Eigen::JacobiSVD<Mat> svd(c);
  const Vec sv = svd.singularValues();
  if (!sv.allFinite()) throw DegenerateError("is_fully_reachable: SVD did not converge");
  ControllabilityReport report;
  report.singular_values.assign(sv.data(), sv.data() + sv.size());
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  const double threshold = tol * smax * static_cast<double>(std::max(c.rows(), c.cols()));
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > threshold && sv(i) > 0.0) ++report.rank;
  report.full = report.rank == sys.state_dim();
  return report;
}

/// Orthonormal basis of the reachable subspace (columns), i.e. the range of the
/// controllability matrix.
inline Mat reachable_subspace(const LinearSystem& sys, double tol = 1e-10) {
  const Mat c = controllability_matrix(sys);
  Eigen::JacobiSVD<Mat> svd(c, Eigen::ComputeThinU);
  const int rank = is_fully_reachable(sys, tol).rank;
  return svd.matrixU().leftCols(rank);
}

}  // namespace attainable
