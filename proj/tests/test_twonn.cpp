#include <attainable/twonn.hpp>

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <sstream>

using namespace attainable;

namespace {

RowMat uniform_cube(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RowMat pts(n, d);
  for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = u(rng);
  return pts;
}

RowMat flat_torus(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  RowMat pts(n, 4);
  for (int i = 0; i < n; ++i) {
    const double a = angle(rng), b = angle(rng);
    pts.row(i) << std::cos(a), std::sin(a), std::cos(b), std::sin(b);
  }
  return pts;
}

RowMat embedded_line(int n, int ambient, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec offset(ambient), dir(ambient);
  for (int k = 0; k < ambient; ++k) {
    offset(k) = g(rng);
    dir(k) = g(rng);
  }
  RowMat pts(n, ambient);
  for (int i = 0; i < n; ++i) pts.row(i) = (offset + u(rng) * dir).transpose();
  return pts;
}

Mat random_orthogonal(int d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Mat m(d, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  Eigen::HouseholderQR<Mat> qr(m);
  return qr.householderQ();
}

}  // namespace

TEST_CASE("collinear hand example") {
  RowMat pts(3, 1);
  pts << 0.0, 1.0, 2.0;
  const auto mus = two_nn_ratios(PointCloud(pts));
  REQUIRE(mus.size() == 3);
  CHECK(mus[0] == 2.0);
  CHECK(mus[1] == 1.0);
  CHECK(mus[2] == 2.0);
}

TEST_CASE("ratios are at least one and follow the Pareto law on a segment") {
  const auto mus = two_nn_ratios(PointCloud(uniform_cube(10000, 1, 3)));
  double mean_log = 0.0;
  for (double m : mus) {
    REQUIRE(m >= 1.0);
    mean_log += std::log(m);
  }
  mean_log /= static_cast<double>(mus.size());
  CHECK(std::abs(mean_log - 1.0) < 0.05);
  for (double m : two_nn_ratios(PointCloud(flat_torus(3000, 4)))) REQUIRE(m >= 1.0);
}

TEST_CASE("duplicates and tiny clouds") {
  RowMat pts(5, 2);
  pts << 0, 0, 1, 0, 0, 0, 0, 2, 1, 0;
  const PointCloud cloud(pts);
  CHECK(cloud.size() == 3);
  CHECK(cloud.duplicates_removed() == 2);
  CHECK(cloud.points().row(0) == pts.row(0));
  CHECK(cloud.points().row(1) == pts.row(1));
  CHECK(cloud.points().row(2) == pts.row(3));
  RowMat two(2, 2);
  two << 0, 0, 1, 1;
  CHECK_THROWS_AS(two_nn_ratios(PointCloud(two)), DegenerateError);
  RowMat bad(3, 1);
  bad << 0, std::nan(""), 1;
  CHECK_THROWS_AS(PointCloud(bad), DomainError);
}

TEST_CASE("fit recovers the Pareto exponent") {
  Rng rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> mus(100000);
  for (double& m : mus) m = std::pow(1.0 - u(rng), -1.0 / 2.0);
  CHECK(std::abs(fit_dimension(mus) - 2.0) < 0.05);
  CHECK(std::abs(fit_dimension(mus, 0.1) - 2.0) < 0.1);
  CHECK_THROWS_AS(fit_dimension(std::vector<double>(10, 1.0)), DegenerateError);
  CHECK_THROWS_AS(fit_dimension({}), DegenerateError);
  CHECK_THROWS_AS(fit_dimension(mus, 0.5), DomainError);
  CHECK_THROWS_AS(fit_dimension(mus, -0.1), DomainError);
}

TEST_CASE("torus has dimension two") {
  const double d = estimate_dimension(PointCloud(flat_torus(10000, 5)));
  INFO("torus estimate " << d);
  CHECK(std::abs(d - 2.0) < 0.3);
}

TEST_CASE("confidence intervals") {
  const PointCloud cube(uniform_cube(20000, 5, 6));
  const auto single = estimate_with_ci(cube, 1, 2000, 0.0, 1);
  CHECK(single.ci_low == single.d_hat);
  CHECK(single.ci_high == single.d_hat);

  const auto est = estimate_with_ci(cube, 10, 5000, 0.0, 2);
  INFO("5-cube " << est.d_hat);
  CHECK(std::abs(est.d_hat - 5.0) < 0.5);
  CHECK(est.ci_low <= est.d_hat);
  CHECK(est.d_hat <= est.ci_high);
  CHECK(est.estimates.size() == 10);

  const auto line = estimate_with_ci(PointCloud(embedded_line(20000, 10, 7)), 10, 5000, 0.0, 3);
  INFO("line " << line.d_hat);
  CHECK(std::abs(line.d_hat - 1.0) < 0.15);

  const auto again = estimate_with_ci(cube, 10, 5000, 0.0, 2);
  CHECK(again.estimates == est.estimates);
  CHECK_THROWS_AS(estimate_with_ci(cube, 0, 100, 0.0, 1), DomainError);
  CHECK_THROWS_AS(estimate_with_ci(cube, 2, 20001, 0.0, 1), DomainError);
}

TEST_CASE("ratios are invariant under isometries and scaling") {
  const RowMat pts = uniform_cube(2000, 3, 9);
  const auto base = two_nn_ratios(PointCloud(pts));
  const Mat q = random_orthogonal(3, 4);
  RowMat moved = pts * q.transpose();
  moved.rowwise() += Eigen::RowVector3d(5.0, -2.0, 0.5);
  const auto rotated = two_nn_ratios(PointCloud(moved));
  const RowMat scaled4 = 4.0 * pts;
  const RowMat scaled = 3.7 * pts;
  const auto by4 = two_nn_ratios(PointCloud(scaled4));
  const auto by37 = two_nn_ratios(PointCloud(scaled));
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(std::abs(rotated[i] - base[i]) < 1e-9);
    CHECK(by4[i] == base[i]);
    CHECK(std::abs(by37[i] - base[i]) < 1e-12 * base[i]);
  }
}

TEST_CASE("estimates increase with cube dimension") {
  double previous = 0.0;
  for (int d : {1, 2, 3, 5}) {
    const double est = estimate_dimension(PointCloud(uniform_cube(20000, d, 100 + d)));
    INFO("d = " << d << " estimate " << est);
    CHECK(est > previous);
    CHECK(std::abs(est - d) < 0.5);
    previous = est;
  }
}

TEST_CASE("k-d tree and brute force agree, including ties") {
  const RowMat random = uniform_cube(3000, 3, 12);
  RowMat lattice_rows(900, 2);
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 30; ++j) lattice_rows.row(i * 30 + j) << (i * 7 % 30), j;
  const RowMat lattice = lattice_rows;
  for (const RowMat* pts : {&random, &lattice}) {
    const auto brute = two_nearest_brute_force(*pts);
    const KdTree tree(*pts);
    for (Eigen::Index i = 0; i < pts->rows(); ++i) {
      const auto q = tree.query_two(i);
      REQUIRE(q.first == brute[i].first);
      REQUIRE(q.second == brute[i].second);
      REQUIRE(q.d1 == brute[i].d1);
      REQUIRE(q.d2 == brute[i].d2);
    }
  }
  // Ties resolve to the smaller index.
  RowMat cross(5, 2);
  cross << 0, 0, 1, 0, -1, 0, 0, 1, 0, -1;
  const auto nn = two_nearest_brute_force(cross);
  CHECK(nn[0].first == 1);
  CHECK(nn[0].second == 2);
  CHECK(KdTree(cross, 1).query_two(0).first == 1);
  CHECK(KdTree(cross, 1).query_two(0).second == 2);
}

TEST_CASE("point csv reader") {
  std::istringstream with_header("x,y\n1,2\n3,4\r\n\n5,6\n");
  const RowMat pts = read_point_csv(with_header);
  CHECK(pts.rows() == 3);
  CHECK(pts(2, 1) == 6.0);

  std::istringstream malformed("1,2\n3,abc\n");
  try {
    read_point_csv(malformed);
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::istringstream ragged("1,2\n3,4,5\n");
  CHECK_THROWS_WITH(read_point_csv(ragged), Catch::Matchers::ContainsSubstring("line 2"));
  std::istringstream empty("");
  CHECK_THROWS_WITH(read_point_csv(empty), Catch::Matchers::ContainsSubstring("no data rows"));
  CHECK_THROWS_AS(read_point_csv(std::string("/nonexistent/cloud.csv")), ConfigError);
}
