#include <attainable/lie.hpp>

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace attainable;

namespace {

// Linearised policy with W0 = 0 and a bias input: f(s) = K s + b exactly.
TwoLayerParams affine_policy(const Mat& k, const Vec& b) {
  const int da = static_cast<int>(k.rows());
  const int ds = static_cast<int>(k.cols());
  TwoLayerParams p;
  p.width = da;
  p.state_dim = ds;
  p.action_dim = da;
  p.augment_state = true;
  p.c0 = std::sqrt(static_cast<double>(da)) * Mat::Identity(da, da);
  p.w0 = Vec::Zero(p.weight_count());
  p.w = Vec::Zero(p.weight_count());
  for (int j = 0; j < da; ++j) {
    for (int i = 0; i < ds; ++i) p.w(j * (ds + 1) + i) = 2.0 * k(j, i);
    p.w(j * (ds + 1) + ds) = 2.0 * b(j);
  }
  return p;
}

Vec random_vec(Eigen::Index n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

std::vector<double> log_grid(double lo, double hi, int count) {
  std::vector<double> g;
  for (int i = 0; i < count; ++i) g.push_back(lo * std::pow(hi / lo, i / double(count - 1)));
  return g;
}

ControlAffineSystem custom_1d(std::function<Vec(const Vec&)> drift) {
  ControlAffineSystem sys;
  sys.name = "custom";
  sys.state_dim = 1;
  sys.action_dim = 1;
  sys.drift = std::move(drift);
  sys.control = [](const Vec&) -> Mat { return Mat::Zero(1, 1); };
  sys.reward = [](const Vec&) { return 0.0; };
  return sys;
}

}  // namespace

TEST_CASE("affine test policy is what it claims") {
  const Mat k{{0.5, -1.0, 2.0}};
  const Vec b{{0.25}};
  const auto p = affine_policy(k, b);
  const Vec s{{0.3, 0.7, -1.1}};
  CHECK(std::abs(forward_linearised(p, s)(0) - ((k * s)(0) + 0.25)) < 1e-14);
  CHECK((linearised_jacobian(p, s) - k).norm() < 1e-14);
}

TEST_CASE("first Lie derivative") {
  const auto p = affine_policy(Mat::Zero(1, 3), Vec::Zero(1));
  ControlAffineSystem zero = make_linear_system(Mat::Zero(3, 3), Mat::Ones(3, 1));
  const ClosedLoopField still{&zero, &p, PolicyMode::linearised};
  CHECK(lie_first(still, Vec{{1.0, 2.0, 3.0}}).norm() == 0.0);

  const auto chain = make_chain_integrator(3);
  const auto constant = affine_policy(Mat::Zero(1, 3), Vec::Constant(1, 0.6));
  const ClosedLoopField field{&chain, &constant, PolicyMode::linearised};
  const Vec l1 = lie_first(field, Vec{{0.1, -0.2, 0.3}});
  CHECK(l1(0) == -0.2);
  CHECK(l1(1) == 0.3);
  CHECK(std::abs(l1(2) - 0.6) < 1e-15);

  const auto pend = make_pendulum();
  const auto base = init_params(16, 2, 1, 4);
  const auto params = base.with_weights(sample_family(FamilySpec(base, 1.0), 9));
  const ClosedLoopField pf{&pend, &params, PolicyMode::family};
  const Vec s{{0.4, -0.3}};
  const Vec l = lie_first(pf, s);
  CHECK(l(0) == -0.3);
  CHECK(std::abs(l(1) - (-std::sin(0.4) + forward_family(params, s)(0))) < 1e-15);
  CHECK((pf(s) - l).norm() == 0.0);

  CHECK_THROWS_AS(lie_first(pf, Vec::Zero(3)), DimensionError);
  const auto wrong = init_params(4, 3, 1, 1);
  CHECK_THROWS_AS(lie_first(ClosedLoopField{&pend, &wrong, PolicyMode::family}, s), DimensionError);
}

TEST_CASE("second Lie derivative of linear and constant fields") {
  Mat a(3, 3);
  a << 0.2, -1.0, 0.5,
       0.7, 0.1, -0.3,
       -0.4, 0.6, -0.2;
  const auto lin = make_linear_system(a, Mat::Zero(3, 1));
  const auto p = affine_policy(Mat::Zero(1, 3), Vec::Zero(1));
  const ClosedLoopField field{&lin, &p, PolicyMode::linearised};
  const Vec s{{1.0, -2.0, 0.5}};
  CHECK((lie_second(field, s) - a * (a * s)).norm() <= 1e-14);

  ControlAffineSystem constant;
  constant.name = "constant";
  constant.state_dim = 2;
  constant.action_dim = 1;
  constant.drift = [](const Vec&) { return Vec{{1.5, -0.5}}; };
  constant.control = [](const Vec&) -> Mat { return Mat::Zero(2, 1); };
  const auto params = init_params(8, 2, 1, 3);
  const ClosedLoopField cf{&constant, &params, PolicyMode::family};
  CHECK(lie_second(cf, Vec{{0.3, 0.9}}).norm() == 0.0);
}

TEST_CASE("second Lie derivative matches directional differences of the first") {
  Rng rng(12);
  const auto pend = make_pendulum();
  const auto cart = make_cartpole();
  for (int trial = 0; trial < 20; ++trial) {
    const ControlAffineSystem& sys = trial % 2 ? cart : pend;
    const auto base = init_params(32, sys.state_dim, 1, 50 + trial);
    auto params = base.with_weights(sample_family(FamilySpec(base, 1.0), trial));
    const PolicyMode mode = trial % 4 < 2 ? PolicyMode::family : PolicyMode::linearised;
    const ClosedLoopField field{&sys, &params, mode};
    const Vec s = random_vec(sys.state_dim, rng, 0.5);
    const Vec x = lie_first(field, s);
    const double eps = 1e-5;
    const Vec fd = (lie_first(field, s + eps * x) - lie_first(field, s - eps * x)) / (2 * eps);
    CHECK((lie_second(field, s) - fd).cwiseAbs().maxCoeff() <= 1e-4);
  }
}

TEST_CASE("truncated exponential map") {
  const auto pend = make_pendulum();
  const auto base = init_params(16, 2, 1, 8);
  const auto params = base.with_weights(sample_family(FamilySpec(base, 1.0), 3));
  const ClosedLoopField field{&pend, &params, PolicyMode::linearised};
  const Vec s{{0.5, -0.4}};
  CHECK(exp_map_trunc2(field, s, 0.0) == s);

  const auto chain = make_chain_integrator(3);
  const Mat k{{-0.5, 0.3, -1.2}};
  const auto affine = affine_policy(k, Vec::Zero(1));
  const ClosedLoopField lin{&chain, &affine, PolicyMode::linearised};
  Mat m = chain_drift_matrix(3);
  m.row(2) += k.row(0);
  const Vec s3{{1.0, 0.5, -0.25}};
  for (double t : {0.01, 0.1, 0.7}) {
    const Vec poly = (Mat::Identity(3, 3) + t * m + 0.5 * t * t * m * m) * s3;
    CHECK((exp_map_trunc2(lin, s3, t) - poly).norm() < 1e-12);
  }

  auto error_at = [&](double t) {
    const Vec ref = rollout(pend, FieldPolicy{&field}, s, t, 1e-5).final_state();
    return (exp_map_trunc2(field, s, t) - ref).norm();
  };
  const double e1 = error_at(0.01);
  const double e2 = error_at(0.005);
  INFO("errors " << e1 << " " << e2);
  CHECK(e1 <= 10.0 * std::pow(0.01, 3));
  CHECK(e1 / e2 > 6.0);
  CHECK(e1 / e2 < 10.0);
}

TEST_CASE("truncation error slope") {
  const auto grid = log_grid(0.002, 0.1, 8);
  const auto pend = make_pendulum();
  const auto base = init_params(64, 2, 1, 21);
  for (int i = 0; i < 3; ++i) {
    const auto params = base.with_weights(sample_family(FamilySpec(base, 1.0), i));
    const ClosedLoopField field{&pend, &params, PolicyMode::family};
    const auto fit = truncation_error_slope(field, Vec{{0.3, -0.2}}, grid, 1e-4);
    INFO("slope " << fit.slope);
    CHECK_FALSE(fit.truncated);
    CHECK(fit.slope >= 2.7);
    CHECK(fit.slope <= 3.3);
    CHECK(fit.errors.size() == grid.size());
  }
}

TEST_CASE("nilpotent linear closed loop truncates exactly") {
  const auto chain = make_chain_integrator(3);
  auto params = init_params(32, 3, 1, 2);
  params.w.setZero();
  const ClosedLoopField field{&chain, &params, PolicyMode::family};
  const auto fit = truncation_error_slope(field, Vec{{1.0, -0.5, 0.2}}, log_grid(0.002, 0.1, 8), 1e-4);
  CHECK(fit.truncated);
  CHECK(std::isnan(fit.slope));
}

TEST_CASE("vanishing second-order term still gives a cubic remainder") {
  // ds/dt = 1 + s^2 at s = 0: L^2 s = 2 s (1 + s^2) = 0, the flow is tan(t).
  const auto sys = custom_1d([](const Vec& s) { return Vec::Constant(1, 1.0 + s(0) * s(0)); });
  const auto params = init_params(4, 1, 1, 1);
  const ClosedLoopField field{&sys, &params, PolicyMode::family};
  CHECK(lie_second(field, Vec::Zero(1)).norm() < 1e-9);
  const auto fit = truncation_error_slope(field, Vec::Zero(1), log_grid(0.002, 0.1, 8), 1e-4);
  INFO("slope " << fit.slope);
  CHECK(fit.slope >= 2.7);
}

TEST_CASE("degenerate grids are rejected") {
  const auto pend = make_pendulum();
  const auto params = init_params(4, 2, 1, 1);
  const ClosedLoopField field{&pend, &params, PolicyMode::family};
  const Vec s{{0.1, 0.1}};
  CHECK_THROWS_AS(truncation_error_slope(field, s, {0.01}, 1e-4), DegenerateError);
  CHECK_THROWS_AS(truncation_error_slope(field, s, {0.0, 0.1}, 1e-4), DegenerateError);
  CHECK_THROWS_AS(truncation_error_slope(field, s, {0.1, 0.001}, 1e-4), DegenerateError);
  CHECK_THROWS_AS(truncation_error_slope(field, s, {0.01, 0.1}, 1e-4), DegenerateError);
  CHECK_THROWS_AS(truncation_error_slope(field, s, {0.001, 0.1}, 0.0), DomainError);
}
