#include <attainable/pg.hpp>

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace attainable;

namespace {

ControlAffineSystem integrator_1d() {
  auto sys = make_chain_integrator(1);
  sys.horizon = 1.0;
  sys.discount = 1.0;
  return sys;
}

TrainConfig small_config() {
  TrainConfig c;
  c.eta0 = 1.0;
  c.batch = 8;
  c.steps = 5;
  c.dt = 0.01;
  c.h_window = 0.05;
  c.fd_step = 1e-4;
  c.start_state = Vec::Ones(1);
  c.probe_states = {Vec::Ones(1), Vec::Constant(1, -0.5)};
  return c;
}

double cosine(const Vec& a, const Vec& b) { return a.dot(b) / (a.norm() * b.norm()); }

}  // namespace

TEST_CASE("collect_batch basics") {
  const auto sys = integrator_1d();
  const auto params = init_params(16, 1, 1, 3);
  const auto config = small_config();
  CHECK(collect_batch(sys, params, 0, 1, config).empty());
  CHECK_THROWS_AS(collect_batch(sys, params, -1, 1, config), ConfigError);

  const auto batch = collect_batch(sys, params, 50, 7, config);
  REQUIRE(batch.size() == 50);
  for (const auto& b : batch) {
    CHECK(b.time >= 0.0);
    CHECK(b.time < sys.horizon);
    CHECK(b.action == forward_linearised(params, b.state));
  }
  const auto again = collect_batch(sys, params, 50, 7, config);
  for (std::size_t i = 0; i < batch.size(); ++i) CHECK(batch[i].state == again[i].state);
}

TEST_CASE("noise-free batches lie on the deterministic trajectory") {
  const auto pend = make_pendulum();
  const auto params = init_params(16, 2, 1, 4);
  auto config = small_config();
  config.exploration_scale = 0.0;
  config.start_state = Vec{{0.4, 0.1}};
  const auto traj = rollout_euler(pend, LinearisedPolicy{&params}, config.start_state, pend.horizon, config.dt);
  for (const auto& b : collect_batch(pend, params, 40, 2, config)) {
    const auto k = static_cast<std::size_t>(std::llround(b.time / config.dt));
    REQUIRE(k < traj.size());
    CHECK((b.state - traj.states[k]).norm() < 1e-12);
  }
}

TEST_CASE("batch times are uniform on the horizon") {
  const auto sys = integrator_1d();
  const auto params = init_params(8, 1, 1, 5);
  auto config = small_config();
  config.dt = 1e-3;
  const auto batch = collect_batch(sys, params, 10000, 19, config);
  std::vector<double> times;
  for (const auto& b : batch) times.push_back(b.time / sys.horizon);
  std::sort(times.begin(), times.end());
  double ks = 0.0;
  const double n = static_cast<double>(times.size());
  for (std::size_t i = 0; i < times.size(); ++i)
    ks = std::max({ks, std::abs((i + 1) / n - times[i]), std::abs(times[i] - i / n)});
  INFO("KS statistic " << ks);
  CHECK(ks < 0.05);
}

TEST_CASE("sgd_step with zero reward is the identity") {
  auto sys = integrator_1d();
  sys.reward = [](const Vec&) { return 0.0; };
  const auto params = init_params(16, 1, 1, 6);
  const auto config = small_config();
  const auto batch = collect_batch(sys, params, 4, 1, config);
  CHECK(sgd_step(params, batch, sys, 0.5, config) == params.w);
  CHECK_THROWS_AS(sgd_step(params, {}, sys, 0.5, config), DomainError);
}

TEST_CASE("sgd_step single sample hand evaluation") {
  const auto sys = integrator_1d();
  TwoLayerParams p;
  p.width = 1;
  p.state_dim = 1;
  p.action_dim = 1;
  p.w0 = Vec::Constant(1, 0.4);
  p.c0 = Mat::Constant(1, 1, 0.6);
  p.w = Vec::Constant(1, 0.9);
  const auto config = small_config();
  const double s = 0.8, t = 0.2, eta = 0.3;
  const Vec a = forward_linearised(p, Vec::Constant(1, s));
  const double q_grad =
      grad_a_q(sys, LinearisedPolicy{&p}, Vec::Constant(1, s), a, t, config.fd_step, config.h_window, config.dt)(0);
  const double z = 0.4 * s;
  const double phi = 0.6 * (0.5 * std::erfc(-z / std::sqrt(2.0)) + z * std::exp(-0.5 * z * z) / std::sqrt(2 * M_PI)) * s;
  const Vec next = sgd_step(p, {{Vec::Constant(1, s), a, t}}, sys, eta, config);
  CHECK(std::abs(next(0) - (0.9 + eta * q_grad * phi)) < 1e-14);
  CHECK(next.size() == 1);
}

TEST_CASE("sgd_step is linear in eta and additive over the batch") {
  const auto pend = make_pendulum();
  auto params = init_params(24, 2, 1, 8);
  auto config = small_config();
  config.start_state = Vec{{0.3, -0.2}};
  const auto batch = collect_batch(pend, params, 6, 3, config);
  const Vec d1 = sgd_step(params, batch, pend, 0.1, config) - params.w;
  const Vec d2 = sgd_step(params, batch, pend, 0.2, config) - params.w;
  CHECK((d2 - 2.0 * d1).norm() <= 1e-14 * params.w.norm());

  const std::vector<BatchSample> first(batch.begin(), batch.begin() + 3);
  const std::vector<BatchSample> second(batch.begin() + 3, batch.end());
  const Vec da = sgd_step(params, first, pend, 0.1, config) - params.w;
  const Vec db = sgd_step(params, second, pend, 0.1, config) - params.w;
  CHECK((d1 - 0.5 * (da + db)).norm() <= 1e-14 * params.w.norm());
  CHECK(d1.norm() > 0.0);
}

TEST_CASE("update noise averages out") {
  const auto sys = integrator_1d();
  const auto params = init_params(16, 1, 1, 10);
  auto config = small_config();
  config.batch = 8;
  Vec avg = Vec::Zero(params.weight_count());
  for (int i = 0; i < 64; ++i)
    avg += sgd_step(params, collect_batch(sys, params, 8, derive_seed(1, i), config), sys, 1.0, config) - params.w;
  avg /= 64.0;
  const Vec big = sgd_step(params, collect_batch(sys, params, 1024, 777, config), sys, 1.0, config) - params.w;
  INFO("cosine " << cosine(avg, big));
  CHECK(cosine(avg, big) > 0.95);
}

TEST_CASE("train with zero steps leaves parameters alone") {
  const auto sys = integrator_1d();
  const auto params = init_params(16, 1, 1, 11);
  auto config = small_config();
  config.steps = 0;
  const auto result = train(sys, params, config, 3);
  CHECK(result.params.w == params.w);
  CHECK(result.completed_steps == 0);
  CHECK(result.param_trace.size() == 1);
  CHECK(result.stats.records.size() == config.probe_states.size());
  for (const auto& r : result.stats.records) CHECK(r.step == 0);
}

TEST_CASE("training records consistent statistics") {
  const auto pend = make_pendulum();
  const auto params = init_params(32, 2, 1, 12);
  auto config = small_config();
  config.start_state = Vec{{0.5, 0.0}};
  config.probe_states = {Vec{{0.5, 0.0}}, Vec{{-0.2, 0.3}}};
  config.steps = 4;
  const auto result = train(pend, params, config, 9);
  CHECK(result.completed_steps == 4);
  CHECK(result.param_trace.size() == 5);
  CHECK(result.stats.records.size() == 10);
  CHECK(result.eta == Catch::Approx(1.0 / std::sqrt(32.0)));
  CHECK(result.params.w0 == params.w0);
  CHECK(result.params.c0 == params.c0);
  for (const auto& r : result.stats.records) {
    CHECK(r.tau == Catch::Approx(r.step * result.eta));
    CHECK(r.action.allFinite());
    CHECK(r.jacobian.allFinite());
    CHECK(r.jacobian.rows() == 1);
    CHECK(r.jacobian.cols() == 2);
    CHECK((r.products - r.action * r.action.transpose()).norm() == 0.0);
  }
  const auto again = train(pend, params, config, 9);
  CHECK(again.params.w == result.params.w);
}

TEST_CASE("training improves the return on the integrator") {
  const auto sys = integrator_1d();
  auto config = small_config();
  config.eta0 = 4.0;
  config.steps = 15;
  config.probe_states = {};
  double improvement = 0.0;
  for (int seed = 0; seed < 5; ++seed) {
    const auto params = init_params(64, 1, 1, 200 + seed);
    const auto result = train(sys, params, config, 300 + seed);
    REQUIRE_FALSE(result.divergence);
    std::vector<double> returns;
    for (const Vec& w : result.param_trace) {
      const auto p = params.with_weights(w);
      returns.push_back(value(sys, LinearisedPolicy{&p}, config.start_state, 0.0, 1e-3));
    }
    // Least-squares trend over the steps.
    const double m = static_cast<double>(returns.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < returns.size(); ++k) {
      sx += k;
      sy += returns[k];
      sxx += double(k) * k;
      sxy += k * returns[k];
    }
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    INFO("seed " << seed << " start " << returns.front() << " end " << returns.back() << " slope " << slope);
    CHECK(slope > 0.0);
    CHECK(returns.back() >= returns.front() - 1e-3);
    improvement += returns.back() - returns.front();
  }
  CHECK(improvement > 0.0);
}

TEST_CASE("training stops cleanly on divergence") {
  const auto sys = make_linear_system(Mat::Constant(1, 1, 60.0), Mat::Ones(1, 1));
  const auto params = init_params(8, 1, 1, 1);
  auto config = small_config();
  const auto result = train(sys, params, config, 1);
  CHECK(result.divergence.has_value());
  CHECK(result.completed_steps == 0);
  CHECK(result.param_trace.size() == 1);
}

TEST_CASE("train config validation") {
  const auto sys = integrator_1d();
  const auto params = init_params(8, 1, 1, 1);
  auto config = small_config();
  config.eta0 = 0.0;
  CHECK_THROWS_AS(train(sys, params, config, 1), ConfigError);
  config = small_config();
  config.start_state = Vec::Zero(2);
  CHECK_THROWS_AS(train(sys, params, config, 1), ConfigError);
  config = small_config();
  config.probe_states = {Vec::Zero(3)};
  CHECK_THROWS_AS(train(sys, params, config, 1), ConfigError);
  CHECK(small_config().learning_rate(256) == Catch::Approx(1.0 / 16.0));
  CHECK(small_config().learning_rate(4096) < small_config().learning_rate(256));
}

TEST_CASE("sampled attained sets") {
  const auto chain = make_chain_integrator(3);
  const auto base = init_params(32, 3, 1, 13);
  const FamilySpec family(base, 1.0);
  const Vec s = Vec::Ones(3);

  const auto single = attained_set_sampled(chain, family, s, 0.01, 0.01, 1, 5);
  REQUIRE(single.points.size() == 1);
  const auto p0 = base.with_weights(sample_family(family, derive_seed(5, 0)));
  CHECK(single.points[0] == rollout(chain, FamilyPolicy{&p0}, s, 0.01, 0.01).final_state());
  CHECK(single.provenance[0].source == 0);
  CHECK(single.provenance[0].time == Catch::Approx(0.01));

  const auto set = attained_set_sampled(chain, family, s, 0.5, 0.01, 7, 5);
  CHECK(set.points.size() == 7u * 50u);
  CHECK(set.skipped == 0);
  for (const auto& src : set.provenance) {
    CHECK(src.time > 0.0);
    CHECK(src.time <= 0.5 + 1e-12);
  }

  SamplingOptions threads;
  threads.workers = 3;
  const auto parallel = attained_set_sampled(chain, family, s, 0.5, 0.01, 7, 5, threads);
  REQUIRE(parallel.points.size() == set.points.size());
  for (std::size_t i = 0; i < set.points.size(); ++i) {
    CHECK(parallel.points[i] == set.points[i]);
    CHECK(parallel.provenance[i].source == set.provenance[i].source);
  }

  SamplingOptions fine;
  fine.integration_dt = 0.001;
  const auto refined = attained_set_sampled(chain, family, s, 0.5, 0.01, 2, 5, fine);
  CHECK(refined.points.size() == 100u);

  CHECK_THROWS_AS(attained_set_sampled(chain, family, s, 0.5, 0.03, 2, 5), DomainError);
  CHECK_THROWS_AS(attained_set_sampled(chain, family, s, 0.5, 0.01, 2, 5, SamplingOptions{0.003, 1, PolicyMode::family}),
                  DomainError);
  CHECK_THROWS_AS(attained_set_sampled(chain, family, Vec::Ones(2), 0.5, 0.01, 2, 5), DimensionError);
}

TEST_CASE("divergent policies are skipped and counted") {
  const auto sys = make_linear_system(Mat::Constant(1, 1, 3000.0), Mat::Ones(1, 1));
  const auto base = init_params(8, 1, 1, 1);
  const auto set = attained_set_sampled(sys, FamilySpec(base, 1.0), Vec::Ones(1), 0.1, 0.01, 4, 2);
  CHECK(set.skipped == 4);
  CHECK(set.points.empty());
}

TEST_CASE("trained attained sets") {
  const auto sys = integrator_1d();
  auto config = small_config();
  config.width_schedule = {32};
  config.probe_states = {};
  const Vec s = Vec::Constant(1, 0.5);

  const auto untrained = attained_set_trained(sys, config, s, 0.1, 0.02, 3, 0.0, 44);
  REQUIRE(untrained.points.size() == 15);
  for (int i = 0; i < 3; ++i) {
    const auto init = init_params(32, 1, 1, derive_seed(44, 2 * i));
    const auto traj = rollout(sys, CanonicalPolicy{&init}, s, 0.1, 0.02);
    for (int k = 0; k < 5; ++k) CHECK((untrained.points[i * 5 + k] - traj.states[k + 1]).norm() <= 1e-12);
  }

  const auto trained = attained_set_trained(sys, config, s, 0.1, 0.02, 3, 0.5, 44);
  CHECK(trained.points.size() == 15);
  bool moved = false;
  for (std::size_t i = 0; i < trained.points.size(); ++i) moved = moved || trained.points[i] != untrained.points[i];
  CHECK(moved);
  SamplingOptions threads;
  threads.workers = 2;
  const auto parallel = attained_set_trained(sys, config, s, 0.1, 0.02, 3, 0.5, 44, threads);
  for (std::size_t i = 0; i < trained.points.size(); ++i) CHECK(parallel.points[i] == trained.points[i]);
}

TEST_CASE("csv exports") {
  const auto pend = make_pendulum();
  const auto params = init_params(8, 2, 1, 1);
  auto config = small_config();
  config.start_state = Vec{{0.1, 0.1}};
  config.probe_states = {Vec{{0.1, 0.1}}};
  config.steps = 2;
  const auto result = train(pend, params, config, 1);
  std::ostringstream trace;
  write_stat_trace_csv(result.stats, trace);
  std::istringstream lines(trace.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header == "step,tau,probe,A_0,J_0_0,J_0_1,P_0_0");
  int rows = 0;
  for (std::string line; std::getline(lines, line);) ++rows;
  CHECK(rows == 3);
  CHECK(trace.str().find('\r') == std::string::npos);

  const auto set = attained_set_sampled(pend, FamilySpec(params, 1.0), Vec{{0.1, 0.1}}, 0.05, 0.01, 2, 1);
  std::ostringstream cloud;
  write_attained_set_csv(set, cloud);
  const std::string text = cloud.str();
  CHECK(text.rfind("source,time,s_0,s_1\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 11);
}
