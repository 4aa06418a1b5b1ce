#pragma once

// Stochastic semi-gradient training of linearised policies and attained-set sampling.
//
//   W <- W + (eta / B) sum_b grad_a Q(s_b, a_b, t_b)^T Phi(s_b; W0),   eta = eta0 / sqrt(n)
//
// Gradient time is tau = k * eta; traces are indexed by it so widths can be compared.

#include "dynamics.hpp"
#include "lie.hpp"
#include "policy.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace attainable {

struct TrainConfig {
  double eta0 = 1.0;
  int batch = 8;
  int steps = 10;
  std::vector<int> width_schedule{256};
  double fd_step = 1e-4;
  double h_window = 1e-2;
  double dt = 1e-3;
  double exploration_scale = 0.1;
  Vec start_state;                // where exploration rollouts begin
  std::vector<Vec> probe_states;  // s* for the tracked statistics
  bool record_params = true;

  double learning_rate(int width) const { return eta0 / std::sqrt(static_cast<double>(width)); }

  void validate(const ControlAffineSystem& sys) const {
    if (!(eta0 > 0.0)) throw ConfigError("train: eta0 must be positive");
    if (batch < 0 || steps < 0) throw ConfigError("train: batch and steps must be non-negative");
    if (!(fd_step > 0.0) || !(h_window > 0.0) || !(dt > 0.0)) throw ConfigError("train: fd_step, h_window and dt must be positive");
    if (!(exploration_scale >= 0.0)) throw ConfigError("train: exploration_scale must be >= 0");
    if (start_state.size() != sys.state_dim) throw ConfigError("train: start_state dimension");
    for (const Vec& p : probe_states)
      if (p.size() != sys.state_dim) throw ConfigError("train: probe state dimension");
    for (int w : width_schedule)
      if (w < 1) throw ConfigError("train: widths must be positive");
  }
};

struct BatchSample {
  Vec state;
  Vec action;
  double time;
};

/// One probe state at one gradient step: A_j, A_{j,k} = dA_j/ds_k and A_j A_j'.
struct StatRecord {
  int step;
  double tau;
  int probe;
  Vec action;
  Mat jacobian;
  Mat products;
};

struct StatTrace {
  std::vector<StatRecord> records;
};

struct TrainResult {
  TwoLayerParams params;
  std::vector<Vec> param_trace;  // W after each step, starting with the initial weights
  StatTrace stats;
  int completed_steps = 0;
  double eta = 0.0;
  std::optional<std::string> divergence;
};

struct PointSource {
  int source;   // policy sample id or seed index
  double time;  // rollout time of the point
};

struct AttainedSet {
  Vec base_state;
  double delta = 0.0;
  std::vector<Vec> points;
  std::vector<PointSource> provenance;
  int skipped = 0;  // divergent policies
};

namespace detail {

inline ControlAffineSystem with_exploration(const ControlAffineSystem& sys, double scale) {
  ControlAffineSystem out = sys;
  const int d = sys.state_dim;
  out.exploration = [d, scale](const Vec&) -> Mat { return scale * Mat::Identity(d, d); };
  return out;
}

inline void record_stats(StatTrace& trace, const TwoLayerParams& p, const std::vector<Vec>& probes, int step,
                         double tau) {
  for (std::size_t i = 0; i < probes.size(); ++i) {
    StatRecord r;
    r.step = step;
    r.tau = tau;
    r.probe = static_cast<int>(i);
    r.action = forward_linearised(p, probes[i]);
    r.jacobian = linearised_jacobian(p, probes[i]);
    r.products = r.action * r.action.transpose();
    trace.records.push_back(std::move(r));
  }
}

}  // namespace detail

/// Runs the exploration SDE under the current linearised policy and draws `batch` tuples with
/// times uniform over the recorded grid on [0, horizon).
inline std::vector<BatchSample> collect_batch(const ControlAffineSystem& sys, const TwoLayerParams& params,
                                              int batch, std::uint64_t seed, const TrainConfig& config) {
  if (batch < 0) throw ConfigError("collect_batch: negative batch size");
  if (batch == 0) return {};
  const ControlAffineSystem explore = detail::with_exploration(sys, config.exploration_scale);
  const Trajectory traj =
      rollout_sde(explore, LinearisedPolicy{&params}, config.start_state, sys.horizon, config.dt, seed);
  Rng rng(derive_seed(seed, 1));
  std::uniform_int_distribution<std::size_t> pick(0, traj.size() - 2);  // exclude t = horizon
  std::vector<BatchSample> out;
  out.reserve(batch);
  for (int b = 0; b < batch; ++b) {
    const std::size_t k = pick(rng);
    out.push_back({traj.states[k], forward_linearised(params, traj.states[k]), traj.times[k]});
  }
  return out;
}

/// One semi-gradient ascent step; returns the new first-layer weights. The Q window is
/// shortened to horizon - t near the end of the episode.
inline Vec sgd_step(const TwoLayerParams& params, const std::vector<BatchSample>& batch,
                    const ControlAffineSystem& sys, double eta, const TrainConfig& config) {
  if (batch.empty()) throw DomainError("sgd_step: empty batch");
  const LinearisedPolicy policy{&params};
  Vec direction = Vec::Zero(params.weight_count());
  for (const BatchSample& b : batch) {
    const double h = std::min(config.h_window, sys.horizon - b.time);
    const Vec grad = grad_a_q(sys, policy, b.state, b.action, b.time, config.fd_step, h, config.dt);
    direction.noalias() += feature_matrix(params, b.state).transpose() * grad;
  }
  return params.w + (eta / static_cast<double>(batch.size())) * direction;
}

/// K = config.steps semi-gradient steps with fresh batches; statistics at the probe states are
/// recorded before the first step and after every step. Divergence stops training early.
inline TrainResult train(const ControlAffineSystem& sys, const TwoLayerParams& params, const TrainConfig& config,
                         std::uint64_t seed) {
  config.validate(sys);
  TrainResult result;
  result.params = params;
  result.eta = config.learning_rate(params.width);
  if (config.record_params) result.param_trace.push_back(params.w);
  detail::record_stats(result.stats, result.params, config.probe_states, 0, 0.0);
  for (int k = 0; k < config.steps; ++k) {
    try {
      if (config.batch == 0) break;
      const auto batch = collect_batch(sys, result.params, config.batch, derive_seed(seed, k), config);
      result.params.w = sgd_step(result.params, batch, sys, result.eta, config);
      if (!result.params.w.allFinite()) throw DivergenceError("non-finite weights", (k + 1) * result.eta);
    } catch (const DivergenceError& e) {
      result.divergence = std::string("step ") + std::to_string(k) + ": " + e.what();
      break;
    }
    result.completed_steps = k + 1;
    if (config.record_params) result.param_trace.push_back(result.params.w);
    detail::record_stats(result.stats, result.params, config.probe_states, k + 1, (k + 1) * result.eta);
  }
  return result;
}

struct SamplingOptions {
  double integration_dt = 0.0;  // 0 means dt_sample
  int workers = 1;
  PolicyMode mode = PolicyMode::family;
};

namespace detail {

struct SampleGrid {
  int samples;
  int substeps;
  double step;
};

inline SampleGrid sample_grid(double delta, double dt_sample, double integration_dt) {
  if (!(delta > 0.0) || !(dt_sample > 0.0)) throw DomainError("attained set: delta and dt_sample must be positive");
  const double ratio = delta / dt_sample;
  const double samples = std::round(ratio);
  if (samples < 1.0 || std::abs(ratio - samples) > 1e-9 * std::max(1.0, ratio))
    throw DomainError("attained set: dt_sample must divide delta");
  const double idt = integration_dt > 0.0 ? integration_dt : dt_sample;
  const double sub = std::round(dt_sample / idt);
  if (sub < 1.0 || std::abs(dt_sample / idt - sub) > 1e-9 * sub)
    throw DomainError("attained set: integration_dt must divide dt_sample");
  return {static_cast<int>(samples), static_cast<int>(sub), dt_sample / sub};
}

struct PolicyRollout {
  std::vector<Vec> points;
  std::vector<double> times;
  bool diverged = false;
};

inline PolicyRollout sampled_rollout(const ControlAffineSystem& sys, const TwoLayerParams& params, PolicyMode mode,
                                     const Vec& s, const SampleGrid& grid) {
  PolicyRollout out;
  try {
    const double duration = grid.samples * grid.substeps * grid.step;
    const Trajectory traj = mode == PolicyMode::family
                                ? rollout(sys, FamilyPolicy{&params}, s, duration, grid.step)
                                : rollout(sys, LinearisedPolicy{&params}, s, duration, grid.step);
    for (int i = 1; i <= grid.samples; ++i) {
      const std::size_t k = static_cast<std::size_t>(i) * grid.substeps;
      out.points.push_back(traj.states[k]);
      out.times.push_back(traj.times[k]);
    }
  } catch (const DivergenceError&) {
    out.diverged = true;
    out.points.clear();
    out.times.clear();
  }
  return out;
}

/// Runs job(i) for i in [0, count) over `workers` threads; each slot is written by one job.
template <class Job>
void parallel_for(int count, int workers, const Job& job) {
  workers = std::clamp(workers, 1, std::max(1, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) job(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (int i = w; i < count; i += workers) job(i);
    });
  for (auto& t : pool) t.join();
}

inline AttainedSet assemble(const Vec& s, double delta, std::vector<PolicyRollout>& rollouts) {
  AttainedSet set;
  set.base_state = s;
  set.delta = delta;
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    if (rollouts[i].diverged) {
      ++set.skipped;
      continue;
    }
    for (std::size_t k = 0; k < rollouts[i].points.size(); ++k) {
      set.points.push_back(std::move(rollouts[i].points[k]));
      set.provenance.push_back({static_cast<int>(i), rollouts[i].times[k]});
    }
  }
  return set;
}

}  // namespace detail

/// Rolls out num_policies draws from the bounded family from s, recording every dt_sample up to
/// delta. Policy i uses seed derive_seed(rng_seed, i), so results do not depend on `workers`.
inline AttainedSet attained_set_sampled(const ControlAffineSystem& sys, const FamilySpec& family, const Vec& s,
                                        double delta, double dt_sample, int num_policies, std::uint64_t rng_seed,
                                        const SamplingOptions& options = {}) {
  detail::require_dims(s.size() == sys.state_dim, "attained_set_sampled: state dimension");
  if (num_policies < 0) throw DomainError("attained_set_sampled: negative policy count");
  const auto grid = detail::sample_grid(delta, dt_sample, options.integration_dt);
  std::vector<detail::PolicyRollout> rollouts(static_cast<std::size_t>(num_policies));
  detail::parallel_for(num_policies, options.workers, [&](int i) {
    const TwoLayerParams params = family.base.get().with_weights(sample_family(family, derive_seed(rng_seed, i)));
    rollouts[i] = detail::sampled_rollout(sys, params, options.mode, s, grid);
  });
  return detail::assemble(s, delta, rollouts);
}

/// Trains num_seeds independently initialised policies (width = first entry of the width
/// schedule) to gradient time tau, then rolls each linearised policy out from s.
inline AttainedSet attained_set_trained(const ControlAffineSystem& sys, const TrainConfig& config, const Vec& s,
                                        double delta, double dt_sample, int num_seeds, double tau,
                                        std::uint64_t rng_seed, const SamplingOptions& options = {}) {
  detail::require_dims(s.size() == sys.state_dim, "attained_set_trained: state dimension");
  if (config.width_schedule.empty()) throw ConfigError("attained_set_trained: empty width schedule");
  if (!(tau >= 0.0)) throw DomainError("attained_set_trained: tau must be non-negative");
  const auto grid = detail::sample_grid(delta, dt_sample, options.integration_dt);
  const int width = config.width_schedule.front();
  TrainConfig cfg = config;
  cfg.record_params = false;
  cfg.steps = static_cast<int>(std::round(tau / config.learning_rate(width)));
  std::vector<detail::PolicyRollout> rollouts(static_cast<std::size_t>(std::max(0, num_seeds)));
  detail::parallel_for(num_seeds, options.workers, [&](int i) {
    const TwoLayerParams init =
        init_params(width, sys.state_dim, sys.action_dim, derive_seed(rng_seed, 2 * static_cast<std::uint64_t>(i)));
    const TrainResult trained = train(sys, init, cfg, derive_seed(rng_seed, 2 * static_cast<std::uint64_t>(i) + 1));
    if (trained.divergence) {
      rollouts[i].diverged = true;
      return;
    }
    rollouts[i] = detail::sampled_rollout(sys, trained.params, PolicyMode::linearised, s, grid);
  });
  return detail::assemble(s, delta, rollouts);
}

// ---------------------------------------------------------------------------
// CSV export

inline void write_stat_trace_csv(const StatTrace& trace, std::ostream& os) {
  if (trace.records.empty()) {
    os << "step,tau,probe\n";
    return;
  }
  const auto& first = trace.records.front();
  const Eigen::Index da = first.action.size();
  const Eigen::Index ds = first.jacobian.cols();
  os << "step,tau,probe";
  for (Eigen::Index j = 0; j < da; ++j) os << ",A_" << j;
  for (Eigen::Index j = 0; j < da; ++j)
    for (Eigen::Index k = 0; k < ds; ++k) os << ",J_" << j << '_' << k;
  for (Eigen::Index j = 0; j < da; ++j)
    for (Eigen::Index k = 0; k < da; ++k) os << ",P_" << j << '_' << k;
  os << '\n';
  os.precision(17);
  for (const auto& r : trace.records) {
    os << r.step << ',' << r.tau << ',' << r.probe;
    for (Eigen::Index j = 0; j < da; ++j) os << ',' << r.action(j);
    for (Eigen::Index j = 0; j < da; ++j)
      for (Eigen::Index k = 0; k < ds; ++k) os << ',' << r.jacobian(j, k);
    for (Eigen::Index j = 0; j < da; ++j)
      for (Eigen::Index k = 0; k < da; ++k) os << ',' << r.products(j, k);
    os << '\n';
  }
}

inline void write_attained_set_csv(const AttainedSet& set, std::ostream& os) {
  const Eigen::Index d = set.base_state.size();
  os << "source,time";
  for (Eigen::Index i = 0; i < d; ++i) os << ",s_" << i;
  os << '\n';
  os.precision(17);
  for (std::size_t p = 0; p < set.points.size(); ++p) {
    os << set.provenance[p].source << ',' << set.provenance[p].time;
    for (Eigen::Index i = 0; i < d; ++i) os << ',' << set.points[p](i);
    os << '\n';
  }
}

}  // namespace attainable
