#pragma once

// Experiment recipes. Each returns its tables, a JSON summary and a plot derived from the main
// table; write_outputs stores them next to the effective config.

#include "../control.hpp"
#include "../lie.hpp"
#include "../pg.hpp"
#include "../twonn.hpp"
#include "config.hpp"
#include "result_table.hpp"
#include "svg.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace attainable::harness {

struct ExperimentResult {
  ResultTable table;
  std::map<std::string, ResultTable> extra;  // additional CSV files keyed by name
  json summary;
  std::optional<PlotSpec> plot;
};

namespace detail {

inline double nan() { return std::numeric_limits<double>::quiet_NaN(); }

inline Vec to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> from_vec(const Vec& v) { return {v.data(), v.data() + v.size()}; }

inline ControlAffineSystem build_system(const SystemCatalogEntry& entry) {
  try {
    return make_system(entry);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("system: ") + e.what());
  }
}

inline Vec base_state(const SamplingSection& s, int state_dim) {
  if (!s.base_state) return Vec::Constant(state_dim, s.base_value);
  if (static_cast<int>(s.base_state->size()) != state_dim)
    throw ConfigError("sampling.base_state has " + std::to_string(s.base_state->size()) + " entries, system has " +
                      std::to_string(state_dim));
  return to_vec(*s.base_state);
}

inline int policy_count(const ExperimentConfig& c) {
  return c.full ? c.sampling.full_num_policies : c.sampling.num_policies;
}

inline SamplingOptions sampling_options(const SamplingSection& s) {
  SamplingOptions o;
  o.integration_dt = s.integration_dt;
  o.workers = s.workers;
  return o;
}

/// Least-squares slope of log y against log x over the finite positive pairs.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0) || !std::isfinite(y[i])) continue;
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++m;
  }
  if (m < 2) return nan();
  const double den = m * sxx - sx * sx;
  return den > 0.0 ? (m * sxy - sx * sy) / den : nan();
}

inline double mean_of(const std::vector<double>& v) {
  return v.empty() ? nan() : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Unbiased sample variance; NaN below two values.
inline double variance_of(const std::vector<double>& v) {
  if (v.size() < 2) return nan();
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / static_cast<double>(v.size() - 1);
}

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace detail

// ---------------------------------------------------------------------------
// toy_dim

inline PlotSpec toy_dim_plot(const ResultTable& t) {
  PlotSpec p;
  p.title = "Intrinsic dimension of attained states";
  p.x_label = "state dimension";
  p.y_label = "estimated dimension";
  const auto x = t.numeric_column("state_dim");
  p.series.push_back({"d_hat", x, t.numeric_column("d_hat"), false});
  p.series.push_back({"ci_low", x, t.numeric_column("ci_low"), true});
  p.series.push_back({"ci_high", x, t.numeric_column("ci_high"), true});
  p.references.push_back({3.0, "2 d_a + 1"});
  p.references.push_back({2.0, "d_a + 1"});
  return p;
}

inline ExperimentResult run_toy_dim(const ExperimentConfig& c) {
  validate(c);
  ExperimentResult out;
  out.table = ResultTable({"state_dim", "policies", "points", "skipped", "duplicates", "d_hat", "ci_low", "ci_high"});
  const int policies = detail::policy_count(c);
  for (double dv : c.sweep.at("state_dim")) {
    const int d = static_cast<int>(dv);
    SystemCatalogEntry entry = c.system;
    entry.parameters["state_dim"] = d;
    const ControlAffineSystem sys = detail::build_system(entry);
    if (sys.state_dim != d) throw ConfigError("toy_dim: system '" + sys.name + "' ignores state_dim");
    const TwoLayerParams params = init_params(c.policy.width, d, sys.action_dim, c.policy.seed, c.policy.augment_state);
    const FamilySpec family(params, c.policy.radius);
    const Vec s = detail::base_state(c.sampling, d);
    const AttainedSet set = attained_set_sampled(sys, family, s, c.sampling.delta, c.sampling.dt_sample, policies,
                                                 derive_seed(c.seed, static_cast<std::uint64_t>(d)),
                                                 detail::sampling_options(c.sampling));
    if (set.points.empty())
      throw DivergenceError("toy_dim: every policy diverged at state_dim " + std::to_string(d), c.sampling.delta);
    const PointCloud cloud(set.points);
    if (cloud.size() < 3) throw DegenerateError("toy_dim: fewer than three distinct points");
    const int size = static_cast<int>(std::min<Eigen::Index>(c.estimator.subsample_size, cloud.size()));
    const DimensionEstimate est = estimate_with_ci(cloud, c.estimator.subsamples, size, c.estimator.trim_fraction,
                                                   derive_seed(c.seed, 1000 + static_cast<std::uint64_t>(d)));
    out.table.add_row({std::int64_t{d}, std::int64_t{policies}, static_cast<std::int64_t>(set.points.size()),
                       std::int64_t{set.skipped}, std::int64_t{cloud.duplicates_removed()}, est.d_hat, est.ci_low,
                       est.ci_high});
  }
  const auto d_hat = out.table.numeric_column("d_hat");
  out.summary["max_d_hat"] = *std::max_element(d_hat.begin(), d_hat.end());
  out.summary["min_d_hat"] = *std::min_element(d_hat.begin(), d_hat.end());
  out.summary["policies"] = policies;
  out.plot = toy_dim_plot(out.table);
  return out;
}

// ---------------------------------------------------------------------------
// local_spectrum

/// Singular values of the centered cloud, largest first.
inline Vec centered_singular_values(const std::vector<Vec>& points) {
  if (points.empty()) throw DegenerateError("centered_singular_values: empty cloud");
  const Eigen::Index d = points.front().size();
  Mat m(static_cast<Eigen::Index>(points.size()), d);
  for (std::size_t i = 0; i < points.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
  const Eigen::RowVectorXd mean = m.colwise().mean();
  m.rowwise() -= mean;
  Eigen::BDCSVD<Mat> svd(m);
  return svd.singularValues();
}

inline PlotSpec local_spectrum_plot(const ResultTable& t) {
  PlotSpec p;
  p.title = "Centered singular-value ratios of the attained cloud";
  p.x_label = "delta";
  p.y_label = "sigma_k / sigma_1";
  p.log_x = true;
  p.log_y = true;
  const auto x = t.numeric_column("delta");
  for (const auto& name : t.columns)
    if (name.rfind("ratio_", 0) == 0 && name != "ratio_1") p.series.push_back({name, x, t.numeric_column(name), false});
  return p;
}

inline ExperimentResult run_local_spectrum(const ExperimentConfig& c) {
  validate(c);
  const ControlAffineSystem sys = detail::build_system(c.system);
  const int ds = sys.state_dim, da = sys.action_dim;
  const int k_max = std::min(ds, 2 * da + 3);
  const Vec s = detail::base_state(c.sampling, ds);
  const int policies = detail::policy_count(c);

  std::vector<std::string> cols{"delta", "points", "skipped", "sigma_1"};
  for (int k = 1; k <= k_max; ++k) cols.push_back("ratio_" + std::to_string(k));
  ExperimentResult out;
  out.table = ResultTable(cols);

  const TwoLayerParams params = init_params(c.policy.width, ds, da, c.policy.seed, c.policy.augment_state);
  const FamilySpec family(params, c.policy.radius);
  TrainConfig train_cfg;
  if (c.sampling.mode == "trained") {
    const auto& t = c.training;
    train_cfg.eta0 = t.eta0;
    train_cfg.batch = t.batch;
    train_cfg.width_schedule = {c.policy.width};
    train_cfg.fd_step = t.fd_step;
    train_cfg.h_window = t.h_window;
    train_cfg.dt = t.dt;
    train_cfg.exploration_scale = t.exploration_scale;
    train_cfg.start_state = t.start_state.empty() ? s : detail::to_vec(t.start_state);
    train_cfg.record_params = false;
    train_cfg.validate(sys);
  }

  const auto& deltas = c.sweep.at("delta");
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    const double delta = deltas[i];
    const double dt_sample =
        c.sampling.samples_per_policy > 0 ? delta / c.sampling.samples_per_policy : c.sampling.dt_sample;
    SamplingOptions opts = detail::sampling_options(c.sampling);
    AttainedSet set;
    try {
      set = c.sampling.mode == "trained"
                ? attained_set_trained(sys, train_cfg, s, delta, dt_sample, policies, c.training.gradient_time,
                                       derive_seed(c.seed, i), opts)
                : attained_set_sampled(sys, family, s, delta, dt_sample, policies, derive_seed(c.seed, i), opts);
    } catch (const DomainError& e) {
      throw ConfigError(std::string("local_spectrum: ") + e.what());
    }
    if (set.points.empty()) throw DivergenceError("local_spectrum: every policy diverged", delta);
    if (static_cast<int>(set.points.size()) <= ds)
      throw DegenerateError("local_spectrum: " + std::to_string(set.points.size()) +
                            " points cannot resolve a spectrum in dimension " + std::to_string(ds));
    const Vec sv = centered_singular_values(set.points);
    std::vector<Cell> row{delta, static_cast<std::int64_t>(set.points.size()), std::int64_t{set.skipped}, sv(0)};
    for (int k = 0; k < k_max; ++k) row.emplace_back(sv(0) > 0.0 ? sv(k) / sv(0) : detail::nan());
    out.table.add_row(std::move(row));
  }

  const int k_res = 2 * da + 2;
  out.summary["residual_index"] = k_res;
  if (k_res <= k_max) {
    const std::string col = "ratio_" + std::to_string(k_res);
    out.summary["residual_column"] = col;
    out.summary["residual_loglog_slope"] =
        detail::number_or_null(detail::loglog_slope(out.table.numeric_column("delta"), out.table.numeric_column(col)));
  } else {
    out.summary["residual_column"] = nullptr;
    out.summary["residual_loglog_slope"] = nullptr;
  }
  out.summary["policies"] = policies;
  out.summary["mode"] = c.sampling.mode;
  out.plot = local_spectrum_plot(out.table);
  return out;
}

// ---------------------------------------------------------------------------
// lie_check

inline std::vector<double> lie_grid(const LieSection& l) {
  if (l.t_grid) return *l.t_grid;
  std::vector<double> g;
  const double a = std::log10(l.t_min), b = std::log10(l.t_max);
  for (int i = 0; i < l.t_points; ++i) g.push_back(std::pow(10.0, a + (b - a) * i / (l.t_points - 1)));
  return g;
}

inline PlotSpec lie_check_plot(const ResultTable& t) {
  PlotSpec p;
  p.title = "Order-2 Lie truncation error slope per policy";
  p.x_label = "policy";
  p.y_label = "fitted slope";
  p.series.push_back({"slope", t.numeric_column("policy"), t.numeric_column("slope"), false});
  p.references.push_back({3.0, "slope 3"});
  return p;
}

inline ExperimentResult run_lie_check(const ExperimentConfig& c) {
  validate(c);
  const ControlAffineSystem sys = detail::build_system(c.system);
  Vec s = Vec::Constant(sys.state_dim, 1.0);
  if (c.lie.state) {
    if (static_cast<int>(c.lie.state->size()) != sys.state_dim) throw ConfigError("lie.state dimension");
    s = detail::to_vec(*c.lie.state);
  }
  const std::vector<double> grid = lie_grid(c.lie);
  const TwoLayerParams base =
      init_params(c.policy.width, sys.state_dim, sys.action_dim, c.policy.seed, c.policy.augment_state);
  const FamilySpec family(base, c.policy.radius);
  const PolicyMode mode = c.lie.mode == "family" ? PolicyMode::family : PolicyMode::linearised;

  std::vector<std::string> cols{"policy", "slope", "truncated"};
  for (std::size_t i = 0; i < grid.size(); ++i) cols.push_back("err_" + std::to_string(i));
  ExperimentResult out;
  out.table = ResultTable(cols);
  ResultTable grid_table({"index", "t"});
  for (std::size_t i = 0; i < grid.size(); ++i) grid_table.add_row({static_cast<std::int64_t>(i), grid[i]});

  std::vector<double> slopes;
  int truncated = 0, diverged = 0;
  for (int i = 0; i < c.lie.num_policies; ++i) {
    const TwoLayerParams p = base.with_weights(sample_family(family, derive_seed(c.seed, static_cast<std::uint64_t>(i))));
    const ClosedLoopField field{&sys, &p, mode};
    TruncationFit fit;
    try {
      fit = truncation_error_slope(field, s, grid, c.lie.dt_ref);
    } catch (const DegenerateError& e) {
      throw ConfigError(std::string("lie grid: ") + e.what());
    } catch (const DivergenceError&) {
      ++diverged;
      continue;
    }
    std::vector<Cell> row{std::int64_t{i}, fit.slope, std::string(fit.truncated ? "true" : "false")};
    for (double e : fit.errors) row.emplace_back(e);
    out.table.add_row(std::move(row));
    if (fit.truncated) ++truncated;
    else slopes.push_back(fit.slope);
  }
  if (out.table.rows.empty()) throw DivergenceError("lie_check: every policy diverged", grid.back());
  const double mean = detail::mean_of(slopes);
  const double var = detail::variance_of(slopes);
  out.summary["mean_slope"] = detail::number_or_null(mean);
  out.summary["sd_slope"] = detail::number_or_null(std::isfinite(var) ? std::sqrt(var) : var);
  out.summary["policies"] = c.lie.num_policies;
  out.summary["truncated"] = truncated;
  out.summary["diverged"] = diverged;
  if (slopes.empty()) out.summary["note"] = "truncated series, slope undefined";
  out.extra["t_grid"] = grid_table;
  out.plot = lie_check_plot(out.table);
  return out;
}

// ---------------------------------------------------------------------------
// train_stats

/// Mean |canonical - linearised| over random states after moving W0 by a random direction of
/// norm `radius`.
inline double linearisation_gap(int width, int state_dim, int action_dim, double radius, int states,
                                 std::uint64_t seed) {
  const TwoLayerParams p = init_params(width, state_dim, action_dim, derive_seed(seed, 0));
  Rng rng(derive_seed(seed, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec direction(p.weight_count());
  for (Eigen::Index i = 0; i < direction.size(); ++i) direction(i) = normal(rng);
  const TwoLayerParams moved = p.with_weights(p.w0 + radius * direction / direction.norm());
  double total = 0.0;
  for (int i = 0; i < states; ++i) {
    Vec s(state_dim);
    for (Eigen::Index k = 0; k < s.size(); ++k) s(k) = normal(rng);
    total += (forward_canonical(moved, s) - forward_linearised(moved, s)).norm();
  }
  return total / states;
}

inline PlotSpec train_stats_plot(const ResultTable& t) {
  PlotSpec p;
  p.title = "Across-seed variance of the action at the probe state";
  p.x_label = "width";
  p.y_label = "variance";
  p.log_x = true;
  p.log_y = true;
  const auto probe = t.numeric_column("probe");
  const auto action = t.numeric_column("action");
  const auto width = t.numeric_column("width");
  const auto var = t.numeric_column("variance");
  std::map<std::pair<int, int>, Series> by_key;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    auto& s = by_key[{static_cast<int>(probe[i]), static_cast<int>(action[i])}];
    s.name = "probe " + std::to_string(static_cast<int>(probe[i])) + " action " + std::to_string(static_cast<int>(action[i]));
    s.x.push_back(width[i]);
    s.y.push_back(var[i]);
  }
  for (auto& [key, s] : by_key) p.series.push_back(std::move(s));
  return p;
}

inline ExperimentResult run_train_stats(const ExperimentConfig& c) {
  validate(c);
  const ControlAffineSystem sys = detail::build_system(c.system);
  const int ds = sys.state_dim, da = sys.action_dim;
  const auto& t = c.training;
  TrainConfig cfg;
  cfg.eta0 = t.eta0;
  cfg.batch = t.batch;
  cfg.fd_step = t.fd_step;
  cfg.h_window = t.h_window;
  cfg.dt = t.dt;
  cfg.exploration_scale = t.exploration_scale;
  cfg.record_params = false;
  cfg.start_state = t.start_state.empty() ? Vec::Ones(ds) : detail::to_vec(t.start_state);
  if (t.probe_states.empty()) {
    cfg.probe_states = {cfg.start_state, 0.5 * cfg.start_state};
  } else {
    for (const auto& p : t.probe_states) cfg.probe_states.push_back(detail::to_vec(p));
  }
  cfg.validate(sys);
  const int probes = static_cast<int>(cfg.probe_states.size());

  ExperimentResult out;
  out.table = ResultTable({"width", "eta", "steps", "tau", "seeds", "diverged", "probe", "action", "mean", "variance"});
  ResultTable trace({"width", "step", "tau", "probe", "action", "mean_action", "mean_displacement"});
  std::vector<std::string> divergences;

  struct MeanTrace {
    std::vector<double> tau, displacement;
  };
  std::vector<MeanTrace> traces;  // probe 0, action 0, per width

  for (int n : t.widths) {
    TrainConfig wc = cfg;
    wc.width_schedule = {n};
    const double eta = wc.learning_rate(n);
    wc.steps = static_cast<int>(std::round(t.gradient_time / eta));
    const std::uint64_t width_seed = derive_seed(c.seed, static_cast<std::uint64_t>(n));
    const TwoLayerParams shared = init_params(n, ds, da, width_seed);
    std::vector<TrainResult> runs(static_cast<std::size_t>(t.seeds));
    attainable::detail::parallel_for(t.seeds, t.workers, [&](int k) {
      const TwoLayerParams init =
          t.vary_init ? init_params(n, ds, da, derive_seed(width_seed, 100000 + static_cast<std::uint64_t>(k))) : shared;
      runs[k] = train(sys, init, wc, derive_seed(width_seed, static_cast<std::uint64_t>(k) + 1));
    });
    std::vector<const TrainResult*> ok;
    for (int k = 0; k < t.seeds; ++k) {
      if (runs[k].divergence) divergences.push_back("width " + std::to_string(n) + " seed " + std::to_string(k) + ": " + *runs[k].divergence);
      else ok.push_back(&runs[k]);
    }
    if (ok.empty()) throw DivergenceError("train_stats: every seed diverged at width " + std::to_string(n), t.gradient_time);

    // Records are ordered by step, then probe.
    auto record = [probes](const TrainResult& r, int step, int probe) -> const StatRecord& {
      return r.stats.records[static_cast<std::size_t>(step) * probes + probe];
    };
    for (int p = 0; p < probes; ++p)
      for (int j = 0; j < da; ++j) {
        std::vector<double> finals;
        for (const auto* r : ok) finals.push_back(record(*r, wc.steps, p).action(j));
        out.table.add_row({std::int64_t{n}, eta, std::int64_t{wc.steps}, wc.steps * eta, static_cast<std::int64_t>(ok.size()),
                           static_cast<std::int64_t>(t.seeds - ok.size()), std::int64_t{p}, std::int64_t{j},
                           detail::mean_of(finals), detail::variance_of(finals)});
      }
    MeanTrace mt;
    for (int step = 0; step <= wc.steps; ++step)
      for (int p = 0; p < probes; ++p)
        for (int j = 0; j < da; ++j) {
          double mean_a = 0.0, mean_d = 0.0;
          for (const auto* r : ok) {
            mean_a += record(*r, step, p).action(j);
            mean_d += record(*r, step, p).action(j) - record(*r, 0, p).action(j);
          }
          mean_a /= static_cast<double>(ok.size());
          mean_d /= static_cast<double>(ok.size());
          trace.add_row({std::int64_t{n}, std::int64_t{step}, step * eta, std::int64_t{p}, std::int64_t{j}, mean_a, mean_d});
          if (p == 0 && j == 0) {
            mt.tau.push_back(step * eta);
            mt.displacement.push_back(mean_d);
          }
        }
    traces.push_back(std::move(mt));
  }

  // Width comparison on probe 0, action 0: first against last width.
  const auto var = out.table.numeric_column("variance");
  const std::size_t per_width = static_cast<std::size_t>(probes) * da;
  const double var_first = var.front(), var_last = var[var.size() - per_width];
  out.summary["variance_first_width"] = detail::number_or_null(var_first);
  out.summary["variance_last_width"] = detail::number_or_null(var_last);
  out.summary["variance_ratio"] = detail::number_or_null(var_first > 0.0 ? var_last / var_first : detail::nan());

  // Sup distance between mean displacement traces, interpolating the widest run's trace.
  const MeanTrace& ref = traces.back();
  const auto [lo, hi] = std::minmax_element(ref.displacement.begin(), ref.displacement.end());
  const double range = *hi - *lo;
  double sup = 0.0;
  for (std::size_t w = 0; w + 1 < traces.size(); ++w)
    for (std::size_t i = 0; i < traces[w].tau.size(); ++i) {
      const double tau = traces[w].tau[i];
      if (tau > ref.tau.back() + 1e-12) continue;
      const auto it = std::lower_bound(ref.tau.begin(), ref.tau.end(), tau - 1e-12);
      const std::size_t k = static_cast<std::size_t>(it - ref.tau.begin());
      double value = ref.displacement[std::min(k, ref.tau.size() - 1)];
      if (k > 0 && k < ref.tau.size() && ref.tau[k] > tau) {
        const double f = (tau - ref.tau[k - 1]) / (ref.tau[k] - ref.tau[k - 1]);
        value = ref.displacement[k - 1] + f * (ref.displacement[k] - ref.displacement[k - 1]);
      }
      sup = std::max(sup, std::abs(traces[w].displacement[i] - value));
    }
  out.summary["mean_trace_sup_difference"] = sup;
  out.summary["mean_trace_range"] = range;
  out.summary["mean_trace_relative"] = detail::number_or_null(range > 0.0 ? sup / range : detail::nan());

  ResultTable gap({"width", "radius", "states", "mean_gap"});
  for (int n : t.gap_widths)
    gap.add_row({std::int64_t{n}, t.gap_radius, std::int64_t{t.gap_states},
                 linearisation_gap(n, ds, da, t.gap_radius, t.gap_states, derive_seed(c.seed, 777))});
  if (!gap.rows.empty()) {
    const auto g = gap.numeric_column("mean_gap");
    out.summary["gap_ratio"] = detail::number_or_null(g.back() > 0.0 ? g.front() / g.back() : detail::nan());
  }
  out.summary["divergences"] = divergences;
  out.extra["mean_trace"] = trace;
  out.extra["linearisation_gap"] = gap;
  out.plot = train_stats_plot(out.table);
  return out;
}

// ---------------------------------------------------------------------------
// estimate_dim

inline ExperimentResult run_estimate_dim(const ExperimentConfig& c) {
  validate(c);
  const PointCloud cloud(read_point_csv(c.input));
  if (cloud.size() < 3) throw ConfigError("estimate_dim: need at least three distinct points");
  const int size = static_cast<int>(std::min<Eigen::Index>(c.estimator.subsample_size, cloud.size()));
  const DimensionEstimate est =
      estimate_with_ci(cloud, c.estimator.subsamples, size, c.estimator.trim_fraction, derive_seed(c.seed, 0));
  ExperimentResult out;
  out.table = ResultTable({"subsample", "d_hat"});
  for (std::size_t i = 0; i < est.estimates.size(); ++i)
    out.table.add_row({static_cast<std::int64_t>(i), est.estimates[i]});
  out.summary["points"] = cloud.size();
  out.summary["ambient_dim"] = cloud.dim();
  out.summary["duplicates_removed"] = cloud.duplicates_removed();
  out.summary["d_hat"] = est.d_hat;
  out.summary["ci_low"] = est.ci_low;
  out.summary["ci_high"] = est.ci_high;
  out.summary["subsamples"] = est.subsamples;
  out.summary["subsample_size"] = est.subsample_size;
  return out;
}

// ---------------------------------------------------------------------------
// reachability

inline ExperimentResult run_reachability(const ExperimentConfig& c) {
  validate(c);
  if (c.system.name != "chain_integrator" && c.system.name != "linear_generic")
    throw ConfigError("reachability needs a linear system (chain_integrator or linear_generic)");
  const ControlAffineSystem dyn = detail::build_system(c.system);
  const Vec origin = Vec::Zero(dyn.state_dim);
  const LinearSystem lin(dyn.drift_jacobian(origin), dyn.control(origin));
  const ControllabilityReport report = is_fully_reachable(lin);

  ExperimentResult out;
  out.table = ResultTable({"index", "singular_value"});
  for (std::size_t i = 0; i < report.singular_values.size(); ++i)
    out.table.add_row({static_cast<std::int64_t>(i), report.singular_values[i]});
  out.summary["state_dim"] = lin.state_dim();
  out.summary["input_dim"] = lin.input_dim();
  out.summary["rank"] = report.rank;
  out.summary["full"] = report.full;

  if (!report.full) {
    // Piecewise-constant inputs from the origin must stay in the reachable subspace.
    const Mat basis = reachable_subspace(lin);
    const Mat projector = Mat::Identity(lin.state_dim(), lin.state_dim()) - basis * basis.transpose();
    Rng rng(derive_seed(c.seed, 0));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    const int rollouts = 1000;
    for (int r = 0; r < rollouts; ++r) {
      Vec s = origin;
      for (int seg = 0; seg < 5; ++seg) {
        Vec a(lin.input_dim());
        for (Eigen::Index j = 0; j < a.size(); ++j) a(j) = u(rng);
        s = rollout(dyn, ConstantPolicy{a}, s, 0.2, 0.02).final_state();
      }
      worst = std::max(worst, (projector * s).norm());
    }
    out.summary["rollouts"] = rollouts;
    out.summary["max_rollout_residual"] = worst;
  }
  return out;
}

// ---------------------------------------------------------------------------
// dispatch and output

inline ExperimentResult run_experiment(const ExperimentConfig& c) {
  switch (c.experiment) {
    case Experiment::toy_dim: return run_toy_dim(c);
    case Experiment::local_spectrum: return run_local_spectrum(c);
    case Experiment::lie_check: return run_lie_check(c);
    case Experiment::train_stats: return run_train_stats(c);
    case Experiment::estimate_dim: return run_estimate_dim(c);
    case Experiment::reachability: return run_reachability(c);
  }
  throw ConfigError("unknown experiment");
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << text;
}

/// Writes <name>.csv, <name>_<extra>.csv, <name>.svg and <name>.json into c.output. Returns the
/// JSON record.
inline json write_outputs(const ExperimentConfig& c, ExperimentResult& result, const std::string& git_describe,
                          double runtime_seconds) {
  namespace fs = std::filesystem;
  const fs::path dir(c.output);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + c.output + ": " + ec.message());
  const std::string name = experiment_name(c.experiment);
  const json effective = to_json(c);
  const std::string hash = config_hash(effective);

  result.table.metadata["config_hash"] = hash;
  result.table.metadata["seed"] = std::to_string(c.seed);
  result.table.metadata["runtime_seconds"] = format_double(runtime_seconds);

  json files = json::array();
  write_text(dir / (name + ".csv"), to_csv(result.table));
  files.push_back(name + ".csv");
  for (const auto& [key, table] : result.extra) {
    write_text(dir / (name + "_" + key + ".csv"), to_csv(table));
    files.push_back(name + "_" + key + ".csv");
  }
  if (result.plot) {
    write_text(dir / (name + ".svg"), render_line_plot(*result.plot));
    files.push_back(name + ".svg");
  }
  json record;
  record["experiment"] = name;
  record["config"] = effective;
  record["config_hash"] = hash;
  record["seed"] = c.seed;
  record["git_describe"] = git_describe;
  record["runtime_seconds"] = runtime_seconds;
  record["summary"] = result.summary;
  record["files"] = files;
  write_text(dir / (name + ".json"), record.dump(2) + "\n");
  return record;
}

}  // namespace attainable::harness
