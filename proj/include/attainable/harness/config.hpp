#pragma once

// Experiment configuration: one JSON document per run. Unknown keys and sections that the
// chosen experiment does not read are rejected so that a config always means what it says.

#include "../dynamics.hpp"
#include "../errors.hpp"
#include "../types.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace attainable::harness {

using json = nlohmann::json;

enum class Experiment { toy_dim, lie_check, estimate_dim, local_spectrum, train_stats, reachability };

inline const std::map<std::string, Experiment>& experiment_names() {
  static const std::map<std::string, Experiment> names{
      {"toy_dim", Experiment::toy_dim},           {"lie_check", Experiment::lie_check},
      {"estimate_dim", Experiment::estimate_dim}, {"local_spectrum", Experiment::local_spectrum},
      {"train_stats", Experiment::train_stats},   {"reachability", Experiment::reachability}};
  return names;
}

inline std::string experiment_name(Experiment e) {
  for (const auto& [name, value] : experiment_names())
    if (value == e) return name;
  return "unknown";
}

struct PolicySection {
  int width = 1024;
  double radius = 1.0;
  std::uint64_t seed = 1;
  bool augment_state = false;
};

struct SamplingSection {
  int num_policies = 200;
  int full_num_policies = 1000;  // used with --full
  double delta = 5.0;
  double dt_sample = 0.01;
  int samples_per_policy = 0;     // > 0: dt_sample = delta / samples_per_policy (delta sweeps)
  double integration_dt = 0.0;    // 0: same as dt_sample
  std::optional<std::vector<double>> base_state;
  double base_value = 1.0;        // base state = base_value * ones when base_state is absent
  int workers = 1;
  std::string mode = "sampled";   // sampled | trained
};

struct EstimatorSection {
  int subsamples = 10;
  int subsample_size = 20000;
  double trim_fraction = 0.0;
};

struct TrainingSection {
  double eta0 = 4.0;
  int batch = 8;
  std::vector<int> widths{256, 4096};
  int seeds = 16;
  double gradient_time = 1.0;
  double fd_step = 1e-4;
  double h_window = 0.1;
  double dt = 0.02;
  double exploration_scale = 0.1;
  std::vector<double> start_state;                // empty: all ones
  std::vector<std::vector<double>> probe_states;  // empty: start and start / 2
  bool vary_init = false;  // also redraw the initialisation per seed
  int workers = 1;
  std::vector<int> gap_widths{256, 1024, 4096, 16384};
  int gap_states = 100;
  double gap_radius = 1.0;
};

struct LieSection {
  int num_policies = 20;
  double t_min = 0.002;
  double t_max = 0.1;
  int t_points = 8;
  std::optional<std::vector<double>> t_grid;
  double dt_ref = 1e-4;
  std::optional<std::vector<double>> state;
  std::string mode = "family";  // family | linearised
};

struct ExperimentConfig {
  Experiment experiment = Experiment::toy_dim;
  std::uint64_t seed = 0;
  std::string output = "out";
  bool full = false;
  std::string input;  // estimate_dim point cloud
  SystemCatalogEntry system;
  PolicySection policy;
  std::map<std::string, std::vector<double>> sweep;
  SamplingSection sampling;
  EstimatorSection estimator;
  TrainingSection training;
  LieSection lie;
};

namespace detail {

inline const std::set<std::string>& sections_for(Experiment e) {
  static const std::map<Experiment, std::set<std::string>> table{
      {Experiment::toy_dim, {"system", "policy", "sweep", "sampling", "estimator"}},
      {Experiment::local_spectrum, {"system", "policy", "sweep", "sampling", "training"}},
      {Experiment::lie_check, {"system", "policy", "lie"}},
      {Experiment::estimate_dim, {"estimator", "input"}},
      {Experiment::train_stats, {"system", "training"}},
      {Experiment::reachability, {"system"}}};
  return table.at(e);
}

inline void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& item : obj.items())
    if (!allowed.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
}

template <class T>
void read(const json& obj, const char* key, T& target, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    target = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where);
  }
}

inline Mat read_matrix(const json& value, const std::string& what) {
  if (!value.is_array() || value.empty()) throw ConfigError(what + " must be a non-empty array of rows");
  const std::size_t cols = value.front().is_array() ? value.front().size() : 0;
  if (cols == 0) throw ConfigError(what + " rows must be non-empty arrays");
  Mat m(static_cast<Eigen::Index>(value.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!value[i].is_array() || value[i].size() != cols) throw ConfigError(what + " is ragged");
    for (std::size_t j = 0; j < cols; ++j) {
      if (!value[i][j].is_number()) throw ConfigError(what + " entries must be numbers");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = value[i][j].get<double>();
    }
  }
  return m;
}

inline json matrix_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline void positive(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace detail

/// Defaults that differ between experiments.
inline ExperimentConfig default_config(Experiment e) {
  ExperimentConfig c;
  c.experiment = e;
  switch (e) {
    case Experiment::toy_dim:
      c.system.name = "chain_integrator";
      c.sweep["state_dim"] = {3, 4, 5, 6, 7, 8, 9, 10};
      break;
    case Experiment::local_spectrum:
      c.system.name = "cartpole";
      c.sweep["delta"] = {0.01, 0.02, 0.05, 0.1};
      c.sampling.num_policies = 2000;
      c.sampling.full_num_policies = 2000;
      c.sampling.samples_per_policy = 10;
      c.sampling.integration_dt = 1e-3;
      c.sampling.base_state = std::vector<double>{0.1, 0.5, 0.2, -0.3};
      break;
    case Experiment::lie_check:
      c.system.name = "pendulum";
      c.lie.state = std::vector<double>{0.3, -0.2};
      break;
    case Experiment::train_stats:
      c.system.name = "chain_integrator";
      c.system.parameters["state_dim"] = 1;
      break;
    case Experiment::reachability:
      c.system.name = "chain_integrator";
      c.system.parameters["state_dim"] = 10;
      break;
    case Experiment::estimate_dim:
      c.estimator.subsample_size = 10000;
      break;
  }
  return c;
}

/// Parses a config document. `fallback` names the experiment when the document omits it.
inline ExperimentConfig parse_config(const json& doc, std::optional<Experiment> fallback = std::nullopt) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  Experiment e;
  if (doc.contains("experiment")) {
    if (!doc["experiment"].is_string()) throw ConfigError("'experiment' must be a string");
    const auto it = experiment_names().find(doc["experiment"].get<std::string>());
    if (it == experiment_names().end()) throw ConfigError("unknown experiment '" + doc["experiment"].get<std::string>() + "'");
    e = it->second;
    if (fallback && *fallback != e)
      throw ConfigError("config is for experiment '" + it->first + "' but subcommand runs '" + experiment_name(*fallback) + "'");
  } else if (fallback) {
    e = *fallback;
  } else {
    throw ConfigError("config does not name an experiment");
  }

  ExperimentConfig c = default_config(e);
  std::set<std::string> allowed{"experiment", "seed", "output", "full", "description"};
  for (const auto& s : detail::sections_for(e)) allowed.insert(s);
  detail::check_keys(doc, "config", allowed);
  detail::read(doc, "seed", c.seed, "config");
  detail::read(doc, "output", c.output, "config");
  detail::read(doc, "full", c.full, "config");
  detail::read(doc, "input", c.input, "config");

  if (doc.contains("system")) {
    const json& s = doc["system"];
    detail::check_keys(s, "system", {"name", "parameters", "A", "B"});
    if (s.contains("name")) {
      detail::read(s, "name", c.system.name, "system");
      if (!s.contains("parameters")) c.system.parameters.clear();
    }
    if (s.contains("parameters")) {
      const json& p = s["parameters"];
      if (!p.is_object()) throw ConfigError("system.parameters must be an object");
      c.system.parameters.clear();
      for (const auto& item : p.items()) {
        if (!item.value().is_number()) throw ConfigError("system parameter '" + item.key() + "' must be a number");
        c.system.parameters[item.key()] = item.value().get<double>();
      }
    }
    if (s.contains("A")) c.system.a = detail::read_matrix(s["A"], "system.A");
    if (s.contains("B")) c.system.b = detail::read_matrix(s["B"], "system.B");
  }
  if (doc.contains("policy")) {
    const json& p = doc["policy"];
    detail::check_keys(p, "policy", {"width", "radius", "seed", "augment_state"});
    detail::read(p, "width", c.policy.width, "policy");
    detail::read(p, "radius", c.policy.radius, "policy");
    detail::read(p, "seed", c.policy.seed, "policy");
    detail::read(p, "augment_state", c.policy.augment_state, "policy");
  }
  if (doc.contains("sweep")) {
    const json& s = doc["sweep"];
    const std::string key = e == Experiment::toy_dim ? "state_dim" : "delta";
    detail::check_keys(s, "sweep", {key});
    detail::read(s, key.c_str(), c.sweep[key], "sweep");
  }
  if (doc.contains("sampling")) {
    const json& s = doc["sampling"];
    detail::check_keys(s, "sampling",
                       {"num_policies", "full_num_policies", "delta", "dt_sample", "samples_per_policy",
                        "integration_dt", "base_state", "base_value", "workers", "mode"});
    auto& t = c.sampling;
    detail::read(s, "num_policies", t.num_policies, "sampling");
    detail::read(s, "full_num_policies", t.full_num_policies, "sampling");
    detail::read(s, "delta", t.delta, "sampling");
    detail::read(s, "dt_sample", t.dt_sample, "sampling");
    detail::read(s, "samples_per_policy", t.samples_per_policy, "sampling");
    detail::read(s, "integration_dt", t.integration_dt, "sampling");
    if (s.contains("base_state")) {
      std::vector<double> b;
      detail::read(s, "base_state", b, "sampling");
      t.base_state = b;
    }
    detail::read(s, "base_value", t.base_value, "sampling");
    detail::read(s, "workers", t.workers, "sampling");
    detail::read(s, "mode", t.mode, "sampling");
  }
  if (doc.contains("estimator")) {
    const json& s = doc["estimator"];
    detail::check_keys(s, "estimator", {"subsamples", "subsample_size", "trim_fraction"});
    detail::read(s, "subsamples", c.estimator.subsamples, "estimator");
    detail::read(s, "subsample_size", c.estimator.subsample_size, "estimator");
    detail::read(s, "trim_fraction", c.estimator.trim_fraction, "estimator");
  }
  if (doc.contains("training")) {
    const json& s = doc["training"];
    detail::check_keys(s, "training",
                       {"eta0", "batch", "widths", "seeds", "gradient_time", "fd_step", "h_window", "dt",
                        "exploration_scale", "start_state", "probe_states", "vary_init", "workers",
                        "gap_widths", "gap_states", "gap_radius"});
    auto& t = c.training;
    detail::read(s, "eta0", t.eta0, "training");
    detail::read(s, "batch", t.batch, "training");
    detail::read(s, "widths", t.widths, "training");
    detail::read(s, "seeds", t.seeds, "training");
    detail::read(s, "gradient_time", t.gradient_time, "training");
    detail::read(s, "fd_step", t.fd_step, "training");
    detail::read(s, "h_window", t.h_window, "training");
    detail::read(s, "dt", t.dt, "training");
    detail::read(s, "exploration_scale", t.exploration_scale, "training");
    detail::read(s, "start_state", t.start_state, "training");
    detail::read(s, "probe_states", t.probe_states, "training");
    detail::read(s, "vary_init", t.vary_init, "training");
    detail::read(s, "workers", t.workers, "training");
    detail::read(s, "gap_widths", t.gap_widths, "training");
    detail::read(s, "gap_states", t.gap_states, "training");
    detail::read(s, "gap_radius", t.gap_radius, "training");
  }
  if (doc.contains("lie")) {
    const json& s = doc["lie"];
    detail::check_keys(s, "lie", {"num_policies", "t_min", "t_max", "t_points", "t_grid", "dt_ref", "state", "mode"});
    auto& t = c.lie;
    detail::read(s, "num_policies", t.num_policies, "lie");
    detail::read(s, "t_min", t.t_min, "lie");
    detail::read(s, "t_max", t.t_max, "lie");
    detail::read(s, "t_points", t.t_points, "lie");
    if (s.contains("t_grid")) {
      std::vector<double> g;
      detail::read(s, "t_grid", g, "lie");
      t.t_grid = g;
    }
    detail::read(s, "dt_ref", t.dt_ref, "lie");
    if (s.contains("state")) {
      std::vector<double> v;
      detail::read(s, "state", v, "lie");
      t.state = v;
    }
    detail::read(s, "mode", t.mode, "lie");
  }
  return c;
}

/// Range checks that do not need a built system.
inline void validate(const ExperimentConfig& c) {
  using detail::positive;
  positive(c.policy.width >= 1, "policy.width must be >= 1");
  positive(c.policy.radius > 0.0 && std::isfinite(c.policy.radius), "policy.radius must be positive");
  const auto& s = c.sampling;
  positive(s.num_policies >= 1 && s.full_num_policies >= 1, "sampling.num_policies must be >= 1");
  positive(s.delta > 0.0 && s.dt_sample > 0.0, "sampling.delta and dt_sample must be positive");
  positive(s.samples_per_policy >= 0, "sampling.samples_per_policy must be >= 0");
  positive(s.integration_dt >= 0.0, "sampling.integration_dt must be >= 0");
  positive(s.workers >= 1, "sampling.workers must be >= 1");
  positive(s.mode == "sampled" || s.mode == "trained", "sampling.mode must be 'sampled' or 'trained'");
  if (c.experiment == Experiment::toy_dim) {
    const double ratio = s.delta / s.dt_sample;
    positive(std::abs(ratio - std::round(ratio)) <= 1e-9 * std::max(1.0, ratio),
             "sampling.dt_sample must divide sampling.delta");
  }
  if (s.integration_dt > 0.0 && s.samples_per_policy == 0) {
    const double ratio = s.dt_sample / s.integration_dt;
    positive(ratio >= 1.0 - 1e-9 && std::abs(ratio - std::round(ratio)) <= 1e-9 * ratio,
             "sampling.integration_dt must divide sampling.dt_sample");
  }
  const auto& e = c.estimator;
  positive(e.subsamples >= 1, "estimator.subsamples must be >= 1");
  positive(e.subsample_size >= 3, "estimator.subsample_size must be >= 3");
  positive(e.trim_fraction >= 0.0 && e.trim_fraction < 0.5, "estimator.trim_fraction must be in [0, 0.5)");
  const auto& t = c.training;
  positive(t.eta0 > 0.0, "training.eta0 must be positive");
  positive(t.batch >= 1, "training.batch must be >= 1");
  positive(t.seeds >= 2, "training.seeds must be >= 2");
  positive(t.gradient_time >= 0.0, "training.gradient_time must be >= 0");
  positive(t.fd_step > 0.0 && t.h_window > 0.0 && t.dt > 0.0, "training.fd_step, h_window and dt must be positive");
  positive(t.exploration_scale >= 0.0, "training.exploration_scale must be >= 0");
  positive(t.workers >= 1, "training.workers must be >= 1");
  positive(t.gap_states >= 1 && t.gap_radius > 0.0, "training.gap_states and gap_radius must be positive");
  for (int w : t.widths) positive(w >= 1, "training.widths must be >= 1");
  for (int w : t.gap_widths) positive(w >= 1, "training.gap_widths must be >= 1");
  const auto& l = c.lie;
  positive(l.num_policies >= 1, "lie.num_policies must be >= 1");
  positive(l.t_points >= 2 && l.t_min > 0.0 && l.t_max > l.t_min, "lie t range must satisfy 0 < t_min < t_max");
  positive(l.dt_ref > 0.0, "lie.dt_ref must be positive");
  positive(l.mode == "family" || l.mode == "linearised", "lie.mode must be 'family' or 'linearised'");
  if (c.experiment == Experiment::train_stats)
    positive(t.widths.size() >= 2, "training.widths needs at least two entries");
  if (c.experiment == Experiment::estimate_dim) positive(!c.input.empty(), "estimate_dim needs an input CSV");
  for (const auto& [key, values] : c.sweep) {
    positive(!values.empty(), "sweep." + key + " must not be empty");
    for (double v : values) {
      if (key == "state_dim") positive(v >= 1.0 && v == std::floor(v) && v <= 1000.0, "sweep.state_dim must hold positive integers");
      else positive(v > 0.0 && std::isfinite(v), "sweep." + key + " must hold positive values");
    }
  }
}

/// The effective configuration, defaults included. Feeding it back reproduces the run.
inline json to_json(const ExperimentConfig& c) {
  json doc;
  doc["experiment"] = experiment_name(c.experiment);
  doc["seed"] = c.seed;
  doc["output"] = c.output;
  doc["full"] = c.full;
  const auto& sections = detail::sections_for(c.experiment);
  if (sections.count("input")) doc["input"] = c.input;
  if (sections.count("system")) {
    json s;
    s["name"] = c.system.name;
    s["parameters"] = json::object();
    for (const auto& [k, v] : c.system.parameters) s["parameters"][k] = v;
    if (c.system.a) s["A"] = detail::matrix_json(*c.system.a);
    if (c.system.b) s["B"] = detail::matrix_json(*c.system.b);
    doc["system"] = s;
  }
  if (sections.count("policy"))
    doc["policy"] = {{"width", c.policy.width},
                     {"radius", c.policy.radius},
                     {"seed", c.policy.seed},
                     {"augment_state", c.policy.augment_state}};
  if (sections.count("sweep")) {
    doc["sweep"] = json::object();
    for (const auto& [k, v] : c.sweep) doc["sweep"][k] = v;
  }
  if (sections.count("sampling")) {
    const auto& s = c.sampling;
    json j{{"num_policies", s.num_policies},
           {"full_num_policies", s.full_num_policies},
           {"delta", s.delta},
           {"dt_sample", s.dt_sample},
           {"samples_per_policy", s.samples_per_policy},
           {"integration_dt", s.integration_dt},
           {"base_value", s.base_value},
           {"workers", s.workers},
           {"mode", s.mode}};
    if (s.base_state) j["base_state"] = *s.base_state;
    doc["sampling"] = j;
  }
  if (sections.count("estimator"))
    doc["estimator"] = {{"subsamples", c.estimator.subsamples},
                        {"subsample_size", c.estimator.subsample_size},
                        {"trim_fraction", c.estimator.trim_fraction}};
  if (sections.count("training")) {
    const auto& t = c.training;
    doc["training"] = {{"eta0", t.eta0},
                       {"batch", t.batch},
                       {"widths", t.widths},
                       {"seeds", t.seeds},
                       {"gradient_time", t.gradient_time},
                       {"fd_step", t.fd_step},
                       {"h_window", t.h_window},
                       {"dt", t.dt},
                       {"exploration_scale", t.exploration_scale},
                       {"start_state", t.start_state},
                       {"probe_states", t.probe_states},
                       {"vary_init", t.vary_init},
                       {"workers", t.workers},
                       {"gap_widths", t.gap_widths},
                       {"gap_states", t.gap_states},
                       {"gap_radius", t.gap_radius}};
  }
  if (sections.count("lie")) {
    const auto& l = c.lie;
    json j{{"num_policies", l.num_policies}, {"t_min", l.t_min}, {"t_max", l.t_max},
           {"t_points", l.t_points},         {"dt_ref", l.dt_ref}, {"mode", l.mode}};
    if (l.t_grid) j["t_grid"] = *l.t_grid;
    if (l.state) j["state"] = *l.state;
    doc["lie"] = j;
  }
  return doc;
}

/// 64-bit FNV-1a of the canonical (sorted-key, compact) dump, as 16 hex digits.
inline std::string config_hash(const json& doc) {
  const std::string text = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path);
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
}

}  // namespace attainable::harness
