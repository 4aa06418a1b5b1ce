#include <attainable/harness/experiments.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <iostream>
#include <optional>
#include <string>

#ifndef ATTAINABLE_GIT_DESCRIBE
#define ATTAINABLE_GIT_DESCRIBE "unknown"
#endif

namespace {

using namespace attainable;
using namespace attainable::harness;

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool full = false;
  std::string input;
};

int run(Experiment e, const Flags& flags) {
  json doc = flags.config.empty() ? json::object() : load_json_file(flags.config);
  ExperimentConfig c = parse_config(doc, e);
  if (flags.seed) c.seed = *flags.seed;
  if (!flags.out.empty()) c.output = flags.out;
  if (flags.full) c.full = true;
  if (!flags.input.empty()) c.input = flags.input;
  validate(c);

  const auto start = std::chrono::steady_clock::now();
  ExperimentResult result = run_experiment(c);
  const double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const json record = write_outputs(c, result, ATTAINABLE_GIT_DESCRIBE, runtime);
  json brief;
  brief["experiment"] = record["experiment"];
  brief["config_hash"] = record["config_hash"];
  brief["seed"] = record["seed"];
  brief["output"] = c.output;
  brief["summary"] = record["summary"];
  std::cout << brief.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attained-set dimensionality experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ATTAINABLE_GIT_DESCRIBE));

  Flags flags;
  std::optional<Experiment> chosen;
  const std::vector<std::pair<std::string, Experiment>> commands{
      {"toy-dim", Experiment::toy_dim},           {"lie-check", Experiment::lie_check},
      {"estimate-dim", Experiment::estimate_dim}, {"local-spectrum", Experiment::local_spectrum},
      {"train-stats", Experiment::train_stats},   {"reachability", Experiment::reachability}};
  for (const auto& [name, experiment] : commands) {
    CLI::App* sub = app.add_subcommand(name, "Run the " + experiment_name(experiment) + " experiment");
    sub->add_option("--config", flags.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "Master seed (overrides the config)");
    sub->add_option("--out", flags.out, "Output directory (overrides the config)");
    sub->add_flag("--full", flags.full, "Paper-scale run instead of the reduced default");
    if (experiment == Experiment::estimate_dim) sub->add_option("--input", flags.input, "Point cloud CSV");
    const Experiment e = experiment;
    sub->callback([&chosen, e] { chosen = e; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    return run(*chosen, flags);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "numerical divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
