#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lumpflow/experiment.hpp"

using namespace lumpflow;

int main(int argc, char** argv) {
  CLI::App app{"lumpflow: wave maps on the torus and their adiabatic limit", "lumpflow"};
  app.set_version_flag("--version", std::string(LUMPFLOW_VERSION));
  app.require_subcommand(1, 1);

  std::string config_path, output_dir;
  std::optional<int> grid_n;
  std::optional<std::uint64_t> seed;
  std::vector<double> eps;
  bool quiet = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON); defaults when omitted");
    sub->add_option("--output", output_dir, "output directory (overrides output_dir)");
    sub->add_option("--grid-n", grid_n, "PDE grid size (overrides lattice.grid_n)");
    sub->add_option("--eps", eps, "eps ladder, descending (overrides eps_ladder)")->delimiter(',');
    sub->add_option("--seed", seed, "seed for randomized checks");
    sub->add_flag("--quiet", quiet, "suppress progress output");
  };

  const std::map<std::string, std::pair<std::string, int (*)(const ExperimentConfig&, std::ostream*)>> commands = {
      {"validate", {"run the invariant suites", &cmd_validate}},
      {"metric", {"L2 metric at q0", &cmd_metric}},
      {"geodesic", {"geodesic from (q0, q1)", &cmd_geodesic}},
      {"evolve", {"wave-map evolution from moduli data", &cmd_evolve}},
      {"spectrum", {"J and L kernel dimensions", &cmd_spectrum}},
      {"adiabatic", {"eps-ladder convergence study", &cmd_adiabatic}},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, entry] : commands) {
    subs[name] = app.add_subcommand(name, entry.first);
    add_common(subs[name]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  return run_guarded([&]() -> int {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig::from_json(nlohmann::json::object())
                                               : ExperimentConfig::load(config_path);
    if (grid_n) {
      if (cfg.metric_grid_n == cfg.lattice.grid_n) cfg.metric_grid_n = *grid_n;
      cfg.lattice.grid_n = *grid_n;
      cfg.q0.lattice.grid_n = *grid_n;
    }
    if (!eps.empty()) cfg.eps_ladder = eps;
    if (seed) cfg.seed = *seed;
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    cfg.validate();
    std::ostream* log = quiet ? nullptr : &std::cerr;
    for (const auto& [name, sub] : subs)
      if (sub->parsed()) return commands.at(name).second(cfg, log);
    return kExitConfig;
  });
}
