#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mgdd/commands.hpp"
#include "mgdd/io.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Drift-diffusion on metric graphs: simulation, coupling and identification"};
  app.require_subcommand(1);
  std::string config_path, out, graph, surrogate;
  std::uint64_t seed = 0;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "Base seed");
    cmd->add_option("--out", out, "Output directory");
    cmd->add_option("--graph", graph, "Graph spec file or y | diamond | chain:N | network:EDGES");
    cmd->add_option("--surrogate", surrogate, "oracle | archive:DIR");
  };
  CLI::App* simulate = app.add_subcommand("simulate", "Monolithic finite-volume solve");
  CLI::App* generate = app.add_subcommand("generate", "Training dataset archive");
  CLI::App* couple = app.add_subcommand("couple", "Domain-decomposed solve with edge surrogates");
  CLI::App* invert = app.add_subcommand("invert", "Identify initial data and velocities");
  CLI::App* errors = app.add_subcommand("errors", "Identification errors over seeds and noise levels");
  app.add_subcommand("defaults", "Print the default config");
  for (CLI::App* cmd : {simulate, generate, couple, invert, errors}) add_common(cmd);
  CLI11_PARSE(app, argc, argv);

  CLI::App* cmd = app.get_subcommands().front();
  if (cmd->get_name() == "defaults") {
    std::cout << mgdd::dump_config(mgdd::RunConfig{});
    return mgdd::kExitOk;
  }

  if (const char* threads = std::getenv("MGDD_NUM_THREADS")) {
#ifdef _OPENMP
    omp_set_num_threads(std::max(1, std::atoi(threads)));
#endif
  }

  try {
    mgdd::RunConfig config = config_path.empty() ? mgdd::RunConfig{} : mgdd::read_config(config_path);
    const fs::path base = config_path.empty() ? fs::path{} : fs::path(config_path).parent_path();
    if (cmd->count("--seed")) config.seed = seed;
    if (!out.empty()) config.output = out;
    fs::path graph_base = base;
    if (!graph.empty()) {
      config.graph = graph;
      graph_base = fs::current_path();
    }
    if (!surrogate.empty()) config.surrogate = surrogate;
    mgdd::validate_config(config);

    const std::string& name = cmd->get_name();
    if (name == "simulate") return mgdd::cmd_simulate(config, graph_base, std::cout);
    if (name == "generate") return mgdd::cmd_generate(config, graph_base, std::cout);
    if (name == "couple") return mgdd::cmd_couple(config, graph_base, std::cout);
    if (name == "invert") return mgdd::cmd_invert(config, graph_base, std::cout);
    return mgdd::cmd_errors(config, graph_base, std::cout);
  } catch (const mgdd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return mgdd::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return mgdd::kExitError;
  }
}
