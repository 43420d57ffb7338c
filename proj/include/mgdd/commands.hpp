#pragma once

#include <filesystem>
#include <iosfwd>

#include "mgdd/config.hpp"

namespace mgdd {

/// Exit codes shared by all commands.
enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitUsage = 2, kExitInvariant = 3 };

/// Graph, ground-truth data and discretization of one configured instance.
/// `base` keeps the spec velocities, `graph` carries the sampled ones.
struct ProblemSetup {
  MetricGraph base;
  MetricGraph graph;
  BoundaryData data;
  Discretization disc;
};

ProblemSetup prepare_problem(const RunConfig& config, std::uint64_t seed,
                             const std::filesystem::path& base_dir = {});

SurrogateSet make_surrogates(const RunConfig& config, const std::filesystem::path& base_dir = {});

/// Each command writes into config.output (created if needed), starting with
/// the resolved config.ini, and prints a short summary to `log`.
int cmd_simulate(const RunConfig& config, const std::filesystem::path& base_dir, std::ostream& log);
int cmd_generate(const RunConfig& config, const std::filesystem::path& base_dir, std::ostream& log);
int cmd_couple(const RunConfig& config, const std::filesystem::path& base_dir, std::ostream& log);
int cmd_invert(const RunConfig& config, const std::filesystem::path& base_dir, std::ostream& log);
int cmd_errors(const RunConfig& config, const std::filesystem::path& base_dir, std::ostream& log);

}  // namespace mgdd
