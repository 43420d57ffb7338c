#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mgdd/dataset.hpp"
#include "mgdd/inverse.hpp"

namespace mgdd {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a command needs.  Serialized as INI-style sections; every key
/// has a default so an empty file is a valid configuration.
struct RunConfig {
  std::uint64_t seed = 0;
  /// Graph spec path, or one of the built-in names "y", "diamond", "chain:N",
  /// "network:EDGES".
  std::string graph = "y";
  std::string output = "out";

  FvmConfig fvm;
  Index stride = 1;

  std::string data = "gp";  // gp | zero
  InstanceConfig instance{GpProfile::test};
  double t_smooth = 0.02;

  std::string surrogate = "oracle";  // oracle | archive:DIR with inflow/ inner/ outflow/
  SensorGrids grids;
  CouplingConfig coupling;

  InverseConfig inverse;
  double noise = 0.01;
  Index n_meas = 101;
  std::vector<double> noise_levels{0.01, 0.1};
  Index runs = 20;

  Index instances = 1;
  std::vector<std::string> train_graphs{"y", "diamond", "chain:3"};

  std::vector<double> plot_times{0.0, 0.25, 0.5, 0.75, 1.0};
  Index plot_points = 101;
};

RunConfig parse_config(const std::string& text);
RunConfig read_config(const std::filesystem::path& path);
std::string dump_config(const RunConfig& config);

/// Cross-field checks; throws ConfigError with the offending key.
void validate_config(const RunConfig& config);

/// Built-in name or file path; relative paths are resolved against `base`.
GraphSpec resolve_graph(const std::string& name, const std::filesystem::path& base = {});

}  // namespace mgdd
