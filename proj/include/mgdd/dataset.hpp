#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mgdd/archive.hpp"
#include "mgdd/gp.hpp"

namespace mgdd {

inline constexpr int kDatasetVersion = 1;

struct DatasetConfig {
  InstanceConfig instance;
  FvmConfig fvm;
  SensorGrids grids;
  double t_smooth = 0.02;
};

/// Leading metadata columns of every record, followed by the sensor vector.
inline constexpr Index kRecordMeta = 3;  // graph index, edge index, edge type code

/// One row per edge of every graph, graphs in order.
struct Dataset {
  std::vector<std::string> graph_names;
  std::vector<Index> graph_edges;
  std::vector<std::uint64_t> seeds;
  DatasetConfig config;
  std::vector<F32Rows> instances;

  Index record_width() const { return kRecordMeta + config.grids.n_sensor(); }
  Index records_per_instance() const;
};

float edge_type_code(EdgeType type);

/// Rows of one instance: GP data, smoothing, monolithic solve, sensor extraction.
F32Rows generate_instance(const std::vector<MetricGraph>& graphs, std::uint64_t seed,
                          const DatasetConfig& config);

Dataset generate_dataset(const std::vector<MetricGraph>& graphs,
                         const std::vector<std::string>& names,
                         const std::vector<std::uint64_t>& seeds, const DatasetConfig& config);

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

nlohmann::json config_to_json(const DatasetConfig& config);
DatasetConfig config_from_json(const nlohmann::json& doc);

}  // namespace mgdd
