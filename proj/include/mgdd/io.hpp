#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mgdd/archive.hpp"
#include "mgdd/solution.hpp"

namespace mgdd {

inline constexpr int kSnapshotVersion = 1;

/// Finite-volume snapshots together with the layout needed to interpret them.
/// `values` holds one row per snapshot in the unknown ordering of
/// Discretization.
struct Snapshots {
  std::vector<Index> cells;                 // per edge
  std::vector<double> lengths;              // per edge
  std::vector<std::int64_t> vertex_ids;     // per vertex
  double epsilon = 0.05;
  double alpha = 1.0;
  Eigen::VectorXd times;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> values;

  Index num_dofs() const { return values.cols(); }
  Trajectory trajectory() const;
};

Snapshots make_snapshots(const Trajectory& trajectory, const MetricGraph& graph,
                         const Discretization& disc);

/// "MGDDSNAP <version> <header bytes>\n", a JSON header, then times and
/// values as little-endian float64.
void save_snapshots(const Snapshots& s, const std::filesystem::path& path);
Snapshots load_snapshots(const std::filesystem::path& path);

/// Columns time,kind,id,cell,x,rho.  Interior nodes are written as kind
/// "edge" with the edge index, vertex unknowns as kind "vertex" with the
/// vertex id and an empty x.
void write_trajectory_csv(const Trajectory& trajectory, const MetricGraph& graph,
                          const Discretization& disc, const std::filesystem::path& path);

/// Density along every edge at the given times: time,edge,x,rho[,rho_ref].
void write_profile_csv(const GraphSolution& solution, const GraphSolution* reference,
                       const Eigen::VectorXd& times, Index nx, const std::filesystem::path& path);

/// Shortest decimal form that reads back to the same double.
std::string format_double(double value);

}  // namespace mgdd
