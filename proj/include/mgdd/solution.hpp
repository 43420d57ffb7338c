#pragma once

#include <memory>
#include <vector>

#include "mgdd/surrogate.hpp"

namespace mgdd {

/// Density and flux of a graph solution on every edge, queried in local
/// coordinates (t, x), x in [0, length(e)].
class GraphSolution {
 public:
  virtual ~GraphSolution() = default;
  virtual Index num_edges() const = 0;
  virtual double length(Index e) const = 0;
  virtual double final_time() const = 0;
  virtual Eigen::VectorXd density(Index e, const QueryPoints& q) const = 0;
  virtual Eigen::VectorXd flux(Index e, const QueryPoints& q) const = 0;
};

/// Reference solution from a stride-1 finite-volume trajectory.
class FvmSolution : public GraphSolution {
 public:
  FvmSolution(const Trajectory& trajectory, const MetricGraph& graph, const Discretization& disc);

  Index num_edges() const override { return static_cast<Index>(edges_.size()); }
  double length(Index e) const override { return edges_[static_cast<std::size_t>(e)].length(); }
  double final_time() const override { return final_time_; }
  Eigen::VectorXd density(Index e, const QueryPoints& q) const override;
  Eigen::VectorXd flux(Index e, const QueryPoints& q) const override;

 private:
  std::vector<EdgeHistory> edges_;
  double final_time_ = 1.0;
};

/// Per-edge surrogates conditioned on fixed sensor inputs.
class SurrogateSolution : public GraphSolution {
 public:
  SurrogateSolution(SurrogateSet surrogates, std::vector<SensorInput> inputs);

  Index num_edges() const override { return static_cast<Index>(inputs_.size()); }
  double length(Index e) const override { return inputs_[static_cast<std::size_t>(e)].length; }
  double final_time() const override { return surrogates_.grids().final_time; }
  Eigen::VectorXd density(Index e, const QueryPoints& q) const override;
  Eigen::VectorXd flux(Index e, const QueryPoints& q) const override;

  const std::vector<SensorInput>& inputs() const { return inputs_; }

 private:
  SurrogateSet surrogates_;
  std::vector<SensorInput> inputs_;
};

/// Tensor grid of nt times and nx positions on edge e, time-major.
QueryPoints space_time_grid(double final_time, double length, Index nt, Index nx);

/// sqrt(sum_e int_0^T int_0^l (a - b)^2 dx dt), trapezoidal rule on an
/// nt x nx grid per edge.  Without `b` the norm of `a`.
double space_time_l2(const GraphSolution& a, const GraphSolution* b, Index nt = 101, Index nx = 101);

/// Density of edge e on the space-time grid, nt x nx.
Eigen::MatrixXd density_grid(const GraphSolution& s, Index e, Index nt, Index nx);

}  // namespace mgdd
