#pragma once

#include <memory>
#include <vector>

#include <json.hpp>

#include "mgdd/optim.hpp"
#include "mgdd/solution.hpp"

namespace mgdd {

class CouplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// z(t) = sum_k beta_k exp(-(t - t_k)^2 / l^2), centers uniform on [start, stop].
struct RbfBasis {
  Index size = 10;
  double length_scale = 0.2;
  double start = 0.0;
  double stop = 1.0;

  Eigen::VectorXd centers() const;
  /// points.size() x size evaluation matrix.
  Eigen::MatrixXd matrix(const Eigen::VectorXd& points) const;
};

enum class Endpoint { origin, target };

/// One unknown trace: an edge endpoint that touches an interior vertex.
struct TraceSlot {
  Index edge = 0;
  Endpoint end = Endpoint::origin;
  Index offset = 0;  // first coefficient in the parameter vector
};

class TraceLayout {
 public:
  TraceLayout(const MetricGraph& graph, Index n_beta);

  Index n_beta() const { return n_beta_; }
  Index size() const { return n_beta_ * static_cast<Index>(slots_.size()); }
  const std::vector<TraceSlot>& slots() const { return slots_; }
  /// Slot index of (e, end), or -1 if the endpoint is exterior.
  Index slot(Index e, Endpoint end) const;

 private:
  Index n_beta_;
  std::vector<TraceSlot> slots_;
  std::vector<std::array<Index, 2>> lookup_;
};

/// n_beta (|E_inflow| + |E_outflow| + 2 |E_inner|).
Index coupling_parameter_count(const MetricGraph& graph, Index n_beta);

struct CouplingParameters {
  RbfBasis basis;
  Eigen::VectorXd beta;
};

/// Zero coefficients for every unknown trace.
CouplingParameters init_parameters(const MetricGraph& graph, Index n_beta = 10,
                                   double length_scale = 0.2, double final_time = 1.0);

struct CouplingConfig {
  Index n_beta = 10;
  double length_scale = 0.2;
  Index n_times = 64;
  AdamConfig adam;
  FvmConfig fvm;  // rate shares follow the control volumes of this discretization
};

/// Sensor inputs with exterior traces from the boundary data, initial data
/// sampled on the sensor grid and unknown traces set to zero.
std::vector<SensorInput> base_sensor_inputs(const MetricGraph& graph, const BoundaryData& bc,
                                            const SensorGrids& grids, const FvmConfig& fvm);

/// Per-vertex coupling residuals, averaged over the time batch.
struct VertexResidual {
  Index vertex = 0;
  double continuity = 0.0;
  double kirchhoff = 0.0;
};

/// Tapes of every edge at the coupling times, endpoint values first:
/// rows [0, nt) at x = 0, [nt, 2 nt) at x = l, then the edge's extra points.
struct CouplingEvaluation {
  std::vector<std::unique_ptr<EdgeTape>> tapes;
  double loss = 0.0;
  std::vector<VertexResidual> residuals;
  std::vector<Eigen::VectorXd> rho_bar;
  std::vector<Eigen::VectorXd> flux_bar;

  /// Sensor gradients of sum(rho_bar . rho + flux_bar . flux), one per edge.
  std::vector<Eigen::VectorXd> pullback() const;
};

/// sum_i (1/|V_K|) sum_v (1/|E_v|) [ sum_{e<e'} (rho_e - rho_e')^2 + (sum_e J_e n_e(v))^2 ]
/// with the adjoint seeds of the loss filled in.
CouplingEvaluation evaluate_coupling(const MetricGraph& graph, const SurrogateSet& surrogates,
                                     const std::vector<SensorInput>& inputs,
                                     const Eigen::VectorXd& times,
                                     const std::vector<QueryPoints>* extra = nullptr);

/// Forward coupling problem over the trace coefficients.
class CouplingProblem {
 public:
  CouplingProblem(const MetricGraph& graph, const BoundaryData& bc, SurrogateSet surrogates,
                  CouplingConfig config = {});

  Index num_parameters() const { return layout_.size(); }
  const TraceLayout& layout() const { return layout_; }
  const RbfBasis& basis() const { return basis_; }
  const Eigen::VectorXd& times() const { return times_; }
  const SurrogateSet& surrogates() const { return surrogates_; }
  const MetricGraph& graph() const { return graph_; }

  std::vector<SensorInput> sensor_inputs(const Eigen::VectorXd& beta) const;
  double loss(const Eigen::VectorXd& beta) const;
  double loss_and_gradient(const Eigen::VectorXd& beta, Eigen::VectorXd& grad) const;
  std::vector<VertexResidual> residuals(const Eigen::VectorXd& beta) const;

  /// Writes B beta into the unknown traces of `inputs`.
  void apply_traces(const Eigen::VectorXd& beta, std::vector<SensorInput>& inputs) const;
  /// Chain rule from per-edge sensor gradients to the trace coefficients.
  void accumulate_trace_gradient(const std::vector<Eigen::VectorXd>& sensor_grads,
                                 Eigen::VectorXd& grad) const;

 private:
  MetricGraph graph_;
  SurrogateSet surrogates_;
  CouplingConfig config_;
  TraceLayout layout_;
  RbfBasis basis_;
  Eigen::MatrixXd origin_basis_;  // n_origin x n_beta
  Eigen::MatrixXd target_basis_;  // n_target x n_beta
  Eigen::VectorXd times_;
  std::vector<SensorInput> base_;
};

struct CouplingResult {
  CouplingParameters parameters;
  OptimizationResult optimization;
  std::vector<VertexResidual> residuals;
  std::shared_ptr<const SurrogateSolution> solution;
};

CouplingResult solve_graph(const MetricGraph& graph, const BoundaryData& bc,
                           const SurrogateSet& surrogates, const CouplingConfig& config = {});

nlohmann::json report_json(const CouplingResult& result, const MetricGraph& graph);

}  // namespace mgdd
