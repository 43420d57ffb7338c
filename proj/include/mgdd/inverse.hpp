#pragma once

#include <iosfwd>
#include <string>

#include "mgdd/coupling.hpp"

namespace mgdd {

/// Density and flux series at one sensor position per edge.
struct MeasurementSet {
  Eigen::VectorXd times;
  Eigen::VectorXd positions;  // per edge, local coordinate
  std::vector<Eigen::VectorXd> density;
  std::vector<Eigen::VectorXd> flux;
  double noise = 0.0;

  Index num_edges() const { return positions.size(); }
};

/// Samples `reference` at the edge midpoints on n_meas uniform times and adds
/// N(0, noise^2) to every value.
MeasurementSet synthesize_measurements(const GraphSolution& reference, Index n_meas, double noise,
                                       std::uint64_t seed);

/// (1/|E|) sum_e (1/n_meas) sum_j (rho_e - rho^meas)^2 + (J_e - j^meas)^2.
double measurement_loss(const GraphSolution& solution, const MeasurementSet& m);

struct InverseConfig {
  CouplingConfig coupling;
  Index init_n_beta = 10;
  double init_length_scale = 0.2;
  double measurement_weight = 1.0;
  double initial_velocity = 1.0;
};

struct InverseUnknowns {
  Eigen::VectorXd traces;
  std::vector<Eigen::VectorXd> init_beta;  // per edge
  Eigen::VectorXd log_velocity;            // nu_e = exp(theta_e)
};

/// Joint coupling and measurement misfit over traces, initial data and velocities.
/// The parameter vector is [traces, init coefficients edge by edge, log velocities].
class InverseProblem {
 public:
  InverseProblem(const MetricGraph& graph, const BoundaryData& rates, MeasurementSet measurements,
                 SurrogateSet surrogates, InverseConfig config = {});

  Index num_parameters() const;
  Eigen::VectorXd initial_guess() const;
  InverseUnknowns unpack(const Eigen::VectorXd& x) const;
  Eigen::VectorXd pack(const InverseUnknowns& u) const;

  std::vector<SensorInput> sensor_inputs(const Eigen::VectorXd& x) const;
  /// Initial profile of edge e on the sensor grid, logistic of the RBF expansion.
  Eigen::VectorXd initial_profile(const InverseUnknowns& u, Index e) const;

  double loss(const Eigen::VectorXd& x) const;
  double loss_and_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const;
  /// Coupling and weighted measurement parts separately.
  std::pair<double, double> loss_parts(const Eigen::VectorXd& x) const;

  const CouplingProblem& coupling() const { return coupling_; }
  const MeasurementSet& measurements() const { return measurements_; }

 private:
  double evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* grad, double* coupling_part) const;

  CouplingProblem coupling_;
  MeasurementSet measurements_;
  InverseConfig config_;
  std::vector<Eigen::MatrixXd> init_basis_;  // n_init x init_n_beta per edge
  std::vector<QueryPoints> meas_points_;
};

/// Solution, initial data and velocities of a graph problem.
struct GraphState {
  std::shared_ptr<const GraphSolution> solution;
  std::vector<UniformSeries> initial;
  Eigen::VectorXd velocity;
};

struct InverseResult {
  InverseUnknowns unknowns;
  OptimizationResult optimization;
  GraphState state;
};

InverseResult identify(const MetricGraph& graph, const BoundaryData& rates, const MeasurementSet& m,
                       const SurrogateSet& surrogates, const InverseConfig& config = {});

struct ErrorMetrics {
  double solution_abs = 0.0;
  double solution_rel = 0.0;
  double init_abs = 0.0;
  double init_rel = 0.0;
  double velocity_abs = 0.0;
  double velocity_rel = 0.0;
};

/// Space-time L2 of the solution, L2 of the initial data over all edges
/// (trapezoidal, n_space points per edge) and l2 of the velocity vector.
ErrorMetrics error_report(const GraphState& recovered, const GraphState& reference,
                          Index n_time = 101, Index n_space = 101);

std::string error_csv_header();
std::string error_csv_row(const std::string& graph_id, double noise, const ErrorMetrics& m);

}  // namespace mgdd
