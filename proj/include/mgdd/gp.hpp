#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include <Eigen/Core>

#include "mgdd/fvm.hpp"
#include "mgdd/graph.hpp"

namespace mgdd {

/// Finite RBF expansion g(x) = sum_k eta_k exp(-(x - x_k)^2 / l^2) on [0, 1].
struct GpField {
  Eigen::VectorXd centers;
  Eigen::VectorXd coefficients;
  double length_scale = 0.5;

  double operator()(double x) const;
  /// Pointwise standard deviation sqrt(sum_k phi_k(x)^2) of g under eta ~ N(0, I).
  double pointwise_std(double x) const;
  double standardized(double x) const { return (*this)(x) / pointwise_std(x); }
};

GpField sample_gp(std::uint64_t seed, Index count, double length_scale);

/// Independent 64-bit seed for a numbered stream of a base seed.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);

double logistic(double x);

enum class GpProfile { train, test };

struct GpProfileParams {
  Index count;
  double length_scale;
};

GpProfileParams profile_params(GpProfile profile);
std::string_view to_string(GpProfile profile);
GpProfile gp_profile_from_string(std::string_view name);

struct InstanceConfig {
  GpProfile profile = GpProfile::train;
  double rate_amplitude = 1.0;
  double velocity_min = 0.5;
  double velocity_max = 1.5;
  bool sample_velocities = true;
  Index space_samples = 101;
  Index time_samples = 101;
  double final_time = 1.0;
};

struct TrainingInstance {
  Eigen::VectorXd velocities;
  BoundaryData data;
};

/// One GP sample per edge (initial profile, logistic map) and per exterior
/// vertex with a role (rate, amplitude * max(g, 0)).
TrainingInstance make_training_instance(const MetricGraph& graph, std::uint64_t seed,
                                        const InstanceConfig& config = {});

/// Runs the scheme for t_smooth and samples each edge on the grid of its
/// original initial profile.
std::vector<UniformSeries> smooth_initial(const MetricGraph& graph, const BoundaryData& data,
                                          const FvmConfig& fvm, double t_smooth);

/// Linear interpolation of the node values of edge e at `count` uniform points.
UniformSeries sample_edge(const GraphField& field, const Discretization& disc, Index e,
                          Index count);

// ---------------------------------------------------------------------------
// Sensors

struct SensorGrids {
  Index n_origin = 101;
  Index n_target = 101;
  Index n_init = 101;
  double final_time = 1.0;

  Index n_sensor() const { return n_origin + n_target + n_init + 1; }
  Eigen::VectorXd origin_times() const { return Eigen::VectorXd::LinSpaced(n_origin, 0.0, final_time); }
  Eigen::VectorXd target_times() const { return Eigen::VectorXd::LinSpaced(n_target, 0.0, final_time); }
  Eigen::VectorXd init_points(double length) const { return Eigen::VectorXd::LinSpaced(n_init, 0.0, length); }
};

/// Conditioning input of one edge.  On inflow edges `origin` holds the Robin
/// rate of the origin vertex, on outflow edges `target` holds the rate of the
/// target vertex; every other trace is a flux value J(t, endpoint).
struct SensorInput {
  Eigen::VectorXd origin;
  Eigen::VectorXd target;
  Eigen::VectorXd init;
  double velocity = 1.0;
  EdgeType type = EdgeType::inner;
  double length = 1.0;
  double final_time = 1.0;

  /// Branch-net layout [origin, target, init, velocity].
  Eigen::VectorXd flatten() const;
  Index size() const { return origin.size() + target.size() + init.size() + 1; }
  UniformSeries origin_series() const { return {0.0, final_time, origin}; }
  UniformSeries target_series() const { return {0.0, final_time, target}; }
  UniformSeries init_series() const { return {0.0, length, init}; }

  static SensorInput unflatten(const Eigen::VectorXd& flat, const SensorGrids& grids, EdgeType type,
                               double length = 1.0);
};

/// Share of a vertex rate carried by edge e: (h_e / 2) / |I_v|.
double rate_share(const MetricGraph& graph, const Discretization& disc, Index e, Index v);

/// Per-edge sensor tuples from a stride-1 trajectory.
std::vector<SensorInput> extract_sensors(const Trajectory& trajectory, const MetricGraph& graph,
                                         const Discretization& disc, const BoundaryData& data,
                                         const SensorGrids& grids);

}  // namespace mgdd
