#pragma once

#include <concepts>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "mgdd/graph.hpp"

namespace mgdd {

class FvmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Pointwise kernels

/// Saturating nonlinearity f(rho) = rho (1 - rho).
template <std::floating_point Scalar>
constexpr Scalar saturation(Scalar rho) {
  return rho * (Scalar(1) - rho);
}

template <std::floating_point Scalar>
constexpr Scalar saturation_derivative(Scalar rho) {
  return Scalar(1) - Scalar(2) * rho;
}

template <typename Derived>
auto saturation(const Eigen::ArrayBase<Derived>& rho) {
  return rho * (typename Derived::Scalar(1) - rho);
}

/// Convective nonlinearity with f(0) = f(1) = 0.
struct Nonlinearity {
  std::function<double(double)> value;
  std::function<double(double)> derivative;

  double operator()(double rho) const { return value(rho); }

  static Nonlinearity saturating();
};

/// Lax-Friedrichs flux for velocity * f, stabilized with alpha.
template <typename Scalar>
constexpr Scalar lax_friedrichs_flux(Scalar left, Scalar right, Scalar velocity, Scalar alpha) {
  return velocity / Scalar(2) * (saturation(left) + saturation(right)) -
         alpha / Scalar(2) * (right - left);
}

inline double lax_friedrichs_flux(double left, double right, double velocity, double alpha,
                                  const Nonlinearity& f) {
  return 0.5 * velocity * (f(left) + f(right)) - 0.5 * alpha * (right - left);
}

// ---------------------------------------------------------------------------
// Sampled data

/// Values sampled on a uniform grid over [start, stop] (both ends included),
/// evaluated by linear interpolation.  An empty series evaluates to zero.
struct UniformSeries {
  double start = 0.0;
  double stop = 1.0;
  Eigen::VectorXd values;

  bool empty() const { return values.size() == 0; }
  Index size() const { return values.size(); }
  double spacing() const { return (stop - start) / static_cast<double>(values.size() - 1); }
  double operator()(double s) const;
  Eigen::VectorXd grid() const;

  static UniformSeries sample(const std::function<double(double)>& fn, double start, double stop,
                              Index count);
  static UniformSeries constant(double value, double start, double stop, Index count = 2);
};

/// Initial profiles per edge and rate series per vertex.  Rate vectors are
/// indexed by vertex; interior vertices and rate-free exterior vertices hold
/// empty series.
struct BoundaryData {
  std::vector<UniformSeries> inflow;
  std::vector<UniformSeries> outflow;
  std::vector<UniformSeries> initial;

  static BoundaryData zeros(const MetricGraph& graph, double final_time = 1.0);
  double inflow_rate(Index v, double t) const;
  double outflow_rate(Index v, double t) const;
};

/// Checks ranges (0 <= init <= 1, rates >= 0) and sizes.  With `exclusive`
/// set, a vertex may not carry both rates at the same time sample.
void validate_boundary_data(const BoundaryData& data, const MetricGraph& graph,
                            bool exclusive = false);

// ---------------------------------------------------------------------------
// Discretization

struct FvmConfig {
  Index cells_per_edge = 64;
  Index time_steps = 100;
  double final_time = 1.0;
  double epsilon = 0.05;
  double alpha = 1.0;
  Nonlinearity nonlinearity = Nonlinearity::saturating();
};

/// Vertex-centred finite volumes: each edge carries nodes x_k = k h_e,
/// k = 0..n_e.  Nodes 1..n_e-1 are interior cells of width h_e; the end nodes
/// are the vertex unknowns whose patch is the union of the adjacent half-cells.
///
/// Unknown ordering: interior nodes edge by edge, then one unknown per vertex.
class Discretization {
 public:
  Discretization(const MetricGraph& graph, FvmConfig config);

  const FvmConfig& config() const { return config_; }
  Index num_dofs() const { return num_dofs_; }
  Index num_edges() const { return static_cast<Index>(cells_.size()); }
  Index cells(Index e) const { return cells_[static_cast<std::size_t>(e)]; }
  double h(Index e) const { return h_[static_cast<std::size_t>(e)]; }
  double length(Index e) const { return h(e) * static_cast<double>(cells(e)); }
  double min_h() const;
  double tau() const { return config_.final_time / static_cast<double>(config_.time_steps); }
  Index time_steps() const { return config_.time_steps; }

  Index vertex_dof(Index v) const { return vertex_offset_ + v; }
  /// Unknown holding node k of edge e; the end nodes map onto vertex unknowns.
  Index node_dof(Index e, Index k) const;
  double patch_measure(Index v) const { return patch_[static_cast<std::size_t>(v)]; }
  /// Lumped mass (control-volume measure) per unknown.
  const Eigen::VectorXd& masses() const { return masses_; }

  /// tau <= min h, the step restriction of the bound-preservation theorem.
  bool bound_preserving_step() const { return tau() <= min_h() * (1.0 + 1e-12); }

 private:
  FvmConfig config_;
  std::vector<Index> cells_;
  std::vector<double> h_;
  std::vector<Index> offsets_;
  std::vector<Index> origin_;
  std::vector<Index> target_;
  std::vector<double> patch_;
  Eigen::VectorXd masses_;
  Index vertex_offset_ = 0;
  Index num_dofs_ = 0;
};

/// Piecewise-constant finite-volume state at one time.
struct GraphField {
  Eigen::VectorXd values;
  double time = 0.0;
};

using Trajectory = std::vector<GraphField>;

/// Node values of edge e (n_e + 1 entries, vertex values at both ends).
Eigen::VectorXd edge_nodes(const GraphField& field, const Discretization& disc, Index e);

/// Exact integral of the piecewise-linear interpolant of `profile` over [a, b].
double integrate_profile(const UniformSeries& profile, double a, double b);

/// L2 projection of the sampled initial profiles onto the control volumes.
GraphField project_initial(const std::vector<UniformSeries>& initial, const MetricGraph& graph,
                           const Discretization& disc);

double total_mass(const GraphField& field, const Discretization& disc);

/// M + tau * eps * A over all unknowns (boundary rate terms excluded).
Eigen::SparseMatrix<double> assemble_implicit_operator(const MetricGraph& graph,
                                                       const Discretization& disc);

/// Implicit diffusion, explicit Lax-Friedrichs convection.  Boundary rates
/// are sampled at the old time level; the Robin factors (1 - rho), rho act on
/// the new level so that both bounds survive arbitrary rate magnitudes.
class FvmSolver {
 public:
  FvmSolver(const MetricGraph& graph, const Discretization& disc);

  GraphField step(const GraphField& state, const BoundaryData& data);

  /// Projects `data.initial`, marches all time steps and keeps every
  /// `stride`-th snapshot (first and last always kept).
  Trajectory simulate(const BoundaryData& data, Index stride = 1);
  Trajectory simulate_from(const GraphField& initial, const BoundaryData& data, Index steps,
                           Index stride = 1);

  /// Relative residual of the most recent linear solve.
  double last_residual() const { return last_residual_; }

 private:
  void refactor(const Eigen::VectorXd& rate_diagonal);

  const MetricGraph* graph_;
  const Discretization* disc_;
  Eigen::SparseMatrix<double> base_;
  Eigen::SparseMatrix<double> system_;
  Eigen::VectorXd rate_diagonal_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  bool factored_ = false;
  double last_residual_ = 0.0;
};

Trajectory simulate(const MetricGraph& graph, const Discretization& disc, const BoundaryData& data,
                    Index stride = 1);

// ---------------------------------------------------------------------------
// Discrete fluxes

/// Total (diffusive + convective) fluxes of one time step on one edge.
/// `face[k]` is the flux through x_{k+1/2}; the end fluxes follow from the
/// half-cell balances of the two vertex nodes.
struct StepFluxes {
  Eigen::VectorXd face;
  double origin = 0.0;
  double target = 0.0;
};

StepFluxes step_fluxes(const Eigen::VectorXd& previous, const Eigen::VectorXd& current, double h,
                       double tau, double velocity, const FvmConfig& config);

/// Flux at x from the piecewise-linear interpolant through
/// (0, origin), (h/2, face[0]), ..., (l - h/2, face[n-1]), (l, target).
double interpolate_flux(const StepFluxes& fluxes, double h, double x);

/// Density and discrete flux of one edge along a stride-1 trajectory,
/// evaluable anywhere in [0, T] x [0, l].  Fluxes of step n are attached to
/// t_n; t_0 reuses the first step.
class EdgeHistory {
 public:
  EdgeHistory(const Trajectory& trajectory, const MetricGraph& graph, const Discretization& disc,
              Index e);

  double density(double t, double x) const;
  double flux(double t, double x) const;
  double origin_flux(double t) const { return flux(t, 0.0); }
  double target_flux(double t) const { return flux(t, length_); }
  const Eigen::MatrixXd& nodes() const { return nodes_; }
  double length() const { return length_; }

 private:
  Eigen::MatrixXd nodes_;   // (steps + 1) x (n_e + 1)
  std::vector<StepFluxes> fluxes_;
  double h_ = 0.0;
  double tau_ = 0.0;
  double t0_ = 0.0;
  double length_ = 0.0;
};

/// Locates s on a uniform grid with `intervals` intervals of width 1 in
/// index units: returns the left node and the weight of the right node.
std::pair<Index, double> locate(double s, Index intervals);

}  // namespace mgdd
