#pragma once

#include <array>
#include <memory>
#include <string>

#include <Eigen/Core>

#include "mgdd/gp.hpp"

namespace mgdd {

class SurrogateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QueryPoints {
  Eigen::VectorXd t;
  Eigen::VectorXd x;

  Index size() const { return t.size(); }
  static QueryPoints at_x(const Eigen::VectorXd& t, double x) {
    return {t, Eigen::VectorXd::Constant(t.size(), x)};
  }
};

/// Density and flux at the query points.  With directions D (n_sensor x k)
/// the rows of d_rho / d_flux hold the derivatives along the columns of D.
struct EdgeValues {
  Eigen::VectorXd rho;
  Eigen::VectorXd flux;
  Eigen::MatrixXd d_rho;
  Eigen::MatrixXd d_flux;
};

/// rho and its partial derivatives at the query points.
struct EdgeJets {
  Eigen::VectorXd rho;
  Eigen::VectorXd rho_t;
  Eigen::VectorXd rho_x;
  Eigen::VectorXd rho_xx;
};

/// Forward evaluation kept alive for one reverse sweep.
class EdgeTape {
 public:
  virtual ~EdgeTape() = default;
  const Eigen::VectorXd& rho() const { return rho_; }
  const Eigen::VectorXd& flux() const { return flux_; }
  /// Gradient of sum(rho_bar .* rho + flux_bar .* flux) with respect to the
  /// flattened sensor vector.
  virtual Eigen::VectorXd pullback(const Eigen::VectorXd& rho_bar,
                                   const Eigen::VectorXd& flux_bar) const = 0;

 protected:
  Eigen::VectorXd rho_;
  Eigen::VectorXd flux_;
};

/// Solution operator of a single edge conditioned on a SensorInput.
/// Implementations are immutable and safe to call concurrently.
class EdgeSurrogate {
 public:
  virtual ~EdgeSurrogate() = default;

  virtual std::string name() const = 0;
  virtual double epsilon() const = 0;
  virtual const SensorGrids& grids() const = 0;

  virtual EdgeValues evaluate(const SensorInput& s, const QueryPoints& q,
                              const Eigen::MatrixXd* directions = nullptr) const = 0;
  virtual std::unique_ptr<EdgeTape> record(const SensorInput& s, const QueryPoints& q) const = 0;

  /// Default: central differences of `evaluate` with steps `resolution()`.
  virtual EdgeJets jets(const SensorInput& s, const QueryPoints& q) const;
  /// Natural (dt, dx) resolution of the backend.
  virtual std::array<double, 2> resolution() const { return {1e-4, 1e-4}; }

  void check_input(const SensorInput& s) const;
};

/// One surrogate per edge type; all must share epsilon and sensor grids.
class SurrogateSet {
 public:
  SurrogateSet(std::shared_ptr<const EdgeSurrogate> inflow, std::shared_ptr<const EdgeSurrogate> inner,
               std::shared_ptr<const EdgeSurrogate> outflow);
  /// The same backend for every edge type.
  explicit SurrogateSet(std::shared_ptr<const EdgeSurrogate> all);

  const EdgeSurrogate& operator[](EdgeType type) const;
  double epsilon() const { return epsilon_; }
  const SensorGrids& grids() const { return grids_; }

 private:
  std::array<std::shared_ptr<const EdgeSurrogate>, 3> models_;
  double epsilon_ = 0.0;
  SensorGrids grids_;
};

struct EdgeLosses {
  double pde = 0.0;
  double init = 0.0;
  double edge = 0.0;
};

/// Mean squared residuals of the PDE at `pde_points`, of the initial data at
/// `init_x` and of the edge-type boundary conditions at `bc_times`.
EdgeLosses edge_loss(const EdgeSurrogate& model, const SensorInput& s, const QueryPoints& pde_points,
                     const Eigen::VectorXd& init_x, const Eigen::VectorXd& bc_times);

}  // namespace mgdd
