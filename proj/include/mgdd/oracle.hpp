#pragma once

#include <map>
#include <mutex>

#include "mgdd/surrogate.hpp"

namespace mgdd {

/// Exact single-edge finite-volume solve used as a surrogate.  Boundary data
/// are decoded from the edge type: Robin rates on the exterior end(s),
/// prescribed fluxes elsewhere.  Rates act at t_{n-1}, prescribed fluxes at
/// t_n, matching the discrete fluxes reported by the graph solver.
///
/// Tangents are propagated forward through every step; the tape runs the
/// discrete adjoint sweep.
class FvmOracle : public EdgeSurrogate {
 public:
  explicit FvmOracle(FvmConfig fvm = {}, SensorGrids grids = {});

  std::string name() const override { return "fvm-oracle"; }
  double epsilon() const override { return fvm_.epsilon; }
  const SensorGrids& grids() const override { return grids_; }
  std::array<double, 2> resolution() const override;

  EdgeValues evaluate(const SensorInput& s, const QueryPoints& q,
                      const Eigen::MatrixXd* directions = nullptr) const override;
  std::unique_ptr<EdgeTape> record(const SensorInput& s, const QueryPoints& q) const override;

  const FvmConfig& config() const { return fvm_; }

  struct Run;

 private:
  Run forward(const SensorInput& s) const;
  const Eigen::MatrixXd& projection(double length) const;

  FvmConfig fvm_;
  SensorGrids grids_;
  mutable std::mutex mutex_;
  mutable std::map<double, Eigen::MatrixXd> projections_;
};

/// In-place solve of a symmetric tridiagonal system with constant
/// off-diagonal `off`, for every row of `rhs` (columns are unknowns).
void solve_tridiagonal(const Eigen::VectorXd& diag, double off, Eigen::Ref<Eigen::MatrixXd> rhs);

}  // namespace mgdd
