#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

namespace mgdd {

using Index = Eigen::Index;

struct AdamConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Index iterations = 2000;
  double grad_tol = 1e-6;
  double clip_norm = 1.0;  // <= 0 disables clipping
  /// Exponential decay towards this rate at the last iteration; <= 0 keeps the rate constant.
  double final_learning_rate = 0.0;

  double rate(Index step) const;
};

class Adam {
 public:
  Adam(Index size, AdamConfig config);
  /// One update of x from the gradient g, after clipping g to config.clip_norm.
  void step(Eigen::VectorXd& x, const Eigen::VectorXd& g);
  Index steps() const { return t_; }

 private:
  AdamConfig config_;
  Eigen::VectorXd m_, v_;
  Index t_ = 0;
};

/// Returns the loss and writes the gradient into the second argument.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct OptimizationResult {
  Eigen::VectorXd best;     // iterate with the lowest loss seen
  double best_loss = 0.0;
  double final_loss = 0.0;  // loss at the last evaluated iterate
  double final_grad_norm = 0.0;
  Index iterations = 0;     // gradient evaluations
  bool converged = false;   // gradient norm reached grad_tol
  std::vector<double> history;
};

/// Adam with clipping.  Throws std::runtime_error on a non-finite loss.
OptimizationResult minimize_adam(const Objective& objective, Eigen::VectorXd x0,
                                 const AdamConfig& config);

}  // namespace mgdd
