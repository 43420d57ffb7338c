#include "mgdd/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mgdd {

double AdamConfig::rate(Index step) const {
  if (final_learning_rate <= 0.0 || iterations <= 1) return learning_rate;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(iterations - 1));
  return learning_rate * std::pow(final_learning_rate / learning_rate, frac);
}

Adam::Adam(Index size, AdamConfig config)
    : config_(config), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

void Adam::step(Eigen::VectorXd& x, const Eigen::VectorXd& g) {
  Eigen::VectorXd grad = g;
  const double norm = grad.norm();
  if (config_.clip_norm > 0.0 && norm > config_.clip_norm) grad *= config_.clip_norm / norm;
  ++t_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  x.array() -= config_.rate(t_ - 1) * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
}

OptimizationResult minimize_adam(const Objective& objective, Eigen::VectorXd x0,
                                 const AdamConfig& config) {
  OptimizationResult r;
  Adam adam(x0.size(), config);
  Eigen::VectorXd x = std::move(x0);
  Eigen::VectorXd g(x.size());
  r.best = x;
  r.best_loss = std::numeric_limits<double>::infinity();
  for (Index it = 0; it <= config.iterations; ++it) {
    g.setZero();
    const double loss = objective(x, g);
    if (!std::isfinite(loss) || !g.allFinite())
      throw std::runtime_error("non-finite loss or gradient at iteration " + std::to_string(it));
    r.history.push_back(loss);
    r.iterations = it + 1;
    r.final_loss = loss;
    r.final_grad_norm = g.norm();
    if (loss < r.best_loss) {
      r.best_loss = loss;
      r.best = x;
    }
    if (r.final_grad_norm < config.grad_tol) {
      r.converged = true;
      break;
    }
    if (it == config.iterations) break;
    adam.step(x, g);
  }
  return r;
}

}  // namespace mgdd
