#include "mgdd/surrogate.hpp"

namespace mgdd {

void EdgeSurrogate::check_input(const SensorInput& s) const {
  const SensorGrids& g = grids();
  if (s.origin.size() != g.n_origin || s.target.size() != g.n_target || s.init.size() != g.n_init)
    throw SurrogateError(name() + ": sensor input does not match the sensor grids");
}

EdgeJets EdgeSurrogate::jets(const SensorInput& s, const QueryPoints& q) const {
  const auto [dt, dx] = resolution();
  const double T = s.final_time;
  const double L = s.length;
  QueryPoints shifted = q;
  auto rho_at = [&](double st, double sx) {
    for (Index i = 0; i < q.size(); ++i) {
      shifted.t[i] = q.t[i] + st;
      shifted.x[i] = q.x[i] + sx;
    }
    return evaluate(s, shifted).rho;
  };
  EdgeJets out;
  out.rho = evaluate(s, q).rho;
  out.rho_t.resize(q.size());
  out.rho_x.resize(q.size());
  out.rho_xx.resize(q.size());
  // One-sided near the domain ends, central inside.
  const Eigen::VectorXd tp = rho_at(dt, 0.0), tm = rho_at(-dt, 0.0);
  const Eigen::VectorXd xp = rho_at(0.0, dx), xm = rho_at(0.0, -dx);
  for (Index i = 0; i < q.size(); ++i) {
    const bool t_lo = q.t[i] - dt < 0.0, t_hi = q.t[i] + dt > T;
    out.rho_t[i] = t_lo ? (tp[i] - out.rho[i]) / dt
                 : t_hi ? (out.rho[i] - tm[i]) / dt
                        : (tp[i] - tm[i]) / (2.0 * dt);
    const bool x_lo = q.x[i] - dx < 0.0, x_hi = q.x[i] + dx > L;
    out.rho_x[i] = x_lo ? (xp[i] - out.rho[i]) / dx
                 : x_hi ? (out.rho[i] - xm[i]) / dx
                        : (xp[i] - xm[i]) / (2.0 * dx);
    out.rho_xx[i] = (x_lo || x_hi) ? 0.0 : (xp[i] - 2.0 * out.rho[i] + xm[i]) / (dx * dx);
  }
  return out;
}

SurrogateSet::SurrogateSet(std::shared_ptr<const EdgeSurrogate> inflow,
                           std::shared_ptr<const EdgeSurrogate> inner,
                           std::shared_ptr<const EdgeSurrogate> outflow)
    : models_{std::move(inflow), std::move(inner), std::move(outflow)} {
  for (const auto& m : models_)
    if (!m) throw SurrogateError("missing surrogate for an edge type");
  epsilon_ = models_[0]->epsilon();
  grids_ = models_[0]->grids();
  for (const auto& m : models_) {
    if (m->epsilon() != epsilon_)
      throw SurrogateError("surrogates were built for different diffusion constants");
    const SensorGrids& g = m->grids();
    if (g.n_origin != grids_.n_origin || g.n_target != grids_.n_target || g.n_init != grids_.n_init ||
        g.final_time != grids_.final_time)
      throw SurrogateError("surrogates use different sensor grids");
  }
}

SurrogateSet::SurrogateSet(std::shared_ptr<const EdgeSurrogate> all)
    : SurrogateSet(all, all, all) {}

const EdgeSurrogate& SurrogateSet::operator[](EdgeType type) const {
  return *models_[static_cast<std::size_t>(type)];
}

EdgeLosses edge_loss(const EdgeSurrogate& model, const SensorInput& s, const QueryPoints& pde_points,
                     const Eigen::VectorXd& init_x, const Eigen::VectorXd& bc_times) {
  const double eps = model.epsilon();
  const double nu = s.velocity;
  EdgeLosses out;

  if (pde_points.size() > 0) {
    const EdgeJets j = model.jets(s, pde_points);
    const Eigen::ArrayXd fprime = 1.0 - 2.0 * j.rho.array();
    const Eigen::ArrayXd residual =
        j.rho_t.array() - eps * j.rho_xx.array() + nu * fprime * j.rho_x.array();
    out.pde = residual.square().mean();
  }

  if (init_x.size() > 0) {
    const Eigen::VectorXd rho0 =
        model.evaluate(s, {Eigen::VectorXd::Zero(init_x.size()), init_x}).rho;
    const UniformSeries init = s.init_series();
    double sum = 0.0;
    for (Index i = 0; i < init_x.size(); ++i) sum += std::pow(rho0[i] - init(init_x[i]), 2);
    out.init = sum / static_cast<double>(init_x.size());
  }

  if (bc_times.size() > 0) {
    const EdgeValues a = model.evaluate(s, QueryPoints::at_x(bc_times, 0.0));
    const EdgeValues b = model.evaluate(s, QueryPoints::at_x(bc_times, s.length));
    const UniformSeries uo = s.origin_series();
    const UniformSeries ut = s.target_series();
    double sum = 0.0;
    for (Index i = 0; i < bc_times.size(); ++i) {
      const double t = bc_times[i];
      const double left = s.type == EdgeType::inflow ? uo(t) * (1.0 - a.rho[i]) : uo(t);
      const double right = s.type == EdgeType::outflow ? ut(t) * b.rho[i] : ut(t);
      sum += std::pow(left - a.flux[i], 2) + std::pow(right - b.flux[i], 2);
    }
    out.edge = sum / static_cast<double>(bc_times.size());
  }
  return out;
}

}  // namespace mgdd
