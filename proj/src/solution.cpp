#include "mgdd/solution.hpp"

namespace mgdd {

FvmSolution::FvmSolution(const Trajectory& trajectory, const MetricGraph& graph,
                         const Discretization& disc)
    : final_time_(trajectory.back().time) {
  edges_.reserve(static_cast<std::size_t>(graph.num_edges()));
  for (Index e = 0; e < graph.num_edges(); ++e) edges_.emplace_back(trajectory, graph, disc, e);
}

Eigen::VectorXd FvmSolution::density(Index e, const QueryPoints& q) const {
  const EdgeHistory& h = edges_[static_cast<std::size_t>(e)];
  Eigen::VectorXd out(q.size());
  for (Index i = 0; i < q.size(); ++i) out[i] = h.density(q.t[i], q.x[i]);
  return out;
}

Eigen::VectorXd FvmSolution::flux(Index e, const QueryPoints& q) const {
  const EdgeHistory& h = edges_[static_cast<std::size_t>(e)];
  Eigen::VectorXd out(q.size());
  for (Index i = 0; i < q.size(); ++i) out[i] = h.flux(q.t[i], q.x[i]);
  return out;
}

SurrogateSolution::SurrogateSolution(SurrogateSet surrogates, std::vector<SensorInput> inputs)
    : surrogates_(std::move(surrogates)), inputs_(std::move(inputs)) {}

Eigen::VectorXd SurrogateSolution::density(Index e, const QueryPoints& q) const {
  const SensorInput& s = inputs_[static_cast<std::size_t>(e)];
  return surrogates_[s.type].evaluate(s, q).rho;
}

Eigen::VectorXd SurrogateSolution::flux(Index e, const QueryPoints& q) const {
  const SensorInput& s = inputs_[static_cast<std::size_t>(e)];
  return surrogates_[s.type].evaluate(s, q).flux;
}

QueryPoints space_time_grid(double final_time, double length, Index nt, Index nx) {
  QueryPoints q{Eigen::VectorXd(nt * nx), Eigen::VectorXd(nt * nx)};
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(nt, 0.0, final_time);
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(nx, 0.0, length);
  for (Index i = 0; i < nt; ++i) {
    q.t.segment(i * nx, nx).setConstant(t[i]);
    q.x.segment(i * nx, nx) = x;
  }
  return q;
}

Eigen::MatrixXd density_grid(const GraphSolution& s, Index e, Index nt, Index nx) {
  const Eigen::VectorXd v = s.density(e, space_time_grid(s.final_time(), s.length(e), nt, nx));
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      v.data(), nt, nx);
}

double space_time_l2(const GraphSolution& a, const GraphSolution* b, Index nt, Index nx) {
  if (b && b->num_edges() != a.num_edges())
    throw std::invalid_argument("solutions live on different graphs");
  auto trapezoid = [](Index n, double width) {
    Eigen::VectorXd w = Eigen::VectorXd::Constant(n, width / static_cast<double>(n - 1));
    w[0] *= 0.5;
    w[n - 1] *= 0.5;
    return w;
  };
  const Eigen::VectorXd wt = trapezoid(nt, a.final_time());
  double sum = 0.0;
  for (Index e = 0; e < a.num_edges(); ++e) {
    Eigen::MatrixXd d = density_grid(a, e, nt, nx);
    if (b) d -= density_grid(*b, e, nt, nx);
    const Eigen::VectorXd wx = trapezoid(nx, a.length(e));
    sum += wt.dot(d.cwiseAbs2() * wx);
  }
  return std::sqrt(sum);
}

}  // namespace mgdd
