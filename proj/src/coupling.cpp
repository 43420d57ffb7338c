#include "mgdd/coupling.hpp"

#include <cmath>
#include <exception>

namespace mgdd {

using nlohmann::json;

namespace {

// Runs fn(e) for every edge, in parallel when OpenMP is available, and
// rethrows the first exception on the calling thread.
template <typename Fn>
void for_each_edge(Index n, Fn&& fn) {
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (Index e = 0; e < n; ++e) {
    try {
      fn(e);
    } catch (...) {
#pragma omp critical(mgdd_edge_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

Eigen::VectorXd RbfBasis::centers() const {
  if (size == 1) return Eigen::VectorXd::Constant(1, 0.5 * (start + stop));
  return Eigen::VectorXd::LinSpaced(size, start, stop);
}

Eigen::MatrixXd RbfBasis::matrix(const Eigen::VectorXd& points) const {
  const Eigen::VectorXd c = centers();
  Eigen::MatrixXd m(points.size(), size);
  for (Index k = 0; k < size; ++k)
    m.col(k) = (-(points.array() - c[k]).square() / (length_scale * length_scale)).exp().matrix();
  return m;
}

TraceLayout::TraceLayout(const MetricGraph& graph, Index n_beta) : n_beta_(n_beta) {
  if (n_beta < 1) throw CouplingError("need at least one trace coefficient");
  const auto types = classify_edges(graph);
  lookup_.assign(static_cast<std::size_t>(graph.num_edges()), {-1, -1});
  for (Index e = 0; e < graph.num_edges(); ++e) {
    const EdgeType t = types[static_cast<std::size_t>(e)];
    auto add = [&](Endpoint end) {
      lookup_[static_cast<std::size_t>(e)][static_cast<std::size_t>(end)] = static_cast<Index>(slots_.size());
      slots_.push_back({e, end, n_beta_ * static_cast<Index>(slots_.size())});
    };
    if (t != EdgeType::inflow) add(Endpoint::origin);
    if (t != EdgeType::outflow) add(Endpoint::target);
  }
}

Index TraceLayout::slot(Index e, Endpoint end) const {
  return lookup_[static_cast<std::size_t>(e)][static_cast<std::size_t>(end)];
}

Index coupling_parameter_count(const MetricGraph& graph, Index n_beta) {
  Index count = 0;
  for (EdgeType t : classify_edges(graph)) count += t == EdgeType::inner ? 2 : 1;
  return n_beta * count;
}

CouplingParameters init_parameters(const MetricGraph& graph, Index n_beta, double length_scale,
                                   double final_time) {
  if (graph.num_edges() == 0) throw CouplingError("graph has no edges");
  CouplingParameters p;
  p.basis = {n_beta, length_scale, 0.0, final_time};
  p.beta = Eigen::VectorXd::Zero(TraceLayout(graph, n_beta).size());
  return p;
}

std::vector<SensorInput> base_sensor_inputs(const MetricGraph& graph, const BoundaryData& bc,
                                            const SensorGrids& grids, const FvmConfig& fvm) {
  if (static_cast<Index>(bc.initial.size()) != graph.num_edges() ||
      static_cast<Index>(bc.inflow.size()) != graph.num_vertices() ||
      static_cast<Index>(bc.outflow.size()) != graph.num_vertices())
    throw CouplingError("boundary data does not match the graph");
  const auto types = classify_edges(graph);
  const Discretization disc(graph, fvm);
  const Eigen::VectorXd to = grids.origin_times();
  const Eigen::VectorXd tt = grids.target_times();
  std::vector<SensorInput> out;
  for (Index e = 0; e < graph.num_edges(); ++e) {
    const Edge& edge = graph.edge(e);
    SensorInput s;
    s.type = types[static_cast<std::size_t>(e)];
    s.velocity = edge.velocity;
    s.length = edge.length;
    s.final_time = grids.final_time;
    s.origin = Eigen::VectorXd::Zero(grids.n_origin);
    s.target = Eigen::VectorXd::Zero(grids.n_target);
    if (s.type == EdgeType::inflow) {
      const double share = rate_share(graph, disc, e, edge.origin);
      for (Index i = 0; i < to.size(); ++i) s.origin[i] = share * bc.inflow_rate(edge.origin, to[i]);
    }
    if (s.type == EdgeType::outflow) {
      const double share = rate_share(graph, disc, e, edge.target);
      for (Index i = 0; i < tt.size(); ++i) s.target[i] = share * bc.outflow_rate(edge.target, tt[i]);
    }
    const auto& init = bc.initial[static_cast<std::size_t>(e)];
    if (init.empty()) throw CouplingError("missing initial data on edge " + std::to_string(e));
    s.init = UniformSeries::sample([&](double x) { return init(x); }, 0.0, edge.length, grids.n_init).values;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Eigen::VectorXd> CouplingEvaluation::pullback() const {
  std::vector<Eigen::VectorXd> out(tapes.size());
  for_each_edge(static_cast<Index>(tapes.size()), [&](Index e) {
    const auto k = static_cast<std::size_t>(e);
    out[k] = tapes[k]->pullback(rho_bar[k], flux_bar[k]);
  });
  return out;
}

CouplingEvaluation evaluate_coupling(const MetricGraph& graph, const SurrogateSet& surrogates,
                                     const std::vector<SensorInput>& inputs,
                                     const Eigen::VectorXd& times,
                                     const std::vector<QueryPoints>* extra) {
  const Index ne = graph.num_edges();
  const Index nt = times.size();
  if (static_cast<Index>(inputs.size()) != ne) throw CouplingError("one sensor input per edge required");
  CouplingEvaluation ev;
  ev.tapes.resize(static_cast<std::size_t>(ne));
  ev.rho_bar.resize(static_cast<std::size_t>(ne));
  ev.flux_bar.resize(static_cast<std::size_t>(ne));
  for_each_edge(ne, [&](Index e) {
    const auto k = static_cast<std::size_t>(e);
    const SensorInput& s = inputs[k];
    const Index nx = extra ? (*extra)[k].size() : 0;
    QueryPoints q{Eigen::VectorXd(2 * nt + nx), Eigen::VectorXd(2 * nt + nx)};
    q.t << times, times, (extra ? (*extra)[k].t : Eigen::VectorXd());
    q.x << Eigen::VectorXd::Zero(nt), Eigen::VectorXd::Constant(nt, s.length),
        (extra ? (*extra)[k].x : Eigen::VectorXd());
    ev.tapes[k] = surrogates[s.type].record(s, q);
    ev.rho_bar[k] = Eigen::VectorXd::Zero(q.size());
    ev.flux_bar[k] = Eigen::VectorXd::Zero(q.size());
  });

  const auto interior = graph.interior_vertices();
  if (interior.empty()) return ev;
  const double vk = 1.0 / static_cast<double>(interior.size());
  struct End {
    std::size_t edge;
    Index row;
    double normal;
  };
  std::vector<End> ends;
  for (Index v : interior) {
    const Vertex& vx = graph.vertex(v);
    ends.clear();
    for (Index e : vx.in_edges) ends.push_back({static_cast<std::size_t>(e), nt, 1.0});
    for (Index e : vx.out_edges) ends.push_back({static_cast<std::size_t>(e), 0, -1.0});
    const double m = static_cast<double>(ends.size());
    const double w = vk / m;
    VertexResidual res{v, 0.0, 0.0};
    for (Index i = 0; i < nt; ++i) {
      double sum_rho = 0.0, sum_rho2 = 0.0, kirchhoff = 0.0;
      for (const End& a : ends) {
        const double r = ev.tapes[a.edge]->rho()[a.row + i];
        sum_rho += r;
        sum_rho2 += r * r;
        kirchhoff += a.normal * ev.tapes[a.edge]->flux()[a.row + i];
      }
      // sum over unordered pairs of squared differences
      const double continuity = std::max(0.0, m * sum_rho2 - sum_rho * sum_rho);
      res.continuity += continuity / m;
      res.kirchhoff += kirchhoff * kirchhoff / m;
      ev.loss += w * (continuity + kirchhoff * kirchhoff);
      for (const End& a : ends) {
        const double r = ev.tapes[a.edge]->rho()[a.row + i];
        ev.rho_bar[a.edge][a.row + i] += 2.0 * w * (m * r - sum_rho);
        ev.flux_bar[a.edge][a.row + i] += 2.0 * w * a.normal * kirchhoff;
      }
    }
    res.continuity /= static_cast<double>(nt);
    res.kirchhoff /= static_cast<double>(nt);
    ev.residuals.push_back(res);
  }
  return ev;
}

CouplingProblem::CouplingProblem(const MetricGraph& graph, const BoundaryData& bc,
                                 SurrogateSet surrogates, CouplingConfig config)
    : graph_(graph),
      surrogates_(std::move(surrogates)),
      config_(std::move(config)),
      layout_(graph_, config_.n_beta) {
  const SensorGrids& grids = surrogates_.grids();
  basis_ = {config_.n_beta, config_.length_scale, 0.0, grids.final_time};
  origin_basis_ = basis_.matrix(grids.origin_times());
  target_basis_ = basis_.matrix(grids.target_times());
  if (config_.n_times < 1) throw CouplingError("need at least one coupling time");
  times_ = Eigen::VectorXd::LinSpaced(config_.n_times, 0.0, grids.final_time);
  base_ = base_sensor_inputs(graph_, bc, grids, config_.fvm);
}

void CouplingProblem::apply_traces(const Eigen::VectorXd& beta, std::vector<SensorInput>& inputs) const {
  if (beta.size() != layout_.size()) throw CouplingError("parameter vector has the wrong length");
  const Index nb = layout_.n_beta();
  for (const TraceSlot& s : layout_.slots()) {
    SensorInput& in = inputs[static_cast<std::size_t>(s.edge)];
    if (s.end == Endpoint::origin)
      in.origin = origin_basis_ * beta.segment(s.offset, nb);
    else
      in.target = target_basis_ * beta.segment(s.offset, nb);
  }
}

void CouplingProblem::accumulate_trace_gradient(const std::vector<Eigen::VectorXd>& sensor_grads,
                                                Eigen::VectorXd& grad) const {
  const Index nb = layout_.n_beta();
  const Index no = origin_basis_.rows(), ntg = target_basis_.rows();
  for (const TraceSlot& s : layout_.slots()) {
    const Eigen::VectorXd& g = sensor_grads[static_cast<std::size_t>(s.edge)];
    if (s.end == Endpoint::origin)
      grad.segment(s.offset, nb) += origin_basis_.transpose() * g.head(no);
    else
      grad.segment(s.offset, nb) += target_basis_.transpose() * g.segment(no, ntg);
  }
}

std::vector<SensorInput> CouplingProblem::sensor_inputs(const Eigen::VectorXd& beta) const {
  std::vector<SensorInput> inputs = base_;
  apply_traces(beta, inputs);
  return inputs;
}

double CouplingProblem::loss(const Eigen::VectorXd& beta) const {
  return evaluate_coupling(graph_, surrogates_, sensor_inputs(beta), times_).loss;
}

double CouplingProblem::loss_and_gradient(const Eigen::VectorXd& beta, Eigen::VectorXd& grad) const {
  const CouplingEvaluation ev = evaluate_coupling(graph_, surrogates_, sensor_inputs(beta), times_);
  grad = Eigen::VectorXd::Zero(beta.size());
  accumulate_trace_gradient(ev.pullback(), grad);
  return ev.loss;
}

std::vector<VertexResidual> CouplingProblem::residuals(const Eigen::VectorXd& beta) const {
  return evaluate_coupling(graph_, surrogates_, sensor_inputs(beta), times_).residuals;
}

CouplingResult solve_graph(const MetricGraph& graph, const BoundaryData& bc,
                           const SurrogateSet& surrogates, const CouplingConfig& config) {
  const CouplingProblem problem(graph, bc, surrogates, config);
  CouplingResult r;
  r.parameters = init_parameters(graph, config.n_beta, config.length_scale, surrogates.grids().final_time);
  try {
    r.optimization = minimize_adam(
        [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) { return problem.loss_and_gradient(x, g); },
        r.parameters.beta, config.adam);
  } catch (const SurrogateError& e) {
    throw CouplingError(std::string("coupling diverged: ") + e.what());
  }
  r.parameters.beta = r.optimization.best;
  r.residuals = problem.residuals(r.parameters.beta);
  r.solution = std::make_shared<const SurrogateSolution>(surrogates, problem.sensor_inputs(r.parameters.beta));
  return r;
}

json report_json(const CouplingResult& result, const MetricGraph& graph) {
  const OptimizationResult& o = result.optimization;
  json vertices = json::array();
  for (const VertexResidual& v : result.residuals)
    vertices.push_back({{"vertex", graph.vertex(v.vertex).id},
                        {"continuity", v.continuity},
                        {"kirchhoff", v.kirchhoff}});
  return {{"final_loss", o.final_loss},
          {"best_loss", o.best_loss},
          {"iterations", o.iterations},
          {"final_grad_norm", o.final_grad_norm},
          {"converged", o.converged},
          {"parameters", result.parameters.beta.size()},
          {"n_beta", result.parameters.basis.size},
          {"length_scale", result.parameters.basis.length_scale},
          {"vertex_residuals", vertices}};
}

}  // namespace mgdd
