#include "mgdd/inverse.hpp"

#include <cmath>
#include <cassert>
#include <cstdio>
#include <random>

namespace mgdd {

MeasurementSet synthesize_measurements(const GraphSolution& reference, Index n_meas, double noise,
                                       std::uint64_t seed) {
  if (n_meas < 2) throw std::invalid_argument("need at least two measurement times");
  if (noise < 0.0) throw std::invalid_argument("noise level must be non-negative");
  MeasurementSet m;
  m.noise = noise;
  m.times = Eigen::VectorXd::LinSpaced(n_meas, 0.0, reference.final_time());
  m.positions.resize(reference.num_edges());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index e = 0; e < reference.num_edges(); ++e) {
    m.positions[e] = 0.5 * reference.length(e);
    assert(m.positions[e] >= 0.0 && m.positions[e] <= reference.length(e));
    const QueryPoints q = QueryPoints::at_x(m.times, m.positions[e]);
    Eigen::VectorXd rho = reference.density(e, q);
    Eigen::VectorXd flux = reference.flux(e, q);
    for (Index j = 0; j < n_meas; ++j) rho[j] += noise * normal(rng);
    for (Index j = 0; j < n_meas; ++j) flux[j] += noise * normal(rng);
    m.density.push_back(std::move(rho));
    m.flux.push_back(std::move(flux));
  }
  return m;
}

double measurement_loss(const GraphSolution& solution, const MeasurementSet& m) {
  if (solution.num_edges() != m.num_edges()) throw std::invalid_argument("measurements do not match the graph");
  if (m.num_edges() == 0) return 0.0;
  double sum = 0.0;
  for (Index e = 0; e < m.num_edges(); ++e) {
    const QueryPoints q = QueryPoints::at_x(m.times, m.positions[e]);
    const auto k = static_cast<std::size_t>(e);
    sum += ((solution.density(e, q) - m.density[k]).squaredNorm() +
            (solution.flux(e, q) - m.flux[k]).squaredNorm()) /
           static_cast<double>(m.times.size());
  }
  return sum / static_cast<double>(m.num_edges());
}

namespace {

BoundaryData with_placeholder_initial(const MetricGraph& graph, BoundaryData bc) {
  bc.initial.resize(static_cast<std::size_t>(graph.num_edges()));
  for (Index e = 0; e < graph.num_edges(); ++e) {
    auto& init = bc.initial[static_cast<std::size_t>(e)];
    if (init.empty()) init = UniformSeries::constant(0.0, 0.0, graph.edge(e).length);
  }
  return bc;
}

}  // namespace

InverseProblem::InverseProblem(const MetricGraph& graph, const BoundaryData& rates,
                               MeasurementSet measurements, SurrogateSet surrogates,
                               InverseConfig config)
    : coupling_(graph, with_placeholder_initial(graph, rates), std::move(surrogates), config.coupling),
      measurements_(std::move(measurements)),
      config_(std::move(config)) {
  if (measurements_.num_edges() != graph.num_edges())
    throw CouplingError("measurements do not match the graph");
  if (config_.init_n_beta < 1) throw CouplingError("need at least one initial-data coefficient");
  const SensorGrids& grids = coupling_.surrogates().grids();
  for (Index e = 0; e < graph.num_edges(); ++e) {
    const double len = graph.edge(e).length;
    const RbfBasis b{config_.init_n_beta, config_.init_length_scale, 0.0, len};
    init_basis_.push_back(b.matrix(grids.init_points(len)));
    meas_points_.push_back(QueryPoints::at_x(measurements_.times, measurements_.positions[e]));
  }
}

Index InverseProblem::num_parameters() const {
  const Index ne = coupling_.graph().num_edges();
  return coupling_.num_parameters() + ne * config_.init_n_beta + ne;
}

Eigen::VectorXd InverseProblem::initial_guess() const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(num_parameters());
  const Index ne = coupling_.graph().num_edges();
  x.tail(ne).setConstant(std::log(config_.initial_velocity));
  return x;
}

InverseUnknowns InverseProblem::unpack(const Eigen::VectorXd& x) const {
  if (x.size() != num_parameters()) throw CouplingError("parameter vector has the wrong length");
  const Index ne = coupling_.graph().num_edges();
  const Index nt = coupling_.num_parameters();
  const Index nb = config_.init_n_beta;
  InverseUnknowns u;
  u.traces = x.head(nt);
  for (Index e = 0; e < ne; ++e) u.init_beta.push_back(x.segment(nt + e * nb, nb));
  u.log_velocity = x.tail(ne);
  return u;
}

Eigen::VectorXd InverseProblem::pack(const InverseUnknowns& u) const {
  const Index ne = coupling_.graph().num_edges();
  const Index nt = coupling_.num_parameters();
  const Index nb = config_.init_n_beta;
  Eigen::VectorXd x(num_parameters());
  x.head(nt) = u.traces;
  for (Index e = 0; e < ne; ++e) x.segment(nt + e * nb, nb) = u.init_beta[static_cast<std::size_t>(e)];
  x.tail(ne) = u.log_velocity;
  return x;
}

Eigen::VectorXd InverseProblem::initial_profile(const InverseUnknowns& u, Index e) const {
  const auto k = static_cast<std::size_t>(e);
  return (init_basis_[k] * u.init_beta[k]).unaryExpr([](double z) { return logistic(z); });
}

std::vector<SensorInput> InverseProblem::sensor_inputs(const Eigen::VectorXd& x) const {
  const InverseUnknowns u = unpack(x);
  std::vector<SensorInput> inputs = coupling_.sensor_inputs(u.traces);
  for (Index e = 0; e < coupling_.graph().num_edges(); ++e) {
    SensorInput& s = inputs[static_cast<std::size_t>(e)];
    s.init = initial_profile(u, e);
    s.velocity = std::exp(u.log_velocity[e]);
  }
  return inputs;
}

double InverseProblem::evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* grad,
                                double* coupling_part) const {
  const std::vector<SensorInput> inputs = sensor_inputs(x);
  CouplingEvaluation ev =
      evaluate_coupling(coupling_.graph(), coupling_.surrogates(), inputs, coupling_.times(), &meas_points_);
  const Index ne = coupling_.graph().num_edges();
  const Index ntc = coupling_.times().size();
  const Index nm = measurements_.times.size();
  const double w = config_.measurement_weight / static_cast<double>(ne * nm);
  double meas = 0.0;
  for (Index e = 0; e < ne; ++e) {
    const auto k = static_cast<std::size_t>(e);
    const Eigen::VectorXd dr = ev.tapes[k]->rho().tail(nm) - measurements_.density[k];
    const Eigen::VectorXd df = ev.tapes[k]->flux().tail(nm) - measurements_.flux[k];
    meas += w * (dr.squaredNorm() + df.squaredNorm());
    ev.rho_bar[k].segment(2 * ntc, nm) += 2.0 * w * dr;
    ev.flux_bar[k].segment(2 * ntc, nm) += 2.0 * w * df;
  }
  if (coupling_part) *coupling_part = ev.loss;
  if (grad) {
    *grad = Eigen::VectorXd::Zero(x.size());
    const std::vector<Eigen::VectorXd> g = ev.pullback();
    Eigen::VectorXd traces = Eigen::VectorXd::Zero(coupling_.num_parameters());
    coupling_.accumulate_trace_gradient(g, traces);
    grad->head(traces.size()) = traces;
    const Index nb = config_.init_n_beta;
    for (Index e = 0; e < ne; ++e) {
      const auto k = static_cast<std::size_t>(e);
      const SensorInput& s = inputs[k];
      const Index offset = s.origin.size() + s.target.size();
      const Eigen::VectorXd dlogistic = s.init.array() * (1.0 - s.init.array());
      grad->segment(traces.size() + e * nb, nb) =
          init_basis_[k].transpose() * g[k].segment(offset, s.init.size()).cwiseProduct(dlogistic);
      (*grad)[x.size() - ne + e] = g[k][g[k].size() - 1] * s.velocity;
    }
  }
  return ev.loss + meas;
}

double InverseProblem::loss(const Eigen::VectorXd& x) const { return evaluate(x, nullptr, nullptr); }

double InverseProblem::loss_and_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
  return evaluate(x, &grad, nullptr);
}

std::pair<double, double> InverseProblem::loss_parts(const Eigen::VectorXd& x) const {
  double c = 0.0;
  const double total = evaluate(x, nullptr, &c);
  return {c, total - c};
}

InverseResult identify(const MetricGraph& graph, const BoundaryData& rates, const MeasurementSet& m,
                       const SurrogateSet& surrogates, const InverseConfig& config) {
  const InverseProblem problem(graph, rates, m, surrogates, config);
  InverseResult r;
  try {
    r.optimization = minimize_adam(
        [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) { return problem.loss_and_gradient(x, g); },
        problem.initial_guess(), config.coupling.adam);
  } catch (const SurrogateError& e) {
    throw CouplingError(std::string("identification diverged: ") + e.what());
  }
  r.unknowns = problem.unpack(r.optimization.best);
  auto inputs = problem.sensor_inputs(r.optimization.best);
  r.state.velocity = r.unknowns.log_velocity.array().exp();
  for (const SensorInput& s : inputs) r.state.initial.push_back(s.init_series());
  r.state.solution = std::make_shared<const SurrogateSolution>(surrogates, std::move(inputs));
  return r;
}

ErrorMetrics error_report(const GraphState& recovered, const GraphState& reference, Index n_time,
                          Index n_space) {
  ErrorMetrics out;
  if (recovered.solution && reference.solution) {
    out.solution_abs = space_time_l2(*recovered.solution, reference.solution.get(), n_time, n_space);
    const double norm = space_time_l2(*reference.solution, nullptr, n_time, n_space);
    out.solution_rel = norm > 0.0 ? out.solution_abs / norm : 0.0;
  }
  if (recovered.initial.size() != reference.initial.size())
    throw std::invalid_argument("initial data of different graphs");
  double diff = 0.0, norm = 0.0;
  for (std::size_t e = 0; e < reference.initial.size(); ++e) {
    const UniformSeries& a = recovered.initial[e];
    const UniformSeries& b = reference.initial[e];
    const double len = b.stop - b.start;
    const double dx = len / static_cast<double>(n_space - 1);
    for (Index i = 0; i < n_space; ++i) {
      const double x = b.start + dx * static_cast<double>(i);
      const double w = (i == 0 || i == n_space - 1) ? 0.5 * dx : dx;
      diff += w * std::pow(a(x) - b(x), 2);
      norm += w * b(x) * b(x);
    }
  }
  out.init_abs = std::sqrt(diff);
  out.init_rel = norm > 0.0 ? out.init_abs / std::sqrt(norm) : 0.0;
  if (recovered.velocity.size() != reference.velocity.size())
    throw std::invalid_argument("velocity vectors of different graphs");
  out.velocity_abs = (recovered.velocity - reference.velocity).norm();
  const double vn = reference.velocity.norm();
  out.velocity_rel = vn > 0.0 ? out.velocity_abs / vn : 0.0;
  return out;
}

std::string error_csv_header() {
  return "graph,noise,err_init,err_init_rel,err_vel,err_vel_rel,l2_solution,l2_solution_rel";
}

std::string error_csv_row(const std::string& graph_id, double noise, const ErrorMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", graph_id.c_str(), noise,
                m.init_abs, m.init_rel, m.velocity_abs, m.velocity_rel, m.solution_abs, m.solution_rel);
  return buf;
}

}  // namespace mgdd
