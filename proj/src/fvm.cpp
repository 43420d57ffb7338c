#include "mgdd/fvm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mgdd {

Nonlinearity Nonlinearity::saturating() {
  return {[](double r) { return saturation(r); }, [](double r) { return saturation_derivative(r); }};
}

// ---------------------------------------------------------------------------

std::pair<Index, double> locate(double s, Index intervals) {
  if (intervals <= 0) return {0, 0.0};
  s = std::clamp(s, 0.0, static_cast<double>(intervals));
  const Index i = std::min(static_cast<Index>(std::floor(s)), intervals - 1);
  return {i, s - static_cast<double>(i)};
}

double UniformSeries::operator()(double s) const {
  if (values.size() == 0) return 0.0;
  if (values.size() == 1) return values[0];
  const Index n = values.size() - 1;
  const auto [i, w] = locate((s - start) / (stop - start) * static_cast<double>(n), n);
  return (1.0 - w) * values[i] + w * values[i + 1];
}

Eigen::VectorXd UniformSeries::grid() const {
  return Eigen::VectorXd::LinSpaced(values.size(), start, stop);
}

UniformSeries UniformSeries::sample(const std::function<double(double)>& fn, double start,
                                    double stop, Index count) {
  UniformSeries s{start, stop, Eigen::VectorXd(count)};
  const Eigen::VectorXd x = s.grid();
  for (Index i = 0; i < count; ++i) s.values[i] = fn(x[i]);
  return s;
}

UniformSeries UniformSeries::constant(double value, double start, double stop, Index count) {
  return {start, stop, Eigen::VectorXd::Constant(count, value)};
}

BoundaryData BoundaryData::zeros(const MetricGraph& graph, double final_time) {
  BoundaryData data;
  data.inflow.resize(static_cast<std::size_t>(graph.num_vertices()));
  data.outflow.resize(static_cast<std::size_t>(graph.num_vertices()));
  for (Index v = 0; v < graph.num_vertices(); ++v) {
    data.inflow[static_cast<std::size_t>(v)] = UniformSeries{0.0, final_time, {}};
    data.outflow[static_cast<std::size_t>(v)] = UniformSeries{0.0, final_time, {}};
  }
  for (Index e = 0; e < graph.num_edges(); ++e)
    data.initial.push_back(UniformSeries::constant(0.0, 0.0, graph.edge(e).length));
  return data;
}

double BoundaryData::inflow_rate(Index v, double t) const {
  if (inflow.empty()) return 0.0;
  return inflow[static_cast<std::size_t>(v)](t);
}

double BoundaryData::outflow_rate(Index v, double t) const {
  if (outflow.empty()) return 0.0;
  return outflow[static_cast<std::size_t>(v)](t);
}

void validate_boundary_data(const BoundaryData& data, const MetricGraph& graph, bool exclusive) {
  const auto nv = static_cast<std::size_t>(graph.num_vertices());
  if (data.initial.size() != static_cast<std::size_t>(graph.num_edges()))
    throw FvmError("expected one initial profile per edge");
  if ((!data.inflow.empty() && data.inflow.size() != nv) ||
      (!data.outflow.empty() && data.outflow.size() != nv))
    throw FvmError("rate series must be indexed by vertex");
  for (std::size_t e = 0; e < data.initial.size(); ++e) {
    const auto& p = data.initial[e];
    if (p.size() < 2) throw FvmError("initial profile of edge " + std::to_string(e) + " has fewer than 2 samples");
    if (p.values.minCoeff() < 0.0 || p.values.maxCoeff() > 1.0)
      throw FvmError("initial profile of edge " + std::to_string(e) + " leaves [0, 1]");
  }
  auto check_rates = [&](const std::vector<UniformSeries>& rates, const char* what) {
    for (std::size_t v = 0; v < rates.size(); ++v) {
      if (rates[v].empty()) continue;
      if (graph.vertex(static_cast<Index>(v)).interior)
        throw FvmError(std::string(what) + " rate given for interior vertex " +
                       std::to_string(graph.vertex(static_cast<Index>(v)).id));
      if (rates[v].values.minCoeff() < 0.0)
        throw FvmError(std::string(what) + " rate is negative at vertex " +
                       std::to_string(graph.vertex(static_cast<Index>(v)).id));
    }
  };
  check_rates(data.inflow, "inflow");
  check_rates(data.outflow, "outflow");
  if (exclusive && !data.inflow.empty() && !data.outflow.empty()) {
    for (std::size_t v = 0; v < nv; ++v) {
      const auto& a = data.inflow[v];
      const auto& b = data.outflow[v];
      if (a.empty() || b.empty()) continue;
      const Eigen::VectorXd t = a.grid();
      for (Index i = 0; i < t.size(); ++i)
        if (a.values[i] * b(t[i]) != 0.0)
          throw FvmError("vertex " + std::to_string(graph.vertex(static_cast<Index>(v)).id) +
                         " has simultaneous inflow and outflow");
    }
  }
}

// ---------------------------------------------------------------------------

Discretization::Discretization(const MetricGraph& graph, FvmConfig config)
    : config_(std::move(config)) {
  if (config_.cells_per_edge < 1) throw FvmError("cells_per_edge must be positive");
  if (config_.time_steps < 1) throw FvmError("time_steps must be positive");
  if (!(config_.epsilon >= 0.0)) throw FvmError("epsilon must be nonnegative");
  if (!(config_.alpha > 0.0)) throw FvmError("alpha must be positive");

  const Index ne = graph.num_edges();
  Index offset = 0;
  for (Index e = 0; e < ne; ++e) {
    const Index n = config_.cells_per_edge;
    cells_.push_back(n);
    h_.push_back(graph.edge(e).length / static_cast<double>(n));
    offsets_.push_back(offset);
    origin_.push_back(graph.edge(e).origin);
    target_.push_back(graph.edge(e).target);
    offset += n - 1;
  }
  vertex_offset_ = offset;
  num_dofs_ = offset + graph.num_vertices();

  patch_.assign(static_cast<std::size_t>(graph.num_vertices()), 0.0);
  for (Index e = 0; e < ne; ++e) {
    patch_[static_cast<std::size_t>(origin_[static_cast<std::size_t>(e)])] += 0.5 * h(e);
    patch_[static_cast<std::size_t>(target_[static_cast<std::size_t>(e)])] += 0.5 * h(e);
  }
  masses_.resize(num_dofs_);
  for (Index e = 0; e < ne; ++e)
    masses_.segment(offsets_[static_cast<std::size_t>(e)], cells(e) - 1).setConstant(h(e));
  for (Index v = 0; v < graph.num_vertices(); ++v) {
    if (patch_[static_cast<std::size_t>(v)] <= 0.0)
      throw FvmError("isolated vertex " + std::to_string(graph.vertex(v).id));
    masses_[vertex_dof(v)] = patch_[static_cast<std::size_t>(v)];
  }
}

double Discretization::min_h() const { return *std::min_element(h_.begin(), h_.end()); }

Index Discretization::node_dof(Index e, Index k) const {
  const auto i = static_cast<std::size_t>(e);
  if (k == 0) return vertex_dof(origin_[i]);
  if (k == cells_[i]) return vertex_dof(target_[i]);
  return offsets_[i] + k - 1;
}

Eigen::VectorXd edge_nodes(const GraphField& field, const Discretization& disc, Index e) {
  const Index n = disc.cells(e);
  Eigen::VectorXd out(n + 1);
  for (Index k = 0; k <= n; ++k) out[k] = field.values[disc.node_dof(e, k)];
  return out;
}

double integrate_profile(const UniformSeries& profile, double a, double b) {
  if (profile.empty()) return 0.0;
  if (profile.size() < 2) throw FvmError("profile needs at least 2 samples");
  a = std::max(a, profile.start);
  b = std::min(b, profile.stop);
  if (b <= a) return 0.0;
  const double dx = profile.spacing();
  const Index n = profile.size() - 1;
  const Index first = std::clamp(static_cast<Index>(std::floor((a - profile.start) / dx)), Index{0}, n - 1);
  const Index last = std::clamp(static_cast<Index>(std::ceil((b - profile.start) / dx)), first + 1, n);
  double sum = 0.0;
  for (Index i = first; i < last; ++i) {
    const double x0 = profile.start + static_cast<double>(i) * dx;
    const double lo = std::max(a, x0);
    const double hi = std::min(b, x0 + dx);
    if (hi <= lo) continue;
    const double y0 = profile.values[i];
    const double slope = (profile.values[i + 1] - y0) / dx;
    sum += (hi - lo) * (y0 + slope * (0.5 * (lo + hi) - x0));
  }
  return sum;
}

GraphField project_initial(const std::vector<UniformSeries>& initial, const MetricGraph& graph,
                           const Discretization& disc) {
  if (initial.size() != static_cast<std::size_t>(graph.num_edges()))
    throw FvmError("expected one initial profile per edge");
  GraphField field{Eigen::VectorXd::Zero(disc.num_dofs()), 0.0};
  for (Index e = 0; e < graph.num_edges(); ++e) {
    const auto& p = initial[static_cast<std::size_t>(e)];
    if (p.size() < 2) throw FvmError("initial profile of edge " + std::to_string(e) + " has fewer than 2 samples");
    const double h = disc.h(e);
    const Index n = disc.cells(e);
    const double len = disc.length(e);
    for (Index k = 1; k < n; ++k) {
      const double x = static_cast<double>(k) * h;
      field.values[disc.node_dof(e, k)] = integrate_profile(p, x - 0.5 * h, x + 0.5 * h) / h;
    }
    field.values[disc.node_dof(e, 0)] += integrate_profile(p, 0.0, 0.5 * h);
    field.values[disc.node_dof(e, n)] += integrate_profile(p, len - 0.5 * h, len);
  }
  for (Index v = 0; v < graph.num_vertices(); ++v)
    field.values[disc.vertex_dof(v)] /= disc.patch_measure(v);
  return field;
}

double total_mass(const GraphField& field, const Discretization& disc) {
  return disc.masses().dot(field.values);
}

Eigen::SparseMatrix<double> assemble_implicit_operator(const MetricGraph& graph,
                                                       const Discretization& disc) {
  using Triplet = Eigen::Triplet<double>;
  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(disc.num_dofs() * 3));
  for (Index i = 0; i < disc.num_dofs(); ++i) entries.emplace_back(i, i, disc.masses()[i]);
  const double eps_tau = disc.config().epsilon * disc.tau();
  for (Index e = 0; e < graph.num_edges(); ++e) {
    const double c = eps_tau / disc.h(e);
    for (Index k = 0; k < disc.cells(e); ++k) {
      const Index a = disc.node_dof(e, k);
      const Index b = disc.node_dof(e, k + 1);
      entries.emplace_back(a, a, c);
      entries.emplace_back(b, b, c);
      entries.emplace_back(a, b, -c);
      entries.emplace_back(b, a, -c);
    }
  }
  Eigen::SparseMatrix<double> m(disc.num_dofs(), disc.num_dofs());
  m.setFromTriplets(entries.begin(), entries.end());
  return m;
}

// ---------------------------------------------------------------------------

FvmSolver::FvmSolver(const MetricGraph& graph, const Discretization& disc)
    : graph_(&graph), disc_(&disc), base_(assemble_implicit_operator(graph, disc)) {
  system_ = base_;
  ldlt_.analyzePattern(system_);
  rate_diagonal_ = Eigen::VectorXd::Zero(graph.num_vertices());
}

void FvmSolver::refactor(const Eigen::VectorXd& rate_diagonal) {
  system_ = base_;
  for (Index v = 0; v < graph_->num_vertices(); ++v) {
    const Index d = disc_->vertex_dof(v);
    system_.coeffRef(d, d) += rate_diagonal[v];
  }
  ldlt_.factorize(system_);
  if (ldlt_.info() != Eigen::Success) throw FvmError("factorization of the implicit operator failed");
  rate_diagonal_ = rate_diagonal;
  factored_ = true;
}

GraphField FvmSolver::step(const GraphField& state, const BoundaryData& data) {
  const MetricGraph& g = *graph_;
  const Discretization& d = *disc_;
  const FvmConfig& cfg = d.config();
  const double tau = d.tau();
  const double t = state.time;

  Eigen::VectorXd rates = Eigen::VectorXd::Zero(g.num_vertices());
  Eigen::VectorXd influx = Eigen::VectorXd::Zero(g.num_vertices());
  for (Index v : g.exterior_vertices()) {
    const double uin = data.inflow_rate(v, t);
    const double uout = data.outflow_rate(v, t);
    rates[v] = tau * (uin + uout);
    influx[v] = tau * uin;
  }
  if (!factored_ || rates != rate_diagonal_) refactor(rates);

  Eigen::VectorXd rhs = d.masses().cwiseProduct(state.values);
  for (Index e = 0; e < g.num_edges(); ++e) {
    const double nu = g.edge(e).velocity;
    for (Index k = 0; k < d.cells(e); ++k) {
      const Index a = d.node_dof(e, k);
      const Index b = d.node_dof(e, k + 1);
      const double flux =
          tau * lax_friedrichs_flux(state.values[a], state.values[b], nu, cfg.alpha, cfg.nonlinearity);
      rhs[a] -= flux;
      rhs[b] += flux;
    }
  }
  for (Index v : g.exterior_vertices()) rhs[d.vertex_dof(v)] += influx[v];

  GraphField next{ldlt_.solve(rhs), t + tau};
  if (ldlt_.info() != Eigen::Success) throw FvmError("linear solve failed");
  if (!next.values.allFinite()) throw FvmError("non-finite value at t = " + std::to_string(next.time));
  const double scale = std::max(rhs.norm(), 1e-300);
  last_residual_ = (system_ * next.values - rhs).norm() / scale;
  if (last_residual_ > 1e-8)
    throw FvmError("linear solve residual " + std::to_string(last_residual_) + " too large");
  return next;
}

Trajectory FvmSolver::simulate_from(const GraphField& initial, const BoundaryData& data,
                                    Index steps, Index stride) {
  if (stride < 1) throw FvmError("stride must be positive");
  Trajectory out{initial};
  GraphField state = initial;
  for (Index n = 1; n <= steps; ++n) {
    state = step(state, data);
    if (n % stride == 0 || n == steps) out.push_back(state);
  }
  return out;
}

Trajectory FvmSolver::simulate(const BoundaryData& data, Index stride) {
  return simulate_from(project_initial(data.initial, *graph_, *disc_), data, disc_->time_steps(),
                       stride);
}

Trajectory simulate(const MetricGraph& graph, const Discretization& disc, const BoundaryData& data,
                    Index stride) {
  FvmSolver solver(graph, disc);
  return solver.simulate(data, stride);
}

// ---------------------------------------------------------------------------

StepFluxes step_fluxes(const Eigen::VectorXd& previous, const Eigen::VectorXd& current, double h,
                       double tau, double velocity, const FvmConfig& config) {
  const Index n = previous.size() - 1;
  StepFluxes out;
  out.face.resize(n);
  for (Index k = 0; k < n; ++k)
    out.face[k] = -config.epsilon * (current[k + 1] - current[k]) / h +
                  lax_friedrichs_flux(previous[k], previous[k + 1], velocity, config.alpha,
                                      config.nonlinearity);
  out.origin = 0.5 * h * (current[0] - previous[0]) / tau + out.face[0];
  out.target = out.face[n - 1] - 0.5 * h * (current[n] - previous[n]) / tau;
  return out;
}

double interpolate_flux(const StepFluxes& fluxes, double h, double x) {
  const Index n = fluxes.face.size();
  const double len = h * static_cast<double>(n);
  if (x <= 0.5 * h) {
    const double w = std::clamp(x / (0.5 * h), 0.0, 1.0);
    return (1.0 - w) * fluxes.origin + w * fluxes.face[0];
  }
  if (x >= len - 0.5 * h) {
    const double w = std::clamp((x - (len - 0.5 * h)) / (0.5 * h), 0.0, 1.0);
    return (1.0 - w) * fluxes.face[n - 1] + w * fluxes.target;
  }
  const auto [j, w] = locate(x / h - 0.5, n - 1);
  return (1.0 - w) * fluxes.face[j] + w * fluxes.face[j + 1];
}

EdgeHistory::EdgeHistory(const Trajectory& trajectory, const MetricGraph& graph,
                         const Discretization& disc, Index e)
    : h_(disc.h(e)), tau_(disc.tau()), length_(disc.length(e)) {
  if (trajectory.size() < 2) throw FvmError("edge history needs at least two snapshots");
  t0_ = trajectory.front().time;
  const Index steps = static_cast<Index>(trajectory.size()) - 1;
  for (Index n = 1; n <= steps; ++n) {
    const double dt = trajectory[static_cast<std::size_t>(n)].time -
                      trajectory[static_cast<std::size_t>(n - 1)].time;
    if (std::abs(dt - tau_) > 1e-9 * tau_)
      throw FvmError("edge history requires a stride-1 trajectory");
  }
  nodes_.resize(steps + 1, disc.cells(e) + 1);
  for (Index n = 0; n <= steps; ++n)
    nodes_.row(n) = edge_nodes(trajectory[static_cast<std::size_t>(n)], disc, e).transpose();
  fluxes_.resize(static_cast<std::size_t>(steps + 1));
  const double nu = graph.edge(e).velocity;
  for (Index n = 1; n <= steps; ++n)
    fluxes_[static_cast<std::size_t>(n)] =
        step_fluxes(nodes_.row(n - 1).transpose(), nodes_.row(n).transpose(), h_, tau_, nu,
                    disc.config());
  fluxes_[0] = fluxes_[1];
}

double EdgeHistory::density(double t, double x) const {
  const Index steps = nodes_.rows() - 1;
  const auto [n, wt] = locate((t - t0_) / tau_, steps);
  const auto [k, wx] = locate(x / h_, nodes_.cols() - 1);
  auto at = [&](Index row) { return (1.0 - wx) * nodes_(row, k) + wx * nodes_(row, k + 1); };
  return (1.0 - wt) * at(n) + wt * at(std::min(n + 1, steps));
}

double EdgeHistory::flux(double t, double x) const {
  const Index steps = nodes_.rows() - 1;
  const auto [n, wt] = locate((t - t0_) / tau_, steps);
  const double a = interpolate_flux(fluxes_[static_cast<std::size_t>(n)], h_, x);
  const double b = interpolate_flux(fluxes_[static_cast<std::size_t>(std::min(n + 1, steps))], h_, x);
  return (1.0 - wt) * a + wt * b;
}

}  // namespace mgdd
