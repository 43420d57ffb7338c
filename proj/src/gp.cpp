#include "mgdd/gp.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mgdd {

double GpField::operator()(double x) const {
  const double inv = 1.0 / (length_scale * length_scale);
  return ((-(centers.array() - x).square() * inv).exp() * coefficients.array()).sum();
}

double GpField::pointwise_std(double x) const {
  const double inv = 1.0 / (length_scale * length_scale);
  return std::sqrt((-2.0 * (centers.array() - x).square() * inv).exp().sum());
}

GpField sample_gp(std::uint64_t seed, Index count, double length_scale) {
  if (count < 1) throw std::invalid_argument("GP needs at least one center");
  if (!(length_scale > 0.0)) throw std::invalid_argument("GP length scale must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  GpField field;
  if (count == 1)
    field.centers = Eigen::VectorXd::Constant(1, 0.5);
  else
    field.centers = Eigen::VectorXd::LinSpaced(count, 0.0, 1.0);
  field.coefficients.resize(count);
  for (Index k = 0; k < count; ++k) field.coefficients[k] = normal(rng);
  field.length_scale = length_scale;
  return field;
}

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (auto s : stream) {
    words.push_back(static_cast<std::uint32_t>(s));
    words.push_back(static_cast<std::uint32_t>(s >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

GpProfileParams profile_params(GpProfile profile) {
  return profile == GpProfile::train ? GpProfileParams{512, 0.5} : GpProfileParams{468, 0.4};
}

std::string_view to_string(GpProfile profile) {
  return profile == GpProfile::train ? "train" : "test";
}

GpProfile gp_profile_from_string(std::string_view name) {
  if (name == "train") return GpProfile::train;
  if (name == "test") return GpProfile::test;
  throw std::invalid_argument("unknown GP profile '" + std::string(name) + "'");
}

TrainingInstance make_training_instance(const MetricGraph& graph, std::uint64_t seed,
                                        const InstanceConfig& config) {
  const auto [count, ell] = profile_params(config.profile);
  TrainingInstance inst;
  inst.data = BoundaryData::zeros(graph, config.final_time);
  for (Index e = 0; e < graph.num_edges(); ++e) {
    const GpField gp = sample_gp(derive_seed(seed, {1, static_cast<std::uint64_t>(e)}), count, ell);
    const double len = graph.edge(e).length;
    inst.data.initial[static_cast<std::size_t>(e)] = UniformSeries::sample(
        [&](double x) { return logistic(gp.standardized(x / len)); }, 0.0, len, config.space_samples);
  }
  for (Index v : graph.exterior_vertices()) {
    const VertexRole role = graph.vertex(v).role;
    if (role == VertexRole::none) continue;
    const GpField gp = sample_gp(derive_seed(seed, {2, static_cast<std::uint64_t>(v)}), count, ell);
    const double T = config.final_time;
    UniformSeries rate = UniformSeries::sample(
        [&](double t) { return config.rate_amplitude * std::max(gp.standardized(t / T), 0.0); }, 0.0,
        T, config.time_samples);
    (role == VertexRole::inflow ? inst.data.inflow : inst.data.outflow)[static_cast<std::size_t>(v)] =
        std::move(rate);
  }
  inst.velocities = graph.velocities();
  if (config.sample_velocities) {
    std::mt19937_64 rng(derive_seed(seed, {3}));
    std::uniform_real_distribution<double> u(config.velocity_min, config.velocity_max);
    for (Index e = 0; e < graph.num_edges(); ++e) inst.velocities[e] = u(rng);
  }
  return inst;
}

UniformSeries sample_edge(const GraphField& field, const Discretization& disc, Index e,
                          Index count) {
  const Eigen::VectorXd nodes = edge_nodes(field, disc, e);
  const UniformSeries interp{0.0, disc.length(e), nodes};
  return UniformSeries::sample([&](double x) { return interp(x); }, 0.0, disc.length(e), count);
}

std::vector<UniformSeries> smooth_initial(const MetricGraph& graph, const BoundaryData& data,
                                          const FvmConfig& fvm, double t_smooth) {
  if (t_smooth < 0.0) throw FvmError("t_smooth must be nonnegative");
  FvmConfig cfg = fvm;
  cfg.final_time = std::max(t_smooth, 1e-300);
  cfg.time_steps = 1;
  Discretization probe(graph, cfg);
  cfg.time_steps = std::max<Index>(1, static_cast<Index>(std::ceil(t_smooth / probe.min_h() - 1e-9)));
  const Discretization disc(graph, cfg);
  GraphField state = project_initial(data.initial, graph, disc);
  if (t_smooth > 0.0) {
    FvmSolver solver(graph, disc);
    for (Index n = 0; n < cfg.time_steps; ++n) state = solver.step(state, data);
  }
  std::vector<UniformSeries> out;
  for (Index e = 0; e < graph.num_edges(); ++e)
    out.push_back(sample_edge(state, disc, e, data.initial[static_cast<std::size_t>(e)].size()));
  return out;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd SensorInput::flatten() const {
  Eigen::VectorXd flat(size());
  flat << origin, target, init, velocity;
  return flat;
}

SensorInput SensorInput::unflatten(const Eigen::VectorXd& flat, const SensorGrids& grids,
                                   EdgeType type, double length) {
  if (flat.size() != grids.n_sensor()) throw std::invalid_argument("sensor vector has wrong length");
  SensorInput s;
  s.origin = flat.segment(0, grids.n_origin);
  s.target = flat.segment(grids.n_origin, grids.n_target);
  s.init = flat.segment(grids.n_origin + grids.n_target, grids.n_init);
  s.velocity = flat[flat.size() - 1];
  s.type = type;
  s.length = length;
  s.final_time = grids.final_time;
  return s;
}

double rate_share(const MetricGraph& graph, const Discretization& disc, Index e, Index v) {
  (void)graph;
  return 0.5 * disc.h(e) / disc.patch_measure(v);
}

std::vector<SensorInput> extract_sensors(const Trajectory& trajectory, const MetricGraph& graph,
                                         const Discretization& disc, const BoundaryData& data,
                                         const SensorGrids& grids) {
  const auto types = classify_edges(graph);
  const Eigen::VectorXd to = grids.origin_times();
  const Eigen::VectorXd tt = grids.target_times();
  std::vector<SensorInput> out;
  out.reserve(static_cast<std::size_t>(graph.num_edges()));
  for (Index e = 0; e < graph.num_edges(); ++e) {
    const EdgeHistory hist(trajectory, graph, disc, e);
    const Edge& edge = graph.edge(e);
    SensorInput s;
    s.type = types[static_cast<std::size_t>(e)];
    s.velocity = edge.velocity;
    s.length = edge.length;
    s.final_time = grids.final_time;
    s.origin.resize(grids.n_origin);
    s.target.resize(grids.n_target);
    if (s.type == EdgeType::inflow) {
      const double share = rate_share(graph, disc, e, edge.origin);
      for (Index i = 0; i < to.size(); ++i) s.origin[i] = share * data.inflow_rate(edge.origin, to[i]);
    } else {
      for (Index i = 0; i < to.size(); ++i) s.origin[i] = hist.origin_flux(to[i]);
    }
    if (s.type == EdgeType::outflow) {
      const double share = rate_share(graph, disc, e, edge.target);
      for (Index i = 0; i < tt.size(); ++i) s.target[i] = share * data.outflow_rate(edge.target, tt[i]);
    } else {
      for (Index i = 0; i < tt.size(); ++i) s.target[i] = hist.target_flux(tt[i]);
    }
    const auto& init = data.initial[static_cast<std::size_t>(e)];
    s.init = UniformSeries::sample([&](double x) { return init(x); }, 0.0, edge.length, grids.n_init).values;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mgdd
