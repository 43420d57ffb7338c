#include <doctest.h>

#include <cmath>
#include <random>

#include "mgdd/fvm.hpp"

using namespace mgdd;

namespace {

// Smooth random data built from a few sine modes, independent of the GP module.
BoundaryData sine_data(const MetricGraph& g, std::uint64_t seed, double rate_scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  BoundaryData data = BoundaryData::zeros(g);
  for (Index e = 0; e < g.num_edges(); ++e) {
    const double a = u(rng), b = u(rng), c = 6.0 * u(rng);
    data.initial[static_cast<std::size_t>(e)] = UniformSeries::sample(
        [=](double x) { return std::clamp(a + 0.4 * (b - 0.5) * std::sin(c * x + 3.0 * b), 0.0, 1.0); },
        0.0, g.edge(e).length, 65);
  }
  for (Index v : g.exterior_vertices()) {
    const double a = u(rng) * rate_scale, c = 5.0 * u(rng);
    auto series = UniformSeries::sample([=](double t) { return a * (1.0 + std::sin(c * t)); }, 0.0, 1.0, 51);
    if (g.vertex(v).role == VertexRole::inflow) data.inflow[static_cast<std::size_t>(v)] = series;
    if (g.vertex(v).role == VertexRole::outflow) data.outflow[static_cast<std::size_t>(v)] = series;
  }
  return data;
}

}  // namespace

TEST_CASE("nonlinearity values") {
  CHECK(saturation(0.0) == 0.0);
  CHECK(saturation(1.0) == 0.0);
  CHECK(saturation(0.5) == 0.25);
  CHECK(Nonlinearity::saturating()(0.5) == 0.25);
  Eigen::Array3d r(0.0, 0.5, 1.0);
  Eigen::Array3d f = saturation(r);
  CHECK(f[1] == 0.25);
}

TEST_CASE("lax friedrichs flux examples") {
  CHECK(lax_friedrichs_flux(0.0, 0.0, 1.0, 1.0) == 0.0);
  CHECK(lax_friedrichs_flux(0.5, 0.5, 2.0, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(lax_friedrichs_flux(0.2, 0.8, 1.0, 1.0) == doctest::Approx(-0.14).epsilon(1e-14));
  const auto f = Nonlinearity::saturating();
  for (double rho : {0.0, 0.1, 0.37, 0.9, 1.0})
    CHECK(lax_friedrichs_flux(rho, rho, 1.3, 1.0, f) == doctest::Approx(1.3 * saturation(rho)));
}

TEST_CASE("operator without diffusion is the lumped mass matrix") {
  const MetricGraph g = build_graph(make_chain(1));
  FvmConfig cfg;
  cfg.cells_per_edge = 2;
  cfg.epsilon = 0.0;
  const Discretization d(g, cfg);
  const Eigen::MatrixXd m = Eigen::MatrixXd(assemble_implicit_operator(g, d));
  REQUIRE(m.rows() == 3);
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(3, 3);
  expected.diagonal() << 0.5, 0.25, 0.25;  // interior cell h, vertex half cells h/2
  CHECK((m - expected).norm() == 0.0);
}

TEST_CASE("implicit operator is an M-matrix") {
  const MetricGraph g = build_graph(make_chain(7));
  FvmConfig cfg;
  cfg.cells_per_edge = 16;
  const Discretization d(g, cfg);
  const Eigen::MatrixXd m = Eigen::MatrixXd(assemble_implicit_operator(g, d));
  for (Index i = 0; i < m.rows(); ++i) {
    double off = 0.0;
    for (Index j = 0; j < m.cols(); ++j) {
      if (i == j) continue;
      CHECK(m(i, j) <= 0.0);
      off += std::abs(m(i, j));
    }
    CHECK(m(i, i) > off);
    CHECK(m.row(i).sum() >= 0.0);
  }
  CHECK((m - m.transpose()).norm() == 0.0);
}

TEST_CASE("unknown count on the y graph") {
  const MetricGraph g = build_graph(make_y_graph());
  FvmConfig cfg;
  cfg.cells_per_edge = 10;
  const Discretization d(g, cfg);
  CHECK(d.num_dofs() == 5 * 9 + 6);
  CHECK(assemble_implicit_operator(g, d).rows() == 51);
}

TEST_CASE("project_initial quadrature") {
  SUBCASE("constant profile") {
    const MetricGraph g = build_graph(make_y_graph());
    FvmConfig cfg;
    cfg.cells_per_edge = 7;
    const Discretization d(g, cfg);
    std::vector<UniformSeries> init(5, UniformSeries::constant(0.3, 0.0, 1.0, 11));
    const GraphField f = project_initial(init, g, d);
    CHECK((f.values.array() - 0.3).abs().maxCoeff() < 1e-15);
  }
  SUBCASE("linear profile, middle cell") {
    const MetricGraph g = build_graph(make_chain(1));
    FvmConfig cfg;
    cfg.cells_per_edge = 2;
    const Discretization d(g, cfg);
    std::vector<UniformSeries> init{UniformSeries::sample([](double x) { return x; }, 0.0, 1.0, 3)};
    const GraphField f = project_initial(init, g, d);
    CHECK(f.values[d.node_dof(0, 1)] == doctest::Approx(0.5).epsilon(1e-15));
    // half cells: mean of x over (0, 1/4) and (3/4, 1)
    CHECK(f.values[d.node_dof(0, 0)] == doctest::Approx(0.125));
    CHECK(f.values[d.node_dof(0, 2)] == doctest::Approx(0.875));
  }
  SUBCASE("vertex patch of a two-edge chain") {
    const MetricGraph g = build_graph(make_chain(2));
    FvmConfig cfg;
    cfg.cells_per_edge = 4;
    const Discretization d(g, cfg);
    std::vector<UniformSeries> init{UniformSeries::sample([](double x) { return x; }, 0.0, 1.0, 5),
                                    UniformSeries::constant(0.2, 0.0, 1.0)};
    const GraphField f = project_initial(init, g, d);
    // ((h/2)(1 - h/4) + 0.2 h/2) / h with h = 1/4
    CHECK(f.values[d.vertex_dof(1)] == doctest::Approx(0.56875).epsilon(1e-14));
  }
  SUBCASE("too short profile") {
    const MetricGraph g = build_graph(make_chain(1));
    const Discretization d(g, FvmConfig{});
    std::vector<UniformSeries> init{UniformSeries{0.0, 1.0, Eigen::VectorXd::Ones(1)}};
    CHECK_THROWS_AS(project_initial(init, g, d), FvmError);
  }
}

TEST_CASE("integrate_profile matches a fine midpoint rule") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  UniformSeries p{0.0, 2.0, Eigen::VectorXd::NullaryExpr(9, [&] { return u(rng); })};
  for (int trial = 0; trial < 20; ++trial) {
    double a = 2.0 * u(rng), b = 2.0 * u(rng);
    if (a > b) std::swap(a, b);
    const int n = 200000;
    double ref = 0.0;
    for (int i = 0; i < n; ++i) ref += p(a + (i + 0.5) * (b - a) / n);
    ref *= (b - a) / n;
    CHECK(integrate_profile(p, a, b) == doctest::Approx(ref).epsilon(1e-8));
  }
}

TEST_CASE("total mass of constant states") {
  GraphSpec spec = make_y_graph();
  spec.edges[2].length = 2.5;
  const MetricGraph g = build_graph(spec);
  const Discretization d(g, FvmConfig{});
  GraphField zero{Eigen::VectorXd::Zero(d.num_dofs()), 0.0};
  GraphField one{Eigen::VectorXd::Ones(d.num_dofs()), 0.0};
  CHECK(total_mass(zero, d) == 0.0);
  CHECK(total_mass(one, d) == doctest::Approx(6.5).epsilon(1e-14));
}

TEST_CASE("stationary states") {
  const MetricGraph g = build_graph(make_y_graph());
  FvmConfig cfg;
  cfg.cells_per_edge = 16;
  cfg.time_steps = 20;
  const Discretization d(g, cfg);
  const BoundaryData zero = BoundaryData::zeros(g);
  FvmSolver solver(g, d);
  for (double c : {0.0, 1.0}) {
    GraphField state{Eigen::VectorXd::Constant(d.num_dofs(), c), 0.0};
    for (int n = 0; n < 20; ++n) state = solver.step(state, zero);
    CHECK((state.values.array() - c).abs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("mass is conserved without boundary rates") {
  const MetricGraph g = build_graph(make_y_graph());
  FvmConfig cfg;
  cfg.cells_per_edge = 32;
  cfg.time_steps = 100;
  const Discretization d(g, cfg);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GraphField state{Eigen::VectorXd::NullaryExpr(d.num_dofs(), [&] { return u(rng); }), 0.0};
  const double m0 = total_mass(state, d);
  FvmSolver solver(g, d);
  const BoundaryData zero = BoundaryData::zeros(g);
  for (int n = 0; n < 100; ++n) {
    state = solver.step(state, zero);
    CHECK(std::abs(total_mass(state, d) - m0) < 1e-13);
  }
}

TEST_CASE("bounds hold for random data on the y graph") {
  const MetricGraph g = build_graph(make_y_graph());
  FvmConfig cfg;
  cfg.cells_per_edge = 32;
  cfg.time_steps = 32;
  const Discretization d(g, cfg);
  REQUIRE(d.bound_preserving_step());
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto traj = simulate(g, d, sine_data(g, seed, 3.0));
    for (const auto& s : traj) {
      CHECK(s.values.minCoeff() >= -1e-12);
      CHECK(s.values.maxCoeff() <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("discrete vertex fluxes satisfy Kirchhoff and the rate conditions") {
  const MetricGraph g = build_graph(make_y_graph());
  FvmConfig cfg;
  cfg.cells_per_edge = 16;
  cfg.time_steps = 40;
  const Discretization d(g, cfg);
  const BoundaryData data = sine_data(g, 5, 1.0);
  const Trajectory traj = simulate(g, d, data);
  std::vector<EdgeHistory> hist;
  for (Index e = 0; e < g.num_edges(); ++e) hist.emplace_back(traj, g, d, e);
  for (Index n = 1; n < static_cast<Index>(traj.size()); ++n) {
    const double t = traj[static_cast<std::size_t>(n)].time;
    for (Index v = 0; v < g.num_vertices(); ++v) {
      double sum = 0.0;
      for (Index e : g.incident_edges(v)) {
        const auto& h = hist[static_cast<std::size_t>(e)];
        sum += g.normal(e, v) * (g.edge(e).origin == v ? h.origin_flux(t) : h.target_flux(t));
      }
      const double rho = traj[static_cast<std::size_t>(n)].values[d.vertex_dof(v)];
      const double told = t - d.tau();
      const double expected =
          -data.inflow_rate(v, told) * (1.0 - rho) + data.outflow_rate(v, told) * rho;
      CHECK(sum == doctest::Approx(expected).epsilon(1e-9).scale(1.0));
    }
  }
}

TEST_CASE("edge history reproduces node values and face fluxes") {
  const MetricGraph g = build_graph(make_chain(3));
  FvmConfig cfg;
  cfg.cells_per_edge = 8;
  cfg.time_steps = 10;
  const Discretization d(g, cfg);
  const BoundaryData data = sine_data(g, 2, 1.0);
  const Trajectory traj = simulate(g, d, data);
  const EdgeHistory h(traj, g, d, 1);
  const double dx = d.h(1);
  for (Index n = 1; n <= 10; ++n) {
    const Eigen::VectorXd prev = edge_nodes(traj[static_cast<std::size_t>(n - 1)], d, 1);
    const Eigen::VectorXd cur = edge_nodes(traj[static_cast<std::size_t>(n)], d, 1);
    const double t = traj[static_cast<std::size_t>(n)].time;
    for (Index k = 0; k <= 8; ++k) CHECK(h.density(t, k * dx) == doctest::Approx(cur[k]).epsilon(1e-14));
    for (Index k = 0; k < 8; ++k) {
      const double diffusive = -cfg.epsilon * (cur[k + 1] - cur[k]) / dx;
      const double convective = lax_friedrichs_flux(prev[k], prev[k + 1], 1.0, cfg.alpha);
      CHECK(h.flux(t, (k + 0.5) * dx) == doctest::Approx(diffusive + convective).epsilon(1e-12));
    }
  }
}

TEST_CASE("invalid boundary data is rejected") {
  const MetricGraph g = build_graph(make_y_graph());
  BoundaryData data = BoundaryData::zeros(g);
  validate_boundary_data(data, g, true);
  data.initial[0].values[0] = 1.5;
  CHECK_THROWS_AS(validate_boundary_data(data, g), FvmError);
  data = BoundaryData::zeros(g);
  data.inflow[static_cast<std::size_t>(g.vertex_index(1))] = UniformSeries::constant(-1.0, 0.0, 1.0);
  CHECK_THROWS_AS(validate_boundary_data(data, g), FvmError);
  data = BoundaryData::zeros(g);
  data.inflow[static_cast<std::size_t>(g.vertex_index(3))] = UniformSeries::constant(1.0, 0.0, 1.0);
  CHECK_THROWS_AS(validate_boundary_data(data, g), FvmError);
  data = BoundaryData::zeros(g);
  const auto v1 = static_cast<std::size_t>(g.vertex_index(1));
  data.inflow[v1] = UniformSeries::constant(1.0, 0.0, 1.0);
  data.outflow[v1] = UniformSeries::constant(1.0, 0.0, 1.0);
  CHECK_THROWS_AS(validate_boundary_data(data, g, true), FvmError);
}
