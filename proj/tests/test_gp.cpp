#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mgdd/dataset.hpp"

using namespace mgdd;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mgdd_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

MetricGraph cycle3() {
  GraphSpec spec;
  for (std::int64_t v = 1; v <= 3; ++v) spec.vertices.push_back({v, ""});
  spec.edges = {{1, 2, 1.0, 1.0}, {2, 3, 1.0, 1.0}, {3, 1, 1.0, 1.0}};
  return build_graph(spec);
}

}  // namespace

TEST_CASE("RBF field evaluation") {
  GpField f;
  f.centers = Eigen::VectorXd::LinSpaced(5, 0.0, 1.0);
  f.coefficients = Eigen::VectorXd::Zero(5);
  f.length_scale = 0.3;
  CHECK(f(0.37) == 0.0);

  GpField one;
  one.centers = Eigen::VectorXd::Constant(1, 0.25);
  one.coefficients = Eigen::VectorXd::Ones(1);
  one.length_scale = 0.5;
  CHECK(one(0.25) == 1.0);
  CHECK(one(0.75) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
}

TEST_CASE("sample_gp is deterministic") {
  const GpField a = sample_gp(42, 512, 0.5);
  const GpField b = sample_gp(42, 512, 0.5);
  const GpField c = sample_gp(43, 512, 0.5);
  CHECK(a.coefficients == b.coefficients);
  CHECK(a.coefficients != c.coefficients);
  CHECK(a.centers[0] == 0.0);
  CHECK(a.centers[511] == 1.0);
  CHECK_THROWS(sample_gp(1, 0, 0.5));
  CHECK_THROWS(sample_gp(1, 4, 0.0));
}

TEST_CASE("pointwise standard deviation matches the sample spread") {
  const int n = 4000;
  double sum2 = 0.0;
  for (int s = 0; s < n; ++s) {
    const double v = sample_gp(derive_seed(9, {static_cast<std::uint64_t>(s)}), 20, 0.3)(0.4);
    sum2 += v * v;
  }
  const GpField ref = sample_gp(0, 20, 0.3);
  CHECK(std::sqrt(sum2 / n) == doctest::Approx(ref.pointwise_std(0.4)).epsilon(0.05));
}

TEST_CASE("training instance shapes and ranges on the y graph") {
  const MetricGraph g = build_graph(make_y_graph());
  const TrainingInstance inst = make_training_instance(g, 5);
  CHECK(inst.data.initial.size() == 5);
  int inflow = 0, outflow = 0;
  for (Index v = 0; v < g.num_vertices(); ++v) {
    inflow += !inst.data.inflow[static_cast<std::size_t>(v)].empty();
    outflow += !inst.data.outflow[static_cast<std::size_t>(v)].empty();
  }
  CHECK(inflow == 2);
  CHECK(outflow == 2);
  validate_boundary_data(inst.data, g, true);
  for (const auto& p : inst.data.initial) {
    CHECK(p.values.minCoeff() > 0.0);
    CHECK(p.values.maxCoeff() < 1.0);
    CHECK(p.size() == 101);
  }
  CHECK(inst.velocities.minCoeff() >= 0.5);
  CHECK(inst.velocities.maxCoeff() <= 1.5);

  InstanceConfig test_cfg;
  test_cfg.profile = GpProfile::test;
  const TrainingInstance other = make_training_instance(g, 5, test_cfg);
  CHECK(other.data.initial[0].values != inst.data.initial[0].values);
  CHECK(make_training_instance(g, 5).data.initial[3].values == inst.data.initial[3].values);
}

TEST_CASE("graph without exterior vertices gets initial data only") {
  const MetricGraph g = cycle3();
  const TrainingInstance inst = make_training_instance(g, 1);
  CHECK(inst.data.initial.size() == 3);
  for (const auto& s : inst.data.inflow) CHECK(s.empty());
  for (const auto& s : inst.data.outflow) CHECK(s.empty());
}

TEST_CASE("smooth_initial") {
  const MetricGraph g = build_graph(make_y_graph());
  FvmConfig cfg;
  cfg.cells_per_edge = 32;
  BoundaryData data = BoundaryData::zeros(g);
  for (Index e = 0; e < g.num_edges(); ++e)
    data.initial[static_cast<std::size_t>(e)] =
        UniformSeries::constant(0.2 * static_cast<double>(e), 0.0, 1.0, 33);

  SUBCASE("zero time is the projection") {
    const auto out = smooth_initial(g, data, cfg, 0.0);
    const Discretization d(g, cfg);
    const GraphField p = project_initial(data.initial, g, d);
    for (Index e = 0; e < g.num_edges(); ++e)
      CHECK((out[static_cast<std::size_t>(e)].values - edge_nodes(p, d, e)).norm() < 1e-15);
  }
  SUBCASE("vertex compatibility and mass") {
    const auto out = smooth_initial(g, data, cfg, 0.02);
    for (Index v : g.interior_vertices()) {
      const auto inc = g.incident_edges(v);
      auto value_at = [&](Index e) {
        const auto& s = out[static_cast<std::size_t>(e)];
        return g.edge(e).origin == v ? s.values[0] : s.values[s.size() - 1];
      };
      for (Index e : inc) CHECK(value_at(e) == value_at(inc[0]));
    }
    const Discretization d(g, cfg);
    const double m0 = total_mass(project_initial(data.initial, g, d), d);
    const double m1 = total_mass(project_initial(out, g, d), d);
    CHECK(m1 == doctest::Approx(m0).epsilon(1e-12));
  }
}

TEST_CASE("sensors of a zero trajectory are zero") {
  const MetricGraph g = build_graph(make_y_graph());
  FvmConfig cfg;
  cfg.cells_per_edge = 16;
  const Discretization d(g, cfg);
  const BoundaryData data = BoundaryData::zeros(g);
  const auto traj = simulate(g, d, data);
  for (const auto& s : extract_sensors(traj, g, d, data, SensorGrids{}))
    CHECK(s.flatten().head(s.size() - 1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("uniform state on a cycle gives constant flux traces") {
  const MetricGraph g = cycle3();
  FvmConfig cfg;
  cfg.cells_per_edge = 16;
  const Discretization d(g, cfg);
  BoundaryData data = BoundaryData::zeros(g);
  for (auto& p : data.initial) p = UniformSeries::constant(0.3, 0.0, 1.0, 101);
  const auto traj = simulate(g, d, data);
  for (const auto& s : extract_sensors(traj, g, d, data, SensorGrids{})) {
    CHECK(s.type == EdgeType::inner);
    CHECK((s.origin.array() - 0.21).abs().maxCoeff() < 1e-12);
    CHECK((s.target.array() - 0.21).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("extracted traces on a GP instance") {
  const MetricGraph base = build_graph(make_y_graph());
  TrainingInstance inst = make_training_instance(base, 17);
  const MetricGraph g = base.with_velocities(inst.velocities);
  FvmConfig cfg;
  inst.data.initial = smooth_initial(g, inst.data, cfg, 0.02);
  const Discretization d(g, cfg);
  const auto traj = simulate(g, d, inst.data);
  const SensorGrids grids;
  const auto sensors = extract_sensors(traj, g, d, inst.data, grids);
  const Eigen::VectorXd t = grids.origin_times();

  // Robin relation at the inflow origins: J(t_n, 0) = u(t_{n-1}) (1 - rho(t_n, 0)).
  for (Index e : {Index{0}, Index{1}}) {
    const EdgeHistory h(traj, g, d, e);
    const Index v = g.edge(e).origin;
    for (Index n = 1; n < t.size(); ++n) {
      const double rho = h.density(t[n], 0.0);
      CHECK(h.origin_flux(t[n]) ==
            doctest::Approx(inst.data.inflow_rate(v, t[n - 1]) * (1.0 - rho)).epsilon(1e-9));
    }
    CHECK((sensors[static_cast<std::size_t>(e)].origin - inst.data.inflow[static_cast<std::size_t>(v)].values).norm() < 1e-15);
  }
  // Kirchhoff sums of the traces at interior vertices.
  double worst = 0.0;
  for (Index v : g.interior_vertices()) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(t.size());
    for (Index e : g.vertex(v).in_edges) sum += sensors[static_cast<std::size_t>(e)].target;
    for (Index e : g.vertex(v).out_edges) sum -= sensors[static_cast<std::size_t>(e)].origin;
    worst = std::max(worst, sum.cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-10);
  const SensorInput back =
      SensorInput::unflatten(sensors[2].flatten(), grids, EdgeType::inner);
  CHECK(back.flatten() == sensors[2].flatten());
}

TEST_CASE("dataset generation counts and round-trip") {
  const std::vector<MetricGraph> graphs{build_graph(make_y_graph()), build_graph(make_diamond()),
                                        build_graph(make_chain(3))};
  DatasetConfig cfg;
  cfg.fvm.cells_per_edge = 16;
  cfg.fvm.time_steps = 20;
  const Dataset ds = generate_dataset(graphs, {"y", "diamond", "chain3"}, {3, 4}, cfg);
  REQUIRE(ds.instances.size() == 2);
  const F32Rows& rows = ds.instances[0];
  CHECK(rows.rows() == 14);
  CHECK(rows.cols() == 3 + 304);
  int counts[3] = {0, 0, 0};
  for (Index r = 0; r < rows.rows(); ++r) counts[static_cast<int>(rows(r, 2))]++;
  CHECK(counts[0] == 4);
  CHECK(counts[1] == 6);
  CHECK(counts[2] == 4);

  const auto dir = scratch_dir("dataset");
  save_dataset(ds, dir);
  const Dataset back = load_dataset(dir);
  CHECK(back.instances[1] == ds.instances[1]);
  CHECK(back.seeds == ds.seeds);
  const auto dir2 = scratch_dir("dataset2");
  save_dataset(back, dir2);
  CHECK(read_text(dir / "manifest.json") == read_text(dir2 / "manifest.json"));
  CHECK(read_text(dir / "instances/000001.f32") == read_text(dir2 / "instances/000001.f32"));

  std::filesystem::resize_file(dir2 / "instances/000000.f32", 100);
  CHECK_THROWS_AS(load_dataset(dir2), FormatError);
  {
    std::fstream f(dir / "instances/000001.f32", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(load_dataset(dir), FormatError);
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}
