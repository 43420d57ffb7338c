#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mgdd/config.hpp"
#include "mgdd/io.hpp"

using namespace mgdd;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mgdd_test_io";
  fs::create_directories(dir);
  return dir / name;
}

struct Run {
  MetricGraph graph = build_graph(make_y_graph());
  Discretization disc{graph, FvmConfig{8, 10}};
  Trajectory traj;
  Run() {
    BoundaryData data = make_training_instance(graph, 11, {GpProfile::test}).data;
    traj = simulate(graph, disc, data, 5);
  }
};

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("snapshots round-trip byte for byte") {
  const Run run;
  const Snapshots s = make_snapshots(run.traj, run.graph, run.disc);
  CHECK(s.values.rows() == 3);
  CHECK(s.num_dofs() == run.disc.num_dofs());
  const fs::path a = scratch("a.snap"), b = scratch("b.snap");
  save_snapshots(s, a);
  const Snapshots back = load_snapshots(a);
  CHECK(back.values == s.values);
  CHECK(back.times == s.times);
  CHECK(back.cells == s.cells);
  CHECK(back.vertex_ids == s.vertex_ids);
  save_snapshots(back, b);
  CHECK(read_text(a) == read_text(b));

  const Trajectory t = back.trajectory();
  REQUIRE(t.size() == run.traj.size());
  CHECK(t.back().time == run.traj.back().time);
  CHECK(t.back().values == run.traj.back().values);
}

TEST_CASE("damaged snapshots are rejected") {
  const Run run;
  const fs::path p = scratch("c.snap");
  save_snapshots(make_snapshots(run.traj, run.graph, run.disc), p);
  const std::string good = read_text(p);

  write_text(p, good.substr(0, good.size() - 8));
  CHECK_THROWS_AS(load_snapshots(p), FormatError);

  std::string flipped = good;
  flipped[flipped.size() - 3] ^= 0x10;
  write_text(p, flipped);
  CHECK_THROWS_AS(load_snapshots(p), FormatError);

  std::string other = good;
  other.replace(0, 10, "MGDDSNAP 9");
  write_text(p, other);
  CHECK_THROWS_AS(load_snapshots(p), FormatError);

  write_text(p, "hello\n");
  CHECK_THROWS_AS(load_snapshots(p), FormatError);
}

TEST_CASE("trajectory and profile csv") {
  const Run run;
  const fs::path p = scratch("traj.csv");
  write_trajectory_csv(run.traj, run.graph, run.disc, p);
  // 5 edges x 7 interior nodes + 6 vertices per snapshot.
  CHECK(count_lines(p) == 1 + 3 * (5 * 7 + 6));
  std::ifstream in(p);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "time,kind,id,cell,x,rho");
  CHECK(first.rfind("0,edge,0,1,0.125,", 0) == 0);

  const Trajectory full = simulate(run.graph, run.disc, make_training_instance(run.graph, 11, {GpProfile::test}).data);
  const FvmSolution sol(full, run.graph, run.disc);
  const fs::path q = scratch("profile.csv");
  write_profile_csv(sol, &sol, Eigen::Vector2d(0.0, 1.0), 11, q);
  CHECK(count_lines(q) == 1 + 5 * 2 * 11);
  std::ifstream pin(q);
  std::getline(pin, header);
  CHECK(header == "time,edge,x,rho,rho_ref");
  std::getline(pin, first);
  const auto comma = first.rfind(',');
  const auto prev = first.rfind(',', comma - 1);
  CHECK(first.substr(prev + 1, comma - prev - 1) == first.substr(comma + 1));
}

TEST_CASE("doubles print in shortest round-trip form") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1e-12) == "1e-12");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("config defaults, overrides and round-trip") {
  const RunConfig d = parse_config("");
  CHECK(d.fvm.cells_per_edge == 64);
  CHECK(d.fvm.epsilon == 0.05);
  CHECK(d.coupling.adam.iterations == 2000);
  CHECK(d.inverse.measurement_weight == 1.0);
  CHECK(d.surrogate == "oracle");

  const RunConfig c = parse_config(
      "[run]\nseed = 42\ngraph = chain:7\n[fvm]\nepsilon = 0.1\nfinal_time = 2\n"
      "[inverse]\nnoise_levels = 0.01, 0.05,0.1\n[coupling]\nn_beta = 20\n");
  CHECK(c.seed == 42);
  CHECK(c.fvm.epsilon == 0.1);
  CHECK(c.grids.final_time == 2.0);
  CHECK(c.coupling.fvm.final_time == 2.0);
  CHECK(c.inverse.coupling.n_beta == 20);
  CHECK(c.noise_levels == std::vector<double>{0.01, 0.05, 0.1});

  const std::string text = dump_config(c);
  CHECK(dump_config(parse_config(text)) == text);
  CHECK(text.find("[coupling]\n") != std::string::npos);
  CHECK(dump_config(RunConfig{}) == dump_config(d));
}

TEST_CASE("bad configs name the offending key") {
  const auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("[fvm]\nepsilon = -1\n").find("epsilon") != std::string::npos);
  CHECK(message("[fvm]\nepsilon = abc\n").find("epsilon") != std::string::npos);
  CHECK(message("[fvm]\nepsilonn = 1\n").find("epsilonn") != std::string::npos);
  CHECK(message("[surrogate]\nkind = magic\n").find("kind") != std::string::npos);
  CHECK(message("[data]\nprofile = weird\n").find("profile") != std::string::npos);
  CHECK_THROWS_AS(read_config(scratch("missing.ini")), ConfigError);
}

TEST_CASE("built-in graphs") {
  CHECK(build_graph(resolve_graph("chain:7")).num_edges() == 7);
  CHECK(build_graph(resolve_graph("y")).num_edges() == 5);
  const fs::path p = scratch("g.json");
  write_graph_spec(make_diamond(), p);
  CHECK(build_graph(resolve_graph(p.filename().string(), p.parent_path())).num_edges() == 6);
  CHECK_THROWS_AS(resolve_graph("chain:0"), ConfigError);
  CHECK_THROWS_AS(resolve_graph("nope.json"), ConfigError);
}

TEST_CASE("random networks") {
  for (const Index edges : {30, 102, 306, 1034}) {
    const MetricGraph g = build_graph(make_network(edges, 5, 5, 3), ConnectivityPolicy::reject);
    CHECK(g.num_edges() == edges);
    const std::vector<EdgeType> types = classify_edges(g);
    CHECK(std::count(types.begin(), types.end(), EdgeType::inflow) == 5);
    CHECK(std::count(types.begin(), types.end(), EdgeType::outflow) == 5);
    CHECK(static_cast<Index>(g.exterior_vertices().size()) == 10);
  }
  CHECK(dump_graph_spec(make_network(50, 2, 3, 9)) == dump_graph_spec(make_network(50, 2, 3, 9)));
  CHECK_THROWS_AS(make_network(5, 5, 5, 1), GraphError);
}
