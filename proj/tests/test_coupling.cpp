#include <doctest.h>

#include <cmath>
#include <random>

#include "mgdd/coupling.hpp"
#include "mgdd/deeponet.hpp"
#include "mgdd/oracle.hpp"

using namespace mgdd;

namespace {

// rho = a + b t at both ends with a = velocity, flux = c at the origin and d at
// the target, where c, d are the first entries of the traces.
class AffineStub : public EdgeSurrogate {
  struct Tape : EdgeTape {
    explicit Tape(const EdgeValues& v) {
      rho_ = v.rho;
      flux_ = v.flux;
    }
    Eigen::VectorXd pullback(const Eigen::VectorXd&, const Eigen::VectorXd&) const override {
      throw SurrogateError("not differentiable");
    }
  };

 public:
  std::string name() const override { return "affine-stub"; }
  double epsilon() const override { return 0.05; }
  const SensorGrids& grids() const override { return grids_; }
  EdgeValues evaluate(const SensorInput& s, const QueryPoints& q, const Eigen::MatrixXd*) const override {
    EdgeValues v;
    v.rho = (s.velocity + 0.5 * q.t.array()).matrix();
    v.flux.resize(q.size());
    for (Index i = 0; i < q.size(); ++i) v.flux[i] = q.x[i] == 0.0 ? s.origin[0] : s.target[0];
    return v;
  }
  std::unique_ptr<EdgeTape> record(const SensorInput& s, const QueryPoints& q) const override {
    return std::make_unique<Tape>(evaluate(s, q, nullptr));
  }

 private:
  SensorGrids grids_;
};

struct Instance {
  MetricGraph graph;
  BoundaryData data;
  Trajectory traj;
  FvmConfig fvm;
  std::shared_ptr<Discretization> disc;
};

Instance make_instance(const GraphSpec& spec, std::uint64_t seed) {
  const MetricGraph base = build_graph(spec);
  TrainingInstance inst = make_training_instance(base, seed);
  Instance out{base.with_velocities(inst.velocities), std::move(inst.data), {}, FvmConfig{}, nullptr};
  out.data.initial = smooth_initial(out.graph, out.data, out.fvm, 0.02);
  out.disc = std::make_shared<Discretization>(out.graph, out.fvm);
  out.traj = simulate(out.graph, *out.disc, out.data);
  return out;
}

SurrogateSet oracle_set() { return SurrogateSet(std::make_shared<const FvmOracle>()); }

void check_gradient(const CouplingProblem& p, const Eigen::VectorXd& beta, double tol) {
  Eigen::VectorXd g;
  p.loss_and_gradient(beta, g);
  const double h = 1e-5;
  const double scale = g.cwiseAbs().maxCoeff();
  REQUIRE(scale > 0.0);
  double worst = 0.0;
  for (Index i = 0; i < beta.size(); ++i) {
    Eigen::VectorXd a = beta, b = beta;
    a[i] += h;
    b[i] -= h;
    const double fd = (p.loss(a) - p.loss(b)) / (2 * h);
    worst = std::max(worst, std::abs(fd - g[i]) / std::max(std::abs(fd), 1e-3 * scale));
  }
  CHECK(worst < tol);
}

}  // namespace

TEST_CASE("RBF trace basis") {
  const RbfBasis b{4, 0.5, 0.0, 3.0};
  CHECK(b.centers()[1] == doctest::Approx(1.0));
  const Eigen::MatrixXd m = b.matrix((Eigen::VectorXd(2) << 1.0, 1.5).finished());
  CHECK(m(0, 1) == 1.0);
  CHECK(m(1, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(m(0, 0) == doctest::Approx(std::exp(-4.0)).epsilon(1e-15));
}

TEST_CASE("parameter counts") {
  CHECK(coupling_parameter_count(build_graph(make_y_graph()), 10) == 60);
  CHECK(coupling_parameter_count(build_graph(make_chain(7)), 10) == 120);
  CHECK(init_parameters(build_graph(make_diamond()), 10).beta.size() == 100);

  const MetricGraph y = build_graph(make_y_graph());
  const TraceLayout layout(y, 10);
  CHECK(layout.slots().size() == 6);
  CHECK(layout.slot(0, Endpoint::origin) == -1);
  CHECK(layout.slot(2, Endpoint::origin) >= 0);
  CHECK(layout.slot(2, Endpoint::target) >= 0);
  CHECK(layout.size() == 60);
  CHECK(init_parameters(y).beta.cwiseAbs().maxCoeff() == 0.0);

  // Unknown traces at a vertex equal its degree.
  for (Index v : y.interior_vertices()) {
    Index n = 0;
    for (const TraceSlot& s : layout.slots()) {
      const Edge& e = y.edge(s.edge);
      n += (s.end == Endpoint::origin ? e.origin : e.target) == v;
    }
    CHECK(n == y.vertex(v).degree());
  }
}

TEST_CASE("sensor assembly") {
  const Instance in = make_instance(make_y_graph(), 3);
  const CouplingProblem p(in.graph, in.data, oracle_set());
  const auto zero = p.sensor_inputs(Eigen::VectorXd::Zero(p.num_parameters()));
  const auto ref = extract_sensors(in.traj, in.graph, *in.disc, in.data, SensorGrids{});
  for (std::size_t e = 0; e < zero.size(); ++e) {
    CHECK(zero[e].type == ref[e].type);
    CHECK(zero[e].init == ref[e].init);
    CHECK(zero[e].velocity == ref[e].velocity);
    if (zero[e].type == EdgeType::inflow)
      CHECK(zero[e].origin == ref[e].origin);
    else
      CHECK(zero[e].origin.cwiseAbs().maxCoeff() == 0.0);
    if (zero[e].type == EdgeType::outflow)
      CHECK(zero[e].target == ref[e].target);
    else
      CHECK(zero[e].target.cwiseAbs().maxCoeff() == 0.0);
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p.num_parameters());
  const Index s = p.layout().slot(2, Endpoint::target);
  beta[p.layout().slots()[static_cast<std::size_t>(s)].offset + 3] = 2.0;
  const auto one = p.sensor_inputs(beta);
  const Eigen::VectorXd t = SensorGrids{}.target_times();
  const double c = p.basis().centers()[3];
  for (Index i = 0; i < t.size(); i += 10)
    CHECK(one[2].target[i] == doctest::Approx(2.0 * std::exp(-std::pow((t[i] - c) / 0.2, 2))));
}

TEST_CASE("coupling loss formula on a stub surrogate") {
  // v1 -> v2 -> v3 and v4 -> v2: vertex 2 joins edges 0 (in), 2 (in) and 1 (out).
  GraphSpec spec;
  for (std::int64_t v = 1; v <= 4; ++v) spec.vertices.push_back({v, ""});
  spec.edges = {{1, 2, 1.0, 1.0}, {2, 3, 1.0, 1.0}, {4, 2, 1.0, 1.0}};
  const MetricGraph g = build_graph(spec);
  REQUIRE(g.interior_vertices().size() == 1);
  const SurrogateSet set(std::make_shared<const AffineStub>());
  std::vector<SensorInput> in(3);
  const double a[3] = {0.2, 0.5, 0.9};
  const double jo[3] = {0.0, 0.7, 0.0};
  const double jt[3] = {0.3, 0.0, 0.1};
  for (int e = 0; e < 3; ++e) {
    in[e].velocity = a[e];
    in[e].origin = Eigen::VectorXd::Constant(101, jo[e]);
    in[e].target = Eigen::VectorXd::Constant(101, jt[e]);
    in[e].init = Eigen::VectorXd::Zero(101);
  }
  const Eigen::VectorXd times = Eigen::VectorXd::LinSpaced(5, 0.0, 1.0);
  const CouplingEvaluation ev = evaluate_coupling(g, set, in, times);
  // Time-independent differences; pairs (0.2, 0.5), (0.2, 0.9), (0.5, 0.9).
  const double continuity = 0.09 + 0.49 + 0.16;
  const double kirchhoff = std::pow(0.3 + 0.1 - 0.7, 2);
  CHECK(ev.loss == doctest::Approx(5.0 * (continuity + kirchhoff) / 3.0).epsilon(1e-14));
  REQUIRE(ev.residuals.size() == 1);
  CHECK(ev.residuals[0].continuity == doctest::Approx(continuity / 3.0));
  CHECK(ev.residuals[0].kirchhoff == doctest::Approx(kirchhoff / 3.0));

  for (auto& s : in) s.velocity = 0.4;
  in[1].origin.setConstant(0.4);
  const CouplingEvaluation zero = evaluate_coupling(g, set, in, times);
  CHECK(zero.residuals[0].continuity == 0.0);
  CHECK(zero.loss < 1e-30);
}

TEST_CASE("monolithic traces satisfy the coupling conditions") {
  for (const GraphSpec& spec : {make_y_graph(), make_chain(4)}) {
    const Instance in = make_instance(spec, 11);
    const auto sensors = extract_sensors(in.traj, in.graph, *in.disc, in.data, SensorGrids{});
    const CouplingEvaluation ev = evaluate_coupling(in.graph, oracle_set(), sensors,
                                                    Eigen::VectorXd::LinSpaced(64, 0.0, 1.0));
    CHECK(ev.loss <= 1e-5);
  }
}

TEST_CASE("zero traces with nonzero inflow violate the coupling") {
  const Instance in = make_instance(make_chain(3), 4);
  const CouplingProblem p(in.graph, in.data, oracle_set());
  CHECK(p.loss(Eigen::VectorXd::Zero(p.num_parameters())) > 1e-3);
}

TEST_CASE("zero data is a fixed point of the solver") {
  const MetricGraph g = build_graph(make_y_graph());
  const BoundaryData data = BoundaryData::zeros(g);
  const CouplingResult r = solve_graph(g, data, oracle_set());
  CHECK(r.optimization.converged);
  CHECK(r.optimization.iterations == 1);
  CHECK(r.optimization.best_loss == 0.0);
  CHECK(r.parameters.beta.cwiseAbs().maxCoeff() == 0.0);
  const auto report = report_json(r, g);
  CHECK(report["final_loss"] == 0.0);
  CHECK(report["vertex_residuals"].size() == 2);
}

TEST_CASE("coupling gradient matches finite differences") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 0.1);
  SUBCASE("oracle") {
    const Instance in = make_instance(make_y_graph(), 8);
    const CouplingProblem p(in.graph, in.data, oracle_set());
    const Eigen::VectorXd beta = Eigen::VectorXd::NullaryExpr(p.num_parameters(), [&] { return n(rng); });
    check_gradient(p, beta, 1e-4);
  }
  SUBCASE("random DeepONet") {
    const Instance in = make_instance(make_chain(3), 8);
    DeepOnetArch arch;
    arch.width = 16;
    arch.p = 16;
    arch.depth = 3;
    auto net = [&](EdgeType t, std::uint64_t seed) {
      return std::make_shared<const DeepOnetSurrogate>(std::make_shared<const DeepOnetModel>(
          random_deeponet(arch, t, 0.05, SensorGrids{}, seed, 1.0, 0.1)));
    };
    const SurrogateSet set(net(EdgeType::inflow, 1), net(EdgeType::inner, 2), net(EdgeType::outflow, 3));
    CouplingConfig cfg;
    cfg.n_times = 16;
    const CouplingProblem p(in.graph, in.data, set, cfg);
    const Eigen::VectorXd beta = Eigen::VectorXd::NullaryExpr(p.num_parameters(), [&] { return n(rng); });
    check_gradient(p, beta, 1e-4);
  }
}

TEST_CASE("oracle coupling converges with a richer trace basis") {
  const Instance in = make_instance(make_y_graph(), 2);
  const FvmSolution ref(in.traj, in.graph, *in.disc);
  const double norm = space_time_l2(ref, nullptr);
  double previous = 1.0;
  for (Index nb : {10, 20, 40}) {
    CouplingConfig cfg;
    cfg.n_beta = nb;
    cfg.length_scale = 2.0 / static_cast<double>(nb);
    // Converge the optimizer far enough that the trace projection error dominates.
    cfg.adam.iterations = 4000;
    cfg.adam.final_learning_rate = 1e-4;
    const CouplingResult r = solve_graph(in.graph, in.data, oracle_set(), cfg);
    const double err = space_time_l2(*r.solution, &ref) / norm;
    CAPTURE(nb);
    MESSAGE("n_beta " << nb << ": relative error " << err);
    CHECK(err < 5e-2);
    CHECK(err < previous);
    previous = err;
  }
}

TEST_CASE("Adam") {
  SUBCASE("first step moves every coordinate by the learning rate") {
    AdamConfig cfg;
    Adam adam(3, cfg);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
    adam.step(x, (Eigen::VectorXd(3) << 100.0, -1e-3, 2.0).finished());
    CHECK(x[0] == doctest::Approx(-1e-2));
    CHECK(x[1] == doctest::Approx(1e-2).epsilon(1e-4));
    CHECK(x[2] == doctest::Approx(-1e-2));
  }
  SUBCASE("quadratic") {
    AdamConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.iterations = 5000;
    const Eigen::VectorXd target = (Eigen::VectorXd(2) << 1.0, -2.0).finished();
    const auto r = minimize_adam(
        [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
          g = 2.0 * (x - target);
          return (x - target).squaredNorm();
        },
        Eigen::VectorXd::Zero(2), cfg);
    CHECK((r.best - target).norm() < 1e-3);
    CHECK(r.best_loss <= *std::min_element(r.history.begin(), r.history.end()));
  }
  SUBCASE("decay schedule") {
    AdamConfig cfg;
    cfg.iterations = 11;
    cfg.final_learning_rate = 1e-4;
    CHECK(cfg.rate(0) == doctest::Approx(1e-2));
    CHECK(cfg.rate(5) == doctest::Approx(1e-3));
    CHECK(cfg.rate(10) == doctest::Approx(1e-4));
  }
  SUBCASE("non-finite loss") {
    CHECK_THROWS(minimize_adam([](const Eigen::VectorXd&, Eigen::VectorXd&) { return std::nan(""); },
                               Eigen::VectorXd::Zero(1), AdamConfig{}));
  }
}
