#include "mgdd/commands.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

#include "mgdd/deeponet.hpp"
#include "mgdd/io.hpp"
#include "mgdd/oracle.hpp"

namespace mgdd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path prepare_output(const RunConfig& config) {
  const fs::path out(config.output);
  fs::create_directories(out);
  write_text(out / "config.ini", dump_config(config));
  return out;
}

Trajectory strided(const Trajectory& full, Index stride) {
  Trajectory out;
  for (std::size_t i = 0; i < full.size(); i += static_cast<std::size_t>(stride)) out.push_back(full[i]);
  if ((full.size() - 1) % static_cast<std::size_t>(stride) != 0) out.push_back(full.back());
  return out;
}

bool rates_vanish(const BoundaryData& data) {
  const auto zero = [](const std::vector<UniformSeries>& series) {
    return std::all_of(series.begin(), series.end(),
                       [](const UniformSeries& s) { return s.empty() || s.values.cwiseAbs().maxCoeff() == 0.0; });
  };
  return zero(data.inflow) && zero(data.outflow);
}

Eigen::VectorXd plot_times(const RunConfig& c) {
  return Eigen::Map<const Eigen::VectorXd>(c.plot_times.data(), static_cast<Index>(c.plot_times.size()));
}

void write_history(const OptimizationResult& o, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "iteration,loss\n";
  for (std::size_t i = 0; i < o.history.size(); ++i) out << i << ',' << format_double(o.history[i]) << '\n';
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::shared_ptr<const FvmSolution> reference_solution(const ProblemSetup& p) {
  return std::make_shared<const FvmSolution>(simulate(p.graph, p.disc, p.data), p.graph, p.disc);
}

struct InverseRun {
  InverseResult result;
  ErrorMetrics errors;
};

InverseRun run_inverse(const RunConfig& config, const ProblemSetup& p,
                       const std::shared_ptr<const FvmSolution>& reference, const SurrogateSet& set,
                       double noise, std::uint64_t seed) {
  const MeasurementSet m = synthesize_measurements(*reference, config.n_meas, noise, seed);
  BoundaryData rates = p.data;
  rates.initial.clear();
  InverseRun run;
  run.result = identify(p.base, rates, m, set, config.inverse);
  run.errors = error_report(run.result.state, GraphState{reference, p.data.initial, p.graph.velocities()});
  return run;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

ProblemSetup prepare_problem(const RunConfig& config, std::uint64_t seed, const fs::path& base_dir) {
  MetricGraph base = build_graph(resolve_graph(config.graph, base_dir));
  MetricGraph graph = base;
  BoundaryData data;
  if (config.data == "zero") {
    data = BoundaryData::zeros(graph, config.fvm.final_time);
  } else {
    TrainingInstance inst = make_training_instance(base, seed, config.instance);
    graph = base.with_velocities(inst.velocities);
    data = std::move(inst.data);
    if (config.t_smooth > 0.0) data.initial = smooth_initial(graph, data, config.fvm, config.t_smooth);
  }
  Discretization disc(graph, config.fvm);
  return {std::move(base), std::move(graph), std::move(data), std::move(disc)};
}

SurrogateSet make_surrogates(const RunConfig& config, const fs::path& base_dir) {
  if (config.surrogate == "oracle") return SurrogateSet(std::make_shared<const FvmOracle>(config.fvm, config.grids));
  fs::path dir(config.surrogate.substr(std::string_view("archive:").size()));
  if (dir.is_relative() && !base_dir.empty()) dir = base_dir / dir;
  const auto load = [&](const char* type) {
    return std::make_shared<const DeepOnetSurrogate>(std::make_shared<const DeepOnetModel>(load_model(dir / type)));
  };
  return SurrogateSet(load("inflow"), load("inner"), load("outflow"));
}

int cmd_simulate(const RunConfig& config, const fs::path& base_dir, std::ostream& log) {
  const ProblemSetup p = prepare_problem(config, config.seed, base_dir);
  const fs::path out = prepare_output(config);
  FvmSolver solver(p.graph, p.disc);
  const Trajectory full = solver.simulate(p.data);

  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < full.size(); ++i) {
    lo = i ? std::min(lo, full[i].values.minCoeff()) : full[i].values.minCoeff();
    hi = i ? std::max(hi, full[i].values.maxCoeff()) : full[i].values.maxCoeff();
  }
  const double m0 = total_mass(full.front(), p.disc);
  const double m1 = total_mass(full.back(), p.disc);
  const bool conservative = rates_vanish(p.data);
  const bool theorem = p.disc.bound_preserving_step() && config.fvm.alpha == 1.0;
  const bool mass_ok = !conservative || std::abs(m1 - m0) <= 1e-12 * std::max(1.0, std::abs(m0));
  const bool bounds_ok = !theorem || (lo >= -1e-10 && hi <= 1.0 + 1e-10);

  const Trajectory kept = strided(full, config.stride);
  save_snapshots(make_snapshots(kept, p.graph, p.disc), out / "trajectory.snap");
  write_trajectory_csv(kept, p.graph, p.disc, out / "trajectory.csv");
  const FvmSolution solution(full, p.graph, p.disc);
  write_profile_csv(solution, nullptr, plot_times(config), config.plot_points, out / "profiles.csv");

  const json diag = {{"edges", p.graph.num_edges()},
                     {"dofs", p.disc.num_dofs()},
                     {"steps", p.disc.time_steps()},
                     {"tau", p.disc.tau()},
                     {"min_h", p.disc.min_h()},
                     {"velocities", vector_json(p.graph.velocities())},
                     {"mass_initial", m0},
                     {"mass_final", m1},
                     {"mass_drift", m1 - m0},
                     {"mass_checked", conservative},
                     {"mass_ok", mass_ok},
                     {"min_density", lo},
                     {"max_density", hi},
                     {"bounds_checked", theorem},
                     {"bounds_ok", bounds_ok},
                     {"linear_residual", solver.last_residual()}};
  write_text(out / "diagnostics.json", dump_json(diag));
  log << "simulate: " << p.graph.num_edges() << " edges, mass drift " << (m1 - m0) << ", range [" << lo
      << ", " << hi << "]\n";
  for (const std::string& w : p.graph.warnings()) log << "warning: " << w << '\n';
  if (!mass_ok) log << "error: mass is not conserved\n";
  if (!bounds_ok) log << "error: density left [0, 1]\n";
  return mass_ok && bounds_ok ? kExitOk : kExitInvariant;
}

int cmd_generate(const RunConfig& config, const fs::path& base_dir, std::ostream& log) {
  const fs::path out = prepare_output(config);
  std::vector<MetricGraph> graphs;
  for (const std::string& name : config.train_graphs) graphs.push_back(build_graph(resolve_graph(name, base_dir)));
  std::vector<std::uint64_t> seeds;
  for (Index i = 0; i < config.instances; ++i)
    seeds.push_back(derive_seed(config.seed, {static_cast<std::uint64_t>(i)}));
  DatasetConfig dc;
  dc.instance = config.instance;
  dc.fvm = config.fvm;
  dc.grids = config.grids;
  dc.t_smooth = config.t_smooth;
  const Dataset ds = generate_dataset(graphs, config.train_graphs, seeds, dc);
  save_dataset(ds, out / "dataset");

  Index counts[3] = {0, 0, 0};
  for (const MetricGraph& g : graphs)
    for (EdgeType t : classify_edges(g)) ++counts[static_cast<int>(t)];
  log << "generate: " << config.instances << " instances, per instance " << counts[0] << " inflow, " << counts[1]
      << " inner, " << counts[2] << " outflow edge records\n";
  return kExitOk;
}

int cmd_couple(const RunConfig& config, const fs::path& base_dir, std::ostream& log) {
  const ProblemSetup p = prepare_problem(config, config.seed, base_dir);
  const SurrogateSet set = make_surrogates(config, base_dir);
  const fs::path out = prepare_output(config);
  const auto reference = reference_solution(p);
  const CouplingResult r = solve_graph(p.graph, p.data, set, config.coupling);

  json report = report_json(r, p.graph);
  const double abs = space_time_l2(*r.solution, reference.get());
  const double norm = space_time_l2(*reference, nullptr);
  report["l2_abs"] = abs;
  report["l2_rel"] = norm > 0.0 ? abs / norm : 0.0;
  report["surrogate"] = config.surrogate;
  write_text(out / "report.json", dump_json(report));
  write_history(r.optimization, out / "loss.csv");
  write_profile_csv(*r.solution, reference.get(), plot_times(config), config.plot_points, out / "profiles.csv");
  log << "couple: loss " << r.optimization.best_loss << " after " << r.optimization.iterations
      << " iterations, relative L2 error " << report["l2_rel"].get<double>() << '\n';
  return kExitOk;
}

int cmd_invert(const RunConfig& config, const fs::path& base_dir, std::ostream& log) {
  const ProblemSetup p = prepare_problem(config, config.seed, base_dir);
  const SurrogateSet set = make_surrogates(config, base_dir);
  const fs::path out = prepare_output(config);
  const auto reference = reference_solution(p);
  const InverseRun run =
      run_inverse(config, p, reference, set, config.noise, derive_seed(config.seed, {1, 0}));
  const ErrorMetrics& e = run.errors;
  const OptimizationResult& o = run.result.optimization;

  json init = json::array();
  for (const UniformSeries& s : run.result.state.initial) init.push_back(vector_json(s.values));
  const json report = {{"best_loss", o.best_loss},
                       {"final_loss", o.final_loss},
                       {"iterations", o.iterations},
                       {"converged", o.converged},
                       {"noise", config.noise},
                       {"velocity", vector_json(run.result.state.velocity)},
                       {"velocity_true", vector_json(p.graph.velocities())},
                       {"initial", init},
                       {"errors",
                        {{"solution_abs", e.solution_abs},
                         {"solution_rel", e.solution_rel},
                         {"init_abs", e.init_abs},
                         {"init_rel", e.init_rel},
                         {"velocity_abs", e.velocity_abs},
                         {"velocity_rel", e.velocity_rel}}}};
  write_text(out / "report.json", dump_json(report));
  write_text(out / "errors.csv", error_csv_header() + "\n" + error_csv_row(config.graph, config.noise, e) + "\n");
  write_history(o, out / "loss.csv");
  write_profile_csv(*run.result.state.solution, reference.get(), plot_times(config), config.plot_points,
                    out / "profiles.csv");
  log << "invert: relative errors velocity " << e.velocity_rel << ", init " << e.init_rel << ", solution "
      << e.solution_rel << '\n';
  return kExitOk;
}

int cmd_errors(const RunConfig& config, const fs::path& base_dir, std::ostream& log) {
  const SurrogateSet set = make_surrogates(config, base_dir);
  const fs::path out = prepare_output(config);
  const std::size_t levels = config.noise_levels.size();
  std::vector<std::vector<ErrorMetrics>> table(levels);
  std::string rows = error_csv_header() + "\n";
  for (Index r = 0; r < config.runs; ++r) {
    const auto run_seed = derive_seed(config.seed, {static_cast<std::uint64_t>(r)});
    const ProblemSetup p = prepare_problem(config, run_seed, base_dir);
    const auto reference = reference_solution(p);
    for (std::size_t k = 0; k < levels; ++k) {
      const double noise = config.noise_levels[k];
      const InverseRun run = run_inverse(config, p, reference, set, noise, derive_seed(run_seed, {1, k}));
      table[k].push_back(run.errors);
      rows += error_csv_row(config.graph, noise, run.errors) + "\n";
    }
  }
  write_text(out / "errors.csv", rows);

  std::string summary = "noise,runs,median_err_init_rel,median_err_vel_rel,median_l2_solution_rel\n";
  for (std::size_t k = 0; k < levels; ++k) {
    std::vector<double> init, vel, sol;
    for (const ErrorMetrics& e : table[k]) {
      init.push_back(e.init_rel);
      vel.push_back(e.velocity_rel);
      sol.push_back(e.solution_rel);
    }
    summary += format_double(config.noise_levels[k]) + "," + std::to_string(config.runs) + "," +
               format_double(median(init)) + "," + format_double(median(vel)) + "," + format_double(median(sol)) + "\n";
    log << "errors: noise " << config.noise_levels[k] << ": median relative init " << median(init) << ", velocity "
        << median(vel) << ", solution " << median(sol) << '\n';
  }
  write_text(out / "errors_summary.csv", summary);
  return kExitOk;
}

}  // namespace mgdd
