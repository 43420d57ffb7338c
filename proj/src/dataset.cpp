#include "mgdd/dataset.hpp"

#include <cstdio>
#include <numeric>

namespace mgdd {

using nlohmann::json;

Index Dataset::records_per_instance() const {
  return std::accumulate(graph_edges.begin(), graph_edges.end(), Index{0});
}

float edge_type_code(EdgeType type) {
  switch (type) {
    case EdgeType::inflow: return 0.0f;
    case EdgeType::inner: return 1.0f;
    case EdgeType::outflow: return 2.0f;
  }
  return -1.0f;
}

F32Rows generate_instance(const std::vector<MetricGraph>& graphs, std::uint64_t seed,
                          const DatasetConfig& config) {
  Index rows = 0;
  for (const auto& g : graphs) rows += g.num_edges();
  F32Rows out(rows, kRecordMeta + config.grids.n_sensor());
  Index row = 0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const std::uint64_t s = derive_seed(seed, {static_cast<std::uint64_t>(gi)});
    TrainingInstance inst = make_training_instance(graphs[gi], s, config.instance);
    const MetricGraph g = graphs[gi].with_velocities(inst.velocities);
    inst.data.initial = smooth_initial(g, inst.data, config.fvm, config.t_smooth);
    const Discretization disc(g, config.fvm);
    const Trajectory traj = simulate(g, disc, inst.data);
    const auto sensors = extract_sensors(traj, g, disc, inst.data, config.grids);
    for (Index e = 0; e < g.num_edges(); ++e, ++row) {
      const auto& si = sensors[static_cast<std::size_t>(e)];
      out(row, 0) = static_cast<float>(gi);
      out(row, 1) = static_cast<float>(e);
      out(row, 2) = edge_type_code(si.type);
      out.row(row).tail(config.grids.n_sensor()) = si.flatten().cast<float>().transpose();
    }
  }
  return out;
}

Dataset generate_dataset(const std::vector<MetricGraph>& graphs,
                         const std::vector<std::string>& names,
                         const std::vector<std::uint64_t>& seeds, const DatasetConfig& config) {
  if (graphs.size() != names.size()) throw std::invalid_argument("one name per graph expected");
  Dataset ds;
  ds.graph_names = names;
  for (const auto& g : graphs) ds.graph_edges.push_back(g.num_edges());
  ds.seeds = seeds;
  ds.config = config;
  ds.instances.resize(seeds.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(seeds.size()); ++i)
    ds.instances[static_cast<std::size_t>(i)] =
        generate_instance(graphs, seeds[static_cast<std::size_t>(i)], config);
  return ds;
}

json config_to_json(const DatasetConfig& c) {
  return {
      {"instance",
       {{"profile", std::string(to_string(c.instance.profile))},
        {"rate_amplitude", c.instance.rate_amplitude},
        {"velocity_min", c.instance.velocity_min},
        {"velocity_max", c.instance.velocity_max},
        {"sample_velocities", c.instance.sample_velocities},
        {"space_samples", c.instance.space_samples},
        {"time_samples", c.instance.time_samples},
        {"final_time", c.instance.final_time}}},
      {"fvm",
       {{"cells_per_edge", c.fvm.cells_per_edge},
        {"time_steps", c.fvm.time_steps},
        {"final_time", c.fvm.final_time},
        {"epsilon", c.fvm.epsilon},
        {"alpha", c.fvm.alpha},
        {"nonlinearity", "saturation"}}},
      {"grids",
       {{"n_origin", c.grids.n_origin},
        {"n_target", c.grids.n_target},
        {"n_init", c.grids.n_init},
        {"final_time", c.grids.final_time}}},
      {"t_smooth", c.t_smooth},
  };
}

DatasetConfig config_from_json(const json& doc) {
  DatasetConfig c;
  const auto& i = doc.at("instance");
  c.instance.profile = gp_profile_from_string(i.at("profile").get<std::string>());
  c.instance.rate_amplitude = i.at("rate_amplitude");
  c.instance.velocity_min = i.at("velocity_min");
  c.instance.velocity_max = i.at("velocity_max");
  c.instance.sample_velocities = i.at("sample_velocities");
  c.instance.space_samples = i.at("space_samples");
  c.instance.time_samples = i.at("time_samples");
  c.instance.final_time = i.at("final_time");
  const auto& f = doc.at("fvm");
  c.fvm.cells_per_edge = f.at("cells_per_edge");
  c.fvm.time_steps = f.at("time_steps");
  c.fvm.final_time = f.at("final_time");
  c.fvm.epsilon = f.at("epsilon");
  c.fvm.alpha = f.at("alpha");
  const auto& g = doc.at("grids");
  c.grids.n_origin = g.at("n_origin");
  c.grids.n_target = g.at("n_target");
  c.grids.n_init = g.at("n_init");
  c.grids.final_time = g.at("final_time");
  c.t_smooth = doc.at("t_smooth");
  return c;
}

namespace {

std::string instance_file(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.f32", i);
  return std::string("instances/") + buf;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "instances");
  json files = json::array();
  for (std::size_t i = 0; i < ds.instances.size(); ++i) {
    const auto& rows = ds.instances[i];
    if (rows.rows() != ds.records_per_instance() || rows.cols() != ds.record_width())
      throw FormatError("instance " + std::to_string(i) + " has the wrong shape");
    const std::string name = instance_file(i);
    const std::uint32_t crc = write_f32(dir / name, rows);
    files.push_back({{"file", name}, {"seed", ds.seeds[i]}, {"crc32", crc}});
  }
  std::vector<std::string> columns{"graph", "edge", "edge_type"};
  const auto& gr = ds.config.grids;
  for (Index k = 0; k < gr.n_origin; ++k) columns.push_back("u_origin[" + std::to_string(k) + "]");
  for (Index k = 0; k < gr.n_target; ++k) columns.push_back("u_target[" + std::to_string(k) + "]");
  for (Index k = 0; k < gr.n_init; ++k) columns.push_back("u_init[" + std::to_string(k) + "]");
  columns.push_back("velocity");

  json graphs = json::array();
  for (std::size_t g = 0; g < ds.graph_names.size(); ++g)
    graphs.push_back({{"name", ds.graph_names[g]}, {"edges", ds.graph_edges[g]}});
  const json manifest{
      {"format", "mgdd-dataset"},
      {"version", kDatasetVersion},
      {"dtype", "float32-le"},
      {"layout", "row-major, one row per edge record"},
      {"edge_type_codes", {{"inflow", 0}, {"inner", 1}, {"outflow", 2}}},
      {"graphs", graphs},
      {"records_per_instance", ds.records_per_instance()},
      {"record_width", ds.record_width()},
      {"columns", columns},
      {"config", config_to_json(ds.config)},
      {"instances", files},
  };
  write_text(dir / "manifest.json", dump_json(manifest));
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const json m = read_json(dir / "manifest.json");
  try {
    if (m.at("format") != "mgdd-dataset") throw FormatError("not a dataset archive");
    if (m.at("version") != kDatasetVersion)
      throw FormatError("unsupported dataset version " + m.at("version").dump());
    Dataset ds;
    ds.config = config_from_json(m.at("config"));
    for (const auto& g : m.at("graphs")) {
      ds.graph_names.push_back(g.at("name"));
      ds.graph_edges.push_back(g.at("edges"));
    }
    if (m.at("records_per_instance") != ds.records_per_instance() ||
        m.at("record_width") != ds.record_width())
      throw FormatError("dataset manifest shape fields are inconsistent");
    for (const auto& f : m.at("instances")) {
      ds.seeds.push_back(f.at("seed"));
      ds.instances.push_back(read_f32(dir / f.at("file").get<std::string>(),
                                      ds.records_per_instance(), ds.record_width(),
                                      f.at("crc32").get<std::uint32_t>()));
    }
    return ds;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed dataset manifest: ") + e.what());
  }
}

}  // namespace mgdd
