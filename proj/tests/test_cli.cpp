#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "mgdd/commands.hpp"
#include "mgdd/deeponet.hpp"
#include "mgdd/io.hpp"

using namespace mgdd;
namespace fs = std::filesystem;

namespace {

RunConfig config_in(const std::string& name, const std::string& text = "") {
  RunConfig c = parse_config(text);
  c.output = (fs::temp_directory_path() / "mgdd_test_cli" / name).string();
  fs::remove_all(c.output);
  return c;
}

}  // namespace

TEST_CASE("simulate with zero data writes zero outputs") {
  const RunConfig c = config_in("zero", "[run]\ngraph = chain:3\n[data]\nsource = zero\n[fvm]\nstride = 50\n");
  std::ostringstream log;
  CHECK(cmd_simulate(c, {}, log) == kExitOk);
  const fs::path out(c.output);
  const Snapshots s = load_snapshots(out / "trajectory.snap");
  CHECK(s.values.rows() == 3);
  CHECK(s.values.cwiseAbs().maxCoeff() == 0.0);
  const auto diag = read_json(out / "diagnostics.json");
  CHECK(diag["mass_checked"] == true);
  CHECK(diag["mass_ok"] == true);
  CHECK(diag["bounds_ok"] == true);
  CHECK(parse_config(read_text(out / "config.ini")).fvm.epsilon == c.fvm.epsilon);
  CHECK(read_text(out / "config.ini") == dump_config(c));
}

TEST_CASE("identical config and seed give identical files") {
  const std::string text = "[run]\nseed = 5\n[coupling]\niterations = 40\n[inverse]\nruns = 1\nnoise_levels = 0.05\n";
  for (const auto& [name, cmd] : std::vector<std::pair<std::string, int (*)(const RunConfig&, const fs::path&, std::ostream&)>>{
           {"couple", cmd_couple}, {"errors", cmd_errors}}) {
    CAPTURE(name);
    const RunConfig a = config_in(name + "_a", text);
    const RunConfig b = config_in(name + "_b", text);
    std::ostringstream log;
    REQUIRE(cmd(a, {}, log) == kExitOk);
    REQUIRE(cmd(b, {}, log) == kExitOk);
    for (const auto& entry : fs::directory_iterator(a.output)) {
      const fs::path file = entry.path().filename();
      if (file == "config.ini") continue;
      CAPTURE(file);
      CHECK(read_text(entry.path()) == read_text(fs::path(b.output) / file));
    }
  }
}

TEST_CASE("couple on zero data reports a zero loss") {
  const RunConfig c = config_in("couple_zero", "[run]\ngraph = chain:3\n[data]\nsource = zero\n");
  std::ostringstream log;
  CHECK(cmd_couple(c, {}, log) == kExitOk);
  const auto report = read_json(fs::path(c.output) / "report.json");
  CHECK(report["best_loss"].get<double>() == 0.0);
  CHECK(report["parameters"].get<int>() == 2 * 2 * 10);
}

TEST_CASE("generate writes the training edge mix") {
  const RunConfig c = config_in("generate", "[generate]\ninstances = 2\n");
  std::ostringstream log;
  CHECK(cmd_generate(c, {}, log) == kExitOk);
  const Dataset ds = load_dataset(fs::path(c.output) / "dataset");
  REQUIRE(ds.instances.size() == 2);
  CHECK(ds.records_per_instance() == 14);
  Index counts[3] = {0, 0, 0};
  for (Index r = 0; r < ds.instances[0].rows(); ++r)
    for (EdgeType t : {EdgeType::inflow, EdgeType::inner, EdgeType::outflow})
      if (ds.instances[0](r, 2) == edge_type_code(t)) ++counts[static_cast<int>(t)];
  CHECK(counts[0] == 4);
  CHECK(counts[1] == 6);
  CHECK(counts[2] == 4);
  CHECK(log.str().find("4 inflow, 6 inner, 4 outflow") != std::string::npos);
}

TEST_CASE("invert writes a table row") {
  const RunConfig c = config_in("invert", "[run]\ngraph = chain:2\n[coupling]\niterations = 20\n");
  std::ostringstream log;
  CHECK(cmd_invert(c, {}, log) == kExitOk);
  const std::string csv = read_text(fs::path(c.output) / "errors.csv");
  CHECK(csv.rfind(error_csv_header() + "\nchain:2,0.01,", 0) == 0);
  const auto report = read_json(fs::path(c.output) / "report.json");
  CHECK(report["velocity"].size() == 2);
  CHECK(report["initial"].size() == 2);
}

TEST_CASE("surrogate archives are loaded per edge type") {
  RunConfig c = config_in("archive");
  c.surrogate = "archive:" + (fs::temp_directory_path() / "mgdd_test_cli" / "models").string();
  const fs::path dir = c.surrogate.substr(8);
  fs::remove_all(dir);
  CHECK_THROWS_AS(make_surrogates(c), FormatError);
  DeepOnetArch arch;
  arch.width = 8;
  arch.depth = 2;
  arch.p = 8;
  for (const char* t : {"inflow", "inner", "outflow"})
    save_model(random_deeponet(arch, edge_type_from_string(t), 0.05, SensorGrids{}, 1), dir / t);
  const SurrogateSet set = make_surrogates(c);
  CHECK(set[EdgeType::inner].name() == "deeponet");
}
