#include "mgdd/config.hpp"

#include <charconv>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mgdd/io.hpp"

namespace mgdd {

namespace {

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
T parse_number(const std::string& text) {
  T value{};
  const std::string s = boost::trim_copy(text);
  const auto r = std::from_chars(s.data(), s.data() + s.size(), value);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError("not a number: '" + text + "'");
  return value;
}

bool parse_bool(const std::string& text) {
  const std::string s = boost::to_lower_copy(boost::trim_copy(text));
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("not a boolean: '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  if (boost::trim_copy(text).empty()) return out;
  boost::split(out, text, boost::is_any_of(","));
  for (auto& s : out) boost::trim(s);
  return out;
}

template <typename Get>
Field real(std::string section, std::string key, Get member) {
  return {std::move(section), std::move(key),
          [member](const RunConfig& c) { return format_double(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, const std::string& v) { member(c) = parse_number<double>(v); }};
}

template <typename Get>
Field integer(std::string section, std::string key, Get member) {
  return {std::move(section), std::move(key),
          [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, const std::string& v) {
            member(c) = parse_number<std::remove_reference_t<decltype(member(c))>>(v);
          }};
}

template <typename Get>
Field text(std::string section, std::string key, Get member) {
  return {std::move(section), std::move(key),
          [member](const RunConfig& c) { return member(const_cast<RunConfig&>(c)); },
          [member](RunConfig& c, const std::string& v) { member(c) = boost::trim_copy(v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      integer("run", "seed", [](RunConfig& c) -> auto& { return c.seed; }),
      text("run", "graph", [](RunConfig& c) -> auto& { return c.graph; }),
      text("run", "output", [](RunConfig& c) -> auto& { return c.output; }),

      integer("fvm", "cells_per_edge", [](RunConfig& c) -> auto& { return c.fvm.cells_per_edge; }),
      integer("fvm", "time_steps", [](RunConfig& c) -> auto& { return c.fvm.time_steps; }),
      real("fvm", "final_time", [](RunConfig& c) -> auto& { return c.fvm.final_time; }),
      real("fvm", "epsilon", [](RunConfig& c) -> auto& { return c.fvm.epsilon; }),
      real("fvm", "alpha", [](RunConfig& c) -> auto& { return c.fvm.alpha; }),
      integer("fvm", "stride", [](RunConfig& c) -> auto& { return c.stride; }),

      text("data", "source", [](RunConfig& c) -> auto& { return c.data; }),
      {"data", "profile", [](const RunConfig& c) { return std::string(to_string(c.instance.profile)); },
       [](RunConfig& c, const std::string& v) { c.instance.profile = gp_profile_from_string(boost::trim_copy(v)); }},
      real("data", "rate_amplitude", [](RunConfig& c) -> auto& { return c.instance.rate_amplitude; }),
      real("data", "velocity_min", [](RunConfig& c) -> auto& { return c.instance.velocity_min; }),
      real("data", "velocity_max", [](RunConfig& c) -> auto& { return c.instance.velocity_max; }),
      {"data", "sample_velocities", [](const RunConfig& c) { return std::string(c.instance.sample_velocities ? "true" : "false"); },
       [](RunConfig& c, const std::string& v) { c.instance.sample_velocities = parse_bool(v); }},
      integer("data", "space_samples", [](RunConfig& c) -> auto& { return c.instance.space_samples; }),
      integer("data", "time_samples", [](RunConfig& c) -> auto& { return c.instance.time_samples; }),
      real("data", "t_smooth", [](RunConfig& c) -> auto& { return c.t_smooth; }),

      text("surrogate", "kind", [](RunConfig& c) -> auto& { return c.surrogate; }),
      integer("surrogate", "n_origin", [](RunConfig& c) -> auto& { return c.grids.n_origin; }),
      integer("surrogate", "n_target", [](RunConfig& c) -> auto& { return c.grids.n_target; }),
      integer("surrogate", "n_init", [](RunConfig& c) -> auto& { return c.grids.n_init; }),

      integer("coupling", "n_beta", [](RunConfig& c) -> auto& { return c.coupling.n_beta; }),
      real("coupling", "length_scale", [](RunConfig& c) -> auto& { return c.coupling.length_scale; }),
      integer("coupling", "n_times", [](RunConfig& c) -> auto& { return c.coupling.n_times; }),
      real("coupling", "learning_rate", [](RunConfig& c) -> auto& { return c.coupling.adam.learning_rate; }),
      real("coupling", "final_learning_rate", [](RunConfig& c) -> auto& { return c.coupling.adam.final_learning_rate; }),
      real("coupling", "beta1", [](RunConfig& c) -> auto& { return c.coupling.adam.beta1; }),
      real("coupling", "beta2", [](RunConfig& c) -> auto& { return c.coupling.adam.beta2; }),
      integer("coupling", "iterations", [](RunConfig& c) -> auto& { return c.coupling.adam.iterations; }),
      real("coupling", "grad_tol", [](RunConfig& c) -> auto& { return c.coupling.adam.grad_tol; }),
      real("coupling", "clip_norm", [](RunConfig& c) -> auto& { return c.coupling.adam.clip_norm; }),

      real("inverse", "noise", [](RunConfig& c) -> auto& { return c.noise; }),
      integer("inverse", "n_meas", [](RunConfig& c) -> auto& { return c.n_meas; }),
      integer("inverse", "init_n_beta", [](RunConfig& c) -> auto& { return c.inverse.init_n_beta; }),
      real("inverse", "init_length_scale", [](RunConfig& c) -> auto& { return c.inverse.init_length_scale; }),
      real("inverse", "measurement_weight", [](RunConfig& c) -> auto& { return c.inverse.measurement_weight; }),
      real("inverse", "initial_velocity", [](RunConfig& c) -> auto& { return c.inverse.initial_velocity; }),
      {"inverse", "noise_levels",
       [](const RunConfig& c) {
         std::vector<std::string> parts;
         for (double v : c.noise_levels) parts.push_back(format_double(v));
         return boost::join(parts, ", ");
       },
       [](RunConfig& c, const std::string& v) {
         c.noise_levels.clear();
         for (const auto& s : split_list(v)) c.noise_levels.push_back(parse_number<double>(s));
       }},
      integer("inverse", "runs", [](RunConfig& c) -> auto& { return c.runs; }),

      integer("generate", "instances", [](RunConfig& c) -> auto& { return c.instances; }),
      {"generate", "graphs", [](const RunConfig& c) { return boost::join(c.train_graphs, ", "); },
       [](RunConfig& c, const std::string& v) { c.train_graphs = split_list(v); }},

      {"plot", "times",
       [](const RunConfig& c) {
         std::vector<std::string> parts;
         for (double v : c.plot_times) parts.push_back(format_double(v));
         return boost::join(parts, ", ");
       },
       [](RunConfig& c, const std::string& v) {
         c.plot_times.clear();
         for (const auto& s : split_list(v)) c.plot_times.push_back(parse_number<double>(s));
       }},
      integer("plot", "points", [](RunConfig& c) -> auto& { return c.plot_points; }),
  };
  return table;
}

// The final time is stored once and copied to every component that needs it.
void propagate(RunConfig& c) {
  c.instance.final_time = c.fvm.final_time;
  c.grids.final_time = c.fvm.final_time;
  c.coupling.fvm = c.fvm;
  c.inverse.coupling = c.coupling;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  RunConfig c;
  std::set<std::string> known;
  for (const Field& f : fields()) known.insert(f.section + "." + f.key);
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("key '" + section + "' outside of a section");
    for (const auto& [key, value] : body) {
      if (!known.count(section + "." + key)) throw ConfigError("unknown config key [" + section + "] " + key);
    }
  }
  for (const Field& f : fields()) {
    const auto value = tree.get_optional<std::string>(pt::ptree::path_type(f.section + "/" + f.key, '/'));
    if (!value) continue;
    try {
      f.set(c, *value);
    } catch (const std::exception& e) {
      throw ConfigError("[" + f.section + "] " + f.key + ": " + e.what());
    }
  }
  propagate(c);
  validate_config(c);
  return c;
}

RunConfig read_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  try {
    return parse_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string dump_config(const RunConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const Field& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(config) << '\n';
  }
  return out.str();
}

void validate_config(const RunConfig& c) {
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(c.fvm.cells_per_edge >= 2, "[fvm] cells_per_edge must be at least 2");
  require(c.fvm.time_steps >= 1, "[fvm] time_steps must be positive");
  require(c.fvm.final_time > 0.0, "[fvm] final_time must be positive");
  require(c.fvm.epsilon > 0.0, "[fvm] epsilon must be positive");
  require(c.fvm.alpha > 0.0, "[fvm] alpha must be positive");
  require(c.stride >= 1, "[fvm] stride must be positive");
  require(c.data == "gp" || c.data == "zero", "[data] source must be gp or zero");
  require(c.t_smooth >= 0.0, "[data] t_smooth must be non-negative");
  require(c.instance.velocity_min > 0.0 && c.instance.velocity_min <= c.instance.velocity_max,
          "[data] velocity range must be positive and ordered");
  require(c.surrogate == "oracle" || c.surrogate.rfind("archive:", 0) == 0,
          "[surrogate] kind must be oracle or archive:DIR");
  require(c.grids.n_origin >= 2 && c.grids.n_target >= 2 && c.grids.n_init >= 2,
          "[surrogate] sensor grids need at least two points");
  require(c.coupling.n_beta >= 1, "[coupling] n_beta must be positive");
  require(c.coupling.length_scale > 0.0, "[coupling] length_scale must be positive");
  require(c.coupling.n_times >= 2, "[coupling] n_times must be at least 2");
  require(c.coupling.adam.learning_rate > 0.0, "[coupling] learning_rate must be positive");
  require(c.coupling.adam.iterations >= 1, "[coupling] iterations must be positive");
  require(c.noise >= 0.0, "[inverse] noise must be non-negative");
  require(c.n_meas >= 2, "[inverse] n_meas must be at least 2");
  require(c.inverse.init_n_beta >= 1, "[inverse] init_n_beta must be positive");
  require(c.inverse.initial_velocity > 0.0, "[inverse] initial_velocity must be positive");
  require(c.inverse.measurement_weight >= 0.0, "[inverse] measurement_weight must be non-negative");
  require(c.runs >= 1, "[inverse] runs must be positive");
  for (double v : c.noise_levels) require(v >= 0.0, "[inverse] noise_levels must be non-negative");
  require(c.instances >= 1, "[generate] instances must be positive");
  require(!c.train_graphs.empty(), "[generate] graphs must not be empty");
  require(c.plot_points >= 2, "[plot] points must be at least 2");
  for (double t : c.plot_times)
    require(t >= 0.0 && t <= c.fvm.final_time, "[plot] times must lie in [0, final_time]");
}

GraphSpec resolve_graph(const std::string& name, const std::filesystem::path& base) {
  if (name == "y") return make_y_graph();
  if (name == "diamond") return make_diamond();
  const auto suffix = [&](std::string_view prefix) -> std::optional<Index> {
    if (name.rfind(prefix, 0) != 0) return std::nullopt;
    const Index n = parse_number<Index>(name.substr(prefix.size()));
    if (n < 1) throw ConfigError("graph '" + name + "' needs a positive size");
    return n;
  };
  if (const auto n = suffix("chain:")) return make_chain(*n);
  if (const auto n = suffix("network:")) return make_network(*n, 5, 5, 1);
  std::filesystem::path p(name);
  if (p.is_relative() && !base.empty()) p = base / p;
  if (!std::filesystem::exists(p)) throw ConfigError("graph file not found: " + p.string());
  return read_graph_spec(p);
}

}  // namespace mgdd
