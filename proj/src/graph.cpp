#include "mgdd/graph.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

namespace mgdd {

using nlohmann::json;

std::string_view to_string(EdgeType type) {
  switch (type) {
    case EdgeType::inflow: return "inflow";
    case EdgeType::inner: return "inner";
    case EdgeType::outflow: return "outflow";
  }
  return "unknown";
}

EdgeType edge_type_from_string(std::string_view name) {
  if (name == "inflow") return EdgeType::inflow;
  if (name == "inner") return EdgeType::inner;
  if (name == "outflow") return EdgeType::outflow;
  throw std::invalid_argument("unknown edge type '" + std::string(name) + "'");
}

std::string_view to_string(VertexRole role) {
  switch (role) {
    case VertexRole::none: return "none";
    case VertexRole::inflow: return "inflow";
    case VertexRole::outflow: return "outflow";
  }
  return "unknown";
}

std::vector<Index> MetricGraph::incident_edges(Index v) const {
  const Vertex& vx = vertex(v);
  std::vector<Index> out(vx.in_edges.begin(), vx.in_edges.end());
  out.insert(out.end(), vx.out_edges.begin(), vx.out_edges.end());
  return out;
}

int MetricGraph::normal(Index e, Index v) const {
  const Edge& ed = edge(e);
  if (ed.origin == v) return -1;
  if (ed.target == v) return 1;
  throw GraphError("edge " + std::to_string(e) + " is not incident to vertex " + std::to_string(v));
}

Index MetricGraph::vertex_index(std::int64_t id) const {
  for (Index v = 0; v < num_vertices(); ++v)
    if (vertex(v).id == id) return v;
  throw GraphError("unknown vertex id " + std::to_string(id));
}

MetricGraph MetricGraph::with_velocities(const Eigen::VectorXd& velocity) const {
  if (velocity.size() != num_edges()) throw GraphError("velocity vector has wrong length");
  MetricGraph copy = *this;
  for (Index e = 0; e < num_edges(); ++e) {
    if (!(velocity[e] >= 0.0)) throw GraphError("negative edge velocity");
    copy.edges_[static_cast<std::size_t>(e)].velocity = velocity[e];
    copy.spec_.edges[static_cast<std::size_t>(e)].velocity = velocity[e];
  }
  return copy;
}

Eigen::VectorXd MetricGraph::velocities() const {
  Eigen::VectorXd v(num_edges());
  for (Index e = 0; e < num_edges(); ++e) v[e] = edge(e).velocity;
  return v;
}

namespace {

Index find_root(std::vector<Index>& parent, Index i) {
  while (parent[static_cast<std::size_t>(i)] != i) {
    auto& p = parent[static_cast<std::size_t>(i)];
    p = parent[static_cast<std::size_t>(p)];
    i = p;
  }
  return i;
}

}  // namespace

MetricGraph build_graph(const GraphSpec& spec, ConnectivityPolicy policy) {
  if (spec.vertices.empty() || spec.edges.empty()) throw GraphError("empty graph");

  MetricGraph g;
  g.spec_ = spec;

  std::map<std::int64_t, Index> index_of;
  for (const auto& vs : spec.vertices) {
    if (!index_of.emplace(vs.id, static_cast<Index>(g.vertices_.size())).second)
      throw GraphError("duplicate vertex id " + std::to_string(vs.id));
    Vertex v;
    v.id = vs.id;
    g.vertices_.push_back(v);
  }

  auto lookup = [&](std::int64_t id, const char* what) {
    auto it = index_of.find(id);
    if (it == index_of.end())
      throw GraphError(std::string("dangling ") + what + " vertex id " + std::to_string(id));
    return it->second;
  };

  std::set<std::tuple<std::int64_t, std::int64_t, double, double>> seen;
  for (const auto& es : spec.edges) {
    const Index e = static_cast<Index>(g.edges_.size());
    Edge ed;
    ed.origin = lookup(es.origin, "origin");
    ed.target = lookup(es.target, "target");
    if (ed.origin == ed.target)
      throw GraphError("self-loop at vertex " + std::to_string(es.origin));
    if (!(es.length > 0.0))
      throw GraphError("edge " + std::to_string(e) + " has nonpositive length");
    if (!(es.velocity >= 0.0))
      throw GraphError("edge " + std::to_string(e) + " has negative velocity");
    if (es.velocity == 0.0)
      g.warnings_.push_back("edge " + std::to_string(e) + " has zero velocity");
    if (!seen.emplace(es.origin, es.target, es.length, es.velocity).second)
      throw GraphError("duplicate edge " + std::to_string(es.origin) + "->" +
                       std::to_string(es.target));
    ed.length = es.length;
    ed.velocity = es.velocity;
    g.edges_.push_back(ed);
    g.vertices_[static_cast<std::size_t>(ed.origin)].out_edges.push_back(e);
    g.vertices_[static_cast<std::size_t>(ed.target)].in_edges.push_back(e);
  }

  for (Index v = 0; v < g.num_vertices(); ++v) {
    Vertex& vx = g.vertices_[static_cast<std::size_t>(v)];
    vx.interior = !vx.in_edges.empty() && !vx.out_edges.empty();
    (vx.interior ? g.interior_ : g.exterior_).push_back(v);
  }

  // Boundary roles.  Without explicit designations every source is an
  // inflow vertex and every sink an outflow vertex.
  const bool any_hint =
      !spec.inflow_vertices.empty() || !spec.outflow_vertices.empty() ||
      std::any_of(spec.vertices.begin(), spec.vertices.end(),
                  [](const VertexSpec& v) { return v.role == "inflow" || v.role == "outflow"; });

  auto assign = [&](Index v, VertexRole role) {
    Vertex& vx = g.vertices_[static_cast<std::size_t>(v)];
    if (role == VertexRole::inflow && !(vx.in_edges.empty() && !vx.out_edges.empty()))
      throw GraphError("inflow vertex " + std::to_string(vx.id) + " is not a source");
    if (role == VertexRole::outflow && !(vx.out_edges.empty() && !vx.in_edges.empty()))
      throw GraphError("outflow vertex " + std::to_string(vx.id) + " is not a sink");
    if (vx.role != VertexRole::none && vx.role != role)
      throw GraphError("conflicting roles for vertex " + std::to_string(vx.id));
    vx.role = role;
  };

  if (any_hint) {
    for (auto id : spec.inflow_vertices) assign(lookup(id, "inflow"), VertexRole::inflow);
    for (auto id : spec.outflow_vertices) assign(lookup(id, "outflow"), VertexRole::outflow);
  }
  for (std::size_t i = 0; i < spec.vertices.size(); ++i) {
    const auto& role = spec.vertices[i].role;
    const Index v = static_cast<Index>(i);
    if (role.empty()) continue;
    if (role == "inflow") {
      assign(v, VertexRole::inflow);
    } else if (role == "outflow") {
      assign(v, VertexRole::outflow);
    } else if (role == "inner") {
      if (!g.vertex(v).interior)
        throw GraphError("vertex " + std::to_string(g.vertex(v).id) + " marked inner is exterior");
    } else {
      throw GraphError("unknown vertex role '" + role + "'");
    }
  }
  if (!any_hint) {
    for (Index v : g.exterior_) {
      const Vertex& vx = g.vertex(v);
      if (vx.in_edges.empty() && !vx.out_edges.empty()) assign(v, VertexRole::inflow);
      if (vx.out_edges.empty() && !vx.in_edges.empty()) assign(v, VertexRole::outflow);
    }
  }

  std::vector<Index> parent(static_cast<std::size_t>(g.num_vertices()));
  std::iota(parent.begin(), parent.end(), Index{0});
  for (const Edge& ed : g.edges_) {
    const Index a = find_root(parent, ed.origin);
    const Index b = find_root(parent, ed.target);
    if (a != b) parent[static_cast<std::size_t>(a)] = b;
  }
  std::set<Index> roots;
  for (Index v = 0; v < g.num_vertices(); ++v) roots.insert(find_root(parent, v));
  if (roots.size() > 1) {
    const std::string msg = "graph has " + std::to_string(roots.size()) + " connected components";
    if (policy == ConnectivityPolicy::reject) throw GraphError(msg);
    g.warnings_.push_back(msg);
  }
  return g;
}

std::vector<EdgeType> classify_edges(const MetricGraph& graph) {
  std::vector<EdgeType> types;
  types.reserve(static_cast<std::size_t>(graph.num_edges()));
  for (Index e = 0; e < graph.num_edges(); ++e) {
    const Edge& ed = graph.edge(e);
    const bool origin_ext = !graph.vertex(ed.origin).interior;
    const bool target_ext = !graph.vertex(ed.target).interior;
    if (origin_ext && target_ext)
      throw GraphError("edge " + std::to_string(e) +
                       " connects two exterior vertices; no edge model applies");
    types.push_back(origin_ext ? EdgeType::inflow
                               : (target_ext ? EdgeType::outflow : EdgeType::inner));
  }
  return types;
}

namespace {

json to_json(const GraphSpec& spec) {
  json j;
  j["vertices"] = json::array();
  for (const auto& v : spec.vertices) {
    json jv = {{"id", v.id}};
    if (!v.role.empty()) jv["role"] = v.role;
    j["vertices"].push_back(jv);
  }
  j["edges"] = json::array();
  for (const auto& e : spec.edges)
    j["edges"].push_back(
        {{"origin", e.origin}, {"target", e.target}, {"length", e.length}, {"velocity", e.velocity}});
  j["inflow_vertices"] = spec.inflow_vertices;
  j["outflow_vertices"] = spec.outflow_vertices;
  return j;
}

GraphSpec from_json(const json& j) {
  GraphSpec spec;
  try {
    for (const auto& jv : j.at("vertices")) {
      VertexSpec v;
      v.id = jv.at("id").get<std::int64_t>();
      if (jv.contains("role")) v.role = jv.at("role").get<std::string>();
      spec.vertices.push_back(v);
    }
    for (const auto& je : j.at("edges")) {
      EdgeSpec e;
      e.origin = je.at("origin").get<std::int64_t>();
      e.target = je.at("target").get<std::int64_t>();
      e.length = je.value("length", 1.0);
      e.velocity = je.value("velocity", 1.0);
      spec.edges.push_back(e);
    }
    if (j.contains("inflow_vertices"))
      spec.inflow_vertices = j.at("inflow_vertices").get<std::vector<std::int64_t>>();
    if (j.contains("outflow_vertices"))
      spec.outflow_vertices = j.at("outflow_vertices").get<std::vector<std::int64_t>>();
  } catch (const json::exception& ex) {
    throw GraphError(std::string("malformed graph spec: ") + ex.what());
  }
  return spec;
}

}  // namespace

std::string dump_graph_spec(const GraphSpec& spec) { return to_json(spec).dump(2) + "\n"; }

GraphSpec parse_graph_spec(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& ex) {
    throw GraphError(std::string("graph spec is not valid JSON: ") + ex.what());
  }
  return from_json(j);
}

GraphSpec read_graph_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw GraphError("cannot open graph spec " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_graph_spec(buf.str());
}

void write_graph_spec(const GraphSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw GraphError("cannot write graph spec " + path.string());
  out << dump_graph_spec(spec);
}

GraphSpec make_chain(Index num_edges, double length, double velocity) {
  GraphSpec spec;
  for (Index v = 0; v <= num_edges; ++v) spec.vertices.push_back({v + 1, ""});
  for (Index e = 0; e < num_edges; ++e) spec.edges.push_back({e + 1, e + 2, length, velocity});
  return spec;
}

GraphSpec make_y_graph() {
  GraphSpec spec;
  for (std::int64_t v = 1; v <= 6; ++v) spec.vertices.push_back({v, ""});
  spec.edges = {{1, 3, 1.0, 1.0}, {2, 3, 1.0, 1.0}, {3, 4, 1.0, 1.0}, {4, 5, 1.0, 1.0}, {4, 6, 1.0, 1.0}};
  spec.inflow_vertices = {1, 2};
  spec.outflow_vertices = {5, 6};
  return spec;
}

GraphSpec make_diamond() {
  GraphSpec spec;
  for (std::int64_t v = 1; v <= 6; ++v) spec.vertices.push_back({v, ""});
  spec.edges = {{1, 2, 1.0, 1.0}, {2, 3, 1.0, 1.0}, {2, 4, 1.0, 1.0},
                {3, 5, 1.0, 1.0}, {4, 5, 1.0, 1.0}, {5, 6, 1.0, 1.0}};
  spec.inflow_vertices = {1};
  spec.outflow_vertices = {6};
  return spec;
}

GraphSpec make_network(Index num_edges, Index inflow, Index outflow, std::uint64_t seed) {
  if (inflow < 1 || outflow < 1) throw GraphError("a network needs inflow and outflow vertices");
  const Index spine = (num_edges - inflow - outflow + 2) / 3 + 1;
  if (spine < 2) throw GraphError("too few edges for a network");
  const Index shortcuts = num_edges - inflow - outflow - (spine - 1);
  const Index window = 8;
  if (shortcuts < 0 || shortcuts > (spine - 2) * (window - 1))
    throw GraphError("cannot build a network with " + std::to_string(num_edges) + " edges");

  GraphSpec spec;
  for (Index v = 0; v < spine + inflow + outflow; ++v) spec.vertices.push_back({v + 1, ""});
  for (Index v = 0; v + 1 < spine; ++v) spec.edges.push_back({v + 1, v + 2, 1.0, 1.0});

  std::mt19937_64 rng(seed);
  std::set<std::pair<Index, Index>> used;
  std::uniform_int_distribution<Index> from(0, spine - 3);
  std::uniform_int_distribution<Index> jump(2, window);
  while (static_cast<Index>(used.size()) < shortcuts) {
    const Index a = from(rng);
    const Index b = std::min(a + jump(rng), spine - 1);
    if (b - a < 2 || !used.insert({a, b}).second) continue;
  }
  for (const auto& [a, b] : used) spec.edges.push_back({a + 1, b + 1, 1.0, 1.0});

  std::uniform_int_distribution<Index> anywhere(0, spine - 1);
  for (Index k = 0; k < inflow; ++k) {
    const std::int64_t id = spine + k + 1;
    spec.edges.push_back({id, k == 0 ? 1 : anywhere(rng) + 1, 1.0, 1.0});
    spec.inflow_vertices.push_back(id);
  }
  for (Index k = 0; k < outflow; ++k) {
    const std::int64_t id = spine + inflow + k + 1;
    spec.edges.push_back({k == 0 ? spine : anywhere(rng) + 1, id, 1.0, 1.0});
    spec.outflow_vertices.push_back(id);
  }
  return spec;
}

}  // namespace mgdd
