#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace mgdd {

using Index = Eigen::Index;

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EdgeType { inflow, inner, outflow };

std::string_view to_string(EdgeType type);
EdgeType edge_type_from_string(std::string_view name);

/// Boundary behaviour of an exterior vertex.  Interior vertices are always
/// `none`; exterior vertices without rates are `none` as well.
enum class VertexRole { none, inflow, outflow };

std::string_view to_string(VertexRole role);

// Raw graph description, exactly as stored in the graph spec file.
struct VertexSpec {
  std::int64_t id = 0;
  std::string role;  // optional hint: "", "inflow", "outflow", "inner"
};

struct EdgeSpec {
  std::int64_t origin = 0;
  std::int64_t target = 0;
  double length = 1.0;
  double velocity = 1.0;
};

struct GraphSpec {
  std::vector<VertexSpec> vertices;
  std::vector<EdgeSpec> edges;
  std::vector<std::int64_t> inflow_vertices;
  std::vector<std::int64_t> outflow_vertices;
};

struct Edge {
  Index origin = 0;  // vertex index, not id
  Index target = 0;
  double length = 1.0;
  double velocity = 1.0;
};

struct Vertex {
  std::int64_t id = 0;
  std::vector<Index> in_edges;   // edges terminating here
  std::vector<Index> out_edges;  // edges originating here
  bool interior = false;
  VertexRole role = VertexRole::none;

  Index degree() const { return static_cast<Index>(in_edges.size() + out_edges.size()); }
};

enum class ConnectivityPolicy { warn, reject };

/// Directed metric graph.  Immutable once built; all derived incidence data
/// is populated by build_graph.
class MetricGraph {
 public:
  Index num_vertices() const { return static_cast<Index>(vertices_.size()); }
  Index num_edges() const { return static_cast<Index>(edges_.size()); }

  const Edge& edge(Index e) const { return edges_[static_cast<std::size_t>(e)]; }
  const Vertex& vertex(Index v) const { return vertices_[static_cast<std::size_t>(v)]; }
  std::span<const Edge> edges() const { return edges_; }
  std::span<const Vertex> vertices() const { return vertices_; }

  std::span<const Index> interior_vertices() const { return interior_; }
  std::span<const Index> exterior_vertices() const { return exterior_; }

  /// Incident edges of v: incoming first, then outgoing.
  std::vector<Index> incident_edges(Index v) const;

  /// Outer normal n_e(v): -1 at the origin, +1 at the target.
  int normal(Index e, Index v) const;

  Index vertex_index(std::int64_t id) const;

  /// Copy of this graph with replaced edge velocities.
  MetricGraph with_velocities(const Eigen::VectorXd& velocity) const;
  Eigen::VectorXd velocities() const;

  const GraphSpec& spec() const { return spec_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  friend MetricGraph build_graph(const GraphSpec&, ConnectivityPolicy);

  GraphSpec spec_;
  std::vector<Edge> edges_;
  std::vector<Vertex> vertices_;
  std::vector<Index> interior_;
  std::vector<Index> exterior_;
  std::vector<std::string> warnings_;
};

MetricGraph build_graph(const GraphSpec& spec,
                        ConnectivityPolicy policy = ConnectivityPolicy::warn);

/// inflow iff the origin is exterior, outflow iff the target is exterior.
/// Throws GraphError for an edge with two exterior endpoints.
std::vector<EdgeType> classify_edges(const MetricGraph& graph);

GraphSpec read_graph_spec(const std::filesystem::path& path);
void write_graph_spec(const GraphSpec& spec, const std::filesystem::path& path);
std::string dump_graph_spec(const GraphSpec& spec);
GraphSpec parse_graph_spec(std::string_view text);

// Topologies used throughout the tests and data files.
GraphSpec make_chain(Index num_edges, double length = 1.0, double velocity = 1.0);
GraphSpec make_y_graph();  // v1,v2 -> v3 -> v4 -> v5,v6
GraphSpec make_diamond();  // v1 -> v2 -> {v3, v4} -> v5 -> v6

/// Random directed network with exactly `num_edges` edges: a spine path over
/// the interior vertices, forward shortcuts, and `inflow` / `outflow` exterior
/// vertices attached by single edges.  The spine ends always carry an inflow
/// resp. outflow edge, so every spine vertex is interior.
GraphSpec make_network(Index num_edges, Index inflow, Index outflow, std::uint64_t seed);

}  // namespace mgdd
