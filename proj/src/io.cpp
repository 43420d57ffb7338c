#include "mgdd/io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mgdd {

std::string format_double(double value) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, r.ptr);
}

Trajectory Snapshots::trajectory() const {
  Trajectory out;
  for (Index i = 0; i < values.rows(); ++i) out.push_back({values.row(i).transpose(), times[i]});
  return out;
}

Snapshots make_snapshots(const Trajectory& trajectory, const MetricGraph& graph,
                         const Discretization& disc) {
  Snapshots s;
  for (Index e = 0; e < graph.num_edges(); ++e) {
    s.cells.push_back(disc.cells(e));
    s.lengths.push_back(disc.length(e));
  }
  for (const Vertex& v : graph.vertices()) s.vertex_ids.push_back(v.id);
  s.epsilon = disc.config().epsilon;
  s.alpha = disc.config().alpha;
  s.times.resize(static_cast<Index>(trajectory.size()));
  s.values.resize(static_cast<Index>(trajectory.size()), disc.num_dofs());
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    if (trajectory[i].values.size() != disc.num_dofs())
      throw FormatError("snapshot does not match the discretization");
    s.times[static_cast<Index>(i)] = trajectory[i].time;
    s.values.row(static_cast<Index>(i)) = trajectory[i].values.transpose();
  }
  return s;
}

namespace {

constexpr std::string_view kMagic = "MGDDSNAP";

std::uint32_t payload_crc(const Snapshots& s) {
  const std::uint32_t a = crc32_of(s.times.data(), static_cast<std::size_t>(s.times.size()) * sizeof(double));
  const std::uint32_t b = crc32_of(s.values.data(), static_cast<std::size_t>(s.values.size()) * sizeof(double));
  return a ^ (b * 2654435761u);
}

}  // namespace

void save_snapshots(const Snapshots& s, const std::filesystem::path& path) {
  if (s.times.size() != s.values.rows()) throw FormatError("snapshot times and values disagree");
  nlohmann::json h;
  h["format"] = "mgdd-snapshots";
  h["dtype"] = "float64";
  h["byte_order"] = "little";
  h["num_snapshots"] = s.values.rows();
  h["num_dofs"] = s.values.cols();
  h["cells"] = s.cells;
  h["lengths"] = s.lengths;
  h["vertex_ids"] = s.vertex_ids;
  h["epsilon"] = s.epsilon;
  h["alpha"] = s.alpha;
  h["layout"] = "times[num_snapshots] then values[num_snapshots][num_dofs]";
  h["crc32"] = payload_crc(s);
  const std::string header = dump_json(h);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << kMagic << ' ' << kSnapshotVersion << ' ' << header.size() << '\n' << header;
  out.write(reinterpret_cast<const char*>(s.times.data()),
            static_cast<std::streamsize>(s.times.size() * static_cast<Index>(sizeof(double))));
  out.write(reinterpret_cast<const char*>(s.values.data()),
            static_cast<std::streamsize>(s.values.size() * static_cast<Index>(sizeof(double))));
  if (!out) throw FormatError("write failed for " + path.string());
}

Snapshots load_snapshots(const std::filesystem::path& path) {
  const std::string data = read_text(path);
  const auto fail = [&](const std::string& what) {
    return FormatError(path.string() + ": " + what);
  };
  const std::size_t eol = data.find('\n');
  if (eol == std::string::npos) throw fail("missing snapshot preamble");
  std::istringstream pre(data.substr(0, eol));
  std::string magic;
  int version = 0;
  std::size_t header_bytes = 0;
  if (!(pre >> magic >> version >> header_bytes) || magic != kMagic) throw fail("not a snapshot file");
  if (version != kSnapshotVersion) throw fail("unsupported snapshot version " + std::to_string(version));
  if (eol + 1 + header_bytes > data.size()) throw fail("truncated header");

  Snapshots s;
  Index rows = 0, cols = 0;
  std::uint32_t crc = 0;
  try {
    const auto h = nlohmann::json::parse(data.substr(eol + 1, header_bytes));
    if (h.at("format") != "mgdd-snapshots" || h.at("dtype") != "float64" || h.at("byte_order") != "little")
      throw fail("unsupported snapshot encoding");
    rows = h.at("num_snapshots").get<Index>();
    cols = h.at("num_dofs").get<Index>();
    s.cells = h.at("cells").get<std::vector<Index>>();
    s.lengths = h.at("lengths").get<std::vector<double>>();
    s.vertex_ids = h.at("vertex_ids").get<std::vector<std::int64_t>>();
    s.epsilon = h.at("epsilon").get<double>();
    s.alpha = h.at("alpha").get<double>();
    crc = h.at("crc32").get<std::uint32_t>();
  } catch (const nlohmann::json::exception& e) {
    throw fail(e.what());
  }
  if (s.cells.size() != s.lengths.size()) throw fail("edge layout is inconsistent");
  Index dofs = static_cast<Index>(s.vertex_ids.size());
  for (Index n : s.cells) dofs += n - 1;
  if (rows < 0 || dofs != cols) throw fail("num_dofs does not match the edge layout");

  const std::size_t offset = eol + 1 + header_bytes;
  const std::size_t payload = static_cast<std::size_t>(rows * (cols + 1)) * sizeof(double);
  if (data.size() - offset != payload)
    throw fail("expected " + std::to_string(payload) + " payload bytes, found " +
               std::to_string(data.size() - offset));
  s.times.resize(rows);
  s.values.resize(rows, cols);
  std::memcpy(s.times.data(), data.data() + offset, static_cast<std::size_t>(rows) * sizeof(double));
  std::memcpy(s.values.data(), data.data() + offset + static_cast<std::size_t>(rows) * sizeof(double),
              static_cast<std::size_t>(rows * cols) * sizeof(double));
  if (payload_crc(s) != crc) throw fail("checksum mismatch");
  return s;
}

void write_trajectory_csv(const Trajectory& trajectory, const MetricGraph& graph,
                          const Discretization& disc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "time,kind,id,cell,x,rho\n";
  for (const GraphField& f : trajectory) {
    const std::string t = format_double(f.time);
    for (Index e = 0; e < graph.num_edges(); ++e)
      for (Index k = 1; k < disc.cells(e); ++k)
        out << t << ",edge," << e << ',' << k << ',' << format_double(disc.h(e) * static_cast<double>(k))
            << ',' << format_double(f.values[disc.node_dof(e, k)]) << '\n';
    for (Index v = 0; v < graph.num_vertices(); ++v)
      out << t << ",vertex," << graph.vertex(v).id << ",0,," << format_double(f.values[disc.vertex_dof(v)])
          << '\n';
  }
  if (!out) throw FormatError("write failed for " + path.string());
}

void write_profile_csv(const GraphSolution& solution, const GraphSolution* reference,
                       const Eigen::VectorXd& times, Index nx, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "time,edge,x" << ",rho" << (reference ? ",rho_ref" : "") << '\n';
  for (Index e = 0; e < solution.num_edges(); ++e) {
    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(nx, 0.0, solution.length(e));
    for (const double t : times) {
      const QueryPoints q{Eigen::VectorXd::Constant(nx, t), x};
      const Eigen::VectorXd rho = solution.density(e, q);
      Eigen::VectorXd ref;
      if (reference) ref = reference->density(e, q);
      for (Index i = 0; i < nx; ++i) {
        out << format_double(t) << ',' << e << ',' << format_double(x[i]) << ',' << format_double(rho[i]);
        if (reference) out << ',' << format_double(ref[i]);
        out << '\n';
      }
    }
  }
  if (!out) throw FormatError("write failed for " + path.string());
}

}  // namespace mgdd
