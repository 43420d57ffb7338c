#include "mgdd/deeponet.hpp"

#include <cmath>
#include <numbers>
#include <random>


namespace mgdd {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

DenseLayer random_layer(Index in, Index out, std::mt19937_64& rng, double bias_scale) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(in + out)));
  std::normal_distribution<double> bias(0.0, 1.0);
  DenseLayer l;
  l.weight = Eigen::MatrixXd::NullaryExpr(out, in, [&] { return double(float(normal(rng))); });
  l.bias = Eigen::VectorXd::NullaryExpr(out, [&] { return double(float(bias_scale * bias(rng))); });
  return l;
}

void check_layer(const DenseLayer& l, Index in, Index out, const std::string& name) {
  if (l.weight.rows() != out || l.weight.cols() != in || l.bias.size() != out)
    throw FormatError("tensor " + name + " does not match the architecture");
}

// Every tensor of the model in archive order, with its expected [in, out] shape.
template <typename Model, typename Fn>
void for_each_layer(Model& m, Fn&& fn) {
  const auto& a = m.arch;
  fn("branch.u", m.enc_u, a.n_sensor, a.width);
  fn("branch.v", m.enc_v, a.n_sensor, a.width);
  for (Index k = 0; k < a.depth; ++k)
    fn("branch.hidden." + std::to_string(k), m.branch[static_cast<std::size_t>(k)],
       k == 0 ? a.n_sensor : a.width, a.width);
  fn("branch.out", m.branch_out, a.width, a.p);
  for (Index k = 0; k < a.depth; ++k)
    fn("trunk.hidden." + std::to_string(k), m.trunk[static_cast<std::size_t>(k)],
       k == 0 ? 2 * a.n_freq : a.width, a.width);
  fn("trunk.out", m.trunk_out, a.width, a.p);
}

Eigen::VectorXd tanh(const Eigen::VectorXd& z) { return z.array().tanh().matrix(); }

}  // namespace

Index DeepOnetModel::parameter_count() const {
  Index count = frequencies.size();
  for_each_layer(*this, [&](const std::string&, const DenseLayer& l, Index, Index) {
    count += l.weight.size() + l.bias.size();
  });
  return count;
}

void DeepOnetModel::check_shapes() const {
  if (arch.depth < 1 || arch.width < 1 || arch.p < 1 || arch.n_freq < 1)
    throw FormatError("invalid architecture dimensions");
  if (arch.n_sensor != grids.n_sensor())
    throw FormatError("architecture input width does not match the sensor grids");
  if (static_cast<Index>(branch.size()) != arch.depth || static_cast<Index>(trunk.size()) != arch.depth)
    throw FormatError("layer count does not match the architecture depth");
  if (frequencies.rows() != arch.n_freq || frequencies.cols() != 2)
    throw FormatError("frequency matrix has the wrong shape");
  for_each_layer(*this, [](const std::string& name, const DenseLayer& l, Index in, Index out) {
    check_layer(l, in, out, name);
  });
}

DeepOnetModel random_deeponet(const DeepOnetArch& arch, EdgeType type, double epsilon,
                              const SensorGrids& grids, std::uint64_t seed, double freq_scale,
                              double bias_scale) {
  DeepOnetModel m;
  m.arch = arch;
  m.type = type;
  m.epsilon = epsilon;
  m.grids = grids;
  m.provenance = {{"origin", "random initialization"}, {"seed", seed}};
  m.branch.resize(static_cast<std::size_t>(arch.depth));
  m.trunk.resize(static_cast<std::size_t>(arch.depth));
  std::mt19937_64 rng(seed);
  for_each_layer(m, [&](const std::string&, DenseLayer& l, Index in, Index out) {
    l = random_layer(in, out, rng, bias_scale);
  });
  std::normal_distribution<double> normal(0.0, freq_scale);
  m.frequencies = Eigen::MatrixXd::NullaryExpr(arch.n_freq, 2, [&] { return double(float(normal(rng))); });
  m.check_shapes();
  return m;
}

// ---------------------------------------------------------------------------
// Archive

void save_model(const DeepOnetModel& m, const std::filesystem::path& dir) {
  m.check_shapes();
  std::filesystem::create_directories(dir / "tensors");
  json tensors = json::array();
  auto put = [&](const std::string& name, const F32Rows& values) {
    const std::string file = "tensors/" + name + ".f32";
    const std::uint32_t crc = write_f32(dir / file, values);
    json shape = values.rows() == 1 ? json::array({values.cols()}) : json::array({values.rows(), values.cols()});
    tensors.push_back({{"name", name}, {"file", file}, {"shape", shape}, {"crc32", crc}});
  };
  for_each_layer(m, [&](const std::string& name, const DenseLayer& l, Index, Index) {
    put(name + ".weight", l.weight.transpose().cast<float>());
    put(name + ".bias", l.bias.transpose().cast<float>());
  });
  put("trunk.frequencies", m.frequencies.cast<float>());

  const json manifest{
      {"format", "mgdd-deeponet"},
      {"version", kModelVersion},
      {"edge_type", std::string(to_string(m.type))},
      {"epsilon", m.epsilon},
      {"architecture",
       {{"branch", "modified_mlp"},
        {"trunk", "fourier_mlp"},
        {"activation", "tanh"},
        {"n_sensor", m.arch.n_sensor},
        {"width", m.arch.width},
        {"depth", m.arch.depth},
        {"p", m.arch.p},
        {"n_freq", m.arch.n_freq},
        {"output_bias", false},
        {"sensor_layout", {"u_origin", "u_target", "u_init", "velocity"}},
        {"sensor_normalization", "none"}}},
      {"grids",
       {{"n_origin", m.grids.n_origin},
        {"n_target", m.grids.n_target},
        {"n_init", m.grids.n_init},
        {"final_time", m.grids.final_time}}},
      {"dtype", "float32-le"},
      {"weight_layout", "[in, out] row-major; biases [out]; frequencies [n_freq, 2] over (t, x)"},
      {"tensors", tensors},
      {"provenance", m.provenance},
  };
  write_text(dir / "manifest.json", dump_json(manifest));
}

DeepOnetModel load_model(const std::filesystem::path& dir) {
  const json doc = read_json(dir / "manifest.json");
  try {
    if (doc.at("format") != "mgdd-deeponet") throw FormatError("not a model archive");
    if (doc.at("version") != kModelVersion)
      throw FormatError("unsupported model version " + doc.at("version").dump());
    const json& a = doc.at("architecture");
    if (a.at("branch") != "modified_mlp" || a.at("trunk") != "fourier_mlp" || a.at("activation") != "tanh")
      throw FormatError("unsupported network architecture");
    if (a.value("sensor_normalization", "none") != "none")
      throw FormatError("sensor normalization is not supported");
    DeepOnetModel m;
    m.arch.n_sensor = a.at("n_sensor");
    m.arch.width = a.at("width");
    m.arch.depth = a.at("depth");
    m.arch.p = a.at("p");
    m.arch.n_freq = a.at("n_freq");
    m.type = edge_type_from_string(doc.at("edge_type").get<std::string>());
    m.epsilon = doc.at("epsilon");
    const json& g = doc.at("grids");
    m.grids.n_origin = g.at("n_origin");
    m.grids.n_target = g.at("n_target");
    m.grids.n_init = g.at("n_init");
    m.grids.final_time = g.at("final_time");
    m.provenance = doc.value("provenance", json::object());
    if (m.arch.n_sensor != m.grids.n_sensor())
      throw FormatError("architecture input width does not match the sensor grids");
    m.branch.resize(static_cast<std::size_t>(m.arch.depth));
    m.trunk.resize(static_cast<std::size_t>(m.arch.depth));

    std::map<std::string, json> entries;
    for (const auto& t : doc.at("tensors")) entries[t.at("name").get<std::string>()] = t;
    auto get = [&](const std::string& name, Index rows, Index cols) {
      auto it = entries.find(name);
      if (it == entries.end()) throw FormatError("missing tensor " + name);
      const json& t = it->second;
      const json expected = rows == 1 ? json::array({cols}) : json::array({rows, cols});
      if (t.at("shape") != expected)
        throw FormatError("tensor " + name + " has shape " + t.at("shape").dump() + ", expected " +
                          expected.dump());
      return read_f32(dir / t.at("file").get<std::string>(), rows, cols,
                      t.at("crc32").get<std::uint32_t>());
    };
    for_each_layer(m, [&](const std::string& name, DenseLayer& l, Index in, Index out) {
      l.weight = get(name + ".weight", in, out).cast<double>().transpose();
      l.bias = get(name + ".bias", 1, out).cast<double>().transpose();
    });
    m.frequencies = get("trunk.frequencies", m.arch.n_freq, 2).cast<double>();
    m.check_shapes();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model manifest: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Evaluation

TrunkJets trunk_jets(const DeepOnetModel& m, const QueryPoints& q) {
  const Index nq = q.size();
  const Index nf = m.arch.n_freq;
  Eigen::MatrixXd y(2, nq);
  y.row(0) = q.t.transpose();
  y.row(1) = q.x.transpose();
  const Eigen::MatrixXd theta = kTwoPi * m.frequencies * y;  // nf x nq
  const Eigen::VectorXd th_t = kTwoPi * m.frequencies.col(0);
  const Eigen::VectorXd th_x = kTwoPi * m.frequencies.col(1);
  const Eigen::ArrayXXd s = theta.array().sin(), c = theta.array().cos();

  Eigen::MatrixXd a(2 * nf, nq), at(2 * nf, nq), ax(2 * nf, nq), axx(2 * nf, nq);
  a << s.matrix(), c.matrix();
  at << (c.colwise() * th_t.array()).matrix(), (-(s.colwise() * th_t.array())).matrix();
  ax << (c.colwise() * th_x.array()).matrix(), (-(s.colwise() * th_x.array())).matrix();
  const Eigen::ArrayXd th_xx = th_x.array().square();
  axx << (-(s.colwise() * th_xx)).matrix(), (-(c.colwise() * th_xx)).matrix();

  for (const DenseLayer& l : m.trunk) {
    const Eigen::MatrixXd z = (l.weight * a).colwise() + l.bias;
    const Eigen::MatrixXd zt = l.weight * at, zx = l.weight * ax, zxx = l.weight * axx;
    const Eigen::ArrayXXd v = z.array().tanh();
    const Eigen::ArrayXXd d = 1.0 - v.square();
    a = v.matrix();
    at = (d * zt.array()).matrix();
    ax = (d * zx.array()).matrix();
    axx = (d * zxx.array() - 2.0 * v * d * zx.array().square()).matrix();
  }
  TrunkJets out;
  out.value = (m.trunk_out.weight * a).colwise() + m.trunk_out.bias;
  out.dt = m.trunk_out.weight * at;
  out.dx = m.trunk_out.weight * ax;
  out.dxx = m.trunk_out.weight * axx;
  return out;
}

BranchTape branch_forward(const DeepOnetModel& m, const Eigen::VectorXd& s) {
  if (s.size() != m.arch.n_sensor) throw SurrogateError("branch input has the wrong length");
  BranchTape tp;
  tp.input = s;
  tp.u = tanh(m.enc_u.weight * s + m.enc_u.bias);
  tp.v = tanh(m.enc_v.weight * s + m.enc_v.bias);
  tp.h.push_back(tanh(m.branch[0].weight * s + m.branch[0].bias));
  for (std::size_t k = 1; k < m.branch.size(); ++k) {
    tp.z.push_back(tanh(m.branch[k].weight * tp.h.back() + m.branch[k].bias));
    const Eigen::VectorXd& z = tp.z.back();
    tp.h.push_back(tp.u + z.cwiseProduct(tp.v - tp.u));
  }
  tp.out = m.branch_out.weight * tp.h.back() + m.branch_out.bias;
  return tp;
}

Eigen::MatrixXd branch_jvp(const DeepOnetModel& m, const BranchTape& tp, const Eigen::MatrixXd& D) {
  auto dtanh = [](const Eigen::VectorXd& v) { return (1.0 - v.array().square()).matrix(); };
  const Eigen::MatrixXd du = dtanh(tp.u).asDiagonal() * (m.enc_u.weight * D);
  const Eigen::MatrixXd dv = dtanh(tp.v).asDiagonal() * (m.enc_v.weight * D);
  Eigen::MatrixXd dh = dtanh(tp.h[0]).asDiagonal() * (m.branch[0].weight * D);
  const Eigen::VectorXd diff = tp.v - tp.u;
  for (std::size_t k = 1; k < m.branch.size(); ++k) {
    const Eigen::VectorXd& z = tp.z[k - 1];
    const Eigen::MatrixXd dz = dtanh(z).asDiagonal() * (m.branch[k].weight * dh);
    dh = du + diff.asDiagonal() * dz + z.asDiagonal() * (dv - du);
  }
  return m.branch_out.weight * dh;
}

Eigen::VectorXd branch_vjp(const DeepOnetModel& m, const BranchTape& tp, const Eigen::VectorXd& out_bar) {
  Eigen::VectorXd hb = m.branch_out.weight.transpose() * out_bar;
  Eigen::VectorXd ub = Eigen::VectorXd::Zero(tp.u.size());
  Eigen::VectorXd vb = Eigen::VectorXd::Zero(tp.v.size());
  const Eigen::VectorXd diff = tp.v - tp.u;
  for (std::size_t k = m.branch.size() - 1; k >= 1; --k) {
    const Eigen::VectorXd& z = tp.z[k - 1];
    const Eigen::VectorXd zb = hb.cwiseProduct(diff);
    ub += hb.cwiseProduct((1.0 - z.array()).matrix());
    vb += hb.cwiseProduct(z);
    hb = m.branch[k].weight.transpose() * (zb.array() * (1.0 - z.array().square())).matrix();
  }
  const Eigen::VectorXd pre0 = (hb.array() * (1.0 - tp.h[0].array().square())).matrix();
  const Eigen::VectorXd preu = (ub.array() * (1.0 - tp.u.array().square())).matrix();
  const Eigen::VectorXd prev = (vb.array() * (1.0 - tp.v.array().square())).matrix();
  return m.branch[0].weight.transpose() * pre0 + m.enc_u.weight.transpose() * preu +
         m.enc_v.weight.transpose() * prev;
}

DeepOnetSurrogate::DeepOnetSurrogate(std::shared_ptr<const DeepOnetModel> model)
    : model_(std::move(model)) {
  if (!model_) throw SurrogateError("null model");
  model_->check_shapes();
}

std::shared_ptr<const TrunkJets> DeepOnetSurrogate::cached_trunk(const QueryPoints& q) const {
  {
    std::lock_guard lock(mutex_);
    for (auto it = cache_.begin(); it != cache_.end(); ++it) {
      if (it->first.t.size() == q.t.size() && it->first.t == q.t && it->first.x == q.x) {
        cache_.splice(cache_.begin(), cache_, it);
        return cache_.front().second;
      }
    }
  }
  auto jets = std::make_shared<const TrunkJets>(trunk_jets(*model_, q));
  std::lock_guard lock(mutex_);
  cache_.emplace_front(q, jets);
  if (cache_.size() > 16) cache_.pop_back();
  return jets;
}

EdgeValues DeepOnetSurrogate::evaluate(const SensorInput& s, const QueryPoints& q,
                                       const Eigen::MatrixXd* directions) const {
  check_input(s);
  const auto tr = cached_trunk(q);
  const BranchTape tp = branch_forward(*model_, s.flatten());
  const double eps = model_->epsilon;
  EdgeValues out;
  out.rho = tr->value.transpose() * tp.out;
  const Eigen::VectorXd rho_x = tr->dx.transpose() * tp.out;
  out.flux = -eps * rho_x + s.velocity * saturation(out.rho.array()).matrix();
  if (!directions) return out;
  if (directions->rows() != model_->arch.n_sensor)
    throw SurrogateError("direction matrix has wrong row count");
  const Eigen::MatrixXd db = branch_jvp(*model_, tp, *directions);
  out.d_rho = tr->value.transpose() * db;
  const Eigen::VectorXd fp = (1.0 - 2.0 * out.rho.array()).matrix();
  out.d_flux = -eps * (tr->dx.transpose() * db) + (s.velocity * fp).asDiagonal() * out.d_rho;
  out.d_flux += saturation(out.rho.array()).matrix() * directions->row(directions->rows() - 1);
  return out;
}

namespace {

class DeepOnetTape : public EdgeTape {
 public:
  DeepOnetTape(const DeepOnetModel& m, std::shared_ptr<const TrunkJets> tr, BranchTape tp,
               double velocity)
      : m_(m), tr_(std::move(tr)), tp_(std::move(tp)), nu_(velocity) {
    rho_ = tr_->value.transpose() * tp_.out;
    flux_ = -m.epsilon * (tr_->dx.transpose() * tp_.out) + nu_ * saturation(rho_.array()).matrix();
  }

  Eigen::VectorXd pullback(const Eigen::VectorXd& rho_bar,
                           const Eigen::VectorXd& flux_bar) const override {
    const Eigen::VectorXd fp = (1.0 - 2.0 * rho_.array()).matrix();
    const Eigen::VectorXd rb = rho_bar + nu_ * fp.cwiseProduct(flux_bar);
    const Eigen::VectorXd out_bar = tr_->value * rb - m_.epsilon * (tr_->dx * flux_bar);
    Eigen::VectorXd grad = branch_vjp(m_, tp_, out_bar);
    grad[grad.size() - 1] += saturation(rho_.array()).matrix().dot(flux_bar);
    return grad;
  }

 private:
  const DeepOnetModel& m_;
  std::shared_ptr<const TrunkJets> tr_;
  BranchTape tp_;
  double nu_;
};

}  // namespace

std::unique_ptr<EdgeTape> DeepOnetSurrogate::record(const SensorInput& s, const QueryPoints& q) const {
  check_input(s);
  return std::make_unique<DeepOnetTape>(*model_, cached_trunk(q), branch_forward(*model_, s.flatten()),
                                        s.velocity);
}

EdgeJets DeepOnetSurrogate::jets(const SensorInput& s, const QueryPoints& q) const {
  check_input(s);
  const auto tr = cached_trunk(q);
  const Eigen::VectorXd b = branch_forward(*model_, s.flatten()).out;
  return {tr->value.transpose() * b, tr->dt.transpose() * b, tr->dx.transpose() * b,
          tr->dxx.transpose() * b};
}

}  // namespace mgdd
