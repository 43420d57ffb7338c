#pragma once

#include <filesystem>
#include <list>
#include <memory>
#include <mutex>

#include <json.hpp>

#include "mgdd/archive.hpp"
#include "mgdd/surrogate.hpp"

namespace mgdd {

inline constexpr int kModelVersion = 1;

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

struct DeepOnetArch {
  Index n_sensor = 304;
  Index width = 100;
  Index depth = 7;  // hidden layers of each net
  Index p = 100;    // shared output width of branch and trunk
  Index n_freq = 5;
};

/// Branch: modified MLP
///   U = tanh(W_u s + b_u), V = tanh(W_v s + b_v), H_1 = tanh(W_0 s + b_0),
///   Z_k = tanh(W_k H_k + b_k), H_{k+1} = (1 - Z_k) * U + Z_k * V, k = 1..depth-1,
///   b(s) = W_out H_depth + b_out.
/// Trunk: features [sin(2 pi B y), cos(2 pi B y)] of y = (t, x), then depth
///   tanh layers and a linear output.
/// Output: G(s)(t, x) = <b(s), tr(t, x)>.
struct DeepOnetModel {
  DeepOnetArch arch;
  EdgeType type = EdgeType::inner;
  double epsilon = 0.05;
  SensorGrids grids;
  nlohmann::json provenance = nlohmann::json::object();

  DenseLayer enc_u, enc_v;
  std::vector<DenseLayer> branch;
  DenseLayer branch_out;
  Eigen::MatrixXd frequencies;  // n_freq x 2, columns act on (t, x)
  std::vector<DenseLayer> trunk;
  DenseLayer trunk_out;

  Index parameter_count() const;
  void check_shapes() const;
};

/// Glorot-normal weights, zero biases, N(0, freq_scale^2) frequencies, all
/// rounded to float so that a saved model evaluates identically after loading.
DeepOnetModel random_deeponet(const DeepOnetArch& arch, EdgeType type, double epsilon,
                              const SensorGrids& grids, std::uint64_t seed, double freq_scale = 1.0,
                              double bias_scale = 0.0);

void save_model(const DeepOnetModel& model, const std::filesystem::path& dir);
DeepOnetModel load_model(const std::filesystem::path& dir);

/// Trunk outputs and their (t, x) derivatives, p x n_points each.
struct TrunkJets {
  Eigen::MatrixXd value, dt, dx, dxx;
};

TrunkJets trunk_jets(const DeepOnetModel& model, const QueryPoints& q);

struct BranchTape {
  Eigen::VectorXd input, u, v, out;
  std::vector<Eigen::VectorXd> h;  // H_1..H_depth
  std::vector<Eigen::VectorXd> z;  // Z_1..Z_{depth-1}
};

BranchTape branch_forward(const DeepOnetModel& model, const Eigen::VectorXd& sensors);
/// Directional derivatives of the branch output along the columns of D (p x k).
Eigen::MatrixXd branch_jvp(const DeepOnetModel& model, const BranchTape& tape, const Eigen::MatrixXd& D);
/// Gradient of <out_bar, b(s)> with respect to s.
Eigen::VectorXd branch_vjp(const DeepOnetModel& model, const BranchTape& tape,
                           const Eigen::VectorXd& out_bar);

class DeepOnetSurrogate : public EdgeSurrogate {
 public:
  explicit DeepOnetSurrogate(std::shared_ptr<const DeepOnetModel> model);

  std::string name() const override { return "deeponet"; }
  double epsilon() const override { return model_->epsilon; }
  const SensorGrids& grids() const override { return model_->grids; }

  EdgeValues evaluate(const SensorInput& s, const QueryPoints& q,
                      const Eigen::MatrixXd* directions = nullptr) const override;
  std::unique_ptr<EdgeTape> record(const SensorInput& s, const QueryPoints& q) const override;
  EdgeJets jets(const SensorInput& s, const QueryPoints& q) const override;

  const DeepOnetModel& model() const { return *model_; }

 private:
  std::shared_ptr<const TrunkJets> cached_trunk(const QueryPoints& q) const;

  std::shared_ptr<const DeepOnetModel> model_;
  mutable std::mutex mutex_;
  mutable std::list<std::pair<QueryPoints, std::shared_ptr<const TrunkJets>>> cache_;
};

}  // namespace mgdd
