#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cefopt::snn {

/// Affine layer with a 0/1 activity mask; inactive weights are exactly zero.
struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::MatrixXd mask;    // out x in, entries 0 or 1
  Eigen::VectorXd bias;    // out
  double sparsity = 0.0;   // target fraction of inactive weights

  Eigen::Index active() const { return static_cast<Eigen::Index>(mask.sum()); }
  Eigen::Index size() const { return weight.size(); }
};

/// Min-max scales: normalized = (physical - min) / range.
struct Scaling {
  Eigen::VectorXd x_min, x_range;
  Eigen::VectorXd y_min, y_range;
};

/// Feedforward ReLU network; hidden layers use ReLU, the output layer is affine.
struct SparseNet {
  std::vector<int> dims;  // n0 .. nL
  std::vector<Layer> layers;
  Scaling scaling;
  std::string case_hash;     // case the training data came from
  std::string dataset_hash;  // dataset content hash
  std::uint64_t seed = 0;

  int inputs() const { return dims.front(); }
  int outputs() const { return dims.back(); }
  int hidden_neurons() const;
  /// Throws ContractViolation when shapes or the mask-zero coupling are broken.
  void check() const;
};

/// Random He-uniform initialization. Sparse layers get exactly
/// round((1 - s) * size) active connections; layer 0 is dense.
SparseNet make_net(const std::vector<int>& dims, const std::vector<double>& sparsity,
                   std::uint64_t seed);

/// Normalized input (n0 x batch) to normalized output (nL x batch).
Eigen::MatrixXd forward(const SparseNet& net, const Eigen::MatrixXd& x);
Eigen::VectorXd forward(const SparseNet& net, const Eigen::VectorXd& x);
/// Physical-units prediction using the stored scaling.
Eigen::VectorXd predict(const SparseNet& net, const Eigen::VectorXd& x_physical);

struct Gradients {
  std::vector<Eigen::MatrixXd> weight;  // dense, including masked entries
  std::vector<Eigen::VectorXd> bias;
};

struct LossGrad {
  double loss = 0.0;  // sum of squared errors over batch and outputs
  Gradients grads;
};

/// x is n0 x batch, y is nL x batch, both normalized.
LossGrad loss_and_grads(const SparseNet& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 200;
  int update_interval = 100;   // steps between drop/grow events
  double end_fraction = 0.8;   // drop/grow stops after this share of all steps
  double drop_fraction = 0.3;  // initial update fraction
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool use_adam = true;        // plain SGD otherwise
  bool sparse_updates = true;  // false disables drop/grow entirely
  /// Learning rate follows a cosine from learning_rate down to this share of it; 1 keeps it constant.
  double final_lr_fraction = 1.0;

  void validate() const;
};

/// Adaptive-moment optimizer state, one buffer per parameter tensor.
class Adam {
 public:
  explicit Adam(const SparseNet& net);
  /// Updates active weights and all biases; masked weights stay zero.
  void step(SparseNet& net, const Gradients& g, const TrainConfig& cfg);
  long steps() const { return t_; }

 private:
  std::vector<Eigen::MatrixXd> m_w_, v_w_;
  std::vector<Eigen::VectorXd> m_b_, v_b_;
  long t_ = 0;
};

void sgd_step(SparseNet& net, const Gradients& g, double learning_rate);

/// Cosine-decayed update fraction (alpha / 2)(1 + cos(t pi / t_end)).
double decay_fraction(long t, double alpha, long t_end);

struct DropGrowEvent {
  long step = 0;
  std::vector<Eigen::Index> swapped;  // connections moved per layer
  std::vector<Eigen::Index> active_before, active_after;
  bool grown_zero = true;  // every grown weight was exactly 0 after the event
};

/// Indices of the k smallest values, ties to the lowest index.
std::vector<Eigen::Index> arg_smallest(const std::vector<double>& values, Eigen::Index k);

/// Drops k = floor(decay (1 - s) active) smallest-magnitude active connections of every sparse layer and
/// grows k inactive ones (just-dropped included) with the largest gradient
/// magnitude; grown weights start at exactly 0.
DropGrowEvent drop_and_grow(SparseNet& net, const Gradients& g, long t, long t_end,
                            double alpha);

struct TrainRecord {
  std::vector<double> epoch_loss;  // mean squared error per sample per output, normalized
  std::vector<DropGrowEvent> events;
  long steps = 0;
};

struct TrainResult {
  SparseNet net;
  TrainRecord record;
};

/// Algorithm: shuffled mini-batches; at step t (t % interval == 0, t <= t_end)
/// a drop/grow event replaces the optimizer step.
TrainResult train_ssgd(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                       const std::vector<int>& dims, const std::vector<double>& sparsity,
                       const TrainConfig& cfg);

struct Metrics {
  double mse = 0.0;
  double rmse = 0.0;
  double mape = 0.0;  // fraction, not percent
  double r2 = 0.0;
  long mape_skipped = 0;  // zero targets excluded from MAPE
};

/// Metrics in physical units; x and y physical, one sample per column.
Metrics eval_metrics(const SparseNet& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);
/// Same definitions on given predictions.
Metrics metrics_of(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target);

/// Inactive weights over all weights, biases excluded.
double sparsity_rate(const SparseNet& net);

std::string to_json(const SparseNet& net);
SparseNet from_json(const std::string& text);
void save_net(const SparseNet& net, const std::filesystem::path& path);
SparseNet load_net(const std::filesystem::path& path);
/// SHA-256 of the parameter content (dims, masks, weights, biases, scaling).
std::string content_hash(const SparseNet& net);

}  // namespace cefopt::snn
