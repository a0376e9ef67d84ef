#include "cefopt/snn/net.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "cefopt/error.hpp"
#include "cefopt/util/hash.hpp"

namespace cefopt::snn {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::json;

int SparseNet::hidden_neurons() const {
  int n = 0;
  for (std::size_t l = 1; l + 1 < dims.size(); ++l) n += dims[l];
  return n;
}

void SparseNet::check() const {
  if (dims.size() < 2 || layers.size() + 1 != dims.size()) {
    throw ContractViolation("network dims and layers disagree");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& L = layers[l];
    if (L.weight.rows() != dims[l + 1] || L.weight.cols() != dims[l] ||
        L.mask.rows() != L.weight.rows() || L.mask.cols() != L.weight.cols() ||
        L.bias.size() != dims[l + 1]) {
      throw ContractViolation(fmt::format("layer {} has inconsistent shapes", l));
    }
    if ((L.weight.array() * (1.0 - L.mask.array())).cwiseAbs().maxCoeff() != 0.0) {
      throw ContractViolation(fmt::format("layer {} has a nonzero masked weight", l));
    }
  }
  for (auto* v : {&scaling.x_min, &scaling.x_range}) {
    if (v->size() != 0 && v->size() != inputs()) throw ContractViolation("input scaling size");
  }
  for (auto* v : {&scaling.y_min, &scaling.y_range}) {
    if (v->size() != 0 && v->size() != outputs()) throw ContractViolation("output scaling size");
  }
}

SparseNet make_net(const std::vector<int>& dims, const std::vector<double>& sparsity,
                   std::uint64_t seed) {
  if (dims.size() < 2) throw ContractViolation("a network needs at least two layer sizes");
  if (sparsity.size() != dims.size() - 1) {
    throw ContractViolation("one sparsity per weight layer expected");
  }
  for (int d : dims) {
    if (d < 1) throw ContractViolation("layer sizes must be positive");
  }
  std::mt19937_64 rng(seed);
  SparseNet net;
  net.dims = dims;
  net.seed = seed;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double s = l == 0 ? 0.0 : sparsity[l];
    if (s < 0.0 || s >= 1.0) throw ContractViolation("sparsity must lie in [0, 1)");
    if (l == 0 && sparsity[0] != 0.0) {
      throw ContractViolation("the first layer is dense; its sparsity must be 0");
    }
    Layer L;
    L.sparsity = s;
    L.weight = MatrixXd::Zero(dims[l + 1], dims[l]);
    L.mask = MatrixXd::Zero(dims[l + 1], dims[l]);
    L.bias = VectorXd::Zero(dims[l + 1]);
    const Index total = L.weight.size();
    const auto active = static_cast<Index>(std::llround((1.0 - s) * static_cast<double>(total)));
    std::vector<Index> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    const double density = static_cast<double>(std::max<Index>(active, 1)) / static_cast<double>(total);
    const double limit = std::sqrt(6.0 / (dims[l] * density));
    std::uniform_real_distribution<double> U(-limit, limit);
    for (Index k = 0; k < active; ++k) {
      const Index flat = order[static_cast<std::size_t>(k)];
      const Index r = flat / dims[l], c = flat % dims[l];
      L.mask(r, c) = 1.0;
    }
    // Draw weights in flat order so the values do not depend on the shuffle.
    for (Index flat = 0; flat < total; ++flat) {
      const Index r = flat / dims[l], c = flat % dims[l];
      const double w = U(rng);
      if (L.mask(r, c) != 0.0) L.weight(r, c) = w;
    }
    net.layers.push_back(std::move(L));
  }
  return net;
}

MatrixXd forward(const SparseNet& net, const MatrixXd& x) {
  if (x.rows() != net.inputs()) {
    throw ContractViolation(fmt::format("network expects {} inputs, got {}", net.inputs(), x.rows()));
  }
  MatrixXd v = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Layer& L = net.layers[l];
    MatrixXd z = L.weight * v;
    z.colwise() += L.bias;
    v = l + 1 < net.layers.size() ? MatrixXd(z.cwiseMax(0.0)) : z;
  }
  return v;
}

VectorXd forward(const SparseNet& net, const VectorXd& x) {
  return forward(net, MatrixXd(x)).col(0);
}

VectorXd predict(const SparseNet& net, const VectorXd& x_physical) {
  const Scaling& s = net.scaling;
  const VectorXd z = (x_physical - s.x_min).cwiseQuotient(s.x_range);
  const VectorXd y = forward(net, z);
  return s.y_min + y.cwiseProduct(s.y_range);
}

LossGrad loss_and_grads(const SparseNet& net, const MatrixXd& x, const MatrixXd& y) {
  if (x.cols() == 0 || x.cols() != y.cols()) throw ContractViolation("batch must be nonempty and aligned");
  if (x.rows() != net.inputs() || y.rows() != net.outputs()) {
    throw ContractViolation("batch dimensions do not match the network");
  }
  const std::size_t n_layers = net.layers.size();
  std::vector<MatrixXd> act(n_layers + 1);  // act[l] feeds layer l
  std::vector<MatrixXd> pre(n_layers);
  act[0] = x;
  for (std::size_t l = 0; l < n_layers; ++l) {
    pre[l] = net.layers[l].weight * act[l];
    pre[l].colwise() += net.layers[l].bias;
    act[l + 1] = l + 1 < n_layers ? MatrixXd(pre[l].cwiseMax(0.0)) : pre[l];
  }
  const MatrixXd diff = act[n_layers] - y;
  LossGrad out;
  out.loss = diff.squaredNorm();
  out.grads.weight.resize(n_layers);
  out.grads.bias.resize(n_layers);
  MatrixXd delta = 2.0 * diff;
  for (std::size_t l = n_layers; l-- > 0;) {
    out.grads.weight[l] = delta * act[l].transpose();
    out.grads.bias[l] = delta.rowwise().sum();
    if (l > 0) {
      delta = (net.layers[l].weight.transpose() * delta).cwiseProduct(
          (pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractViolation("learning rate must be positive");
  if (batch_size < 1) throw ContractViolation("batch size must be at least 1");
  if (epochs < 1) throw ContractViolation("epochs must be at least 1");
  if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) {
    throw ContractViolation("final learning-rate fraction must lie in (0, 1]");
  }
  if (update_interval < 1) throw ContractViolation("update interval must be at least 1");
  if (!(drop_fraction > 0.0 && drop_fraction < 1.0)) {
    throw ContractViolation("drop fraction must lie in (0, 1)");
  }
  if (!(end_fraction > 0.0 && end_fraction <= 1.0)) {
    throw ContractViolation("end fraction must lie in (0, 1]");
  }
}

Adam::Adam(const SparseNet& net) {
  for (const Layer& L : net.layers) {
    m_w_.push_back(MatrixXd::Zero(L.weight.rows(), L.weight.cols()));
    v_w_.push_back(MatrixXd::Zero(L.weight.rows(), L.weight.cols()));
    m_b_.push_back(VectorXd::Zero(L.bias.size()));
    v_b_.push_back(VectorXd::Zero(L.bias.size()));
  }
}

void Adam::step(SparseNet& net, const Gradients& g, const TrainConfig& cfg) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
  const double lr = cfg.learning_rate;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Layer& L = net.layers[l];
    // Inactive moments are kept at zero so a regrown connection starts fresh.
    m_w_[l] = (cfg.beta1 * m_w_[l] + (1.0 - cfg.beta1) * g.weight[l]).cwiseProduct(L.mask);
    v_w_[l] = (cfg.beta2 * v_w_[l] + (1.0 - cfg.beta2) * g.weight[l].cwiseAbs2()).cwiseProduct(L.mask);
    L.weight.array() -= lr * (m_w_[l].array() / c1) / ((v_w_[l].array() / c2).sqrt() + cfg.epsilon);
    L.weight = L.weight.cwiseProduct(L.mask);
    m_b_[l] = cfg.beta1 * m_b_[l] + (1.0 - cfg.beta1) * g.bias[l];
    v_b_[l] = cfg.beta2 * v_b_[l] + (1.0 - cfg.beta2) * g.bias[l].cwiseAbs2();
    L.bias.array() -= lr * (m_b_[l].array() / c1) / ((v_b_[l].array() / c2).sqrt() + cfg.epsilon);
  }
}

void sgd_step(SparseNet& net, const Gradients& g, double learning_rate) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Layer& L = net.layers[l];
    L.weight -= learning_rate * g.weight[l].cwiseProduct(L.mask);
    L.bias -= learning_rate * g.bias[l];
  }
}

double decay_fraction(long t, double alpha, long t_end) {
  if (t < 0 || t_end <= 0 || t > t_end) {
    throw ContractViolation(fmt::format("update schedule ended (t = {}, t_end = {})", t, t_end));
  }
  return alpha / 2.0 * (1.0 + std::cos(static_cast<double>(t) * std::numbers::pi / static_cast<double>(t_end)));
}

std::vector<Index> arg_smallest(const std::vector<double>& values, Index k) {
  std::vector<Index> idx(values.size());
  std::iota(idx.begin(), idx.end(), Index{0});
  k = std::clamp<Index>(k, 0, static_cast<Index>(values.size()));
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](Index a, Index b) {
    const double va = values[static_cast<std::size_t>(a)], vb = values[static_cast<std::size_t>(b)];
    return va < vb || (va == vb && a < b);
  });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

DropGrowEvent drop_and_grow(SparseNet& net, const Gradients& g, long t, long t_end, double alpha) {
  const double f = decay_fraction(t, alpha, t_end);
  DropGrowEvent ev;
  ev.step = t;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Layer& L = net.layers[l];
    const Index before = L.active();
    ev.active_before.push_back(before);
    if (l == 0 || L.sparsity <= 0.0) {
      ev.swapped.push_back(0);
      ev.active_after.push_back(before);
      continue;
    }
    const Index cols = L.weight.cols();
    const Index total = L.size();
    // N is the layer's active connection count.
    const auto k = static_cast<Index>(std::floor(f * (1.0 - L.sparsity) * static_cast<double>(before)));
    // Row-major flat indices; masked-out entries never win the drop.
    std::vector<double> drop_key(static_cast<std::size_t>(total));
    for (Index p = 0; p < total; ++p) {
      const Index r = p / cols, c = p % cols;
      drop_key[static_cast<std::size_t>(p)] =
          L.mask(r, c) != 0.0 ? std::abs(L.weight(r, c)) : std::numeric_limits<double>::infinity();
    }
    const std::vector<Index> dropped = arg_smallest(drop_key, k);
    for (Index p : dropped) {
      L.mask(p / cols, p % cols) = 0.0;
      L.weight(p / cols, p % cols) = 0.0;
    }
    std::vector<double> grow_key(static_cast<std::size_t>(total));
    for (Index p = 0; p < total; ++p) {
      const Index r = p / cols, c = p % cols;
      grow_key[static_cast<std::size_t>(p)] =
          L.mask(r, c) == 0.0 ? -std::abs(g.weight[l](r, c)) : std::numeric_limits<double>::infinity();
    }
    const Index pool = total - L.active();
    const std::vector<Index> grown = arg_smallest(grow_key, std::min(k, pool));
    for (Index p : grown) {
      L.mask(p / cols, p % cols) = 1.0;
      L.weight(p / cols, p % cols) = 0.0;
    }
    for (Index p : grown) ev.grown_zero = ev.grown_zero && L.weight(p / cols, p % cols) == 0.0;
    ev.swapped.push_back(k);
    ev.active_after.push_back(L.active());
  }
  return ev;
}

TrainResult train_ssgd(const MatrixXd& x, const MatrixXd& y, const std::vector<int>& dims,
                       const std::vector<double>& sparsity, const TrainConfig& cfg) {
  cfg.validate();
  if (x.cols() == 0 || x.cols() != y.cols()) throw ContractViolation("training set is empty or misaligned");
  if (dims.front() != x.rows() || dims.back() != y.rows()) {
    throw ContractViolation("network dims do not match the dataset widths");
  }
  TrainResult res{make_net(dims, sparsity, cfg.seed), {}};
  SparseNet& net = res.net;
  const bool has_sparse = std::any_of(net.layers.begin() + 1, net.layers.end(),
                                      [](const Layer& L) { return L.sparsity > 0.0; });
  const bool events = has_sparse && cfg.sparse_updates;
  const Index n = x.cols();
  const Index per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const long total = static_cast<long>(per_epoch) * cfg.epochs;
  const auto t_end = std::max<long>(1, static_cast<long>(std::floor(cfg.end_fraction * static_cast<double>(total))));
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Adam adam(net);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  long t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index b = std::min<Index>(cfg.batch_size, n - start);
      MatrixXd xb(x.rows(), b), yb(y.rows(), b);
      for (Index j = 0; j < b; ++j) {
        xb.col(j) = x.col(order[static_cast<std::size_t>(start + j)]);
        yb.col(j) = y.col(order[static_cast<std::size_t>(start + j)]);
      }
      ++t;
      LossGrad lg = loss_and_grads(net, xb, yb);
      if (!std::isfinite(lg.loss)) {
        throw NumericalError(fmt::format(
            "non-finite training loss at step {} (epoch {}); learning rate {} is likely too large",
            t, epoch, cfg.learning_rate));
      }
      epoch_loss += lg.loss;
      TrainConfig step_cfg = cfg;
      step_cfg.learning_rate = cfg.learning_rate *
          (cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * 0.5 *
                                       (1.0 + std::cos(std::numbers::pi * static_cast<double>(t - 1) /
                                                       static_cast<double>(total))));
      if (events && t % cfg.update_interval == 0 && t <= t_end) {
        res.record.events.push_back(drop_and_grow(net, lg.grads, t, t_end, cfg.drop_fraction));
      } else if (cfg.use_adam) {
        adam.step(net, lg.grads, step_cfg);
      } else {
        sgd_step(net, lg.grads, step_cfg.learning_rate);
      }
    }
    res.record.epoch_loss.push_back(epoch_loss / static_cast<double>(n * y.rows()));
  }
  res.record.steps = t;
  return res;
}

Metrics metrics_of(const MatrixXd& prediction, const MatrixXd& target) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols() || target.size() == 0) {
    throw ContractViolation("metrics need aligned, nonempty prediction and target");
  }
  Metrics m;
  const MatrixXd err = prediction - target;
  const auto count = static_cast<double>(target.size());
  const double ss_res = err.squaredNorm();
  m.mse = ss_res / count;
  m.rmse = std::sqrt(m.mse);
  const VectorXd mean = target.rowwise().mean();
  const double ss_tot = (target.colwise() - mean).squaredNorm();
  m.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  double ape = 0.0;
  long used = 0;
  for (Index j = 0; j < target.cols(); ++j) {
    for (Index i = 0; i < target.rows(); ++i) {
      if (target(i, j) == 0.0) {
        ++m.mape_skipped;
        continue;
      }
      ape += std::abs(err(i, j) / target(i, j));
      ++used;
    }
  }
  m.mape = used > 0 ? ape / static_cast<double>(used) : 0.0;
  return m;
}

Metrics eval_metrics(const SparseNet& net, const MatrixXd& x, const MatrixXd& y) {
  const Scaling& s = net.scaling;
  MatrixXd z = x.colwise() - s.x_min;
  z = s.x_range.cwiseInverse().asDiagonal() * z;
  MatrixXd pred = s.y_range.asDiagonal() * forward(net, z);
  pred.colwise() += s.y_min;
  return metrics_of(pred, y);
}

double sparsity_rate(const SparseNet& net) {
  double total = 0.0, inactive = 0.0;
  for (const Layer& L : net.layers) {
    total += static_cast<double>(L.size());
    inactive += static_cast<double>(L.size() - L.active());
  }
  return total > 0.0 ? inactive / total : 0.0;
}

namespace {

std::vector<double> to_vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

VectorXd from_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

json core_json(const SparseNet& net) {
  json layers = json::array();
  for (const Layer& L : net.layers) {
    json triplets = json::array();
    for (Index r = 0; r < L.weight.rows(); ++r) {
      for (Index c = 0; c < L.weight.cols(); ++c) {
        if (L.mask(r, c) != 0.0) triplets.push_back({r, c, L.weight(r, c)});
      }
    }
    layers.push_back({{"sparsity", L.sparsity}, {"bias", to_vec(L.bias)}, {"weights", triplets}});
  }
  return {{"format", "cefopt-net"},
          {"version", 1},
          {"dims", net.dims},
          {"layers", layers},
          {"scaling",
           {{"x_min", to_vec(net.scaling.x_min)},
            {"x_range", to_vec(net.scaling.x_range)},
            {"y_min", to_vec(net.scaling.y_min)},
            {"y_range", to_vec(net.scaling.y_range)}}}};
}

}  // namespace

std::string content_hash(const SparseNet& net) { return util::sha256_hex(core_json(net).dump()); }

std::string to_json(const SparseNet& net) {
  json j = core_json(net);
  j["case_hash"] = net.case_hash;
  j["dataset_hash"] = net.dataset_hash;
  j["seed"] = net.seed;
  j["content_hash"] = content_hash(net);
  return j.dump(1);
}

SparseNet from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("model file: {}", e.what()));
  }
  try {
    if (j.at("format") != "cefopt-net") throw ParseError("model file: unexpected format tag");
    SparseNet net;
    net.dims = j.at("dims").get<std::vector<int>>();
    const json& layers = j.at("layers");
    if (layers.size() + 1 != net.dims.size()) throw ParseError("model file: layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Layer L;
      L.sparsity = layers[l].at("sparsity").get<double>();
      L.weight = MatrixXd::Zero(net.dims[l + 1], net.dims[l]);
      L.mask = L.weight;
      L.bias = from_vec(layers[l].at("bias"));
      for (const json& t : layers[l].at("weights")) {
        const auto r = t.at(0).get<Index>(), c = t.at(1).get<Index>();
        if (r < 0 || c < 0 || r >= L.weight.rows() || c >= L.weight.cols()) {
          throw ParseError(fmt::format("model file: layer {} triplet out of range", l));
        }
        L.mask(r, c) = 1.0;
        L.weight(r, c) = t.at(2).get<double>();
      }
      net.layers.push_back(std::move(L));
    }
    const json& s = j.at("scaling");
    net.scaling = {from_vec(s.at("x_min")), from_vec(s.at("x_range")), from_vec(s.at("y_min")),
                   from_vec(s.at("y_range"))};
    net.case_hash = j.value("case_hash", "");
    net.dataset_hash = j.value("dataset_hash", "");
    net.seed = j.value("seed", std::uint64_t{0});
    net.check();
    if (j.contains("content_hash") && j["content_hash"] != content_hash(net)) {
      throw ParseError("model file: content hash mismatch");
    }
    return net;
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("model file: {}", e.what()));
  } catch (const ContractViolation& e) {
    throw ParseError(fmt::format("model file: {}", e.what()));
  }
}

void save_net(const SparseNet& net, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw Error(fmt::format("cannot write {}", path.string()));
  f << to_json(net) << '\n';
}

SparseNet load_net(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ParseError(fmt::format("cannot open model file {}", path.string()));
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json(ss.str());
}

}  // namespace cefopt::snn
