#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "cefopt/milp/model.hpp"
#include "cefopt/milp/solve.hpp"
#include "cefopt/snn/net.hpp"

namespace cefopt::encode {

enum class NeuronClass { AlwaysOff, AlwaysOn, Unstable };

/// Pre-activation bounds of one layer.
struct LayerBounds {
  Eigen::VectorXd lower, upper;
  NeuronClass classify(Eigen::Index i) const;
};

/// Absolute slack added to every propagated bound.
inline constexpr double kBoundPadding = 1e-6;

/// Interval propagation over a normalized input box; one entry per weight
/// layer (the last entry bounds the normalized outputs).
std::vector<LayerBounds> propagate_bounds(const snn::SparseNet& net, const Eigen::VectorXd& lo,
                                          const Eigen::VectorXd& hi, double padding = kBoundPadding);

struct ReluEncoding {
  milp::LinExpr value;  // v, as an expression (0 when off, x when on)
  milp::Var binary;     // invalid unless the neuron is unstable
  NeuronClass cls = NeuronClass::Unstable;
};

/// Big-M encoding of v = max(0, x) given sound bounds lower <= x <= upper.
ReluEncoding encode_relu(milp::Model& model, milp::Var x, double lower, double upper,
                         const std::string& name);

struct EncodedNet {
  std::vector<milp::Var> inputs;   // normalized input variables
  std::vector<milp::Var> outputs;  // physical-unit outputs
  std::vector<LayerBounds> bounds;
  std::vector<std::vector<milp::Var>> relu_binary;  // [hidden layer][neuron], invalid unless unstable
  Eigen::VectorXd output_lo, output_hi;  // physical output bounds
  int binaries = 0;
  int unstable = 0;
  int hidden = 0;
  std::size_t nonzeros = 0;  // coefficients added by this encoding
};

/// LP-based bound tightening. Every pre-activation and output bound is also
/// minimized and maximized over the LP relaxation of the chosen host rows plus
/// the layers encoded so far, and intersected with interval propagation.
struct Tightening {
  std::vector<int> context_rows;
  milp::LpOptions lp;
};

/// Embeds the network. Inputs are physical-unit expressions; normalized input
/// variables are bounded by the normalized box [lo, hi].
EncodedNet encode_network(milp::Model& model, const snn::SparseNet& net,
                          const std::vector<milp::LinExpr>& inputs, const Eigen::VectorXd& lo,
                          const Eigen::VectorXd& hi, const std::string& name,
                          const Tightening* tightening = nullptr);

/// Writes the activation pattern of the forward pass at x_physical into the
/// binaries of `start` (one value per model variable) and returns the
/// physical output.
Eigen::VectorXd activation_start(const snn::SparseNet& net, const EncodedNet& enc,
                                 const Eigen::VectorXd& x_physical, std::vector<double>& start);

/// One gated storage-intensity branch: the network output f with its sound
/// bounds and the indicator that opens the gate.
struct GateBranch {
  milp::LinExpr f;
  double f_lo = 0.0, f_hi = 0.0;
  milp::Var indicator;
};

struct EsGate {
  milp::Var e_es, e_dis, e_cha, e_idle;
};

/// e_es = e_dis + e_cha (+ e_idle when `carry` is given): each part equals its
/// branch value while the indicator is 1 and 0 otherwise; intensities while
/// open are bounded by [m_low, m_high]. The idle part carries the previous
/// intensity when neither indicator is set. Requires a row mu_dis + mu_cha <= 1.
EsGate encode_es_gate(milp::Model& model, const GateBranch& dis, const GateBranch& cha,
                      const milp::LinExpr* carry, double m_low, double m_high,
                      const std::string& name);

}  // namespace cefopt::encode
