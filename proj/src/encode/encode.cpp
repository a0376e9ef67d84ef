#include "cefopt/encode/encode.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <optional>

#include "cefopt/error.hpp"

namespace cefopt::encode {

using Eigen::Index;
using Eigen::VectorXd;
using milp::LinExpr;
using milp::Model;
using milp::Var;

NeuronClass LayerBounds::classify(Index i) const {
  if (upper(i) <= 0.0) return NeuronClass::AlwaysOff;
  if (lower(i) >= 0.0) return NeuronClass::AlwaysOn;
  return NeuronClass::Unstable;
}

std::vector<LayerBounds> propagate_bounds(const snn::SparseNet& net, const VectorXd& lo,
                                          const VectorXd& hi, double padding) {
  if (lo.size() != net.inputs() || hi.size() != net.inputs()) {
    throw ContractViolation("input box does not match the network input width");
  }
  if (!lo.allFinite() || !hi.allFinite() || (lo.array() > hi.array()).any()) {
    throw ContractViolation("input box must be finite with lo <= hi");
  }
  std::vector<LayerBounds> out;
  VectorXd a_lo = lo, a_hi = hi;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const snn::Layer& L = net.layers[l];
    const Eigen::MatrixXd pos = L.weight.cwiseMax(0.0);
    const Eigen::MatrixXd neg = L.weight.cwiseMin(0.0);
    LayerBounds b;
    b.lower = (pos * a_lo + neg * a_hi + L.bias).array() - padding;
    b.upper = (pos * a_hi + neg * a_lo + L.bias).array() + padding;
    a_lo = b.lower.cwiseMax(0.0);
    a_hi = b.upper.cwiseMax(0.0);
    out.push_back(std::move(b));
  }
  return out;
}

ReluEncoding encode_relu(Model& model, Var x, double lower, double upper, const std::string& name) {
  if (lower > upper) throw ContractViolation(fmt::format("{}: lower bound exceeds upper bound", name));
  if (!model.has_var(x)) throw BuilderError(fmt::format("{}: unregistered pre-activation", name));
  ReluEncoding e;
  if (upper <= 0.0) {
    e.cls = NeuronClass::AlwaysOff;
    e.value = LinExpr(0.0);
    return e;
  }
  if (lower >= 0.0) {
    e.cls = NeuronClass::AlwaysOn;
    e.value = LinExpr(x);
    return e;
  }
  e.cls = NeuronClass::Unstable;
  const Var v = model.add_var(name + "_v", 0.0, upper);
  e.binary = model.add_binary(name + "_z");
  model.add_ge(v, x, name + "_lo");
  // v <= x - lower (1 - z)
  model.add_le(LinExpr(v) - x - lower * LinExpr(e.binary), -lower, name + "_act");
  model.add_le(v, upper * LinExpr(e.binary), name + "_off");
  e.value = LinExpr(v);
  return e;
}

namespace {

// LP relaxation of a subset of the host rows, kept in step with the host as
// layers are appended. Only variables that appear in copied rows or queried
// expressions are mirrored, with their host bounds and binaries relaxed.
class RelaxedMirror {
 public:
  RelaxedMirror(const Model& host, const Tightening& t)
      : host_(host), lp_(t.lp), index_(static_cast<std::size_t>(host.num_vars()), -1), synced_rows_(host.num_rows()) {
    for (int i : t.context_rows) copy_row(host.row(i));
  }

  void sync() {
    for (; synced_rows_ < host_.num_rows(); ++synced_rows_) copy_row(host_.row(synced_rows_));
  }

  // Returns false when the LP does not reach optimality.
  bool range(const LinExpr& e, double& lo, double& hi) {
    const LinExpr mapped = map(e);
    double v[2];
    const milp::ObjSense senses[2] = {milp::ObjSense::Minimize, milp::ObjSense::Maximize};
    for (int k = 0; k < 2; ++k) {
      aux_.set_objective(senses[k], mapped);
      milp::SolveResult r;
      try {
        r = milp::lp_solve(aux_, lp_);
      } catch (const NumericalError&) {
        return false;
      }
      if (r.status == milp::SolveStatus::Infeasible) {
        throw InfeasibleModel("bound tightening: the context rows admit no point");
      }
      if (r.status != milp::SolveStatus::Optimal) return false;
      v[k] = r.objective;
    }
    lo = v[0];
    hi = v[1];
    return true;
  }

 private:
  Var aux_var(int j) {
    if (static_cast<std::size_t>(j) >= index_.size()) index_.resize(static_cast<std::size_t>(host_.num_vars()), -1);
    int& a = index_[static_cast<std::size_t>(j)];
    if (a < 0) {
      const milp::Variable& v = host_.var(j);
      a = aux_.add_var(v.name, v.lower, v.upper).index;
    }
    return Var{a};
  }
  LinExpr map(const LinExpr& e) {
    LinExpr out(e.constant());
    for (const milp::Term& t : e.terms()) out.add(aux_var(t.var), t.coef);
    return out;
  }
  void copy_row(const milp::Constraint& c) {
    LinExpr lhs;
    for (const milp::Term& t : c.terms) lhs.add(aux_var(t.var), t.coef);
    aux_.add_constraint(lhs, c.sense, c.rhs, c.name);
  }

  const Model& host_;
  milp::LpOptions lp_;
  Model aux_{"tightening"};
  std::vector<int> index_;  // host variable -> mirror variable, -1 when absent
  int synced_rows_;
};

double pad(double v) { return kBoundPadding * (1.0 + std::abs(v)); }

}  // namespace

EncodedNet encode_network(Model& model, const snn::SparseNet& net, const std::vector<LinExpr>& inputs,
                          const VectorXd& lo, const VectorXd& hi, const std::string& name,
                          const Tightening* tightening) {
  net.check();
  if (static_cast<int>(inputs.size()) != net.inputs()) {
    throw ContractViolation(
        fmt::format("{}: network expects {} inputs, got {}", name, net.inputs(), inputs.size()));
  }
  const snn::Scaling& s = net.scaling;
  if (s.x_min.size() != net.inputs() || s.y_min.size() != net.outputs()) {
    throw ContractViolation(fmt::format("{}: network has no stored scaling", name));
  }
  if (lo.size() != net.inputs() || hi.size() != net.inputs() || !lo.allFinite() || !hi.allFinite() ||
      (lo.array() > hi.array()).any()) {
    throw ContractViolation(fmt::format("{}: input box must be finite with lo <= hi", name));
  }
  const std::size_t nz_before = model.nonzeros();
  EncodedNet enc;
  std::optional<RelaxedMirror> mirror;
  if (tightening != nullptr) mirror.emplace(model, *tightening);
  std::vector<LinExpr> act;
  for (int i = 0; i < net.inputs(); ++i) {
    const Var z = model.add_var(fmt::format("{}_in{}", name, i), lo(i), hi(i));
    model.add_eq(inputs[static_cast<std::size_t>(i)], s.x_min(i) + s.x_range(i) * LinExpr(z),
                 fmt::format("{}_norm{}", name, i));
    enc.inputs.push_back(z);
    act.emplace_back(z);
  }

  auto affine = [&](const snn::Layer& L, Index row) {
    LinExpr e;
    for (Index c = 0; c < L.weight.cols(); ++c) {
      if (L.mask(row, c) != 0.0 && L.weight(row, c) != 0.0) e += L.weight(row, c) * act[static_cast<std::size_t>(c)];
    }
    return e;
  };
  // Interval propagation from the current activation bounds, then LP tightening.
  VectorXd a_lo = lo, a_hi = hi;
  auto layer_bounds = [&](const snn::Layer& L) {
    const Eigen::MatrixXd pos = L.weight.cwiseMax(0.0);
    const Eigen::MatrixXd neg = L.weight.cwiseMin(0.0);
    LayerBounds b;
    b.lower = (pos * a_lo + neg * a_hi + L.bias).array() - kBoundPadding;
    b.upper = (pos * a_hi + neg * a_lo + L.bias).array() + kBoundPadding;
    if (mirror) {
      mirror->sync();
      for (Index j = 0; j < L.weight.rows(); ++j) {
        if (b.upper(j) <= 0.0) continue;  // already off
        double l = 0.0, u = 0.0;
        if (!mirror->range(affine(L, j) + L.bias(j), l, u)) continue;
        b.lower(j) = std::max(b.lower(j), l - pad(l));
        b.upper(j) = std::max(b.lower(j), std::min(b.upper(j), u + pad(u)));
      }
    }
    return b;
  };

  const std::size_t n_layers = net.layers.size();
  for (std::size_t l = 0; l + 1 < n_layers; ++l) {
    const snn::Layer& L = net.layers[l];
    const LayerBounds b = layer_bounds(L);
    std::vector<LinExpr> next;
    std::vector<Var> binary(static_cast<std::size_t>(L.weight.rows()));
    for (Index j = 0; j < L.weight.rows(); ++j) {
      ++enc.hidden;
      const std::string nn = fmt::format("{}_l{}n{}", name, l + 1, j);
      if (b.classify(j) == NeuronClass::AlwaysOff) {
        next.emplace_back(0.0);
        continue;
      }
      const Var x = model.add_var(nn + "_x", b.lower(j), b.upper(j));
      model.add_eq(LinExpr(x) - affine(L, j), L.bias(j), nn + "_aff");
      const ReluEncoding r = encode_relu(model, x, b.lower(j), b.upper(j), nn);
      if (r.cls == NeuronClass::Unstable) {
        ++enc.unstable;
        ++enc.binaries;
        binary[static_cast<std::size_t>(j)] = r.binary;
      }
      next.push_back(r.value);
    }
    act = std::move(next);
    enc.relu_binary.push_back(std::move(binary));
    a_lo = b.lower.cwiseMax(0.0);
    a_hi = b.upper.cwiseMax(0.0);
    enc.bounds.push_back(b);
  }
  const snn::Layer& out = net.layers.back();
  LayerBounds ob = layer_bounds(out);
  enc.output_lo = s.y_min + ob.lower.cwiseProduct(s.y_range);
  enc.output_hi = s.y_min + ob.upper.cwiseProduct(s.y_range);
  for (Index j = 0; j < out.weight.rows(); ++j) {
    const Var y = model.add_var(fmt::format("{}_out{}", name, j), enc.output_lo(j), enc.output_hi(j));
    model.add_eq(LinExpr(y) - s.y_range(j) * affine(out, j), s.y_min(j) + s.y_range(j) * out.bias(j),
                 fmt::format("{}_outaff{}", name, j));
    enc.outputs.push_back(y);
  }
  enc.bounds.push_back(std::move(ob));
  enc.nonzeros = model.nonzeros() - nz_before;
  return enc;
}

VectorXd activation_start(const snn::SparseNet& net, const EncodedNet& enc, const VectorXd& x_physical,
                          std::vector<double>& start) {
  const snn::Scaling& s = net.scaling;
  VectorXd a = (x_physical - s.x_min).cwiseQuotient(s.x_range);
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
    const snn::Layer& L = net.layers[l];
    const VectorXd pre = L.weight.cwiseProduct(L.mask) * a + L.bias;
    const std::vector<Var>& binary = enc.relu_binary.at(l);
    for (Index j = 0; j < pre.size(); ++j) {
      const Var z = binary[static_cast<std::size_t>(j)];
      if (z.valid()) start.at(static_cast<std::size_t>(z.index)) = pre(j) > 0.0 ? 1.0 : 0.0;
    }
    a = pre.cwiseMax(0.0);
  }
  const snn::Layer& out = net.layers.back();
  return s.y_min + s.y_range.cwiseProduct(out.weight.cwiseProduct(out.mask) * a + out.bias);
}

namespace {

bool has_exclusion_row(const Model& model, Var a, Var b) {
  for (const milp::Constraint& c : model.rows()) {
    if (c.sense != milp::Sense::LessEqual || c.rhs != 1.0 || c.terms.size() != 2) continue;
    const bool match = (c.terms[0].var == std::min(a.index, b.index) &&
                        c.terms[1].var == std::max(a.index, b.index) && c.terms[0].coef == 1.0 &&
                        c.terms[1].coef == 1.0);
    if (match) return true;
  }
  return false;
}

// part = f while `open` is 1, part = 0 while it is 0.
Var gated_part(Model& model, const LinExpr& f, double f_lo, double f_hi, const LinExpr& open,
               double m_low, double m_high, const std::string& name) {
  const Var g = model.add_var(name, std::min(0.0, m_low), std::max(0.0, m_high));
  model.add_ge(g, m_low * open, name + "_mlo");
  model.add_le(g, m_high * open, name + "_mhi");
  const LinExpr closed = LinExpr(1.0) - open;
  model.add_ge(g, f - f_hi * closed, name + "_flo");
  model.add_le(g, f - f_lo * closed, name + "_fhi");
  return g;
}

}  // namespace

EsGate encode_es_gate(Model& model, const GateBranch& dis, const GateBranch& cha, const LinExpr* carry,
                      double m_low, double m_high, const std::string& name) {
  if (!model.has_var(dis.indicator) || !model.has_var(cha.indicator)) {
    throw BuilderError(fmt::format("{}: unregistered indicator", name));
  }
  if (!has_exclusion_row(model, dis.indicator, cha.indicator)) {
    throw BuilderError(fmt::format("{}: missing mutual-exclusion row for the indicators", name));
  }
  if (m_low > m_high || dis.f_lo > dis.f_hi || cha.f_lo > cha.f_hi) {
    throw ContractViolation(fmt::format("{}: inconsistent gate bounds", name));
  }
  EsGate g;
  g.e_dis = gated_part(model, dis.f, dis.f_lo, dis.f_hi, LinExpr(dis.indicator), m_low, m_high, name + "_dis");
  g.e_cha = gated_part(model, cha.f, cha.f_lo, cha.f_hi, LinExpr(cha.indicator), m_low, m_high, name + "_cha");
  LinExpr sum = LinExpr(g.e_dis) + LinExpr(g.e_cha);
  if (carry != nullptr) {
    const LinExpr idle = LinExpr(1.0) - LinExpr(dis.indicator) - LinExpr(cha.indicator);
    g.e_idle = gated_part(model, *carry, m_low, m_high, idle, m_low, m_high, name + "_idle");
    sum += LinExpr(g.e_idle);
  }
  g.e_es = model.add_var(name, std::min(0.0, m_low), std::max(0.0, m_high));
  model.add_eq(g.e_es, sum, name + "_sum");
  return g;
}

}  // namespace cefopt::encode
