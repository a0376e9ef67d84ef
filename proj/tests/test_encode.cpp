#include <doctest.h>

#include <random>

#include "cefopt/encode/encode.hpp"
#include "cefopt/error.hpp"
#include "cefopt/milp/solve.hpp"
#include "oracles/naive_net.hpp"

using namespace cefopt;
using namespace cefopt::encode;
using milp::LinExpr;
using milp::Model;
using milp::Var;
using Eigen::VectorXd;

namespace {

// Physical x in [-2, 3] per input, y scaled by 10 around -1.
snn::SparseNet scaled_net(const std::vector<int>& dims, const std::vector<double>& sparsity, std::uint64_t seed) {
  snn::SparseNet net = snn::make_net(dims, sparsity, seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-0.3, 0.3);
  for (snn::Layer& L : net.layers) {
    for (Eigen::Index i = 0; i < L.bias.size(); ++i) L.bias(i) = U(rng);
  }
  net.scaling = {VectorXd::Constant(net.inputs(), -2.0), VectorXd::Constant(net.inputs(), 5.0),
                 VectorXd::Constant(net.outputs(), -1.0), VectorXd::Constant(net.outputs(), 10.0)};
  return net;
}

struct Embedded {
  Model model{"embed"};
  std::vector<Var> x;
  EncodedNet enc;
};

Embedded embed(const snn::SparseNet& net, bool tighten) {
  Embedded e;
  std::vector<LinExpr> in;
  for (int i = 0; i < net.inputs(); ++i) {
    e.x.push_back(e.model.add_var("x" + std::to_string(i), -2.0, 3.0));
    in.emplace_back(e.x.back());
  }
  const Tightening tg;
  e.enc = encode_network(e.model, net, in, VectorXd::Zero(net.inputs()), VectorXd::Ones(net.inputs()), "net",
                         tighten ? &tg : nullptr);
  return e;
}

// Fixes the physical inputs and minimizes the output sum.
VectorXd solve_fixed(Embedded& e, const VectorXd& x_physical) {
  for (std::size_t i = 0; i < e.x.size(); ++i) e.model.fix(e.x[i], x_physical(static_cast<Eigen::Index>(i)));
  LinExpr obj;
  for (Var y : e.enc.outputs) obj += LinExpr(y);
  e.model.set_objective(milp::ObjSense::Minimize, obj);
  const milp::SolveResult r = milp::bb_solve(e.model);
  REQUIRE(r.status == milp::SolveStatus::Optimal);
  VectorXd y(static_cast<Eigen::Index>(e.enc.outputs.size()));
  for (std::size_t j = 0; j < e.enc.outputs.size(); ++j) {
    y(static_cast<Eigen::Index>(j)) = r.values[static_cast<std::size_t>(e.enc.outputs[j].index)];
  }
  return y;
}

VectorXd random_input(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> U(-2.0, 3.0);
  VectorXd x(n);
  for (int i = 0; i < n; ++i) x(i) = U(rng);
  return x;
}

}  // namespace

TEST_CASE("bounds: interval arithmetic examples") {
  snn::SparseNet net = snn::make_net({2, 1}, {0.0}, 1);
  net.layers[0].weight << 1.0, -1.0;
  net.layers[0].bias << 0.0;
  const auto b = propagate_bounds(net, VectorXd::Zero(2), VectorXd::Ones(2), 0.0);
  CHECK(b[0].lower(0) == -1.0);
  CHECK(b[0].upper(0) == 1.0);

  net.layers[0].weight << 0.5, 2.0;
  net.layers[0].bias << 0.25;
  const auto p = propagate_bounds(net, VectorXd::Zero(2), VectorXd::Ones(2), 0.0);
  CHECK(p[0].lower(0) == 0.25);
  CHECK(p[0].upper(0) == 2.75);
  CHECK(p[0].classify(0) == NeuronClass::AlwaysOn);
  CHECK_THROWS_AS(propagate_bounds(net, VectorXd::Ones(2), VectorXd::Zero(2)), ContractViolation);
}

TEST_CASE("bounds: Monte-Carlo samples stay inside the propagated box") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const snn::SparseNet net = scaled_net({4, 12, 8, 3}, {0.0, 0.5, 0.3}, 17);
  const auto bounds = propagate_bounds(net, VectorXd::Zero(4), VectorXd::Ones(4));
  long violations = 0;
  for (int k = 0; k < 100000; ++k) {
    VectorXd a(4);
    for (int i = 0; i < 4; ++i) a(i) = U(rng);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      const VectorXd pre = net.layers[l].weight * a + net.layers[l].bias;
      violations += ((pre.array() < bounds[l].lower.array()) || (pre.array() > bounds[l].upper.array())).count();
      a = pre.cwiseMax(0.0);
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("relu: active, clamped and stabilized neurons") {
  for (const double fixed : {3.0, -2.0}) {
    Model m("relu");
    const Var x = m.add_var("x", -5.0, 5.0);
    m.fix(x, fixed);
    const ReluEncoding r = encode_relu(m, x, -5.0, 5.0, "n");
    REQUIRE(r.cls == NeuronClass::Unstable);
    for (const milp::ObjSense sense : {milp::ObjSense::Minimize, milp::ObjSense::Maximize}) {
      m.set_objective(sense, r.value);
      const milp::SolveResult s = milp::bb_solve(m);
      REQUIRE(s.status == milp::SolveStatus::Optimal);
      CHECK(std::abs(s.objective - std::max(0.0, fixed)) <= 1e-9);
      CHECK(s.values[static_cast<std::size_t>(r.binary.index)] == (fixed > 0.0 ? 1.0 : 0.0));
    }
  }
  Model m("stable");
  const Var x = m.add_var("x", -4.0, -1.0);
  const int before = m.num_vars();
  const ReluEncoding off = encode_relu(m, x, -4.0, -1.0, "off");
  CHECK(off.cls == NeuronClass::AlwaysOff);
  CHECK(m.num_vars() == before);
  CHECK(m.num_binaries() == 0);
  CHECK(off.value.terms().empty());
  CHECK(encode_relu(m, x, 1.0, 2.0, "on").cls == NeuronClass::AlwaysOn);
  CHECK_THROWS_AS(encode_relu(m, x, 1.0, -1.0, "bad"), ContractViolation);
}

TEST_CASE("network: fixed inputs reproduce the forward pass") {
  std::mt19937_64 rng(8);
  for (const bool tighten : {false, true}) {
    const snn::SparseNet net = scaled_net({3, 10, 10, 2}, {0.0, 0.5, 0.5}, 31);
    Embedded e = embed(net, tighten);
    for (int k = 0; k < 20; ++k) {
      const VectorXd x = random_input(rng, 3);
      const VectorXd y = solve_fixed(e, x);
      const VectorXd ref = snn::predict(net, x);
      CHECK((y - ref).cwiseAbs().maxCoeff() <= 1e-6);
    }
  }
}

TEST_CASE("network: tightened bounds are sound and no looser") {
  std::mt19937_64 rng(12);
  const snn::SparseNet net = scaled_net({4, 12, 12, 3}, {0.0, 0.5, 0.5}, 5);
  const Embedded loose = embed(net, false);
  const Embedded tight = embed(net, true);
  CHECK(tight.enc.binaries <= loose.enc.binaries);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const LayerBounds& a = loose.enc.bounds[l];
    const LayerBounds& b = tight.enc.bounds[l];
    CHECK((b.lower.array() >= a.lower.array() - 1e-12).all());
    CHECK((b.upper.array() <= a.upper.array() + 1e-12).all());
  }
  long violations = 0;
  for (int k = 0; k < 5000; ++k) {
    VectorXd a = (random_input(rng, 4).array() + 2.0) / 5.0;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      const VectorXd pre = net.layers[l].weight * a + net.layers[l].bias;
      const LayerBounds& b = tight.enc.bounds[l];
      violations += ((pre.array() < b.lower.array()) || (pre.array() > b.upper.array())).count();
      a = pre.cwiseMax(0.0);
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("network: sparse encoding has fewer coefficients than dense") {
  const snn::SparseNet dense = scaled_net({4, 16, 16, 2}, {0.0, 0.0, 0.0}, 3);
  const snn::SparseNet sparse = scaled_net({4, 16, 16, 2}, {0.0, 0.5, 0.5}, 3);
  const Embedded d = embed(dense, false);
  const Embedded s = embed(sparse, false);
  CHECK(s.enc.nonzeros < d.enc.nonzeros);
  for (const Embedded* e : {&d, &s}) {
    CHECK(e->enc.binaries <= e->enc.unstable);
    CHECK(e->enc.unstable <= e->enc.hidden);
    CHECK(e->model.num_binaries() == e->enc.binaries);
  }
}

TEST_CASE("network: stabilized hidden neurons emit no binaries") {
  snn::SparseNet net = scaled_net({3, 6, 6, 2}, {0.0, 0.0, 0.0}, 9);
  net.layers[0].weight = net.layers[0].weight.cwiseAbs();
  net.layers[0].bias.setConstant(0.1);
  net.layers[1].weight = -net.layers[1].weight.cwiseAbs();
  net.layers[1].bias.setConstant(-0.1);
  const Embedded e = embed(net, false);
  CHECK(e.enc.binaries == 0);
  CHECK(e.model.num_binaries() == 0);
  for (const LayerBounds& b : e.enc.bounds) CHECK((b.lower.array() <= b.upper.array()).all());
}

TEST_CASE("network: dimension and scaling contracts") {
  const snn::SparseNet net = scaled_net({3, 4, 1}, {0.0, 0.0}, 2);
  Model m("bad");
  const Var x = m.add_var("x", 0.0, 1.0);
  CHECK_THROWS_AS(encode_network(m, net, {LinExpr(x)}, VectorXd::Zero(3), VectorXd::Ones(3), "n"),
                  ContractViolation);
  snn::SparseNet unscaled = net;
  unscaled.scaling = {};
  const std::vector<LinExpr> in(3, LinExpr(x));
  CHECK_THROWS_AS(encode_network(m, unscaled, in, VectorXd::Zero(3), VectorXd::Ones(3), "n"), ContractViolation);
}

TEST_CASE("activation start: forward pattern is accepted and exact") {
  std::mt19937_64 rng(6);
  const snn::SparseNet net = scaled_net({3, 10, 10, 2}, {0.0, 0.5, 0.5}, 44);
  Embedded e = embed(net, true);
  for (int k = 0; k < 5; ++k) {
    const VectorXd x = random_input(rng, 3);
    std::vector<double> start(static_cast<std::size_t>(e.model.num_vars()), 0.0);
    const VectorXd y = activation_start(net, e.enc, x, start);
    CHECK((y - snn::predict(net, x)).cwiseAbs().maxCoeff() <= 1e-12);
    for (std::size_t i = 0; i < e.x.size(); ++i) e.model.fix(e.x[i], x(static_cast<Eigen::Index>(i)));
    LinExpr obj;
    for (Var v : e.enc.outputs) obj += LinExpr(v);
    e.model.set_objective(milp::ObjSense::Maximize, obj);
    milp::BbOptions opt;
    opt.start = start;
    const milp::SolveResult r = milp::bb_solve(e.model, opt);
    REQUIRE(r.status == milp::SolveStatus::Optimal);
    CHECK(r.start_accepted);
    CHECK(std::abs(r.objective - y.sum()) <= 1e-6);
  }
}

TEST_CASE("storage gate: open, closed and idle carry") {
  struct Case {
    double mu_dis, mu_cha, f_dis, f_cha, carry, expect;
  };
  const Case cases[] = {
      {0, 1, 0.9, 0.5, 0.3, 0.5},  // charging: charge branch value
      {1, 0, 0.9, 0.5, 0.3, 0.9},  // discharging
      {0, 0, 0.9, 0.5, 0.3, 0.3},  // idle: carried intensity
  };
  for (const Case& c : cases) {
    Model m("gate");
    const Var dis = m.add_binary("mu_dis");
    const Var cha = m.add_binary("mu_cha");
    m.add_le(LinExpr(dis) + LinExpr(cha), LinExpr(1.0), "excl");
    const Var fd = m.add_var("fd", -1.0, 2.0);
    const Var fc = m.add_var("fc", -1.0, 2.0);
    const Var prev = m.add_var("prev", 0.0, 1.5);
    m.fix(dis, c.mu_dis);
    m.fix(cha, c.mu_cha);
    m.fix(fd, c.f_dis);
    m.fix(fc, c.f_cha);
    m.fix(prev, c.carry);
    const LinExpr carry(prev);
    const EsGate g = encode_es_gate(m, {LinExpr(fd), -1.0, 2.0, dis}, {LinExpr(fc), -1.0, 2.0, cha}, &carry, 0.0,
                                    1.5, "g");
    for (const milp::ObjSense sense : {milp::ObjSense::Minimize, milp::ObjSense::Maximize}) {
      m.set_objective(sense, LinExpr(g.e_es));
      const milp::SolveResult r = milp::bb_solve(m);
      REQUIRE(r.status == milp::SolveStatus::Optimal);
      CHECK(std::abs(r.objective - c.expect) <= 1e-9);
      if (c.mu_cha == 0.0) CHECK(std::abs(r.values[static_cast<std::size_t>(g.e_cha.index)]) <= 1e-9);
    }
  }
}

TEST_CASE("storage gate: indicators need an exclusion row") {
  Model m("gate");
  const Var dis = m.add_binary("mu_dis");
  const Var cha = m.add_binary("mu_cha");
  const Var f = m.add_var("f", 0.0, 1.0);
  CHECK_THROWS_AS(encode_es_gate(m, {LinExpr(f), 0.0, 1.0, dis}, {LinExpr(f), 0.0, 1.0, cha}, nullptr, 0.0, 1.0, "g"),
                  BuilderError);
  m.add_le(LinExpr(dis) + LinExpr(cha), LinExpr(1.0), "excl");
  CHECK_THROWS_AS(encode_es_gate(m, {LinExpr(f), 0.0, 1.0, dis}, {LinExpr(f), 0.0, 1.0, cha}, nullptr, 1.0, 0.0, "g"),
                  ContractViolation);
}
