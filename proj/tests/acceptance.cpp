// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cefopt/caem/schedule.hpp"
#include "cefopt/cef/carbon_flow.hpp"
#include "cefopt/encode/encode.hpp"
#include "cefopt/error.hpp"
#include "cefopt/milp/solve.hpp"
#include "cefopt/scen/dataset.hpp"
#include "cefopt/scen/label.hpp"
#include "cefopt/snn/net.hpp"
#include "oracles/naive_net.hpp"
#include "oracles/random_models.hpp"
#include "oracles/random_snapshot.hpp"
#include "oracles/tableau.hpp"
#include "oracles/xml_check.hpp"
#include "support/case_nets.hpp"

using namespace cefopt;
using Clock = std::chrono::steady_clock;

namespace {

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

// Embedded carbon-flow architecture and the accuracy configuration.
const std::vector<int> kCompactHidden{16, 16};
const std::vector<int> kAccurateHidden{128, 128};
constexpr double kHiddenSparsity = 0.5;
constexpr int kScenarios = 2000;
constexpr double kSolveLimit = 30.0;  // seconds per CA-EM solve

struct Shared {
  grid::NetworkCase case6;
  scen::Dataset data;
  scen::Split split;
  double data_seconds = 0.0;
  snn::TrainResult accurate, compact, compact_dense;
  double accurate_seconds = 0.0;
  caem::CaemNets sparse_nets, dense_nets;
  std::vector<const snn::TrainResult*> sparse_runs;
  std::vector<snn::TrainResult> storage_runs;
};

snn::TrainResult train(const scen::Dataset& physical, const std::vector<int>& hidden, double sparsity, int epochs) {
  const scen::Dataset n = scen::normalize(physical);
  std::vector<int> dims{static_cast<int>(n.x_dim())};
  std::vector<double> s{0.0};
  for (int w : hidden) {
    dims.push_back(w);
    if (dims.size() > 2) s.push_back(sparsity);
  }
  dims.push_back(static_cast<int>(n.y_dim()));
  s.push_back(sparsity);
  snn::TrainResult r = snn::train_ssgd(n.x_matrix(), n.y_matrix(), dims, s, support::train_config(epochs));
  r.net.scaling = n.scaling;
  r.net.case_hash = physical.meta.case_hash;
  r.net.dataset_hash = scen::dataset_hash(physical);
  return r;
}

Verdict criterion1() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const int n = 2 + static_cast<int>(rng() % 9);
    const oracle::RandomSnapshot rs = oracle::random_snapshot(rng, n);
    const cef::NciResult lu = cef::compute_nci(cef::build_matrices(rs.snap), rs.e_g, rs.e_dis);
    const cef::FixedPointResult fp = cef::nci_fixed_point(rs.snap, rs.e_g, rs.e_dis);
    worst = std::max(worst, (lu.e_n - fp.e_n).cwiseAbs().maxCoeff());
  }
  const double secs = since(t0);
  return {worst <= 1e-8 && secs < 10.0, fmt::format("200 snapshots, max |matrix - fixed point| {:.2e} (tol 1e-8), {:.2f} s (< 10 s)", worst, secs)};
}

// Source carbon rate against load plus charging absorption.
double conservation_error(const cef::FlowSnapshot& snap, const Eigen::VectorXd& e_g, const Eigen::VectorXd& e_dis,
                          const Eigen::VectorXd& e_n, const std::vector<std::pair<std::size_t, double>>& charging) {
  double source = 0.0;
  for (std::size_t g = 0; g < snap.sources.size(); ++g) source += snap.sources[g].p * e_g(static_cast<Eigen::Index>(g));
  for (std::size_t k = 0; k < snap.discharge.size(); ++k) source += snap.discharge[k].p * e_dis(static_cast<Eigen::Index>(k));
  double sink = 0.0;
  for (std::size_t i = 0; i < snap.load.size(); ++i) sink += snap.load[i] * e_n(static_cast<Eigen::Index>(i));
  for (const auto& [bus, p] : charging) sink += p * e_n(static_cast<Eigen::Index>(bus));
  return std::abs(source - sink) / std::max(1e-12, std::abs(source));
}

Verdict criterion2(const Shared& sh) {
  double worst = 0.0;
  long checks = 0;
  std::mt19937_64 rng(77);
  for (int k = 0; k < 200; ++k) {
    const oracle::RandomSnapshot rs = oracle::random_snapshot(rng, 2 + static_cast<int>(rng() % 9));
    const cef::NciResult r = cef::compute_nci(cef::build_matrices(rs.snap), rs.e_g, rs.e_dis);
    worst = std::max(worst, conservation_error(rs.snap, rs.e_g, rs.e_dis, r.e_n, {}));
    ++checks;
  }
  // Scheduled dispatches of the lossless bundled cases, storage included.
  for (const std::string name : {"case2", "case6"}) {
    const grid::NetworkCase c = name == "case6" ? sh.case6 : support::bundled_case(name);
    const Eigen::VectorXd e_g = cef::source_intensities(c);
    for (const scen::Scenario& s : scen::sample_scenarios(c, 20, 31)) {
      const caem::ScheduleModel em = caem::build_em(c, s);
      const milp::SolveResult r = milp::bb_solve(em.model);
      if (!r.has_solution()) continue;
      const caem::ScheduleOutcome o = caem::evaluate(c, em, r, nullptr);
      const auto flows = cef::cef_for_dispatch(c, o.state);
      for (std::size_t t = 0; t < c.horizon; ++t) {
        const cef::FlowSnapshot snap = cef::snapshot_from_state(c, o.state[t]);
        std::vector<std::pair<std::size_t, double>> charging;
        for (std::size_t k = 0; k < c.storages.size(); ++k) {
          charging.emplace_back(c.storages[k].bus, std::max(0.0, o.state[t].p_cha[k]));
        }
        const Eigen::VectorXd e_dis = Eigen::Map<const Eigen::VectorXd>(
            flows[t].e_dis.data(), static_cast<Eigen::Index>(flows[t].e_dis.size()));
        worst = std::max(worst, conservation_error(snap, e_g, e_dis, flows[t].e_n, charging));
        ++checks;
      }
    }
  }
  return {worst <= 1e-6, fmt::format("{} lossless periods, max relative imbalance {:.2e} (tol 1e-6)", checks, worst)};
}

Verdict criterion3() {
  std::mt19937_64 rng(5150);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    std::vector<int> dims{2 + static_cast<int>(rng() % 7)};
    const int depth = 1 + static_cast<int>(rng() % 2);
    const int caps[] = {16, 8};
    for (int l = 0; l < depth; ++l) dims.push_back(2 + static_cast<int>(rng() % (caps[l] - 1)));
    dims.push_back(1 + static_cast<int>(rng() % 4));
    std::vector<double> sparsity{0.0};
    for (std::size_t l = 2; l < dims.size(); ++l) sparsity.push_back(0.5);
    snn::SparseNet net = snn::make_net(dims, sparsity, 900 + static_cast<std::uint64_t>(k));
    // Zero initial biases leave neurons fed only by dead units exactly at the ReLU kink,
    // where central differences see half a slope; random biases move off it.
    std::uniform_real_distribution<double> bias(-0.5, 0.5);
    for (snn::Layer& L : net.layers) {
      for (Eigen::Index i = 0; i < L.bias.size(); ++i) L.bias(i) = bias(rng);
    }
    Eigen::MatrixXd x, y;
    oracle::random_batch(rng, dims.front(), dims.back(), 6, x, y);
    const snn::LossGrad lg = snn::loss_and_grads(net, x, y);
    worst = std::max(worst, oracle::finite_difference_check(net, x, y, lg.grads).max_rel_error);
  }
  return {worst <= 1e-4, fmt::format("20 nets up to [8,16,8,4], max relative error {:.2e} (tol 1e-4)", worst)};
}

Verdict criterion4(const Shared& sh) {
  double worst_dev = 0.0;
  long events = 0;
  bool grown_zero = true, conserved = true;
  std::string layers;
  for (const snn::TrainResult* r : sh.sparse_runs) {
    for (const snn::DropGrowEvent& ev : r->record.events) {
      ++events;
      grown_zero = grown_zero && ev.grown_zero;
      conserved = conserved && ev.active_before == ev.active_after;
    }
    for (std::size_t l = 1; l < r->net.layers.size(); ++l) {
      const snn::Layer& L = r->net.layers[l];
      const double rate = 1.0 - static_cast<double>(L.active()) / static_cast<double>(L.size());
      worst_dev = std::max(worst_dev, std::abs(rate - L.sparsity));
    }
  }
  layers = fmt::format("overall sparsity rate of the embedded net {:.2f}%", 100.0 * snn::sparsity_rate(sh.compact.net));
  return {worst_dev <= 0.01 && grown_zero && conserved && events > 0,
          fmt::format("{} nets, {} events, max |rate - target| {:.4f} (tol 0.01), grown zero {}, conserved {}; {}",
                      sh.sparse_runs.size(), events, worst_dev, grown_zero, conserved, layers)};
}

Verdict criterion5(const Shared& sh) {
  const auto t0 = Clock::now();
  const snn::SparseNet& net = sh.sparse_nets.cef;
  milp::Model m("exactness");
  std::vector<milp::Var> x;
  std::vector<milp::LinExpr> in;
  for (int i = 0; i < net.inputs(); ++i) {
    x.push_back(m.add_var(fmt::format("x{}", i), -milp::kInf, milp::kInf));
    in.emplace_back(x.back());
  }
  const encode::EncodedNet enc = encode::encode_network(m, net, in, Eigen::VectorXd::Zero(net.inputs()),
                                                        Eigen::VectorXd::Ones(net.inputs()), "cef");
  milp::LinExpr obj;
  for (milp::Var v : enc.outputs) obj += milp::LinExpr(v);
  m.set_objective(milp::ObjSense::Minimize, obj);
  double worst = 0.0;
  int solved = 0;
  const auto& samples = sh.split.train.samples;
  for (int k = 0; k < 100; ++k) {
    const scen::Sample& s = samples[static_cast<std::size_t>(k) * samples.size() / 100];
    for (std::size_t i = 0; i < x.size(); ++i) m.fix(x[i], s.x[i]);
    const milp::SolveResult r = milp::bb_solve(m);
    if (r.status != milp::SolveStatus::Optimal) continue;
    ++solved;
    const Eigen::VectorXd ref = snn::predict(net, Eigen::Map<const Eigen::VectorXd>(s.x.data(), static_cast<Eigen::Index>(s.x.size())));
    for (std::size_t j = 0; j < enc.outputs.size(); ++j) {
      worst = std::max(worst, std::abs(r.values[static_cast<std::size_t>(enc.outputs[j].index)] - ref(static_cast<Eigen::Index>(j))));
    }
  }
  const double secs = since(t0);
  return {solved == 100 && worst <= 1e-6 && secs < 60.0,
          fmt::format("{}/100 optimal, {} binaries, max |MILP - forward| {:.2e} (tol 1e-6), {:.2f} s (< 60 s)", solved,
                      enc.binaries, worst, secs)};
}

Verdict criterion6() {
  std::mt19937_64 rng(6006);
  milp::BbOptions opt;
  opt.rel_gap = 1e-9;
  double worst = 0.0;
  int agree = 0, models = 0;
  while (models < 50) {
    const int nb = 1 + static_cast<int>(rng() % 12);
    const int nc = static_cast<int>(rng() % 5);
    const milp::Model m = oracle::random_model(rng, nc, nb, 2 + static_cast<int>(rng() % 6));
    const auto ref = oracle::enumerate_milp(m);
    if (!ref) continue;
    ++models;
    const milp::SolveResult r = milp::bb_solve(m, opt);
    if (r.status != milp::SolveStatus::Optimal) continue;
    const double err = std::abs(r.objective - *ref) / std::max(1.0, std::abs(*ref));
    worst = std::max(worst, err);
    if (err <= 1e-6) ++agree;
  }
  return {agree == 50, fmt::format("{}/50 models agree with enumeration, max relative difference {:.2e} (tol 1e-6)", agree, worst)};
}

Verdict criterion7(const Shared& sh) {
  const snn::Metrics m = snn::eval_metrics(sh.accurate.net, sh.split.test.x_matrix(), sh.split.test.y_matrix());
  const snn::Metrics e = snn::eval_metrics(sh.compact.net, sh.split.test.x_matrix(), sh.split.test.y_matrix());
  const double secs = sh.data_seconds + sh.accurate_seconds;
  fmt::print("  info: embedded net [12,16,16,4] held-out R2 {:.4f}, MAPE {:.2f}%\n", e.r2, 100.0 * e.mape);
  return {m.r2 >= 0.98 && m.mape <= 0.02 && secs < 600.0,
          fmt::format("net [12,128,128,4]: held-out R2 {:.4f} (>= 0.98), MAPE {:.2f}% (<= 2%, {} zero targets skipped), "
                      "{} samples, data + training {:.1f} s (< 600 s)",
                      m.r2, 100.0 * m.mape, m.mape_skipped, sh.data.samples.size(), secs)};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Verdict criterion8(const Shared& sh) {
  const grid::NetworkCase& c = sh.case6;
  const milp::BlockedTariff tariff = support::reference_tariff(c.dt);
  milp::BbOptions bo;
  bo.time_limit = kSolveLimit;
  std::vector<double> t_sparse, t_dense;
  bool fewer = true;
  int sparse_opt = 0, dense_opt = 0;
  long bins_s = 0, bins_d = 0;
  std::size_t nz_s = 0, nz_d = 0;
  for (const scen::Scenario& s : scen::sample_scenarios(c, 10, 11)) {
    const caem::CaemSolve a = caem::solve_caem(c, s, sh.sparse_nets, tariff, bo);
    const caem::CaemSolve b = caem::solve_caem(c, s, sh.dense_nets, tariff, bo);
    t_sparse.push_back(a.result.seconds);
    t_dense.push_back(b.result.seconds);
    sparse_opt += a.result.status == milp::SolveStatus::Optimal;
    dense_opt += b.result.status == milp::SolveStatus::Optimal;
    const int ba = a.model.model.num_binaries(), bb = b.model.model.num_binaries();
    const std::size_t na = a.model.model.nonzeros(), nb = b.model.model.nonzeros();
    fewer = fewer && ba < bb && na < nb;
    bins_s += ba;
    bins_d += bb;
    nz_s += na;
    nz_d += nb;
  }
  const double ms = median(t_sparse), md = median(t_dense);
  return {fewer && ms <= md,
          fmt::format("mean binaries {:.1f} vs {:.1f}, mean nonzeros {:.0f} vs {:.0f} (strictly fewer in every scenario: {}); "
                      "median solve {:.2f} s vs {:.2f} s, optimal {}/10 vs {}/10 within {:.0f} s",
                      bins_s / 10.0, bins_d / 10.0, nz_s / 10.0, nz_d / 10.0, fewer, ms, md, sparse_opt, dense_opt,
                      kSolveLimit)};
}

Verdict criterion9(const Shared& sh) {
  const grid::NetworkCase& c = sh.case6;
  const scen::Scenario s = scen::Scenario::nominal(c);
  const milp::BlockedTariff tariff = support::reference_tariff(c.dt);
  const caem::ScheduleModel em = caem::build_em(c, s);
  const milp::SolveResult er = milp::bb_solve(em.model);
  if (!er.has_solution()) return {false, "EM has no solution"};
  const caem::ScheduleOutcome eo = caem::evaluate(c, em, er, &tariff);
  milp::BbOptions bo;
  bo.time_limit = kSolveLimit;
  const caem::CaemSolve cs = caem::solve_caem(c, s, sh.sparse_nets, tariff, bo);
  const caem::ScheduleOutcome co = caem::evaluate(c, cs.model, cs.result, &tariff);
  const caem::CaemSolve zero = caem::solve_caem(c, s, sh.sparse_nets, tariff.scaled(0.0), bo);
  const double zero_diff = std::abs(zero.result.objective - er.objective) / std::max(1.0, std::abs(er.objective));
  const bool ok = co.emission <= eo.emission && co.load_energy <= eo.load_energy &&
                  co.carbon_welfare >= eo.carbon_welfare && zero_diff <= 1e-6;
  return {ok, fmt::format("emission {:.2f} vs EM {:.2f} t ({:+.2f}%), load {:.2f} vs {:.2f} MWh ({:+.2f}%), "
                          "carbon-inclusive welfare {:.2f} vs {:.2f} $ ({:+.2f}%), predicted emission {:.2f} t, "
                          "zero-tariff objective difference {:.1e} (tol 1e-6)",
                          co.emission, eo.emission, caem::pct_change(eo.emission, co.emission), co.load_energy,
                          eo.load_energy, caem::pct_change(eo.load_energy, co.load_energy), co.carbon_welfare,
                          eo.carbon_welfare, caem::pct_change(eo.carbon_welfare, co.carbon_welfare),
                          co.emission_predicted, zero_diff)};
}

Verdict criterion10(const Shared& sh, const std::filesystem::path& out, Clock::time_point suite_start) {
  const grid::NetworkCase& c = sh.case6;
  const std::vector<double> scales{0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0};
  milp::BbOptions bo;
  bo.time_limit = kSolveLimit;
  const auto pts = caem::price_sensitivity(c, scen::Scenario::nominal(c), sh.sparse_nets,
                                           support::reference_tariff(c.dt), scales, bo);
  bool all_ok = true, emission_down = true, reduction_up = true;
  std::string curve;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    all_ok = all_ok && pts[k].ok;
    curve += fmt::format(" {}:{:.1f}/{:.1f}", pts[k].scale, pts[k].emission, pts[k].demand_reduction);
    if (k == 0) continue;
    emission_down = emission_down && pts[k].emission <= pts[k - 1].emission + 1e-6 * (1.0 + pts[k - 1].emission);
    reduction_up = reduction_up &&
                   pts[k].demand_reduction >= pts[k - 1].demand_reduction - 1e-6 * (1.0 + pts[k - 1].demand_reduction);
  }
  std::filesystem::create_directories(out);
  caem::write_sensitivity_csv(out / "sensitivity.csv", pts);
  const std::string svg = caem::sensitivity_svg(pts);
  {
    std::ofstream f(out / "sensitivity.svg");
    f << svg;
  }
  const bool files = std::filesystem::file_size(out / "sensitivity.csv") > 0 && oracle::xml_well_formed(svg);
  const double total = since(suite_start);
  return {all_ok && emission_down && reduction_up && files && total < 900.0,
          fmt::format("8 scales (emission t / demand reduction MWh):{}; emission non-increasing {}, reduction "
                      "non-decreasing {}, CSV + SVG written to {} {}, acceptance run {:.0f} s (< 900 s)",
                      curve, emission_down, reduction_up, out.string(), files, total)};
}

}  // namespace

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  const std::filesystem::path out = argc > 1 ? argv[1] : "acceptance_out";
  const auto suite_start = Clock::now();
  int failed = 0;
  std::string summary;
  auto report = [&](int id, const std::function<Verdict()>& run) {
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, fmt::format("error: {}", e.what())};
    }
    failed += v.pass ? 0 : 1;
    const std::string line =
        fmt::format("criterion {:2d}: {} - {} [{:.1f} s]\n", id, v.pass ? "PASS" : "FAIL", v.detail, since(t0));
    fmt::print("{}", line);
    summary += line;
  };

  report(1, criterion1);
  report(3, criterion3);
  report(6, criterion6);

  Shared sh;
  sh.case6 = support::bundled_case("case6");
  {
    const auto t0 = Clock::now();
    sh.data = scen::generate_dataset(sh.case6, kScenarios, 1);
    sh.split = scen::split_by_scenario(sh.data, 0.2, 7);
    sh.data_seconds = since(t0);
    const auto t1 = Clock::now();
    sh.accurate = train(sh.split.train, kAccurateHidden, kHiddenSparsity, 200);
    sh.accurate_seconds = since(t1);
    sh.compact = train(sh.split.train, kCompactHidden, kHiddenSparsity, 200);
    sh.compact_dense = train(sh.split.train, kCompactHidden, 0.0, 200);
    const double e_max = 1.5 * sh.case6.max_gci();
    const auto dis = scen::storage_dataset(sh.case6, 0, scen::StorageMode::Discharge, 4000, 3, e_max);
    const auto cha = scen::storage_dataset(sh.case6, 0, scen::StorageMode::Charge, 4000, 4, e_max);
    for (double s : {kHiddenSparsity, 0.0}) {
      sh.storage_runs.push_back(train(dis, {50}, s, 100));
      sh.storage_runs.push_back(train(cha, {50}, s, 100));
    }
    sh.sparse_nets = {sh.compact.net, sh.storage_runs[0].net, sh.storage_runs[1].net};
    sh.dense_nets = {sh.compact_dense.net, sh.storage_runs[2].net, sh.storage_runs[3].net};
    sh.sparse_runs = {&sh.accurate, &sh.compact, &sh.storage_runs[0], &sh.storage_runs[1]};
    fmt::print("  setup: {} samples in {:.1f} s, nets trained in {:.1f} s\n", sh.data.samples.size(), sh.data_seconds,
               since(t1));
  }

  report(2, [&] { return criterion2(sh); });
  report(4, [&] { return criterion4(sh); });
  report(5, [&] { return criterion5(sh); });
  report(7, [&] { return criterion7(sh); });
  report(8, [&] { return criterion8(sh); });
  report(9, [&] { return criterion9(sh); });
  report(10, [&] { return criterion10(sh, out, suite_start); });

  summary += fmt::format("{} of 10 criteria passed\n", 10 - failed);
  fmt::print("{} of 10 criteria passed\n", 10 - failed);
  std::filesystem::create_directories(out);
  std::ofstream(out / "acceptance.txt") << summary;
  return failed == 0 ? 0 : 1;
}
