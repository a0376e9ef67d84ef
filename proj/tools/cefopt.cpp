// Command-line driver: data generation, training, embedding checks, scheduling runs and reports.
#include <fmt/format.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cefopt/caem/schedule.hpp"
#include "cefopt/encode/encode.hpp"
#include "cefopt/error.hpp"
#include "cefopt/grid/network.hpp"
#include "cefopt/milp/mps.hpp"
#include "cefopt/milp/solve.hpp"
#include "cefopt/scen/dataset.hpp"
#include "cefopt/scen/label.hpp"
#include "cefopt/snn/net.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace cefopt;
using cli::RunConfig;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

/// Flags shared by the subcommands; unset values fall back to the config file.
struct Overrides {
  std::string config;
  std::optional<std::string> case_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> tariff;
  std::optional<double> gap;
  std::optional<long> nodes;
  std::optional<double> time_limit;
};

RunConfig effective(const Overrides& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : cli::load_config(o.config);
  if (o.case_path) cfg.case_path = *o.case_path;
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.out = *o.out;
  if (o.tariff) cfg.tariff = cli::parse_tariff(*o.tariff);
  if (o.gap) cfg.gap = *o.gap;
  if (o.nodes) cfg.nodes = *o.nodes;
  if (o.time_limit) cfg.time_limit = *o.time_limit;
  return cfg;
}

cli::Provenance provenance(const RunConfig& cfg) {
  return {CEFOPT_VERSION, cli::config_hash(cfg), cfg.seed.value_or(0)};
}

grid::NetworkCase load_case(const RunConfig& cfg) {
  if (cfg.case_path.empty()) throw ParseError("no case given (--case or \"case\" in the config)");
  return grid::load_case(cfg.case_path);
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ParseError(fmt::format("{}: '{}' is not a number", what, item));
    }
  }
  if (out.empty()) throw ParseError(fmt::format("{}: empty list", what));
  return out;
}

std::vector<int> parse_ints(const std::string& text, const char* what) {
  std::vector<int> out;
  for (double v : parse_list(text, what)) {
    if (v != static_cast<int>(v) || v <= 0) throw ParseError(fmt::format("{}: '{}' is not a positive integer", what, v));
    out.push_back(static_cast<int>(v));
  }
  return out;
}

snn::TrainConfig train_config(const cli::NetConfig& n, int epochs, std::uint64_t seed) {
  snn::TrainConfig t;
  t.epochs = epochs;
  t.batch_size = n.batch_size;
  t.learning_rate = n.learning_rate;
  t.final_lr_fraction = n.final_lr_fraction;
  t.seed = seed;
  return t;
}

/// Input layer dense, every later layer at `sparsity`.
std::vector<double> layer_sparsity(std::size_t layers, double sparsity) {
  std::vector<double> s(layers, sparsity);
  s.front() = 0.0;
  return s;
}

struct Fitted {
  snn::TrainResult run;
  snn::Metrics held_out;
  double seconds = 0.0;
};

/// Trains on the training split of a physical dataset and scores on the held-out part.
Fitted fit(const scen::Dataset& physical, const scen::Split& split, const std::vector<int>& dims,
           const std::vector<double>& sparsity, const snn::TrainConfig& tc) {
  const auto t0 = Clock::now();
  const scen::Dataset n = scen::normalize(split.train);
  Fitted f{snn::train_ssgd(n.x_matrix(), n.y_matrix(), dims, sparsity, tc), {}, 0.0};
  f.seconds = since(t0);
  f.run.net.scaling = n.scaling;
  f.run.net.case_hash = physical.meta.case_hash;
  f.run.net.dataset_hash = scen::dataset_hash(physical);
  f.run.net.seed = tc.seed;
  const scen::Dataset& eval = split.test.samples.empty() ? split.train : split.test;
  f.held_out = snn::eval_metrics(f.run.net, eval.x_matrix(), eval.y_matrix());
  return f;
}

fs::path sibling(const fs::path& model, const std::string& suffix) {
  return model.parent_path() / (model.stem().string() + suffix);
}

caem::CaemNets load_nets(const fs::path& cef, const std::optional<std::string>& es_dis,
                         const std::optional<std::string>& es_cha) {
  caem::CaemNets nets{snn::load_net(cef), {}, {}};
  const fs::path dis = es_dis ? fs::path(*es_dis) : sibling(cef, "_es_dis.json");
  const fs::path cha = es_cha ? fs::path(*es_cha) : sibling(cef, "_es_cha.json");
  if (fs::exists(dis) && fs::exists(cha)) {
    nets.es_dis = snn::load_net(dis);
    nets.es_cha = snn::load_net(cha);
  } else if (es_dis || es_cha) {
    throw ParseError(fmt::format("storage networks {} and {} must both exist", dis.string(), cha.string()));
  }
  return nets;
}

scen::SamplingOptions sampling(const RunConfig& cfg) { return {cfg.load_lo, cfg.load_hi, cfg.cost_spread}; }

struct ScenarioChoice {
  std::optional<std::uint64_t> seed;
  int index = 0;
};

scen::Scenario pick_scenario(const grid::NetworkCase& c, const RunConfig& cfg, const ScenarioChoice& s) {
  if (!s.seed) return scen::Scenario::nominal(c);
  if (s.index < 0) throw ContractViolation("--scenario-index must be >= 0");
  return scen::sample_scenarios(c, s.index + 1, *s.seed, sampling(cfg)).back();
}

void print_metrics(const std::string& label, const snn::Metrics& m) {
  fmt::print("{}: held-out R2 {:.4f}, MAPE {:.2f}%, RMSE {:.4g}\n", label, m.r2, 100.0 * m.mape, m.rmse);
}

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(const Overrides& o, std::optional<int> n, std::optional<int> storage_samples) {
  RunConfig cfg = effective(o);
  if (n) cfg.scenarios = *n;
  if (storage_samples) cfg.storage.samples = *storage_samples;
  if (cfg.scenarios <= 0) throw ContractViolation("--n must be positive");
  const grid::NetworkCase c = load_case(cfg);
  const std::uint64_t seed = *cfg.seed;
  const cli::Provenance prov = provenance(cfg);

  const auto t0 = Clock::now();
  scen::GenerateReport rep;
  const scen::Dataset d = scen::generate_dataset(c, cfg.scenarios, seed, &rep, sampling(cfg));
  const fs::path csv = cfg.out / "cef.csv";
  scen::write_dataset(d, csv);
  cli::stamp_json(csv.string() + ".meta.json", prov);
  fmt::print("cef: {} samples from {} scenarios ({} skipped) in {:.1f} s, hash {}\n", d.samples.size(), rep.labeled,
             rep.skipped, since(t0), scen::dataset_hash(d));
  for (std::size_t k = 0; k < std::min<std::size_t>(rep.skip_log.size(), 5); ++k) fmt::print("  {}\n", rep.skip_log[k]);
  if (rep.skip_log.size() > 5) fmt::print("  ... {} more\n", rep.skip_log.size() - 5);

  if (!c.storages.empty()) {
    const double e_max = caem::CaemOptions{}.intensity_factor * c.max_gci();
    for (const auto& [mode, name, offset] : {std::tuple{scen::StorageMode::Discharge, "es_dis", 1},
                                             std::tuple{scen::StorageMode::Charge, "es_cha", 2}}) {
      const scen::Dataset s = scen::storage_dataset(c, 0, mode, cfg.storage.samples, seed + offset, e_max);
      const fs::path path = cfg.out / fmt::format("{}.csv", name);
      scen::write_dataset(s, path);
      cli::stamp_json(path.string() + ".meta.json", prov);
      fmt::print("{}: {} samples, hash {}\n", name, s.samples.size(), scen::dataset_hash(s));
    }
  }
  return cli::kOk;
}

// ---------------------------------------------------------------- train

struct TrainFlags {
  std::string data, out;
  std::optional<std::string> dims, sparsity;
  std::optional<int> epochs, storage_width, storage_epochs;
  std::optional<double> lr;
  bool dense = false;
};

int cmd_train(const Overrides& o, const TrainFlags& t) {
  RunConfig cfg = effective(o);
  if (t.epochs) cfg.net.epochs = *t.epochs;
  if (t.lr) cfg.net.learning_rate = *t.lr;
  if (t.storage_width) cfg.storage.width = *t.storage_width;
  if (t.storage_epochs) cfg.storage.epochs = *t.storage_epochs;
  const std::uint64_t seed = *cfg.seed;
  const cli::Provenance prov = provenance(cfg);

  const scen::Dataset d = scen::read_dataset(fs::path(t.data) / "cef.csv");
  const scen::Split split = scen::split_by_scenario(d, cfg.test_fraction, cfg.split_seed);
  std::vector<int> dims;
  if (t.dims) {
    dims = parse_ints(*t.dims, "--dims");
    if (dims.size() < 2 || dims.front() != static_cast<int>(d.x_dim()) || dims.back() != static_cast<int>(d.y_dim())) {
      throw ContractViolation(fmt::format("--dims must start at {} and end at {} for this dataset", d.x_dim(), d.y_dim()));
    }
  } else {
    dims.push_back(static_cast<int>(d.x_dim()));
    dims.insert(dims.end(), cfg.net.hidden.begin(), cfg.net.hidden.end());
    dims.push_back(static_cast<int>(d.y_dim()));
  }
  std::vector<double> sparsity = layer_sparsity(dims.size() - 1, cfg.net.sparsity);
  if (t.sparsity) {
    const std::vector<double> given = parse_list(*t.sparsity, "--sparsity");
    if (given.size() == 1) {
      sparsity = layer_sparsity(dims.size() - 1, given.front());
    } else if (given.size() == dims.size() - 1) {
      sparsity = given;
    } else {
      throw ContractViolation(fmt::format("--sparsity takes 1 or {} values", dims.size() - 1));
    }
  }
  if (t.dense) std::fill(sparsity.begin(), sparsity.end(), 0.0);

  const fs::path out = t.out;
  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  std::string curve = "net,epoch,loss\n";
  auto record = [&](const std::string& name, const snn::TrainRecord& r) {
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) curve += fmt::format("{},{},{:.10g}\n", name, e + 1, r.epoch_loss[e]);
  };

  const Fitted cef = fit(d, split, dims, sparsity, train_config(cfg.net, cfg.net.epochs, seed));
  snn::save_net(cef.run.net, out);
  cli::stamp_json(out, prov);
  record("cef", cef.run.record);
  print_metrics(fmt::format("cef {} {:.1f} s, sparsity {:.1f}%", fmt::join(dims, "-"), cef.seconds,
                            100.0 * snn::sparsity_rate(cef.run.net)),
                cef.held_out);

  for (const auto& [name, offset] : {std::pair{"es_dis", 1}, std::pair{"es_cha", 2}}) {
    const fs::path csv = fs::path(t.data) / fmt::format("{}.csv", name);
    if (!fs::exists(csv)) continue;
    const scen::Dataset s = scen::read_dataset(csv);
    const scen::Split ss = scen::split_by_scenario(s, cfg.test_fraction, cfg.split_seed);
    const std::vector<int> es_dims{static_cast<int>(s.x_dim()), cfg.storage.width, static_cast<int>(s.y_dim())};
    const double es_sparsity = t.dense ? 0.0 : cfg.storage.sparsity;
    const Fitted es = fit(s, ss, es_dims, layer_sparsity(2, es_sparsity),
                          train_config(cfg.net, cfg.storage.epochs, seed + offset));
    const fs::path path = sibling(out, fmt::format("_{}.json", name));
    snn::save_net(es.run.net, path);
    cli::stamp_json(path, prov);
    record(name, es.run.record);
    print_metrics(fmt::format("{} {:.1f} s", name, es.seconds), es.held_out);
  }
  const fs::path curve_path = sibling(out, "_curve.csv");
  cli::write_text(curve_path, curve);
  cli::stamp_csv(curve_path, prov);
  fmt::print("wrote {} and {}\n", out.string(), curve_path.string());
  return cli::kOk;
}

// ---------------------------------------------------------------- encode-check

struct CheckRow {
  double max_dev = 0.0, seconds = 0.0;
  int binaries = 0, unstable = 0;
  std::size_t nonzeros = 0;
};

CheckRow encode_check(const snn::SparseNet& net, const std::vector<const scen::Sample*>& samples) {
  const Eigen::Index n_in = net.inputs();
  // Trust box: [0, 1] widened to cover every checked input.
  Eigen::VectorXd lo = Eigen::VectorXd::Zero(n_in), hi = Eigen::VectorXd::Ones(n_in);
  for (const scen::Sample* s : samples) {
    if (static_cast<Eigen::Index>(s->x.size()) != n_in) throw ContractViolation("dataset and model input sizes differ");
    for (Eigen::Index i = 0; i < n_in; ++i) {
      const double z = (s->x[static_cast<std::size_t>(i)] - net.scaling.x_min(i)) / net.scaling.x_range(i);
      lo(i) = std::min(lo(i), z);
      hi(i) = std::max(hi(i), z);
    }
  }
  milp::Model m("encode_check");
  std::vector<milp::Var> x;
  std::vector<milp::LinExpr> in;
  for (Eigen::Index i = 0; i < n_in; ++i) {
    x.push_back(m.add_var(fmt::format("x{}", i), -milp::kInf, milp::kInf));
    in.emplace_back(x.back());
  }
  const encode::EncodedNet enc = encode::encode_network(m, net, in, lo, hi, "net");
  milp::LinExpr obj;
  for (milp::Var v : enc.outputs) obj += milp::LinExpr(v);
  m.set_objective(milp::ObjSense::Minimize, obj);
  CheckRow row{0.0, 0.0, enc.binaries, enc.unstable, enc.nonzeros};
  for (const scen::Sample* s : samples) {
    for (std::size_t i = 0; i < x.size(); ++i) m.fix(x[i], s->x[i]);
    const milp::SolveResult r = milp::bb_solve(m);
    if (!r.has_solution()) throw NumericalError("fixed-input embedding has no solution");
    row.seconds += r.seconds;
    const Eigen::VectorXd ref =
        snn::predict(net, Eigen::Map<const Eigen::VectorXd>(s->x.data(), static_cast<Eigen::Index>(s->x.size())));
    for (std::size_t j = 0; j < enc.outputs.size(); ++j) {
      row.max_dev = std::max(row.max_dev, std::abs(r.values[static_cast<std::size_t>(enc.outputs[j].index)] -
                                                   ref(static_cast<Eigen::Index>(j))));
    }
  }
  return row;
}

int cmd_encode_check(const Overrides& o, const std::string& model, const std::string& data, int n,
                     const std::optional<std::string>& other) {
  if (n <= 0) throw ContractViolation("--n must be positive");
  const RunConfig cfg = effective(o);
  const scen::Dataset d = scen::read_dataset(fs::path(data) / "cef.csv");
  if (d.samples.empty()) throw ParseError("dataset is empty");
  std::vector<const scen::Sample*> picked;
  const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(n), d.samples.size());
  for (std::size_t k = 0; k < count; ++k) picked.push_back(&d.samples[k * d.samples.size() / count]);

  std::vector<std::pair<std::string, CheckRow>> rows;
  rows.emplace_back(model, encode_check(snn::load_net(model), picked));
  if (other) rows.emplace_back(*other, encode_check(snn::load_net(*other), picked));
  std::string csv = "model,samples,max_dev,binaries,unstable,nonzeros,seconds\n";
  bool exact = true;
  for (const auto& [name, r] : rows) {
    fmt::print("{}: {} samples, max |MILP - forward| {:.2e}, {} binaries, {} nonzeros, {:.3f} s total\n", name, count,
               r.max_dev, r.binaries, r.nonzeros, r.seconds);
    csv += fmt::format("{},{},{:.6g},{},{},{},{:.6g}\n", name, count, r.max_dev, r.binaries, r.unstable, r.nonzeros, r.seconds);
    exact = exact && r.max_dev <= 1e-6;
  }
  if (rows.size() == 2) {
    const CheckRow& a = rows[0].second;
    const CheckRow& b = rows[1].second;
    fmt::print("binaries {} vs {}, nonzeros {} vs {}, solve time ratio {:.2f}x\n", a.binaries, b.binaries, a.nonzeros,
               b.nonzeros, b.seconds / std::max(1e-12, a.seconds));
  }
  const fs::path path = cfg.out / "encode_check.csv";
  cli::write_text(path, csv);
  cli::stamp_csv(path, provenance(cfg));
  fmt::print("{} ({})\n", exact ? "exact within 1e-6" : "NOT exact within 1e-6", path.string());
  return exact ? cli::kOk : cli::kNumericalFailure;
}

// ---------------------------------------------------------------- solve / compare / sweep

struct ModelFlags {
  std::string model;
  std::optional<std::string> es_dis, es_cha;
  ScenarioChoice scenario;
};

void write_outcome(const fs::path& path, const caem::ScheduleOutcome& o, const milp::SolveResult& r,
                   const milp::Model& m, const cli::Provenance& prov) {
  std::string csv = "metric,value\n";
  csv += fmt::format("status,{}\n", milp::to_string(r.status));
  for (const auto& [k, v] : std::vector<std::pair<const char*, double>>{{"objective", o.objective},
                                                                        {"welfare", o.welfare},
                                                                        {"utility", o.utility},
                                                                        {"generation_cost", o.generation_cost},
                                                                        {"reserve_cost", o.reserve_cost},
                                                                        {"storage_cost", o.storage_cost},
                                                                        {"carbon_cost", o.carbon_cost},
                                                                        {"exact_carbon_cost", o.exact_carbon_cost},
                                                                        {"carbon_welfare", o.carbon_welfare},
                                                                        {"emission", o.emission},
                                                                        {"emission_predicted", o.emission_predicted},
                                                                        {"load_energy", o.load_energy},
                                                                        {"gap", r.gap},
                                                                        {"nodes", static_cast<double>(r.nodes)},
                                                                        {"seconds", r.seconds},
                                                                        {"binaries", static_cast<double>(m.num_binaries())},
                                                                        {"nonzeros", static_cast<double>(m.nonzeros())}}) {
    csv += fmt::format("{},{:.10g}\n", k, v);
  }
  cli::write_text(path, csv);
  cli::stamp_csv(path, prov);
}

void write_solution(const fs::path& path, const milp::Model& m, const milp::SolveResult& r, const cli::Provenance& prov) {
  std::string csv = "variable,value\n";
  for (int j = 0; j < m.num_vars(); ++j) csv += fmt::format("{},{:.12g}\n", m.var(j).name, r.values[static_cast<std::size_t>(j)]);
  cli::write_text(path, csv);
  cli::stamp_csv(path, prov);
}

struct Scheduled {
  caem::ScheduleModel model;
  milp::SolveResult result;
  caem::ScheduleOutcome outcome;
};

Scheduled schedule(const grid::NetworkCase& c, const scen::Scenario& s, const RunConfig& cfg, bool carbon_aware,
                   const caem::CaemNets* nets) {
  const milp::BlockedTariff tariff = cli::tariff(cfg, c.dt);
  if (!carbon_aware) {
    caem::ScheduleModel em = caem::build_em(c, s);
    milp::SolveResult r = milp::bb_solve(em.model, cli::solver_options(cfg));
    if (!r.has_solution()) return {std::move(em), std::move(r), {}};
    caem::ScheduleOutcome o = caem::evaluate(c, em, r, &tariff);
    return {std::move(em), std::move(r), std::move(o)};
  }
  caem::CaemSolve cs = caem::solve_caem(c, s, *nets, tariff, cli::solver_options(cfg));
  if (!cs.result.has_solution()) return {std::move(cs.model), std::move(cs.result), {}};
  caem::ScheduleOutcome o = caem::evaluate(c, cs.model, cs.result, &tariff);
  return {std::move(cs.model), std::move(cs.result), std::move(o)};
}

int status_code(const milp::SolveResult& r) {
  if (r.status == milp::SolveStatus::Infeasible) return cli::kInfeasible;
  if (!r.has_solution()) return cli::kNumericalFailure;
  return cli::kOk;
}

void print_outcome(const std::string& label, const Scheduled& s) {
  const caem::ScheduleOutcome& o = s.outcome;
  fmt::print("{}: {} in {:.2f} s ({} nodes, gap {:.1e}), welfare {:.2f} $, carbon-inclusive welfare {:.2f} $, "
             "emission {:.3f} t, load {:.2f} MWh\n",
             label, milp::to_string(s.result.status), s.result.seconds, s.result.nodes, s.result.gap, o.welfare,
             o.carbon_welfare, o.emission, o.load_energy);
}

int cmd_solve(const Overrides& o, const std::string& mode, const ModelFlags& mf, const std::optional<std::string>& mps) {
  const RunConfig cfg = effective(o);
  const grid::NetworkCase c = load_case(cfg);
  const scen::Scenario s = pick_scenario(c, cfg, mf.scenario);
  const bool carbon_aware = mode == "caem";
  std::optional<caem::CaemNets> nets;
  if (carbon_aware) {
    if (mf.model.empty()) throw ParseError("--model is required for --mode caem");
    nets = load_nets(mf.model, mf.es_dis, mf.es_cha);
  }
  const cli::Provenance prov = provenance(cfg);
  const Scheduled run = schedule(c, s, cfg, carbon_aware, nets ? &*nets : nullptr);
  if (mps) {
    milp::export_mps(run.model.model, *mps);
    cli::stamp_mps(*mps, prov);
    fmt::print("wrote {}\n", *mps);
  }
  if (const int code = status_code(run.result); code != cli::kOk) {
    fmt::print(stderr, "{} model: {}\n", mode, milp::to_string(run.result.status));
    return code;
  }
  print_outcome(mode, run);
  write_outcome(cfg.out / fmt::format("outcome_{}.csv", mode), run.outcome, run.result, run.model.model, prov);
  write_solution(cfg.out / fmt::format("solution_{}.csv", mode), run.model.model, run.result, prov);
  const fs::path bus = cfg.out / fmt::format("bus_emission_{}.csv", mode);
  caem::write_bus_emission_csv(bus, c, run.outcome);
  cli::stamp_csv(bus, prov);
  return cli::kOk;
}

int cmd_compare(const Overrides& o, const ModelFlags& mf) {
  const RunConfig cfg = effective(o);
  const grid::NetworkCase c = load_case(cfg);
  const scen::Scenario s = pick_scenario(c, cfg, mf.scenario);
  const caem::CaemNets nets = load_nets(mf.model, mf.es_dis, mf.es_cha);
  const Scheduled em = schedule(c, s, cfg, false, nullptr);
  if (const int code = status_code(em.result); code != cli::kOk) return code;
  const Scheduled ca = schedule(c, s, cfg, true, &nets);
  if (const int code = status_code(ca.result); code != cli::kOk) return code;
  print_outcome("em", em);
  print_outcome("caem", ca);
  const std::vector<caem::Delta> deltas = caem::compare(em.outcome, ca.outcome);
  for (const caem::Delta& d : deltas) fmt::print("  {:<22} {:>14.4f} {:>14.4f} {:>+9.2f}%\n", d.metric, d.em, d.caem, d.pct);
  const cli::Provenance prov = provenance(cfg);
  const fs::path path = cfg.out / "compare.csv";
  caem::write_outcome_csv(path, deltas);
  cli::stamp_csv(path, prov);
  for (const auto& [name, run] : {std::pair<const char*, const Scheduled*>{"em", &em}, {"caem", &ca}}) {
    const fs::path bus = cfg.out / fmt::format("bus_emission_{}.csv", name);
    caem::write_bus_emission_csv(bus, c, run->outcome);
    cli::stamp_csv(bus, prov);
  }
  fmt::print("wrote {}\n", path.string());
  return cli::kOk;
}

int cmd_sweep(const Overrides& o, const ModelFlags& mf, const std::string& scales_text) {
  const RunConfig cfg = effective(o);
  const grid::NetworkCase c = load_case(cfg);
  const scen::Scenario s = pick_scenario(c, cfg, mf.scenario);
  const caem::CaemNets nets = load_nets(mf.model, mf.es_dis, mf.es_cha);
  const std::vector<double> scales = parse_list(scales_text, "--scales");
  const auto pts = caem::price_sensitivity(c, s, nets, cli::tariff(cfg, c.dt), scales, cli::solver_options(cfg));
  bool all_ok = true;
  for (const caem::SensitivityPoint& p : pts) {
    all_ok = all_ok && p.ok;
    if (p.ok) {
      fmt::print("scale {:>5}: emission {:.3f} t, load {:.2f} MWh, demand reduction {:.3f} MWh ({:.1f} s)\n", p.scale,
                 p.emission, p.load_energy, p.demand_reduction, p.seconds);
    } else {
      fmt::print("scale {:>5}: failed: {}\n", p.scale, p.error);
    }
  }
  const cli::Provenance prov = provenance(cfg);
  const fs::path csv = cfg.out / "sensitivity.csv";
  caem::write_sensitivity_csv(csv, pts);
  cli::stamp_csv(csv, prov);
  cli::write_text(cfg.out / "sensitivity.svg", cli::stamp_svg(caem::sensitivity_svg(pts), prov));
  fmt::print("wrote {} and sensitivity.svg\n", csv.string());
  return all_ok ? cli::kOk : cli::kNumericalFailure;
}

// ---------------------------------------------------------------- tune

int cmd_tune(const Overrides& o, const std::string& data, const std::string& widths_text, int layers,
             std::optional<int> epochs) {
  RunConfig cfg = effective(o);
  if (epochs) cfg.net.epochs = *epochs;
  if (layers <= 0) throw ContractViolation("--layers must be positive");
  const std::vector<int> given = parse_ints(widths_text, "--widths");
  const std::set<int> widths(given.begin(), given.end());
  const scen::Dataset d = scen::read_dataset(fs::path(data) / "cef.csv");
  const scen::Split split = scen::split_by_scenario(d, cfg.test_fraction, cfg.split_seed);
  std::string csv = "width,r2,mape,rmse,active_weights,seconds\n";
  std::vector<std::pair<int, double>> scores;
  for (int w : widths) {
    std::vector<int> dims{static_cast<int>(d.x_dim())};
    dims.insert(dims.end(), static_cast<std::size_t>(layers), w);
    dims.push_back(static_cast<int>(d.y_dim()));
    const Fitted f = fit(d, split, dims, layer_sparsity(dims.size() - 1, cfg.net.sparsity),
                         train_config(cfg.net, cfg.net.epochs, *cfg.seed));
    long active = 0;
    for (const snn::Layer& L : f.run.net.layers) active += L.active();
    print_metrics(fmt::format("width {:>4}", w), f.held_out);
    csv += fmt::format("{},{:.8g},{:.8g},{:.8g},{},{:.4g}\n", w, f.held_out.r2, f.held_out.mape, f.held_out.rmse, active,
                       f.seconds);
    scores.emplace_back(w, f.held_out.r2);
  }
  const double best = std::max_element(scores.begin(), scores.end(), [](auto a, auto b) { return a.second < b.second; })->second;
  const auto enough = std::find_if(scores.begin(), scores.end(), [&](auto s) { return s.second >= best - 0.005; });
  bool rising = true;
  for (std::size_t k = 1; k < scores.size(); ++k) rising = rising && scores[k].second >= scores[k - 1].second;
  fmt::print("best R2 {:.4f}; width {} is within 0.005 of it; R2 {} with width\n", best, enough->first,
             rising ? "non-decreasing" : "not monotone");
  const fs::path path = cfg.out / "tune.csv";
  cli::write_text(path, csv);
  cli::stamp_csv(path, provenance(cfg));
  fmt::print("wrote {}\n", path.string());
  return cli::kOk;
}

// ---------------------------------------------------------------- report

/// Markdown table of a CSV artifact; provenance comments become a caption line.
std::string markdown_table(const fs::path& path) {
  std::ifstream f(path);
  std::string line, out, caption;
  bool header = true;
  while (std::getline(f, line)) {
    if (line.rfind("# ", 0) == 0) {
      caption = line.substr(2);
      continue;
    }
    std::string row = "|";
    std::stringstream ss(line);
    std::string cell;
    int cells = 0;
    while (std::getline(ss, cell, ',')) {
      row += " " + cell + " |";
      ++cells;
    }
    out += row + "\n";
    if (header) {
      out += "|";
      for (int k = 0; k < cells; ++k) out += " --- |";
      out += "\n";
      header = false;
    }
  }
  return fmt::format("## {}\n\n{}{}\n", path.filename().string(), caption.empty() ? "" : "_" + caption + "_\n\n", out);
}

int cmd_report(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ParseError(fmt::format("{} is not a directory", dir));
  const std::vector<std::string> order{"compare.csv", "outcome_em.csv", "outcome_caem.csv", "sensitivity.csv",
                                       "encode_check.csv", "tune.csv"};
  std::string md = "# Run report\n\n";
  int found = 0;
  for (const std::string& name : order) {
    const fs::path p = fs::path(dir) / name;
    if (!fs::exists(p)) continue;
    md += markdown_table(p);
    ++found;
  }
  if (fs::exists(fs::path(dir) / "sensitivity.svg")) md += "![price sensitivity](sensitivity.svg)\n";
  if (found == 0) throw ParseError(fmt::format("no run artifacts in {}", dir));
  cli::write_text(fs::path(dir) / "report.md", md);
  std::cout << md;
  return cli::kOk;
}

// ---------------------------------------------------------------- wiring

void add_common(CLI::App* sub, Overrides& o, bool with_solver, bool with_out = true) {
  sub->add_option("--config", o.config, "JSON run configuration; flags override it")->check(CLI::ExistingFile);
  sub->add_option("--case", o.case_path, "Network case JSON");
  if (with_out) sub->add_option("--out", o.out, "Output directory");
  if (with_solver) {
    sub->add_option("--tariff", o.tariff, "Carbon tariff blocks price:cap,...  ($/tCO2 : tCO2/h)");
    sub->add_option("--gap", o.gap, "Relative optimality gap");
    sub->add_option("--nodes", o.nodes, "Branch-and-bound node limit");
    sub->add_option("--time-limit", o.time_limit, "Solver time limit in seconds");
  }
}

void add_model_flags(CLI::App* sub, ModelFlags& mf, bool required) {
  auto* m = sub->add_option("--model", mf.model, "Carbon-flow network JSON");
  if (required) m->required();
  sub->add_option("--es-dis", mf.es_dis, "Discharge storage network (default <model>_es_dis.json)");
  sub->add_option("--es-cha", mf.es_cha, "Charge storage network (default <model>_es_cha.json)");
  sub->add_option("--scenario-seed", mf.scenario.seed, "Sample the scenario with this seed (default nominal)");
  sub->add_option("--scenario-index", mf.scenario.index, "Index of the sampled scenario");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Carbon-aware energy management with sparse carbon-flow surrogates"};
  app.set_version_flag("--version", CEFOPT_VERSION);
  app.require_subcommand(1);

  Overrides o;
  std::function<int()> run;

  auto* gen = app.add_subcommand("gen-data", "Sample scenarios, label them and write datasets");
  add_common(gen, o, false);
  std::optional<int> n_scen, storage_samples;
  gen->add_option("--n", n_scen, "Number of scenarios");
  gen->add_option("--storage-samples", storage_samples, "Tuples per storage dataset");
  gen->add_option("--seed", o.seed, "RNG seed")->required();
  gen->callback([&] { run = [&] { return cmd_gen_data(o, n_scen, storage_samples); }; });

  auto* train = app.add_subcommand("train", "Train the carbon-flow and storage networks");
  add_common(train, o, false, false);
  TrainFlags tf;
  train->add_option("--data", tf.data, "Dataset directory from gen-data")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", tf.out, "Carbon-flow model file; storage nets and the curve go next to it")->required();
  train->add_option("--dims", tf.dims, "Layer widths, e.g. 12,16,16,4");
  train->add_option("--sparsity", tf.sparsity, "One value for all sparse layers, or one per layer");
  train->add_flag("--dense", tf.dense, "Train without sparsity");
  train->add_option("--epochs", tf.epochs, "Training epochs");
  train->add_option("--lr", tf.lr, "Initial learning rate");
  train->add_option("--storage-width", tf.storage_width, "Hidden width of the storage networks");
  train->add_option("--storage-epochs", tf.storage_epochs, "Training epochs of the storage networks");
  train->add_option("--seed", o.seed, "RNG seed")->required();
  train->callback([&] { run = [&] { return cmd_train(o, tf); }; });

  auto* check = app.add_subcommand("encode-check", "Compare the MILP embedding with the forward pass");
  add_common(check, o, false);
  std::string check_model, check_data;
  int check_n = 100;
  std::optional<std::string> check_other;
  check->add_option("--model", check_model, "Network JSON")->required()->check(CLI::ExistingFile);
  check->add_option("--data", check_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  check->add_option("--n", check_n, "Number of samples");
  check->add_option("--compare", check_other, "Second network, e.g. the dense counterpart")->check(CLI::ExistingFile);
  check->callback([&] { run = [&] { return cmd_encode_check(o, check_model, check_data, check_n, check_other); }; });

  auto* solve = app.add_subcommand("solve", "Solve one schedule");
  add_common(solve, o, true);
  ModelFlags mf;
  std::string mode = "em";
  std::optional<std::string> mps;
  solve->add_option("--mode", mode, "em or caem")->check(CLI::IsMember({"em", "caem"}));
  add_model_flags(solve, mf, false);
  solve->add_option("--export-mps", mps, "Write the model in MPS format");
  solve->callback([&] { run = [&] { return cmd_solve(o, mode, mf, mps); }; });

  auto* cmp = app.add_subcommand("compare", "Solve EM and CA-EM and report the differences");
  add_common(cmp, o, true);
  add_model_flags(cmp, mf, true);
  cmp->callback([&] { run = [&] { return cmd_compare(o, mf); }; });

  auto* sweep = app.add_subcommand("sweep", "Carbon price sensitivity curve (CSV and SVG)");
  add_common(sweep, o, true);
  add_model_flags(sweep, mf, true);
  std::string scales = "0,0.25,0.5,0.75,1,1.5,2,3";
  sweep->add_option("--scales", scales, "Ascending tariff multipliers")->capture_default_str();
  sweep->callback([&] { run = [&] { return cmd_sweep(o, mf, scales); }; });

  auto* tune = app.add_subcommand("tune", "Grid search over hidden widths");
  add_common(tune, o, false);
  std::string tune_data, widths = "8,16,32,64";
  int layers = 2;
  std::optional<int> tune_epochs;
  tune->add_option("--data", tune_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  tune->add_option("--widths", widths, "Hidden widths to try")->capture_default_str();
  tune->add_option("--layers", layers, "Hidden layers per network");
  tune->add_option("--epochs", tune_epochs, "Training epochs");
  tune->add_option("--seed", o.seed, "RNG seed")->required();
  tune->callback([&] { run = [&] { return cmd_tune(o, tune_data, widths, layers, tune_epochs); }; });

  auto* report = app.add_subcommand("report", "Collect the CSV artifacts of a run directory into report.md");
  std::string report_dir;
  report->add_option("--dir", report_dir, "Run directory")->required();
  report->callback([&] { run = [&] { return cmd_report(report_dir); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kInputError;
  }

  try {
    return run();
  } catch (const InfeasibleModel& e) {
    fmt::print(stderr, "infeasible: {}\n", e.what());
    return cli::kInfeasible;
  } catch (const NumericalError& e) {
    fmt::print(stderr, "numerical failure: {}\n", e.what());
    return cli::kNumericalFailure;
  } catch (const ParseError& e) {
    fmt::print(stderr, "input error: {}\n", e.what());
    return cli::kInputError;
  } catch (const ValidationError& e) {
    fmt::print(stderr, "input error: {}\n", e.what());
    return cli::kInputError;
  } catch (const ContractViolation& e) {
    fmt::print(stderr, "input error: {}\n", e.what());
    return cli::kInputError;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return cli::kFailure;
  }
}
