#include "cefopt/caem/schedule.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "cefopt/cef/carbon_flow.hpp"
#include "cefopt/error.hpp"

namespace cefopt::caem {

using grid::NetworkCase;
using milp::LinExpr;
using milp::Model;
using milp::Var;

double Lines::max_at(double x) const {
  double best = -milp::kInf;
  for (std::size_t k = 0; k < slope.size(); ++k) best = std::max(best, slope[k] * x + intercept[k]);
  return best;
}

double Lines::min_at(double x) const {
  double best = milp::kInf;
  for (std::size_t k = 0; k < slope.size(); ++k) best = std::min(best, slope[k] * x + intercept[k]);
  return best;
}

double utility_exact(const grid::Load& load, double p) {
  if (load.beta <= 0.0) return load.alpha * p;
  const double sat = load.alpha / (2.0 * load.beta);
  const double q = std::min(p, sat);
  return load.alpha * q - load.beta * q * q;
}

namespace {

// Secant pieces of f on [lo, hi]; consecutive pieces with equal slopes merge.
milp::ConcavePwl secant_pwl(const auto& f, double lo, double hi, int segments) {
  milp::ConcavePwl fn;
  fn.x0 = lo;
  fn.y0 = f(lo);
  if (hi - lo <= 1e-12 * std::max(1.0, std::abs(hi))) {
    fn.slopes = {0.0};
    return fn;
  }
  const double h = (hi - lo) / segments;
  for (int k = 0; k < segments; ++k) {
    const double a = lo + k * h;
    const double b = k + 1 == segments ? hi : a + h;
    const double s = (f(b) - f(a)) / (b - a);
    if (!fn.slopes.empty() && fn.slopes.back() - s <= 1e-12 * std::max(1.0, std::abs(s))) continue;
    if (!fn.slopes.empty()) fn.breakpoints.push_back(a);
    fn.slopes.push_back(s);
  }
  return fn;
}

Lines lines_of(const milp::ConcavePwl& fn) {
  Lines l;
  for (std::size_t k = 0; k < fn.slopes.size(); ++k) {
    l.slope.push_back(fn.slopes[k]);
    l.intercept.push_back(fn.intercept(k));
  }
  return l;
}

void check_scenario(const NetworkCase& c, const scen::Scenario& s) {
  if (s.load_factor.size() != c.loads.size()) {
    throw ContractViolation("scenario needs one load factor per load");
  }
  if (!s.cost_factor.empty() && s.cost_factor.size() != c.generators.size()) {
    throw ContractViolation("scenario needs one cost factor per generator");
  }
}

double cost_factor(const scen::Scenario& s, std::size_t g) {
  return s.cost_factor.empty() ? 1.0 : s.cost_factor[g];
}

}  // namespace

Lines utility_lines(const grid::Load& load, double lo, double hi, int segments) {
  return lines_of(secant_pwl([&](double p) { return utility_exact(load, p); }, lo, hi, segments));
}

Lines generation_lines(const grid::Generator& g, double factor, int segments) {
  const double b = g.cost_b * factor;
  auto cost = [&](double p) { return g.cost_a * p * p + b * p + g.cost_c; };
  if (g.cost_a == 0.0 || g.p_max - g.p_min <= 1e-12) return {{b}, {g.cost_c}};
  // Convex cost: secants of -cost form a concave function.
  const milp::ConcavePwl neg = secant_pwl([&](double p) { return -cost(p); }, g.p_min, g.p_max, segments);
  Lines l = lines_of(neg);
  for (std::size_t k = 0; k < l.slope.size(); ++k) {
    l.slope[k] = -l.slope[k];
    l.intercept[k] = -l.intercept[k];
  }
  return l;
}

ScheduleModel build_em(const NetworkCase& c, const scen::Scenario& s, const EmOptions& opt) {
  c.validate();
  check_scenario(c, s);
  if (opt.utility_segments < 1 || opt.cost_segments < 1) throw ContractViolation("need at least one segment");
  if (opt.demand_floor < 0.0 || opt.demand_floor > 1.0) throw ContractViolation("demand floor must lie in [0, 1]");
  ScheduleModel sm{Model(c.name + "_em"), {}, std::nullopt};
  Model& m = sm.model;
  EmHandles& h = sm.em;
  const double dt = c.dt;
  LinExpr objective;
  for (std::size_t t = 0; t < c.horizon; ++t) {
    const int row_begin = m.num_rows();
    std::vector<double> lo, hi;
    double load_total = 0.0;
    for (std::size_t d = 0; d < c.loads.size(); ++d) {
      const double p = s.demand(c, d, t);
      hi.push_back(p);
      lo.push_back(opt.demand_floor * p);
      load_total += p;
    }
    grid::PeriodVars pv = grid::add_period_vars(m, c, t, lo, hi);
    grid::add_acpf_constraints(m, c, t, pv);

    std::vector<Var> util;
    std::vector<Lines> util_fn;
    for (std::size_t d = 0; d < c.loads.size(); ++d) {
      const auto fn = secant_pwl([&](double p) { return utility_exact(c.loads[d], p); }, lo[d], hi[d],
                                 opt.utility_segments);
      const Var u = milp::add_concave_pwl_utility(m, pv.p_d[d], fn, fmt::format("u_{}_t{}", c.loads[d].name, t));
      objective.add(u, dt);
      util.push_back(u);
      util_fn.push_back(lines_of(fn));
    }

    std::vector<Var> cost, up, down;
    std::vector<Lines> cost_fn;
    LinExpr up_total, down_total;
    for (std::size_t g = 0; g < c.generators.size(); ++g) {
      const grid::Generator& gen = c.generators[g];
      const std::string gname = fmt::format("{}_t{}", gen.name, t);
      const Lines lines = generation_lines(gen, cost_factor(s, g), opt.cost_segments);
      const Var cg = m.add_var("cg_" + gname, -milp::kInf, milp::kInf);
      for (std::size_t k = 0; k < lines.slope.size(); ++k) {
        m.add_ge(cg, lines.slope[k] * LinExpr(pv.p_g[g]) + lines.intercept[k], fmt::format("cgseg{}_{}", k, gname));
      }
      objective.add(cg, -dt);
      const double head = gen.p_max - gen.p_min;
      const Var ru = m.add_var("rup_" + gname, 0.0, head);
      const Var rd = m.add_var("rdn_" + gname, 0.0, head);
      m.add_le(LinExpr(pv.p_g[g]) + ru, gen.p_max, "rupcap_" + gname);
      m.add_ge(LinExpr(pv.p_g[g]) - rd, gen.p_min, "rdncap_" + gname);
      objective.add(ru, -gen.reserve_cost).add(rd, -gen.reserve_cost);
      up_total.add(ru, 1.0);
      down_total.add(rd, 1.0);
      if (t > 0 || gen.p_init >= 0.0) {
        const LinExpr prev = t > 0 ? LinExpr(h.periods[t - 1].p_g[g]) : LinExpr(gen.p_init);
        m.add_le(LinExpr(pv.p_g[g]) - prev, gen.ramp_up, "rampup_" + gname);
        m.add_ge(LinExpr(pv.p_g[g]) - prev, -gen.ramp_down, "rampdn_" + gname);
      }
      cost.push_back(cg);
      up.push_back(ru);
      down.push_back(rd);
      cost_fn.push_back(lines);
    }
    const double req = opt.reserve_fraction * load_total;
    m.add_ge(up_total, req, fmt::format("resup_t{}", t));
    m.add_ge(down_total, req, fmt::format("resdn_t{}", t));

    for (std::size_t k = 0; k < c.storages.size(); ++k) {
      const grid::Storage& st = c.storages[k];
      const std::string sname = fmt::format("{}_t{}", st.name, t);
      const LinExpr psi_prev = t > 0 ? LinExpr(h.periods[t - 1].psi[k]) : LinExpr(st.psi0);
      // psi_t = (1 - leakage) psi_{t-1} + eta_ch p_cha dt - p_dis dt / eta_dis
      m.add_eq(LinExpr(pv.psi[k]),
               (1.0 - st.leakage) * psi_prev + (st.eta_ch * dt) * LinExpr(pv.p_cha[k]) -
                   (dt / st.eta_dis) * LinExpr(pv.p_dis[k]),
               "soc_" + sname);
      m.add_le(pv.p_cha[k], st.p_cha_max * LinExpr(pv.mu_cha[k]), "chaon_" + sname);
      m.add_le(pv.p_dis[k], st.p_dis_max * LinExpr(pv.mu_dis[k]), "dison_" + sname);
      m.add_le(LinExpr(pv.mu_cha[k]) + pv.mu_dis[k], 1.0, "mutex_" + sname);
      const LinExpr cost_es = (st.degradation_price * dt) * (LinExpr(pv.p_cha[k]) + pv.p_dis[k]) +
                              (st.degradation_price * st.leakage) * psi_prev;
      objective -= cost_es;
      if (opt.terminal_energy && t + 1 == c.horizon) m.add_ge(pv.psi[k], st.psi0, "terminal_" + st.name);
    }

    h.periods.push_back(std::move(pv));
    h.utility.push_back(std::move(util));
    h.utility_fn.push_back(std::move(util_fn));
    h.gen_cost.push_back(std::move(cost));
    h.gen_cost_fn.push_back(std::move(cost_fn));
    h.r_up.push_back(std::move(up));
    h.r_down.push_back(std::move(down));
    h.reserve_requirement.push_back(req);
    h.period_rows.emplace_back(row_begin, m.num_rows());
  }
  m.set_objective(milp::ObjSense::Maximize, objective);
  return sm;
}

std::vector<double> features(const NetworkCase& c, const grid::PeriodState& s) {
  std::vector<double> x = grid::net_injection(c, s);
  const std::vector<double> d = grid::bus_demand(c, s);
  x.insert(x.end(), d.begin(), d.end());
  return x;
}

std::vector<LinExpr> feature_exprs(const NetworkCase& c, const grid::PeriodVars& v) {
  std::vector<LinExpr> x;
  for (std::size_t i = 0; i < c.num_buses(); ++i) x.push_back(grid::net_injection_expr(c, v, i));
  for (std::size_t i = 0; i < c.num_buses(); ++i) x.push_back(grid::bus_demand_expr(c, v, i));
  return x;
}

namespace {

void require_same_case(const snn::SparseNet& net, const std::string& hash, const char* what) {
  if (net.case_hash != hash) {
    throw ContractViolation(fmt::format("{} network was trained on a different case (model {}, case {})",
                                        what, net.case_hash.substr(0, 12), hash.substr(0, 12)));
  }
}

struct InputBox {
  Eigen::VectorXd lo, hi;
};

// Normalized trust box intersected with the range the inputs can take under
// the model's own variable bounds.
InputBox input_box(const Model& m, const snn::SparseNet& net, const std::vector<LinExpr>& inputs,
                   double margin, const std::string& name) {
  const auto n = static_cast<Eigen::Index>(inputs.size());
  InputBox box{Eigen::VectorXd::Constant(n, -margin), Eigen::VectorXd::Constant(n, 1.0 + margin)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const milp::Interval r = m.range_of(inputs[static_cast<std::size_t>(i)]);
    const double min = net.scaling.x_min(i), range = net.scaling.x_range(i);
    box.lo(i) = std::max(box.lo(i), (r.lower - min) / range);
    box.hi(i) = std::min(box.hi(i), (r.upper - min) / range);
    if (box.lo(i) > box.hi(i)) {
      throw InfeasibleModel(fmt::format("{}: input {} cannot reach the network's training range", name, i));
    }
  }
  return box;
}

}  // namespace

ScheduleModel build_caem(const NetworkCase& c, const scen::Scenario& s, const CaemNets& nets,
                         const milp::BlockedTariff& tariff_in, const CaemOptions& opt) {
  const std::string hash = grid::case_hash(c);
  require_same_case(nets.cef, hash, "carbon-flow");
  const bool chain = opt.storage_chain && !c.storages.empty() && nets.es_dis && nets.es_cha;
  if (chain) {
    require_same_case(*nets.es_dis, hash, "storage discharge");
    require_same_case(*nets.es_cha, hash, "storage charge");
  }
  const std::vector<std::size_t> load_buses = c.load_buses();
  if (nets.cef.inputs() != static_cast<int>(2 * c.num_buses()) ||
      nets.cef.outputs() != static_cast<int>(load_buses.size())) {
    throw ContractViolation("carbon-flow network dims do not match the case feature map");
  }
  milp::BlockedTariff tariff = tariff_in;
  tariff.dt = c.dt;
  tariff.validate();

  ScheduleModel sm = build_em(c, s, opt.em);
  Model& m = sm.model;
  m.set_name(c.name + "_caem");
  CarbonHandles ch;
  ch.load_buses = load_buses;
  ch.tariff = tariff;
  const double m_high = opt.intensity_factor * c.max_gci();
  LinExpr carbon_total;
  for (std::size_t t = 0; t < c.horizon; ++t) {
    const grid::PeriodVars& pv = sm.em.periods[t];
    const std::string cname = fmt::format("cef_t{}", t);
    const std::vector<LinExpr> fx = feature_exprs(c, pv);
    const InputBox cbox = input_box(m, nets.cef, fx, opt.input_margin, cname);
    const int carbon_begin = m.num_rows();
    // Tightening context: this period's EM rows plus the carbon rows added for it.
    auto context = [&] {
      encode::Tightening tg;
      for (int i = sm.em.period_rows[t].first; i < sm.em.period_rows[t].second; ++i) tg.context_rows.push_back(i);
      for (int i = carbon_begin; i < m.num_rows(); ++i) tg.context_rows.push_back(i);
      return tg;
    };
    const encode::Tightening ctg = context();
    encode::EncodedNet enc = encode::encode_network(m, nets.cef, fx, cbox.lo, cbox.hi, cname,
                                                    opt.tighten_bounds ? &ctg : nullptr);
    std::vector<Var> costs;
    for (std::size_t j = 0; j < load_buses.size(); ++j) {
      const milp::BlockedCost bc = milp::add_blocked_cost(
          m, enc.outputs[j], tariff, fmt::format("cc_{}_t{}", c.buses[load_buses[j]].id, t));
      carbon_total.add(bc.cost, 1.0);
      costs.push_back(bc.cost);
    }
    int unstable = enc.unstable;
    std::vector<EsChain> chains;
    if (chain) {
      for (std::size_t k = 0; k < c.storages.size(); ++k) {
        const grid::Storage& st = c.storages[k];
        const std::string sname = fmt::format("{}_t{}", st.name, t);
        const LinExpr psi_prev = t > 0 ? LinExpr(sm.em.periods[t - 1].psi[k]) : LinExpr(st.psi0);
        const LinExpr e_prev = t > 0 ? LinExpr(ch.es[t - 1][k].gate.e_es) : LinExpr(st.e0);
        EsChain es;
        // Bus intensity seen by the charging network: predicted rate over the
        // scenario demand upper bound of the storage bus.
        const auto it = std::find(load_buses.begin(), load_buses.end(), st.bus);
        if (it != load_buses.end()) {
          const auto j = static_cast<Eigen::Index>(it - load_buses.begin());
          double p_hi = 0.0;
          for (std::size_t d = 0; d < c.loads.size(); ++d) {
            if (c.loads[d].bus == st.bus) p_hi += s.demand(c, d, t);
          }
          es.e_node = m.add_var("enode_" + sname, enc.output_lo(j) / p_hi, enc.output_hi(j) / p_hi);
          m.add_eq(p_hi * LinExpr(es.e_node), enc.outputs[static_cast<std::size_t>(j)], "enodedef_" + sname);
        } else {
          es.e_node = m.add_var("enode_" + sname, 0.0, m_high);
        }
        auto inputs = [&](Var p) {
          return std::vector<LinExpr>{LinExpr(pv.psi[k]), psi_prev, LinExpr(p), e_prev, LinExpr(es.e_node)};
        };
        auto embed = [&](const snn::SparseNet& net, Var p, const std::string& name) {
          const std::vector<LinExpr> x = inputs(p);
          const InputBox box = input_box(m, net, x, opt.input_margin, name);
          const encode::Tightening tg = context();
          return encode::encode_network(m, net, x, box.lo, box.hi, name, opt.tighten_storage_bounds ? &tg : nullptr);
        };
        es.f_dis = embed(*nets.es_dis, pv.p_dis[k], "fdis_" + sname);
        es.f_cha = embed(*nets.es_cha, pv.p_cha[k], "fcha_" + sname);
        const encode::GateBranch dis{LinExpr(es.f_dis.outputs[0]), es.f_dis.output_lo(0),
                                     es.f_dis.output_hi(0), pv.mu_dis[k]};
        const encode::GateBranch cha{LinExpr(es.f_cha.outputs[0]), es.f_cha.output_lo(0),
                                     es.f_cha.output_hi(0), pv.mu_cha[k]};
        es.gate = encode::encode_es_gate(m, dis, cha, &e_prev, 0.0, m_high, "ees_" + sname);
        unstable += es.f_dis.unstable + es.f_cha.unstable;
        chains.push_back(std::move(es));
      }
    }
    if (t == 0) {
      ch.unstable_per_period = unstable;
      ch.gate_binaries_per_period = static_cast<int>(2 * c.storages.size());
    }
    ch.r_pred.push_back(enc.outputs);
    ch.carbon_cost.push_back(std::move(costs));
    ch.cef.push_back(std::move(enc));
    ch.es.push_back(std::move(chains));
  }
  m.add_to_objective(-carbon_total);
  sm.carbon = std::move(ch);
  return sm;
}

std::vector<double> caem_start(const NetworkCase& c, const scen::Scenario& s, const ScheduleModel& caem,
                               const CaemNets& nets, const std::vector<double>& em_values) {
  if (!caem.carbon) throw ContractViolation("caem_start needs a carbon-aware model");
  const CarbonHandles& ch = *caem.carbon;
  if (em_values.size() > static_cast<std::size_t>(caem.model.num_vars())) {
    throw ContractViolation("EM solution is longer than the carbon-aware model");
  }
  std::vector<double> start(static_cast<std::size_t>(caem.model.num_vars()), 0.0);
  std::copy(em_values.begin(), em_values.end(), start.begin());
  std::vector<double> e_prev;
  for (const grid::Storage& st : c.storages) e_prev.push_back(st.e0);
  for (std::size_t t = 0; t < c.horizon; ++t) {
    const grid::PeriodState state = grid::extract_state(caem.em.periods[t], start);
    const std::vector<double> x = features(c, state);
    const Eigen::VectorXd r_hat =
        encode::activation_start(nets.cef, ch.cef[t], Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())), start);
    for (std::size_t k = 0; k < ch.es[t].size(); ++k) {
      const grid::Storage& st = c.storages[k];
      const auto it = std::find(ch.load_buses.begin(), ch.load_buses.end(), st.bus);
      double e_node = 0.0;
      if (it != ch.load_buses.end()) {
        double p_hi = 0.0;
        for (std::size_t d = 0; d < c.loads.size(); ++d) {
          if (c.loads[d].bus == st.bus) p_hi += s.demand(c, d, t);
        }
        e_node = r_hat(it - ch.load_buses.begin()) / p_hi;
      }
      const double psi_prev = t > 0 ? start[static_cast<std::size_t>(caem.em.periods[t - 1].psi[k].index)] : st.psi0;
      auto input = [&](double p) {
        Eigen::VectorXd v(5);
        v << state.psi[k], psi_prev, p, e_prev[k], e_node;
        return v;
      };
      const double f_dis = encode::activation_start(*nets.es_dis, ch.es[t][k].f_dis, input(state.p_dis[k]), start)(0);
      const double f_cha = encode::activation_start(*nets.es_cha, ch.es[t][k].f_cha, input(state.p_cha[k]), start)(0);
      const auto& pv = caem.em.periods[t];
      if (start[static_cast<std::size_t>(pv.mu_dis[k].index)] > 0.5) {
        e_prev[k] = f_dis;
      } else if (start[static_cast<std::size_t>(pv.mu_cha[k].index)] > 0.5) {
        e_prev[k] = f_cha;
      }
    }
  }
  return start;
}

CaemSolve solve_caem(const NetworkCase& c, const scen::Scenario& s, const CaemNets& nets,
                     const milp::BlockedTariff& tariff, const milp::BbOptions& solver, const CaemOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const ScheduleModel em = build_em(c, s, opt.em);
  const milp::SolveResult er = milp::bb_solve(em.model, solver);
  if (!er.has_solution()) throw InfeasibleModel("baseline EM has no solution: " + milp::to_string(er.status));


  CaemOptions core_opt = opt;
  core_opt.storage_chain = false;
  const ScheduleModel core = build_caem(c, s, nets, tariff, core_opt);

  milp::BbOptions core_solver = solver;
  core_solver.start = caem_start(c, s, core, nets, er.values);
  const milp::SolveResult cr = milp::bb_solve(core.model, core_solver);
  if (!cr.has_solution()) throw InfeasibleModel("CA-EM has no solution: " + milp::to_string(cr.status));


  CaemSolve out{build_caem(c, s, nets, tariff, opt), {}};

  const bool chain = out.model.carbon && !out.model.carbon->es.empty() && !out.model.carbon->es.front().empty();
  if (!chain) {
    out.result = cr;
  } else {
    // Completion: every core binary keeps its value; only the storage chain is left free.
    Model& full = out.model.model;
    std::unordered_map<std::string, int> core_index;
    for (int j = 0; j < core.model.num_vars(); ++j) core_index.emplace(core.model.var(j).name, j);
    std::vector<double> start = caem_start(c, s, out.model, nets, std::vector<double>(cr.values.begin(), cr.values.begin() + static_cast<long>(em.model.num_vars())));
    std::vector<int> fixed;
    for (int j = 0; j < full.num_vars(); ++j) {
      const auto it = core_index.find(full.var(j).name);
      if (it == core_index.end()) continue;
      const double v = cr.values[static_cast<std::size_t>(it->second)];
      start[static_cast<std::size_t>(j)] = v;
      if (full.var(j).kind == milp::VarKind::Binary) {
        full.fix(Var{j}, std::round(v));
        fixed.push_back(j);
      }
    }
    milp::BbOptions done = solver;
    done.start = std::move(start);
    milp::SolveResult fr = milp::bb_solve(full, done);
    if (!fr.has_solution()) throw InfeasibleModel("storage chain cannot be completed: " + milp::to_string(fr.status));
    // Free the binaries again so the returned model is the CA-EM model itself.
    for (int j : fixed) full.set_bounds(Var{j}, 0.0, 1.0);
    fr.status = cr.status;
    fr.bound = cr.bound;
    fr.gap = cr.gap;
    fr.nodes += cr.nodes;
    fr.lp_iterations += cr.lp_iterations;
    fr.start_accepted = cr.start_accepted;
    out.result = std::move(fr);
  }
  out.result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

namespace {

double exact_cost(const milp::BlockedTariff& tariff, double rate) {
  // Rates above the last cap are charged at the last price.
  double extra = 0.0;
  if (!tariff.blocks.empty()) extra = std::max(0.0, rate - tariff.total_cap()) * tariff.blocks.back().price * tariff.dt;
  return tariff.cost(rate) + extra;
}

}  // namespace

ScheduleOutcome evaluate(const NetworkCase& c, const ScheduleModel& sm, const milp::SolveResult& r,
                         const milp::BlockedTariff* tariff) {
  if (!r.has_solution()) throw ContractViolation("evaluate needs a solve result with a primal solution");
  if (static_cast<int>(r.values.size()) != sm.model.num_vars()) {
    throw ContractViolation("solution does not belong to this model");
  }
  const milp::ResidualReport rep = milp::check_solution(sm.model, r.values, true);
  if (!rep.ok()) {
    throw NumericalError(fmt::format("evaluation: solution violates the model (row {:.3g}, bound {:.3g}, "
                                     "integrality {:.3g} at {})",
                                     rep.max_row_violation, rep.max_bound_violation,
                                     rep.max_integrality_violation, rep.worst));
  }
  const std::vector<double>& x = r.values;
  const EmHandles& h = sm.em;
  const double dt = c.dt;
  ScheduleOutcome o;
  o.objective = r.objective;
  o.status = r.status;
  o.seconds = r.seconds;
  o.nodes = r.nodes;
  o.gap = r.gap;
  o.binaries = sm.model.num_binaries();
  o.nonzeros = sm.model.nonzeros();
  for (std::size_t t = 0; t < c.horizon; ++t) {
    const grid::PeriodState st = grid::extract_state(h.periods[t], x);
    for (std::size_t d = 0; d < c.loads.size(); ++d) {
      o.utility += dt * h.utility_fn[t][d].min_at(st.p_d[d]);
      o.load_energy += dt * st.p_d[d];
    }
    for (std::size_t g = 0; g < c.generators.size(); ++g) {
      o.generation_cost += dt * h.gen_cost_fn[t][g].max_at(st.p_g[g]);
      o.reserve_cost += c.generators[g].reserve_cost *
                        (x[static_cast<std::size_t>(h.r_up[t][g].index)] + x[static_cast<std::size_t>(h.r_down[t][g].index)]);
    }
    for (std::size_t k = 0; k < c.storages.size(); ++k) {
      const grid::Storage& s = c.storages[k];
      const double psi_prev = t > 0 ? o.state[t - 1].psi[k] : s.psi0;
      o.storage_cost += s.degradation_price * dt * (st.p_cha[k] + st.p_dis[k]) +
                        s.degradation_price * s.leakage * psi_prev;
    }
    o.state.push_back(st);
  }
  const std::vector<cef::CarbonFlowResult> exact = cef::cef_for_dispatch(c, o.state);
  const std::vector<std::size_t> load_buses = c.load_buses();
  for (std::size_t t = 0; t < c.horizon; ++t) {
    const Eigen::VectorXd& rl = exact[t].r_l;
    o.r_l.emplace_back(rl.data(), rl.data() + rl.size());
    o.emission += rl.sum() * dt;
    o.e_es_exact.push_back(exact[t].e_es);
    if (tariff != nullptr) {
      milp::BlockedTariff tf = *tariff;
      tf.dt = dt;
      for (std::size_t b : load_buses) o.exact_carbon_cost += exact_cost(tf, rl(static_cast<Eigen::Index>(b)));
    }
  }
  if (sm.carbon) {
    const CarbonHandles& ch = *sm.carbon;
    for (std::size_t t = 0; t < c.horizon; ++t) {
      for (std::size_t j = 0; j < ch.load_buses.size(); ++j) {
        o.emission_predicted += dt * x[static_cast<std::size_t>(ch.r_pred[t][j].index)];
        o.carbon_cost += x[static_cast<std::size_t>(ch.carbon_cost[t][j].index)];
      }
      std::vector<double> e;
      for (const EsChain& es : ch.es[t]) e.push_back(x[static_cast<std::size_t>(es.gate.e_es.index)]);
      o.e_es_model.push_back(std::move(e));
    }
  }
  o.welfare = o.utility - o.generation_cost - o.reserve_cost - o.storage_cost - o.carbon_cost;
  o.carbon_welfare = o.welfare + o.carbon_cost - o.exact_carbon_cost;
  const double scale = std::max(1.0, std::abs(r.objective));
  if (std::abs(o.welfare - r.objective) > 1e-6 * scale) {
    throw NumericalError(fmt::format("evaluation: welfare {:.12g} disagrees with the objective {:.12g}",
                                     o.welfare, r.objective));
  }
  return o;
}

double pct_change(double from, double to) {
  if (from == 0.0 && to == 0.0) return 0.0;
  if (from == 0.0) return to > 0.0 ? milp::kInf : -milp::kInf;
  return 100.0 * (to - from) / std::abs(from);
}

std::vector<Delta> compare(const ScheduleOutcome& em, const ScheduleOutcome& caem) {
  std::vector<Delta> out;
  auto row = [&](const char* name, double a, double b) { out.push_back({name, a, b, pct_change(a, b)}); };
  row("welfare", em.welfare, caem.welfare);
  row("carbon_welfare", em.carbon_welfare, caem.carbon_welfare);
  row("utility", em.utility, caem.utility);
  row("generation_cost", em.generation_cost, caem.generation_cost);
  row("reserve_cost", em.reserve_cost, caem.reserve_cost);
  row("storage_cost", em.storage_cost, caem.storage_cost);
  row("carbon_cost", em.exact_carbon_cost, caem.exact_carbon_cost);
  row("emission", em.emission, caem.emission);
  row("load_energy", em.load_energy, caem.load_energy);
  return out;
}

std::vector<SensitivityPoint> price_sensitivity(const NetworkCase& c, const scen::Scenario& s,
                                                const CaemNets& nets, const milp::BlockedTariff& base,
                                                const std::vector<double>& scales,
                                                const milp::BbOptions& solver, const CaemOptions& opt) {
  if (!std::is_sorted(scales.begin(), scales.end())) throw ContractViolation("scale grid must be ascending");
  const ScheduleModel em = build_em(c, s, opt.em);
  const milp::SolveResult er = milp::bb_solve(em.model, solver);
  if (!er.has_solution()) throw InfeasibleModel("baseline EM has no solution: " + milp::to_string(er.status));
  const double em_load = evaluate(c, em, er, nullptr).load_energy;
  std::vector<SensitivityPoint> pts;
  for (double k : scales) {
    SensitivityPoint p;
    p.scale = k;
    try {
      const CaemSolve cs = solve_caem(c, s, nets, base.scaled(k), solver, opt);
      const milp::SolveResult& r = cs.result;
      const ScheduleOutcome o = evaluate(c, cs.model, r, nullptr);
      p.ok = true;
      p.emission = o.emission;
      p.load_energy = o.load_energy;
      p.demand_reduction = em_load - o.load_energy;
      p.seconds = r.seconds;
    } catch (const Error& e) {
      p.error = e.what();
    }
    pts.push_back(std::move(p));
  }
  return pts;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw Error(fmt::format("cannot write {}", path.string()));
  return f;
}

}  // namespace

void write_outcome_csv(const std::filesystem::path& path, const std::vector<Delta>& deltas) {
  std::ofstream f = open_out(path);
  f << "metric,EM,CA-EM,delta_pct\n";
  for (const Delta& d : deltas) f << fmt::format("{},{:.10g},{:.10g},{:.6g}\n", d.metric, d.em, d.caem, d.pct);
}

void write_bus_emission_csv(const std::filesystem::path& path, const NetworkCase& c, const ScheduleOutcome& o) {
  std::ofstream f = open_out(path);
  f << "period,bus,r_l\n";
  for (std::size_t t = 0; t < o.r_l.size(); ++t) {
    for (std::size_t i = 0; i < o.r_l[t].size(); ++i) {
      f << fmt::format("{},{},{:.10g}\n", t, c.buses[i].id, o.r_l[t][i]);
    }
  }
}

void write_sensitivity_csv(const std::filesystem::path& path, const std::vector<SensitivityPoint>& pts) {
  std::ofstream f = open_out(path);
  f << "scale,ok,emission,load_energy,demand_reduction,seconds,error\n";
  for (const SensitivityPoint& p : pts) {
    std::string err = p.error;
    std::replace(err.begin(), err.end(), ',', ';');
    f << fmt::format("{:.6g},{},{:.10g},{:.10g},{:.10g},{:.4g},{}\n", p.scale, p.ok ? 1 : 0, p.emission,
                     p.load_energy, p.demand_reduction, p.seconds, err);
  }
}

std::string sensitivity_svg(const std::vector<SensitivityPoint>& pts) {
  const double w = 640, h = 400, left = 70, right = 70, top = 30, bottom = 50;
  std::vector<const SensitivityPoint*> ok;
  for (const SensitivityPoint& p : pts) {
    if (p.ok) ok.push_back(&p);
  }
  auto range = [&](auto get) {
    double lo = milp::kInf, hi = -milp::kInf;
    for (const SensitivityPoint* p : ok) {
      lo = std::min(lo, get(*p));
      hi = std::max(hi, get(*p));
    }
    if (ok.empty()) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) hi = lo + 1.0;
    return std::pair{lo, hi};
  };
  const auto [x0, x1] = range([](const SensitivityPoint& p) { return p.scale; });
  const auto [e0, e1] = range([](const SensitivityPoint& p) { return p.emission; });
  const auto [d0, d1] = range([](const SensitivityPoint& p) { return p.demand_reduction; });
  auto px = [&](double v) { return left + (v - x0) / (x1 - x0) * (w - left - right); };
  auto py = [&](double v, double lo, double hi) { return h - bottom - (v - lo) / (hi - lo) * (h - top - bottom); };
  std::string svg = fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n"
      "<line x1=\"{2}\" y1=\"{3}\" x2=\"{4}\" y2=\"{3}\" stroke=\"black\"/>\n"
      "<line x1=\"{2}\" y1=\"{5}\" x2=\"{2}\" y2=\"{3}\" stroke=\"black\"/>\n"
      "<line x1=\"{4}\" y1=\"{5}\" x2=\"{4}\" y2=\"{3}\" stroke=\"black\"/>\n",
      w, h, left, h - bottom, w - right, top);
  std::string e_pts, d_pts;
  for (const SensitivityPoint* p : ok) {
    e_pts += fmt::format("{:.2f},{:.2f} ", px(p->scale), py(p->emission, e0, e1));
    d_pts += fmt::format("{:.2f},{:.2f} ", px(p->scale), py(p->demand_reduction, d0, d1));
  }
  svg += fmt::format("<polyline fill=\"none\" stroke=\"#b22222\" stroke-width=\"2\" points=\"{}\"/>\n", e_pts);
  svg += fmt::format("<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"2\" stroke-dasharray=\"6 3\" points=\"{}\"/>\n", d_pts);
  svg += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">carbon price scale</text>\n",
                     (left + w - right) / 2, h - 12);
  svg += fmt::format("<text x=\"14\" y=\"{0}\" font-size=\"12\" fill=\"#b22222\" transform=\"rotate(-90 14 {0})\" text-anchor=\"middle\">emission (tCO2)</text>\n",
                     (top + h - bottom) / 2);
  svg += fmt::format("<text x=\"{0}\" y=\"{1}\" font-size=\"12\" fill=\"#1f5fa8\" transform=\"rotate(90 {0} {1})\" text-anchor=\"middle\">demand reduction (MWh)</text>\n",
                     w - 14, (top + h - bottom) / 2);
  auto tick = [&](double x, double y, const std::string& label, const char* anchor) {
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"10\" text-anchor=\"{}\">{}</text>\n", x, y, anchor, label);
  };
  tick(px(x0), h - bottom + 15, fmt::format("{:.3g}", x0), "middle");
  tick(px(x1), h - bottom + 15, fmt::format("{:.3g}", x1), "middle");
  tick(left - 5, py(e0, e0, e1), fmt::format("{:.4g}", e0), "end");
  tick(left - 5, py(e1, e0, e1) + 8, fmt::format("{:.4g}", e1), "end");
  tick(w - right + 5, py(d0, d0, d1), fmt::format("{:.4g}", d0), "start");
  tick(w - right + 5, py(d1, d0, d1) + 8, fmt::format("{:.4g}", d1), "start");
  svg += "</svg>\n";
  return svg;
}

}  // namespace cefopt::caem
