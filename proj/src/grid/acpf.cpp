#include "cefopt/grid/acpf.hpp"

#include <fmt/format.h>

#include <numbers>

#include "cefopt/error.hpp"

namespace cefopt::grid {

using milp::LinExpr;
using milp::Model;
using milp::Var;

PeriodVars add_period_vars(Model& model, const NetworkCase& c, std::size_t t,
                           std::span<const double> load_lo, std::span<const double> load_hi) {
  if (load_lo.size() != c.loads.size() || load_hi.size() != c.loads.size()) {
    throw ContractViolation("load bounds must be given for every load");
  }
  PeriodVars v;
  for (const Generator& g : c.generators) {
    v.p_g.push_back(model.add_var(fmt::format("pg_{}_t{}", g.name, t), g.p_min, g.p_max));
    v.q_g.push_back(model.add_var(fmt::format("qg_{}_t{}", g.name, t), g.q_min, g.q_max));
  }
  for (const Renewable& r : c.renewables) {
    v.p_ren.push_back(model.add_var(fmt::format("pr_{}_t{}", r.name, t), 0.0, r.available(t)));
  }
  for (std::size_t d = 0; d < c.loads.size(); ++d) {
    v.p_d.push_back(
        model.add_var(fmt::format("pd_{}_t{}", c.loads[d].name, t), load_lo[d], load_hi[d]));
  }
  for (const Storage& s : c.storages) {
    v.p_cha.push_back(model.add_var(fmt::format("pcha_{}_t{}", s.name, t), 0.0, s.p_cha_max));
    v.p_dis.push_back(model.add_var(fmt::format("pdis_{}_t{}", s.name, t), 0.0, s.p_dis_max));
    v.mu_cha.push_back(model.add_binary(fmt::format("mucha_{}_t{}", s.name, t)));
    v.mu_dis.push_back(model.add_binary(fmt::format("mudis_{}_t{}", s.name, t)));
    v.psi.push_back(model.add_var(fmt::format("psi_{}_t{}", s.name, t), s.psi_min, s.psi_max));
  }
  const double half_pi = std::numbers::pi / 2.0;
  for (std::size_t i = 0; i < c.num_buses(); ++i) {
    const Bus& b = c.buses[i];
    v.v.push_back(model.add_var(fmt::format("v_{}_t{}", b.id, t), b.v_min, b.v_max));
    const double lim = i == 0 ? 0.0 : half_pi;
    v.theta.push_back(model.add_var(fmt::format("th_{}_t{}", b.id, t), -lim, lim));
  }
  for (std::size_t k = 0; k < c.branches.size(); ++k) {
    v.p_flow.push_back(model.add_var(fmt::format("pf_{}_t{}", k, t), -milp::kInf, milp::kInf));
    v.q_flow.push_back(model.add_var(fmt::format("qf_{}_t{}", k, t), -milp::kInf, milp::kInf));
  }
  return v;
}

FlowCoefficients flow_coefficients(const NetworkCase& c, const Branch& br) {
  // G(2V_i - 1) - G(V_i + V_j - 1) = G(V_i - V_j); the constants cancel.
  const double g = c.base_mva * br.g;
  const double b = c.base_mva * br.b;
  return {g, -g, -b, b, -b, b, -g, g};
}

AcpfRows add_acpf_constraints(Model& model, const NetworkCase& c, std::size_t t,
                              const PeriodVars& vars) {
  const std::size_t n = c.num_buses();
  auto need = [&](const std::vector<Var>& vs, std::size_t count, const char* what) {
    if (vs.size() != count) throw BuilderError(fmt::format("period vars: {} has wrong size", what));
    for (Var x : vs) {
      if (!model.has_var(x)) throw BuilderError(fmt::format("unregistered {} variable", what));
    }
  };
  need(vars.p_g, c.generators.size(), "p_g");
  need(vars.q_g, c.generators.size(), "q_g");
  need(vars.p_ren, c.renewables.size(), "p_ren");
  need(vars.p_d, c.loads.size(), "p_d");
  need(vars.p_cha, c.storages.size(), "p_cha");
  need(vars.p_dis, c.storages.size(), "p_dis");
  need(vars.v, n, "v");
  need(vars.theta, n, "theta");
  need(vars.p_flow, c.branches.size(), "p_flow");
  need(vars.q_flow, c.branches.size(), "q_flow");

  AcpfRows rows;
  std::vector<LinExpr> p_out(n), q_out(n);
  for (std::size_t k = 0; k < c.branches.size(); ++k) {
    const Branch& br = c.branches[k];
    const FlowCoefficients fc = flow_coefficients(c, br);
    LinExpr p;
    p.add(vars.v[br.from], fc.p_vi).add(vars.v[br.to], fc.p_vj);
    p.add(vars.theta[br.from], fc.p_ti).add(vars.theta[br.to], fc.p_tj);
    LinExpr q;
    q.add(vars.v[br.from], fc.q_vi).add(vars.v[br.to], fc.q_vj);
    q.add(vars.theta[br.from], fc.q_ti).add(vars.theta[br.to], fc.q_tj);
    rows.p_def.push_back(model.add_eq(vars.p_flow[k], p, fmt::format("pdef_{}_t{}", k, t)));
    rows.q_def.push_back(model.add_eq(vars.q_flow[k], q, fmt::format("qdef_{}_t{}", k, t)));
    rows.limit_fwd.push_back(
        model.add_le(vars.p_flow[k], br.flow_limit, fmt::format("plim+_{}_t{}", k, t)));
    rows.limit_rev.push_back(
        model.add_ge(vars.p_flow[k], -br.flow_limit, fmt::format("plim-_{}_t{}", k, t)));
    p_out[br.from].add(vars.p_flow[k], 1.0);
    p_out[br.to].add(vars.p_flow[k], -1.0);
    q_out[br.from].add(vars.q_flow[k], 1.0);
    q_out[br.to].add(vars.q_flow[k], -1.0);
  }

  for (std::size_t i = 0; i < n; ++i) {
    LinExpr q_inj;
    for (std::size_t g = 0; g < c.generators.size(); ++g) {
      if (c.generators[g].bus == i) q_inj.add(vars.q_g[g], 1.0);
    }
    for (std::size_t d = 0; d < c.loads.size(); ++d) {
      if (c.loads[d].bus == i) q_inj.add(vars.p_d[d], -c.loads[d].q_ratio());
    }
    const int id = c.buses[i].id;
    rows.p_balance.push_back(
        model.add_eq(p_out[i], net_injection_expr(c, vars, i), fmt::format("pbal_{}_t{}", id, t)));
    rows.q_balance.push_back(model.add_eq(q_out[i], q_inj, fmt::format("qbal_{}_t{}", id, t)));
    model.set_bounds(vars.v[i], c.buses[i].v_min, c.buses[i].v_max);
  }
  return rows;
}

FlowValues eval_flows(const NetworkCase& c, std::span<const double> v, std::span<const double> theta) {
  if (v.size() != c.num_buses() || theta.size() != c.num_buses()) {
    throw ContractViolation("eval_flows: voltage/angle vectors must match the bus count");
  }
  FlowValues out;
  out.p.reserve(c.branches.size());
  out.q.reserve(c.branches.size());
  for (const Branch& br : c.branches) {
    const FlowCoefficients fc = flow_coefficients(c, br);
    out.p.push_back(fc.p_vi * v[br.from] + fc.p_vj * v[br.to] + fc.p_ti * theta[br.from] +
                    fc.p_tj * theta[br.to]);
    out.q.push_back(fc.q_vi * v[br.from] + fc.q_vj * v[br.to] + fc.q_ti * theta[br.from] +
                    fc.q_tj * theta[br.to]);
  }
  return out;
}

PeriodState extract_state(const PeriodVars& vars, std::span<const double> values) {
  auto pick = [&](const std::vector<Var>& vs) {
    std::vector<double> out;
    out.reserve(vs.size());
    for (Var x : vs) out.push_back(values[x.index]);
    return out;
  };
  return {pick(vars.p_g), pick(vars.q_g),   pick(vars.p_ren),  pick(vars.p_d),
          pick(vars.p_cha), pick(vars.p_dis), pick(vars.mu_cha), pick(vars.mu_dis),
          pick(vars.psi), pick(vars.v),       pick(vars.theta),  pick(vars.p_flow),
          pick(vars.q_flow)};
}

LinExpr net_injection_expr(const NetworkCase& c, const PeriodVars& vars, std::size_t bus) {
  LinExpr e;
  for (std::size_t g = 0; g < c.generators.size(); ++g) {
    if (c.generators[g].bus == bus) e.add(vars.p_g[g], 1.0);
  }
  for (std::size_t r = 0; r < c.renewables.size(); ++r) {
    if (c.renewables[r].bus == bus) e.add(vars.p_ren[r], 1.0);
  }
  for (std::size_t s = 0; s < c.storages.size(); ++s) {
    if (c.storages[s].bus == bus) {
      e.add(vars.p_dis[s], 1.0);
      e.add(vars.p_cha[s], -1.0);
    }
  }
  for (std::size_t d = 0; d < c.loads.size(); ++d) {
    if (c.loads[d].bus == bus) e.add(vars.p_d[d], -1.0);
  }
  return e;
}

std::vector<double> net_injection(const NetworkCase& c, const PeriodState& s) {
  std::vector<double> out(c.num_buses(), 0.0);
  for (std::size_t g = 0; g < c.generators.size(); ++g) out[c.generators[g].bus] += s.p_g[g];
  for (std::size_t r = 0; r < c.renewables.size(); ++r) out[c.renewables[r].bus] += s.p_ren[r];
  for (std::size_t k = 0; k < c.storages.size(); ++k) {
    out[c.storages[k].bus] += s.p_dis[k] - s.p_cha[k];
  }
  for (std::size_t d = 0; d < c.loads.size(); ++d) out[c.loads[d].bus] -= s.p_d[d];
  return out;
}

LinExpr bus_demand_expr(const NetworkCase& c, const PeriodVars& vars, std::size_t bus) {
  LinExpr e;
  for (std::size_t d = 0; d < c.loads.size(); ++d) {
    if (c.loads[d].bus == bus) e.add(vars.p_d[d], 1.0);
  }
  return e;
}

std::vector<double> bus_demand(const NetworkCase& c, const PeriodState& s) {
  std::vector<double> out(c.num_buses(), 0.0);
  for (std::size_t d = 0; d < c.loads.size(); ++d) out[c.loads[d].bus] += s.p_d[d];
  return out;
}

}  // namespace cefopt::grid
