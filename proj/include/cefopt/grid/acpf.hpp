#pragma once

#include <span>
#include <vector>

#include "cefopt/grid/network.hpp"
#include "cefopt/milp/model.hpp"

namespace cefopt::grid {

/// Model variables of one period. Powers in MW/MVar, V in p.u., theta in rad.
/// Flows use each branch's nominal orientation (from -> to).
struct PeriodVars {
  std::vector<milp::Var> p_g, q_g;
  std::vector<milp::Var> p_ren;  // renewable output actually used (curtailment allowed)
  std::vector<milp::Var> p_d;
  std::vector<milp::Var> p_cha, p_dis, mu_cha, mu_dis;
  std::vector<milp::Var> psi;  // stored energy at the end of the period, MWh
  std::vector<milp::Var> v, theta;
  std::vector<milp::Var> p_flow, q_flow;
};

/// Numeric counterpart of PeriodVars.
struct PeriodState {
  std::vector<double> p_g, q_g, p_ren, p_d, p_cha, p_dis, mu_cha, mu_dis, psi;
  std::vector<double> v, theta, p_flow, q_flow;
};

using DispatchState = std::vector<PeriodState>;

struct AcpfRows {
  std::vector<milp::Row> p_def, q_def, p_balance, q_balance, limit_fwd, limit_rev;
};

/// Registers the period-t variables with physical bounds; load bounds are
/// given per load in MW.
PeriodVars add_period_vars(milp::Model& model, const NetworkCase& c, std::size_t t,
                           std::span<const double> load_lo, std::span<const double> load_hi);

/// Linearized AC flow definitions, nodal P/Q balance, |P| limits and voltage bounds.
AcpfRows add_acpf_constraints(milp::Model& model, const NetworkCase& c, std::size_t t,
                              const PeriodVars& vars);

/// Branch flow as a linear function of (V_i, V_j, theta_i, theta_j), MW/MVar.
struct FlowCoefficients {
  double p_vi, p_vj, p_ti, p_tj;
  double q_vi, q_vj, q_ti, q_tj;
};
FlowCoefficients flow_coefficients(const NetworkCase& c, const Branch& br);

struct FlowValues {
  std::vector<double> p;  // MW
  std::vector<double> q;  // MVar
};

/// Evaluates the same expressions the builder emits.
FlowValues eval_flows(const NetworkCase& c, std::span<const double> v, std::span<const double> theta);

PeriodState extract_state(const PeriodVars& vars, std::span<const double> values);

/// Net active injection per bus: generation + renewables + discharge - demand - charge.
milp::LinExpr net_injection_expr(const NetworkCase& c, const PeriodVars& vars, std::size_t bus);
std::vector<double> net_injection(const NetworkCase& c, const PeriodState& s);
/// Gross active demand per bus.
milp::LinExpr bus_demand_expr(const NetworkCase& c, const PeriodVars& vars, std::size_t bus);
std::vector<double> bus_demand(const NetworkCase& c, const PeriodState& s);

}  // namespace cefopt::grid
