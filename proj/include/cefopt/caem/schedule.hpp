#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cefopt/encode/encode.hpp"
#include "cefopt/grid/acpf.hpp"
#include "cefopt/grid/network.hpp"
#include "cefopt/milp/model.hpp"
#include "cefopt/milp/pwl.hpp"
#include "cefopt/milp/solve.hpp"
#include "cefopt/scen/scenario.hpp"
#include "cefopt/snn/net.hpp"

namespace cefopt::caem {

struct EmOptions {
  double reserve_fraction = 0.05;  // of period scenario load, up and down
  double demand_floor = 0.7;       // P_d in [floor, 1] x scenario demand
  int utility_segments = 4;
  int cost_segments = 4;
  bool terminal_energy = true;     // storage ends at or above its initial energy
};

/// max over lines of slope * x + intercept (convex), or min (concave).
struct Lines {
  std::vector<double> slope, intercept;
  double max_at(double x) const;
  double min_at(double x) const;
};

/// Saturating concave utility alpha P - beta P^2, flat beyond alpha / (2 beta), $/h.
double utility_exact(const grid::Load& load, double p);
/// Secant lines of utility_exact on [lo, hi]; equal slopes are merged.
Lines utility_lines(const grid::Load& load, double lo, double hi, int segments);
/// Secant lines of a p^2 + b' p + c on [p_min, p_max], $/h.
Lines generation_lines(const grid::Generator& g, double cost_factor, int segments);

/// Handles of one schedule model, indexed [period][unit].
struct EmHandles {
  std::vector<grid::PeriodVars> periods;
  std::vector<std::vector<milp::Var>> utility, gen_cost, r_up, r_down;
  std::vector<std::vector<Lines>> utility_fn, gen_cost_fn;
  std::vector<double> reserve_requirement;  // MW per period
  std::vector<std::pair<int, int>> period_rows;  // [begin, end) row range per period
};

/// Storage-intensity chain of one storage in one period.
struct EsChain {
  encode::EncodedNet f_dis, f_cha;
  encode::EsGate gate;
  milp::Var e_node;
};

struct CarbonHandles {
  std::vector<std::size_t> load_buses;
  std::vector<std::vector<milp::Var>> r_pred;       // [t][load bus], tCO2/h
  std::vector<std::vector<milp::Var>> carbon_cost;  // [t][load bus], $
  std::vector<encode::EncodedNet> cef;              // per period
  std::vector<std::vector<EsChain>> es;             // [t][storage]
  milp::BlockedTariff tariff;
  int unstable_per_period = 0;  // over the CEF and storage networks
  int gate_binaries_per_period = 0;
};

struct ScheduleModel {
  milp::Model model;
  EmHandles em;
  std::optional<CarbonHandles> carbon;
};

/// Carbon-blind energy management model (maximize welfare).
ScheduleModel build_em(const grid::NetworkCase& c, const scen::Scenario& s, const EmOptions& options = {});

struct CaemNets {
  snn::SparseNet cef;                   // feature vector -> R_L per load bus
  std::optional<snn::SparseNet> es_dis, es_cha;  // (psi_now, psi_prev, p, e_prev, e_node) -> e_es
};

struct CaemOptions {
  EmOptions em;
  /// Normalized trust box [-margin, 1 + margin] for every embedded network,
  /// intersected with the range its inputs take under the variable bounds.
  double input_margin = 0.02;
  /// Open-gate intensity bounds are [0, factor * max gci].
  double intensity_factor = 1.5;
  /// LP-based tightening of the carbon-flow network's neuron bounds.
  bool tighten_bounds = true;
  /// Same for the storage networks; they only enter the chain completion,
  /// where interval bounds are usually enough.
  bool tighten_storage_bounds = false;
  /// Embed the storage-intensity chain when storage networks are given.
  bool storage_chain = true;
};

/// EM plus embedded networks and the blocked carbon cost per load bus and period.
/// Refuses networks trained on a different case.
ScheduleModel build_caem(const grid::NetworkCase& c, const scen::Scenario& s, const CaemNets& nets,
                         const milp::BlockedTariff& tariff, const CaemOptions& options = {});

/// Start for branch-and-bound on a carbon-aware model: the EM solution's
/// storage modes plus the activation patterns of every embedded network at
/// that dispatch.
std::vector<double> caem_start(const grid::NetworkCase& c, const scen::Scenario& s, const ScheduleModel& caem,
                               const CaemNets& nets, const std::vector<double>& em_values);

struct CaemSolve {
  ScheduleModel model;  // the full CA-EM model
  milp::SolveResult result;
};

/// Solves CA-EM exactly in two stages. The storage chain does not enter the
/// objective or any other row, so the model without it is solved first (from
/// the EM start) and the chain is then completed with all other binaries fixed.
/// `seconds` covers both stages and the EM start.
CaemSolve solve_caem(const grid::NetworkCase& c, const scen::Scenario& s, const CaemNets& nets,
                     const milp::BlockedTariff& tariff, const milp::BbOptions& solver = {},
                     const CaemOptions& options = {});

/// Feature vector of one period: net injection per bus, then gross demand per bus.
std::vector<double> features(const grid::NetworkCase& c, const grid::PeriodState& s);
std::vector<milp::LinExpr> feature_exprs(const grid::NetworkCase& c, const grid::PeriodVars& v);

struct ScheduleOutcome {
  double objective = 0.0;      // solver objective
  double welfare = 0.0;        // utility - generation - reserve - storage - carbon (model view)
  double utility = 0.0;
  double generation_cost = 0.0;
  double reserve_cost = 0.0;
  double storage_cost = 0.0;
  double carbon_cost = 0.0;        // in-model, on predicted rates (0 for EM)
  double exact_carbon_cost = 0.0;  // tariff applied to exact ex-post rates
  double carbon_welfare = 0.0;     // welfare with the exact carbon cost
  double emission = 0.0;           // exact ex-post, tCO2
  double emission_predicted = 0.0; // in-model, tCO2 (0 for EM)
  double load_energy = 0.0;        // MWh
  std::vector<std::vector<double>> r_l;  // [t][bus], exact tCO2/h
  std::vector<std::vector<double>> e_es_exact, e_es_model;  // [t][storage]
  grid::DispatchState state;
  milp::SolveStatus status = milp::SolveStatus::Optimal;
  double seconds = 0.0;
  long nodes = 0;
  double gap = 0.0;
  int binaries = 0;
  std::size_t nonzeros = 0;
};

/// Exact ex-post evaluation. `tariff` prices the exact rates; pass the
/// CA-EM tariff for both models to compare carbon-inclusive welfare.
ScheduleOutcome evaluate(const grid::NetworkCase& c, const ScheduleModel& m, const milp::SolveResult& r,
                         const milp::BlockedTariff* tariff);

struct Delta {
  std::string metric;
  double em = 0.0, caem = 0.0, pct = 0.0;
};

/// Percentage change caem vs em per metric; 0 when both are 0.
std::vector<Delta> compare(const ScheduleOutcome& em, const ScheduleOutcome& caem);
double pct_change(double from, double to);

struct SensitivityPoint {
  double scale = 0.0;
  bool ok = false;
  std::string error;
  double emission = 0.0;
  double load_energy = 0.0;
  double demand_reduction = 0.0;  // MWh below the EM load energy
  double seconds = 0.0;
};

std::vector<SensitivityPoint> price_sensitivity(const grid::NetworkCase& c, const scen::Scenario& s,
                                                const CaemNets& nets, const milp::BlockedTariff& base,
                                                const std::vector<double>& scales,
                                                const milp::BbOptions& solver = {},
                                                const CaemOptions& options = {});

void write_outcome_csv(const std::filesystem::path& path, const std::vector<Delta>& deltas);
void write_bus_emission_csv(const std::filesystem::path& path, const grid::NetworkCase& c,
                            const ScheduleOutcome& o);
void write_sensitivity_csv(const std::filesystem::path& path, const std::vector<SensitivityPoint>& pts);
/// Standalone SVG line plot of emission and demand reduction against scale.
std::string sensitivity_svg(const std::vector<SensitivityPoint>& pts);

}  // namespace cefopt::caem
