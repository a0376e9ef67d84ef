#include "cefopt/scen/label.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <random>

#include "cefopt/cef/carbon_flow.hpp"
#include "cefopt/error.hpp"

namespace cefopt::scen {

LabelResult label_scenario(const grid::NetworkCase& c, const Scenario& s, const caem::EmOptions& em,
                           const milp::BbOptions& solver) {
  LabelResult out;
  const caem::ScheduleModel m = caem::build_em(c, s, em);
  const milp::SolveResult r = milp::bb_solve(m.model, solver);
  if (!r.has_solution()) {
    out.skip_reason = "baseline " + milp::to_string(r.status);
    return out;
  }
  const caem::ScheduleOutcome o = caem::evaluate(c, m, r, nullptr);
  const std::vector<cef::CarbonFlowResult> flows = cef::cef_for_dispatch(c, o.state);
  for (std::size_t t = 0; t < c.horizon; ++t) {
    out.samples.push_back({s.id, static_cast<int>(t), caem::features(c, o.state[t]),
                           cef::load_bus_rates(c, flows[t])});
  }
  out.state = o.state;
  out.ok = true;
  return out;
}

Dataset generate_dataset(const grid::NetworkCase& c, int n, std::uint64_t seed, GenerateReport* report,
                         const SamplingOptions& sampling, const caem::EmOptions& em) {
  Dataset d;
  d.meta.kind = "cef";
  d.meta.case_hash = grid::case_hash(c);
  d.meta.seed = seed;
  d.meta.scenarios = n;
  GenerateReport rep;
  for (const Scenario& s : sample_scenarios(c, n, seed, sampling)) {
    LabelResult lr;
    try {
      lr = label_scenario(c, s, em);
    } catch (const NumericalError& e) {
      lr.skip_reason = e.what();
    }
    if (!lr.ok) {
      ++rep.skipped;
      rep.skip_log.push_back(fmt::format("scenario {}: {}", s.id, lr.skip_reason));
      continue;
    }
    ++rep.labeled;
    for (Sample& smp : lr.samples) d.samples.push_back(std::move(smp));
  }
  d.meta.skipped = rep.skipped;
  if (!d.samples.empty()) d.scaling = compute_scaling(d.samples);
  if (report != nullptr) *report = std::move(rep);
  return d;
}

Dataset storage_dataset(const grid::NetworkCase& c, std::size_t k, StorageMode mode, int n,
                        std::uint64_t seed, double e_max) {
  if (k >= c.storages.size()) throw ContractViolation("storage index out of range");
  if (n < 1) throw ContractViolation("at least one storage sample must be requested");
  const grid::Storage& st = c.storages[k];
  const double dt = c.dt;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Dataset d;
  d.meta.kind = mode == StorageMode::Discharge ? "es_dis" : "es_cha";
  d.meta.case_hash = grid::case_hash(c);
  d.meta.seed = seed;
  d.meta.scenarios = n;
  for (int i = 0; i < n; ++i) {
    const double psi_prev = st.psi_min + U(rng) * (st.psi_max - st.psi_min);
    const double kept = (1.0 - st.leakage) * psi_prev;
    double p_max = 0.0;
    if (mode == StorageMode::Discharge) {
      p_max = std::clamp((kept - st.psi_min) * st.eta_dis / dt, 0.0, st.p_dis_max);
    } else {
      p_max = std::clamp((st.psi_max - kept) / (st.eta_ch * dt), 0.0, st.p_cha_max);
    }
    const double p = U(rng) * p_max;
    const double e_prev = U(rng) * e_max;
    const double e_node = U(rng) * e_max;
    const double p_cha = mode == StorageMode::Charge ? p : 0.0;
    const double p_dis = mode == StorageMode::Discharge ? p : 0.0;
    const double psi_now = cef::storage_energy_next(psi_prev, p_cha, p_dis, st.eta_ch, st.eta_dis, st.leakage, dt);
    const cef::StorageCarbon sc = cef::storage_carbon_step(
        {psi_prev, e_prev, p_cha, p_dis, e_node, psi_now, dt, st.eta_ch, st.eta_dis, st.leakage});
    d.samples.push_back({i, 0, {psi_now, psi_prev, p, e_prev, e_node}, {sc.e_now}});
  }
  d.scaling = compute_scaling(d.samples);
  return d;
}

}  // namespace cefopt::scen
