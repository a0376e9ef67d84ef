#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cefopt/caem/schedule.hpp"
#include "cefopt/cef/carbon_flow.hpp"
#include "cefopt/error.hpp"
#include "oracles/xml_check.hpp"
#include "support/case_nets.hpp"

using namespace cefopt;
using namespace cefopt::caem;

namespace {

const CaemNets& small_nets() {
  static const CaemNets nets = [] {
    support::NetSpec spec;
    spec.hidden = {8, 8};
    spec.scenarios = 60;
    spec.epochs = 60;
    spec.storage_width = 10;
    spec.storage_samples = 800;
    spec.storage_epochs = 30;
    return support::train_nets(support::bundled_case("case6"), spec);
  }();
  return nets;
}

void check_schedule_physics(const grid::NetworkCase& c, const ScheduleOutcome& o) {
  for (std::size_t t = 0; t < c.horizon; ++t) {
    const grid::PeriodState& st = o.state[t];
    for (std::size_t g = 0; g < c.generators.size(); ++g) {
      if (t > 0) {
        const double step = st.p_g[g] - o.state[t - 1].p_g[g];
        CHECK(step <= c.generators[g].ramp_up + 1e-6);
        CHECK(-step <= c.generators[g].ramp_down + 1e-6);
      }
    }
    for (std::size_t k = 0; k < c.storages.size(); ++k) {
      const grid::Storage& s = c.storages[k];
      CHECK(std::min(st.p_cha[k], st.p_dis[k]) <= 1e-7);
      const double prev = t > 0 ? o.state[t - 1].psi[k] : s.psi0;
      const double next = cef::storage_energy_next(prev, st.p_cha[k], st.p_dis[k], s.eta_ch, s.eta_dis, s.leakage, c.dt);
      CHECK(std::abs(st.psi[k] - next) <= 1e-7);
      CHECK(st.psi[k] >= s.psi_min - 1e-7);
      CHECK(st.psi[k] <= s.psi_max + 1e-7);
    }
  }
  CHECK(std::abs(o.welfare - (o.utility - o.generation_cost - o.reserve_cost - o.storage_cost - o.carbon_cost)) <=
        1e-6 * (1.0 + std::abs(o.welfare)));
}

}  // namespace

TEST_CASE("em: case2 single period follows the merit order") {
  const grid::NetworkCase c = support::bundled_case("case2");
  const ScheduleModel em = build_em(c, scen::Scenario::nominal(c));
  const milp::SolveResult r = milp::bb_solve(em.model);
  REQUIRE(r.status == milp::SolveStatus::Optimal);
  const ScheduleOutcome o = evaluate(c, em, r, nullptr);
  // Marginal utility at 100 MW is 100 $/MWh, above both offers: full load, cheap unit first.
  CHECK(std::abs(o.state[0].p_d[0] - 100.0) <= 1e-6);
  CHECK(std::abs(o.state[0].p_g[0] - 60.0) <= 1e-6);
  CHECK(std::abs(o.state[0].p_g[1] - 40.0) <= 1e-6);
  CHECK(std::abs(o.emission - 100.0 * 0.875 * c.dt) <= 1e-6);
  CHECK(o.carbon_cost == 0.0);
  CHECK(std::abs(o.welfare - o.objective) <= 1e-6);
}

TEST_CASE("em: case6 schedule respects ramps, storage recursion and exclusivity") {
  const grid::NetworkCase c = support::bundled_case("case6");
  for (const scen::Scenario& s : scen::sample_scenarios(c, 3, 5)) {
    const ScheduleModel em = build_em(c, s);
    const milp::SolveResult r = milp::bb_solve(em.model);
    REQUIRE(r.status == milp::SolveStatus::Optimal);
    const ScheduleOutcome o = evaluate(c, em, r, nullptr);
    check_schedule_physics(c, o);
    CHECK(o.emission > 0.0);
    CHECK(o.emission_predicted == 0.0);
  }
}

TEST_CASE("em: reserve beyond total headroom is infeasible") {
  const grid::NetworkCase c = support::bundled_case("case2");
  EmOptions opt;
  opt.reserve_fraction = 2.0;
  const ScheduleModel em = build_em(c, scen::Scenario::nominal(c), opt);
  CHECK(milp::bb_solve(em.model).status == milp::SolveStatus::Infeasible);
}

TEST_CASE("compare: identical outcomes and a hand-built reduction") {
  ScheduleOutcome a;
  a.welfare = 50.0;
  a.emission = 100.0;
  a.load_energy = 10.0;
  for (const Delta& d : compare(a, a)) CHECK(d.pct == 0.0);
  ScheduleOutcome b = a;
  b.emission = 90.0;
  for (const Delta& d : compare(a, b)) {
    if (d.metric == "emission") CHECK(std::abs(d.pct + 10.0) <= 1e-12);
  }
  CHECK(pct_change(0.0, 0.0) == 0.0);
}

TEST_CASE("caem: refuses networks from another case") {
  const grid::NetworkCase c = support::bundled_case("case6");
  CaemNets nets = small_nets();
  nets.cef.case_hash = "0000";
  CHECK_THROWS_AS(build_caem(c, scen::Scenario::nominal(c), nets, support::reference_tariff(c.dt)),
                  ContractViolation);
  const grid::NetworkCase other = support::bundled_case("case3");
  CHECK_THROWS_AS(build_caem(other, scen::Scenario::nominal(other), small_nets(), support::reference_tariff(1.0)),
                  ContractViolation);
}

TEST_CASE("caem: binary count is the EM binaries plus unstable neurons") {
  const grid::NetworkCase c = support::bundled_case("case6");
  const scen::Scenario s = scen::Scenario::nominal(c);
  const ScheduleModel em = build_em(c, s);
  const ScheduleModel m = build_caem(c, s, small_nets(), support::reference_tariff(c.dt));
  REQUIRE(m.carbon);
  int net_binaries = 0;
  for (std::size_t t = 0; t < c.horizon; ++t) {
    net_binaries += m.carbon->cef[t].binaries;
    for (const EsChain& es : m.carbon->es[t]) net_binaries += es.f_dis.binaries + es.f_cha.binaries;
    CHECK(m.carbon->es[t].size() == c.storages.size());
  }
  // Storage gates reuse the EM mode binaries.
  CHECK(m.model.num_binaries() == em.model.num_binaries() + net_binaries);
  CHECK(m.carbon->gate_binaries_per_period == static_cast<int>(2 * c.storages.size()));
}

TEST_CASE("caem: zero tariff reproduces the EM objective") {
  const grid::NetworkCase c = support::bundled_case("case6");
  const scen::Scenario s = scen::sample_scenarios(c, 1, 21).front();
  const ScheduleModel em = build_em(c, s);
  const milp::SolveResult er = milp::bb_solve(em.model);
  REQUIRE(er.status == milp::SolveStatus::Optimal);
  const CaemSolve cs = solve_caem(c, s, small_nets(), support::reference_tariff(c.dt).scaled(0.0));
  REQUIRE(cs.result.status == milp::SolveStatus::Optimal);
  CHECK(std::abs(cs.result.objective - er.objective) <= 1e-6 * std::max(1.0, std::abs(er.objective)));
}

TEST_CASE("caem: priced solve is consistent and audited") {
  const grid::NetworkCase c = support::bundled_case("case6");
  const scen::Scenario s = scen::Scenario::nominal(c);
  const milp::BlockedTariff tariff = support::reference_tariff(c.dt);
  const CaemSolve cs = solve_caem(c, s, small_nets(), tariff);
  REQUIRE(cs.result.has_solution());
  CHECK(cs.result.start_accepted);
  const ScheduleOutcome o = evaluate(c, cs.model, cs.result, &tariff);
  check_schedule_physics(c, o);
  CHECK(o.carbon_cost > 0.0);
  CHECK(o.emission_predicted > 0.0);
  CHECK(o.e_es_model.size() == c.horizon);
  // The returned model is the full model with free binaries.
  const milp::ResidualReport rep = milp::check_solution(cs.model.model, cs.result.values, true);
  CHECK(rep.ok());
  for (int j = 0; j < cs.model.model.num_vars(); ++j) {
    if (cs.model.model.var(j).kind == milp::VarKind::Binary) {
      CHECK(cs.model.model.var(j).lower == 0.0);
      CHECK(cs.model.model.var(j).upper == 1.0);
    }
  }
}

TEST_CASE("caem start: EM dispatch with the matching activation pattern is feasible") {
  const grid::NetworkCase c = support::bundled_case("case6");
  const scen::Scenario s = scen::Scenario::nominal(c);
  const ScheduleModel em = build_em(c, s);
  const milp::SolveResult er = milp::bb_solve(em.model);
  CaemOptions opt;
  opt.storage_chain = false;
  const ScheduleModel m = build_caem(c, s, small_nets(), support::reference_tariff(c.dt), opt);
  const std::vector<double> start = caem_start(c, s, m, small_nets(), er.values);
  milp::BbOptions bo;
  bo.start = start;
  bo.node_limit = 1;
  const milp::SolveResult r = milp::bb_solve(m.model, bo);
  CHECK(r.start_accepted);
  CHECK(r.has_solution());
  CHECK_THROWS_AS(caem_start(c, s, em, small_nets(), er.values), ContractViolation);
}

TEST_CASE("sensitivity: zero scale is the EM level, ascending grid required, outputs written") {
  const grid::NetworkCase c = support::bundled_case("case6");
  const scen::Scenario s = scen::Scenario::nominal(c);
  const ScheduleModel em = build_em(c, s);
  const ScheduleOutcome eo = evaluate(c, em, milp::bb_solve(em.model), nullptr);
  const auto pts = price_sensitivity(c, s, small_nets(), support::reference_tariff(c.dt), {0.0, 1.0});
  REQUIRE(pts.size() == 2);
  REQUIRE(pts[0].ok);
  REQUIRE(pts[1].ok);
  // Equal objective; emission can differ only through ties between equal-welfare dispatches.
  CHECK(std::abs(pts[0].demand_reduction) <= 1e-6 + 1e-6 * eo.load_energy);
  CHECK(pts[1].emission <= pts[0].emission + 1e-6);
  CHECK_THROWS_AS(price_sensitivity(c, s, small_nets(), support::reference_tariff(c.dt), {1.0, 0.5}),
                  ContractViolation);

  const std::string svg = sensitivity_svg(pts);
  std::string why;
  CHECK_MESSAGE(oracle::xml_well_formed(svg, &why), why);
  const auto dir = std::filesystem::temp_directory_path();
  write_sensitivity_csv(dir / "cefopt_test_sens.csv", pts);
  std::ifstream f(dir / "cefopt_test_sens.csv");
  std::string header;
  std::getline(f, header);
  CHECK(header == "scale,ok,emission,load_energy,demand_reduction,seconds,error");
  std::filesystem::remove(dir / "cefopt_test_sens.csv");
}

TEST_CASE("xml oracle rejects broken documents") {
  CHECK(oracle::xml_well_formed("<svg><g/></svg>"));
  CHECK_FALSE(oracle::xml_well_formed("<svg><g></svg>"));
  CHECK_FALSE(oracle::xml_well_formed("<svg a=1></svg>"));
  CHECK_FALSE(oracle::xml_well_formed("<a/><b/>"));
}
