#include "cefopt/cef/carbon_flow.hpp"

#include <algorithm>
#include <cmath>

#include "cefopt/error.hpp"

namespace cefopt::cef {

std::vector<DirectedFlow> resolve_flows(const grid::NetworkCase& c, const std::vector<double>& p) {
  if (p.size() != c.branches.size()) throw ContractViolation("one flow per branch expected");
  std::vector<DirectedFlow> out;
  out.reserve(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const grid::Branch& br = c.branches[k];
    if (p[k] >= 0.0) {
      out.push_back({br.from, br.to, p[k]});
    } else {
      out.push_back({br.to, br.from, -p[k]});
    }
  }
  return out;
}

CefMatrices build_matrices(const FlowSnapshot& s) {
  const auto n = static_cast<Eigen::Index>(s.n_bus);
  CefMatrices m;
  m.p_b = Eigen::MatrixXd::Zero(n, n);
  m.p_g = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.sources.size()), n);
  m.p_dis = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.discharge.size()), n);
  m.p_n = Eigen::VectorXd::Zero(n);
  auto check = [&](double p, std::size_t bus, const char* what) {
    if (!std::isfinite(p)) throw ContractViolation(std::string("non-finite ") + what);
    if (p < 0.0) throw ContractViolation(std::string("negative resolved ") + what);
    if (bus >= s.n_bus) throw ContractViolation(std::string(what) + " references an unknown bus");
  };
  for (const DirectedFlow& f : s.flows) {
    check(f.p, f.from, "flow");
    check(f.p, f.to, "flow");
    m.p_b(f.from, f.to) += f.p;
    m.p_n(f.to) += f.p;
  }
  for (std::size_t g = 0; g < s.sources.size(); ++g) {
    check(s.sources[g].p, s.sources[g].bus, "source injection");
    m.p_g(g, s.sources[g].bus) = s.sources[g].p;
    m.p_n(s.sources[g].bus) += s.sources[g].p;
  }
  for (std::size_t k = 0; k < s.discharge.size(); ++k) {
    check(s.discharge[k].p, s.discharge[k].bus, "storage discharge");
    m.p_dis(k, s.discharge[k].bus) = s.discharge[k].p;
    m.p_n(s.discharge[k].bus) += s.discharge[k].p;
  }
  return m;
}

NciResult compute_nci(const CefMatrices& m, const Eigen::VectorXd& e_g, const Eigen::VectorXd& e_dis) {
  const Eigen::Index n = m.p_n.size();
  if (e_g.size() != m.p_g.rows() || e_dis.size() != m.p_dis.rows()) {
    throw ContractViolation("intensity vectors do not match the source matrices");
  }
  NciResult res;
  res.e_n = Eigen::VectorXd::Zero(n);
  res.eliminated.assign(static_cast<std::size_t>(n), false);

  const double scale = std::max(1.0, m.p_n.cwiseAbs().maxCoeff());
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (m.p_n(i) <= 1e-12 * scale) {
      res.eliminated[static_cast<std::size_t>(i)] = true;
    } else {
      keep.push_back(i);
    }
  }
  const auto k = static_cast<Eigen::Index>(keep.size());
  if (k == 0) return res;

  const Eigen::VectorXd rhs_full = m.p_g.transpose() * e_g + m.p_dis.transpose() * e_dis;
  Eigen::MatrixXd a(k, k);
  Eigen::VectorXd rhs(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    rhs(r) = rhs_full(keep[r]);
    for (Eigen::Index c = 0; c < k; ++c) {
      a(r, c) = (r == c ? m.p_n(keep[r]) : 0.0) - m.p_b(keep[c], keep[r]);
    }
  }
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  if (!(lu.rcond() > 1e-13)) {
    throw DegenerateTopology("degenerate topology: nodal intensity system is singular");
  }
  const Eigen::VectorXd e = lu.solve(rhs);
  for (Eigen::Index r = 0; r < k; ++r) res.e_n(keep[r]) = e(r);
  if (!res.e_n.allFinite()) throw DegenerateTopology("degenerate topology: non-finite intensities");
  return res;
}

FixedPointResult nci_fixed_point(const FlowSnapshot& s, const Eigen::VectorXd& e_g,
                                 const Eigen::VectorXd& e_dis, double tol, int max_iter) {
  const std::size_t n = s.n_bus;
  std::vector<double> inflow(n, 0.0), own(n, 0.0);
  for (const DirectedFlow& f : s.flows) inflow[f.to] += f.p;
  for (std::size_t g = 0; g < s.sources.size(); ++g) {
    inflow[s.sources[g].bus] += s.sources[g].p;
    own[s.sources[g].bus] += s.sources[g].p * e_g(static_cast<Eigen::Index>(g));
  }
  for (std::size_t k = 0; k < s.discharge.size(); ++k) {
    inflow[s.discharge[k].bus] += s.discharge[k].p;
    own[s.discharge[k].bus] += s.discharge[k].p * e_dis(static_cast<Eigen::Index>(k));
  }
  FixedPointResult res;
  res.e_n = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  Eigen::VectorXd next(res.e_n.size());
  for (int it = 1; it <= max_iter; ++it) {
    std::vector<double> num = own;
    for (const DirectedFlow& f : s.flows) num[f.to] += f.p * res.e_n(static_cast<Eigen::Index>(f.from));
    for (std::size_t i = 0; i < n; ++i) {
      next(static_cast<Eigen::Index>(i)) = inflow[i] > 0.0 ? num[i] / inflow[i] : 0.0;
    }
    const double change = (next - res.e_n).cwiseAbs().maxCoeff();
    res.e_n = next;
    res.iterations = it;
    if (change < tol) return res;
  }
  throw NumericalError("nodal intensity fixed point did not converge");
}

std::vector<double> branch_intensity(const Eigen::VectorXd& e_n, const FlowSnapshot& s) {
  std::vector<double> rho;
  rho.reserve(s.flows.size());
  for (const DirectedFlow& f : s.flows) rho.push_back(e_n(static_cast<Eigen::Index>(f.from)));
  return rho;
}

Eigen::VectorXd load_emission_rates(const Eigen::VectorXd& load, const Eigen::VectorXd& e_n) {
  if (load.size() != e_n.size()) throw ContractViolation("load and intensity sizes differ");
  return load.cwiseProduct(e_n);
}

double storage_energy_next(double psi_prev, double p_cha, double p_dis, double eta_ch,
                           double eta_dis, double leakage, double dt) {
  return (1.0 - leakage) * psi_prev + eta_ch * p_cha * dt - p_dis * dt / eta_dis;
}

StorageCarbon storage_carbon_step(const StorageStep& s) {
  constexpr double kActive = 1e-9;
  if (s.p_cha > kActive && s.p_dis > kActive) {
    throw ContractViolation("storage cannot charge and discharge in the same period");
  }
  const double expected = storage_energy_next(s.psi_prev, s.p_cha, s.p_dis, s.eta_ch, s.eta_dis,
                                              s.leakage, s.dt);
  if (std::abs(expected - s.psi_now) > 1e-6 * std::max(1.0, std::abs(expected))) {
    throw ContractViolation("storage energy is inconsistent with its dynamics");
  }
  const double carried = (1.0 - s.leakage) * s.e_prev * s.psi_prev;
  if (s.psi_now <= 0.0) return {s.e_prev, 0.0};
  double e_now;
  if (s.p_dis > kActive) {
    // E_now = carried - p_dis e_now dt  and  E_now = e_now psi_now.
    e_now = carried / (s.psi_now + s.p_dis * s.dt);
  } else if (s.p_cha > kActive) {
    e_now = (carried + s.p_cha * s.e_node * s.dt) / s.psi_now;
  } else {
    e_now = s.e_prev;
  }
  return {e_now, e_now * s.psi_now};
}

Eigen::VectorXd source_intensities(const grid::NetworkCase& c) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(
      static_cast<Eigen::Index>(c.generators.size() + c.renewables.size()));
  for (std::size_t g = 0; g < c.generators.size(); ++g) {
    e(static_cast<Eigen::Index>(g)) = c.generators[g].gci;
  }
  return e;
}

FlowSnapshot snapshot_from_state(const grid::NetworkCase& c, const grid::PeriodState& s) {
  FlowSnapshot snap;
  snap.n_bus = c.num_buses();
  const grid::FlowValues fv = grid::eval_flows(c, s.v, s.theta);
  snap.flows = resolve_flows(c, fv.p);
  // Solver noise can leave tiny negative outputs on sources at zero.
  auto clean = [](double p) { return std::max(0.0, p); };
  for (std::size_t g = 0; g < c.generators.size(); ++g) {
    snap.sources.push_back({c.generators[g].bus, clean(s.p_g[g])});
  }
  for (std::size_t r = 0; r < c.renewables.size(); ++r) {
    snap.sources.push_back({c.renewables[r].bus, clean(s.p_ren[r])});
  }
  for (std::size_t k = 0; k < c.storages.size(); ++k) {
    snap.discharge.push_back({c.storages[k].bus, clean(s.p_dis[k])});
  }
  snap.load = grid::bus_demand(c, s);
  return snap;
}

std::vector<CarbonFlowResult> cef_for_dispatch(const grid::NetworkCase& c,
                                               const grid::DispatchState& state) {
  const Eigen::VectorXd e_g = source_intensities(c);
  const std::size_t ns = c.storages.size();
  std::vector<double> psi(ns), e_es(ns);
  for (std::size_t k = 0; k < ns; ++k) {
    psi[k] = c.storages[k].psi0;
    e_es[k] = c.storages[k].e0;
  }
  std::vector<CarbonFlowResult> out;
  out.reserve(state.size());
  for (const grid::PeriodState& s : state) {
    CarbonFlowResult r;
    const FlowSnapshot snap = snapshot_from_state(c, s);

    std::vector<double> psi_now(ns);
    for (std::size_t k = 0; k < ns; ++k) {
      const grid::Storage& st = c.storages[k];
      psi_now[k] = s.psi.empty() ? storage_energy_next(psi[k], s.p_cha[k], s.p_dis[k], st.eta_ch,
                                                       st.eta_dis, st.leakage, c.dt)
                                 : s.psi[k];
    }
    auto step = [&](std::size_t k, double e_node) {
      const grid::Storage& st = c.storages[k];
      return storage_carbon_step({psi[k], e_es[k], std::max(0.0, s.p_cha[k]),
                                  std::max(0.0, s.p_dis[k]), e_node, psi_now[k], c.dt, st.eta_ch,
                                  st.eta_dis, st.leakage});
    };

    // Discharge intensities do not depend on the network; charging needs the bus NCI.
    r.e_es.assign(ns, 0.0);
    r.stored.assign(ns, 0.0);
    r.e_dis.assign(ns, 0.0);
    Eigen::VectorXd e_dis = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ns));
    std::vector<bool> done(ns, false);
    for (std::size_t k = 0; k < ns; ++k) {
      if (s.p_cha[k] <= 1e-9) {
        const StorageCarbon sc = step(k, 0.0);
        r.e_es[k] = sc.e_now;
        r.stored[k] = sc.stored;
        e_dis(static_cast<Eigen::Index>(k)) = sc.e_now;
        r.e_dis[k] = sc.e_now;
        done[k] = true;
      }
    }

    const CefMatrices m = build_matrices(snap);
    NciResult nci = compute_nci(m, e_g, e_dis);
    r.e_n = std::move(nci.e_n);
    r.eliminated = std::move(nci.eliminated);
    r.flows = snap.flows;
    r.rho = branch_intensity(r.e_n, snap);
    r.r_l = load_emission_rates(Eigen::Map<const Eigen::VectorXd>(
                                    snap.load.data(), static_cast<Eigen::Index>(snap.load.size())),
                                r.e_n);

    for (std::size_t k = 0; k < ns; ++k) {
      if (!done[k]) {
        const StorageCarbon sc = step(k, r.e_n(static_cast<Eigen::Index>(c.storages[k].bus)));
        r.e_es[k] = sc.e_now;
        r.stored[k] = sc.stored;
      }
      psi[k] = psi_now[k];
      e_es[k] = r.e_es[k];
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<double> load_bus_rates(const grid::NetworkCase& c, const CarbonFlowResult& r) {
  std::vector<double> out;
  for (std::size_t b : c.load_buses()) out.push_back(r.r_l(static_cast<Eigen::Index>(b)));
  return out;
}

}  // namespace cefopt::cef
