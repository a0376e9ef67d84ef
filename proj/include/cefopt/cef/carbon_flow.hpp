#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "cefopt/grid/acpf.hpp"
#include "cefopt/grid/network.hpp"

namespace cefopt::cef {

struct DirectedFlow {
  std::size_t from = 0;
  std::size_t to = 0;
  double p = 0.0;  // MW, >= 0 after sign resolution
};

struct Injection {
  std::size_t bus = 0;
  double p = 0.0;  // MW
};

/// One period of sign-resolved active power data.
struct FlowSnapshot {
  std::size_t n_bus = 0;
  std::vector<DirectedFlow> flows;   // one per branch
  std::vector<Injection> sources;    // generators and renewables
  std::vector<Injection> discharge;  // one per storage
  std::vector<double> load;          // MW per bus
};

struct CefMatrices {
  Eigen::MatrixXd p_b;    // n x n, p_b(i, j) = flow i -> j
  Eigen::MatrixXd p_g;    // sources x n
  Eigen::MatrixXd p_dis;  // storages x n
  Eigen::VectorXd p_n;    // diagonal of total inflow per bus
};

struct NciResult {
  Eigen::VectorXd e_n;           // tCO2/MWh per bus
  std::vector<bool> eliminated;  // buses with no inflow, e_n fixed to 0
};

/// Orients each branch along its flow; zero flows keep the nominal direction.
std::vector<DirectedFlow> resolve_flows(const grid::NetworkCase& c, const std::vector<double>& p);

CefMatrices build_matrices(const FlowSnapshot& s);

/// Solves (P_N - P_B^T) e_N = P_G^T e_G + P_dis^T e_dis by LU after removing
/// zero-inflow buses. Throws DegenerateTopology when the reduced system is singular.
NciResult compute_nci(const CefMatrices& m, const Eigen::VectorXd& e_g, const Eigen::VectorXd& e_dis);

struct FixedPointResult {
  Eigen::VectorXd e_n;
  int iterations = 0;
};

/// Jacobi iteration of the nodal mixing rule; reference for compute_nci.
FixedPointResult nci_fixed_point(const FlowSnapshot& s, const Eigen::VectorXd& e_g,
                                 const Eigen::VectorXd& e_dis, double tol = 1e-13,
                                 int max_iter = 10000);

/// Intensity carried by each directed flow: the sending bus NCI.
std::vector<double> branch_intensity(const Eigen::VectorXd& e_n, const FlowSnapshot& s);

Eigen::VectorXd load_emission_rates(const Eigen::VectorXd& load, const Eigen::VectorXd& e_n);

struct StorageStep {
  double psi_prev = 0.0;  // MWh
  double e_prev = 0.0;    // tCO2/MWh
  double p_cha = 0.0;     // MW
  double p_dis = 0.0;     // MW
  double e_node = 0.0;    // tCO2/MWh at the storage bus
  double psi_now = 0.0;   // MWh
  double dt = 1.0;        // h
  double eta_ch = 1.0;
  double eta_dis = 1.0;
  double leakage = 0.0;
};

struct StorageCarbon {
  double e_now = 0.0;   // tCO2/MWh
  double stored = 0.0;  // tCO2
};

/// Energy after one period: (1 - leakage) psi + eta_ch p_cha dt - p_dis dt / eta_dis.
double storage_energy_next(double psi_prev, double p_cha, double p_dis, double eta_ch,
                           double eta_dis, double leakage, double dt);

/// Carbon stock update. Charging absorbs at e_node, discharging releases at the
/// storage's own intensity, leakage removes energy and carbon proportionally.
StorageCarbon storage_carbon_step(const StorageStep& step);

struct CarbonFlowResult {
  Eigen::VectorXd e_n;           // per bus
  std::vector<bool> eliminated;  // per bus
  std::vector<DirectedFlow> flows;
  std::vector<double> rho;       // per branch along its resolved direction
  Eigen::VectorXd r_l;           // tCO2/h per bus (zero where no load)
  std::vector<double> e_es;      // per storage, end of period
  std::vector<double> stored;    // tCO2 per storage, end of period
  std::vector<double> e_dis;     // intensity of discharged energy this period
};

/// Snapshot of one dispatched period (flows from eval_flows on V and theta).
FlowSnapshot snapshot_from_state(const grid::NetworkCase& c, const grid::PeriodState& s);

/// Exact carbon flow for a whole dispatch, storage intensities chained over time.
std::vector<CarbonFlowResult> cef_for_dispatch(const grid::NetworkCase& c,
                                               const grid::DispatchState& state);

/// Source intensity vector aligned with FlowSnapshot::sources (generators, then renewables).
Eigen::VectorXd source_intensities(const grid::NetworkCase& c);

/// R_L restricted to load buses (ascending bus order), the learning target.
std::vector<double> load_bus_rates(const grid::NetworkCase& c, const CarbonFlowResult& r);

}  // namespace cefopt::cef
