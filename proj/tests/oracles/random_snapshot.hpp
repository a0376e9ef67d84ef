#pragma once

#include <Eigen/Dense>
#include <random>

#include "cefopt/cef/carbon_flow.hpp"

namespace oracle {

struct RandomSnapshot {
  cefopt::cef::FlowSnapshot snap;
  Eigen::VectorXd e_g;
  Eigen::VectorXd e_dis;
};

// Connected lossless snapshot: flows follow random bus potentials, so the
// directed flow graph is acyclic; each bus then balances with sources,
// optional storage discharge and load.
inline RandomSnapshot random_snapshot(std::mt19937_64& rng, int n_bus) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  RandomSnapshot out;
  auto& s = out.snap;
  s.n_bus = static_cast<std::size_t>(n_bus);
  std::vector<double> theta(n_bus);
  for (double& t : theta) t = U(rng);
  std::vector<std::pair<int, int>> edges;
  for (int i = 1; i < n_bus; ++i) edges.emplace_back(static_cast<int>(rng() % i), i);
  const int extra = n_bus > 2 ? static_cast<int>(rng() % n_bus) : 0;
  for (int e = 0; e < extra; ++e) {
    const int a = static_cast<int>(rng() % n_bus), b = static_cast<int>(rng() % n_bus);
    if (a != b) edges.emplace_back(a, b);
  }
  std::vector<double> net_out(n_bus, 0.0);
  for (auto [a, b] : edges) {
    const double p = 100.0 * (5.0 + 10.0 * U(rng)) * (theta[a] - theta[b]);
    if (p >= 0) {
      s.flows.push_back({static_cast<std::size_t>(a), static_cast<std::size_t>(b), p});
    } else {
      s.flows.push_back({static_cast<std::size_t>(b), static_cast<std::size_t>(a), -p});
    }
    net_out[s.flows.back().from] += s.flows.back().p;
    net_out[s.flows.back().to] -= s.flows.back().p;
  }
  s.load.assign(n_bus, 0.0);
  std::vector<double> eg, ed;
  for (int i = 0; i < n_bus; ++i) {
    // Supply must cover net outflow plus local load.
    const double load = U(rng) < 0.6 ? 50.0 * U(rng) : 0.0;
    s.load[i] = load;
    double supply = net_out[i] + load;
    if (supply < 0.0) {
      s.load[i] -= supply;  // extra inflow is consumed locally
      supply = 0.0;
    }
    if (supply > 0.0 || U(rng) < 0.3) {
      const double extra_supply = U(rng) < 0.3 ? 20.0 * U(rng) : 0.0;
      supply += extra_supply;
      s.load[i] += extra_supply;
      if (U(rng) < 0.25 && supply > 0.0) {
        const double dis = supply * U(rng);
        s.discharge.push_back({static_cast<std::size_t>(i), dis});
        ed.push_back(U(rng));
        supply -= dis;
      }
      s.sources.push_back({static_cast<std::size_t>(i), supply});
      eg.push_back(U(rng) < 0.2 ? 0.0 : 0.3 + 0.7 * U(rng));
    }
  }
  out.e_g = Eigen::Map<Eigen::VectorXd>(eg.data(), static_cast<Eigen::Index>(eg.size()));
  out.e_dis = Eigen::Map<Eigen::VectorXd>(ed.data(), static_cast<Eigen::Index>(ed.size()));
  return out;
}

}  // namespace oracle
