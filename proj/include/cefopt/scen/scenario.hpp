#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cefopt/grid/network.hpp"

namespace cefopt::scen {

/// One load-parameter draw. Factors scale the nominal case data.
struct Scenario {
  int id = 0;
  std::vector<double> load_factor;  // per load, multiplies the nominal profile
  std::vector<double> cost_factor;  // per generator, multiplies the linear cost term

  /// The nominal scenario: every factor 1.
  static Scenario nominal(const grid::NetworkCase& c, int id = 0);
  /// Scenario-scaled demand of load d in period t, MW.
  double demand(const grid::NetworkCase& c, std::size_t d, std::size_t t) const;
};

struct SamplingOptions {
  double load_lo = 0.7;
  double load_hi = 1.3;
  /// Generator linear costs are scaled by U[1 - spread, 1 + spread]; 0 disables.
  double cost_spread = 0.5;
};

/// n draws, deterministic under seed.
std::vector<Scenario> sample_scenarios(const grid::NetworkCase& c, int n, std::uint64_t seed,
                                       const SamplingOptions& options = {});

}  // namespace cefopt::scen
