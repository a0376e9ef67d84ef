#include "cefopt/scen/scenario.hpp"

#include <random>

#include "cefopt/error.hpp"

namespace cefopt::scen {

Scenario Scenario::nominal(const grid::NetworkCase& c, int id) {
  return {id, std::vector<double>(c.loads.size(), 1.0), std::vector<double>(c.generators.size(), 1.0)};
}

double Scenario::demand(const grid::NetworkCase& c, std::size_t d, std::size_t t) const {
  return load_factor.at(d) * c.loads.at(d).profile.at(t);
}

std::vector<Scenario> sample_scenarios(const grid::NetworkCase& c, int n, std::uint64_t seed,
                                       const SamplingOptions& options) {
  if (n < 1) throw ContractViolation("at least one scenario must be requested");
  if (!(options.load_lo > 0.0 && options.load_lo <= options.load_hi)) {
    throw ContractViolation("load factor range must satisfy 0 < lo <= hi");
  }
  if (options.cost_spread < 0.0 || options.cost_spread >= 1.0) {
    throw ContractViolation("cost spread must lie in [0, 1)");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> load(options.load_lo, options.load_hi);
  std::uniform_real_distribution<double> cost(1.0 - options.cost_spread, 1.0 + options.cost_spread);
  std::vector<Scenario> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Scenario s;
    s.id = i;
    for (std::size_t d = 0; d < c.loads.size(); ++d) s.load_factor.push_back(load(rng));
    for (std::size_t g = 0; g < c.generators.size(); ++g) {
      s.cost_factor.push_back(options.cost_spread > 0.0 ? cost(rng) : 1.0);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace cefopt::scen
