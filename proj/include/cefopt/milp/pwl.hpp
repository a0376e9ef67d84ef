#pragma once

#include <string>
#include <vector>

#include "cefopt/milp/model.hpp"

namespace cefopt::milp {

/// Concave piecewise-linear function through (x0, y0) with one slope per
/// segment; `breakpoints` are the interior segment boundaries.
struct ConcavePwl {
  double x0 = 0.0;
  double y0 = 0.0;
  std::vector<double> breakpoints;
  std::vector<double> slopes;

  /// Throws ModelingError unless slopes strictly decrease and breakpoints increase.
  void validate() const;
  /// Intercept of the line extending segment k.
  double intercept(std::size_t k) const;
  /// min_k (slope_k x + intercept_k); equals the function on and beyond its domain.
  double operator()(double x) const;
};

/// Adds a free utility variable U with U <= slope_k P + intercept_k for every
/// segment. Tight at a maximizing optimum; uses no binaries.
Var add_concave_pwl_utility(Model& model, Var p, const ConcavePwl& fn, const std::string& name);

struct TariffBlock {
  double price;  // $/tCO2
  double cap;    // tCO2/h
};

/// Stepwise emission tariff; block prices must be nondecreasing.
struct BlockedTariff {
  std::vector<TariffBlock> blocks;
  double dt = 1.0;  // h

  void validate() const;
  double total_cap() const;
  /// Cost in $ of emitting at `rate` tCO2/h for one period, blocks filled in order.
  double cost(double rate) const;
  BlockedTariff scaled(double k) const;
};

struct BlockedCost {
  Var cost;
  std::vector<Var> blocks;
};

/// R = sum R_n, 0 <= R_n <= cap_n, cost = sum price_n R_n dt. Exact without
/// binaries when the cost is minimized (or subtracted from a maximized objective).
BlockedCost add_blocked_cost(Model& model, Var rate, const BlockedTariff& tariff,
                             const std::string& name);

}  // namespace cefopt::milp
