#include "cefopt/milp/pwl.hpp"

#include <algorithm>
#include <cmath>

#include "cefopt/error.hpp"

namespace cefopt::milp {

void ConcavePwl::validate() const {
  if (slopes.empty()) throw ModelingError("piecewise utility needs at least one segment");
  if (breakpoints.size() + 1 != slopes.size()) {
    throw ModelingError("piecewise utility needs one slope more than interior breakpoints");
  }
  double prev = x0;
  for (double b : breakpoints) {
    if (!(b > prev)) throw ModelingError("piecewise breakpoints must increase");
    prev = b;
  }
  for (std::size_t k = 1; k < slopes.size(); ++k) {
    if (!(slopes[k] < slopes[k - 1])) {
      throw ModelingError("piecewise utility slopes must strictly decrease (concavity)");
    }
  }
  for (double s : slopes) {
    if (!std::isfinite(s)) throw ModelingError("non-finite piecewise slope");
  }
}

double ConcavePwl::intercept(std::size_t k) const {
  double x = x0;
  double y = y0;
  for (std::size_t i = 0; i < k; ++i) {
    y += slopes[i] * (breakpoints[i] - x);
    x = breakpoints[i];
  }
  return y - slopes[k] * x;
}

double ConcavePwl::operator()(double x) const {
  double v = slopes[0] * x + intercept(0);
  for (std::size_t k = 1; k < slopes.size(); ++k) v = std::min(v, slopes[k] * x + intercept(k));
  return v;
}

Var add_concave_pwl_utility(Model& model, Var p, const ConcavePwl& fn, const std::string& name) {
  fn.validate();
  if (!model.has_var(p)) throw BuilderError("utility on unregistered variable");
  Var u = model.add_var(name, -kInf, kInf);
  for (std::size_t k = 0; k < fn.slopes.size(); ++k) {
    model.add_le(LinExpr(u) - fn.slopes[k] * LinExpr(p), fn.intercept(k),
                 name + "_seg" + std::to_string(k));
  }
  return u;
}

void BlockedTariff::validate() const {
  if (blocks.empty()) throw ModelingError("tariff has no blocks");
  if (!(dt > 0.0)) throw ModelingError("tariff period length must be positive");
  for (std::size_t n = 0; n < blocks.size(); ++n) {
    if (!(blocks[n].cap > 0.0) || !std::isfinite(blocks[n].cap)) {
      throw ModelingError("tariff block caps must be positive");
    }
    if (!std::isfinite(blocks[n].price) || blocks[n].price < 0.0) {
      throw ModelingError("tariff block prices must be finite and nonnegative");
    }
    if (n > 0 && blocks[n].price < blocks[n - 1].price) {
      throw ModelingError("tariff block prices must be nondecreasing");
    }
  }
}

double BlockedTariff::total_cap() const {
  double s = 0.0;
  for (const TariffBlock& b : blocks) s += b.cap;
  return s;
}

double BlockedTariff::cost(double rate) const {
  double left = rate;
  double c = 0.0;
  for (const TariffBlock& b : blocks) {
    const double take = std::clamp(left, 0.0, b.cap);
    c += b.price * take;
    left -= take;
  }
  return c * dt;
}

BlockedTariff BlockedTariff::scaled(double k) const {
  BlockedTariff out = *this;
  for (TariffBlock& b : out.blocks) b.price *= k;
  return out;
}

BlockedCost add_blocked_cost(Model& model, Var rate, const BlockedTariff& tariff,
                             const std::string& name) {
  tariff.validate();
  if (!model.has_var(rate)) throw BuilderError("blocked cost on unregistered variable");
  BlockedCost out;
  LinExpr sum;
  LinExpr cost;
  for (std::size_t n = 0; n < tariff.blocks.size(); ++n) {
    Var r = model.add_var(name + "_blk" + std::to_string(n), 0.0, tariff.blocks[n].cap);
    out.blocks.push_back(r);
    sum.add(r, 1.0);
    cost.add(r, tariff.blocks[n].price * tariff.dt);
  }
  model.add_eq(LinExpr(rate), sum, name + "_split");
  out.cost = model.add_var(name + "_cost", 0.0, kInf);
  model.add_eq(LinExpr(out.cost), cost, name + "_price");
  return out;
}

}  // namespace cefopt::milp
