#include "cefopt/milp/solve.hpp"

#include <chrono>
#include <cmath>

#include "cefopt/error.hpp"
#include "simplex_engine.hpp"

namespace cefopt::milp {

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::GapLimit: return "gap_limit";
    case SolveStatus::NodeLimit: return "node_limit";
  }
  return "unknown";
}

SolveResult lp_solve(const Model& model, const LpOptions& options) {
  model.validate();
  const auto start = std::chrono::steady_clock::now();
  detail::SimplexEngine engine(model, options);
  const auto outcome = engine.solve();
  SolveResult res;
  res.lp_iterations = engine.iterations();
  switch (outcome) {
    case detail::SimplexEngine::Outcome::Optimal:
      res.status = SolveStatus::Optimal;
      res.values = engine.structural_values();
      res.objective = engine.objective();
      res.bound = res.objective;
      break;
    case detail::SimplexEngine::Outcome::Infeasible:
      res.status = SolveStatus::Infeasible;
      break;
    case detail::SimplexEngine::Outcome::Unbounded:
      res.status = SolveStatus::Unbounded;
      break;
    case detail::SimplexEngine::Outcome::IterationLimit:
      throw NumericalError("simplex iteration limit reached");
  }
  res.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

ResidualReport check_solution(const Model& model, const std::vector<double>& values,
                              bool integral) {
  if (static_cast<int>(values.size()) != model.num_vars()) {
    throw ContractViolation("solution length does not match the model");
  }
  ResidualReport rep;
  double worst = 0.0;
  auto note = [&](double v, const std::string& name) {
    if (v > worst) {
      worst = v;
      rep.worst = name;
    }
  };
  for (int j = 0; j < model.num_vars(); ++j) {
    const Variable& v = model.var(j);
    const double x = values[j];
    if (!std::isfinite(x)) {
      rep.max_bound_violation = kInf;
      rep.worst = v.name;
      return rep;
    }
    const double bv = std::max({0.0, v.lower - x, x - v.upper});
    rep.max_bound_violation = std::max(rep.max_bound_violation, bv);
    note(bv, v.name);
    if (integral && v.kind == VarKind::Binary) {
      const double iv = std::abs(x - std::round(x));
      rep.max_integrality_violation = std::max(rep.max_integrality_violation, iv);
    }
  }
  for (int i = 0; i < model.num_rows(); ++i) {
    const Constraint& c = model.row(i);
    const double a = model.row_activity(i, values);
    double v = 0.0;
    switch (c.sense) {
      case Sense::LessEqual: v = std::max(0.0, a - c.rhs); break;
      case Sense::GreaterEqual: v = std::max(0.0, c.rhs - a); break;
      case Sense::Equal: v = std::abs(a - c.rhs); break;
    }
    v /= 1.0 + std::abs(c.rhs);
    rep.max_row_violation = std::max(rep.max_row_violation, v);
    note(v, c.name);
  }
  return rep;
}

}  // namespace cefopt::milp
