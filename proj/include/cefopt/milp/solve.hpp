#pragma once

#include <string>
#include <vector>

#include "cefopt/milp/model.hpp"

namespace cefopt::milp {

enum class SolveStatus {
  Optimal,
  Infeasible,
  Unbounded,
  GapLimit,   // time limit reached before the requested gap was proven
  NodeLimit,  // node limit reached before the requested gap was proven
};

std::string to_string(SolveStatus s);

struct SolveResult {
  SolveStatus status = SolveStatus::Infeasible;
  std::vector<double> values;  // empty when no primal solution is known
  double objective = 0.0;      // in the model's own sense
  double bound = 0.0;          // best proven bound (= objective for LPs)
  double gap = 0.0;            // relative gap |bound - objective| / max(1, |objective|)
  long nodes = 0;
  long lp_iterations = 0;
  double seconds = 0.0;
  bool start_accepted = false;  // the supplied start gave the first incumbent

  bool has_solution() const { return !values.empty(); }
};

struct LpOptions {
  double feasibility_tol = 1e-7;
  double optimality_tol = 1e-9;
  double pivot_tol = 1e-9;
  long max_iterations = 200000;  // per LP solve
  int bland_after_degenerate = 1000;
  int refactor_interval = 64;
};

struct BbOptions {
  double rel_gap = 1e-4;
  long node_limit = 1000000;
  double time_limit = 1e30;  // seconds
  double integrality_tol = 1e-6;
  /// Pseudocost observations per direction before a binary is trusted;
  /// less observed candidates are strong-branched, at most strong_candidates per node.
  int reliability = 4;
  int strong_candidates = 8;
  LpOptions lp;
  /// Runs check_solution on every accepted incumbent and throws on failure.
  bool check_residuals = true;
  /// Optional start: one value per variable, of which only the binaries are
  /// read. They are rounded and fixed, and the continuous part is re-solved to
  /// seed the incumbent. An infeasible start is ignored.
  std::vector<double> start;
};

/// Solves the continuous relaxation (binaries in [0,1]).
SolveResult lp_solve(const Model& model, const LpOptions& options = {});

/// Branch-and-bound over the binary variables.
SolveResult bb_solve(const Model& model, const BbOptions& options = {});

struct ResidualReport {
  double max_bound_violation = 0.0;
  double max_row_violation = 0.0;  // scaled by 1 + |rhs|
  double max_integrality_violation = 0.0;
  std::string worst;  // name of the worst offender
  bool ok(double feas_tol = 1e-7, double int_tol = 1e-6) const {
    return max_bound_violation <= feas_tol && max_row_violation <= feas_tol &&
           max_integrality_violation <= int_tol;
  }
};

/// Independent residual audit of a primal vector against the model.
ResidualReport check_solution(const Model& model, const std::vector<double>& values,
                              bool integral);

}  // namespace cefopt::milp
