#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <span>
#include <vector>

#include "cefopt/milp/model.hpp"
#include "cefopt/milp/solve.hpp"

namespace cefopt::milp::detail {

enum class ColStatus : signed char { Basic, AtLower, AtUpper, Free };

/// Simplex basis: the column basic in each row position plus the status of
/// every column (structural columns first, then one logical per row).
struct Basis {
  std::vector<int> head;
  std::vector<ColStatus> status;
  bool empty() const { return head.empty(); }
};

/// Bounded-variable revised primal simplex on  A x - s = 0,  l <= (x, s) <= u.
///
/// Rows are equilibrated by their largest coefficient. Phase 1 minimizes the
/// sum of bound infeasibilities of the basic variables (composite costs
/// rebuilt every iteration), so any basis can be used as a starting point.
/// The basis is factorized with a sparse LU and updated in product form.
class SimplexEngine {
 public:
  enum class Outcome { Optimal, Infeasible, Unbounded, IterationLimit };

  SimplexEngine(const Model& model, const LpOptions& options);

  /// Replaces the structural bounds (used by branch-and-bound).
  void set_structural_bounds(std::span<const double> lower, std::span<const double> upper);
  void set_structural_bound(int j, double lower, double upper);

  Outcome solve(const Basis* warm = nullptr);

  std::vector<double> structural_values() const;
  /// Objective in the model's own sense including the constant term.
  double objective() const;
  Basis basis() const { return {head_, status_}; }
  long iterations() const { return iterations_; }
  int num_structural() const { return n_; }

 private:
  using SpMat = Eigen::SparseMatrix<double>;

  void reset_slack_basis();
  bool load_basis(const Basis& basis);
  void place_nonbasic(int j);
  bool refactor();
  void recompute_basic_values();
  void ftran(Eigen::VectorXd& v) const;
  void btran(Eigen::VectorXd& v) const;
  void load_column(int j, Eigen::VectorXd& out) const;
  double column_dot(int j, const Eigen::VectorXd& y) const;
  double max_basic_infeasibility() const;
  Outcome iterate();

  const LpOptions opts_;
  int n_ = 0;  // structural columns
  int m_ = 0;  // rows (= logical columns)

  // Row-scaled structural columns in CSC form.
  std::vector<int> col_start_;
  std::vector<int> col_row_;
  std::vector<double> col_val_;
  std::vector<double> row_scale_;

  std::vector<double> lower_, upper_, cost_, x_, tol_;
  double cost_scale_ = 1.0;
  double sign_ = 1.0;
  double obj_constant_ = 0.0;

  std::vector<int> head_;
  std::vector<int> position_;  // basis position of column, -1 if nonbasic
  std::vector<ColStatus> status_;

  struct Eta {
    int row;
    double pivot;
    std::vector<int> idx;
    std::vector<double> val;
  };
  mutable Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu_;  // transpose() is non-const
  std::vector<Eta> etas_;
  long iterations_ = 0;
};

}  // namespace cefopt::milp::detail
