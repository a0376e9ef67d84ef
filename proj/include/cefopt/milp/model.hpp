#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace cefopt::milp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class VarKind { Continuous, Binary };
enum class Sense { LessEqual, Equal, GreaterEqual };
enum class ObjSense { Minimize, Maximize };

/// Handle to a model variable.
struct Var {
  int index = -1;
  bool valid() const { return index >= 0; }
  friend bool operator==(Var, Var) = default;
};

/// Handle to a model constraint row.
struct Row {
  int index = -1;
  bool valid() const { return index >= 0; }
};

struct Term {
  int var;
  double coef;
};

/// Affine expression sum(coef * var) + constant. Duplicate variables are
/// allowed while building and merged when the expression enters a model.
class LinExpr {
 public:
  LinExpr() = default;
  LinExpr(double constant) : constant_(constant) {}  // NOLINT(implicit)
  LinExpr(Var v) { add(v, 1.0); }                    // NOLINT(implicit)

  LinExpr& add(Var v, double coef) {
    if (coef != 0.0) terms_.push_back({v.index, coef});
    return *this;
  }
  LinExpr& add_constant(double c) {
    constant_ += c;
    return *this;
  }

  LinExpr& operator+=(const LinExpr& o);
  LinExpr& operator-=(const LinExpr& o);
  LinExpr& operator*=(double k);

  friend LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
  friend LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
  friend LinExpr operator*(LinExpr a, double k) { return a *= k; }
  friend LinExpr operator*(double k, LinExpr a) { return a *= k; }
  friend LinExpr operator-(LinExpr a) { return a *= -1.0; }

  const std::vector<Term>& terms() const { return terms_; }
  double constant() const { return constant_; }

  /// Value at a full primal vector.
  double evaluate(std::span<const double> values) const;

  /// Sorted by variable with duplicates summed and zeros removed.
  LinExpr merged() const;

 private:
  std::vector<Term> terms_;
  double constant_ = 0.0;
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

struct Variable {
  std::string name;
  VarKind kind = VarKind::Continuous;
  double lower = 0.0;
  double upper = kInf;
};

struct Constraint {
  std::string name;
  std::vector<Term> terms;  // merged, sorted by variable
  Sense sense = Sense::LessEqual;
  double rhs = 0.0;
};

struct Objective {
  ObjSense sense = ObjSense::Minimize;
  std::vector<double> coefs;  // dense, one per variable
  double constant = 0.0;
};

/// Solver-agnostic mixed-integer linear model.
class Model {
 public:
  explicit Model(std::string name = "model") : name_(std::move(name)) {}

  Var add_var(std::string name, double lower, double upper,
              VarKind kind = VarKind::Continuous);
  Var add_binary(std::string name) {
    return add_var(std::move(name), 0.0, 1.0, VarKind::Binary);
  }

  /// Adds lhs (sense) rhs; constants are moved to the right-hand side.
  Row add_constraint(const LinExpr& lhs, Sense sense, const LinExpr& rhs,
                     std::string name);
  Row add_le(const LinExpr& lhs, const LinExpr& rhs, std::string name) {
    return add_constraint(lhs, Sense::LessEqual, rhs, std::move(name));
  }
  Row add_eq(const LinExpr& lhs, const LinExpr& rhs, std::string name) {
    return add_constraint(lhs, Sense::Equal, rhs, std::move(name));
  }
  Row add_ge(const LinExpr& lhs, const LinExpr& rhs, std::string name) {
    return add_constraint(lhs, Sense::GreaterEqual, rhs, std::move(name));
  }

  void set_objective(ObjSense sense, const LinExpr& expr);
  void add_to_objective(const LinExpr& expr);
  void set_objective_sense(ObjSense sense) { objective_.sense = sense; }

  void set_bounds(Var v, double lower, double upper);
  void fix(Var v, double value) { set_bounds(v, value, value); }

  const std::string& name() const { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }
  int num_vars() const { return static_cast<int>(vars_.size()); }
  int num_rows() const { return static_cast<int>(rows_.size()); }
  int num_binaries() const;
  /// Nonzero constraint coefficients.
  std::size_t nonzeros() const;
  /// Range of an expression over the variable bounds alone.
  Interval range_of(const LinExpr& e) const;

  const Variable& var(Var v) const;
  const Variable& var(int i) const { return vars_.at(i); }
  const Constraint& row(int i) const { return rows_.at(i); }
  const Constraint& row(Row r) const { return rows_.at(r.index); }
  const std::vector<Variable>& vars() const { return vars_; }
  const std::vector<Constraint>& rows() const { return rows_; }
  const Objective& objective() const { return objective_; }

  bool has_var(Var v) const { return v.index >= 0 && v.index < num_vars(); }
  /// Looks a constraint up by exact name; invalid Row when absent.
  Row find_row(const std::string& name) const;

  /// Throws BuilderError when an invariant is broken.
  void validate() const;

  double objective_value(std::span<const double> values) const;
  double row_activity(int i, std::span<const double> values) const;

 private:
  void check_expr(const LinExpr& e) const;

  std::string name_;
  std::vector<Variable> vars_;
  std::vector<Constraint> rows_;
  Objective objective_;
  std::unordered_map<std::string, int> row_by_name_;
};

}  // namespace cefopt::milp
