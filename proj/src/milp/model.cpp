#include "cefopt/milp/model.hpp"

#include <algorithm>
#include <cmath>

#include "cefopt/error.hpp"

namespace cefopt::milp {

LinExpr& LinExpr::operator+=(const LinExpr& o) {
  terms_.insert(terms_.end(), o.terms_.begin(), o.terms_.end());
  constant_ += o.constant_;
  return *this;
}

LinExpr& LinExpr::operator-=(const LinExpr& o) {
  terms_.reserve(terms_.size() + o.terms_.size());
  for (const Term& t : o.terms_) terms_.push_back({t.var, -t.coef});
  constant_ -= o.constant_;
  return *this;
}

LinExpr& LinExpr::operator*=(double k) {
  if (k == 0.0) {
    terms_.clear();
    constant_ = 0.0;
    return *this;
  }
  for (Term& t : terms_) t.coef *= k;
  constant_ *= k;
  return *this;
}

double LinExpr::evaluate(std::span<const double> values) const {
  double s = constant_;
  for (const Term& t : terms_) s += t.coef * values[t.var];
  return s;
}

LinExpr LinExpr::merged() const {
  std::vector<Term> sorted = terms_;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Term& a, const Term& b) { return a.var < b.var; });
  LinExpr out(constant_);
  for (const Term& t : sorted) {
    if (!out.terms_.empty() && out.terms_.back().var == t.var) {
      out.terms_.back().coef += t.coef;
    } else {
      out.terms_.push_back(t);
    }
  }
  std::erase_if(out.terms_, [](const Term& t) { return t.coef == 0.0; });
  return out;
}

Interval Model::range_of(const LinExpr& e) const {
  Interval r{e.constant(), e.constant()};
  for (const Term& t : e.terms()) {
    if (t.coef == 0.0) continue;
    const Variable& v = vars_.at(t.var);
    r.lower += t.coef > 0.0 ? t.coef * v.lower : t.coef * v.upper;
    r.upper += t.coef > 0.0 ? t.coef * v.upper : t.coef * v.lower;
  }
  return r;
}

Var Model::add_var(std::string name, double lower, double upper, VarKind kind) {
  if (kind == VarKind::Binary) {
    lower = std::max(lower, 0.0);
    upper = std::min(upper, 1.0);
  }
  if (std::isnan(lower) || std::isnan(upper) || lower > upper) {
    throw BuilderError("variable '" + name + "' has empty bounds");
  }
  vars_.push_back({std::move(name), kind, lower, upper});
  objective_.coefs.push_back(0.0);
  return Var{num_vars() - 1};
}

void Model::check_expr(const LinExpr& e) const {
  for (const Term& t : e.terms()) {
    if (t.var < 0 || t.var >= num_vars()) {
      throw BuilderError("expression references unregistered variable " +
                         std::to_string(t.var));
    }
    if (!std::isfinite(t.coef)) {
      throw BuilderError("non-finite coefficient on variable " +
                         vars_[t.var].name);
    }
  }
}

Row Model::add_constraint(const LinExpr& lhs, Sense sense, const LinExpr& rhs,
                          std::string name) {
  check_expr(lhs);
  check_expr(rhs);
  LinExpr diff = (lhs - rhs).merged();
  const double b = -diff.constant();
  if (!std::isfinite(b)) {
    throw BuilderError("constraint '" + name + "' has a non-finite rhs");
  }
  row_by_name_.emplace(name, num_rows());
  rows_.push_back({std::move(name), diff.terms(), sense, b});
  return Row{num_rows() - 1};
}

void Model::set_objective(ObjSense sense, const LinExpr& expr) {
  check_expr(expr);
  objective_.sense = sense;
  std::fill(objective_.coefs.begin(), objective_.coefs.end(), 0.0);
  objective_.constant = 0.0;
  add_to_objective(expr);
}

void Model::add_to_objective(const LinExpr& expr) {
  check_expr(expr);
  for (const Term& t : expr.terms()) objective_.coefs[t.var] += t.coef;
  objective_.constant += expr.constant();
}

void Model::set_bounds(Var v, double lower, double upper) {
  if (!has_var(v)) throw BuilderError("set_bounds on unregistered variable");
  if (lower > upper) {
    throw BuilderError("empty bounds for '" + vars_[v.index].name + "'");
  }
  vars_[v.index].lower = lower;
  vars_[v.index].upper = upper;
}

int Model::num_binaries() const {
  return static_cast<int>(std::count_if(vars_.begin(), vars_.end(), [](const Variable& v) {
    return v.kind == VarKind::Binary;
  }));
}

std::size_t Model::nonzeros() const {
  std::size_t n = 0;
  for (const Constraint& c : rows_) n += c.terms.size();
  return n;
}

const Variable& Model::var(Var v) const {
  if (!has_var(v)) throw BuilderError("unregistered variable handle");
  return vars_[v.index];
}

Row Model::find_row(const std::string& name) const {
  auto it = row_by_name_.find(name);
  return it == row_by_name_.end() ? Row{} : Row{it->second};
}

void Model::validate() const {
  for (const Variable& v : vars_) {
    if (v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0)) {
      throw BuilderError("binary '" + v.name + "' has bounds outside [0,1]");
    }
    if (v.lower > v.upper) throw BuilderError("empty bounds for '" + v.name + "'");
  }
  for (const Constraint& c : rows_) {
    if (!std::isfinite(c.rhs)) throw BuilderError("non-finite rhs in '" + c.name + "'");
    for (const Term& t : c.terms) {
      if (t.var < 0 || t.var >= num_vars()) {
        throw BuilderError("row '" + c.name + "' references a missing variable");
      }
    }
  }
}

double Model::objective_value(std::span<const double> values) const {
  double s = objective_.constant;
  for (int j = 0; j < num_vars(); ++j) s += objective_.coefs[j] * values[j];
  return s;
}

double Model::row_activity(int i, std::span<const double> values) const {
  double s = 0.0;
  for (const Term& t : rows_[i].terms) s += t.coef * values[t.var];
  return s;
}

}  // namespace cefopt::milp
