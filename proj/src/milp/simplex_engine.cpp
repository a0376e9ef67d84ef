#include "simplex_engine.hpp"

#include <algorithm>
#include <cmath>

#include "cefopt/error.hpp"

namespace cefopt::milp::detail {

namespace {

double power_of_two_scale(double max_abs) {
  if (max_abs <= 0.0 || !std::isfinite(max_abs)) return 1.0;
  return std::exp2(-std::round(std::log2(max_abs)));
}

}  // namespace

SimplexEngine::SimplexEngine(const Model& model, const LpOptions& options)
    : opts_(options), n_(model.num_vars()), m_(model.num_rows()) {
  const int total = n_ + m_;
  row_scale_.assign(m_, 1.0);
  for (int i = 0; i < m_; ++i) {
    double mx = 0.0;
    for (const Term& t : model.row(i).terms) mx = std::max(mx, std::abs(t.coef));
    row_scale_[i] = power_of_two_scale(mx);
  }

  std::vector<int> count(n_ + 1, 0);
  for (int i = 0; i < m_; ++i) {
    for (const Term& t : model.row(i).terms) ++count[t.var + 1];
  }
  col_start_.assign(n_ + 1, 0);
  for (int j = 0; j < n_; ++j) col_start_[j + 1] = col_start_[j] + count[j + 1];
  col_row_.resize(col_start_[n_]);
  col_val_.resize(col_start_[n_]);
  std::vector<int> fill(col_start_.begin(), col_start_.end() - 1);
  for (int i = 0; i < m_; ++i) {
    for (const Term& t : model.row(i).terms) {
      const int p = fill[t.var]++;
      col_row_[p] = i;
      col_val_[p] = t.coef * row_scale_[i];
    }
  }

  lower_.assign(total, 0.0);
  upper_.assign(total, 0.0);
  for (int j = 0; j < n_; ++j) {
    lower_[j] = model.var(j).lower;
    upper_[j] = model.var(j).upper;
  }
  for (int i = 0; i < m_; ++i) {
    const Constraint& c = model.row(i);
    const double b = c.rhs * row_scale_[i];
    switch (c.sense) {
      case Sense::LessEqual:
        lower_[n_ + i] = -kInf;
        upper_[n_ + i] = b;
        break;
      case Sense::Equal:
        lower_[n_ + i] = b;
        upper_[n_ + i] = b;
        break;
      case Sense::GreaterEqual:
        lower_[n_ + i] = b;
        upper_[n_ + i] = kInf;
        break;
    }
  }

  const Objective& obj = model.objective();
  sign_ = obj.sense == ObjSense::Minimize ? 1.0 : -1.0;
  obj_constant_ = obj.constant;
  double cmax = 0.0;
  for (double c : obj.coefs) cmax = std::max(cmax, std::abs(c));
  cost_scale_ = std::max(1.0, cmax);
  cost_.assign(total, 0.0);
  for (int j = 0; j < n_; ++j) cost_[j] = sign_ * obj.coefs[j] / cost_scale_;

  // Feasibility tolerance per column; logical columns carry the row scale so
  // that unscaled row residuals stay within ftol * (1 + |rhs|).
  tol_.assign(total, opts_.feasibility_tol);
  for (int i = 0; i < m_; ++i) {
    tol_[n_ + i] = opts_.feasibility_tol * row_scale_[i] * (1.0 + std::abs(model.row(i).rhs));
  }

  x_.assign(total, 0.0);
  status_.assign(total, ColStatus::AtLower);
  position_.assign(total, -1);
  head_.assign(m_, -1);
}

void SimplexEngine::set_structural_bounds(std::span<const double> lower,
                                          std::span<const double> upper) {
  for (int j = 0; j < n_; ++j) {
    lower_[j] = lower[j];
    upper_[j] = upper[j];
  }
}

void SimplexEngine::set_structural_bound(int j, double lower, double upper) {
  lower_[j] = lower;
  upper_[j] = upper;
}

void SimplexEngine::place_nonbasic(int j) {
  const bool lo = std::isfinite(lower_[j]);
  const bool up = std::isfinite(upper_[j]);
  if (status_[j] == ColStatus::AtUpper && up) {
    x_[j] = upper_[j];
  } else if (lo) {
    status_[j] = ColStatus::AtLower;
    x_[j] = lower_[j];
  } else if (up) {
    status_[j] = ColStatus::AtUpper;
    x_[j] = upper_[j];
  } else {
    status_[j] = ColStatus::Free;
    x_[j] = 0.0;
  }
}

void SimplexEngine::reset_slack_basis() {
  const int total = n_ + m_;
  std::fill(position_.begin(), position_.end(), -1);
  for (int j = 0; j < n_; ++j) {
    status_[j] = ColStatus::AtLower;
    place_nonbasic(j);
  }
  for (int i = 0; i < m_; ++i) {
    head_[i] = n_ + i;
    position_[n_ + i] = i;
    status_[n_ + i] = ColStatus::Basic;
  }
  (void)total;
}

bool SimplexEngine::load_basis(const Basis& basis) {
  const int total = n_ + m_;
  if (static_cast<int>(basis.head.size()) != m_ ||
      static_cast<int>(basis.status.size()) != total) {
    return false;
  }
  std::vector<int> pos(total, -1);
  for (int k = 0; k < m_; ++k) {
    const int c = basis.head[k];
    if (c < 0 || c >= total || pos[c] >= 0 || basis.status[c] != ColStatus::Basic) return false;
    pos[c] = k;
  }
  head_ = basis.head;
  status_ = basis.status;
  position_ = std::move(pos);
  for (int j = 0; j < total; ++j) {
    if (position_[j] < 0) {
      if (status_[j] == ColStatus::Basic) return false;
      place_nonbasic(j);
    }
  }
  return true;
}

bool SimplexEngine::refactor() {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(m_) * 3);
  for (int k = 0; k < m_; ++k) {
    const int c = head_[k];
    if (c < n_) {
      for (int p = col_start_[c]; p < col_start_[c + 1]; ++p) {
        trips.emplace_back(col_row_[p], k, col_val_[p]);
      }
    } else {
      trips.emplace_back(c - n_, k, -1.0);
    }
  }
  SpMat basis(m_, m_);
  basis.setFromTriplets(trips.begin(), trips.end());
  basis.makeCompressed();
  lu_.analyzePattern(basis);
  lu_.factorize(basis);
  etas_.clear();
  return lu_.info() == Eigen::Success;
}

void SimplexEngine::ftran(Eigen::VectorXd& v) const {
  if (m_ == 0) return;
  v = lu_.solve(v).eval();
  for (const Eta& e : etas_) {
    const double xr = v[e.row] / e.pivot;
    v[e.row] = xr;
    if (xr == 0.0) continue;
    for (std::size_t p = 0; p < e.idx.size(); ++p) v[e.idx[p]] -= e.val[p] * xr;
  }
}

void SimplexEngine::btran(Eigen::VectorXd& v) const {
  if (m_ == 0) return;
  for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
    double s = v[it->row];
    for (std::size_t p = 0; p < it->idx.size(); ++p) s -= it->val[p] * v[it->idx[p]];
    v[it->row] = s / it->pivot;
  }
  v = lu_.transpose().solve(v).eval();
}

void SimplexEngine::load_column(int j, Eigen::VectorXd& out) const {
  out.setZero(m_);
  if (j < n_) {
    for (int p = col_start_[j]; p < col_start_[j + 1]; ++p) out[col_row_[p]] = col_val_[p];
  } else {
    out[j - n_] = -1.0;
  }
}

double SimplexEngine::column_dot(int j, const Eigen::VectorXd& y) const {
  if (j >= n_) return -y[j - n_];
  double s = 0.0;
  for (int p = col_start_[j]; p < col_start_[j + 1]; ++p) s += col_val_[p] * y[col_row_[p]];
  return s;
}

void SimplexEngine::recompute_basic_values() {
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m_);
  const int total = n_ + m_;
  for (int j = 0; j < total; ++j) {
    if (position_[j] >= 0 || x_[j] == 0.0) continue;
    if (j < n_) {
      for (int p = col_start_[j]; p < col_start_[j + 1]; ++p) rhs[col_row_[p]] -= col_val_[p] * x_[j];
    } else {
      rhs[j - n_] += x_[j];
    }
  }
  ftran(rhs);
  for (int k = 0; k < m_; ++k) x_[head_[k]] = rhs[k];
}

double SimplexEngine::max_basic_infeasibility() const {
  double worst = 0.0;
  for (int k = 0; k < m_; ++k) {
    const int c = head_[k];
    worst = std::max({worst, lower_[c] - x_[c], x_[c] - upper_[c]});
  }
  return worst;
}

SimplexEngine::Outcome SimplexEngine::solve(const Basis* warm) {
  etas_.clear();
  bool ready = false;
  if (warm != nullptr && !warm->empty() && load_basis(*warm)) ready = refactor();
  if (!ready) {
    reset_slack_basis();
    if (!refactor()) throw NumericalError("slack basis factorization failed");
  }
  recompute_basic_values();
  return iterate();
}

SimplexEngine::Outcome SimplexEngine::iterate() {
  const double otol = opts_.optimality_tol;
  const int total = n_ + m_;
  Eigen::VectorXd y(m_), alpha(m_), cb(m_);
  std::vector<double> hit(m_);
  std::vector<char> hit_upper(m_);
  long degenerate = 0;
  int verifications = 0;
  const long first_iteration = iterations_;

  auto fresh_start = [&]() {
    if (!refactor()) {
      reset_slack_basis();
      if (!refactor()) throw NumericalError("slack basis factorization failed");
    }
    recompute_basic_values();
  };

  while (true) {
    if (iterations_ - first_iteration >= opts_.max_iterations) return Outcome::IterationLimit;
    if (static_cast<int>(etas_.size()) >= opts_.refactor_interval) fresh_start();

    bool phase1 = false;
    for (int k = 0; k < m_; ++k) {
      const int c = head_[k];
      if (x_[c] < lower_[c] - tol_[c]) {
        cb[k] = -1.0;
        phase1 = true;
      } else if (x_[c] > upper_[c] + tol_[c]) {
        cb[k] = 1.0;
        phase1 = true;
      } else {
        cb[k] = 0.0;
      }
    }
    if (!phase1) {
      for (int k = 0; k < m_; ++k) cb[k] = cost_[head_[k]];
    }
    y = cb;
    btran(y);

    const bool bland = degenerate > opts_.bland_after_degenerate;
    int q = -1;
    double dq = 0.0;
    double best = 0.0;
    for (int j = 0; j < total; ++j) {
      const ColStatus st = status_[j];
      if (st == ColStatus::Basic || lower_[j] == upper_[j]) continue;
      const double d = (phase1 ? 0.0 : cost_[j]) - column_dot(j, y);
      const bool eligible = (st == ColStatus::AtLower && d < -otol) ||
                            (st == ColStatus::AtUpper && d > otol) ||
                            (st == ColStatus::Free && std::abs(d) > otol);
      if (!eligible) continue;
      if (bland) {
        q = j;
        dq = d;
        break;
      }
      if (std::abs(d) > best) {
        best = std::abs(d);
        q = j;
        dq = d;
      }
    }

    if (q < 0) {
      // Confirm the verdict on a fresh factorization before reporting it.
      if (!etas_.empty() && verifications < 4) {
        ++verifications;
        fresh_start();
        continue;
      }
      return phase1 ? Outcome::Infeasible : Outcome::Optimal;
    }

    load_column(q, alpha);
    ftran(alpha);
    const double dir = dq < 0.0 ? 1.0 : -1.0;

    // Harris two-pass ratio test.
    double theta_max = kInf;
    for (int k = 0; k < m_; ++k) {
      const double a = alpha[k];
      hit[k] = kInf;
      if (std::abs(a) <= opts_.pivot_tol) continue;
      const double delta = -dir * a;
      const int c = head_[k];
      const double xv = x_[c];
      const double ftol = tol_[c];
      const double relax = 0.5 * ftol;
      double b;
      bool upper_side;
      if (delta < 0.0) {
        if (xv > upper_[c] + ftol) {
          b = upper_[c];
          upper_side = true;
        } else if (xv < lower_[c] - ftol || !std::isfinite(lower_[c])) {
          continue;
        } else {
          b = lower_[c];
          upper_side = false;
        }
        theta_max = std::min(theta_max, (xv - b + relax) / -delta);
        hit[k] = std::max(0.0, (xv - b) / -delta);
      } else {
        if (xv < lower_[c] - ftol) {
          b = lower_[c];
          upper_side = false;
        } else if (xv > upper_[c] + ftol || !std::isfinite(upper_[c])) {
          continue;
        } else {
          b = upper_[c];
          upper_side = true;
        }
        theta_max = std::min(theta_max, (b - xv + relax) / delta);
        hit[k] = std::max(0.0, (b - xv) / delta);
      }
      hit_upper[k] = upper_side ? 1 : 0;
    }
    const double range = upper_[q] - lower_[q];

    if (!std::isfinite(theta_max) && !std::isfinite(range)) {
      if (phase1) {
        if (verifications++ < 4) {
          fresh_start();
          continue;
        }
        throw NumericalError("phase-1 ray detected; basis is numerically unstable");
      }
      return Outcome::Unbounded;
    }

    int r = -1;
    double theta;
    if (range <= theta_max) {
      theta = range;
    } else {
      double best_pivot = -1.0;
      double best_ratio = kInf;
      for (int k = 0; k < m_; ++k) {
        if (hit[k] > theta_max) continue;
        if (bland) {
          if (r < 0 || hit[k] < best_ratio ||
              (hit[k] == best_ratio && head_[k] < head_[r])) {
            best_ratio = hit[k];
            r = k;
          }
        } else if (std::abs(alpha[k]) > best_pivot) {
          best_pivot = std::abs(alpha[k]);
          r = k;
        }
      }
      theta = hit[r];
    }

    if (theta != 0.0) {
      x_[q] += dir * theta;
      for (int k = 0; k < m_; ++k) {
        if (alpha[k] != 0.0) x_[head_[k]] -= dir * alpha[k] * theta;
      }
    }
    ++iterations_;
    degenerate = theta <= 1e-12 ? degenerate + 1 : 0;

    if (r < 0) {
      if (dir > 0) {
        status_[q] = ColStatus::AtUpper;
        x_[q] = upper_[q];
      } else {
        status_[q] = ColStatus::AtLower;
        x_[q] = lower_[q];
      }
      continue;
    }

    const int leaving = head_[r];
    if (hit_upper[r]) {
      x_[leaving] = upper_[leaving];
      status_[leaving] = lower_[leaving] == upper_[leaving] ? ColStatus::AtLower : ColStatus::AtUpper;
    } else {
      x_[leaving] = lower_[leaving];
      status_[leaving] = ColStatus::AtLower;
    }
    position_[leaving] = -1;
    head_[r] = q;
    position_[q] = r;
    status_[q] = ColStatus::Basic;

    Eta eta{r, alpha[r], {}, {}};
    for (int k = 0; k < m_; ++k) {
      if (k != r && std::abs(alpha[k]) > 1e-14) {
        eta.idx.push_back(k);
        eta.val.push_back(alpha[k]);
      }
    }
    etas_.push_back(std::move(eta));
  }
}

std::vector<double> SimplexEngine::structural_values() const {
  return {x_.begin(), x_.begin() + n_};
}

double SimplexEngine::objective() const {
  double s = 0.0;
  for (int j = 0; j < n_; ++j) s += cost_[j] * x_[j];
  return obj_constant_ + sign_ * cost_scale_ * s;
}

}  // namespace cefopt::milp::detail
