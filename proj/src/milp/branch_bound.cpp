#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <queue>

#include "cefopt/error.hpp"
#include "cefopt/milp/solve.hpp"
#include "simplex_engine.hpp"

namespace cefopt::milp {

namespace {

using detail::Basis;
using detail::SimplexEngine;

struct Node {
  long id = 0;
  int depth = 0;
  double bound = -kInf;  // internal (minimization) scale
  std::vector<signed char> fix;  // per binary: -1 free, 0 or 1 fixed
  std::shared_ptr<const Basis> basis;
  // Branching that created the node, for pseudocost updates.
  int branched = -1;
  bool up = false;
  double frac = 0.0;
  double parent_z = -kInf;
  double key = -kInf;  // bound bucketed to the queue tolerance
};

// Objective gain per unit change of each binary, learned from solved children.
class Pseudocosts {
 public:
  explicit Pseudocosts(int n) : sum_(2 * static_cast<std::size_t>(n), 0.0), count_(2 * static_cast<std::size_t>(n), 0) {}

  void record(int b, bool up, double gain_per_unit) {
    const std::size_t k = slot(b, up);
    sum_[k] += gain_per_unit;
    ++count_[k];
    total_[up] += gain_per_unit;
    ++total_count_[up];
  }
  int count(int b, bool up) const { return count_[slot(b, up)]; }
  double value(int b, bool up) const {
    const std::size_t k = slot(b, up);
    if (count_[k] > 0) return sum_[k] / count_[k];
    return total_count_[up] > 0 ? total_[up] / total_count_[up] : 1.0;
  }

 private:
  static std::size_t slot(int b, bool up) { return 2 * static_cast<std::size_t>(b) + (up ? 1 : 0); }
  std::vector<double> sum_;
  std::vector<int> count_;
  double total_[2] = {0.0, 0.0};
  long total_count_[2] = {0, 0};
};

double branch_score(double down, double up) { return std::max(down, 1e-6) * std::max(up, 1e-6); }

// Best bound first; bounds equal to a small tolerance go deepest first, so
// subtrees that do not move the bound are finished by diving.
struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.key != b.key) return a.key > b.key;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.id > b.id;
  }
};

}  // namespace

SolveResult bb_solve(const Model& model, const BbOptions& opt) {
  model.validate();
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  SimplexEngine engine(model, opt.lp);
  const double sense = model.objective().sense == ObjSense::Minimize ? 1.0 : -1.0;
  std::vector<int> binaries;
  for (int j = 0; j < model.num_vars(); ++j) {
    if (model.var(j).kind == VarKind::Binary) binaries.push_back(j);
  }
  const int nb = static_cast<int>(binaries.size());

  SolveResult res;
  double incumbent = kInf;
  std::vector<double> best;
  long next_id = 0;
  long nodes = 0;

  auto cutoff = [&] {
    if (!std::isfinite(incumbent)) return kInf;
    const double scale = std::max(1.0, std::abs(incumbent));
    return incumbent - std::max(opt.rel_gap * scale, 1e-9 * scale);
  };

  auto apply_fixings = [&](const std::vector<signed char>& fix) {
    for (int b = 0; b < nb; ++b) {
      const Variable& v = model.var(binaries[b]);
      if (fix[b] < 0) {
        engine.set_structural_bound(binaries[b], v.lower, v.upper);
      } else {
        const double val = fix[b];
        engine.set_structural_bound(binaries[b], val, val);
      }
    }
  };

  // Rounds and fixes the binaries, re-solves the continuous part and accepts
  // the result when it improves the incumbent.
  auto try_incumbent = [&](const std::vector<double>& x, const Basis& basis) -> bool {
    std::vector<double> cand = x;
    double value = sense * engine.objective();
    if (nb > 0) {
      for (int b = 0; b < nb; ++b) {
        const double r = std::round(x[binaries[b]]);
        engine.set_structural_bound(binaries[b], r, r);
      }
      if (engine.solve(&basis) != SimplexEngine::Outcome::Optimal) return false;
      cand = engine.structural_values();
      for (int j : binaries) cand[j] = std::round(cand[j]);
      value = sense * model.objective_value(cand);
    }
    if (opt.check_residuals) {
      const ResidualReport rep = check_solution(model, cand, true);
      if (!rep.ok(opt.lp.feasibility_tol, opt.integrality_tol)) {
        throw NumericalError("incumbent fails residual check at '" + rep.worst + "'");
      }
    }
    if (value < incumbent) {
      incumbent = value;
      best = std::move(cand);
      return true;
    }
    return false;
  };

  if (!opt.start.empty()) {
    if (static_cast<int>(opt.start.size()) != model.num_vars()) {
      throw ContractViolation("start vector length does not match the model");
    }
    if (nb > 0) res.start_accepted = try_incumbent(opt.start, Basis{});
  }

  // Reliability branching: candidates with too few pseudocost observations
  // are strong-branched (both children solved), the rest are scored from
  // their pseudocosts. Product score, ties to the lowest binary index.
  Pseudocosts pseudo(nb);
  struct Branching {
    int binary = -1;
    double down_z = -kInf, up_z = -kInf;
  };
  auto choose_branch = [&](const std::vector<double>& x, const std::vector<int>& fractional, const Basis& basis,
                           double z) {
    auto frac_of = [&](int b) { return x[binaries[b]] - std::floor(x[binaries[b]]); };
    std::vector<int> unreliable;
    for (int b : fractional) {
      if (std::min(pseudo.count(b, false), pseudo.count(b, true)) < opt.reliability) unreliable.push_back(b);
    }
    std::stable_sort(unreliable.begin(), unreliable.end(), [&](int a, int b) {
      return std::abs(frac_of(a) - 0.5) < std::abs(frac_of(b) - 0.5);
    });
    if (static_cast<int>(unreliable.size()) > opt.strong_candidates) unreliable.resize(opt.strong_candidates);
    std::vector<char> strong(nb, 0);
    for (int b : unreliable) strong[b] = 1;

    Branching best;
    double best_score = -1.0;
    for (int b : fractional) {
      const double f = frac_of(b);
      Branching cand{b, -kInf, -kInf};
      double gain_down, gain_up;
      if (strong[b]) {
        double child[2];
        for (int dir = 0; dir < 2; ++dir) {
          engine.set_structural_bound(binaries[b], dir, dir);
          const auto out = engine.solve(&basis);
          child[dir] = out == SimplexEngine::Outcome::Optimal      ? sense * engine.objective()
                       : out == SimplexEngine::Outcome::Infeasible ? kInf
                                                                   : z;
          if (std::isfinite(child[dir])) {
            pseudo.record(b, dir == 1, std::max(0.0, child[dir] - z) / (dir == 1 ? 1.0 - f : f));
          }
        }
        const Variable& v = model.var(binaries[b]);
        engine.set_structural_bound(binaries[b], v.lower, v.upper);
        cand.down_z = child[0];
        cand.up_z = child[1];
        gain_down = child[0] - z;
        gain_up = child[1] - z;
      } else {
        gain_down = pseudo.value(b, false) * f;
        gain_up = pseudo.value(b, true) * (1.0 - f);
      }
      const double score = branch_score(gain_down, gain_up);
      if (score > best_score) {
        best_score = score;
        best = cand;
      }
    }
    return best;
  };

  double bucket = 0.0;  // set from the root bound
  auto push = [&](std::priority_queue<Node, std::vector<Node>, NodeOrder>& q, Node n) {
    n.key = bucket > 0.0 && std::isfinite(n.bound) ? std::floor(n.bound / bucket) : n.bound;
    q.push(std::move(n));
  };

  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  std::optional<Node> dive;
  dive = Node{next_id++, 0, -kInf, std::vector<signed char>(nb, -1), nullptr};
  bool plunge_armed = true;
  SolveStatus limit_status = SolveStatus::Optimal;
  bool unbounded = false;
  double proven = -kInf;
  double frontier = -kInf;

  while (true) {
    frontier = open.empty() ? kInf : open.top().bound;
    if (dive) frontier = std::min(frontier, dive->bound);
    if (!dive && open.empty()) break;
    proven = std::max(proven, std::min(frontier, incumbent));
    if (std::isfinite(incumbent) && frontier >= cutoff()) break;
    if (nodes >= opt.node_limit) {
      limit_status = SolveStatus::NodeLimit;
      break;
    }
    if (elapsed() >= opt.time_limit) {
      limit_status = SolveStatus::GapLimit;
      break;
    }

    Node node;
    if (dive) {
      node = std::move(*dive);
      dive.reset();
    } else {
      node = open.top();
      open.pop();
    }
    if (node.bound >= cutoff()) continue;

    apply_fixings(node.fix);
    const auto outcome = engine.solve(node.basis.get());
    ++nodes;
    if (outcome == SimplexEngine::Outcome::IterationLimit) {
      throw NumericalError("simplex iteration limit reached in branch-and-bound");
    }
    if (outcome == SimplexEngine::Outcome::Unbounded) {
      if (node.depth == 0) {
        unbounded = true;
        break;
      }
      throw NumericalError("unbounded relaxation below a bounded root");
    }
    bool improved = false;
    if (outcome == SimplexEngine::Outcome::Optimal && node.branched >= 0 && std::isfinite(node.parent_z)) {
      const double gain = std::max(0.0, sense * engine.objective() - node.parent_z);
      pseudo.record(node.branched, node.up, gain / (node.up ? 1.0 - node.frac : node.frac));
    }
    if (outcome == SimplexEngine::Outcome::Optimal) {
      const double z = std::max(node.bound, sense * engine.objective());
      if (node.depth == 0) bucket = 1e-9 * std::max(1.0, std::abs(z));
      if (z < cutoff()) {
        const std::vector<double> x = engine.structural_values();
        std::vector<int> fractional;
        for (int b = 0; b < nb; ++b) {
          const double v = x[binaries[b]];
          if (std::min(v - std::floor(v), std::ceil(v) - v) > opt.integrality_tol) fractional.push_back(b);
        }
        auto basis = std::make_shared<const Basis>(engine.basis());
        if (fractional.empty()) {
          improved = try_incumbent(x, *basis);
        } else {
          const Branching br = choose_branch(x, fractional, *basis, z);
          const int pick = br.binary;
          const double f = x[binaries[pick]] - std::floor(x[binaries[pick]]);
          Node down{next_id++, node.depth + 1, std::max(z, br.down_z), node.fix, basis, pick, false, f, z};
          down.fix[pick] = 0;
          Node up{next_id++, node.depth + 1, std::max(z, br.up_z), node.fix, basis, pick, true, f, z};
          up.fix[pick] = 1;
          const bool up_first = f >= 0.5;
          if (plunge_armed) {
            dive = up_first ? std::move(up) : std::move(down);
            push(open, up_first ? std::move(down) : std::move(up));
          } else {
            push(open, std::move(down));
            push(open, std::move(up));
          }
        }
      }
    }
    if (!dive) {
      // The dive ended; schedule another one only after an improvement.
      plunge_armed = !std::isfinite(incumbent) || improved;
    }
  }

  res.nodes = nodes;
  res.lp_iterations = engine.iterations();
  res.seconds = elapsed();
  if (unbounded) {
    res.status = SolveStatus::Unbounded;
    return res;
  }
  if (!std::isfinite(incumbent)) {
    res.status = limit_status == SolveStatus::Optimal ? SolveStatus::Infeasible : limit_status;
    res.bound = sense * proven;
    return res;
  }
  proven = std::min(std::max(proven, frontier), incumbent);
  res.status = limit_status;
  res.values = std::move(best);
  res.objective = sense * incumbent;
  res.bound = sense * proven;
  res.gap = std::abs(incumbent - proven) / std::max(1.0, std::abs(incumbent));
  return res;
}

}  // namespace cefopt::milp
