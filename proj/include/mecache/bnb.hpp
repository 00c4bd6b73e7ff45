#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mecache/model.hpp"
#include "mecache/report.hpp"
#include "mecache/subproblem.hpp"

namespace mecache {

enum class BranchRule { MostFractional, LowestIndex };
enum class NodeOrder { BestFirst, DepthFirst };

struct BnbConfig {
  double epsilon = 1e-9;  // absolute gap, Joules
  long max_nodes = 100000;
  BranchRule branch_rule = BranchRule::MostFractional;
  NodeOrder node_order = NodeOrder::BestFirst;
  Restriction restriction = Restriction::None;
  SolverOptions solver;
  /// Relaxations that stop short of solver.tol but reach this KKT residual
  /// still serve as bounds.
  double bound_kkt_tol = 1e-6;
  /// Starting placement; empty means every task free.
  CachePlacement root;
  /// Progress lines, one per node decision.
  std::ostream* log = nullptr;
};

struct BnbNode {
  long id = 0;
  CachePlacement placement;
  double lower_bound = -std::numeric_limits<double>::infinity();  // Joules
  std::vector<double> alpha;  // relaxed caching values, fixed ones as 0/1
  int depth = 0;
  bool infeasible = false;
  bool bound_certified = true;  // false if the relaxation hit MaxIter
};

/// Integral placement obtained by rounding the free entries of `node` at 0.5
/// and evicting rounded-up free tasks in ascending alpha order until the
/// capacity holds.
struct Rounding {
  CachePlacement placement;
  bool repaired = false;
};

inline Rounding round_and_repair(const CachePlacement& base,
                                 const std::vector<double>& alpha,
                                 const std::vector<double>& D, double Dmax) {
  Rounding out{base, false};
  std::vector<int> up;
  for (std::size_t l = 0; l < base.size(); ++l) {
    if (base[l] != CacheState::Free) continue;
    const bool one = alpha.at(l) > 0.5;
    out.placement.set(l, one ? CacheState::One : CacheState::Zero);
    if (one) up.push_back(static_cast<int>(l));
  }
  std::stable_sort(up.begin(), up.end(),
                   [&](int a, int b) { return alpha[a] < alpha[b]; });
  double used = out.placement.cached_bits(D);
  for (int l : up) {
    if (used <= Dmax) break;
    out.placement.set(l, CacheState::Zero);
    used -= D[l];
    out.repaired = true;
  }
  return out;
}

/// Free task to branch on, or -1 if the node has none.
inline int branch_index(const BnbNode& node, BranchRule rule) {
  int best = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < node.placement.size(); ++l) {
    if (node.placement[l] != CacheState::Free) continue;
    if (rule == BranchRule::LowestIndex) return static_cast<int>(l);
    const double dist = std::abs(node.alpha.at(l) - 0.5);
    if (dist < best_dist) {
      best_dist = dist;
      best = static_cast<int>(l);
    }
  }
  return best;
}

/// Children with the branching task fixed to 0 and to 1. Bounds are left to
/// the caller.
inline std::pair<BnbNode, BnbNode> branch(const BnbNode& node,
                                          BranchRule rule = BranchRule::MostFractional) {
  const int l = branch_index(node, rule);
  if (l < 0) throw std::invalid_argument("branch: node has no free task");
  std::pair<BnbNode, BnbNode> kids{node, node};
  kids.first.placement.set(l, CacheState::Zero);
  kids.second.placement.set(l, CacheState::One);
  kids.first.alpha[l] = 0.0;
  kids.second.alpha[l] = 1.0;
  kids.first.depth = kids.second.depth = node.depth + 1;
  return kids;
}

/// Relaxed solve of a node: fills lower_bound and alpha. A child never
/// reports a bound below its parent's.
inline void relax(BnbNode& node, const Scenario& s, const BnbConfig& cfg,
                  double parent_lower = -std::numeric_limits<double>::infinity()) {
  const auto inst = assemble(s, node.placement, cfg.restriction);
  const auto sol = solve(inst, cfg.solver);
  node.depth = node.placement.depth();
  node.infeasible = sol.status == SolveStatus::Infeasible;
  node.bound_certified =
      sol.optimal() || (sol.status == SolveStatus::MaxIter &&
                        sol.kkt_residual <= cfg.bound_kkt_tol);
  if (node.infeasible) {
    node.lower_bound = std::numeric_limits<double>::infinity();
    return;
  }
  node.alpha = sol.alphas(inst);
  node.lower_bound = node.bound_certified ? std::max(sol.objective, parent_lower)
                                          : parent_lower;
}

inline bool integral(const BnbNode& node, double tol = 1e-6) {
  for (std::size_t l = 0; l < node.placement.size(); ++l)
    if (node.placement[l] == CacheState::Free &&
        std::min(node.alpha[l], 1.0 - node.alpha[l]) > tol)
      return false;
  return true;
}

struct BnbTraceEntry {
  long node = 0;
  int depth = 0;
  double lower = 0.0;
  double global_lower = 0.0;
  double global_upper = 0.0;
  enum class Action { Branch, Prune, Fathom } action = Action::Branch;
};

inline const char* to_string(BnbTraceEntry::Action a) {
  switch (a) {
    case BnbTraceEntry::Action::Branch: return "branch";
    case BnbTraceEntry::Action::Prune: return "prune";
    case BnbTraceEntry::Action::Fathom: return "fathom";
  }
  return "?";
}

struct BnbResult {
  SolveReport report;
  double root_lower = 0.0;  // relaxed optimum at the root, Joules
  double global_lower = 0.0;
  double global_upper = std::numeric_limits<double>::infinity();
  bool node_limit_hit = false;
  long fixed_solves = 0;  // distinct integral placements solved
  std::vector<BnbTraceEntry> trace;
};

namespace detail {

/// Integral solves keyed by placement bitmap.
class IncumbentCache {
 public:
  IncumbentCache(const Scenario& s, const BnbConfig& cfg) : s_(s), cfg_(cfg) {}

  const SolveReport& get(const CachePlacement& p) {
    const auto key = p.bitmap();
    auto it = memo_.find(key);
    if (it == memo_.end())
      it = memo_.emplace(key, solve_placement(s_, p, cfg_.restriction, cfg_.solver))
               .first;
    return it->second;
  }
  long size() const { return static_cast<long>(memo_.size()); }

 private:
  const Scenario& s_;
  const BnbConfig& cfg_;
  std::map<std::string, SolveReport> memo_;
};

}  // namespace detail

/// Lower bound, repaired-rounding upper bound and the matching integral
/// solution for one node. The node must already be relaxed.
struct NodeBounds {
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();
  SolveReport incumbent;
};

inline NodeBounds bound(const BnbNode& node, const Scenario& s,
                        const BnbConfig& cfg = {}) {
  NodeBounds b;
  b.lower = node.lower_bound;
  const auto r = round_and_repair(node.placement, node.alpha, s.library.D,
                                  s.library.Dmax);
  b.incumbent = solve_placement(s, r.placement, cfg.restriction, cfg.solver);
  b.incumbent.repaired = r.repaired;
  if (b.incumbent.ok()) b.upper = b.incumbent.objective;
  return b;
}

/// Epsilon-optimal caching by branch and bound over the free tasks.
inline BnbResult solve_bnb_detailed(const Scenario& s, const BnbConfig& cfg = {}) {
  if (!(cfg.epsilon > 0.0))
    throw std::invalid_argument("solve_bnb: epsilon must be > 0");
  const auto start = std::chrono::steady_clock::now();
  const int L = s.params.L;

  BnbResult res;
  detail::IncumbentCache cache(s, cfg);
  long next_id = 0;
  long bounded = 0;

  const auto log = [&](const BnbNode& n, BnbTraceEntry::Action a, double glb) {
    BnbTraceEntry e{n.id, n.depth, n.lower_bound, glb, res.global_upper, a};
    res.trace.push_back(e);
    if (cfg.log) {
      char buf[256];
      std::snprintf(buf, sizeof buf,
                    "bnb node=%ld depth=%d lower=%.17g global_lower=%.17g "
                    "global_upper=%.17g action=%s\n",
                    e.node, e.depth, e.lower, e.global_lower, e.global_upper,
                    to_string(a));
      *cfg.log << buf;
    }
  };

  std::vector<std::string> notes;
  long uncertified = 0;
  const auto finish = [&](SolveReport rep) {
    rep.node_count = bounded;
    rep.bnb_gap = std::max(0.0, res.global_upper - res.global_lower);
    rep.runtime = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start)
                      .count();
    for (const auto& n : notes) {
      if (!rep.message.empty()) rep.message += "; ";
      rep.message += n;
    }
    res.fixed_solves = cache.size();
    res.report = std::move(rep);
    return res;
  };

  BnbNode root;
  root.id = next_id++;
  root.placement = cfg.root.size() == 0 ? CachePlacement(L) : cfg.root;
  if (root.placement.size() != static_cast<std::size_t>(L))
    throw std::invalid_argument("solve_bnb: root placement size mismatch");
  relax(root, s, cfg);
  ++bounded;
  if (root.infeasible) {
    SolveReport rep;
    rep.status = SolveStatus::Infeasible;
    rep.placement = root.placement;
    rep.schedule = Schedule::zeros(s.params);
    rep.message = "root relaxation infeasible";
    res.global_lower = res.global_upper = std::numeric_limits<double>::infinity();
    res.root_lower = res.global_lower;
    return finish(std::move(rep));
  }
  if (!root.bound_certified) notes.push_back("root relaxation not certified");
  res.root_lower = root.lower_bound;

  SolveReport incumbent;
  incumbent.status = SolveStatus::Infeasible;
  const auto offer = [&](const CachePlacement& p, bool repaired) {
    const auto& r = cache.get(p);
    if (r.ok() && r.objective < res.global_upper) {
      res.global_upper = r.objective;
      incumbent = r;
      incumbent.repaired = repaired;
    }
  };

  // Live nodes ordered by (lower bound, id) or LIFO.
  const auto worse = [](const BnbNode& a, const BnbNode& b) {
    if (a.lower_bound != b.lower_bound) return a.lower_bound > b.lower_bound;
    return a.id > b.id;
  };
  std::priority_queue<BnbNode, std::vector<BnbNode>, decltype(worse)> heap(worse);
  std::vector<BnbNode> stack;
  std::multiset<double> live_lowers;
  const auto push = [&](BnbNode n) {
    live_lowers.insert(n.lower_bound);
    if (cfg.node_order == NodeOrder::BestFirst)
      heap.push(std::move(n));
    else
      stack.push_back(std::move(n));
  };
  const auto pop = [&] {
    BnbNode n;
    if (cfg.node_order == NodeOrder::BestFirst) {
      n = heap.top();
      heap.pop();
    } else {
      n = std::move(stack.back());
      stack.pop_back();
    }
    live_lowers.erase(live_lowers.find(n.lower_bound));
    return n;
  };
  // Smallest lower bound among nodes closed without a usable incumbent
  // comparison; integral leaves certify their own placement.
  double closed_lower = std::numeric_limits<double>::infinity();
  const auto global_lower = [&](double current) {
    double g = std::min(current, closed_lower);
    if (!live_lowers.empty()) g = std::min(g, *live_lowers.begin());
    return std::min(g, res.global_upper);
  };

  push(root);
  while (!live_lowers.empty()) {
    BnbNode node = pop();
    res.global_lower = global_lower(node.lower_bound);
    if (res.global_upper - res.global_lower <= cfg.epsilon) {
      live_lowers.insert(node.lower_bound);
      break;
    }
    if (node.lower_bound >= res.global_upper) {
      log(node, BnbTraceEntry::Action::Prune, res.global_lower);
      continue;
    }
    const auto r = round_and_repair(node.placement, node.alpha, s.library.D,
                                    s.library.Dmax);
    offer(r.placement, r.repaired);

    if (!node.placement.has_free() || (node.bound_certified && integral(node))) {
      if (node.lower_bound < res.global_upper)
        closed_lower = std::min(closed_lower, node.lower_bound);
      res.global_lower = global_lower(res.global_upper);
      log(node, BnbTraceEntry::Action::Fathom, res.global_lower);
      continue;
    }
    if (bounded >= cfg.max_nodes) {
      live_lowers.insert(node.lower_bound);
      res.node_limit_hit = true;
      break;
    }
    log(node, BnbTraceEntry::Action::Branch, res.global_lower);
    auto [zero, one] = branch(node, cfg.branch_rule);
    for (BnbNode* child : {&zero, &one}) {
      child->id = next_id++;
      if (child->placement.cached_bits(s.library.D) > s.library.Dmax) continue;
      relax(*child, s, cfg, node.lower_bound);
      ++bounded;
      if (child->infeasible) continue;
      if (!child->bound_certified) ++uncertified;
      if (child->lower_bound >= res.global_upper) {
        log(*child, BnbTraceEntry::Action::Prune, global_lower(res.global_upper));
        continue;
      }
      push(std::move(*child));
    }
  }
  res.global_lower = global_lower(res.global_upper);
  if (uncertified > 0)
    notes.push_back(std::to_string(uncertified) +
                    " node relaxations not certified");
  if (res.node_limit_hit) notes.push_back("node limit reached");

  if (incumbent.status == SolveStatus::Infeasible) {
    incumbent.placement = root.placement;
    incumbent.schedule = Schedule::zeros(s.params);
    incumbent.message = "no feasible integral placement found";
    return finish(std::move(incumbent));
  }
  return finish(std::move(incumbent));
}

inline SolveReport solve_bnb(const Scenario& s, const BnbConfig& cfg = {}) {
  return solve_bnb_detailed(s, cfg).report;
}

}  // namespace mecache
