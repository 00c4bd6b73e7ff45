#pragma once

#include <chrono>
#include <limits>
#include <string>

#include "mecache/energy.hpp"
#include "mecache/model.hpp"
#include "mecache/subproblem.hpp"

namespace mecache {

/// Outcome of any scheme: an integral placement, its schedule and energy.
struct SolveReport {
  SolveStatus status = SolveStatus::MaxIter;
  double objective = std::numeric_limits<double>::infinity();  // Joules
  EnergyBreakdown breakdown;
  CachePlacement placement;
  Schedule schedule;
  double kkt_residual = std::numeric_limits<double>::infinity();
  double bnb_gap = 0.0;  // Joules
  long node_count = 0;
  double runtime = 0.0;  // seconds
  bool repaired = false;  // placement needed capacity repair
  std::string message;

  bool ok() const { return status == SolveStatus::Optimal; }
};

/// Report for a solved instance. The objective is recomputed from the
/// schedule so that it always matches the breakdown.
inline SolveReport make_report(const Scenario& s, const ConvexInstance& inst,
                               const ConvexSolution& sol) {
  SolveReport r;
  r.status = sol.status;
  r.placement = inst.placement;
  r.kkt_residual = sol.kkt_residual;
  r.message = sol.message;
  if (sol.status == SolveStatus::Infeasible) {
    r.schedule = Schedule::zeros(s.params);
    return r;
  }
  r.schedule = to_schedule(inst, sol.point);
  auto [obj, breakdown] = objective(s, r.schedule);
  r.objective = obj;
  r.breakdown = std::move(breakdown);
  return r;
}

/// Solves P(L0, L1) for an integral placement.
inline SolveReport solve_placement(const Scenario& s,
                                   const CachePlacement& placement,
                                   Restriction restriction = Restriction::None,
                                   const SolverOptions& opt = {}) {
  const auto start = std::chrono::steady_clock::now();
  const auto inst = assemble(s, placement, restriction);
  auto r = make_report(s, inst, solve(inst, opt));
  r.node_count = 1;
  r.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                            start)
                  .count();
  return r;
}

}  // namespace mecache
