#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mecache/bnb.hpp"
#include "mecache/model.hpp"
#include "mecache/report.hpp"
#include "mecache/scenario.hpp"
#include "mecache/subproblem.hpp"

namespace mecache {

enum class SchemeId { Bnb, Popularity, Relaxation, NoCaching, FullOffloading, FullLocal };

inline constexpr SchemeId kAllSchemes[] = {
    SchemeId::Bnb,       SchemeId::Popularity,     SchemeId::Relaxation,
    SchemeId::NoCaching, SchemeId::FullOffloading, SchemeId::FullLocal};

inline const char* to_string(SchemeId id) {
  switch (id) {
    case SchemeId::Bnb: return "bnb";
    case SchemeId::Popularity: return "popularity";
    case SchemeId::Relaxation: return "relaxation";
    case SchemeId::NoCaching: return "no_caching";
    case SchemeId::FullOffloading: return "full_offloading";
    case SchemeId::FullLocal: return "full_local";
  }
  return "?";
}

inline std::optional<SchemeId> parse_scheme(std::string_view name) {
  for (SchemeId id : kAllSchemes)
    if (name == to_string(id)) return id;
  return std::nullopt;
}

/// Whether the scheme searches over caching decisions with branch and bound.
inline bool uses_bnb(SchemeId id) {
  return id == SchemeId::Bnb || id == SchemeId::FullOffloading ||
         id == SchemeId::FullLocal;
}

struct SchemeOptions {
  BnbConfig bnb;  // also supplies the convex solver options
  /// Break ties among equally popular, equally sized tasks at random instead
  /// of by lowest index.
  bool random_tie_break = false;
  std::uint64_t tie_seed = 0;
};

// ---------------------------------------------------------------------------
// Task popularity
// ---------------------------------------------------------------------------

/// Occurrences of each task across all WDs and slots.
inline std::vector<long> popularity_scores(const ArrivalSequences& arr, int L) {
  std::vector<long> t(L, 0);
  for (const auto& row : arr.s)
    for (int l : row) {
      if (l < 0 || l >= L)
        throw std::out_of_range("popularity_scores: task index out of range");
      ++t[l];
    }
  return t;
}

/// Tasks by descending score, then descending size, then ascending index.
/// With `tie_rng`, runs of fully tied tasks are shuffled instead.
inline std::vector<int> popularity_order(const std::vector<long>& score,
                                         const std::vector<double>& D,
                                         Substream* tie_rng = nullptr) {
  std::vector<int> pi(score.size());
  std::iota(pi.begin(), pi.end(), 0);
  const auto tied = [&](int a, int b) {
    return score[a] == score[b] && D[a] == D[b];
  };
  std::stable_sort(pi.begin(), pi.end(), [&](int a, int b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return D[a] > D[b];
  });
  if (tie_rng) {
    for (std::size_t lo = 0; lo < pi.size();) {
      std::size_t hi = lo + 1;
      while (hi < pi.size() && tied(pi[lo], pi[hi])) ++hi;
      for (std::size_t i = hi - 1; i > lo; --i) {
        const auto j = lo + static_cast<std::size_t>(tie_rng->uniform() *
                                                      static_cast<double>(i - lo + 1));
        std::swap(pi[i], pi[std::min(j, i)]);
      }
      lo = hi;
    }
  }
  return pi;
}

/// Longest prefix of `order` whose sizes fit in Dmax.
inline int popularity_prefix(const std::vector<int>& order,
                             const std::vector<double>& D, double Dmax) {
  double used = 0.0;
  int M = 0;
  for (int l : order) {
    if (used + D[l] > Dmax) break;
    used += D[l];
    ++M;
  }
  return M;
}

inline CachePlacement popularity_placement(const Scenario& s,
                                           const SchemeOptions& opt = {}) {
  const int L = s.params.L;
  const auto score = popularity_scores(s.arrivals, L);
  std::optional<Substream> rng;
  if (opt.random_tie_break)
    rng.emplace(opt.tie_seed, StreamPurpose::TieBreak, 0, 0);
  const auto order = popularity_order(score, s.library.D, rng ? &*rng : nullptr);
  const int M = popularity_prefix(order, s.library.D, s.library.Dmax);
  CachePlacement p(L, CacheState::Zero);
  for (int m = 0; m < M; ++m) p.set(order[m], CacheState::One);
  return p;
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t)
      .count();
}

}  // namespace detail

inline SolveReport popularity_caching(const Scenario& s,
                                      const SchemeOptions& opt = {}) {
  const auto start = std::chrono::steady_clock::now();
  auto r = solve_placement(s, popularity_placement(s, opt), Restriction::None,
                           opt.bnb.solver);
  r.runtime = detail::seconds_since(start);
  return r;
}

// ---------------------------------------------------------------------------
// Convex relaxation with 0.5 threshold
// ---------------------------------------------------------------------------

inline SolveReport relaxation_rounding(const Scenario& s,
                                       const SchemeOptions& opt = {}) {
  const auto start = std::chrono::steady_clock::now();
  const CachePlacement free(s.params.L);
  const auto inst = assemble(s, free);
  const auto relaxed = solve(inst, opt.bnb.solver);
  if (!relaxed.optimal()) {
    auto r = make_report(s, inst, relaxed);
    r.message = "relaxed problem: " + std::string(to_string(relaxed.status));
    r.runtime = detail::seconds_since(start);
    return r;
  }
  const auto rounded = round_and_repair(free, relaxed.alphas(inst), s.library.D,
                                        s.library.Dmax);
  auto r = solve_placement(s, rounded.placement, Restriction::None,
                           opt.bnb.solver);
  r.repaired = rounded.repaired;
  r.node_count = 2;
  r.runtime = detail::seconds_since(start);
  return r;
}

// ---------------------------------------------------------------------------
// Benchmarks
// ---------------------------------------------------------------------------

/// Tasks that first reach some WD in the last slot. Without local computing
/// they can only be served from the cache.
inline std::vector<int> last_slot_tasks(const Scenario& s) {
  const auto first = first_arrivals(s);
  std::vector<int> out;
  for (int l = 0; l < s.params.L; ++l)
    for (int k = 0; k < s.params.K; ++k)
      if (first[k][l] == s.params.N - 1) {
        out.push_back(l);
        break;
      }
  return out;
}

inline SolveReport run_benchmark(const Scenario& s, SchemeId id,
                                 const SchemeOptions& opt = {}) {
  const auto start = std::chrono::steady_clock::now();
  const int L = s.params.L;
  SolveReport r;
  switch (id) {
    case SchemeId::NoCaching:
      r = solve_placement(s, CachePlacement(L, CacheState::Zero),
                          Restriction::None, opt.bnb.solver);
      break;
    case SchemeId::FullOffloading: {
      auto cfg = opt.bnb;
      cfg.restriction = Restriction::NoLocal;
      cfg.root = CachePlacement(L);
      for (int l : last_slot_tasks(s)) cfg.root.set(l, CacheState::One);
      if (cfg.root.cached_bits(s.library.D) > s.library.Dmax) {
        r.status = SolveStatus::Infeasible;
        r.placement = cfg.root;
        r.schedule = Schedule::zeros(s.params);
        r.message = "tasks first arriving in the last slot exceed the cache";
        break;
      }
      r = solve_bnb(s, cfg);
      break;
    }
    case SchemeId::FullLocal: {
      auto cfg = opt.bnb;
      cfg.restriction = Restriction::NoOffload;
      r = solve_bnb(s, cfg);
      break;
    }
    default:
      throw std::invalid_argument(std::string("run_benchmark: '") +
                                  to_string(id) + "' is not a benchmark");
  }
  r.runtime = detail::seconds_since(start);
  return r;
}

inline SolveReport run_scheme(const Scenario& s, SchemeId id,
                              const SchemeOptions& opt = {}) {
  switch (id) {
    case SchemeId::Bnb: return solve_bnb(s, opt.bnb);
    case SchemeId::Popularity: return popularity_caching(s, opt);
    case SchemeId::Relaxation: return relaxation_rounding(s, opt);
    default: return run_benchmark(s, id, opt);
  }
}

}  // namespace mecache
