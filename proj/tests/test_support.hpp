#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "mecache/mecache.hpp"

namespace mecache::testing {

/// Small generated scenario. Noise is lowered from the field default so that
/// offloading and caching compete with local computing.
inline GenConfig small_config(std::uint64_t seed, int K, int L, int Np, int N,
                              double Dmax, double sigma2 = 1e-14) {
  GenConfig c;
  c.seed = seed;
  c.K = K;
  c.L = L;
  c.Np = Np;
  c.N = N;
  c.Dmax = Dmax;
  c.sigma2 = sigma2;
  return c;
}

inline Scenario small_scenario(std::uint64_t seed, int K, int L, int Np, int N,
                               double Dmax, double sigma2 = 1e-14) {
  return generate_scenario(small_config(seed, K, L, Np, N, Dmax, sigma2));
}

/// Hand-built scenario with flat channels and bandwidths.
inline Scenario flat_scenario(int K, int L, int Np, int N,
                              std::vector<std::vector<int>> arrivals,
                              std::vector<double> D, double Dmax,
                              double h2 = 1e-10) {
  Scenario s;
  auto& p = s.params;
  p.K = K;
  p.L = L;
  p.Np = Np;
  p.N = N;
  p.tau = 0.1;
  p.w0 = 0.1;
  p.w1 = 0.9;
  p.sigma2 = 1e-8;
  p.zeta0 = 1e-29;
  p.C0 = 1e3;
  p.zeta_k.assign(K, 1e-28);
  p.C_k.assign(K, 3e3);
  p.B_phase1.assign(Np, 2e6);
  p.B.assign(K, std::vector<double>(N, 2e6));
  s.library.D = std::move(D);
  s.library.Dmax = Dmax;
  s.channels.h2_phase1.assign(Np, h2);
  s.channels.h2.assign(K, std::vector<double>(N, h2));
  s.arrivals.s = std::move(arrivals);
  s.k_o = 0;
  return s;
}

inline CachePlacement placement_from_mask(int L, std::uint64_t mask) {
  CachePlacement p(L, CacheState::Zero);
  for (int l = 0; l < L; ++l)
    if (mask >> l & 1U) p.set(l, CacheState::One);
  return p;
}

struct Enumeration {
  double best = std::numeric_limits<double>::infinity();
  CachePlacement placement;
  std::vector<SolveReport> solves;  // one per capacity-feasible placement
};

/// Exhaustive search over all 2^L integral placements.
inline Enumeration enumerate(const Scenario& s,
                             Restriction restriction = Restriction::None) {
  Enumeration e;
  const int L = s.params.L;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << L); ++mask) {
    const auto p = placement_from_mask(L, mask);
    if (p.cached_bits(s.library.D) > s.library.Dmax) continue;
    auto r = solve_placement(s, p, restriction);
    if (r.ok() && r.objective < e.best) {
      e.best = r.objective;
      e.placement = p;
    }
    e.solves.push_back(std::move(r));
  }
  return e;
}

/// KKT residual recomputed from the instance data with its own derivative
/// formulas and the same normalization as the library.
inline double kkt_oracle(const ConvexInstance& inst, const KktPoint& pt) {
  const std::size_t n = inst.vars.size();
  const auto deriv = [](const VarCost& c, double x) {
    switch (c.shape) {
      case VarCost::Shape::Linear: return c.coef;
      case VarCost::Shape::Cubic: return 3.0 * c.coef * x * x;
      case VarCost::Shape::Exp:
        return c.coef * std::numbers::ln2 / c.rate * std::pow(2.0, x / c.rate);
      default: return 0.0;
    }
  };
  const auto comp = [](double m, double s) {
    return std::abs(m * s) / std::max(1.0, std::abs(m));
  };
  double worst = 0.0;
  std::vector<double> g(n), scale(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double d = deriv(inst.costs[j], std::max(pt.x[j], 0.0));
    scale[j] = std::max(1.0, std::abs(d));
    g[j] = d - pt.lower_duals[j] + pt.upper_duals[j];
    worst = std::max({worst, -pt.x[j], -pt.lower_duals[j], -pt.upper_duals[j],
                      comp(pt.lower_duals[j], pt.x[j])});
    if (std::isfinite(inst.upper[j]))
      worst = std::max({worst, pt.x[j] - inst.upper[j],
                        comp(pt.upper_duals[j], inst.upper[j] - pt.x[j])});
    else
      worst = std::max(worst, std::abs(pt.upper_duals[j]));
  }
  for (std::size_t r = 0; r < inst.rows.size(); ++r) {
    const auto& row = inst.rows[r];
    double act = 0.0;
    for (const auto& t : row.terms) {
      act += t.coef * pt.x[t.var];
      g[t.var] += pt.row_duals[r] * t.coef;
    }
    const double slack = row.rhs - act;
    if (row.sense == Sense::Equal) {
      worst = std::max(worst, std::abs(slack));
    } else {
      worst = std::max({worst, -slack, -pt.row_duals[r],
                        comp(pt.row_duals[r], slack)});
    }
  }
  for (std::size_t j = 0; j < n; ++j)
    worst = std::max(worst, std::abs(g[j]) / scale[j]);
  return worst;
}

struct GradientCheck {
  double local = 0.0;  // worst relative error per kernel
  double offload = 0.0;
  double mec = 0.0;
};

/// Compares every kernel gradient with central differences (step 1e-3 bits)
/// at `points` random points of `M` slots each. Differences of long sums lose
/// digits to cancellation, so the default is one slot per point.
inline GradientCheck gradient_check(int points, std::uint64_t seed, int M = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> bits(1.0, 1e4);
  std::uniform_real_distribution<double> log_gain(-13.0, -9.0);
  std::uniform_real_distribution<double> log_band(5.0, 7.0);
  std::uniform_real_distribution<double> tau_dist(0.05, 0.5);
  constexpr double h = 1e-3;
  GradientCheck out;
  const auto rel = [](double fd, double g) {
    return std::abs(fd - g) / std::max(std::abs(g), 1e-300);
  };
  for (int i = 0; i < points; ++i) {
    std::vector<double> d(M), h2(M), B(M);
    for (int j = 0; j < M; ++j) {
      d[j] = bits(rng);
      h2[j] = std::pow(10.0, log_gain(rng));
      B[j] = std::pow(10.0, log_band(rng));
    }
    const double tau = tau_dist(rng);
    const int j = static_cast<int>(rng() % M);
    auto plus = d, minus = d;
    plus[j] += h;
    minus[j] -= h;

    const auto gl = local_energy_gradient(d, 1e-28, 3e3, tau);
    out.local = std::max(out.local,
                         rel((local_energy(plus, 1e-28, 3e3, tau) -
                              local_energy(minus, 1e-28, 3e3, tau)) / (2 * h),
                             gl[j]));
    const auto gm = mec_energy_gradient(d, 1e-29, 1e3, tau);
    out.mec = std::max(out.mec, rel((mec_energy(plus, 1e-29, 1e3, tau) -
                                     mec_energy(minus, 1e-29, 1e3, tau)) /
                                        (2 * h),
                                    gm[j]));
    const auto go = offload_energy_gradient(d, h2, B, tau, 1e-8);
    out.offload = std::max(
        out.offload, rel((offload_energy(plus, h2, B, tau, 1e-8) -
                          offload_energy(minus, h2, B, tau, 1e-8)) / (2 * h),
                         go[j]));
  }
  return out;
}

/// Mean of |h|^2 over `samples` Phase-II draws of one WD at distance d.
inline double rician_mean_power(std::uint64_t seed, int samples, double d,
                                double x_r = 3.0,
                                double omega0 = 6.309573444801930e-4,
                                double alpha = 3.0) {
  GenConfig c;
  c.seed = seed;
  c.K = 1;
  c.Np = 1;
  c.N = samples;
  c.rician_factor = x_r;
  c.omega0 = omega0;
  c.pathloss_exp = alpha;
  const auto ch = gen_channels(c, std::vector<double>{d});
  double sum = 0.0;
  for (double x : ch.h2[0]) sum += x;
  return sum / samples;
}

struct ChiSquare {
  double statistic = 0.0;
  double critical = 0.0;  // upper quantile at the requested significance
  bool pass() const { return statistic <= critical; }
};

/// Pearson test of generated arrivals against r^-shape / sum_j j^-shape,
/// with the probabilities computed here rather than by the generator.
inline ChiSquare zipf_chi_square(std::uint64_t seed, int L, double shape,
                                 int samples, double significance) {
  GenConfig c;
  c.seed = seed;
  c.K = 1;
  c.L = L;
  c.N = samples;
  c.zipf_shape = shape;
  const auto arr = gen_arrivals(c);
  std::vector<double> count(L, 0.0), p(L);
  for (int t : arr.s[0]) count.at(t) += 1.0;
  double norm = 0.0;
  for (int r = 1; r <= L; ++r) norm += 1.0 / std::pow(r, shape);
  ChiSquare out;
  for (int l = 0; l < L; ++l) {
    const double expect = samples / std::pow(l + 1.0, shape) / norm;
    out.statistic += (count[l] - expect) * (count[l] - expect) / expect;
  }
  const boost::math::chi_squared dist(L - 1);
  out.critical = boost::math::quantile(complement(dist, significance));
  return out;
}

}  // namespace mecache::testing
