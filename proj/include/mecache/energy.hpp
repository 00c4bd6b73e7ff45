#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mecache/model.hpp"

namespace mecache {

/// Per-slot CPU energy coef * d^3, where coef = zeta * C^3 / tau^2.
struct CubicCost {
  double coef = 0.0;

  double value(double d) const { return coef * d * d * d; }
  double derivative(double d) const { return 3.0 * coef * d * d; }
  double second_derivative(double d) const { return 6.0 * coef * d; }
  /// value(d + step) - value(d) without cancellation.
  double increment(double d, double step) const {
    const double e = d + step;
    return coef * step * (e * e + e * d + d * d);
  }
};

/// Per-slot transmit energy amplitude * (2^(d / rate) - 1), where
/// amplitude = tau * sigma2 / |h|^2 and rate = tau * B.
struct ExpCost {
  double amplitude = 0.0;
  double rate = 1.0;

  double value(double d) const {
    return amplitude * std::expm1(std::numbers::ln2 * d / rate);
  }
  double derivative(double d) const {
    return amplitude * std::numbers::ln2 / rate * std::exp2(d / rate);
  }
  double second_derivative(double d) const {
    const double k = std::numbers::ln2 / rate;
    return amplitude * k * k * std::exp2(d / rate);
  }
  double increment(double d, double step) const {
    return amplitude * std::exp2(d / rate) *
           std::expm1(std::numbers::ln2 * step / rate);
  }
};

inline CubicCost cpu_cost(double zeta, double C, double tau) {
  return {zeta * C * C * C / (tau * tau)};
}

inline ExpCost transmit_cost(double h2, double B, double tau, double sigma2) {
  if (!(h2 > 0.0) || !(B > 0.0))
    throw std::invalid_argument("transmit_cost: gain and bandwidth must be > 0");
  return {tau * sigma2 / h2, tau * B};
}

namespace detail {

inline void require_nonnegative(std::span<const double> d, const char* who) {
  for (double x : d)
    if (!(x >= 0.0))
      throw std::invalid_argument(std::string(who) + ": negative bit count");
}

}  // namespace detail

/// Local computing energy of one WD over its slots.
inline double local_energy(std::span<const double> d, double zeta, double C,
                           double tau) {
  detail::require_nonnegative(d, "local_energy");
  const auto cost = cpu_cost(zeta, C, tau);
  double e = 0.0;
  for (double x : d) e += cost.value(x);
  return e;
}

inline std::vector<double> local_energy_gradient(std::span<const double> d,
                                                 double zeta, double C,
                                                 double tau) {
  detail::require_nonnegative(d, "local_energy_gradient");
  const auto cost = cpu_cost(zeta, C, tau);
  std::vector<double> g;
  g.reserve(d.size());
  for (double x : d) g.push_back(cost.derivative(x));
  return g;
}

/// Offloading energy; the same form serves Phase I (selected WD) and Phase II.
inline double offload_energy(std::span<const double> d,
                             std::span<const double> h2,
                             std::span<const double> B, double tau,
                             double sigma2) {
  if (h2.size() != d.size() || B.size() != d.size())
    throw std::invalid_argument("offload_energy: length mismatch");
  detail::require_nonnegative(d, "offload_energy");
  double e = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i)
    e += transmit_cost(h2[i], B[i], tau, sigma2).value(d[i]);
  return e;
}

inline std::vector<double> offload_energy_gradient(std::span<const double> d,
                                                   std::span<const double> h2,
                                                   std::span<const double> B,
                                                   double tau, double sigma2) {
  if (h2.size() != d.size() || B.size() != d.size())
    throw std::invalid_argument("offload_energy_gradient: length mismatch");
  detail::require_nonnegative(d, "offload_energy_gradient");
  std::vector<double> g;
  g.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    g.push_back(transmit_cost(h2[i], B[i], tau, sigma2).derivative(d[i]));
  return g;
}

/// MEC execution energy (either phase).
inline double mec_energy(std::span<const double> d, double zeta0, double C0,
                         double tau) {
  detail::require_nonnegative(d, "mec_energy");
  const auto cost = cpu_cost(zeta0, C0, tau);
  double e = 0.0;
  for (double x : d) e += cost.value(x);
  return e;
}

inline std::vector<double> mec_energy_gradient(std::span<const double> d,
                                               double zeta0, double C0,
                                               double tau) {
  return local_energy_gradient(d, zeta0, C0, tau);
}

/// CPU frequency implied by executing d bits within one slot: C0 * d / tau.
inline std::vector<double> mec_cpu_rates(std::span<const double> d, double C0,
                                         double tau) {
  std::vector<double> f;
  f.reserve(d.size());
  for (double x : d) f.push_back(C0 * x / tau);
  return f;
}

struct EnergyBreakdown {
  double e_mec_p1 = 0.0;
  double e_off_p1 = 0.0;
  double e_mec_p2 = 0.0;
  std::vector<double> e_loc;  // [K]
  std::vector<double> e_off;  // [K]

  double e_loc_total() const {
    double t = 0.0;
    for (double e : e_loc) t += e;
    return t;
  }
  double e_off_total() const {
    double t = 0.0;
    for (double e : e_off) t += e;
    return t;
  }
  /// Energy attributable to the caching phase / the arrival phase.
  double phase1() const { return e_mec_p1 + e_off_p1; }
  double phase2() const { return e_mec_p2 + e_loc_total() + e_off_total(); }

  double weighted(double w0, double w1) const {
    return w0 * (e_mec_p1 + e_mec_p2) +
           w1 * (e_off_p1 + e_loc_total() + e_off_total());
  }
};

/// Weighted-sum energy of a schedule and its per-term breakdown.
inline std::pair<double, EnergyBreakdown> objective(const Scenario& s,
                                                    const Schedule& sched) {
  const auto& p = s.params;
  const auto bad = [](std::size_t got, int want) {
    return got != static_cast<std::size_t>(want);
  };
  if (bad(sched.d_off_p1.size(), p.Np) || bad(sched.d_mec_p1.size(), p.Np) ||
      bad(sched.d_loc.size(), p.K) || bad(sched.d_off.size(), p.K) ||
      bad(sched.d_mec.size(), p.N))
    throw std::invalid_argument("objective: schedule dimension mismatch");
  for (int k = 0; k < p.K; ++k)
    if (bad(sched.d_loc[k].size(), p.N) || bad(sched.d_off[k].size(), p.N))
      throw std::invalid_argument("objective: schedule dimension mismatch");

  EnergyBreakdown b;
  b.e_mec_p1 = mec_energy(sched.d_mec_p1, p.zeta0, p.C0, p.tau);
  b.e_off_p1 = offload_energy(sched.d_off_p1, s.channels.h2_phase1, p.B_phase1,
                              p.tau, p.sigma2);
  b.e_mec_p2 = mec_energy(sched.d_mec, p.zeta0, p.C0, p.tau);
  b.e_loc.resize(p.K);
  b.e_off.resize(p.K);
  for (int k = 0; k < p.K; ++k) {
    b.e_loc[k] = local_energy(sched.d_loc[k], p.zeta_k[k], p.C_k[k], p.tau);
    b.e_off[k] = offload_energy(sched.d_off[k], s.channels.h2[k], p.B[k], p.tau,
                                p.sigma2);
  }
  return {b.weighted(p.w0, p.w1), b};
}

}  // namespace mecache
