#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "mecache/model.hpp"

namespace mecache {

/// Generation settings: the simulation model plus every SystemParams field.
/// Sizes and capacity are in bits, bandwidths in Hz.
struct GenConfig {
  std::uint64_t seed = 0;

  int K = 20;
  int L = 40;
  int Np = 5;
  int N = 30;
  double tau = 0.1;
  double w0 = 0.1;
  double w1 = 0.9;
  double sigma2 = 1e-8;
  double zeta0 = 1e-29;
  double C0 = 1e3;
  double zeta_k = 1e-28;
  double C_k = 3e3;
  double bandwidth = 2e6;
  double bandwidth_phase1 = 2e6;

  double rician_factor = 3.0;
  double omega0 = 6.309573444801930e-4;  // -32 dB
  double pathloss_exp = 3.0;
  double zipf_shape = 0.5;
  double size_min = 1e3;
  double size_max = 5e3;
  double Dmax = 40e3;
  double dist_min = 500.0;
  double dist_max = 1000.0;

  bool operator==(const GenConfig&) const = default;
};

inline ValidationResult validate_config(const GenConfig& c) {
  ValidationResult r;
  if (c.K < 1) r.violations.push_back({"K", "K >= 1"});
  if (c.L < 1) r.violations.push_back({"L", "L >= 1"});
  if (c.Np < 1) r.violations.push_back({"N_p", "N_p >= 1"});
  if (c.Np >= c.N) r.violations.push_back({"N_p", "N_p < N"});
  if (!(c.rician_factor >= 0.0))
    r.violations.push_back({"rician_factor", "X_R >= 0"});
  if (!(c.omega0 > 0.0)) r.violations.push_back({"omega0", "omega0 > 0"});
  if (!(c.zipf_shape >= 0.0))
    r.violations.push_back({"zipf_shape", "zipf_shape >= 0"});
  if (!(c.size_min > 0.0 && c.size_min <= c.size_max))
    r.violations.push_back({"size_range", "0 < min <= max"});
  if (!(c.dist_min > 0.0 && c.dist_min <= c.dist_max))
    r.violations.push_back({"distance_range", "0 < min <= max"});
  if (!(c.Dmax >= 0.0)) r.violations.push_back({"Dmax", "Dmax >= 0"});
  return r;
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

/// What a random stream is used for; part of the substream key.
enum class StreamPurpose : std::uint64_t {
  Library = 1,
  Arrival = 2,
  ChannelPhase1 = 3,
  ChannelPhase2 = 4,
  TieBreak = 5,
};

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Independent generator for one (seed, purpose, a, b) cell. The key is
/// folded through splitmix64 so that neighbouring cells are uncorrelated and
/// a cell's draws never depend on how many other cells exist.
///
/// Uniforms use the top 53 bits of std::mt19937_64 and normals use
/// Box-Muller, so streams are identical across standard libraries.
class Substream {
 public:
  Substream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t a,
            std::uint64_t b) {
    std::uint64_t h = detail::splitmix64(seed);
    h = detail::splitmix64(h ^ static_cast<std::uint64_t>(purpose));
    h = detail::splitmix64(h ^ a);
    h = detail::splitmix64(h ^ (b + 0x632be59bd9b4e019ULL));
    engine_.seed(h);
  }

  /// Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double standard_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// d_k = dist_min + (dist_max - dist_min) k / (K - 1); a single WD sits at
/// dist_min.
inline std::vector<double> wd_distances(const GenConfig& c) {
  std::vector<double> d(c.K);
  for (int k = 0; k < c.K; ++k)
    d[k] = c.K == 1 ? c.dist_min
                    : c.dist_min + (c.dist_max - c.dist_min) * k / (c.K - 1);
  return d;
}

/// One Rician draw h = sqrt(X Omega d^-a / (1+X)) + sqrt(Omega d^-a / (1+X)) g
/// with g ~ CN(0,1); returned as (Re h, Im h).
inline std::pair<double, double> rician_sample(Substream& rng, double x_r,
                                               double omega0, double distance,
                                               double pathloss_exp) {
  const double mean_gain = omega0 * std::pow(distance, -pathloss_exp);
  const double los = std::sqrt(x_r * mean_gain / (1.0 + x_r));
  const double scatter = std::sqrt(mean_gain / (1.0 + x_r));
  const double g_re = rng.standard_normal() * std::sqrt(0.5);
  const double g_im = rng.standard_normal() * std::sqrt(0.5);
  return {los + scatter * g_re, scatter * g_im};
}

/// Squared channel magnitudes for both phases. Phase I draws exist only for
/// the WD nearest to the AP.
inline ChannelSet gen_channels(const GenConfig& c,
                               std::span<const double> distances) {
  if (distances.size() != static_cast<std::size_t>(c.K))
    throw std::invalid_argument("gen_channels: need one distance per WD");
  const int k_o = select_offload_wd(distances);
  const auto draw = [&](StreamPurpose purpose, int a, int b, double dist) {
    Substream rng(c.seed, purpose, static_cast<std::uint64_t>(a),
                  static_cast<std::uint64_t>(b));
    const auto [re, im] =
        rician_sample(rng, c.rician_factor, c.omega0, dist, c.pathloss_exp);
    return re * re + im * im;
  };

  ChannelSet ch;
  ch.h2_phase1.resize(c.Np);
  for (int i = 0; i < c.Np; ++i)
    ch.h2_phase1[i] = draw(StreamPurpose::ChannelPhase1, k_o, i, distances[k_o]);
  ch.h2.assign(c.K, std::vector<double>(c.N));
  for (int k = 0; k < c.K; ++k)
    for (int n = 0; n < c.N; ++n)
      ch.h2[k][n] = draw(StreamPurpose::ChannelPhase2, k, n, distances[k]);
  return ch;
}

/// P(task rank r) = r^-shape / sum_j j^-shape, with task l holding rank l+1.
inline std::vector<double> zipf_probabilities(int L, double shape) {
  std::vector<double> p(L);
  double total = 0.0;
  for (int l = 0; l < L; ++l) total += p[l] = std::pow(l + 1.0, -shape);
  for (double& x : p) x /= total;
  return p;
}

/// Inverse-CDF draw from a probability table.
inline int sample_discrete(Substream& rng, std::span<const double> cdf) {
  const double u = rng.uniform() * cdf.back();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return static_cast<int>(
      std::min<std::ptrdiff_t>(it - cdf.begin(), cdf.size() - 1));
}

inline ArrivalSequences gen_arrivals(const GenConfig& c) {
  if (c.L < 1) throw std::invalid_argument("gen_arrivals: L >= 1 required");
  const auto p = zipf_probabilities(c.L, c.zipf_shape);
  std::vector<double> cdf(p.size());
  std::partial_sum(p.begin(), p.end(), cdf.begin());

  ArrivalSequences a;
  a.s.assign(c.K, std::vector<int>(c.N));
  for (int k = 0; k < c.K; ++k)
    for (int n = 0; n < c.N; ++n) {
      Substream rng(c.seed, StreamPurpose::Arrival, k, n);
      a.s[k][n] = sample_discrete(rng, cdf);
    }
  return a;
}

inline TaskLibrary gen_library(const GenConfig& c) {
  TaskLibrary lib;
  lib.D.resize(c.L);
  for (int l = 0; l < c.L; ++l) {
    Substream rng(c.seed, StreamPurpose::Library, l, 0);
    lib.D[l] = c.size_min + (c.size_max - c.size_min) * rng.uniform();
  }
  lib.Dmax = c.Dmax;
  return lib;
}

inline SystemParams make_params(const GenConfig& c) {
  SystemParams p;
  p.K = c.K;
  p.L = c.L;
  p.Np = c.Np;
  p.N = c.N;
  p.tau = c.tau;
  p.w0 = c.w0;
  p.w1 = c.w1;
  p.sigma2 = c.sigma2;
  p.zeta0 = c.zeta0;
  p.C0 = c.C0;
  p.zeta_k.assign(c.K, c.zeta_k);
  p.C_k.assign(c.K, c.C_k);
  p.B_phase1.assign(c.Np, c.bandwidth_phase1);
  p.B.assign(c.K, std::vector<double>(c.N, c.bandwidth));
  return p;
}

/// Full scenario for a configuration; deterministic in the config.
inline Scenario generate_scenario(const GenConfig& c) {
  const auto v = validate_config(c);
  if (!v.ok())
    throw std::invalid_argument("generate_scenario: invalid config\n" +
                                v.to_string());
  const auto dist = wd_distances(c);
  Scenario s;
  s.params = make_params(c);
  s.library = gen_library(c);
  s.channels = gen_channels(c, dist);
  s.arrivals = gen_arrivals(c);
  s.k_o = select_offload_wd(dist);
  return s;
}

}  // namespace mecache
