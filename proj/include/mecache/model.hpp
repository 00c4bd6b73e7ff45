#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mecache {

template <typename T>
using Grid = std::vector<std::vector<T>>;

/// System constants of one block. Indices are 0-based throughout the C++ API:
/// WD k in [0, K), Phase-I slot i in [0, Np), Phase-II slot n in [0, N),
/// task l in [0, L).
///
/// Units: bits, seconds, Hz, Watts, Joules.
struct SystemParams {
  int K = 0;
  int L = 0;
  int Np = 0;
  int N = 0;
  double tau = 0.0;
  double w0 = 0.0;
  double w1 = 0.0;
  double sigma2 = 0.0;
  double zeta0 = 0.0;
  double C0 = 0.0;
  std::vector<double> zeta_k;    // [K]
  std::vector<double> C_k;       // [K]
  std::vector<double> B_phase1;  // [Np]
  Grid<double> B;                // [K][N]

  bool operator==(const SystemParams&) const = default;
};

struct TaskLibrary {
  std::vector<double> D;  // [L] input bits per task
  double Dmax = 0.0;      // cache capacity in bits

  bool operator==(const TaskLibrary&) const = default;
};

/// Squared channel magnitudes; only |h|^2 enters any energy term.
struct ChannelSet {
  std::vector<double> h2_phase1;  // [Np], selected WD only
  Grid<double> h2;                // [K][N]

  bool operator==(const ChannelSet&) const = default;
};

struct ArrivalSequences {
  Grid<int> s;  // [K][N] task index arriving at WD k in slot n

  bool operator==(const ArrivalSequences&) const = default;
};

struct Scenario {
  SystemParams params;
  TaskLibrary library;
  ChannelSet channels;
  ArrivalSequences arrivals;
  int k_o = 0;  // WD that uploads cacheable tasks in Phase I

  bool operator==(const Scenario&) const = default;
};

enum class CacheState : std::uint8_t { Zero, One, Free };

/// Caching decision per task. Fixed entries form the sets L0 (Zero) and L1
/// (One); Free entries are decided by the optimizer.
class CachePlacement {
 public:
  CachePlacement() = default;
  explicit CachePlacement(std::size_t L, CacheState init = CacheState::Free)
      : alpha_(L, init) {}
  explicit CachePlacement(std::vector<CacheState> alpha)
      : alpha_(std::move(alpha)) {}

  /// Integral placement from a 0/1 vector.
  static CachePlacement from_bits(std::span<const int> bits) {
    std::vector<CacheState> a;
    a.reserve(bits.size());
    for (int b : bits) a.push_back(b != 0 ? CacheState::One : CacheState::Zero);
    return CachePlacement(std::move(a));
  }

  std::size_t size() const { return alpha_.size(); }
  CacheState operator[](std::size_t l) const { return alpha_.at(l); }
  void set(std::size_t l, CacheState s) { alpha_.at(l) = s; }
  const std::vector<CacheState>& states() const { return alpha_; }

  std::vector<int> indices(CacheState which) const {
    std::vector<int> out;
    for (std::size_t l = 0; l < alpha_.size(); ++l)
      if (alpha_[l] == which) out.push_back(static_cast<int>(l));
    return out;
  }
  std::vector<int> fixed_zero() const { return indices(CacheState::Zero); }
  std::vector<int> fixed_one() const { return indices(CacheState::One); }
  std::vector<int> free_set() const { return indices(CacheState::Free); }

  bool has_free() const {
    return std::find(alpha_.begin(), alpha_.end(), CacheState::Free) !=
           alpha_.end();
  }
  int depth() const {
    return static_cast<int>(alpha_.size() - free_set().size());
  }

  /// Bits committed by L1.
  double cached_bits(std::span<const double> D) const {
    double total = 0.0;
    for (std::size_t l = 0; l < alpha_.size(); ++l)
      if (alpha_[l] == CacheState::One) total += D[l];
    return total;
  }

  /// Bitmap string such as "0110", with '*' for free entries.
  std::string bitmap() const {
    std::string out;
    for (auto a : alpha_)
      out += a == CacheState::One ? '1' : (a == CacheState::Zero ? '0' : '*');
    return out;
  }

  bool operator==(const CachePlacement&) const = default;

 private:
  std::vector<CacheState> alpha_;
};

/// Continuous decisions. Structurally fixed entries (d_off_p1[Np-1],
/// d_mec_p1[0], d_off[k][N-1], d_mec[0]) are always exactly zero.
struct Schedule {
  std::vector<double> d_off_p1;  // [Np]
  std::vector<double> d_mec_p1;  // [Np]
  Grid<double> d_loc;            // [K][N]
  Grid<double> d_off;            // [K][N]
  std::vector<double> d_mec;     // [N]

  static Schedule zeros(const SystemParams& p) {
    Schedule s;
    s.d_off_p1.assign(p.Np, 0.0);
    s.d_mec_p1.assign(p.Np, 0.0);
    s.d_loc.assign(p.K, std::vector<double>(p.N, 0.0));
    s.d_off.assign(p.K, std::vector<double>(p.N, 0.0));
    s.d_mec.assign(p.N, 0.0);
    return s;
  }

  bool operator==(const Schedule&) const = default;
};

struct Violation {
  std::string path;
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool mentions(const std::string& needle) const {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) {
                         return v.message.find(needle) != std::string::npos ||
                                v.path.find(needle) != std::string::npos;
                       });
  }
  std::string to_string() const {
    std::string out;
    for (const auto& v : violations) out += v.path + ": " + v.message + "\n";
    return out;
  }
};

namespace detail {

inline bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

inline void check_positive(ValidationResult& r, const std::string& path,
                           std::span<const double> v) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!positive_finite(v[i]))
      r.violations.push_back(
          {path + "[" + std::to_string(i) + "]", "must be > 0"});
}

inline void check_size(ValidationResult& r, const std::string& path,
                       std::size_t got, int want) {
  if (want < 0 || got != static_cast<std::size_t>(want))
    r.violations.push_back({path, "expected length " + std::to_string(want) +
                                      ", got " + std::to_string(got)});
}

}  // namespace detail

/// Checks every invariant of the scenario. Violations are returned as data.
inline ValidationResult validate_scenario(const Scenario& s) {
  using detail::check_positive;
  using detail::check_size;
  ValidationResult r;
  const auto& p = s.params;

  if (p.K < 1) r.violations.push_back({"params.K", "K >= 1"});
  if (p.L < 0) r.violations.push_back({"params.L", "L >= 0"});
  if (p.Np < 1) r.violations.push_back({"params.N_p", "N_p >= 1"});
  if (p.N < 1) r.violations.push_back({"params.N", "N >= 1"});
  if (p.Np >= p.N) r.violations.push_back({"params.N_p", "N_p < N"});
  if (!(p.w0 >= 0.0)) r.violations.push_back({"params.w0", "w0 >= 0"});
  if (!(p.w1 >= 0.0)) r.violations.push_back({"params.w1", "w1 >= 0"});
  if (!(std::abs(p.w0 + p.w1 - 1.0) <= 1e-12))
    r.violations.push_back({"params.w0", "w0+w1=1"});
  if (!detail::positive_finite(p.tau))
    r.violations.push_back({"params.tau", "must be > 0"});
  if (!detail::positive_finite(p.sigma2))
    r.violations.push_back({"params.sigma2", "must be > 0"});
  if (!detail::positive_finite(p.zeta0))
    r.violations.push_back({"params.zeta0", "must be > 0"});
  if (!detail::positive_finite(p.C0))
    r.violations.push_back({"params.C0", "must be > 0"});
  if (!r.ok()) return r;  // dimensions below are meaningless otherwise

  check_size(r, "params.zeta_k", p.zeta_k.size(), p.K);
  check_size(r, "params.C_k", p.C_k.size(), p.K);
  check_size(r, "params.B_phase1", p.B_phase1.size(), p.Np);
  check_size(r, "params.B", p.B.size(), p.K);
  check_positive(r, "params.zeta_k", p.zeta_k);
  check_positive(r, "params.C_k", p.C_k);
  check_positive(r, "params.B_phase1", p.B_phase1);
  for (std::size_t k = 0; k < p.B.size(); ++k) {
    check_size(r, "params.B[" + std::to_string(k) + "]", p.B[k].size(), p.N);
    check_positive(r, "params.B[" + std::to_string(k) + "]", p.B[k]);
  }

  check_size(r, "library.D", s.library.D.size(), p.L);
  check_positive(r, "library.D", s.library.D);
  if (!(s.library.Dmax >= 0.0) || !std::isfinite(s.library.Dmax))
    r.violations.push_back({"library.Dmax", "Dmax >= 0"});

  check_size(r, "channels.h2_phase1", s.channels.h2_phase1.size(), p.Np);
  check_positive(r, "channels.h2_phase1", s.channels.h2_phase1);
  check_size(r, "channels.h2", s.channels.h2.size(), p.K);
  for (std::size_t k = 0; k < s.channels.h2.size(); ++k) {
    const auto path = "channels.h2[" + std::to_string(k) + "]";
    check_size(r, path, s.channels.h2[k].size(), p.N);
    check_positive(r, path, s.channels.h2[k]);
  }

  check_size(r, "arrivals.s", s.arrivals.s.size(), p.K);
  for (std::size_t k = 0; k < s.arrivals.s.size(); ++k) {
    const auto path = "arrivals.s[" + std::to_string(k) + "]";
    check_size(r, path, s.arrivals.s[k].size(), p.N);
    for (std::size_t n = 0; n < s.arrivals.s[k].size(); ++n) {
      const int t = s.arrivals.s[k][n];
      if (t < 0 || t >= p.L)
        r.violations.push_back({path + "[" + std::to_string(n) + "]",
                                "task index out of range"});
    }
  }

  if (s.k_o < 0 || s.k_o >= p.K)
    r.violations.push_back({"k_o", "k_o must be a valid WD index"});
  return r;
}

/// WD with the smallest pathloss, i.e. the smallest distance. Ties go to the
/// lowest index.
inline int select_offload_wd(std::span<const double> distances) {
  if (distances.empty())
    throw std::invalid_argument("select_offload_wd: empty distance list");
  for (double d : distances)
    if (!detail::positive_finite(d))
      throw std::invalid_argument("select_offload_wd: distances must be > 0");
  return static_cast<int>(
      std::min_element(distances.begin(), distances.end()) -
      distances.begin());
}

/// Distinct tasks arrived in slots 0..n (inclusive), sorted ascending.
inline std::vector<int> build_cts(std::span<const int> seq, int n) {
  if (n < 0 || n >= static_cast<int>(seq.size()))
    throw std::out_of_range("build_cts: slot out of range");
  std::vector<int> out(seq.begin(), seq.begin() + n + 1);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// first[k][l] = first slot in which task l reaches WD k, or N if it never
/// does. Task l is in CTS(k, n) iff first[k][l] <= n. Out-of-range entries
/// (rejected by validate_scenario) are ignored.
inline Grid<int> first_arrivals(const Scenario& s) {
  const auto& p = s.params;
  Grid<int> first(p.K, std::vector<int>(p.L, p.N));
  for (int k = 0; k < p.K; ++k)
    for (int n = p.N - 1; n >= 0; --n) {
      const int l = s.arrivals.s.at(k).at(n);
      if (l >= 0 && l < p.L) first[k][l] = n;
    }
  return first;
}

/// Bits WD k must have processed by the end of slot n under an integral
/// placement: the uncached part of its causality task set.
inline double arrived_bits(const Scenario& s, int k, int n,
                           const CachePlacement& placement) {
  if (placement.has_free())
    throw std::invalid_argument("arrived_bits: placement has free entries");
  if (placement.size() != s.library.D.size())
    throw std::invalid_argument("arrived_bits: placement size mismatch");
  double bits = 0.0;
  for (int l : build_cts(s.arrivals.s.at(k), n))
    if (placement[l] == CacheState::Zero) bits += s.library.D[l];
  return bits;
}

}  // namespace mecache
