#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mecache/model.hpp"
#include "mecache/report.hpp"
#include "mecache/scenario.hpp"
#include "mecache/schemes.hpp"

namespace mecache {

enum class SweepVariable { Dmax, Sigma2, L };

inline const char* to_string(SweepVariable v) {
  switch (v) {
    case SweepVariable::Dmax: return "Dmax";
    case SweepVariable::Sigma2: return "sigma2";
    case SweepVariable::L: return "L";
  }
  return "?";
}

inline std::optional<SweepVariable> parse_sweep_variable(const std::string& s) {
  if (s == "Dmax" || s == "dmax") return SweepVariable::Dmax;
  if (s == "sigma2") return SweepVariable::Sigma2;
  if (s == "L") return SweepVariable::L;
  return std::nullopt;
}

/// Schemes that run branch and bound are refused above this task count.
inline constexpr int kDefaultBnbMaxL = 16;

struct SweepSpec {
  GenConfig base;
  SweepVariable variable = SweepVariable::Dmax;
  std::vector<double> values;  // Dmax in bits, sigma2 in W, L as a count
  std::vector<std::uint64_t> seeds;
  std::vector<SchemeId> schemes{std::begin(kAllSchemes), std::end(kAllSchemes)};
  double epsilon = 1e-9;  // Joules
  long max_nodes = 100000;
  int bnb_max_L = kDefaultBnbMaxL;
  int threads = 1;
  /// Wall-clock times break byte-for-byte reproducibility, so they are only
  /// written on request.
  bool record_runtime = false;
};

inline ValidationResult validate_sweep(const SweepSpec& spec) {
  ValidationResult r;
  if (spec.seeds.empty()) r.violations.push_back({"seeds", "at least one seed"});
  if (spec.schemes.empty())
    r.violations.push_back({"schemes", "at least one scheme"});
  if (!(spec.epsilon > 0.0)) r.violations.push_back({"epsilon", "epsilon > 0"});
  if (spec.threads < 1) r.violations.push_back({"threads", "threads >= 1"});
  for (std::size_t i = 0; i < spec.values.size(); ++i) {
    const double v = spec.values[i];
    const auto path = "values[" + std::to_string(i) + "]";
    switch (spec.variable) {
      case SweepVariable::Dmax:
        if (!(v >= 0.0 && std::isfinite(v)))
          r.violations.push_back({path, "Dmax >= 0"});
        break;
      case SweepVariable::Sigma2:
        if (!(v > 0.0 && std::isfinite(v)))
          r.violations.push_back({path, "sigma2 > 0"});
        break;
      case SweepVariable::L:
        if (!(v >= 1.0 && v == std::floor(v) && v < 1e6))
          r.violations.push_back({path, "L is a positive integer"});
        break;
    }
  }
  return r;
}

/// Generation settings of one (value, seed) cell.
inline GenConfig cell_config(const SweepSpec& spec, double value,
                             std::uint64_t seed) {
  GenConfig c = spec.base;
  c.seed = seed;
  switch (spec.variable) {
    case SweepVariable::Dmax: c.Dmax = value; break;
    case SweepVariable::Sigma2: c.sigma2 = value; break;
    case SweepVariable::L: c.L = static_cast<int>(value); break;
  }
  return c;
}

inline SchemeOptions scheme_options(const SweepSpec& spec) {
  SchemeOptions opt;
  opt.bnb.epsilon = spec.epsilon;
  opt.bnb.max_nodes = spec.max_nodes;
  return opt;
}

/// Error text if `id` may not run on a library of L tasks, else empty.
inline std::string bnb_guard(SchemeId id, int L, int cap) {
  if (!uses_bnb(id) || L <= cap) return {};
  return std::string(to_string(id)) + " needs branch and bound over L=" +
         std::to_string(L) + " tasks, above the cap of " + std::to_string(cap);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline constexpr const char* kCsvColumns[] = {
    "scheme",      "sweep_value", "seed",         "objective_J", "e_mec_p1",
    "e_off_p1",    "e_mec_p2",    "e_loc_total",  "e_off_total", "kkt_residual",
    "bnb_gap",     "node_count",  "runtime_s",    "error"};

inline std::string csv_header() {
  std::string h;
  for (const char* c : kCsvColumns) {
    if (!h.empty()) h += ',';
    h += c;
  }
  return h + '\n';
}

inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

/// Numeric columns of one CSV row, in column order from objective_J to
/// runtime_s.
struct RowValues {
  double objective = 0.0;
  double e_mec_p1 = 0.0;
  double e_off_p1 = 0.0;
  double e_mec_p2 = 0.0;
  double e_loc_total = 0.0;
  double e_off_total = 0.0;
  double kkt_residual = 0.0;
  double bnb_gap = 0.0;
  double node_count = 0.0;
  double runtime = 0.0;

  static RowValues from(const SolveReport& r) {
    return {r.objective,         r.breakdown.e_mec_p1,      r.breakdown.e_off_p1,
            r.breakdown.e_mec_p2, r.breakdown.e_loc_total(), r.breakdown.e_off_total(),
            r.kkt_residual,      r.bnb_gap,                 static_cast<double>(r.node_count),
            r.runtime};
  }
  static RowValues mean(const std::vector<RowValues>& rows) {
    RowValues m;
    const auto acc = [&](double RowValues::*f) {
      double s = 0.0;
      for (const auto& r : rows) s += r.*f;
      m.*f = s / static_cast<double>(rows.size());
    };
    for (auto f : {&RowValues::objective, &RowValues::e_mec_p1, &RowValues::e_off_p1,
                   &RowValues::e_mec_p2, &RowValues::e_loc_total,
                   &RowValues::e_off_total, &RowValues::kkt_residual,
                   &RowValues::bnb_gap, &RowValues::node_count, &RowValues::runtime})
      acc(f);
    return m;
  }
};

struct CsvRow {
  SchemeId scheme = SchemeId::Bnb;
  double sweep_value = 0.0;
  std::string seed;  // decimal seed, or "mean"
  std::optional<RowValues> values;  // absent when the cell failed
  std::string error;
};

inline std::string format_row(const CsvRow& row, bool record_runtime) {
  std::string out = to_string(row.scheme);
  out += ',' + format_number(row.sweep_value) + ',' + row.seed;
  if (row.values) {
    const auto& v = *row.values;
    for (double x : {v.objective, v.e_mec_p1, v.e_off_p1, v.e_mec_p2,
                     v.e_loc_total, v.e_off_total, v.kkt_residual, v.bnb_gap,
                     v.node_count})
      out += ',' + format_number(x);
    out += ',';
    if (record_runtime) out += format_number(v.runtime);
  } else {
    out += ",,,,,,,,,,";
  }
  out += ',' + csv_escape(row.error) + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Outcome of one scheme on one scenario, or the reason it has none.
struct CellOutcome {
  std::optional<SolveReport> report;
  std::string error;
};

inline std::string describe_failure(const SolveReport& r) {
  std::string msg = to_string(r.status);
  if (!r.message.empty()) msg += ": " + r.message;
  return msg;
}

inline CellOutcome run_cell(const Scenario& s, SchemeId id,
                            const SchemeOptions& opt, int bnb_max_L) {
  CellOutcome out;
  if (auto refusal = bnb_guard(id, s.params.L, bnb_max_L); !refusal.empty()) {
    out.error = std::move(refusal);
    return out;
  }
  try {
    auto r = run_scheme(s, id, opt);
    if (r.ok())
      out.report = std::move(r);
    else
      out.error = describe_failure(r);
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

/// Seed rows for every (value, seed, scheme) followed, per value, by one mean
/// row per scheme. Cells run on `spec.threads` workers; the output order and
/// content do not depend on the thread count.
inline std::vector<CsvRow> run_sweep_rows(const SweepSpec& spec,
                                          std::ostream* log = nullptr) {
  const auto v = validate_sweep(spec);
  if (!v.ok()) throw std::invalid_argument("invalid sweep:\n" + v.to_string());
  const std::size_t nv = spec.values.size();
  const std::size_t ns = spec.seeds.size();
  const std::size_t nk = spec.schemes.size();
  std::vector<CellOutcome> cells(nv * ns * nk);
  const auto opt = scheme_options(spec);

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  const auto worker = [&] {
    for (std::size_t c = next++; c < nv * ns; c = next++) {
      const std::size_t iv = c / ns;
      const std::size_t is = c % ns;
      const auto cfg = cell_config(spec, spec.values[iv], spec.seeds[is]);
      std::optional<Scenario> scen;
      std::string gen_error;
      try {
        scen = generate_scenario(cfg);
      } catch (const std::exception& e) {
        gen_error = e.what();
      }
      for (std::size_t ik = 0; ik < nk; ++ik) {
        auto& cell = cells[c * nk + ik];
        if (scen)
          cell = run_cell(*scen, spec.schemes[ik], opt, spec.bnb_max_L);
        else
          cell.error = "scenario generation failed: " + gen_error;
      }
      if (log) {
        std::lock_guard lock(log_mutex);
        *log << "sweep cell " << to_string(spec.variable) << '='
             << format_number(spec.values[iv]) << " seed=" << spec.seeds[is]
             << " done\n";
      }
    }
  };
  const int nthreads =
      static_cast<int>(std::min<std::size_t>(spec.threads, std::max<std::size_t>(nv * ns, 1)));
  std::vector<std::thread> pool;
  for (int i = 1; i < nthreads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<CsvRow> rows;
  for (std::size_t iv = 0; iv < nv; ++iv) {
    for (std::size_t is = 0; is < ns; ++is)
      for (std::size_t ik = 0; ik < nk; ++ik) {
        const auto& cell = cells[(iv * ns + is) * nk + ik];
        CsvRow row{spec.schemes[ik], spec.values[iv], std::to_string(spec.seeds[is])};
        if (cell.report) row.values = RowValues::from(*cell.report);
        row.error = cell.error;
        rows.push_back(std::move(row));
      }
    for (std::size_t ik = 0; ik < nk; ++ik) {
      std::vector<RowValues> ok;
      for (std::size_t is = 0; is < ns; ++is) {
        const auto& cell = cells[(iv * ns + is) * nk + ik];
        if (cell.report) ok.push_back(RowValues::from(*cell.report));
      }
      CsvRow row{spec.schemes[ik], spec.values[iv], "mean"};
      if (!ok.empty()) row.values = RowValues::mean(ok);
      if (ok.size() != ns)
        row.error = "mean over " + std::to_string(ok.size()) + " of " +
                    std::to_string(ns) + " seeds";
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::string run_sweep(const SweepSpec& spec, std::ostream* log = nullptr) {
  std::string csv = csv_header();
  for (const auto& row : run_sweep_rows(spec, log))
    csv += format_row(row, spec.record_runtime);
  return csv;
}

// ---------------------------------------------------------------------------
// Single solves
// ---------------------------------------------------------------------------

/// Runs one scheme, refusing branch and bound above `bnb_max_L`.
inline SolveReport run_single(const Scenario& s, SchemeId id,
                              const SchemeOptions& opt = {},
                              int bnb_max_L = kDefaultBnbMaxL) {
  if (auto refusal = bnb_guard(id, s.params.L, bnb_max_L); !refusal.empty())
    throw std::invalid_argument(refusal);
  return run_scheme(s, id, opt);
}

/// Human-readable summary: objective, per-phase and per-term energies,
/// placement, certificates and runtime.
inline std::string format_summary(const Scenario& s, SchemeId id,
                                  const SolveReport& r) {
  std::ostringstream os;
  const auto& b = r.breakdown;
  const auto& p = s.params;
  const auto num = [](double x) { return format_number(x); };
  os << "scheme        " << to_string(id) << '\n'
     << "status        " << to_string(r.status) << '\n';
  if (!r.message.empty()) os << "note          " << r.message << '\n';
  if (!r.ok()) return os.str();
  os << "objective_J   " << num(r.objective) << '\n'
     << "phase I       E_mec=" << num(b.e_mec_p1) << " E_off=" << num(b.e_off_p1)
     << " total=" << num(b.phase1()) << '\n'
     << "phase II      E_mec=" << num(b.e_mec_p2) << " E_loc=" << num(b.e_loc_total())
     << " E_off=" << num(b.e_off_total()) << " total=" << num(b.phase2()) << '\n'
     << "weighted      w0*E_mec=" << num(p.w0 * (b.e_mec_p1 + b.e_mec_p2))
     << " w1*E_wd=" << num(p.w1 * (b.e_off_p1 + b.e_loc_total() + b.e_off_total()))
     << '\n';
  for (int k = 0; k < p.K; ++k)
    os << "  wd " << k + 1 << "        E_loc=" << num(b.e_loc[k])
       << " E_off=" << num(b.e_off[k]) << '\n';
  os << "placement     " << r.placement.bitmap() << " ("
     << r.placement.fixed_one().size() << " cached, "
     << num(r.placement.cached_bits(s.library.D)) << " of "
     << num(s.library.Dmax) << " bits)" << (r.repaired ? " repaired" : "") << '\n'
     << "kkt_residual  " << num(r.kkt_residual) << '\n'
     << "bnb_gap_J     " << num(r.bnb_gap) << '\n'
     << "nodes         " << r.node_count << '\n'
     << "runtime_s     " << num(r.runtime) << '\n';
  return os.str();
}

}  // namespace mecache
