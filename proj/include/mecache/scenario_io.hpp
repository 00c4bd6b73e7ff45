#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "mecache/model.hpp"
#include "mecache/scenario.hpp"

namespace mecache {

inline constexpr const char* kScenarioSchema = "scenario/v1";

/// Failure to read, parse, or accept a scenario document.
class ScenarioError : public std::runtime_error {
 public:
  enum class Kind { Io, Version, Format, Invalid };

  ScenarioError(Kind kind, const std::string& what, ValidationResult report = {})
      : std::runtime_error(what), kind_(kind), report_(std::move(report)) {}

  Kind kind() const { return kind_; }
  const ValidationResult& report() const { return report_; }

 private:
  Kind kind_;
  ValidationResult report_;
};

namespace detail {

/// Multipliers that convert the document's units to bits and Hz.
struct UnitScale {
  double data = 1.0;
  double bandwidth = 1.0;
};

inline UnitScale parse_units(const nlohmann::json& doc) {
  UnitScale u;
  if (!doc.contains("units")) return u;
  const auto& units = doc.at("units");
  const std::string data = units.value("data", "bit");
  const std::string bw = units.value("bandwidth", "Hz");
  if (data == "bit") {
    u.data = 1.0;
  } else if (data == "Kbit") {
    u.data = 1e3;
  } else {
    throw ScenarioError(ScenarioError::Kind::Format,
                        "unsupported data unit '" + data + "'");
  }
  if (bw == "Hz") {
    u.bandwidth = 1.0;
  } else if (bw == "MHz") {
    u.bandwidth = 1e6;
  } else {
    throw ScenarioError(ScenarioError::Kind::Format,
                        "unsupported bandwidth unit '" + bw + "'");
  }
  if (units.value("time", "s") != "s" || units.value("power", "W") != "W")
    throw ScenarioError(ScenarioError::Kind::Format,
                        "time must be in s and power in W");
  return u;
}

inline std::vector<double> scaled(std::vector<double> v, double f) {
  for (double& x : v) x *= f;
  return v;
}

}  // namespace detail

inline nlohmann::json scenario_to_json(const Scenario& s) {
  using nlohmann::json;
  const auto& p = s.params;
  json arrivals = json::array();
  for (const auto& row : s.arrivals.s) {
    json r = json::array();
    for (int t : row) r.push_back(t + 1);
    arrivals.push_back(std::move(r));
  }
  return json{
      {"schema", kScenarioSchema},
      {"units", {{"data", "bit"}, {"bandwidth", "Hz"}, {"time", "s"},
                 {"power", "W"}, {"energy", "J"}}},
      {"params",
       {{"K", p.K}, {"L", p.L}, {"N_p", p.Np}, {"N", p.N}, {"tau", p.tau},
        {"w0", p.w0}, {"w1", p.w1}, {"sigma2", p.sigma2}, {"zeta0", p.zeta0},
        {"C0", p.C0}, {"zeta_k", p.zeta_k}, {"C_k", p.C_k},
        {"B_phase1", p.B_phase1}, {"B", p.B}}},
      {"library", {{"D", s.library.D}, {"Dmax", s.library.Dmax}}},
      {"channels",
       {{"h2_phase1", s.channels.h2_phase1}, {"h2", s.channels.h2}}},
      {"arrivals", {{"s", arrivals}, {"index_base", 1}}},
      {"k_o", s.k_o + 1},
  };
}

/// Parses a scenario document. Task indices and k_o are 1-based in the file.
/// Throws ScenarioError on a version mismatch, a malformed document, or a
/// scenario that fails validation.
inline Scenario scenario_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("schema"))
    throw ScenarioError(ScenarioError::Kind::Format, "missing 'schema' field");
  const auto version = doc.at("schema").get<std::string>();
  if (version != kScenarioSchema)
    throw ScenarioError(ScenarioError::Kind::Version,
                        "unsupported schema version '" + version +
                            "', expected '" + kScenarioSchema + "'");
  Scenario s;
  try {
    const auto u = detail::parse_units(doc);
    const auto& jp = doc.at("params");
    auto& p = s.params;
    p.K = jp.at("K").get<int>();
    p.L = jp.at("L").get<int>();
    p.Np = jp.at("N_p").get<int>();
    p.N = jp.at("N").get<int>();
    p.tau = jp.at("tau").get<double>();
    p.w0 = jp.at("w0").get<double>();
    p.w1 = jp.at("w1").get<double>();
    p.sigma2 = jp.at("sigma2").get<double>();
    p.zeta0 = jp.at("zeta0").get<double>();
    p.C0 = jp.at("C0").get<double>();
    p.zeta_k = jp.at("zeta_k").get<std::vector<double>>();
    p.C_k = jp.at("C_k").get<std::vector<double>>();
    p.B_phase1 =
        detail::scaled(jp.at("B_phase1").get<std::vector<double>>(), u.bandwidth);
    p.B = jp.at("B").get<Grid<double>>();
    for (auto& row : p.B) row = detail::scaled(std::move(row), u.bandwidth);

    const auto& jl = doc.at("library");
    s.library.D = detail::scaled(jl.at("D").get<std::vector<double>>(), u.data);
    s.library.Dmax = jl.at("Dmax").get<double>() * u.data;

    const auto& jc = doc.at("channels");
    s.channels.h2_phase1 = jc.at("h2_phase1").get<std::vector<double>>();
    s.channels.h2 = jc.at("h2").get<Grid<double>>();

    const auto& ja = doc.at("arrivals");
    const int base = ja.value("index_base", 1);
    s.arrivals.s = ja.at("s").get<Grid<int>>();
    for (auto& row : s.arrivals.s)
      for (int& t : row) t -= base;
    s.k_o = doc.at("k_o").get<int>() - base;
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(ScenarioError::Kind::Format,
                        std::string("malformed scenario: ") + e.what());
  }
  auto report = validate_scenario(s);
  if (!report.ok())
    throw ScenarioError(ScenarioError::Kind::Invalid,
                        "scenario violates invariants:\n" + report.to_string(),
                        std::move(report));
  return s;
}

inline void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ScenarioError(ScenarioError::Kind::Io, "cannot write " + path);
  out << scenario_to_json(s).dump(2) << '\n';
  if (!out) throw ScenarioError(ScenarioError::Kind::Io, "write failed: " + path);
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(ScenarioError::Kind::Io, "cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ScenarioError(ScenarioError::Kind::Format,
                        path + ": " + std::string(e.what()));
  }
}

inline Scenario load_scenario(const std::string& path) {
  return scenario_from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------
// Generation config
// ---------------------------------------------------------------------------

inline nlohmann::json config_to_json(const GenConfig& c) {
  return nlohmann::json{
      {"units", {{"data", "bit"}, {"bandwidth", "Hz"}}},
      {"seed", c.seed}, {"K", c.K}, {"L", c.L}, {"N_p", c.Np}, {"N", c.N},
      {"tau", c.tau}, {"w0", c.w0}, {"w1", c.w1}, {"sigma2", c.sigma2},
      {"zeta0", c.zeta0}, {"C0", c.C0}, {"zeta_k", c.zeta_k}, {"C_k", c.C_k},
      {"bandwidth", c.bandwidth}, {"bandwidth_phase1", c.bandwidth_phase1},
      {"rician_factor", c.rician_factor}, {"omega0", c.omega0},
      {"pathloss_exp", c.pathloss_exp}, {"zipf_shape", c.zipf_shape},
      {"size_range", {c.size_min, c.size_max}}, {"Dmax", c.Dmax},
      {"distance_range", {c.dist_min, c.dist_max}},
  };
}

/// Overlays the keys present in `doc` onto `base`. Sizes and Dmax honour the
/// document's data unit; bandwidths honour its bandwidth unit. C0 and C_k are
/// always cycles per bit.
inline GenConfig config_from_json(const nlohmann::json& doc,
                                  GenConfig base = {}) {
  try {
    const auto u = detail::parse_units(doc);
    const auto get = [&](const char* key, auto& field, double scale = 1.0) {
      if (!doc.contains(key)) return;
      using T = std::decay_t<decltype(field)>;
      if constexpr (std::is_floating_point_v<T>)
        field = doc.at(key).get<double>() * scale;
      else
        field = doc.at(key).get<T>();
    };
    get("seed", base.seed);
    get("K", base.K);
    get("L", base.L);
    get("N_p", base.Np);
    get("N", base.N);
    get("tau", base.tau);
    get("w0", base.w0);
    get("w1", base.w1);
    get("sigma2", base.sigma2);
    get("zeta0", base.zeta0);
    get("C0", base.C0);
    get("zeta_k", base.zeta_k);
    get("C_k", base.C_k);
    get("bandwidth", base.bandwidth, u.bandwidth);
    get("bandwidth_phase1", base.bandwidth_phase1, u.bandwidth);
    get("rician_factor", base.rician_factor);
    get("omega0", base.omega0);
    get("pathloss_exp", base.pathloss_exp);
    get("zipf_shape", base.zipf_shape);
    get("Dmax", base.Dmax, u.data);
    if (doc.contains("size_range")) {
      const auto r = doc.at("size_range").get<std::vector<double>>();
      if (r.size() != 2)
        throw ScenarioError(ScenarioError::Kind::Format,
                            "size_range needs [min, max]");
      base.size_min = r[0] * u.data;
      base.size_max = r[1] * u.data;
    }
    if (doc.contains("distance_range")) {
      const auto r = doc.at("distance_range").get<std::vector<double>>();
      if (r.size() != 2)
        throw ScenarioError(ScenarioError::Kind::Format,
                            "distance_range needs [min, max]");
      base.dist_min = r[0];
      base.dist_max = r[1];
    }
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(ScenarioError::Kind::Format,
                        std::string("malformed config: ") + e.what());
  }
  return base;
}

}  // namespace mecache
