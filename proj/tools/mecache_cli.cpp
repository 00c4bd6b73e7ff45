// Command-line front end: gen, solve, sweep, validate.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mecache/mecache.hpp"

namespace {

using namespace mecache;

/// GenConfig fields exposed as flags. Sizes and capacity are in bits.
void add_gen_flags(CLI::App& app, GenConfig& c, std::string& config_path) {
  app.add_option("--config", config_path,
                 "JSON file with generation settings; its keys override flags");
  app.add_option("--K", c.K, "number of WDs")->capture_default_str();
  app.add_option("--L", c.L, "number of tasks")->capture_default_str();
  app.add_option("--Np", c.Np, "caching-phase slots")->capture_default_str();
  app.add_option("--N", c.N, "arrival-phase slots")->capture_default_str();
  app.add_option("--tau", c.tau, "slot length [s]")->capture_default_str();
  app.add_option("--w0", c.w0, "MEC energy weight")->capture_default_str();
  app.add_option("--w1", c.w1, "WD energy weight")->capture_default_str();
  app.add_option("--sigma2", c.sigma2, "noise power [W]")->capture_default_str();
  app.add_option("--zeta0", c.zeta0, "MEC capacitance coefficient")->capture_default_str();
  app.add_option("--C0", c.C0, "MEC cycles per bit")->capture_default_str();
  app.add_option("--zeta-k", c.zeta_k, "WD capacitance coefficient")->capture_default_str();
  app.add_option("--C-k", c.C_k, "WD cycles per bit")->capture_default_str();
  app.add_option("--bandwidth", c.bandwidth, "arrival-phase bandwidth [Hz]")
      ->capture_default_str();
  app.add_option("--bandwidth-phase1", c.bandwidth_phase1,
                 "caching-phase bandwidth [Hz]")
      ->capture_default_str();
  app.add_option("--rician-factor", c.rician_factor, "Rician factor")->capture_default_str();
  app.add_option("--omega0", c.omega0, "pathloss at 1 m (linear)")->capture_default_str();
  app.add_option("--pathloss-exp", c.pathloss_exp, "pathloss exponent")
      ->capture_default_str();
  app.add_option("--zipf-shape", c.zipf_shape, "Zipf shape")->capture_default_str();
  app.add_option("--size-min", c.size_min, "smallest task [bit]")->capture_default_str();
  app.add_option("--size-max", c.size_max, "largest task [bit]")->capture_default_str();
  app.add_option("--Dmax", c.Dmax, "cache capacity [bit]")->capture_default_str();
  app.add_option("--dist-min", c.dist_min, "nearest WD distance [m]")->capture_default_str();
  app.add_option("--dist-max", c.dist_max, "farthest WD distance [m]")->capture_default_str();
}

/// Scheme flags shared by solve and sweep.
struct SolveFlags {
  double epsilon = 1e-9;
  long max_nodes = 100000;
  int bnb_max_L = kDefaultBnbMaxL;
};

void add_solve_flags(CLI::App& app, SolveFlags& f) {
  app.add_option("--epsilon", f.epsilon, "branch-and-bound gap [J]")->capture_default_str();
  app.add_option("--max-nodes", f.max_nodes, "branch-and-bound node limit")
      ->capture_default_str();
  app.add_option("--bnb-max-L", f.bnb_max_L,
                 "largest task count allowed for branch and bound")
      ->capture_default_str();
}

GenConfig apply_config_file(GenConfig c, const std::string& path) {
  if (path.empty()) return c;
  return config_from_json(read_json_file(path), c);
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

SchemeId scheme_or_throw(const std::string& name) {
  if (auto id = parse_scheme(name)) return *id;
  throw CLI::ValidationError("--scheme", "unknown scheme '" + name + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

// ---------------------------------------------------------------------------

int run_gen(const GenConfig& flags, const std::string& config_path,
            std::uint64_t seed, const std::string& output) {
  GenConfig c = flags;
  c.seed = seed;
  c = apply_config_file(c, config_path);
  c.seed = seed;
  const auto s = generate_scenario(c);
  write_text(output, scenario_to_json(s).dump(2) + "\n");
  std::cerr << "generated scenario K=" << c.K << " L=" << c.L << " Np=" << c.Np
            << " N=" << c.N << " seed=" << seed << '\n';
  return 0;
}

struct SolveArgs {
  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  std::string scheme = "bnb";
  bool log_bnb = false;
  bool random_tie_break = false;
  std::uint64_t tie_seed = 0;
  std::string dump_path;
};

int run_solve(const GenConfig& flags, const std::string& config_path,
              const SolveFlags& sf, const SolveArgs& a) {
  Scenario s;
  if (!a.scenario_path.empty()) {
    s = load_scenario(a.scenario_path);
  } else if (a.seed) {
    GenConfig c = apply_config_file(flags, config_path);
    c.seed = *a.seed;
    s = generate_scenario(c);
  } else {
    throw CLI::ValidationError("solve", "give --scenario or --seed");
  }
  const SchemeId id = scheme_or_throw(a.scheme);
  SchemeOptions opt;
  opt.bnb.epsilon = sf.epsilon;
  opt.bnb.max_nodes = sf.max_nodes;
  opt.bnb.log = a.log_bnb ? &std::cerr : nullptr;
  opt.random_tie_break = a.random_tie_break;
  opt.tie_seed = a.tie_seed;
  if (!a.dump_path.empty()) {
    std::ofstream out(a.dump_path);
    dump_instance(assemble(s, CachePlacement(s.params.L)), out);
  }
  const auto r = run_single(s, id, opt, sf.bnb_max_L);
  std::cout << format_summary(s, id, r);
  return r.ok() ? 0 : 1;
}

struct SweepArgs {
  std::uint64_t seed = 0;
  int num_seeds = 20;
  std::string variable = "Dmax";
  std::string values;
  std::string schemes;
  int threads = 1;
  bool record_runtime = false;
  std::string output;
};

/// Sweep settings from a config file's "sweep" block, overriding flags.
void apply_sweep_block(const nlohmann::json& doc, SweepArgs& a, SolveFlags& f) {
  if (!doc.contains("sweep")) return;
  const auto& j = doc.at("sweep");
  const auto join = [](const nlohmann::json& arr, auto to_str) {
    std::string out;
    for (const auto& x : arr) {
      if (!out.empty()) out += ',';
      out += to_str(x);
    }
    return out;
  };
  if (j.contains("variable")) a.variable = j.at("variable").get<std::string>();
  if (j.contains("values"))
    a.values = join(j.at("values"),
                    [](const nlohmann::json& x) { return format_number(x.get<double>()); });
  if (j.contains("schemes"))
    a.schemes = join(j.at("schemes"),
                     [](const nlohmann::json& x) { return x.get<std::string>(); });
  if (j.contains("num_seeds")) a.num_seeds = j.at("num_seeds").get<int>();
  if (j.contains("threads")) a.threads = j.at("threads").get<int>();
  if (j.contains("epsilon")) f.epsilon = j.at("epsilon").get<double>();
  if (j.contains("max_nodes")) f.max_nodes = j.at("max_nodes").get<long>();
  if (j.contains("bnb_max_L")) f.bnb_max_L = j.at("bnb_max_L").get<int>();
}

int run_sweep_verb(const GenConfig& flags, const std::string& config_path,
                   SolveFlags sf, SweepArgs a) {
  SweepSpec spec;
  spec.base = flags;
  if (!config_path.empty()) {
    const auto doc = read_json_file(config_path);
    spec.base = config_from_json(doc, spec.base);
    apply_sweep_block(doc, a, sf);
  }
  const auto var = parse_sweep_variable(a.variable);
  if (!var) throw CLI::ValidationError("--var", "unknown sweep variable '" + a.variable + "'");
  spec.variable = *var;
  for (const auto& v : split_list(a.values)) spec.values.push_back(std::stod(v));
  if (!a.schemes.empty()) {
    spec.schemes.clear();
    for (const auto& name : split_list(a.schemes))
      spec.schemes.push_back(scheme_or_throw(name));
  }
  if (a.num_seeds < 1) throw CLI::ValidationError("--num-seeds", "must be >= 1");
  for (int i = 0; i < a.num_seeds; ++i)
    spec.seeds.push_back(a.seed + static_cast<std::uint64_t>(i));
  spec.epsilon = sf.epsilon;
  spec.max_nodes = sf.max_nodes;
  spec.bnb_max_L = sf.bnb_max_L;
  spec.threads = a.threads;
  spec.record_runtime = a.record_runtime;
  write_text(a.output, run_sweep(spec, &std::cerr));
  return 0;
}

int run_validate(const std::string& path) {
  try {
    load_scenario(path);
  } catch (const ScenarioError& e) {
    std::cout << "INVALID " << path << '\n';
    if (e.kind() == ScenarioError::Kind::Invalid)
      std::cout << e.report().to_string() << '\n';
    else
      std::cout << e.what() << '\n';
    return 1;
  }
  std::cout << "OK " << path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task caching and offloading energy minimization"};
  app.require_subcommand(1);

  GenConfig gen_flags, solve_flags, sweep_flags;
  std::string gen_config, solve_config, sweep_config;
  SolveFlags solve_sf, sweep_sf;

  auto* gen = app.add_subcommand("gen", "generate a scenario file");
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "random seed")->required();
  gen->add_option("-o,--output", gen_out, "output path (default stdout)");
  add_gen_flags(*gen, gen_flags, gen_config);

  auto* solve = app.add_subcommand("solve", "solve one scenario with one scheme");
  SolveArgs sa;
  solve->add_option("--scenario", sa.scenario_path, "scenario file");
  solve->add_option("--seed", sa.seed, "generate the scenario from this seed");
  solve->add_option("--scheme", sa.scheme,
                    "bnb, popularity, relaxation, no_caching, full_offloading, full_local")
      ->capture_default_str();
  solve->add_flag("--log-bnb", sa.log_bnb, "branch-and-bound progress on stderr");
  solve->add_flag("--random-tie-break", sa.random_tie_break,
                  "shuffle fully tied tasks in popularity order");
  solve->add_option("--tie-seed", sa.tie_seed, "seed for --random-tie-break");
  solve->add_option("--dump-instance", sa.dump_path,
                    "write the relaxed root instance as text");
  add_solve_flags(*solve, solve_sf);
  add_gen_flags(*solve, solve_flags, solve_config);

  auto* sweep = app.add_subcommand("sweep", "multi-seed sweep to CSV");
  SweepArgs wa;
  sweep->add_option("--seed", wa.seed, "first seed")->required();
  sweep->add_option("--num-seeds", wa.num_seeds, "consecutive seeds")->capture_default_str();
  sweep->add_option("--var", wa.variable, "Dmax, sigma2 or L")->capture_default_str();
  sweep->add_option("--values", wa.values, "comma-separated values");
  sweep->add_option("--schemes", wa.schemes, "comma-separated schemes (default all)");
  sweep->add_option("--threads", wa.threads, "worker threads")->capture_default_str();
  sweep->add_flag("--record-runtime", wa.record_runtime, "fill runtime_s");
  sweep->add_option("-o,--output", wa.output, "CSV path (default stdout)");
  add_solve_flags(*sweep, sweep_sf);
  add_gen_flags(*sweep, sweep_flags, sweep_config);

  auto* validate = app.add_subcommand("validate", "check a scenario file");
  std::string validate_path;
  validate->add_option("path", validate_path, "scenario file")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return run_gen(gen_flags, gen_config, gen_seed, gen_out);
    if (*solve) return run_solve(solve_flags, solve_config, solve_sf, sa);
    if (*sweep) return run_sweep_verb(sweep_flags, sweep_config, sweep_sf, wa);
    if (*validate) return run_validate(validate_path);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
