#pragma once

// Named, config-driven experiments. Each runner validates its parameter
// block, executes with deterministic seeds, and writes results.csv,
// summary.json and (usually) plot.svg into the output directory. Reruns
// with the same config are byte-identical regardless of TRAPSIM_THREADS.

#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "env_json.hpp"
#include "hydro.hpp"
#include "io.hpp"
#include "kprocess.hpp"
#include "potential.hpp"
#include "stats.hpp"
#include "walk.hpp"

namespace trapsim {

// distinguishes config/schema problems (exit 2) from runtime failures (exit 1)
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace exp_detail {

using ordered_json = nlohmann::ordered_json;

// Parameter reader over the "params." section. Records every value it
// hands out (defaults included), so the summary can embed the full
// resolved configuration.
class Params {
 public:
  Params(const Config& cfg, std::initializer_list<const char*> allowed,
         std::initializer_list<const char*> required)
      : cfg_(cfg) {
    for (const auto& [key, value] : cfg.entries()) {
      if (key == "experiment" || key == "output") continue;
      if (key.rfind("params.", 0) != 0)
        throw ConfigError("config: unknown top-level key '" + key + "'");
      std::string name = key.substr(7);
      bool known = false;
      for (const char* a : allowed) known |= name == a;
      if (!known) throw ConfigError("config: unknown parameter '" + name + "'");
    }
    for (const char* r : required)
      if (!cfg.has(std::string("params.") + r))
        throw ConfigError(std::string("config: missing parameter '") + r + "'");
  }

  long long get_int(const std::string& key) {
    long long v = wrap<long long>([&] { return cfg_.get_int("params." + key); });
    resolved[key] = v;
    return v;
  }
  long long get_int(const std::string& key, long long fallback) {
    long long v = has(key) ? wrap<long long>([&] { return cfg_.get_int("params." + key); })
                           : fallback;
    resolved[key] = v;
    return v;
  }
  double get_double(const std::string& key) {
    double v = wrap<double>([&] { return cfg_.get_double("params." + key); });
    resolved[key] = v;
    return v;
  }
  double get_double(const std::string& key, double fallback) {
    double v =
        has(key) ? wrap<double>([&] { return cfg_.get_double("params." + key); }) : fallback;
    resolved[key] = v;
    return v;
  }
  bool get_bool(const std::string& key, bool fallback) {
    bool v = has(key) ? wrap<bool>([&] { return cfg_.get_bool("params." + key); }) : fallback;
    resolved[key] = v;
    return v;
  }

  // scalar numbers promote to one-element lists
  std::vector<long long> get_int_list(const std::string& key) {
    std::vector<long long> v = wrap<std::vector<long long>>([&]() -> std::vector<long long> {
      const ConfigValue& raw = cfg_.entries().at("params." + key);
      if (raw.kind == ConfigValue::Kind::num) return {cfg_.get_int("params." + key)};
      return cfg_.get_int_list("params." + key);
    });
    resolved[key] = v;
    return v;
  }
  std::vector<double> get_double_list(const std::string& key) {
    std::vector<double> v = wrap<std::vector<double>>([&]() -> std::vector<double> {
      const ConfigValue& raw = cfg_.entries().at("params." + key);
      if (raw.kind == ConfigValue::Kind::num) return {cfg_.get_double("params." + key)};
      return cfg_.get_double_list("params." + key);
    });
    resolved[key] = v;
    return v;
  }
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) {
    if (!has(key)) {
      resolved[key] = fallback;
      return fallback;
    }
    return get_double_list(key);
  }

  bool has(const std::string& key) const { return cfg_.has("params." + key); }

  int dimension(std::initializer_list<int> allowed_d) {
    long long d = get_int("d");
    bool ok = false;
    for (int a : allowed_d) ok |= d == a;
    if (!ok) throw ConfigError("dimension out of range");
    return static_cast<int>(d);
  }

  ordered_json resolved;

 private:
  const Config& cfg_;

  template <class T, class F>
  static T wrap(F&& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
};

inline std::vector<std::uint64_t> as_seeds(const std::vector<long long>& xs) {
  std::vector<std::uint64_t> out;
  for (long long v : xs) {
    if (v < 0) throw ConfigError("seeds must be non-negative");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

inline ordered_json seeds_json(const std::vector<std::uint64_t>& seeds) {
  ordered_json arr = ordered_json::array();
  for (std::uint64_t s : seeds) arr.push_back(s);
  return arr;
}

inline bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return true;
}

inline double max_weight(const WField& f) {
  double m = 0;
  for (double w : f.w) m = std::max(m, w);
  return m;
}

struct ExperimentContext {
  std::string outdir;
  ordered_json* summary = nullptr;

  std::string path(const std::string& name) const {
    return (std::filesystem::path(outdir) / name).string();
  }
};

// ---- 1. env-check -----------------------------------------------------------

inline void run_env_check(const Config& cfg, const ExperimentContext& ctx) {
  Params p(cfg,
           {"d", "N", "seeds", "alpha", "w_min", "background", "gamma0", "trend_fraction"},
           {"d", "N", "seeds"});
  int d = p.dimension({1, 2, 3});
  std::vector<long long> ns = p.get_int_list("N");
  auto seeds = as_seeds(p.get_int_list("seeds"));
  double alpha = p.get_double("alpha", 0.5);
  double w_min = p.get_double("w_min", 1e-4);
  double background = p.get_double("background", 0.0);
  double gamma0 = p.get_double("gamma0", 1.5);
  double trend_fraction = p.get_double("trend_fraction", 0.9);
  if (ns.empty() || seeds.empty()) throw ConfigError("N and seeds must be non-empty");
  (*ctx.summary)["config"] = p.resolved;
  (*ctx.summary)["seeds"] = seeds_json(seeds);

  Table t;
  t.header = {"seed", "d",       "N",     "atoms", "atom_mass",
              "total_mass", "field_mass", "floored", "max_w", "h1"};
  int monotone = 0;
  std::vector<double> mean_h1(ns.size(), 0.0);
  for (std::uint64_t seed : seeds) {
    std::vector<double> h1s;
    for (std::size_t k = 0; k < ns.size(); ++k) {
      int N = static_cast<int>(ns[k]);
      EnvironmentRecord rec =
          make_environment(d, N, PppConfig{alpha, w_min, seed}, background);
      WField f = rec.realize();
      double h1 = check_h1(f, gamma0);
      h1s.push_back(h1);
      mean_h1[k] += h1 / static_cast<double>(seeds.size());
      auto& row = t.add_row();
      row = {cell(static_cast<long long>(seed)), cell(d), cell(N),
             cell(static_cast<long long>(rec.measure.atoms.size())),
             cell(rec.measure.atom_mass()), cell(f.total), cell(f.mass()),
             cell(f.floored), cell(max_weight(f)), cell(h1)};
    }
    if (h1s.size() >= 2 && strictly_decreasing(h1s)) ++monotone;
  }
  write_csv(ctx.path("results.csv"), t);

  double fraction = static_cast<double>(monotone) / static_cast<double>(seeds.size());
  ordered_json results;
  results["environments"] = seeds.size();
  results["h1_monotone_environments"] = monotone;
  results["h1_monotone_fraction"] = fraction;
  results["mean_h1_by_N"] = mean_h1;
  (*ctx.summary)["results"] = results;
  (*ctx.summary)["verdict"] =
      ns.size() >= 3 ? (fraction >= trend_fraction ? "pass" : "fail") : "diagnostic";

  PlotSeries s;
  s.label = "mean h1";
  for (std::size_t k = 0; k < ns.size(); ++k) {
    s.x.push_back(static_cast<double>(ns[k]));
    s.y.push_back(mean_h1[k]);
  }
  write_svg_plot(ctx.path("plot.svg"), "environment regularity statistic", "N",
                 "mean h1", {s});
}

// ---- 2. potential-identities ------------------------------------------------

inline void run_potential_identities(const Config& cfg, const ExperimentContext& ctx) {
  Params p(cfg, {"d", "N", "instances", "tol", "seed", "alpha", "w_min", "background"},
           {"d"});
  int d = p.dimension({1, 2, 3});
  int N = static_cast<int>(p.get_int("N", 8));
  long long instances = p.get_int("instances", 50);
  double tol = p.get_double("tol", 1e-8);
  std::uint64_t pick_seed = static_cast<std::uint64_t>(p.get_int("seed", 2024));
  double alpha = p.get_double("alpha", 0.5);
  double w_min = p.get_double("w_min", 1e-2);
  double background = p.get_double("background", 0.1);
  if (N < 2) throw ConfigError("N must be >= 2");
  if (instances < 1) throw ConfigError("instances must be positive");
  (*ctx.summary)["config"] = p.resolved;
  std::vector<std::uint64_t> env_seeds;
  for (long long rep = 0; rep < instances; ++rep)
    env_seeds.push_back(static_cast<std::uint64_t>(d) * 1000 + rep);
  (*ctx.summary)["seeds"] = seeds_json(env_seeds);

  Table t;
  t.header = {"d",          "N",           "instance",       "env_seed",
              "escape_lhs", "escape_rhs",  "escape_rel_err", "hitting_lhs",
              "hitting_rhs", "hitting_rel_err"};
  RngStream pick(pick_seed, 1);
  double worst = 0.0;
  for (long long rep = 0; rep < instances; ++rep) {
    std::uint64_t env_seed = env_seeds[static_cast<std::size_t>(rep)];
    TrapMeasure m = sample_ppp_environment(PppConfig{alpha, w_min, env_seed}, d, background);
    ChainSpec c = make_chain(discretize(m, TorusSpec(d, N)));
    const std::int64_t n = c.spec.sites();
    std::vector<Site> sites;
    while (sites.size() < 4) {
      Site s = static_cast<Site>(pick.below(static_cast<std::uint64_t>(n)));
      bool dup = false;
      for (Site q : sites) dup |= q == s;
      if (!dup) sites.push_back(s);
    }
    Site y = sites[0];
    std::vector<Site> A{sites[1], sites[2]};
    std::vector<Site> F{sites[0], sites[1], sites[2], sites[3]};
    IdentityPair esc = escape_identity(c, y, A);
    IdentityPair hit = expected_hitting_identity(c, F, y, A);
    double esc_err = std::fabs(esc.lhs - esc.rhs) / std::max(std::fabs(esc.rhs), 1e-12);
    double hit_err = std::fabs(hit.lhs - hit.rhs) / std::max(std::fabs(hit.rhs), 1e-12);
    worst = std::max(worst, std::max(esc_err, hit_err));
    auto& row = t.add_row();
    row = {cell(d),       cell(N),       cell(rep),     cell(static_cast<long long>(env_seed)),
           cell(esc.lhs), cell(esc.rhs), cell(esc_err), cell(hit.lhs),
           cell(hit.rhs), cell(hit_err)};
  }
  write_csv(ctx.path("results.csv"), t);

  ordered_json results;
  results["instances"] = instances;
  results["max_rel_err"] = worst;
  results["tol"] = tol;
  (*ctx.summary)["results"] = results;
  (*ctx.summary)["verdict"] = worst <= tol ? "pass" : "fail";
}

// ---- 3. capacity-limits -----------------------------------------------------

inline void run_capacity_limits(const Config& cfg, const ExperimentContext& ctx) {
  Params p(cfg, {"d", "N", "tol_rel", "trend_threshold", "vd_box"}, {"d", "N"});
  int d = p.dimension({2, 3});
  std::vector<long long> ns = p.get_int_list("N");
  double tol_rel = p.get_double("tol_rel", d == 3 ? 0.10 : 0.15);
  double trend_threshold = p.get_double("trend_threshold", 0.8);
  int vd_box = static_cast<int>(p.get_int("vd_box", 64));
  if (ns.size() < 2) throw ConfigError("need at least two N values");
  for (long long n : ns)
    if (n < 4 || n % 2) throw ConfigError("N values must be even and >= 4");
  (*ctx.summary)["config"] = p.resolved;
  (*ctx.summary)["seeds"] = ordered_json::array();

  double target = d == 3 ? escape_probability_vd_extrapolated(3, vd_box) / 2.0 : M_PI / 4.0;

  Table t;
  t.header = {"d", "N", "capacity", "scaled", "target", "rel_dev"};
  std::vector<double> devs, scaled_values;
  for (long long nv : ns) {
    int N = static_cast<int>(nv);
    ChainSpec c = make_chain(uniform_field(TorusSpec(d, N)));
    Coord far{0, 0, 0};
    for (int i = 0; i < d; ++i) far[i] = N / 2;
    double cap = capacity_skeleton(c, {site_index(c.spec, Coord{0, 0, 0})},
                                   {site_index(c.spec, far)});
    double scaled = d == 3 ? cap : std::log(static_cast<double>(N)) * cap;
    double dev = std::fabs(scaled / target - 1.0);
    devs.push_back(dev);
    scaled_values.push_back(scaled);
    auto& row = t.add_row();
    row = {cell(d), cell(N), cell(cap), cell(scaled), cell(target), cell(dev)};
  }
  write_csv(ctx.path("results.csv"), t);

  bool trend_pass =
      devs.size() >= 3 ? trend_test(devs, trend_threshold).pass : strictly_decreasing(devs);
  ordered_json results;
  results["target"] = target;
  results["scaled"] = scaled_values;
  results["rel_dev"] = devs;
  results["final_rel_dev"] = devs.back();
  results["trend_pass"] = trend_pass;
  (*ctx.summary)["results"] = results;
  (*ctx.summary)["verdict"] = (devs.back() <= tol_rel && trend_pass) ? "pass" : "fail";

  PlotSeries s1, s2;
  s1.label = d == 3 ? "capacity" : "log N * capacity";
  s2.label = "limit";
  for (std::size_t k = 0; k < ns.size(); ++k) {
    s1.x.push_back(static_cast<double>(ns[k]));
    s1.y.push_back(scaled_values[k]);
    s2.x.push_back(static_cast<double>(ns[k]));
    s2.y.push_back(target);
  }
  write_svg_plot(ctx.path("plot.svg"), "two-point capacity limit", "N", "capacity",
                 {s1, s2});
}

// ---- 4. trace-convergence ---------------------------------------------------

inline TrapMeasure atoms_from_params(Params& p, int d) {
  std::vector<double> xs = p.get_double_list("atoms_x");
  std::vector<double> ys = p.get_double_list("atoms_y");
  std::vector<double> zs =
      d == 3 ? p.get_double_list("atoms_z") : std::vector<double>(xs.size(), 0.0);
  std::vector<double> ws = p.get_double_list("atoms_w");
  if (xs.size() != ys.size() || xs.size() != zs.size() || xs.size() != ws.size())
    throw ConfigError("atom coordinate/weight lists must have equal length");
  if (xs.empty()) throw ConfigError("need at least one atom");
  TrapMeasure m;
  m.d = d;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (double v : {xs[i], ys[i], zs[i]})
      if (!(v >= 0.0) || !(v < 1.0)) throw ConfigError("atom positions must lie in [0,1)");
    if (!(ws[i] > 0.0)) throw ConfigError("atom weights must be positive");
    m.atoms.push_back(TrapAtom{{xs[i], ys[i], zs[i]}, ws[i]});
  }
  return m;
}

inline void run_trace_convergence(const Config& cfg, const ExperimentContext& ctx) {
  Params p(cfg,
           {"d", "N", "M", "background", "atoms_x", "atoms_y", "atoms_z", "atoms_w",
            "tol_rel", "trend_threshold"},
           {"d", "N", "M", "atoms_x", "atoms_y", "atoms_w"});
  int d = p.dimension({2, 3});
  std::vector<long long> ns = p.get_int_list("N");
  int M = static_cast<int>(p.get_int("M"));
  double background = p.get_double("background", 0.02);
  TrapMeasure m = atoms_from_params(p, d);
  m.background = background;
  double tol_rel = p.get_double("tol_rel", d == 3 ? 0.10 : 0.15);
  double trend_threshold = p.get_double("trend_threshold", 0.8);
  if (ns.empty()) throw ConfigError("N must be non-empty");
  if (M < 2) throw ConfigError("M must be >= 2");
  (*ctx.summary)["config"] = p.resolved;
  (*ctx.summary)["seeds"] = ordered_json::array();
  TraceMode mode = d == 3 ? TraceMode::d3 : TraceMode::d2_logN;
  const char* mode_name = d == 3 ? "d3" : "d2-logN";

  Table t;
  t.header = {"d", "N", "M", "mode", "i", "j", "r_exact", "r_limit", "rel_err"};
  std::vector<double> worst_by_n;
  double v = 0;
  for (long long nv : ns) {
    int N = static_cast<int>(nv);
    WField f = discretize(m, TorusSpec(d, N));
    TraceConvergence out = trace_convergence_experiment(f, M, mode);
    v = out.v;
    worst_by_n.push_back(out.max_rel_err);
    for (const TraceRateRow& r : out.rows) {
      auto& row = t.add_row();
      row = {cell(d),         cell(N),         cell(M),
             cell(std::string(mode_name)), cell(r.i),       cell(r.j),
             cell(r.r_exact), cell(r.r_limit), cell(r.rel_err)};
    }
  }
  write_csv(ctx.path("results.csv"), t);

  bool trend_pass = worst_by_n.size() < 3 || trend_test(worst_by_n, trend_threshold).pass;
  ordered_json results;
  results["rate_constant"] = v;
  results["max_rel_err_by_N"] = worst_by_n;
  results["final_max_rel_err"] = worst_by_n.back();
  results["trend_pass"] = trend_pass;
  (*ctx.summary)["results"] = results;
  (*ctx.summary)["verdict"] =
      (worst_by_n.back() <= tol_rel && trend_pass) ? "pass" : "fail";

  PlotSeries s;
  s.label = "max relative error";
  for (std::size_t k = 0; k < ns.size(); ++k) {
    s.x.push_back(static_cast<double>(ns[k]));
    s.y.push_back(worst_by_n[k]);
  }
  write_svg_plot(ctx.path("plot.svg"), "trace rates versus limit", "N",
                 "max relative error", {s});
}

// ---- 5. occupation ----------------------------------------------------------

inline void run_occupation(const Config& cfg, const ExperimentContext& ctx) {
  Params p(cfg,
           {"d", "N", "M", "horizon", "replicas", "alpha", "w_min", "background", "seeds",
            "mc_seed_base", "trend_threshold", "trend_fraction"},
           {"d", "N", "M", "seeds"});
  int d = p.dimension({2, 3});
  int N = static_cast<int>(p.get_int("N"));
  std::vector<long long> ms = p.get_int_list("M");
  double horizon = p.get_double("horizon", 20.0);
  long long replicas = p.get_int("replicas", 50);
  double alpha = p.get_double("alpha", 0.5);
  double w_min = p.get_double("w_min", 1e-3);
  double background = p.get_double("background", 0.2);
  auto seeds = as_seeds(p.get_int_list("seeds"));
  long long mc_seed_base = p.get_int("mc_seed_base", 900);
  double trend_threshold = p.get_double("trend_threshold", 0.8);
  double trend_fraction = p.get_double("trend_fraction", 0.8);
  if (ms.size() < 2) throw ConfigError("need at least two M values");
  if (seeds.empty()) throw ConfigError("seeds must be non-empty");
  (*ctx.summary)["config"] = p.resolved;
  (*ctx.summary)["seeds"] = seeds_json(seeds);

  Table t;
  t.header = {"seed", "d", "N", "M", "horizon", "replicas",
              "max_mean", "mean_of_means", "theta", "guard_trips"};
  int passing = 0;
  std::vector<double> mean_by_m(ms.size(), 0.0);
  for (std::uint64_t env : seeds) {
    WField f = make_environment(d, N, PppConfig{alpha, w_min, env}, background).realize();
    std::vector<double> stat;
    for (std::size_t k = 0; k < ms.size(); ++k) {
      int M = static_cast<int>(ms[k]);
      OccupationResult r = occupation_negligibility(
          f, M, horizon, replicas, static_cast<std::uint64_t>(mc_seed_base) + env);
      double mom = 0;
      for (double x : r.mean_by_start) mom += x / static_cast<double>(r.mean_by_start.size());
      stat.push_back(r.max_mean);
      mean_by_m[k] += r.max_mean / static_cast<double>(seeds.size());
      auto& row = t.add_row();
      row = {cell(static_cast<long long>(env)), cell(d),    cell(N),
             cell(M),           cell(horizon),  cell(replicas),
             cell(r.max_mean),  cell(mom),      cell(r.theta),
             cell(r.guard_trips)};
    }
    if (stat.size() >= 3 ? trend_test(stat, trend_threshold).pass
                         : strictly_decreasing(stat))
      ++passing;
  }
  write_csv(ctx.path("results.csv"), t);

  double fraction = static_cast<double>(passing) / static_cast<double>(seeds.size());
  ordered_json results;
  results["environments"] = seeds.size();
  results["trend_pass_environments"] = passing;
  results["trend_pass_fraction"] = fraction;
  results["mean_max_mean_by_M"] = mean_by_m;
  (*ctx.summary)["results"] = results;
  (*ctx.summary)["verdict"] = fraction >= trend_fraction ? "pass" : "fail";

  PlotSeries s;
  s.label = "mean over environments";
  for (std::size_t k = 0; k < ms.size(); ++k) {
    s.x.push_back(static_cast<double>(ms[k]));
    s.y.push_back(mean_by_m[k]);
  }
  write_svg_plot(ctx.path("plot.svg"), "occupation outside the top traps", "M",
                 "mean occupation", {s});
}

// ---- 6. hydro ---------------------------------------------------------------

inline void run_hydro(const Config& cfg, const ExperimentContext& ctx) {
  Params p(cfg,
           {"d", "N", "seed", "mc_seed", "gamma", "alpha", "w_min", "background",
            "amplitude", "t", "replicas", "bouchaud", "times", "tol_se"},
           {"N"});
  if (p.has("d") && p.get_int("d") != 1) throw ConfigError("dimension out of range");
  std::vector<long long> ns = p.get_int_list("N");
  std::uint64_t env_seed = static_cast<std::uint64_t>(p.get_int("seed", 2));
  std::uint64_t mc_seed = static_cast<std::uint64_t>(p.get_int("mc_seed", 0));
  double gamma = p.get_double("gamma", 1.0);
  double alpha = p.get_double("alpha", 0.5);
  double w_min = p.get_double("w_min", 1e-3);
  double background = p.get_double("background", 0.3);
  double amplitude = p.get_double("amplitude", 0.8);
  double t = p.get_double("t", 0.5);
  long long replicas = p.get_int("replicas", 200);
  bool bouchaud = p.get_bool("bouchaud", false);
  std::vector<double> times =
      p.get_double_list("times", {0.0, t / 4.0, t / 2.0, t});
  double tol_se = p.get_double("tol_se", 3.0);
  if (ns.empty()) throw ConfigError("N must be non-empty");
  if (!(t > 0.0)) throw ConfigError("t must be positive");
  (*ctx.summary)["config"] = p.resolved;
  (*ctx.summary)["seeds"] = seeds_json({env_seed, mc_seed});

  auto u0 = [amplitude](double v) { return 1.0 + amplitude * std::cos(2 * M_PI * v); };
  auto H = [](double v) { return std::cos(2 * M_PI * v); };

  Table tab;
  tab.header = {"N",        "gamma", "alpha",     "bouchaud", "t",
                "replicas", "mc_mean", "mc_se",   "ode_value", "abs_gap",
                "sigma_gap", "pass"};
  bool all_pass = true;
  ordered_json per_n = ordered_json::array();
  const WField* plot_field = nullptr;
  WField plot_field_store;
  DensityField plot_density;
  for (long long nv : ns) {
    int N = static_cast<int>(nv);
    WField f = make_environment(1, N, PppConfig{alpha, w_min, env_seed}, background).realize();
    HydroConfig hc;
    hc.field = &f;
    hc.gamma = gamma;
    hc.u0 = u0;
    hc.alpha = alpha;
    hc.bouchaud = bouchaud;
    hc.seed = mc_seed;
    HydroComparison cmpres = hydro_comparison(hc, H, t, replicas);
    double gap = std::fabs(cmpres.mc_mean - cmpres.ode_value);
    double sigma = cmpres.mc_se > 0 ? gap / cmpres.mc_se : (gap == 0 ? 0 : 1e306);
    bool pass = gap <= tol_se * cmpres.mc_se;
    all_pass &= pass;
    auto& row = tab.add_row();
    row = {cell(N),           cell(gamma),      cell(alpha),
           cell(std::string(bouchaud ? "true" : "false")), cell(t),
           cell(replicas),    cell(cmpres.mc_mean), cell(cmpres.mc_se),
           cell(cmpres.ode_value), cell(gap),    cell(sigma),
           cell(std::string(pass ? "true" : "false"))};
    ordered_json nj;
    nj["N"] = N;
    nj["mc_mean"] = cmpres.mc_mean;
    nj["mc_se"] = cmpres.mc_se;
    nj["ode_value"] = cmpres.ode_value;
    nj["sigma_gap"] = sigma;
    nj["pass"] = pass;
    per_n.push_back(nj);

    DensityField df = solve_master(hc, times, 1e-10);
    write_density_csv(ctx.path("density_N" + std::to_string(N) + ".csv"), df, N);
    write_density_binary(ctx.path("density_N" + std::to_string(N) + ".bin"), df, N);
    if (nv == ns.back()) {
      plot_field_store = f;
      plot_field = &plot_field_store;
      plot_density = df;
    }
  }
  write_csv(ctx.path("results.csv"), tab);

  ordered_json results;
  results["by_N"] = per_n;
  (*ctx.summary)["results"] = results;
  (*ctx.summary)["verdict"] = all_pass ? "pass" : "fail";

  if (plot_field) {
    std::vector<PlotSeries> series;
    int N = plot_field->spec.N;
    for (std::size_t k = 0; k < plot_density.times.size(); ++k) {
      PlotSeries s;
      s.label = "t=" + format_short(plot_density.times[k]);
      for (int x = 0; x < N; ++x) {
        s.x.push_back(static_cast<double>(x) / N);
        s.y.push_back(plot_density.u[k][static_cast<std::size_t>(x)]);
      }
      series.push_back(std::move(s));
    }
    write_svg_plot(ctx.path("plot.svg"), "density profiles", "x", "u", series);
  }
}

// ---- 7. two-blocks ----------------------------------------------------------

inline void run_two_blocks(const Config& cfg, const ExperimentContext& ctx) {
  Params p(cfg,
           {"d", "N", "seeds", "eps", "horizon", "replicas", "gamma", "alpha", "w_min",
            "background", "u0_level", "mc_seed_base", "trend_fraction"},
           {"N", "seeds", "eps"});
  if (p.has("d") && p.get_int("d") != 1) throw ConfigError("dimension out of range");
  int N = static_cast<int>(p.get_int("N"));
  auto seeds = as_seeds(p.get_int_list("seeds"));
  std::vector<double> eps = p.get_double_list("eps");
  double horizon = p.get_double("horizon", 0.1);
  long long replicas = p.get_int("replicas", 16);
  double gamma = p.get_double("gamma", 1.0);
  double alpha = p.get_double("alpha", 0.5);
  double w_min = p.get_double("w_min", 1e-3);
  double background = p.get_double("background", 0.3);
  double u0_level = p.get_double("u0_level", 1.0);
  long long mc_seed_base = p.get_int("mc_seed_base", 5000);
  double trend_fraction = p.get_double("trend_fraction", 0.8);
  if (seeds.empty() || eps.empty()) throw ConfigError("seeds and eps must be non-empty");
  (*ctx.summary)["config"] = p.resolved;
  (*ctx.summary)["seeds"] = seeds_json(seeds);

  auto psi = [](double v) { return std::cos(2 * M_PI * v); };

  Table t;
  t.header = {"seed", "N", "eps", "ell", "mean_abs", "se"};
  int decreasing = 0;
  std::vector<double> mean_by_eps(eps.size(), 0.0);
  for (std::uint64_t env : seeds) {
    WField f = make_environment(1, N, PppConfig{alpha, w_min, env}, background).realize();
    HydroConfig hc;
    hc.field = &f;
    hc.gamma = gamma;
    hc.u0 = [u0_level](double) { return u0_level; };
    hc.alpha = alpha;
    hc.seed = static_cast<std::uint64_t>(mc_seed_base) + env;
    std::vector<TwoBlocksRow> rows = two_blocks_diagnostic(hc, psi, eps, horizon, replicas);
    std::vector<double> stat;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      stat.push_back(rows[k].mean_abs);
      mean_by_eps[k] += rows[k].mean_abs / static_cast<double>(seeds.size());
      auto& row = t.add_row();
      row = {cell(static_cast<long long>(env)), cell(N),
             cell(rows[k].eps),                 cell(rows[k].ell),
             cell(rows[k].mean_abs),            cell(rows[k].se)};
    }
    if (stat.size() >= 2 && strictly_decreasing(stat)) ++decreasing;
  }
  write_csv(ctx.path("results.csv"), t);

  double fraction = static_cast<double>(decreasing) / static_cast<double>(seeds.size());
  ordered_json results;
  results["environments"] = seeds.size();
  results["decreasing_environments"] = decreasing;
  results["decreasing_fraction"] = fraction;
  results["mean_abs_by_eps"] = mean_by_eps;
  (*ctx.summary)["results"] = results;
  (*ctx.summary)["verdict"] =
      eps.size() >= 2 ? (fraction >= trend_fraction ? "pass" : "fail") : "diagnostic";

  PlotSeries s;
  s.label = "mean over environments";
  for (std::size_t k = 0; k < eps.size(); ++k) {
    s.x.push_back(eps[k]);
    s.y.push_back(mean_by_eps[k]);
  }
  write_svg_plot(ctx.path("plot.svg"), "two-blocks mismatch", "eps", "mean |gap|", {s});
}

// ---- 8. stay2d --------------------------------------------------------------

inline void run_stay2d(const Config& cfg, const ExperimentContext& ctx) {
  Params p(cfg,
           {"d", "N", "seeds", "t", "rank", "ell_frac", "replicas", "alpha", "w_min",
            "background", "theta", "mc_seed_base", "trend_threshold", "trend_fraction"},
           {"N", "seeds"});
  if (p.has("d") && p.get_int("d") != 2) throw ConfigError("dimension out of range");
  std::vector<long long> ns = p.get_int_list("N");
  auto seeds = as_seeds(p.get_int_list("seeds"));
  double t = p.get_double("t", 1.0);
  int rank = static_cast<int>(p.get_int("rank", 1));
  double ell_frac = p.get_double("ell_frac", 0.125);
  long long replicas = p.get_int("replicas", 400);
  double alpha = p.get_double("alpha", 0.5);
  double w_min = p.get_double("w_min", 1e-3);
  double background = p.get_double("background", 0.2);
  double theta = p.get_double("theta", 1.0);
  long long mc_seed_base = p.get_int("mc_seed_base", 7000);
  double trend_threshold = p.get_double("trend_threshold", 0.8);
  double trend_fraction = p.get_double("trend_fraction", 0.8);
  if (ns.empty() || seeds.empty()) throw ConfigError("N and seeds must be non-empty");
  if (!(ell_frac > 0.0)) throw ConfigError("ell_frac must be positive");
  (*ctx.summary)["config"] = p.resolved;
  (*ctx.summary)["seeds"] = seeds_json(seeds);

  Table tab;
  tab.header = {"seed", "N", "rank", "t", "ell", "replicas", "p_hat", "se", "guard_trips"};
  int passing = 0;
  std::vector<double> mean_by_n(ns.size(), 0.0);
  for (std::uint64_t env : seeds) {
    std::vector<double> stat;
    for (std::size_t k = 0; k < ns.size(); ++k) {
      int N = static_cast<int>(ns[k]);
      WField f = make_environment(2, N, PppConfig{alpha, w_min, env}, background).realize();
      double ell = ell_frac * N;
      // one walk seed per environment: common random numbers couple the
      // replicas across N, sharpening the within-environment comparison
      std::uint64_t walk_seed = static_cast<std::uint64_t>(mc_seed_base) + env;
      StayResult r = stay_experiment(f, walk_seed, rank, t, ell, replicas, theta);
      stat.push_back(r.p_hat);
      mean_by_n[k] += r.p_hat / static_cast<double>(seeds.size());
      auto& row = tab.add_row();
      row = {cell(static_cast<long long>(env)), cell(N), cell(rank), cell(t),
             cell(ell), cell(r.replicas), cell(r.p_hat), cell(r.se), cell(r.guard_trips)};
    }
    if (stat.size() >= 3 ? trend_test(stat, trend_threshold).pass
                         : strictly_decreasing(stat))
      ++passing;
  }
  write_csv(ctx.path("results.csv"), tab);

  double fraction = static_cast<double>(passing) / static_cast<double>(seeds.size());
  ordered_json results;
  results["environments"] = seeds.size();
  results["trend_pass_environments"] = passing;
  results["trend_pass_fraction"] = fraction;
  results["mean_p_hat_by_N"] = mean_by_n;
  (*ctx.summary)["results"] = results;
  (*ctx.summary)["verdict"] =
      ns.size() >= 2 ? (fraction >= trend_fraction ? "pass" : "fail") : "diagnostic";

  PlotSeries s;
  s.label = "mean over environments";
  for (std::size_t k = 0; k < ns.size(); ++k) {
    s.x.push_back(static_cast<double>(ns[k]));
    s.y.push_back(mean_by_n[k]);
  }
  write_svg_plot(ctx.path("plot.svg"), "escape probability from the deep trap", "N",
                 "P[distance >= ell at t]", {s});
}

// ---- 9. kproc-diagonal ------------------------------------------------------

inline void run_kproc_diagonal(const Config& cfg, const ExperimentContext& ctx) {
  Params p(cfg,
           {"d", "N", "ell", "horizon", "replicas", "alpha", "w_min", "background",
            "seed", "mc_seed"},
           {"d", "N", "ell"});
  int d = p.dimension({2, 3});
  std::vector<long long> ns = p.get_int_list("N");
  std::vector<long long> ells = p.get_int_list("ell");
  double horizon = p.get_double("horizon", 1.0);
  long long replicas = p.get_int("replicas", 200);
  double alpha = p.get_double("alpha", 0.5);
  double w_min = p.get_double("w_min", 1e-3);
  double background = p.get_double("background", 0.2);
  std::uint64_t env_seed = static_cast<std::uint64_t>(p.get_int("seed", 1));
  std::uint64_t mc_seed = static_cast<std::uint64_t>(p.get_int("mc_seed", 4242));
  if (ns.size() != ells.size() || ns.empty())
    throw ConfigError("N and ell lists must be non-empty and equally long");
  (*ctx.summary)["config"] = p.resolved;
  (*ctx.summary)["seeds"] = seeds_json({env_seed, mc_seed});

  TrapMeasure m = sample_ppp_environment(PppConfig{alpha, w_min, env_seed}, d, background);
  std::deque<WField> store;
  std::vector<const WField*> fields;
  TruncationSchedule sched;
  for (std::size_t k = 0; k < ns.size(); ++k) {
    store.push_back(discretize(m, TorusSpec(d, static_cast<int>(ns[k]))));
    fields.push_back(&store.back());
    sched.steps.push_back({static_cast<int>(ns[k]), static_cast<int>(ells[k])});
  }
  try {
    sched.validate(d);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }

  std::vector<CouplingStep> steps = diagonal_coupling(fields, sched, horizon, replicas, mc_seed);

  Table t;
  t.header = {"N", "ell", "grid_sup_mean", "tv_quarter", "tv_half", "tv_full",
              "guard_trips"};
  ordered_json per_step = ordered_json::array();
  PlotSeries s;
  s.label = "mean sup gap";
  for (const CouplingStep& st : steps) {
    auto& row = t.add_row();
    row = {cell(st.N),     cell(st.ell),   cell(st.grid_sup_mean), cell(st.tv[0]),
           cell(st.tv[1]), cell(st.tv[2]), cell(st.guard_trips)};
    ordered_json sj;
    sj["N"] = st.N;
    sj["ell"] = st.ell;
    sj["grid_sup_mean"] = st.grid_sup_mean;
    sj["tv"] = std::vector<double>{st.tv[0], st.tv[1], st.tv[2]};
    sj["guard_trips"] = st.guard_trips;
    per_step.push_back(sj);
    s.x.push_back(static_cast<double>(st.N));
    s.y.push_back(st.grid_sup_mean);
  }
  write_csv(ctx.path("results.csv"), t);

  ordered_json results;
  results["steps"] = per_step;
  (*ctx.summary)["results"] = results;
  (*ctx.summary)["verdict"] = "diagnostic";

  write_svg_plot(ctx.path("plot.svg"), "trace walk versus truncated limit chain", "N",
                 "mean sup label gap", {s});
}

}  // namespace exp_detail

// ---- registry and entry point -----------------------------------------------

struct RunReport {
  int exit_code = 0;   // 0 completed, 1 runtime failure, 2 config/validation failure
  std::string message;
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {
      "env-check", "potential-identities", "capacity-limits",
      "trace-convergence", "occupation", "hydro",
      "two-blocks", "stay2d", "kproc-diagonal"};
  return names;
}

namespace exp_detail {

using RunnerFn = void (*)(const Config&, const ExperimentContext&);

inline RunnerFn find_runner(const std::string& name) {
  if (name == "env-check") return run_env_check;
  if (name == "potential-identities") return run_potential_identities;
  if (name == "capacity-limits") return run_capacity_limits;
  if (name == "trace-convergence") return run_trace_convergence;
  if (name == "occupation") return run_occupation;
  if (name == "hydro") return run_hydro;
  if (name == "two-blocks") return run_two_blocks;
  if (name == "stay2d") return run_stay2d;
  if (name == "kproc-diagonal") return run_kproc_diagonal;
  return nullptr;
}

inline void write_summary(const std::string& outdir, const ordered_json& j) {
  std::ofstream out((std::filesystem::path(outdir) / "summary.json").string(),
                    std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write summary.json in " + outdir);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("short write: summary.json");
}

}  // namespace exp_detail

inline RunReport run_experiment(const Config& cfg) {
  using exp_detail::ordered_json;
  std::string name, outdir;
  try {
    name = cfg.get_string("experiment");
    outdir = cfg.get_string("output");
  } catch (const std::exception& e) {
    return {2, e.what()};
  }

  std::error_code ec;
  std::filesystem::create_directories(outdir, ec);
  if (ec) return {1, "cannot create output directory '" + outdir + "': " + ec.message()};

  ordered_json summary;
  summary["experiment"] = name;

  exp_detail::RunnerFn runner = exp_detail::find_runner(name);
  if (!runner) {
    summary["error"] = "unknown experiment '" + name + "'";
    try {
      exp_detail::write_summary(outdir, summary);
    } catch (const std::exception&) {
    }
    return {2, "unknown experiment '" + name + "'"};
  }

  exp_detail::ExperimentContext ctx;
  ctx.outdir = outdir;
  ctx.summary = &summary;
  try {
    runner(cfg, ctx);
  } catch (const ConfigError& e) {
    summary["error"] = e.what();
    try {
      exp_detail::write_summary(outdir, summary);
    } catch (const std::exception&) {
    }
    return {2, e.what()};
  } catch (const std::exception& e) {
    summary["error"] = e.what();
    try {
      exp_detail::write_summary(outdir, summary);
    } catch (const std::exception&) {
    }
    return {1, e.what()};
  }
  exp_detail::write_summary(outdir, summary);
  return {0, ""};
}

inline RunReport run_experiment_file(const std::string& config_path) {
  Config cfg;
  try {
    cfg = Config::load(config_path);
  } catch (const std::exception& e) {
    return {2, e.what()};
  }
  return run_experiment(cfg);
}

}  // namespace trapsim
