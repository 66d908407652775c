#pragma once

// One-dimensional system of independent trap walks: product-Poisson initial
// states, empirical measures, the stiff master equation for the expected
// density, and the Monte Carlo / solver comparison built on the exact
// expectation identity E<pi_t, H> = sum_x H(x/N) u_t(x) w(x).
//
// Time scales: the standard mode runs the walk with per-direction rate
// N / (2 w(x)); the bouchaud mode replaces w by tau(x) = N^{1/alpha} w(x)
// and speeds time by N^{1+1/alpha}. Both give the same master equation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "environment.hpp"
#include "linsolve.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stats.hpp"
#include "walk.hpp"

namespace trapsim {

inline constexpr std::uint64_t stream_hydro_init = 30;

struct HydroConfig {
  const WField* field = nullptr;
  double gamma = 1.0;                 // mass exponent: each particle weighs N^-gamma
  std::function<double(double)> u0;   // initial profile, sampled at x/N, >= 0
  double alpha = 0.5;                 // heavy-tail index, used by the bouchaud scale
  bool bouchaud = false;
  std::uint64_t seed = 0;
};

struct ParticleState {
  std::vector<long long> counts;

  long long total() const {
    long long s = 0;
    for (long long c : counts) s += c;
    return s;
  }
};

struct DensityField {
  std::vector<double> times;
  std::vector<std::vector<double>> u;  // one row per time
  std::vector<double> conserved_mass;  // sum_x w(x) u_t(x) per row
};

struct HydroComparison {
  double mc_mean = 0.0;
  double mc_se = 0.0;
  double ode_value = 0.0;
  long long replicas = 0;
};

struct TwoBlocksRow {
  double eps = 0.0;
  long long ell = 0;
  double mean_abs = 0.0;
  double se = 0.0;
};

namespace hydro_detail {

inline void check_config(const HydroConfig& cfg) {
  if (cfg.field == nullptr) throw std::invalid_argument("hydro config needs a field");
  if (cfg.field->spec.d != 1)
    throw std::invalid_argument("hydrodynamics is one-dimensional");
  if (cfg.field->spec.N < 3) throw std::invalid_argument("need at least three sites");
  if (!(cfg.gamma > 0.0) || !std::isfinite(cfg.gamma))
    throw std::invalid_argument("gamma must be positive");
  if (!cfg.u0) throw std::invalid_argument("initial profile required");
  if (cfg.bouchaud) {
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
      throw std::invalid_argument("alpha must be in (0,1)");
    if (!(cfg.gamma > 1.0 / cfg.alpha - 1.0))
      throw std::invalid_argument("gamma too small for the heavy-tail time scale");
  }
}

// Field/theta pair realizing the selected time scale; the holding mean at x
// is field.w[x] / theta in either mode.
struct Scale {
  WField field;
  double theta = 1.0;
};

inline Scale make_scale(const HydroConfig& cfg) {
  Scale s;
  s.field = *cfg.field;
  const double n = static_cast<double>(cfg.field->spec.N);
  if (cfg.bouchaud) {
    s.field.w = tau_field(*cfg.field, cfg.alpha);
    Accum total;
    for (double v : s.field.w) total.add(v);
    s.field.total = total.get();
    s.theta = std::pow(n, 1.0 + 1.0 / cfg.alpha);
  } else {
    s.theta = n;
  }
  return s;
}

inline std::vector<double> sample_profile(const HydroConfig& cfg) {
  const std::int64_t n = cfg.field->spec.sites();
  std::vector<double> u(static_cast<std::size_t>(n));
  for (std::int64_t x = 0; x < n; ++x) {
    double v = cfg.u0(static_cast<double>(x) / static_cast<double>(n));
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument("initial profile must be non-negative and finite");
    u[static_cast<std::size_t>(x)] = v;
  }
  return u;
}

// Exact Poisson draw: arrivals of a unit-rate process in [0, lambda].
// O(lambda) but safe for the large means deep traps produce.
inline long long poisson_draw(RngStream& g, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("poisson mean must be non-negative");
  long long k = 0;
  double s = g.exponential();
  while (s <= lambda) {
    ++k;
    s += g.exponential();
  }
  return k;
}

inline std::uint64_t encode_substream(std::uint64_t replica, std::uint64_t inner,
                                      const char* what) {
  if (replica >= (1ull << 24)) throw std::invalid_argument("replica id too large");
  if (inner >= (1ull << 24)) throw std::invalid_argument(std::string(what) + " id too large");
  return (replica << 24) | inner;
}

// Runs one particle from x0 to clock time T; returns the final site.
inline Site run_particle(const Scale& scale, std::uint64_t seed, std::uint64_t stream_id,
                         Site x0, double T) {
  WalkConfig wc{&scale.field, scale.theta, seed};
  walk_detail::WalkSim sim(wc, x0, stream_id);
  const long long guard = walk_detail::step_guard(scale.field.spec);
  double S = 0.0;
  while (true) {
    double h = sim.draw_holding();
    if (S + h > T) return sim.site();
    S += h;
    sim.jump();
    if (sim.jumps() > guard)
      throw std::runtime_error("step guard exceeded before reaching the requested time");
  }
}

}  // namespace hydro_detail

// Product-Poisson initial state with marginal mean u0(x/N) N^gamma w(x).
inline ParticleState sample_initial(const HydroConfig& cfg, std::uint64_t replica = 0) {
  hydro_detail::check_config(cfg);
  const std::int64_t n = cfg.field->spec.sites();
  const double scale = std::pow(static_cast<double>(n), cfg.gamma);
  std::vector<double> u = hydro_detail::sample_profile(cfg);
  ParticleState st;
  st.counts.resize(static_cast<std::size_t>(n), 0);
  for (std::int64_t x = 0; x < n; ++x) {
    double lambda = u[static_cast<std::size_t>(x)] * scale *
                    cfg.field->w[static_cast<std::size_t>(x)];
    RngStream g(cfg.seed,
                   make_stream(hydro_detail::encode_substream(
                                   replica, static_cast<std::uint64_t>(x), "site"),
                               stream_hydro_init));
    st.counts[static_cast<std::size_t>(x)] = hydro_detail::poisson_draw(g, lambda);
  }
  return st;
}

// Evolves every particle independently to clock time T. Particles are
// numbered deterministically (site-ascending), so results do not depend on
// evaluation order.
inline ParticleState simulate_particles(const HydroConfig& cfg, const ParticleState& eta0,
                                        double T, std::uint64_t replica = 0) {
  hydro_detail::check_config(cfg);
  const std::int64_t n = cfg.field->spec.sites();
  if (static_cast<std::int64_t>(eta0.counts.size()) != n)
    throw std::invalid_argument("particle state size mismatch");
  if (!(T >= 0.0) || !std::isfinite(T)) throw std::invalid_argument("bad horizon");
  hydro_detail::Scale sc = hydro_detail::make_scale(cfg);
  ParticleState out;
  out.counts.resize(static_cast<std::size_t>(n), 0);
  std::uint64_t pid = 0;
  for (std::int64_t x = 0; x < n; ++x) {
    long long c = eta0.counts[static_cast<std::size_t>(x)];
    if (c < 0) throw std::invalid_argument("negative particle count");
    for (long long i = 0; i < c; ++i) {
      Site fin = hydro_detail::run_particle(
          sc, cfg.seed, hydro_detail::encode_substream(replica, pid, "particle"),
          static_cast<Site>(x), T);
      ++pid;
      out.counts[static_cast<std::size_t>(fin)] += 1;
    }
  }
  return out;
}

// <pi, H> = N^-gamma sum_x H(x/N) eta(x)
inline double empirical_measure(const ParticleState& eta, const TorusSpec& spec,
                                double gamma,
                                const std::function<double(double)>& H) {
  if (spec.d != 1) throw std::invalid_argument("hydrodynamics is one-dimensional");
  const std::int64_t n = spec.sites();
  if (static_cast<std::int64_t>(eta.counts.size()) != n)
    throw std::invalid_argument("particle state size mismatch");
  if (!H) throw std::invalid_argument("test function required");
  const double scale = std::pow(static_cast<double>(n), -gamma);
  Accum s;
  for (std::int64_t x = 0; x < n; ++x) {
    long long c = eta.counts[static_cast<std::size_t>(x)];
    if (c != 0)
      s.add(H(static_cast<double>(x) / static_cast<double>(n)) * static_cast<double>(c));
  }
  return scale * s.get();
}

namespace hydro_detail {

// 5-point Gauss-Legendre on [a,b] of t -> G(t, pos)
template <typename F>
inline double gl5(const F& g, double a, double b) {
  static const double node[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                 0.5384693101056831, 0.9061798459386640};
  static const double weight[5] = {0.2369268850561891, 0.4786286704993665,
                                   0.5688888888888889, 0.4786286704993665,
                                   0.2369268850561891};
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double s = 0.0;
  for (int i = 0; i < 5; ++i) s += weight[i] * g(mid + half * node[i]);
  return half * s;
}

}  // namespace hydro_detail

// Space-time pairing int_0^T N^-(1+gamma) sum_x G(t, x/N) eta_t(x)/w(x) dt,
// computed segment-by-segment from the stored paths (eta_t is piecewise
// constant; only the smooth test function is quadratured).
inline double spacetime_measure(const std::vector<Trajectory>& paths, const WField& field,
                                double gamma,
                                const std::function<double(double, double)>& G,
                                double T) {
  if (field.spec.d != 1) throw std::invalid_argument("hydrodynamics is one-dimensional");
  if (!G) throw std::invalid_argument("test function required");
  if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("bad horizon");
  const double n = static_cast<double>(field.spec.sites());
  Accum total;
  for (const Trajectory& p : paths) {
    if (p.total_time < T * (1.0 - 1e-12))
      throw std::invalid_argument("path too short for the requested window");
    double elapsed = 0.0;
    for (const Segment& seg : p.segments) {
      double a = elapsed;
      double b = std::min(elapsed + seg.holding, T);
      elapsed += seg.holding;
      if (b <= a) {
        if (elapsed >= T) break;
        continue;
      }
      const double pos = static_cast<double>(seg.site) / n;
      double integral =
          hydro_detail::gl5([&](double t) { return G(t, pos); }, a, b);
      total.add(integral / field.w[static_cast<std::size_t>(seg.site)]);
      if (elapsed >= T) break;
    }
  }
  return std::pow(n, -(1.0 + gamma)) * total.get();
}

// Implicit Euler on du/dt(x) = c(x) [u(x+1) - 2u(x) + u(x-1)] with
// c(x) = theta / (2 w(x)), step doubling for the local error estimate, and
// steps clipped to land exactly on the requested output times. After each
// accepted step the iterate is projected onto [min u0, max u0]: the exact
// step is an average, so only rounding can poke outside, and the projection
// keeps the discrete maximum principle exact in floating point.
inline DensityField solve_master(const HydroConfig& cfg, const std::vector<double>& times,
                                 double tol = 1e-8) {
  hydro_detail::check_config(cfg);
  if (times.empty()) throw std::invalid_argument("no output times");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0) || !std::isfinite(times[i]))
      throw std::invalid_argument("bad output time");
    if (i > 0 && !(times[i] > times[i - 1]))
      throw std::invalid_argument("output times must be increasing");
  }
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");

  hydro_detail::Scale sc = hydro_detail::make_scale(cfg);
  const std::int64_t n = cfg.field->spec.sites();
  std::vector<double> c(static_cast<std::size_t>(n));
  for (std::int64_t x = 0; x < n; ++x) {
    double w = sc.field.w[static_cast<std::size_t>(x)];
    if (!(w > 0.0)) throw std::runtime_error("non-positive trap weight");
    c[static_cast<std::size_t>(x)] = sc.theta / (2.0 * w);
  }

  std::vector<double> u = hydro_detail::sample_profile(cfg);
  const double lo = *std::min_element(u.begin(), u.end());
  const double hi = *std::max_element(u.begin(), u.end());

  auto mass_of = [&](const std::vector<double>& v) {
    Accum m;
    for (std::int64_t x = 0; x < n; ++x)
      m.add(cfg.field->w[static_cast<std::size_t>(x)] * v[static_cast<std::size_t>(x)]);
    return m.get();
  };

  // one backward step: (1 + 2hc) v - hc v(+1) - hc v(-1) = u
  std::vector<double> sub(static_cast<std::size_t>(n)), diag(static_cast<std::size_t>(n)),
      sup(static_cast<std::size_t>(n));
  auto step = [&](const std::vector<double>& from, double h) {
    for (std::int64_t x = 0; x < n; ++x) {
      double hc = h * c[static_cast<std::size_t>(x)];
      sub[static_cast<std::size_t>(x)] = -hc;
      sup[static_cast<std::size_t>(x)] = -hc;
      diag[static_cast<std::size_t>(x)] = 1.0 + 2.0 * hc;
    }
    return cyclic_tridiag_solve(sub, diag, sup, from);
  };

  DensityField out;
  std::size_t next = 0;
  double t = 0.0;
  while (next < times.size() && times[next] == 0.0) {
    out.times.push_back(0.0);
    out.u.push_back(u);
    out.conserved_mass.push_back(mass_of(u));
    ++next;
  }

  long long steps = 0;
  const long long max_steps = 20000000;
  double h = next < times.size() ? times[next] / 1e6 : 0.0;
  while (next < times.size()) {
    bool clipped = false;
    double h_try = h;
    if (t + h_try >= times[next]) {
      h_try = times[next] - t;
      clipped = true;
    }
    std::vector<double> one = step(u, h_try);
    std::vector<double> half = step(u, 0.5 * h_try);
    std::vector<double> two = step(half, 0.5 * h_try);
    double err = 0.0;
    for (std::int64_t x = 0; x < n; ++x)
      err = std::max(err, std::fabs(one[static_cast<std::size_t>(x)] -
                                    two[static_cast<std::size_t>(x)]));
    if (++steps > max_steps)
      throw std::runtime_error("master solver exceeded " + std::to_string(max_steps) +
                               " steps at t = " + std::to_string(t));
    if (err > tol) {
      h = h_try * std::max(0.2, 0.9 * std::sqrt(tol / err));
      continue;
    }
    for (std::int64_t x = 0; x < n; ++x) {
      double v = two[static_cast<std::size_t>(x)];
      u[static_cast<std::size_t>(x)] = std::min(hi, std::max(lo, v));
    }
    t = clipped ? times[next] : t + h_try;
    if (clipped) {
      out.times.push_back(t);
      out.u.push_back(u);
      out.conserved_mass.push_back(mass_of(u));
      ++next;
    }
    // the uncapped step carries over output-time clips; only genuine error
    // rejections shrink it
    double grow = std::min(4.0, std::max(0.5, 0.9 * std::sqrt(tol / std::max(err, 1e-300))));
    h = std::max(h, h_try) * grow;
  }
  return out;
}

// Monte Carlo pairing <pi_t, H> against the solver pairing
// sum_x H(x/N) u_t(x) w(x); the two agree exactly in expectation.
inline HydroComparison hydro_comparison(const HydroConfig& cfg,
                                        const std::function<double(double)>& H, double t,
                                        long long replicas) {
  hydro_detail::check_config(cfg);
  if (!H) throw std::invalid_argument("test function required");
  if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("bad time");
  if (replicas < 10) throw std::invalid_argument("need at least ten replicas");

  const std::int64_t n = cfg.field->spec.sites();
  std::vector<double> ut;
  if (t == 0.0) {
    ut = hydro_detail::sample_profile(cfg);
  } else {
    DensityField df = solve_master(cfg, {t});
    ut = df.u.back();
  }
  Accum pairing;
  for (std::int64_t x = 0; x < n; ++x)
    pairing.add(H(static_cast<double>(x) / static_cast<double>(n)) *
                ut[static_cast<std::size_t>(x)] * cfg.field->w[static_cast<std::size_t>(x)]);

  std::vector<double> values(static_cast<std::size_t>(replicas), 0.0);
  parallel_for(replicas, [&](std::int64_t r) {
    ParticleState st = sample_initial(cfg, static_cast<std::uint64_t>(r));
    if (t > 0.0) st = simulate_particles(cfg, st, t, static_cast<std::uint64_t>(r));
    values[static_cast<std::size_t>(r)] =
        empirical_measure(st, cfg.field->spec, cfg.gamma, H);
  });
  SampleSummary s = summarize(values);
  HydroComparison cmp;
  cmp.mc_mean = s.mean;
  cmp.mc_se = s.se;
  cmp.ode_value = pairing.get();
  cmp.replicas = replicas;
  return cmp;
}

// Block-average comparison: mean over replicas of
// | int_0^T N^-(1+gamma) sum_x psi(x/N) { eta_s(x)/w(x) - M(x)/W(x,ell) } ds |
// with M(x) the particle count on x + {1..ell} and W(x,ell) the matching
// field mass. The spatial sum collapses to a per-site functional
// c(y) = a(y) - b(y), so each replica is a single streamed pass over its
// particles, shared by every block width.
inline std::vector<TwoBlocksRow> two_blocks_diagnostic(
    const HydroConfig& cfg, const std::function<double(double)>& psi,
    const std::vector<double>& eps_list, double T, long long replicas) {
  hydro_detail::check_config(cfg);
  if (!psi) throw std::invalid_argument("test function required");
  if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("bad horizon");
  if (replicas < 10) throw std::invalid_argument("need at least ten replicas");
  if (eps_list.empty()) throw std::invalid_argument("no block widths");

  const std::int64_t n = cfg.field->spec.sites();
  const double dn = static_cast<double>(n);
  const double norm = std::pow(dn, -(1.0 + cfg.gamma));
  const std::size_t k = eps_list.size();

  std::vector<long long> ells(k);
  std::vector<std::vector<double>> cfun(k);
  for (std::size_t e = 0; e < k; ++e) {
    double eps = eps_list[e];
    if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("eps must be in (0,1]");
    long long ell = std::max<long long>(1, std::llround(eps * dn));
    ell = std::min<long long>(ell, n);
    ells[e] = ell;
    // block masses W(x, ell) = sum_{j=1..ell} w(x+j)
    std::vector<double> wblock(static_cast<std::size_t>(n));
    for (std::int64_t x = 0; x < n; ++x) {
      Accum s;
      for (long long j = 1; j <= ell; ++j)
        s.add(cfg.field->w[static_cast<std::size_t>((x + j) % n)]);
      wblock[static_cast<std::size_t>(x)] = s.get();
    }
    std::vector<double>& cf = cfun[e];
    cf.resize(static_cast<std::size_t>(n));
    for (std::int64_t y = 0; y < n; ++y) {
      Accum b;
      for (long long j = 1; j <= ell; ++j) {
        std::int64_t x = ((y - j) % n + n) % n;
        b.add(psi(static_cast<double>(x) / dn) / wblock[static_cast<std::size_t>(x)]);
      }
      cf[static_cast<std::size_t>(y)] =
          norm * (psi(static_cast<double>(y) / dn) /
                      cfg.field->w[static_cast<std::size_t>(y)] -
                  b.get());
    }
  }

  hydro_detail::Scale sc = hydro_detail::make_scale(cfg);
  std::vector<double> acc(static_cast<std::size_t>(replicas) * k, 0.0);
  parallel_for(replicas, [&](std::int64_t r) {
    ParticleState st = sample_initial(cfg, static_cast<std::uint64_t>(r));
    std::vector<Accum> sums(k);
    std::uint64_t pid = 0;
    const long long guard = walk_detail::step_guard(cfg.field->spec);
    for (std::int64_t x = 0; x < n; ++x) {
      for (long long i = 0; i < st.counts[static_cast<std::size_t>(x)]; ++i) {
        WalkConfig wc{&sc.field, sc.theta, cfg.seed};
        walk_detail::WalkSim sim(
            wc, static_cast<Site>(x),
            hydro_detail::encode_substream(static_cast<std::uint64_t>(r), pid,
                                           "particle"));
        ++pid;
        double S = 0.0;
        while (true) {
          double h = sim.draw_holding();
          double len = std::min(h, T - S);
          for (std::size_t e = 0; e < k; ++e)
            sums[e].add(cfun[e][static_cast<std::size_t>(sim.site())] * len);
          S += h;
          if (S >= T) break;
          sim.jump();
          if (sim.jumps() > guard)
            throw std::runtime_error(
                "step guard exceeded before reaching the requested time");
        }
      }
    }
    for (std::size_t e = 0; e < k; ++e)
      acc[static_cast<std::size_t>(r) * k + e] = std::fabs(sums[e].get());
  });

  std::vector<TwoBlocksRow> rows(k);
  for (std::size_t e = 0; e < k; ++e) {
    std::vector<double> vals(static_cast<std::size_t>(replicas));
    for (std::int64_t r = 0; r < replicas; ++r)
      vals[static_cast<std::size_t>(r)] = acc[static_cast<std::size_t>(r) * k + e];
    SampleSummary s = summarize(vals);
    rows[e] = TwoBlocksRow{eps_list[e], ells[e], s.mean, s.se};
  }
  return rows;
}

}  // namespace trapsim
