#pragma once

// Metastable limit dynamics on the ranked traps. The truncated limit chain
// on {1..M} holds an Exp(mean w_i/v) clock at state i and jumps uniformly
// over all M states, self-jumps included; merged over self-jumps this is
// the chain generated by build_generator. Convergence experiments compare
// exact lattice trace rates against the limit rates, estimate the time
// spent outside the deep traps, and couple the lattice trace path with the
// truncated limit path along a diagonal (N, ell_N) schedule.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "environment.hpp"
#include "lattice.hpp"
#include "parallel.hpp"
#include "potential.hpp"
#include "rng.hpp"
#include "stats.hpp"
#include "walk.hpp"

namespace trapsim {

inline constexpr std::uint64_t stream_k_holding = 20;
inline constexpr std::uint64_t stream_k_target = 21;

struct KParams {
  std::vector<double> weights;  // ranked trap masses, non-increasing
  double rate_constant = 0.0;   // escape constant: v_d in d >= 3, pi/2 in d = 2
  double c = 0.0;               // compactification parameter, only 0 supported

  void validate() const {
    if (weights.empty()) throw std::invalid_argument("need at least one weight");
    double prev = std::numeric_limits<double>::infinity();
    for (double w : weights) {
      if (!(w > 0.0) || !std::isfinite(w))
        throw std::invalid_argument("weights must be positive");
      if (w > prev) throw std::invalid_argument("weights must be non-increasing");
      prev = w;
    }
    if (!(rate_constant > 0.0) || !std::isfinite(rate_constant))
      throw std::invalid_argument("rate constant must be positive");
    if (c != 0.0) throw std::invalid_argument("only c = 0 is supported");
  }
};

// The limit rate constant for the trace experiments: never-return
// probability of the free walk in d = 3 (computed from box estimates),
// pi/2 in d = 2.
inline double limit_rate_constant(int d) {
  if (d == 2) return 2.0 * std::atan(1.0);
  if (d == 3) return escape_probability_vd_extrapolated(3, 64);
  throw std::invalid_argument("no metastable limit in this dimension");
}

inline KParams k_params_from_field(const WField& field, int M, double v) {
  std::vector<Site> ranked = rank_traps(field, M);
  KParams p;
  p.weights.reserve(ranked.size());
  for (Site s : ranked) p.weights.push_back(field.w[static_cast<std::size_t>(s)]);
  p.rate_constant = v;
  p.validate();
  return p;
}

// Row-major M x M rate matrix: off-diagonal v/(M w_i), diagonal the exact
// negative of the (M-1)-fold off-diagonal rate.
inline std::vector<double> build_generator(const KParams& p, int M) {
  p.validate();
  if (M < 1 || static_cast<std::size_t>(M) > p.weights.size())
    throw std::invalid_argument("M out of range");
  std::vector<double> q(static_cast<std::size_t>(M) * M, 0.0);
  for (int i = 0; i < M; ++i) {
    double r = p.rate_constant / (static_cast<double>(M) * p.weights[static_cast<std::size_t>(i)]);
    for (int j = 0; j < M; ++j) q[static_cast<std::size_t>(i) * M + j] = r;
    q[static_cast<std::size_t>(i) * M + i] = -static_cast<double>(M - 1) * r;
  }
  return q;
}

namespace k_detail {

inline void check_sim_inputs(const KParams& p, int M, int i0) {
  p.validate();
  if (M < 1 || static_cast<std::size_t>(M) > p.weights.size())
    throw std::invalid_argument("M out of range");
  if (i0 < 1 || i0 > M) throw std::invalid_argument("start state out of range");
}

}  // namespace k_detail

// Path of the truncated limit chain over states {1..M}; self-jumps are
// merged, so recorded segments always change state.
inline Trajectory simulate_truncated_k(const KParams& p, int M, int i0, double horizon,
                                       std::uint64_t seed, std::uint64_t replica = 0) {
  k_detail::check_sim_inputs(p, M, i0);
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw std::invalid_argument("horizon must be positive");
  RngStream hold(seed, make_stream(replica, stream_k_holding));
  RngStream targ(seed, make_stream(replica, stream_k_target));
  Trajectory traj;
  traj.start = i0;
  int i = i0;
  double elapsed = 0.0;  // end time of the last recorded segment
  double sojourn = 0.0;  // time already spent in the current state
  for (;;) {
    double h = p.weights[static_cast<std::size_t>(i - 1)] / p.rate_constant *
               hold.exponential();
    if (elapsed + sojourn + h >= horizon) {
      traj.segments.push_back({static_cast<Site>(i), horizon - elapsed});
      break;
    }
    sojourn += h;
    int j = 1 + static_cast<int>(targ.below(static_cast<std::uint64_t>(M)));
    if (j != i) {
      traj.segments.push_back({static_cast<Site>(i), sojourn});
      elapsed += sojourn;
      sojourn = 0.0;
      i = j;
    }
  }
  traj.total_time = horizon;
  return traj;
}

// State of the truncated limit chain at time t.
inline int k_state_at(const KParams& p, int M, int i0, double t, std::uint64_t seed,
                      std::uint64_t replica = 0) {
  k_detail::check_sim_inputs(p, M, i0);
  if (!(t >= 0.0) || !std::isfinite(t))
    throw std::invalid_argument("time must be non-negative");
  RngStream hold(seed, make_stream(replica, stream_k_holding));
  RngStream targ(seed, make_stream(replica, stream_k_target));
  int i = i0;
  double s = 0.0;
  for (;;) {
    double h = p.weights[static_cast<std::size_t>(i - 1)] / p.rate_constant *
               hold.exponential();
    if (s + h > t) return i;
    s += h;
    i = 1 + static_cast<int>(targ.below(static_cast<std::uint64_t>(M)));
  }
}

// --- exact trace rates against the limit rates -------------------------------

enum class TraceMode { d3, d2_logN };

struct TraceRateRow {
  int i = 0, j = 0;  // 1-based trap ranks
  double r_exact = 0.0;
  double r_limit = 0.0;
  double rel_err = 0.0;
};

struct TraceConvergence {
  int d = 0, N = 0, M = 0;
  TraceMode mode = TraceMode::d3;
  double v = 0.0;
  std::vector<Site> traps;         // rank order
  std::vector<TraceRateRow> rows;  // ascending |relative error|
  double max_rel_err = 0.0;
};

// Exact off-diagonal trace rates on the top-M traps versus the limit form
// v/(M w_i); in the two-dimensional mode the exact rates carry the log N
// speed-up.
inline TraceConvergence trace_convergence_experiment(
    const WField& field, int M, TraceMode mode,
    SolveMethod method = SolveMethod::automatic) {
  const int d = field.spec.d;
  if (mode == TraceMode::d3 && d != 3)
    throw std::invalid_argument("d3 mode needs a three-dimensional field");
  if (mode == TraceMode::d2_logN && d != 2)
    throw std::invalid_argument("d2_logN mode needs a two-dimensional field");
  if (M < 2) throw std::invalid_argument("need at least two traps");
  TraceConvergence out;
  out.d = d;
  out.N = field.spec.N;
  out.M = M;
  out.mode = mode;
  out.v = limit_rate_constant(d);
  out.traps = rank_traps(field, M);
  ChainSpec chain = make_chain(field);
  TraceRates exact = trace_rates_exact(chain, out.traps, method);
  const double scale =
      mode == TraceMode::d2_logN ? std::log(static_cast<double>(field.spec.N)) : 1.0;
  for (int i = 0; i < M; ++i) {
    double wi = field.w[static_cast<std::size_t>(out.traps[static_cast<std::size_t>(i)])];
    double r_limit = out.v / (static_cast<double>(M) * wi);
    for (int j = 0; j < M; ++j) {
      if (j == i) continue;
      TraceRateRow row;
      row.i = i + 1;
      row.j = j + 1;
      row.r_exact = scale * exact.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      row.r_limit = r_limit;
      row.rel_err = std::abs(row.r_exact - r_limit) / r_limit;
      out.rows.push_back(row);
    }
  }
  std::sort(out.rows.begin(), out.rows.end(),
            [](const TraceRateRow& a, const TraceRateRow& b) { return a.rel_err < b.rel_err; });
  out.max_rel_err = out.rows.empty() ? 0.0 : out.rows.back().rel_err;
  return out;
}

// --- occupation outside the deep traps ---------------------------------------

struct OccupationResult {
  std::vector<double> mean_by_start;  // indexed by start rank - 1
  double max_mean = 0.0;
  double theta = 1.0;  // speed-up used: 1 in d = 3, log N in d = 2
  long long guard_trips = 0;
};

// Monte Carlo estimate of the expected time spent outside the top-M traps
// up to T, for each deep-trap start. Replicas that trip the step guard
// charge their unobserved remainder to the outside-time, which can only
// overstate the estimate.
inline OccupationResult occupation_negligibility(const WField& field, int M, double T,
                                                 long long replicas, std::uint64_t seed) {
  const int d = field.spec.d;
  if (d < 2) throw std::invalid_argument("needs at least two dimensions");
  if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("T must be positive");
  if (replicas < 1) throw std::invalid_argument("need at least one replica");
  std::vector<Site> traps = rank_traps(field, M);
  std::vector<char> mask = walk_detail::make_mask(field.spec, traps);
  OccupationResult out;
  out.theta = d == 2 ? std::log(static_cast<double>(field.spec.N)) : 1.0;
  WalkConfig cfg{&field, out.theta, seed};
  walk_detail::check_config(cfg);
  const long long guard = walk_detail::step_guard(field.spec);
  const std::size_t slots = static_cast<std::size_t>(M) * static_cast<std::size_t>(replicas);
  std::vector<double> occ(slots, 0.0);
  std::vector<char> tripped(slots, 0);
  parallel_for(static_cast<std::int64_t>(slots), [&](std::int64_t slot) {
    const std::size_t j = static_cast<std::size_t>(slot) / static_cast<std::size_t>(replicas);
    walk_detail::WalkSim sim(cfg, traps[j], static_cast<std::uint64_t>(slot));
    Accum outside;
    double S = 0.0;
    while (S < T) {
      if (sim.jumps() >= guard) {
        outside.add(T - S);
        tripped[static_cast<std::size_t>(slot)] = 1;
        break;
      }
      double h = sim.draw_holding();
      if (!mask[static_cast<std::size_t>(sim.site())]) outside.add(std::min(h, T - S));
      S += h;
      if (S >= T) break;
      sim.jump();
    }
    occ[static_cast<std::size_t>(slot)] = outside.get();
  });
  out.mean_by_start.assign(static_cast<std::size_t>(M), 0.0);
  for (std::size_t j = 0; j < static_cast<std::size_t>(M); ++j) {
    Accum a;
    for (long long r = 0; r < replicas; ++r) {
      std::size_t slot = j * static_cast<std::size_t>(replicas) + static_cast<std::size_t>(r);
      a.add(occ[slot]);
      out.guard_trips += tripped[slot];
    }
    out.mean_by_start[j] = a.get() / static_cast<double>(replicas);
    out.max_mean = std::max(out.max_mean, out.mean_by_start[j]);
  }
  return out;
}

// --- diagonal coupling along a truncation schedule ----------------------------

struct TruncationSchedule {
  struct Step {
    int N = 0;
    int ell = 0;
  };
  std::vector<Step> steps;

  void validate(int d) const {
    if (steps.empty()) throw std::invalid_argument("schedule is empty");
    int prev = 0;
    for (const Step& s : steps) {
      if (s.N < 3) throw std::invalid_argument("side length must be >= 3");
      std::int64_t cap = 1;
      for (int i = 0; i < d; ++i) cap *= s.N;
      if (s.ell < 1 || s.ell > cap)
        throw std::invalid_argument("truncation level out of range");
      if (s.ell < prev) throw std::invalid_argument("truncation levels must not decrease");
      prev = s.ell;
    }
  }
};

// Default diagonal: ell_N = floor(log2 N), capped by the number of cube
// masses resolved above the discretization floor.
inline TruncationSchedule make_default_schedule(const std::vector<const WField*>& fields) {
  TruncationSchedule sched;
  for (const WField* f : fields) {
    if (f == nullptr) throw std::invalid_argument("schedule needs a field");
    long long resolved = 0;
    for (double w : f->w)
      if (w > f->w_floor) ++resolved;
    int ell = static_cast<int>(std::floor(std::log2(static_cast<double>(f->spec.N))));
    ell = static_cast<int>(std::max<long long>(1, std::min<long long>(ell, resolved)));
    sched.steps.push_back({f->spec.N, ell});
  }
  return sched;
}

namespace k_detail {

// Labels of the lattice trace process on a uniform grid of trace times
// 0, horizon/G, ..., horizon. Right-continuous at jump times. If the step
// guard trips, the remaining grid keeps the last observed label.
inline std::vector<int> trace_grid_path(const WField& field, double theta,
                                        const std::vector<Site>& F, double horizon, int G,
                                        std::uint64_t seed, std::uint64_t replica,
                                        long long* guard_trips) {
  std::vector<Site> sorted(F);
  std::sort(sorted.begin(), sorted.end());
  auto label_of = [&](Site s) -> int {
    for (std::size_t k = 0; k < F.size(); ++k)
      if (F[k] == s) return static_cast<int>(k) + 1;
    return 0;
  };
  WalkConfig cfg{&field, theta, seed};
  walk_detail::WalkSim sim(cfg, F[0], replica);
  const long long guard = walk_detail::step_guard(field.spec);
  const double dt = horizon / static_cast<double>(G);
  std::vector<int> out(static_cast<std::size_t>(G) + 1, 1);
  int g = 1;
  int last = 1;
  double tau = 0.0;  // accumulated trace time
  while (g <= G) {
    if (sim.jumps() >= guard) {
      if (guard_trips != nullptr) ++*guard_trips;
      for (; g <= G; ++g) out[static_cast<std::size_t>(g)] = last;
      break;
    }
    Site x = sim.site();
    bool in_f = std::binary_search(sorted.begin(), sorted.end(), x);
    double h = sim.draw_holding();
    if (in_f) {
      last = label_of(x);
      while (g <= G && static_cast<double>(g) * dt < tau + h) {
        out[static_cast<std::size_t>(g)] = last;
        ++g;
      }
      tau += h;
    }
    sim.jump();
  }
  return out;
}

// Same grid sampling for the truncated limit chain.
inline std::vector<int> k_grid_path(const KParams& p, int M, int i0, double horizon,
                                    int G, std::uint64_t seed, std::uint64_t replica) {
  check_sim_inputs(p, M, i0);
  RngStream hold(seed, make_stream(replica, stream_k_holding));
  RngStream targ(seed, make_stream(replica, stream_k_target));
  const double dt = horizon / static_cast<double>(G);
  std::vector<int> out(static_cast<std::size_t>(G) + 1, i0);
  int g = 1;
  int i = i0;
  double t = 0.0;
  while (g <= G) {
    double h = p.weights[static_cast<std::size_t>(i - 1)] / p.rate_constant *
               hold.exponential();
    while (g <= G && static_cast<double>(g) * dt < t + h) {
      out[static_cast<std::size_t>(g)] = i;
      ++g;
    }
    t += h;
    i = 1 + static_cast<int>(targ.below(static_cast<std::uint64_t>(M)));
  }
  return out;
}

}  // namespace k_detail

struct CouplingStep {
  int N = 0;
  int ell = 0;
  double grid_sup_mean = 0.0;    // mean over replicas of the max label gap on the grid
  std::array<double, 3> tv{};    // empirical TV at 0.25, 0.5 and 1.0 of the horizon
  long long guard_trips = 0;
};

// For each (N, ell) step: run the lattice trace walk and the truncated
// limit chain from rank 1 and compare their grid paths and their state
// laws at three checkpoints.
inline std::vector<CouplingStep> diagonal_coupling(const std::vector<const WField*>& fields,
                                                   const TruncationSchedule& sched,
                                                   double horizon, long long replicas,
                                                   std::uint64_t seed) {
  if (fields.empty() || fields.size() != sched.steps.size())
    throw std::invalid_argument("one field per schedule step required");
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw std::invalid_argument("horizon must be positive");
  if (replicas < 1) throw std::invalid_argument("need at least one replica");
  for (const WField* f : fields) {
    if (f == nullptr) throw std::invalid_argument("null field");
    if (f->spec.d < 2) throw std::invalid_argument("needs at least two dimensions");
  }
  sched.validate(fields.front()->spec.d);
  const int G = 1000;
  const std::array<int, 3> checks{G / 4, G / 2, G};
  std::vector<CouplingStep> out;
  for (std::size_t k = 0; k < sched.steps.size(); ++k) {
    const WField& field = *fields[k];
    const int N = sched.steps[k].N;
    const int ell = sched.steps[k].ell;
    if (field.spec.N != N) throw std::invalid_argument("field/schedule size mismatch");
    const int d = field.spec.d;
    const double theta = d == 2 ? std::log(static_cast<double>(N)) : 1.0;
    const double v = limit_rate_constant(d);
    std::vector<Site> F = rank_traps(field, ell);
    KParams params = k_params_from_field(field, ell, v);

    std::vector<double> sup(static_cast<std::size_t>(replicas), 0.0);
    std::vector<long long> trips(static_cast<std::size_t>(replicas), 0);
    std::vector<std::array<int, 3>> xs(static_cast<std::size_t>(replicas));
    std::vector<std::array<int, 3>> zs(static_cast<std::size_t>(replicas));
    const std::uint64_t base = static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(replicas);
    parallel_for(replicas, [&](std::int64_t r) {
      std::uint64_t rep = base + static_cast<std::uint64_t>(r);
      std::vector<int> x = k_detail::trace_grid_path(field, theta, F, horizon, G, seed,
                                                     rep, &trips[static_cast<std::size_t>(r)]);
      std::vector<int> z = k_detail::k_grid_path(params, ell, 1, horizon, G, seed, rep);
      int worst = 0;
      for (int g = 0; g <= G; ++g)
        worst = std::max(worst, std::abs(x[static_cast<std::size_t>(g)] -
                                         z[static_cast<std::size_t>(g)]));
      sup[static_cast<std::size_t>(r)] = static_cast<double>(worst);
      for (std::size_t c = 0; c < checks.size(); ++c) {
        xs[static_cast<std::size_t>(r)][c] = x[static_cast<std::size_t>(checks[c])];
        zs[static_cast<std::size_t>(r)][c] = z[static_cast<std::size_t>(checks[c])];
      }
    });

    CouplingStep step;
    step.N = N;
    step.ell = ell;
    Accum s;
    for (long long r = 0; r < replicas; ++r) {
      s.add(sup[static_cast<std::size_t>(r)]);
      step.guard_trips += trips[static_cast<std::size_t>(r)];
    }
    step.grid_sup_mean = s.get() / static_cast<double>(replicas);
    for (std::size_t c = 0; c < checks.size(); ++c) {
      std::vector<double> px(static_cast<std::size_t>(ell), 0.0);
      std::vector<double> pz(static_cast<std::size_t>(ell), 0.0);
      for (long long r = 0; r < replicas; ++r) {
        px[static_cast<std::size_t>(xs[static_cast<std::size_t>(r)][c] - 1)] += 1.0;
        pz[static_cast<std::size_t>(zs[static_cast<std::size_t>(r)][c] - 1)] += 1.0;
      }
      for (double& q : px) q /= static_cast<double>(replicas);
      for (double& q : pz) q /= static_cast<double>(replicas);
      step.tv[c] = tv_distance(px, pz);
    }
    out.push_back(step);
  }
  return out;
}

}  // namespace trapsim
