#pragma once

// Continuous-time walk on the weighted torus. The skeleton is the uniform
// nearest-neighbor chain; at site x the walk rests for an exponential time
// with mean w(x) / theta before jumping. Trajectories are stored as
// (site, holding) segments; estimators that do not need the full path use
// streaming simulation instead.
//
// RNG discipline: every replica draws from counter-based streams keyed by
// (replica, purpose), so replicas are reproducible and order-independent.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "environment.hpp"
#include "lattice.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace trapsim {

inline constexpr std::uint64_t stream_walk_skeleton = 10;
inline constexpr std::uint64_t stream_walk_holding = 11;
inline constexpr std::uint64_t stream_walk_init = 12;

struct WalkConfig {
  const WField* field = nullptr;
  double theta = 1.0;  // time-scale divisor applied to every holding mean
  std::uint64_t seed = 0;
};

struct Segment {
  Site site = 0;
  double holding = 0.0;
};

struct Trajectory {
  Site start = 0;
  std::vector<Segment> segments;
  double total_time = 0.0;
};

// Jump count plus accumulated clock. S is non-decreasing and starts at 0.
struct ClockState {
  long long k = 0;
  double S = 0.0;
};

inline ClockState advance(ClockState c, double holding) {
  if (!(holding >= 0.0)) throw std::invalid_argument("holding must be non-negative");
  return ClockState{c.k + 1, c.S + holding};
}

inline ClockState clock_of(const Trajectory& t) {
  ClockState c;
  for (const auto& s : t.segments) c = advance(c, s.holding);
  return c;
}

// Hitting/return results carry an explicit censoring flag instead of a
// sentinel value. A censored result reports the time up to which the walk
// was observed without entering the target.
struct HitResult {
  double value = 0.0;
  bool censored = false;
};

namespace walk_detail {

inline void check_config(const WalkConfig& cfg) {
  if (cfg.field == nullptr) throw std::invalid_argument("walk config needs a field");
  if (cfg.field->spec.degenerate())
    throw std::invalid_argument("side length 2 not supported");
  if (!(cfg.theta > 0.0) || !std::isfinite(cfg.theta))
    throw std::invalid_argument("theta must be positive");
}

inline std::vector<char> make_mask(const TorusSpec& spec, const std::vector<Site>& sites) {
  std::vector<char> mask(static_cast<std::size_t>(spec.sites()), 0);
  for (Site s : sites) {
    check_site(spec, s);
    mask[static_cast<std::size_t>(s)] = 1;
  }
  return mask;
}

// Streaming simulator: current site, jump count, and fresh draws. Holdings
// are not accumulated here; callers own the clock.
class WalkSim {
 public:
  WalkSim(const WalkConfig& cfg, Site x0, std::uint64_t replica)
      : field_(cfg.field),
        theta_(cfg.theta),
        skeleton_(cfg.seed, make_stream(replica, stream_walk_skeleton)),
        holding_(cfg.seed, make_stream(replica, stream_walk_holding)),
        x_(x0),
        degree_(2 * cfg.field->spec.d) {
    check_site(field_->spec, x0);
  }

  Site site() const { return x_; }
  long long jumps() const { return k_; }

  double draw_holding() {
    double h = field_->w[static_cast<std::size_t>(x_)] / theta_ * holding_.exponential();
    if (!(h > 0.0)) throw std::runtime_error("non-positive trap weight");
    return h;
  }

  void jump() {
    Site nb[6];
    neighbor_sites(field_->spec, x_, nb);
    x_ = nb[skeleton_.below(static_cast<std::uint64_t>(degree_))];
    ++k_;
  }

 private:
  const WField* field_;
  double theta_;
  RngStream skeleton_;
  RngStream holding_;
  Site x_;
  long long k_ = 0;
  int degree_;
};

// Shallow floored regions can soak up millions of near-zero holdings before
// the clock moves. Estimator loops cap skeleton steps and censor.
inline long long step_guard(const TorusSpec& spec) {
  double n = static_cast<double>(spec.sites());
  double g = 1000.0 * n * std::max(1.0, std::log(n));
  return static_cast<long long>(g);
}

}  // namespace walk_detail

inline Trajectory simulate_walk(const WalkConfig& cfg, Site x0, double horizon,
                                std::uint64_t replica = 0) {
  walk_detail::check_config(cfg);
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw std::invalid_argument("horizon must be positive");
  walk_detail::WalkSim sim(cfg, x0, replica);
  Trajectory traj;
  traj.start = x0;
  double elapsed = 0.0;
  for (;;) {
    double h = sim.draw_holding();
    if (elapsed + h >= horizon) {
      traj.segments.push_back({sim.site(), horizon - elapsed});
      break;
    }
    traj.segments.push_back({sim.site(), h});
    elapsed += h;
    sim.jump();
  }
  traj.total_time = horizon;
  return traj;
}

// First entrance time of A along a stored path. Zero when the path starts
// inside A; censored at total_time when the path never enters A.
inline HitResult hitting_time(const Trajectory& traj, const std::vector<Site>& A) {
  if (A.empty()) throw std::invalid_argument("target set is empty");
  if (traj.segments.empty()) throw std::invalid_argument("empty trajectory");
  if (std::find(A.begin(), A.end(), traj.start) != A.end()) return {0.0, false};
  double elapsed = 0.0;
  for (const auto& s : traj.segments) {
    if (std::find(A.begin(), A.end(), s.site) != A.end()) return {elapsed, false};
    elapsed += s.holding;
  }
  return {traj.total_time, true};
}

// First entrance of A after the first jump.
inline HitResult return_time(const Trajectory& traj, const std::vector<Site>& A) {
  if (A.empty()) throw std::invalid_argument("target set is empty");
  if (traj.segments.empty()) throw std::invalid_argument("empty trajectory");
  double elapsed = traj.segments.front().holding;
  for (std::size_t i = 1; i < traj.segments.size(); ++i) {
    if (std::find(A.begin(), A.end(), traj.segments[i].site) != A.end())
      return {elapsed, false};
    elapsed += traj.segments[i].holding;
  }
  return {traj.total_time, true};
}

// Streaming hitting time with a step guard; avoids storing long paths.
inline HitResult sim_hitting_time(const WalkConfig& cfg, Site x0,
                                  const std::vector<Site>& A, double horizon,
                                  std::uint64_t replica = 0) {
  walk_detail::check_config(cfg);
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw std::invalid_argument("horizon must be positive");
  if (A.empty()) throw std::invalid_argument("target set is empty");
  const TorusSpec& spec = cfg.field->spec;
  std::vector<char> mask = walk_detail::make_mask(spec, A);
  if (mask[static_cast<std::size_t>(x0)]) return {0.0, false};
  walk_detail::WalkSim sim(cfg, x0, replica);
  const long long guard = walk_detail::step_guard(spec);
  double elapsed = 0.0;
  while (sim.jumps() < guard) {
    double h = sim.draw_holding();
    if (elapsed + h >= horizon) return {horizon, true};
    elapsed += h;
    sim.jump();
    if (mask[static_cast<std::size_t>(sim.site())]) return {elapsed, false};
  }
  return {elapsed, true};
}

// Position at clock time t, stopping once the accumulated clock would pass t.
inline Site sim_site_at(const WalkConfig& cfg, Site x0, double t, std::uint64_t replica = 0) {
  walk_detail::check_config(cfg);
  if (!(t >= 0.0) || !std::isfinite(t))
    throw std::invalid_argument("time must be non-negative");
  walk_detail::WalkSim sim(cfg, x0, replica);
  const long long guard = walk_detail::step_guard(cfg.field->spec);
  double S = 0.0;
  while (sim.jumps() < guard) {
    double h = sim.draw_holding();
    if (S + h > t) return sim.site();
    S += h;
    sim.jump();
  }
  throw std::runtime_error("step guard exceeded before reaching the requested time");
}

// Skeleton-only fast path: does the walk enter A before B? Holding times
// never matter for this event, so no clock draws are made.
inline bool sim_hits_before(const WalkConfig& cfg, Site x0, const std::vector<Site>& A,
                            const std::vector<Site>& B, std::uint64_t replica = 0) {
  walk_detail::check_config(cfg);
  if (A.empty() || B.empty()) throw std::invalid_argument("target set is empty");
  const TorusSpec& spec = cfg.field->spec;
  std::vector<char> in_a = walk_detail::make_mask(spec, A);
  std::vector<char> in_b = walk_detail::make_mask(spec, B);
  for (Site s : A)
    if (in_b[static_cast<std::size_t>(s)])
      throw std::invalid_argument("target sets overlap");
  if (in_a[static_cast<std::size_t>(x0)]) return true;
  if (in_b[static_cast<std::size_t>(x0)]) return false;
  RngStream skel(cfg.seed, make_stream(replica, stream_walk_skeleton));
  Site nb[6];
  Site x = x0;
  const std::uint64_t degree = static_cast<std::uint64_t>(2 * spec.d);
  for (long long k = 0; k < (1LL << 40); ++k) {
    neighbor_sites(spec, x, nb);
    x = nb[skel.below(degree)];
    if (in_a[static_cast<std::size_t>(x)]) return true;
    if (in_b[static_cast<std::size_t>(x)]) return false;
  }
  throw std::runtime_error("absorption never happened");
}

// Lebesgue time spent in A before T. A may be empty (yields 0).
inline double occupation_time(const Trajectory& traj, const std::vector<Site>& A, double T) {
  if (!(T >= 0.0) || T > traj.total_time * (1.0 + 1e-12) + 1e-300)
    throw std::invalid_argument("T must lie within the trajectory");
  std::vector<Site> sorted(A);
  std::sort(sorted.begin(), sorted.end());
  Accum occ;
  double elapsed = 0.0;
  for (const auto& s : traj.segments) {
    if (elapsed >= T) break;
    double len = std::min(s.holding, T - elapsed);
    if (std::binary_search(sorted.begin(), sorted.end(), s.site)) occ.add(len);
    elapsed += s.holding;
  }
  return occ.get();
}

// Watch the path only while it sits in F: excise everything else and glue
// consecutive visits to the same F-site together.
inline Trajectory trace(const Trajectory& traj, const std::vector<Site>& F) {
  if (F.empty()) throw std::invalid_argument("trace set is empty");
  if (traj.segments.empty()) throw std::invalid_argument("empty trajectory");
  std::vector<Site> sorted(F);
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("duplicate site in trace set");
  Trajectory out;
  double total = 0.0;
  for (const auto& s : traj.segments) {
    if (!std::binary_search(sorted.begin(), sorted.end(), s.site)) continue;
    total += s.holding;
    if (!out.segments.empty() && out.segments.back().site == s.site)
      out.segments.back().holding += s.holding;
    else
      out.segments.push_back(s);
  }
  if (out.segments.empty()) throw std::runtime_error("path never visits the trace set");
  out.start = out.segments.front().site;
  out.total_time = total;
  return out;
}

struct TraceRateEstimate {
  std::vector<Site> sites;        // index order for the matrices below
  std::vector<double> rate;       // row-major; NaN where no time was observed
  std::vector<double> se;         // large-sample standard error, same layout
  std::vector<double> time;       // observed exposure per site
  std::vector<long long> jumps;   // row-major transition counts
  long long total_jumps = 0;

  double at(std::size_t i, std::size_t j) const { return rate[i * sites.size() + j]; }
  double se_at(std::size_t i, std::size_t j) const { return se[i * sites.size() + j]; }
  bool defined(std::size_t i) const { return time[i] > 0.0; }
};

// Pooled occupation/transition estimator over paths already traced on F:
// rate(i, j) = (# observed i -> j jumps) / (total time at i).
inline TraceRateEstimate estimate_trace_rates(const std::vector<Trajectory>& paths,
                                              const std::vector<Site>& F) {
  if (F.empty()) throw std::invalid_argument("trace set is empty");
  const std::size_t m = F.size();
  std::vector<Site> sorted(F);
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("duplicate site in trace set");
  auto index_of = [&](Site s) -> std::size_t {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), s);
    if (it == sorted.end() || *it != s)
      throw std::invalid_argument("path leaves the trace set");
    std::size_t k = 0;
    while (F[k] != s) ++k;
    return k;
  };
  TraceRateEstimate est;
  est.sites = F;
  est.rate.assign(m * m, 0.0);
  est.se.assign(m * m, 0.0);
  est.jumps.assign(m * m, 0);
  est.time.assign(m, 0.0);
  std::vector<Accum> exposure(m);
  for (const auto& p : paths) {
    if (p.segments.empty()) throw std::invalid_argument("empty trajectory");
    std::size_t prev = index_of(p.segments.front().site);
    exposure[prev].add(p.segments.front().holding);
    for (std::size_t k = 1; k < p.segments.size(); ++k) {
      std::size_t cur = index_of(p.segments[k].site);
      if (cur != prev) {
        est.jumps[prev * m + cur] += 1;
        est.total_jumps += 1;
      }
      exposure[cur].add(p.segments[k].holding);
      prev = cur;
    }
  }
  for (std::size_t i = 0; i < m; ++i) est.time[i] = exposure[i].get();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (est.time[i] > 0.0) {
        double n = static_cast<double>(est.jumps[i * m + j]);
        est.rate[i * m + j] = n / est.time[i];
        est.se[i * m + j] = std::sqrt(n) / est.time[i];
      } else {
        est.rate[i * m + j] = nan;
        est.se[i * m + j] = nan;
      }
    }
  }
  return est;
}

struct StayResult {
  double p_hat = 0.0;      // estimated escape probability at time t
  double se = 0.0;
  long long replicas = 0;
  long long guard_trips = 0;  // replicas cut off by the step guard
};

// Fraction of replicas found at distance >= ell from the rank-j trap at
// time t. Two-dimensional unscaled walk; replicas run on worker threads
// with per-slot outputs, so thread count never changes the estimate.
inline StayResult stay_experiment(const WField& field, std::uint64_t seed, int rank,
                                  double t, double ell, long long replicas,
                                  double theta = 1.0) {
  if (field.spec.d != 2) throw std::invalid_argument("stay experiment is two-dimensional");
  if (!(t > 0.0)) throw std::invalid_argument("t must be positive");
  if (!(ell > 0.0)) throw std::invalid_argument("ell must be positive");
  if (replicas < 1) throw std::invalid_argument("need at least one replica");
  WalkConfig cfg{&field, theta, seed};
  walk_detail::check_config(cfg);
  std::vector<Site> ranked = rank_traps(field, rank);
  Site x_j = ranked[static_cast<std::size_t>(rank - 1)];
  StayResult out;
  out.replicas = replicas;
  const double half = static_cast<double>(field.spec.N / 2);
  if (ell > std::sqrt(static_cast<double>(field.spec.d)) * half) return out;
  const long long guard = walk_detail::step_guard(field.spec);
  std::vector<char> moved(static_cast<std::size_t>(replicas), 0);
  std::vector<char> guarded(static_cast<std::size_t>(replicas), 0);
  parallel_for(static_cast<std::size_t>(replicas), [&](std::size_t r) {
    walk_detail::WalkSim sim(cfg, x_j, static_cast<std::uint64_t>(r));
    double S = 0.0;
    while (sim.jumps() < guard) {
      double h = sim.draw_holding();
      if (S + h > t) break;
      S += h;
      sim.jump();
    }
    if (sim.jumps() >= guard) guarded[r] = 1;
    if (euclidean_distance(field.spec, sim.site(), x_j) >= ell) moved[r] = 1;
  });
  long long hits = 0, trips = 0;
  for (long long r = 0; r < replicas; ++r) {
    hits += moved[static_cast<std::size_t>(r)];
    trips += guarded[static_cast<std::size_t>(r)];
  }
  out.p_hat = static_cast<double>(hits) / static_cast<double>(replicas);
  out.se = std::sqrt(out.p_hat * (1.0 - out.p_hat) / static_cast<double>(replicas));
  out.guard_trips = trips;
  return out;
}

// --- binary trajectory files ------------------------------------------------
//
// Layout (little-endian): 4-byte magic "TRAJ", u32 d, u32 N, u32 record
// count, then count records of (u32 flat site, f64 holding).

namespace walk_detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& buf, double x) {
  std::uint64_t v;
  std::memcpy(&v, &x, 8);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const std::string& buf, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
  return v;
}

inline double get_f64(const std::string& buf, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
  double x;
  std::memcpy(&x, &v, 8);
  return x;
}

}  // namespace walk_detail

inline void save_trajectory(const std::string& path, const TorusSpec& spec,
                            const Trajectory& traj) {
  if (traj.segments.empty()) throw std::invalid_argument("empty trajectory");
  if (traj.segments.size() > 0xFFFFFFFFull)
    throw std::invalid_argument("trajectory too long for this format");
  std::string buf;
  buf.reserve(16 + 12 * traj.segments.size());
  buf += "TRAJ";
  walk_detail::put_u32(buf, static_cast<std::uint32_t>(spec.d));
  walk_detail::put_u32(buf, static_cast<std::uint32_t>(spec.N));
  walk_detail::put_u32(buf, static_cast<std::uint32_t>(traj.segments.size()));
  for (const auto& s : traj.segments) {
    check_site(spec, s.site);
    walk_detail::put_u32(buf, static_cast<std::uint32_t>(s.site));
    walk_detail::put_f64(buf, s.holding);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open trajectory file for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("short write: " + path);
}

struct TrajectoryFile {
  int d = 1;
  int N = 2;
  Trajectory traj;
};

inline TrajectoryFile load_trajectory(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trajectory file: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 16 || buf.compare(0, 4, "TRAJ") != 0)
    throw std::runtime_error("corrupt trajectory file: bad header");
  TrajectoryFile f;
  f.d = static_cast<int>(walk_detail::get_u32(buf, 4));
  f.N = static_cast<int>(walk_detail::get_u32(buf, 8));
  std::uint32_t count = walk_detail::get_u32(buf, 12);
  if (f.d < 1 || f.d > 3 || f.N < 2)
    throw std::runtime_error("corrupt trajectory file: bad dimensions");
  if (buf.size() != 16 + 12ull * count)
    throw std::runtime_error("corrupt trajectory file: length mismatch");
  TorusSpec spec{f.d, f.N};
  double total = 0.0;
  f.traj.segments.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::size_t at = 16 + 12ull * i;
    Site site = static_cast<Site>(walk_detail::get_u32(buf, at));
    double holding = walk_detail::get_f64(buf, at + 4);
    if (site >= spec.sites())
      throw std::runtime_error("corrupt trajectory file: site out of range");
    if (!std::isfinite(holding) || holding < 0.0)
      throw std::runtime_error("corrupt trajectory file: bad holding");
    f.traj.segments.push_back({site, holding});
    total += holding;
  }
  if (count > 0) f.traj.start = f.traj.segments.front().site;
  f.traj.total_time = total;
  return f;
}

// Text digest of a stored trajectory: header, segment count, total time and
// the ten most-occupied sites (holding-time ranking, ties by site index).
inline std::string trajectory_report(const TrajectoryFile& tf) {
  TorusSpec spec{tf.d, tf.N};
  char line[160];
  std::string out;
  std::snprintf(line, sizeof line, "torus: d=%d N=%d\n", tf.d, tf.N);
  out += line;
  std::snprintf(line, sizeof line, "start: %lld\n", static_cast<long long>(tf.traj.start));
  out += line;
  std::snprintf(line, sizeof line, "segments: %zu\n", tf.traj.segments.size());
  out += line;
  std::snprintf(line, sizeof line, "total time: %.17g\n", tf.traj.total_time);
  out += line;

  std::vector<double> occupation(static_cast<std::size_t>(spec.sites()), 0.0);
  std::vector<long long> visits(occupation.size(), 0);
  for (const Segment& s : tf.traj.segments) {
    occupation[static_cast<std::size_t>(s.site)] += s.holding;
    ++visits[static_cast<std::size_t>(s.site)];
  }
  std::vector<Site> order;
  for (std::size_t i = 0; i < occupation.size(); ++i)
    if (visits[i] > 0) order.push_back(static_cast<Site>(i));
  std::sort(order.begin(), order.end(), [&](Site a, Site b) {
    double ta = occupation[static_cast<std::size_t>(a)];
    double tb = occupation[static_cast<std::size_t>(b)];
    if (ta != tb) return ta > tb;
    return a < b;
  });
  std::size_t top = std::min<std::size_t>(order.size(), 10);
  std::snprintf(line, sizeof line, "top %zu sites by occupation:\n", top);
  out += line;
  for (std::size_t k = 0; k < top; ++k) {
    Site s = order[k];
    Coord c = site_coord(spec, s);
    std::string pos = std::to_string(c[0]);
    for (int i = 1; i < spec.d; ++i) pos += "," + std::to_string(c[i]);
    std::snprintf(line, sizeof line, "  %2zu. site %lld (%s)  time %.17g  visits %lld\n",
                  k + 1, static_cast<long long>(s), pos.c_str(),
                  occupation[static_cast<std::size_t>(s)],
                  visits[static_cast<std::size_t>(s)]);
    out += line;
  }
  return out;
}

}  // namespace trapsim
