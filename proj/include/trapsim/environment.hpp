#pragma once

// The random trap environment: a truncated Poisson point process of atoms
// (position, weight) on the unit torus plus an optional uniform background,
// and its per-cube discretization W^N_x used by every chain and experiment.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "lattice.hpp"
#include "rng.hpp"

namespace trapsim {

// compensated (Neumaier) accumulator
struct Accum {
  double s = 0, c = 0;
  void add(double x) {
    double t = s + x;
    if (std::fabs(s) >= std::fabs(x))
      c += (s - t) + x;
    else
      c += (x - t) + s;
    s = t;
  }
  double get() const { return s + c; }
};

struct TrapAtom {
  std::array<double, 3> pos{0, 0, 0};  // in [0,1)^d
  double w = 0;                        // strictly positive
};

struct TrapMeasure {
  int d = 1;
  std::vector<TrapAtom> atoms;
  double background = 0;  // constant density, mass background per unit volume

  double atom_mass() const {
    Accum a;
    for (const auto& t : atoms) a.add(t.w);
    return a.get();
  }
  double total_mass() const { return atom_mass() + background; }
};

struct PppConfig {
  double alpha = 0.5;   // stability index in (0,1)
  double w_min = 1e-4;  // truncation threshold for atom weights
  std::uint64_t seed = 0;

  void validate() const {
    if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("alpha must be in (0,1)");
    if (!(w_min > 0)) throw std::invalid_argument("w_min must be positive");
  }
};

// mean atom count of the truncated process
inline double expected_atom_count(const PppConfig& cfg) {
  return std::pow(cfg.w_min, -cfg.alpha);
}

// expected total weight below the truncation threshold (per unit volume)
inline double discarded_mass_expectation(double alpha, double w_min) {
  return alpha / (1.0 - alpha) * std::pow(w_min, 1.0 - alpha);
}

// Atom count K ~ Poisson(w_min^{-alpha}); positions i.i.d. uniform on the
// torus; weights i.i.d. w_min * U^{-1/alpha} (the intensity restricted to
// w > w_min). Deterministic given cfg.seed.
inline TrapMeasure sample_ppp_environment(const PppConfig& cfg, int d, double background = 0.0) {
  cfg.validate();
  if (d < 1 || d > 3) throw std::invalid_argument("dimension out of range");
  if (background < 0) throw std::invalid_argument("background must be >= 0");
  double mean = expected_atom_count(cfg);
  if (!(mean < 1e9)) throw std::invalid_argument("w_min too small: atom count infeasible");
  RngStream count_rng(cfg.seed, make_stream(0, 0));
  RngStream pos_rng(cfg.seed, make_stream(0, 1));
  RngStream w_rng(cfg.seed, make_stream(0, 2));
  long long k = count_rng.poisson(mean);
  TrapMeasure m;
  m.d = d;
  m.background = background;
  m.atoms.resize(static_cast<std::size_t>(k));
  for (auto& a : m.atoms) {
    for (int i = 0; i < d; ++i) a.pos[i] = pos_rng.u01();
    a.w = cfg.w_min * std::pow(w_rng.u01o(), -1.0 / cfg.alpha);
  }
  return m;
}

struct WField {
  TorusSpec spec;
  std::vector<double> w;   // per-site cube masses, floored
  double w_floor = 0;      // value substituted for empty cubes
  double total = 0;        // pre-floor mass: atoms + background
  std::int64_t floored = 0;

  // post-floor mass of the simulated field
  double mass() const {
    Accum a;
    for (double v : w) a.add(v);
    return a.get();
  }
};

// Cube masses W^N_x = sum of atom weights in the cube + background/N^d.
// Zero cubes get w_floor; w_floor < 0 selects the default 1e-9 * max mass.
inline WField discretize(const TrapMeasure& m, const TorusSpec& spec, double w_floor = -1.0) {
  if (m.d != spec.d) throw std::invalid_argument("measure dimension mismatch");
  const std::int64_t n = spec.sites();
  std::vector<double> sums(static_cast<std::size_t>(n), 0.0);
  std::vector<double> comp(static_cast<std::size_t>(n), 0.0);
  const double cell = m.background / static_cast<double>(n);
  for (const auto& a : m.atoms) {
    if (!(a.w > 0)) throw std::invalid_argument("atom weight must be positive");
    Site x = cube_index(spec, a.pos);
    double& s = sums[static_cast<std::size_t>(x)];
    double& c = comp[static_cast<std::size_t>(x)];
    double t = s + a.w;
    if (std::fabs(s) >= std::fabs(a.w))
      c += (s - t) + a.w;
    else
      c += (a.w - t) + s;
    s = t;
  }
  WField f;
  f.spec = spec;
  f.w.resize(static_cast<std::size_t>(n));
  Accum tot;
  double maxv = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    double v = sums[static_cast<std::size_t>(i)] + comp[static_cast<std::size_t>(i)] + cell;
    f.w[static_cast<std::size_t>(i)] = v;
    tot.add(v);
    maxv = std::max(maxv, v);
  }
  f.total = tot.get();
  if (maxv == 0) throw std::runtime_error("non-positive environment");
  f.w_floor = w_floor < 0 ? 1e-9 * maxv : w_floor;
  for (auto& v : f.w) {
    if (v == 0) {
      if (f.w_floor == 0) throw std::runtime_error("non-positive environment");
      v = f.w_floor;
      ++f.floored;
    }
  }
  return f;
}

// tau^N_x = N^{d/alpha} W^N_x; under the untruncated process this law does
// not depend on N (self-similarity of the subordinator)
inline std::vector<double> tau_field(const WField& f, double alpha) {
  if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("alpha must be in (0,1)");
  double scale = std::pow(static_cast<double>(f.spec.N),
                          static_cast<double>(f.spec.d) / alpha);
  std::vector<double> tau(f.w.size());
  for (std::size_t i = 0; i < f.w.size(); ++i) tau[i] = scale * f.w[i];
  return tau;
}

// environment regularity statistic N^{-(2+gamma0)} sum_x 1/W^N_x
inline double check_h1(const WField& f, double gamma0) {
  if (!(gamma0 > 0)) throw std::invalid_argument("gamma0 must be positive");
  Accum s;
  for (double v : f.w) {
    if (!(v > 0)) throw std::runtime_error("check_h1: non-positive field entry");
    s.add(1.0 / v);
  }
  return std::pow(static_cast<double>(f.spec.N), -(2.0 + gamma0)) * s.get();
}

// top-M sites by cube mass, ties broken by ascending flat index
inline std::vector<Site> rank_traps(const WField& f, std::int64_t M) {
  const std::int64_t n = f.spec.sites();
  if (M < 1 || M > n) throw std::invalid_argument("rank_traps: M out of range");
  std::vector<Site> idx(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::sort(idx.begin(), idx.end(), [&](Site a, Site b) {
    double wa = f.w[static_cast<std::size_t>(a)], wb = f.w[static_cast<std::size_t>(b)];
    if (wa != wb) return wa > wb;
    return a < b;
  });
  idx.resize(static_cast<std::size_t>(M));
  return idx;
}

}  // namespace trapsim
