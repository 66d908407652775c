#pragma once

// Exact potential theory for the trap chain and its embedded walk:
// harmonic functions, capacities, trace rates, hitting expectations and
// box Green's functions. Everything is computed by linear solves (or a
// closed spectral sum for boxes); no Monte Carlo in this header.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "environment.hpp"
#include "lattice.hpp"
#include "linsolve.hpp"

namespace trapsim {

// chain data derived from a weight field: holding rate lambda(x) = 1/W_x,
// stationary law nu(x) = W_x / sum W, uniform nearest-neighbor skeleton
struct ChainSpec {
  TorusSpec spec;
  WField field;
  std::vector<double> lambda;
  std::vector<double> nu;
  double mass = 0;  // sum of field values
};

inline ChainSpec make_chain(const WField& f) {
  ChainSpec c;
  c.spec = f.spec;
  c.field = f;
  c.mass = f.mass();
  if (!(c.mass > 0)) throw std::invalid_argument("make_chain: empty field");
  c.lambda.resize(f.w.size());
  c.nu.resize(f.w.size());
  for (std::size_t i = 0; i < f.w.size(); ++i) {
    if (!(f.w[i] > 0)) throw std::invalid_argument("make_chain: non-positive weight");
    c.lambda[i] = 1.0 / f.w[i];
    c.nu[i] = f.w[i] / c.mass;
  }
  return c;
}

inline WField uniform_field(const TorusSpec& spec, double value = 1.0) {
  if (!(value > 0)) throw std::invalid_argument("uniform_field: value must be positive");
  WField f;
  f.spec = spec;
  f.w.assign(static_cast<std::size_t>(spec.sites()), value);
  f.total = value * static_cast<double>(spec.sites());
  f.w_floor = 0;
  return f;
}

namespace detail {

inline void check_sites(const TorusSpec& spec, const std::vector<Site>& s, const char* who) {
  if (s.empty()) throw std::invalid_argument(std::string(who) + ": empty site set");
  for (Site x : s) check_site(spec, x);
}

inline bool disjoint(const std::vector<Site>& a, const std::vector<Site>& b) {
  for (Site x : a)
    for (Site y : b)
      if (x == y) return false;
  return true;
}

}  // namespace detail

struct DirichletSolution {
  std::vector<Site> A, B;
  std::vector<double> f;  // 1 on A, 0 on B, harmonic elsewhere
  double residual = 0;    // max |sum_nb f - 2d f| over free sites
};

// P_x[H(A) < H(B)] for the embedded walk (holding times do not matter)
inline DirichletSolution harmonic(const ChainSpec& chain, const std::vector<Site>& A,
                                  const std::vector<Site>& B,
                                  SolveMethod method = SolveMethod::automatic) {
  detail::check_sites(chain.spec, A, "harmonic A");
  detail::check_sites(chain.spec, B, "harmonic B");
  if (!detail::disjoint(A, B)) throw std::invalid_argument("harmonic: A and B intersect");
  const std::int64_t n = chain.spec.sites();
  std::vector<char> fixed(static_cast<std::size_t>(n), 0);
  std::vector<double> val(static_cast<std::size_t>(n), 0.0);
  std::vector<double> rhs(static_cast<std::size_t>(n), 0.0);
  for (Site x : A) {
    fixed[static_cast<std::size_t>(x)] = 1;
    val[static_cast<std::size_t>(x)] = 1.0;
  }
  for (Site x : B) fixed[static_cast<std::size_t>(x)] = 1;
  DirichletSolution sol;
  sol.A = A;
  sol.B = B;
  sol.f = laplace_solve(chain.spec, fixed, val, rhs, method);
  for (double& v : sol.f) v = std::min(1.0, std::max(0.0, v));
  const int deg = 2 * chain.spec.d;
  Site nb[6];
  double worst = 0;
  for (std::int64_t x = 0; x < n; ++x) {
    if (fixed[static_cast<std::size_t>(x)]) continue;
    neighbor_sites(chain.spec, x, nb);
    double s = -deg * sol.f[static_cast<std::size_t>(x)];
    for (int k = 0; k < deg; ++k) s += sol.f[static_cast<std::size_t>(nb[k])];
    worst = std::max(worst, std::fabs(s));
  }
  sol.residual = worst;
  if (worst > 1e-10 * deg)
    throw std::runtime_error("harmonic: residual " + std::to_string(worst) +
                             " exceeds tolerance");
  return sol;
}

// Dirichlet sum (1/4d) sum_x sum_{y~x} [f(y)-f(x)]^2 at the harmonic
// minimizer; the skeleton's conductances are uniform so no weights enter
inline double capacity_skeleton(const ChainSpec& chain, const std::vector<Site>& A,
                                const std::vector<Site>& B,
                                SolveMethod method = SolveMethod::automatic) {
  DirichletSolution sol = harmonic(chain, A, B, method);
  const int deg = 2 * chain.spec.d;
  const std::int64_t n = chain.spec.sites();
  Site nb[6];
  Accum acc;
  for (std::int64_t x = 0; x < n; ++x) {
    neighbor_sites(chain.spec, x, nb);
    double fx = sol.f[static_cast<std::size_t>(x)];
    for (int k = 0; k < deg; ++k) {
      double df = sol.f[static_cast<std::size_t>(nb[k])] - fx;
      acc.add(df * df);
    }
  }
  return acc.get() / (2.0 * deg);
}

// chain capacity: skeleton capacity divided by the total field mass
inline double capacity_chain(const ChainSpec& chain, const std::vector<Site>& A,
                             const std::vector<Site>& B,
                             SolveMethod method = SolveMethod::automatic) {
  return capacity_skeleton(chain, A, B, method) / chain.mass;
}

// jump rates of the chain watched only on F:
// r(x,y) = lambda(x) (1/2d) sum_{z~x} [ 1{z=y} + 1{z not in F} h_y(z) ]
struct TraceRates {
  std::vector<Site> sites;  // F in the order given
  std::vector<double> r;    // row-major |F| x |F|, zero diagonal

  double at(std::size_t i, std::size_t j) const { return r[i * sites.size() + j]; }
};

inline TraceRates trace_rates_exact(const ChainSpec& chain, const std::vector<Site>& F,
                                    SolveMethod method = SolveMethod::automatic) {
  detail::check_sites(chain.spec, F, "trace_rates F");
  if (F.size() < 2) throw std::invalid_argument("trace_rates: need |F| >= 2");
  for (std::size_t i = 0; i < F.size(); ++i)
    for (std::size_t j = i + 1; j < F.size(); ++j)
      if (F[i] == F[j]) throw std::invalid_argument("trace_rates: duplicate site in F");
  const std::size_t M = F.size();
  const int deg = 2 * chain.spec.d;
  std::vector<char> in_f(static_cast<std::size_t>(chain.spec.sites()), 0);
  for (Site x : F) in_f[static_cast<std::size_t>(x)] = 1;
  TraceRates tr;
  tr.sites = F;
  tr.r.assign(M * M, 0.0);
  Site nb[6];
  for (std::size_t jy = 0; jy < M; ++jy) {
    std::vector<Site> rest;
    for (std::size_t j = 0; j < M; ++j)
      if (j != jy) rest.push_back(F[j]);
    DirichletSolution h = harmonic(chain, {F[jy]}, rest, method);
    for (std::size_t ix = 0; ix < M; ++ix) {
      if (ix == jy) continue;
      Site x = F[ix];
      neighbor_sites(chain.spec, x, nb);
      double s = 0;
      for (int k = 0; k < deg; ++k) {
        Site z = nb[k];
        if (z == F[jy])
          s += 1.0;
        else if (!in_f[static_cast<std::size_t>(z)])
          s += h.f[static_cast<std::size_t>(z)];
      }
      tr.r[ix * M + jy] = chain.lambda[static_cast<std::size_t>(x)] * s / deg;
    }
  }
  return tr;
}

struct IdentityPair {
  double lhs = 0;
  double rhs = 0;
};

// mean hitting time of A for the chain watched on F, against the
// capacity representation (1/Cap(y,A)) sum_{z in F} nu(z) P_z[H(y)<H(A)]
inline IdentityPair expected_hitting_identity(const ChainSpec& chain, const std::vector<Site>& F,
                                              Site y, const std::vector<Site>& A,
                                              SolveMethod method = SolveMethod::automatic) {
  detail::check_sites(chain.spec, F, "identity F");
  detail::check_sites(chain.spec, A, "identity A");
  for (Site a : A)
    if (std::find(F.begin(), F.end(), a) == F.end())
      throw std::invalid_argument("identity: A must be a subset of F");
  if (std::find(F.begin(), F.end(), y) == F.end() ||
      std::find(A.begin(), A.end(), y) != A.end())
    throw std::invalid_argument("identity: need y in F \\ A");

  TraceRates tr = trace_rates_exact(chain, F, method);
  const std::size_t M = F.size();
  std::vector<char> in_a(M, 0);
  for (std::size_t i = 0; i < M; ++i)
    if (std::find(A.begin(), A.end(), F[i]) != A.end()) in_a[i] = 1;
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < M; ++i)
    if (!in_a[i]) free.push_back(i);
  const std::size_t nf = free.size();
  std::vector<double> mat(nf * nf, 0.0), rhs(nf, -1.0);
  for (std::size_t a = 0; a < nf; ++a) {
    std::size_t i = free[a];
    double total = 0;
    for (std::size_t j = 0; j < M; ++j) total += tr.at(i, j);
    mat[a * nf + a] = -total;
    for (std::size_t b = 0; b < nf; ++b) {
      std::size_t j = free[b];
      if (j != i) mat[a * nf + b] += tr.at(i, j);
    }
  }
  std::vector<double> u = lu_solve(std::move(mat), static_cast<int>(nf), rhs);
  IdentityPair out;
  for (std::size_t a = 0; a < nf; ++a)
    if (F[free[a]] == y) out.lhs = u[a];

  DirichletSolution h = harmonic(chain, {y}, A, method);
  Accum s;
  for (Site z : F) s.add(chain.nu[static_cast<std::size_t>(z)] * h.f[static_cast<std::size_t>(z)]);
  out.rhs = s.get() / capacity_chain(chain, {y}, A, method);
  return out;
}

// escape probability against its capacity representation:
// P_y[H(A) < tau(y)] = Cap(A,{y}) / (lambda(y) nu(y))
inline IdentityPair escape_identity(const ChainSpec& chain, Site y, const std::vector<Site>& A,
                                    SolveMethod method = SolveMethod::automatic) {
  detail::check_sites(chain.spec, A, "escape A");
  check_site(chain.spec, y);
  for (Site a : A)
    if (a == y) throw std::invalid_argument("escape: y must not lie in A");
  DirichletSolution h = harmonic(chain, A, {y}, method);
  const int deg = 2 * chain.spec.d;
  Site nb[6];
  neighbor_sites(chain.spec, y, nb);
  double s = 0;
  for (int k = 0; k < deg; ++k) s += h.f[static_cast<std::size_t>(nb[k])];
  IdentityPair out;
  out.lhs = s / deg;
  out.rhs = capacity_chain(chain, A, {y}, method) /
            (chain.lambda[static_cast<std::size_t>(y)] * chain.nu[static_cast<std::size_t>(y)]);
  return out;
}

// exact E_x[H(y)]; chain_time weights each visit by the local holding
// mean, otherwise the count is in skeleton jumps
inline double mean_hitting_torus(const ChainSpec& chain, Site x, Site y, bool chain_time = true,
                                 SolveMethod method = SolveMethod::automatic) {
  check_site(chain.spec, x);
  check_site(chain.spec, y);
  if (x == y) return 0.0;
  const std::int64_t n = chain.spec.sites();
  const int deg = 2 * chain.spec.d;
  std::vector<char> fixed(static_cast<std::size_t>(n), 0);
  fixed[static_cast<std::size_t>(y)] = 1;
  std::vector<double> val(static_cast<std::size_t>(n), 0.0);
  std::vector<double> rhs(static_cast<std::size_t>(n));
  for (std::int64_t z = 0; z < n; ++z)
    rhs[static_cast<std::size_t>(z)] =
        chain_time ? -deg * chain.field.w[static_cast<std::size_t>(z)] : -static_cast<double>(deg);
  std::vector<double> u = laplace_solve(chain.spec, fixed, val, rhs, method);
  return u[static_cast<std::size_t>(x)];
}

// ---- box Green's functions (closed spectral sums) ----
// The walk is killed on first reaching the ring |x|_inf = l, so the free
// region is the open box {|x|_inf < l}. Dirichlet eigenvectors of the
// free region are products of sines, and only odd modes load the center:
//   G_l(0,0) = l^{-dim} sum_{odd m_1..m_dim} 1 / (1 - mean_i cos(pi m_i / 2l))

// expected visits to the center of a (2l+1)^2 box before exit
inline double green_box_2d(int l) {
  if (l < 1) throw std::invalid_argument("green_box_2d: l must be >= 1");
  std::vector<double> ct;
  ct.reserve(static_cast<std::size_t>(l));
  for (int m = 1; m < 2 * l; m += 2) ct.push_back(std::cos(M_PI * m / (2.0 * l)));
  Accum g;
  for (double ca : ct)
    for (double cb : ct) g.add(1.0 / (1.0 - 0.5 * (ca + cb)));
  return g.get() / (static_cast<double>(l) * l);
}

// escape-probability estimate 1/G_L(0,0) for the three-dimensional walk
// killed on exiting the (2L+1)^3 box
inline double escape_probability_vd(int d, int L) {
  if (d != 3) throw std::invalid_argument("escape_probability_vd: d = 3 only");
  if (L < 8) throw std::invalid_argument("escape_probability_vd: L must be >= 8");
  std::vector<double> ct;
  ct.reserve(static_cast<std::size_t>(L));
  for (int m = 1; m < 2 * L; m += 2) ct.push_back(std::cos(M_PI * m / (2.0 * L)));
  Accum g;
  for (double ca : ct)
    for (double cb : ct) {
      double partial = ca + cb;
      for (double cc : ct) g.add(1.0 / (1.0 - (partial + cc) / 3.0));
    }
  double green = g.get() / (static_cast<double>(L) * L * L);
  return 1.0 / green;
}

// Richardson extrapolation of the box estimates in 1/L: fits
// v(L) = v + c1/L + c2/L^2 through L, L/2 and L/4
inline double escape_probability_vd_extrapolated(int d, int L) {
  if (L < 32 || L % 4 != 0)
    throw std::invalid_argument("escape_probability_vd_extrapolated: need L >= 32, 4 | L");
  double v1 = escape_probability_vd(d, L / 4);
  double v2 = escape_probability_vd(d, L / 2);
  double v3 = escape_probability_vd(d, L);
  // with h = 1/L: nodes 4h, 2h, h; eliminate both correction terms
  return (8.0 * v3 - 6.0 * v2 + v1) / 3.0;
}

}  // namespace trapsim
