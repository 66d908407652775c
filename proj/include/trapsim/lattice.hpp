#pragma once

// Geometry of the discrete torus: dimensions 1..3, N sites per side.
// Sites are addressed by a flat row-major index in [0, N^d); all hot
// loops operate on flat indices.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace trapsim {

using Site = std::int64_t;
using Coord = std::array<int, 3>;  // only the first d entries are used

struct TorusSpec {
  int d = 1;
  int N = 2;

  TorusSpec() = default;
  TorusSpec(int d_, int N_) : d(d_), N(N_) {
    if (d < 1 || d > 3) throw std::invalid_argument("dimension out of range");
    if (N < 2) throw std::invalid_argument("side length must be >= 2");
  }

  std::int64_t sites() const {
    std::int64_t n = 1;
    for (int i = 0; i < d; ++i) n *= N;
    return n;
  }

  // N = 2 is allowed but degenerate: the two neighbors of a site along an
  // axis coincide, so the neighbor list contains duplicates.
  bool degenerate() const { return N == 2; }

  bool operator==(const TorusSpec& o) const { return d == o.d && N == o.N; }
};

inline void check_site(const TorusSpec& s, Site x) {
  if (x < 0 || x >= s.sites()) throw std::invalid_argument("site index out of range");
}

// row-major packing: index = ((c[d-1]*N) + c[d-2])*N + ... + c[0]
inline Site site_index(const TorusSpec& s, const Coord& c) {
  Site idx = 0;
  for (int i = s.d - 1; i >= 0; --i) {
    int v = c[i];
    if (v < 0 || v >= s.N) throw std::invalid_argument("coordinate out of range");
    idx = idx * s.N + v;
  }
  return idx;
}

inline Coord site_coord(const TorusSpec& s, Site x) {
  check_site(s, x);
  Coord c{0, 0, 0};
  for (int i = 0; i < s.d; ++i) {
    c[i] = static_cast<int>(x % s.N);
    x /= s.N;
  }
  return c;
}

// All 2d neighbors of x, one entry per signed unit direction, written to
// out[0..2d). Order: +e0, -e0, +e1, -e1, ...
inline void neighbor_sites(const TorusSpec& s, Site x, Site* out) {
  Site stride = 1;
  Site rest = x;
  for (int i = 0; i < s.d; ++i) {
    int ci = static_cast<int>(rest % s.N);
    rest /= s.N;
    Site up = (ci + 1 == s.N) ? x - stride * (s.N - 1) : x + stride;
    Site dn = (ci == 0) ? x + stride * (s.N - 1) : x - stride;
    out[2 * i] = up;
    out[2 * i + 1] = dn;
    stride *= s.N;
  }
}

inline std::vector<Site> neighbors(const TorusSpec& s, Site x) {
  check_site(s, x);
  std::vector<Site> out(2 * s.d);
  neighbor_sites(s, x, out.data());
  return out;
}

inline int wrapped_axis_gap(int a, int b, int N) {
  int g = a - b;
  if (g < 0) g = -g;
  return g < N - g ? g : N - g;
}

// L1 distance induced by the torus graph
inline int graph_distance(const TorusSpec& s, Site x, Site y) {
  check_site(s, x);
  check_site(s, y);
  Coord a = site_coord(s, x), b = site_coord(s, y);
  int dist = 0;
  for (int i = 0; i < s.d; ++i) dist += wrapped_axis_gap(a[i], b[i], s.N);
  return dist;
}

// N times the Euclidean distance between x/N and y/N on the continuous torus
inline double euclidean_distance(const TorusSpec& s, Site x, Site y) {
  Coord a = site_coord(s, x), b = site_coord(s, y);
  double q = 0;
  for (int i = 0; i < s.d; ++i) {
    double g = wrapped_axis_gap(a[i], b[i], s.N);
    q += g * g;
  }
  return std::sqrt(q);
}

// cube containing a continuum point of [0,1)^d under the left-closed
// partition [x/N, (x+1)/N)
inline Site cube_index(const TorusSpec& s, const double* point) {
  Coord c{0, 0, 0};
  for (int i = 0; i < s.d; ++i) {
    double p = point[i];
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("point outside [0,1)");
    int v = static_cast<int>(p * s.N);
    if (v >= s.N) v = s.N - 1;  // guards p*N rounding up to N
    c[i] = v;
  }
  return site_index(s, c);
}

inline Site cube_index(const TorusSpec& s, const std::array<double, 3>& point) {
  return cube_index(s, point.data());
}

}  // namespace trapsim
