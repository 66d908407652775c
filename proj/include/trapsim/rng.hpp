#pragma once

// Counter-based random streams (Philox4x32-10). A stream is keyed by
// (seed, stream id) and indexed by a 64-bit draw counter, so any draw is
// reproducible independently of thread count or evaluation order.
// Distinct (seed, id) pairs give statistically independent streams.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace trapsim {

namespace detail {

inline void mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  std::uint64_t pr = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(pr >> 32);
  lo = static_cast<std::uint32_t>(pr);
}

// one 128-bit block: counter in (c0,c1), stream id in (c2,c3), key = seed
inline std::array<std::uint32_t, 4> philox_block(std::uint64_t seed, std::uint64_t stream,
                                                 std::uint64_t counter) {
  std::uint32_t c0 = static_cast<std::uint32_t>(counter);
  std::uint32_t c1 = static_cast<std::uint32_t>(counter >> 32);
  std::uint32_t c2 = static_cast<std::uint32_t>(stream);
  std::uint32_t c3 = static_cast<std::uint32_t>(stream >> 32);
  std::uint32_t k0 = static_cast<std::uint32_t>(seed);
  std::uint32_t k1 = static_cast<std::uint32_t>(seed >> 32);
  for (int r = 0; r < 10; ++r) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo32(0xD2511F53u, c0, hi0, lo0);
    mulhilo32(0xCD9E8D57u, c2, hi1, lo1);
    c0 = hi1 ^ c1 ^ k0;
    c1 = lo1;
    c2 = hi0 ^ c3 ^ k1;
    c3 = lo0;
    k0 += 0x9E3779B9u;
    k1 += 0xBB67AE85u;
  }
  return {c0, c1, c2, c3};
}

}  // namespace detail

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// stream id from (replica, purpose); purposes are small per-module constants
constexpr std::uint64_t make_stream(std::uint64_t replica, std::uint32_t purpose) {
  return (static_cast<std::uint64_t>(purpose) << 48) | (replica & 0xFFFFFFFFFFFFull);
}

class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed), stream_(stream), ctr_(0), have_(false), spare_(0) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::uint64_t u64() {
    if (have_) {
      have_ = false;
      return spare_;
    }
    auto b = detail::philox_block(seed_, stream_, ctr_++);
    spare_ = (static_cast<std::uint64_t>(b[2]) << 32) | b[3];
    have_ = true;
    return (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
  }

  // uniform on [0,1), 53-bit resolution
  double u01() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

  // uniform on (0,1); never returns an endpoint
  double u01o() { return (static_cast<double>(u64() >> 11) + 0.5) * 0x1.0p-53; }

  // standard exponential, strictly positive
  double exponential() { return -std::log(u01o()); }

  // unbiased integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("below(0)");
    if (n == 1) return 0;
    std::uint64_t mask = ~0ull >> __builtin_clzll(n - 1);
    for (;;) {
      std::uint64_t v = u64() & mask;
      if (v < n) return v;
    }
  }

  long long poisson(double mean) {
    if (mean < 0 || !std::isfinite(mean)) throw std::invalid_argument("poisson mean");
    if (mean == 0) return 0;
    if (mean < 10.0) return poisson_knuth(mean);
    return poisson_ptrs(mean);
  }

  long long binomial(long long n, double p) {
    if (n < 0 || p < 0.0 || p > 1.0) throw std::invalid_argument("binomial args");
    if (n == 0 || p == 0.0) return 0;
    if (p == 1.0) return n;
    bool flip = p > 0.5;
    double ps = flip ? 1.0 - p : p;
    long long k;
    if (n <= 64) {
      k = 0;
      for (long long i = 0; i < n; ++i) k += (u01() < ps);
    } else if (static_cast<double>(n) * ps < 10.0) {
      k = binomial_geometric(n, ps);
    } else {
      k = binomial_btrs(n, ps);
    }
    return flip ? n - k : k;
  }

 private:
  long long poisson_knuth(double mean) {
    double limit = std::exp(-mean);
    double prod = u01o();
    long long k = 0;
    while (prod > limit) {
      prod *= u01o();
      ++k;
    }
    return k;
  }

  // Hormann's transformed rejection (PTRS), exact for mean >= 10
  long long poisson_ptrs(double mu) {
    double smu = std::sqrt(mu);
    double b = 0.931 + 2.53 * smu;
    double a = -0.059 + 0.02483 * b;
    double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    double vr = 0.9277 - 3.6224 / (b - 2.0);
    double lmu = std::log(mu);
    for (;;) {
      double u = u01o() - 0.5;
      double v = u01o();
      double us = 0.5 - std::fabs(u);
      double kf = std::floor((2.0 * a / us + b) * u + mu + 0.43);
      if (us >= 0.07 && v <= vr) return static_cast<long long>(kf);
      if (kf < 0 || (us < 0.013 && v > us)) continue;
      long long k = static_cast<long long>(kf);
      double lhs = std::log(v * inv_alpha / (a / (us * us) + b));
      double rhs = kf * lmu - mu - std::lgamma(kf + 1.0);
      if (lhs <= rhs) return k;
    }
  }

  // count successes by geometric gaps; exact for small n*p
  long long binomial_geometric(long long n, double p) {
    double lq = std::log1p(-p);
    long long k = 0;
    long long pos = 0;
    for (;;) {
      pos += static_cast<long long>(std::floor(std::log(u01o()) / lq)) + 1;
      if (pos > n) return k;
      ++k;
    }
  }

  // Hormann's BTRS transformed rejection, exact for n*p >= 10, p <= 1/2
  long long binomial_btrs(long long n, double p) {
    double q = 1.0 - p;
    double nd = static_cast<double>(n);
    double spq = std::sqrt(nd * p * q);
    double b = 1.15 + 2.53 * spq;
    double a = -0.0873 + 0.0248 * b + 0.01 * p;
    double c = nd * p + 0.5;
    double vr = 0.92 - 4.2 / b;
    double alpha = (2.83 + 5.1 / b) * spq;
    double lpq = std::log(p / q);
    double m = std::floor((nd + 1.0) * p);
    double h = std::lgamma(m + 1.0) + std::lgamma(nd - m + 1.0);
    for (;;) {
      double u = u01o() - 0.5;
      double v = u01o();
      double us = 0.5 - std::fabs(u);
      double kf = std::floor((2.0 * a / us + b) * u + c);
      if (us >= 0.07 && v <= vr) return static_cast<long long>(kf);
      if (kf < 0 || kf > nd) continue;
      double lhs = std::log(v * alpha / (a / (us * us) + b));
      double rhs = h - std::lgamma(kf + 1.0) - std::lgamma(nd - kf + 1.0) + (kf - m) * lpq;
      if (lhs <= rhs) return static_cast<long long>(kf);
    }
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t ctr_;
  bool have_;
  std::uint64_t spare_;
};

}  // namespace trapsim
