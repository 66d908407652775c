#pragma once

// Statistical backbone: sample summaries with batch-mean standard errors,
// two-sample Kolmogorov-Smirnov, Wasserstein-1 on the circle, trend
// verdicts, and the special functions they need.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace trapsim {

// ---- special functions ----

namespace detail {

inline double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double term = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_q_contfrac(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

// regularized incomplete gamma Q(a,x) = 1 - P(a,x)
inline double gamma_q(double a, double x) {
  if (x < 0 || a <= 0) throw std::invalid_argument("gamma_q domain");
  if (x == 0) return 1.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_contfrac(a, x);
}

// survival function of chi-square with dof degrees of freedom
inline double chi_square_sf(double stat, double dof) {
  return gamma_q(0.5 * dof, 0.5 * stat);
}

// Kolmogorov tail Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2)
inline double kolmogorov_q(double lambda) {
  if (lambda <= 0) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    if (term < 1e-16) break;
    sign = -sign;
  }
  double q = 2.0 * sum;
  return std::min(1.0, std::max(0.0, q));
}

// ---- sample summaries ----

struct SampleSummary {
  long long n = 0;
  double mean = 0;
  double variance = 0;  // unbiased
  double se = 0;        // batch-mean standard error of the mean
  int batches = 0;
};

inline SampleSummary summarize(const std::vector<double>& xs, int batches = 10) {
  if (batches < 10) throw std::invalid_argument("need >= 10 batches");
  long long n = static_cast<long long>(xs.size());
  if (n < batches) throw std::invalid_argument("fewer samples than batches");
  SampleSummary s;
  s.n = n;
  s.batches = batches;
  double sum = 0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(n);
  double q = 0;
  for (double x : xs) q += (x - s.mean) * (x - s.mean);
  s.variance = n > 1 ? q / static_cast<double>(n - 1) : 0.0;
  // contiguous batches; the first (n mod B) batches hold one extra point
  std::vector<double> bm(batches, 0.0);
  long long base = n / batches, extra = n % batches, pos = 0;
  double bq = 0;
  for (int b = 0; b < batches; ++b) {
    long long len = base + (b < extra ? 1 : 0);
    double bs = 0;
    for (long long i = 0; i < len; ++i) bs += xs[pos++];
    bm[b] = bs / static_cast<double>(len);
  }
  double bmean = 0;
  for (double v : bm) bmean += v;
  bmean /= batches;
  for (double v : bm) bq += (v - bmean) * (v - bmean);
  s.se = std::sqrt(bq / (batches - 1.0) / batches);
  return s;
}

// ---- two-sample Kolmogorov-Smirnov ----

struct KsResult {
  double statistic = 0;
  double p_value = 1;
};

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.size() < 25 || b.size() < 25) throw std::invalid_argument("ks: samples too small");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0, fa = 0, fb = 0;
  while (i < a.size() && j < b.size()) {
    double xa = a[i], xb = b[j];
    if (xa <= xb) fa = ++i / na;
    if (xb <= xa) fb = ++j / nb;
    d = std::max(d, std::fabs(fa - fb));
  }
  KsResult r;
  r.statistic = d;
  double ne = na * nb / (na + nb);
  double sq = std::sqrt(ne);
  r.p_value = kolmogorov_q((sq + 0.12 + 0.11 / sq) * r.statistic);
  return r;
}

// critical KS statistic at significance alpha for sample sizes (n, m)
inline double ks_critical(std::size_t n, std::size_t m, double alpha) {
  double lo = 0.0, hi = 4.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (kolmogorov_q(mid) > alpha) lo = mid; else hi = mid;
  }
  double ne = static_cast<double>(n) * m / (static_cast<double>(n) + m);
  double sq = std::sqrt(ne);
  return 0.5 * (lo + hi) / (sq + 0.12 + 0.11 / sq);
}

// ---- Wasserstein-1 on the circle ----

struct MassPoint {
  double x;  // position in [0,1)
  double m;  // nonnegative mass
};

// exact 1-d optimal transport on the circle: minimize over a constant
// shift of the CDF difference; the optimum is the length-weighted median
inline double wasserstein1_torus(std::vector<MassPoint> mu, std::vector<MassPoint> nu) {
  double tm = 0, tn = 0;
  for (auto& p : mu) {
    if (!(p.x >= 0 && p.x < 1) || p.m < 0) throw std::invalid_argument("bad mass point");
    tm += p.m;
  }
  for (auto& p : nu) {
    if (!(p.x >= 0 && p.x < 1) || p.m < 0) throw std::invalid_argument("bad mass point");
    tn += p.m;
  }
  double scale = std::max(tm, tn);
  if (scale == 0) return 0;
  if (std::fabs(tm - tn) > 1e-9 * scale) throw std::invalid_argument("mass mismatch");
  struct Ev { double x; double dm; };
  std::vector<Ev> ev;
  ev.reserve(mu.size() + nu.size());
  for (auto& p : mu) ev.push_back({p.x, p.m});
  for (auto& p : nu) ev.push_back({p.x, -p.m});
  std::sort(ev.begin(), ev.end(), [](const Ev& a, const Ev& b) { return a.x < b.x; });
  // piecewise-constant D(x) = F_mu - F_nu between event positions
  std::vector<double> val, len;
  double cum = 0, prev = 0;
  std::size_t k = 0;
  while (k < ev.size()) {
    double x = ev[k].x;
    if (x > prev) {
      val.push_back(cum);
      len.push_back(x - prev);
      prev = x;
    }
    while (k < ev.size() && ev[k].x == x) cum += ev[k++].dm;
  }
  val.push_back(cum);
  len.push_back(1.0 - prev);
  // length-weighted median of D
  std::vector<std::size_t> idx(val.size());
  for (std::size_t t = 0; t < idx.size(); ++t) idx[t] = t;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return val[a] < val[b]; });
  double half = 0.5, acc = 0, med = val[idx.back()];
  for (std::size_t t : idx) {
    acc += len[t];
    if (acc >= half) {
      med = val[t];
      break;
    }
  }
  double w = 0;
  for (std::size_t t = 0; t < val.size(); ++t) w += len[t] * std::fabs(val[t] - med);
  return w;
}

// ---- trend verdicts ----

struct TrendResult {
  double fraction = 0;  // fraction of consecutive strict decreases
  bool pass = false;
};

inline TrendResult trend_test(const std::vector<double>& values, double threshold = 0.8) {
  if (values.size() < 3) throw std::invalid_argument("trend_test needs >= 3 values");
  int dec = 0, total = static_cast<int>(values.size()) - 1;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] < values[i - 1]) ++dec;
  TrendResult r;
  r.fraction = static_cast<double>(dec) / total;
  r.pass = r.fraction >= threshold;
  return r;
}

// ---- small helpers ----

struct LinearFit {
  double intercept = 0;
  double slope = 0;
};

inline LinearFit linear_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw std::invalid_argument("linear_fit sizes");
  double n = static_cast<double>(xs.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  LinearFit f;
  f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

inline double tv_distance(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("tv_distance sizes");
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(p[i] - q[i]);
  return 0.5 * s;
}

}  // namespace trapsim
