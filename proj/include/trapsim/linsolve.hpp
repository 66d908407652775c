#pragma once

// Linear solvers used by the potential-theory and density-evolution code:
// a masked conjugate-gradient solver for the torus graph Laplacian with
// Dirichlet sites, a dense LU fallback, and a cyclic tridiagonal solver.
// Everything here is strictly serial so results never depend on the
// worker count.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "lattice.hpp"

namespace trapsim {

// dense LU with partial pivoting; a is row-major n x n, consumed
inline std::vector<double> lu_solve(std::vector<double> a, int n, std::vector<double> b) {
  if (static_cast<int>(b.size()) != n || static_cast<std::size_t>(n) * n != a.size())
    throw std::invalid_argument("lu_solve shape");
  std::vector<int> piv(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) piv[static_cast<std::size_t>(i)] = i;
  for (int k = 0; k < n; ++k) {
    int p = k;
    double best = std::fabs(a[static_cast<std::size_t>(k) * n + k]);
    for (int i = k + 1; i < n; ++i) {
      double v = std::fabs(a[static_cast<std::size_t>(i) * n + k]);
      if (v > best) {
        best = v;
        p = i;
      }
    }
    if (best < 1e-250) throw std::runtime_error("singular linear system");
    if (p != k) {
      for (int j = 0; j < n; ++j)
        std::swap(a[static_cast<std::size_t>(p) * n + j], a[static_cast<std::size_t>(k) * n + j]);
      std::swap(b[static_cast<std::size_t>(p)], b[static_cast<std::size_t>(k)]);
    }
    double pivot = a[static_cast<std::size_t>(k) * n + k];
    for (int i = k + 1; i < n; ++i) {
      double m = a[static_cast<std::size_t>(i) * n + k] / pivot;
      if (m == 0) continue;
      a[static_cast<std::size_t>(i) * n + k] = 0;
      for (int j = k + 1; j < n; ++j)
        a[static_cast<std::size_t>(i) * n + j] -= m * a[static_cast<std::size_t>(k) * n + j];
      b[static_cast<std::size_t>(i)] -= m * b[static_cast<std::size_t>(k)];
    }
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = b[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < n; ++j) s -= a[static_cast<std::size_t>(i) * n + j] * b[static_cast<std::size_t>(j)];
    b[static_cast<std::size_t>(i)] = s / a[static_cast<std::size_t>(i) * n + i];
  }
  return b;
}

enum class SolveMethod { automatic, cg, dense };

struct SolveReport {
  long long iterations = 0;
  double residual = 0;  // final |b - Au|_2 / |b|_2 (0 when b = 0)
  bool converged = true;
};

// Solve, for every free site x of the torus,
//   sum_{y ~ x} u(y) - 2d u(x) = rhs(x),
// with u clamped to fixed_values on fixed sites. Neighbors are counted
// with multiplicity (side length 2 gives double edges). The reduced
// system (2d I - Adj) is symmetric positive definite as long as at
// least one site is fixed.
inline std::vector<double> laplace_solve(const TorusSpec& spec, const std::vector<char>& fixed,
                                         const std::vector<double>& fixed_values,
                                         const std::vector<double>& rhs,
                                         SolveMethod method = SolveMethod::automatic,
                                         SolveReport* report = nullptr) {
  const std::int64_t n = spec.sites();
  if (static_cast<std::int64_t>(fixed.size()) != n ||
      static_cast<std::int64_t>(fixed_values.size()) != n ||
      static_cast<std::int64_t>(rhs.size()) != n)
    throw std::invalid_argument("laplace_solve: size mismatch");
  const int deg = 2 * spec.d;
  std::vector<std::int64_t> slot(static_cast<std::size_t>(n), -1);
  std::vector<Site> site_of;
  for (std::int64_t x = 0; x < n; ++x) {
    if (!fixed[static_cast<std::size_t>(x)]) {
      slot[static_cast<std::size_t>(x)] = static_cast<std::int64_t>(site_of.size());
      site_of.push_back(x);
    }
  }
  const std::int64_t nf = static_cast<std::int64_t>(site_of.size());
  std::vector<double> out(fixed_values);
  if (nf == 0) {
    if (report) *report = SolveReport{};
    return out;
  }
  if (nf == n) throw std::invalid_argument("laplace_solve: no boundary sites");

  // compressed neighbor structure over free sites
  std::vector<std::int64_t> cols(static_cast<std::size_t>(nf) * deg);
  std::vector<double> b(static_cast<std::size_t>(nf));
  Site nb[6];
  for (std::int64_t i = 0; i < nf; ++i) {
    neighbor_sites(spec, site_of[static_cast<std::size_t>(i)], nb);
    double bi = -rhs[static_cast<std::size_t>(site_of[static_cast<std::size_t>(i)])];
    for (int k = 0; k < deg; ++k) {
      std::int64_t s = slot[static_cast<std::size_t>(nb[k])];
      cols[static_cast<std::size_t>(i) * deg + k] = s;
      if (s < 0) bi += fixed_values[static_cast<std::size_t>(nb[k])];
    }
    b[static_cast<std::size_t>(i)] = bi;
  }

  std::vector<double> u(static_cast<std::size_t>(nf), 0.0);
  bool use_dense = method == SolveMethod::dense ||
                   (method == SolveMethod::automatic && nf <= 512);
  if (use_dense) {
    if (nf > 4096) throw std::invalid_argument("dense solve too large");
    std::vector<double> a(static_cast<std::size_t>(nf) * nf, 0.0);
    for (std::int64_t i = 0; i < nf; ++i) {
      a[static_cast<std::size_t>(i) * nf + i] = deg;
      for (int k = 0; k < deg; ++k) {
        std::int64_t j = cols[static_cast<std::size_t>(i) * deg + k];
        if (j >= 0) a[static_cast<std::size_t>(i) * nf + j] -= 1.0;
      }
    }
    u = lu_solve(std::move(a), static_cast<int>(nf), b);
    if (report) {
      report->iterations = 0;
      report->converged = true;
      report->residual = 0;
    }
  } else {
    // conjugate gradients on (2d I - Adj) u = b; the Jacobi preconditioner
    // is the constant 1/(2d), so it rescales without changing iterates
    double bnorm2 = 0;
    for (double v : b) bnorm2 += v * v;
    if (bnorm2 == 0) {
      if (report) *report = SolveReport{};
    } else {
      const double tol2 = 1e-24 * bnorm2;
      std::vector<double> r(b), p(b), ap(static_cast<std::size_t>(nf));
      double rr = bnorm2;
      const long long maxit = 500000;
      long long it = 0;
      for (; it < maxit && rr > tol2; ++it) {
        double pap = 0;
        for (std::int64_t i = 0; i < nf; ++i) {
          double s = deg * p[static_cast<std::size_t>(i)];
          const std::int64_t* c = &cols[static_cast<std::size_t>(i) * deg];
          for (int k = 0; k < deg; ++k)
            if (c[k] >= 0) s -= p[static_cast<std::size_t>(c[k])];
          ap[static_cast<std::size_t>(i)] = s;
          pap += p[static_cast<std::size_t>(i)] * s;
        }
        double alpha = rr / pap;
        double rr2 = 0;
        for (std::int64_t i = 0; i < nf; ++i) {
          u[static_cast<std::size_t>(i)] += alpha * p[static_cast<std::size_t>(i)];
          r[static_cast<std::size_t>(i)] -= alpha * ap[static_cast<std::size_t>(i)];
          rr2 += r[static_cast<std::size_t>(i)] * r[static_cast<std::size_t>(i)];
        }
        double beta = rr2 / rr;
        rr = rr2;
        for (std::int64_t i = 0; i < nf; ++i)
          p[static_cast<std::size_t>(i)] = r[static_cast<std::size_t>(i)] + beta * p[static_cast<std::size_t>(i)];
      }
      double rel = std::sqrt(rr / bnorm2);
      if (report) {
        report->iterations = it;
        report->residual = rel;
        report->converged = rr <= tol2;
      }
      if (rr > tol2)
        throw std::runtime_error("laplace_solve did not converge; relative residual " +
                                 std::to_string(rel));
    }
  }
  for (std::int64_t i = 0; i < nf; ++i)
    out[static_cast<std::size_t>(site_of[static_cast<std::size_t>(i)])] = u[static_cast<std::size_t>(i)];
  return out;
}

// cyclic tridiagonal solve: sub[i] u[i-1] + diag[i] u[i] + sup[i] u[i+1] = d[i]
// with indices mod n (sub[0] couples to u[n-1], sup[n-1] to u[0]);
// Sherman-Morrison reduction to two Thomas sweeps
inline std::vector<double> cyclic_tridiag_solve(const std::vector<double>& sub,
                                                const std::vector<double>& diag,
                                                const std::vector<double>& sup,
                                                const std::vector<double>& d) {
  const std::size_t n = diag.size();
  if (sub.size() != n || sup.size() != n || d.size() != n || n < 3)
    throw std::invalid_argument("cyclic_tridiag_solve shape");
  auto thomas = [&](const std::vector<double>& bb, std::vector<double> rhs) {
    std::vector<double> c(n), x(n);
    double beta = bb[0];
    if (std::fabs(beta) < 1e-250) throw std::runtime_error("tridiagonal breakdown");
    x[0] = rhs[0] / beta;
    for (std::size_t i = 1; i < n; ++i) {
      c[i] = sup[i - 1] / beta;
      beta = bb[i] - sub[i] * c[i];
      if (std::fabs(beta) < 1e-250) throw std::runtime_error("tridiagonal breakdown");
      x[i] = (rhs[i] - sub[i] * x[i - 1]) / beta;
    }
    for (std::size_t i = n - 1; i-- > 0;) x[i] -= c[i + 1] * x[i + 1];
    return x;
  };
  const double gamma = -diag[0];
  std::vector<double> bb(diag);
  bb[0] -= gamma;
  bb[n - 1] -= sup[n - 1] * sub[0] / gamma;
  std::vector<double> x = thomas(bb, d);
  std::vector<double> zrhs(n, 0.0);
  zrhs[0] = gamma;
  zrhs[n - 1] = sup[n - 1];
  std::vector<double> z = thomas(bb, zrhs);
  double num = x[0] + sub[0] * x[n - 1] / gamma;
  double den = 1.0 + z[0] + sub[0] * z[n - 1] / gamma;
  if (std::fabs(den) < 1e-250) throw std::runtime_error("cyclic reduction breakdown");
  double fac = num / den;
  for (std::size_t i = 0; i < n; ++i) x[i] -= fac * z[i];
  return x;
}

}  // namespace trapsim
