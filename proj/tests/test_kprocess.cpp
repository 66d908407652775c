#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "support/oracles.hpp"
#include "trapsim/environment.hpp"
#include "trapsim/env_json.hpp"
#include "trapsim/kprocess.hpp"
#include "trapsim/potential.hpp"
#include "trapsim/stats.hpp"

using namespace trapsim;

namespace {

WField make_field(const TorusSpec& spec, std::vector<double> w) {
  WField f;
  f.spec = spec;
  f.w = std::move(w);
  double s = 0;
  for (double v : f.w) s += v;
  f.total = s;
  f.w_floor = 0;
  return f;
}

// flat background plus point masses at chosen sites
WField planted_field(const TorusSpec& spec, double background,
                     const std::vector<std::pair<Site, double>>& atoms) {
  std::vector<double> w(static_cast<std::size_t>(spec.sites()), background);
  for (const auto& [s, m] : atoms) w[static_cast<std::size_t>(s)] = m;
  return make_field(spec, std::move(w));
}

}  // namespace

TEST(KParams, Validation) {
  KParams p;
  p.rate_constant = 1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);  // no weights
  p.weights = {2.0, 1.0, 0.5};
  EXPECT_NO_THROW(p.validate());
  p.weights = {1.0, 2.0};
  EXPECT_THROW(p.validate(), std::invalid_argument);  // increasing
  p.weights = {1.0, 0.0};
  EXPECT_THROW(p.validate(), std::invalid_argument);  // non-positive
  p.weights = {1.0, 0.5};
  p.rate_constant = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p.rate_constant = 1.0;
  p.c = 0.5;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(BuildGenerator, MatchesLimitFormula) {
  double v3 = limit_rate_constant(3);
  EXPECT_NEAR(v3, 0.6594626704, 2e-6);

  KParams p{{2.5, 0.75}, v3, 0.0};
  std::vector<double> q = build_generator(p, 2);
  EXPECT_DOUBLE_EQ(q[0 * 2 + 1], v3 / (2.0 * 2.5));
  EXPECT_DOUBLE_EQ(q[1 * 2 + 0], v3 / (2.0 * 0.75));

  std::vector<double> one = build_generator(p, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], 0.0);

  // Off-diagonal entries in a row are one common rate r and the diagonal
  // is exactly -(M-1) r, so every row sums to zero exactly.
  KParams big{{3.0, 1.5, 0.8, 0.4, 0.2}, v3, 0.0};
  int M = 5;
  std::vector<double> g = build_generator(big, M);
  for (int i = 0; i < M; ++i) {
    double r = g[static_cast<std::size_t>(i) * M + (i == 0 ? 1 : 0)];
    for (int j = 0; j < M; ++j) {
      if (j == i) continue;
      EXPECT_EQ(g[static_cast<std::size_t>(i) * M + j], r);
      // detailed-balance form: w_i r(i,j) = v/M = w_j r(j,i)
      EXPECT_DOUBLE_EQ(big.weights[static_cast<std::size_t>(i)] *
                           g[static_cast<std::size_t>(i) * M + j],
                       v3 / M);
    }
    EXPECT_EQ(g[static_cast<std::size_t>(i) * M + i], -static_cast<double>(M - 1) * r);
  }

  EXPECT_THROW(build_generator(p, 3), std::invalid_argument);
  EXPECT_THROW(build_generator(p, 0), std::invalid_argument);
}

TEST(SimulateTruncatedK, TrivialAndStructure) {
  KParams p{{2.0, 1.0, 0.5}, 0.66, 0.0};

  Trajectory solo = simulate_truncated_k(p, 1, 1, 10.0, 42);
  ASSERT_EQ(solo.segments.size(), 1u);
  EXPECT_EQ(solo.segments[0].site, 1);
  EXPECT_EQ(solo.segments[0].holding, 10.0);

  Trajectory t = simulate_truncated_k(p, 3, 2, 500.0, 42);
  EXPECT_EQ(t.start, 2);
  double sum = 0;
  for (std::size_t i = 0; i < t.segments.size(); ++i) {
    EXPECT_GE(t.segments[i].site, 1);
    EXPECT_LE(t.segments[i].site, 3);
    EXPECT_GT(t.segments[i].holding, 0.0);
    if (i > 0) EXPECT_NE(t.segments[i].site, t.segments[i - 1].site);
    sum += t.segments[i].holding;
  }
  EXPECT_NEAR(sum, 500.0, 1e-9 * 500.0);

  EXPECT_THROW(simulate_truncated_k(p, 4, 1, 1.0, 0), std::invalid_argument);
  EXPECT_THROW(simulate_truncated_k(p, 2, 3, 1.0, 0), std::invalid_argument);
  EXPECT_THROW(simulate_truncated_k(p, 2, 1, 0.0, 0), std::invalid_argument);
}

// Merged over self-jumps, the sojourn at state i is exponential with mean
// w_i M / (v (M-1)).
TEST(SimulateTruncatedK, MergedSojournMean) {
  KParams p{{2.0, 1.0, 0.5}, 0.66, 0.0};
  const int M = 3;
  Trajectory t = simulate_truncated_k(p, M, 1, 80000.0, 7);
  std::vector<double> sojourns;
  for (std::size_t i = 0; i + 1 < t.segments.size(); ++i)
    if (t.segments[i].site == 1) sojourns.push_back(t.segments[i].holding);
  ASSERT_GE(sojourns.size(), 10000u);
  SampleSummary s = summarize(sojourns);
  double expected = p.weights[0] * M / (p.rate_constant * (M - 1));
  EXPECT_NEAR(s.mean, expected, 3.0 * s.se);
}

TEST(SimulateTruncatedK, StationaryOccupationProportionalToWeights) {
  KParams p{{2.0, 1.0, 0.5}, 0.66, 0.0};
  const int M = 3;
  const double horizon = 80000.0;
  Trajectory t = simulate_truncated_k(p, M, 1, horizon, 19);
  double wsum = 0;
  for (double w : p.weights) wsum += w;
  const int batches = 20;
  const double B = horizon / batches;
  for (int state = 1; state <= M; ++state) {
    std::vector<double> frac;
    double prev = 0;
    for (int b = 1; b <= batches; ++b) {
      double cur = occupation_time(t, {state}, b * B);
      frac.push_back((cur - prev) / B);
      prev = cur;
    }
    SampleSummary s = summarize(frac, 10);
    EXPECT_NEAR(s.mean, p.weights[static_cast<std::size_t>(state - 1)] / wsum, 3.0 * s.se)
        << "state " << state;
  }
}

TEST(KStateAt, MatchesMatrixExponential) {
  KParams p{{3.0, 1.5, 0.8, 0.4}, limit_rate_constant(3), 0.0};
  const int M = 4;
  const double t = 2.0;
  const int i0 = 2;
  std::vector<double> q = build_generator(p, M);
  for (double& x : q) x *= t;
  std::vector<double> pt = oracle::expm(q, M);

  const long long R = 100000;
  std::vector<long long> counts(M, 0);
  for (long long r = 0; r < R; ++r)
    counts[k_state_at(p, M, i0, t, 31415, static_cast<std::uint64_t>(r)) - 1] += 1;
  for (int j = 0; j < M; ++j) {
    double expect = pt[static_cast<std::size_t>(i0 - 1) * M + j];
    double got = static_cast<double>(counts[j]) / static_cast<double>(R);
    double se = std::sqrt(expect * (1.0 - expect) / static_cast<double>(R));
    EXPECT_NEAR(got, expect, 3.0 * se) << "state " << j + 1;
  }
}

TEST(TraceConvergence, SymmetricTwoTrapRates) {
  TorusSpec spec{3, 8};
  Site a = site_index(spec, {1, 1, 1});
  Site b = site_index(spec, {5, 5, 5});
  WField f = planted_field(spec, 0.01, {{a, 1.0}, {b, 1.0}});
  TraceConvergence tc = trace_convergence_experiment(f, 2, TraceMode::d3);
  ASSERT_EQ(tc.rows.size(), 2u);
  EXPECT_EQ(tc.d, 3);
  EXPECT_EQ(tc.N, 8);
  // the translation x -> x + (4,4,4) swaps the two traps, so the exact
  // rates must agree
  EXPECT_NEAR(tc.rows[0].r_exact, tc.rows[1].r_exact,
              1e-10 * tc.rows[0].r_exact);
  EXPECT_LE(tc.rows[0].rel_err, tc.rows[1].rel_err);
  EXPECT_DOUBLE_EQ(tc.max_rel_err, tc.rows.back().rel_err);
  for (const auto& row : tc.rows) {
    EXPECT_GT(row.r_limit, 0.0);
    EXPECT_GE(row.rel_err, 0.0);
    EXPECT_DOUBLE_EQ(row.rel_err, std::abs(row.r_exact - row.r_limit) / row.r_limit);
  }
}

TEST(TraceConvergence, RejectsMismatchedMode) {
  WField d2 = make_environment(2, 8, PppConfig{0.5, 1e-2, 3}).realize();
  EXPECT_THROW(trace_convergence_experiment(d2, 2, TraceMode::d3), std::invalid_argument);
  WField d3 = make_environment(3, 8, PppConfig{0.5, 1e-1, 3}).realize();
  EXPECT_THROW(trace_convergence_experiment(d3, 2, TraceMode::d2_logN),
               std::invalid_argument);
  EXPECT_THROW(trace_convergence_experiment(d3, 1, TraceMode::d3), std::invalid_argument);
  EXPECT_THROW(limit_rate_constant(1), std::invalid_argument);
}

// Fixed continuum atoms discretized on finer and finer grids: the worst
// relative error against the limit rates shrinks.
TEST(TraceConvergence, ErrorShrinksWithN) {
  TrapMeasure m;
  m.d = 3;
  m.background = 0.05;
  m.atoms.push_back({{0.1, 0.1, 0.1}, 1.0});
  m.atoms.push_back({{0.6, 0.6, 0.6}, 0.8});
  m.atoms.push_back({{0.1, 0.6, 0.35}, 0.65});
  m.atoms.push_back({{0.6, 0.1, 0.85}, 0.5});
  std::vector<int> ns{12, 16, 24, 32};
  std::vector<double> errs;
  for (int n : ns) {
    WField f = discretize(m, TorusSpec{3, n});
    TraceConvergence tc = trace_convergence_experiment(f, 4, TraceMode::d3);
    ASSERT_EQ(tc.rows.size(), 12u);
    errs.push_back(tc.max_rel_err);
  }
  TrendResult trend = trend_test(errs, 0.6);
  EXPECT_TRUE(trend.pass) << "errors: " << errs[0] << " " << errs[1] << " " << errs[2]
                          << " " << errs[3];
  EXPECT_LE(errs.back(), 0.15);
}

TEST(OccupationNegligibility, EmptyComplementAndBounds) {
  TorusSpec spec{2, 4};
  WField f = make_field(spec, std::vector<double>(16, 0.5));
  OccupationResult all = occupation_negligibility(f, 16, 2.0, 5, 11);
  for (double m : all.mean_by_start) EXPECT_EQ(m, 0.0);
  EXPECT_EQ(all.max_mean, 0.0);
  EXPECT_NEAR(all.theta, std::log(4.0), 1e-15);

  WField env = make_environment(3, 8, PppConfig{0.5, 0.05, 5}).realize();
  OccupationResult part = occupation_negligibility(env, 2, 0.5, 100, 11);
  EXPECT_EQ(part.theta, 1.0);
  for (double m : part.mean_by_start) {
    EXPECT_GE(m, 0.0);
    EXPECT_LE(m, 0.5);
  }

  EXPECT_THROW(occupation_negligibility(env, 2, 0.0, 10, 1), std::invalid_argument);
  EXPECT_THROW(occupation_negligibility(env, 2, 1.0, 0, 1), std::invalid_argument);
  WField line = make_environment(1, 8, PppConfig{0.5, 0.05, 5}).realize();
  EXPECT_THROW(occupation_negligibility(line, 2, 1.0, 10, 1), std::invalid_argument);
}

TEST(OccupationNegligibility, MoreTrapsMeanLessOutsideTime) {
  WField env = make_environment(3, 8, PppConfig{0.5, 0.05, 21}).realize();
  OccupationResult coarse = occupation_negligibility(env, 2, 1.0, 300, 77);
  OccupationResult fine = occupation_negligibility(env, 12, 1.0, 300, 77);
  EXPECT_LT(fine.max_mean, coarse.max_mean);
}

TEST(TruncationSchedule, Validation) {
  TruncationSchedule s;
  EXPECT_THROW(s.validate(3), std::invalid_argument);
  s.steps = {{8, 2}, {16, 4}};
  EXPECT_NO_THROW(s.validate(3));
  s.steps = {{8, 4}, {16, 2}};
  EXPECT_THROW(s.validate(3), std::invalid_argument);  // decreasing
  s.steps = {{4, 65}};
  EXPECT_THROW(s.validate(3), std::invalid_argument);  // above N^d
  EXPECT_THROW(s.validate(2), std::invalid_argument);
  s.steps = {{4, 64}};
  EXPECT_NO_THROW(s.validate(3));
  s.steps = {{2, 1}};
  EXPECT_THROW(s.validate(3), std::invalid_argument);  // N below 3
}

TEST(TruncationSchedule, DefaultCapsAtResolvedAtoms) {
  TorusSpec spec{2, 16};
  WField f = planted_field(spec, 0.5, {{0, 2.0}, {37, 1.5}, {200, 1.0}});
  f.w_floor = 0.5;  // background cubes sit exactly at the floor
  TruncationSchedule sched = make_default_schedule({&f});
  ASSERT_EQ(sched.steps.size(), 1u);
  EXPECT_EQ(sched.steps[0].N, 16);
  EXPECT_EQ(sched.steps[0].ell, 3);  // floor(log2 16) = 4, capped at 3 resolved
}

TEST(DiagonalCoupling, ConstantAtTruncationOne) {
  TorusSpec s8{3, 8};
  TorusSpec s12{3, 12};
  WField f8 = planted_field(s8, 0.01, {{site_index(s8, {2, 2, 2}), 5.0}});
  WField f12 = planted_field(s12, 0.01, {{site_index(s12, {3, 3, 3}), 5.0}});
  TruncationSchedule sched;
  sched.steps = {{8, 1}, {12, 1}};
  std::vector<CouplingStep> steps =
      diagonal_coupling({&f8, &f12}, sched, 20.0, 100, 2024);
  ASSERT_EQ(steps.size(), 2u);
  for (const auto& st : steps) {
    EXPECT_EQ(st.ell, 1);
    EXPECT_EQ(st.grid_sup_mean, 0.0);
    for (double tv : st.tv) EXPECT_EQ(tv, 0.0);
  }
}

// Two independent copies of the truncated limit chain have the same
// state-at-t law, so empirical TV is small.
TEST(DiagonalCoupling, MatchedGeneratorsGiveSmallTV) {
  KParams p{{3.0, 1.5, 0.8, 0.4}, limit_rate_constant(3), 0.0};
  const int M = 4;
  const double t = 2.0;
  const long long R = 10000;
  std::vector<double> pa(M, 0.0), pb(M, 0.0);
  for (long long r = 0; r < R; ++r) {
    pa[k_state_at(p, M, 1, t, 500, static_cast<std::uint64_t>(r)) - 1] += 1.0;
    pb[k_state_at(p, M, 1, t, 501, static_cast<std::uint64_t>(r)) - 1] += 1.0;
  }
  for (int j = 0; j < M; ++j) {
    pa[j] /= static_cast<double>(R);
    pb[j] /= static_cast<double>(R);
  }
  EXPECT_LE(tv_distance(pa, pb), 0.05);
}
