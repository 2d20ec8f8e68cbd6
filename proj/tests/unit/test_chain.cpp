#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "support.hpp"
#include "tbrw/chain.hpp"
#include "tbrw/stats.hpp"

using namespace tbrw;

namespace {

// Root r = 0 carries the loop, a = 1 is its leaf.
constexpr VertexId kR = 0, kA = 1;

ChainAnalysis two_state() { return ChainAnalysis::from_tree(GrowthTree::edge_with_loop()); }

GrowthTree star(std::size_t leaves) {
  GrowthTree t = GrowthTree::loop_vertex();
  for (std::size_t i = 0; i < leaves; ++i) t.add_leaf(0);
  return t;
}

// Second largest |eigenvalue| by power iteration on the symmetrized matrix
// with the top eigenvector sqrt(pi) projected out.
double power_iteration_second(const GrowthTree& t) {
  const auto P = test::dense_transition(t);
  const std::size_t n = t.size();
  std::vector<double> deg(n), root_pi(n);
  double total = 0.0;
  for (VertexId v = 0; v < n; ++v) total += deg[v] = t.degree(v);
  for (VertexId v = 0; v < n; ++v) root_pi[v] = std::sqrt(deg[v] / total);
  auto apply = [&](const std::vector<double>& x) {
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) y[i] += std::sqrt(deg[i] / deg[j]) * P[i][j] * x[j];
    return y;
  };
  auto deflate_normalize = [&](std::vector<double>& x) {
    double dot = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += x[i] * root_pi[i];
    for (std::size_t i = 0; i < n; ++i) norm += (x[i] -= dot * root_pi[i]) * x[i];
    norm = std::sqrt(norm);
    for (auto& v : x) v /= norm;
  };
  // Iterate with S^2 so that lambda_2 and lambda_min compete on |lambda|.
  std::mt19937_64 gen(n);
  std::normal_distribution<double> normal;
  std::vector<double> x(n);
  for (auto& v : x) v = normal(gen);
  deflate_normalize(x);
  double rho = 0.0;
  for (int it = 0; it < 200'000; ++it) {
    auto y = apply(apply(x));
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) r += x[i] * y[i];
    double resid = 0.0;
    for (std::size_t i = 0; i < n; ++i) resid += (y[i] - r * x[i]) * (y[i] - r * x[i]);
    rho = r;
    if (std::sqrt(resid) < 1e-10) break;
    deflate_normalize(y);
    x.swap(y);
  }
  return std::sqrt(std::max(rho, 0.0));
}

}  // namespace

TEST(Chain, TwoStateBasics) {
  const auto c = two_state();
  EXPECT_DOUBLE_EQ(c.pi()[kR], 0.75);
  EXPECT_DOUBLE_EQ(c.pi()[kA], 0.25);
  EXPECT_DOUBLE_EQ(c.transition(kR, kR), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(c.transition(kR, kA), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(c.transition(kA, kR), 1.0);
  EXPECT_TRUE(c.detailed_balance_exact());
  const auto d = c.evolve(c.point_mass(kA), 2);
  EXPECT_NEAR(d[kR], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(d[kA], 1.0 / 3.0, 1e-15);
  EXPECT_EQ(c.evolve(c.point_mass(kA), 0), c.point_mass(kA));
  EXPECT_NEAR(c.separation(kA, 1), 1.0, 1e-15);
  EXPECT_NEAR(c.separation(kA, 2), 1.0 / 9.0, 1e-15);
  EXPECT_NEAR(c.optimal_sst_tail(kA, 2)[2], 1.0 / 9.0, 1e-15);
}

TEST(Chain, PathOfThreeRowSums) {
  const std::vector<test::Edge> edges{{0, 1}, {1, 2}};
  const auto c = ChainAnalysis::from_tree(GrowthTree::from_edges(3, edges, 0));
  EXPECT_LT(c.row_sum_error(), 1e-12);
  EXPECT_THROW(ChainAnalysis::from_tree(GrowthTree::from_edges(3, edges, 0, false)), ConfigError);
}

TEST(Chain, TwoStateSpectrumAndHitting) {
  const auto c = two_state();
  const auto s = c.spectrum();
  ASSERT_EQ(s.eigenvalues.size(), 2u);
  EXPECT_NEAR(s.eigenvalues[0], 1.0, 1e-12);
  EXPECT_NEAR(s.eigenvalues[1], -1.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.gamma_star, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.t_rel, 1.5, 1e-12);
  EXPECT_NEAR(c.hitting_times_to(kA)[kR], 3.0, 1e-12);
  EXPECT_NEAR(c.hitting_times_to(kR)[kA], 1.0, 1e-12);
  for (VertexId x : {kR, kA}) {
    const auto e = c.eigentime_check(x, s);
    EXPECT_NEAR(e.lhs, 0.75, 1e-12);
    EXPECT_NEAR(e.rhs, 0.75, 1e-12);
  }
  EXPECT_NEAR(c.return_time(kR), 4.0 / 3.0, 1e-12);
  EXPECT_NEAR(c.return_time(kA), 4.0, 1e-12);
}

TEST(Chain, TwoStateVisits) {
  const auto c = two_state();
  EXPECT_DOUBLE_EQ(c.expected_visits(kR, kR, 0), 1.0);
  // 1 + 2/3 + (2/3 * 2/3 + 1/3 * 1) = 22/9.
  EXPECT_NEAR(c.expected_visits(kR, kR, 2), 22.0 / 9.0, 1e-15);
  // Dense matrix powers as an independent check.
  const auto P = test::dense_transition(GrowthTree::edge_with_loop());
  std::vector<double> d{1.0, 0.0};
  double total = d[0];
  for (int j = 1; j <= 2; ++j) {
    d = test::dense_step(d, P);
    total += d[0];
  }
  EXPECT_NEAR(c.expected_visits(kR, kR, 2), total, 1e-15);
  EXPECT_NEAR(c.expected_subtree_visits(kR, kR, 5), 6.0, 1e-12);
}

TEST(Chain, RandomTreeOperatorProperties) {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + gen() % 49;
    const GrowthTree t = test::random_tree(n, gen);
    const auto c = ChainAnalysis::from_tree(t);
    ASSERT_TRUE(c.detailed_balance_exact());
    EXPECT_LT(c.row_sum_error(), 1e-12);
    const auto P = test::dense_transition(t);
    for (VertexId x = 0; x < n; ++x)
      for (VertexId y = 0; y < n; ++y) ASSERT_NEAR(c.transition(x, y), P[x][y], 1e-15);
    const VertexId x = static_cast<VertexId>(gen() % n);
    auto d = c.point_mass(x);
    auto dense = d;
    for (int step = 0; step < 20; ++step) {
      d = c.evolve(d, 1);
      dense = test::dense_step(dense, P);
    }
    double mass = 0.0;
    for (VertexId y = 0; y < n; ++y) {
      mass += d[y];
      EXPECT_NEAR(d[y], dense[y], 1e-12);
    }
    EXPECT_NEAR(mass, 1.0, 1e-12);
    const auto a = c.evolve(c.evolve(c.point_mass(x), 7), 11);
    const auto b = c.evolve(c.point_mass(x), 18);
    for (VertexId y = 0; y < n; ++y) EXPECT_NEAR(a[y], b[y], 1e-12);
    const auto prof = c.separation_profile(x, 200);
    EXPECT_DOUBLE_EQ(prof[0], 1.0);
    for (std::size_t k = 1; k < prof.size(); ++k) EXPECT_LE(prof[k], prof[k - 1] + 1e-12);
  }
}

TEST(Chain, SeparationAgainstTotalVariation) {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + gen() % 59;
    const auto c = ChainAnalysis::from_tree(test::random_tree(n, gen));
    const auto tm = c.t_mix();
    ASSERT_FALSE(tm.lower_bound);
    const std::uint64_t horizon = 8 * std::max<std::uint64_t>(tm.t, 1);
    const auto p = c.worst_case_profiles(horizon);
    for (std::size_t t = 0; 2 * t <= horizon; ++t) EXPECT_LE(p.sep[2 * t], 4.0 * p.tv[t] + 1e-12) << n << " " << t;
    for (std::size_t t = 1; t < p.tv.size(); ++t) {
      EXPECT_LE(p.tv[t], p.tv[t - 1] + 1e-12);
      EXPECT_LE(p.sep[t], p.sep[t - 1] + 1e-12);
    }
    // t_mix is the first time d(t) <= 1/4.
    EXPECT_LE(p.tv[tm.t], 0.25);
    if (tm.t > 0) {
      EXPECT_GT(p.tv[tm.t - 1], 0.25);
    }
    for (int l = 1; l <= 10; ++l) {
      const std::size_t at = static_cast<std::size_t>(l) * tm.t;
      if (at < p.sep.size()) {
        EXPECT_LE(p.sep[at], sst_tail_bound(l) + 1e-12);
      }
    }
  }
}

TEST(Chain, SpectralBounds) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + gen() % 59;
    const auto c = ChainAnalysis::from_tree(test::random_tree(n, gen));
    const auto s = c.spectrum();
    const auto g = c.geometric_bounds();
    EXPECT_NEAR(s.eigenvalues.front(), 1.0, 1e-10);
    for (double l : s.eigenvalues) EXPECT_LE(std::fabs(l), 1.0 + 1e-10);
    EXPECT_LE(s.t_rel, (2.0 * g.diam + 1.0) * static_cast<double>(g.edges) + 1e-9);
    EXPECT_GE(s.lambda_min, -1.0 + 1.0 / ((2.0 * g.diam + 1.0) * static_cast<double>(g.edges)) - 1e-10);
    EXPECT_GE(s.lambda_min, g.lambda_min_path - 1e-10);
    EXPECT_EQ(g.edges, n);  // n - 1 tree edges plus the loop
    EXPECT_EQ(g.diam, static_cast<std::uint32_t>(test::brute_diameter(c.tree())));
  }
}

TEST(Chain, PowerIterationAgreesWithSpectrum) {
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + gen() % 23;
    const GrowthTree t = test::random_tree(n, gen);
    const auto s = ChainAnalysis::from_tree(t).spectrum();
    EXPECT_NEAR(power_iteration_second(t), 1.0 - s.gamma_star, 1e-6) << n;
  }
}

TEST(Chain, EigentimeAndReturnTimes) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + gen() % 40;
    const auto c = ChainAnalysis::from_tree(test::random_tree(n, gen));
    const auto s = c.spectrum();
    double first = 0.0;
    for (VertexId x = 0; x < n; ++x) {
      const auto e = c.eigentime_check(x, s);
      EXPECT_LT(e.gap, 1e-8 * std::max(1.0, e.rhs));
      if (x == 0) first = e.lhs;
      EXPECT_NEAR(e.lhs, first, 1e-8 * std::max(1.0, first));
    }
    for (VertexId v = 0; v < n; ++v)
      EXPECT_NEAR(c.return_time(v), static_cast<double>(c.total_degree()) / c.degree(v), 1e-9 * c.total_degree());
  }
}

TEST(Chain, HittingTimesMatchMonteCarlo) {
  std::mt19937_64 gen(6);
  Xoshiro256 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + gen() % 11;
    const GrowthTree t = test::random_tree(n, gen);
    const auto c = ChainAnalysis::from_tree(t);
    const auto x = static_cast<VertexId>(gen() % n);
    auto y = static_cast<VertexId>(gen() % n);
    if (y == x) y = (x + 1) % n;
    const double exact = c.hitting_times_to(y)[x];
    const int trials = 100'000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < trials; ++i) {
      VertexId pos = x;
      double steps = 0.0;
      while (pos != y) pos = t.uniform_neighbor_step(pos, rng), steps += 1.0;
      sum += steps;
      sq += steps * steps;
    }
    const double mean = sum / trials;
    const double se = std::sqrt((sq / trials - mean * mean) / trials);
    EXPECT_LE(std::fabs(mean - exact), 3.0 * se) << trial;
  }
}

TEST(Chain, MixingBoundFromRelaxation) {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + gen() % 40;
    const auto c = ChainAnalysis::from_tree(test::random_tree(n, gen));
    const double t_rel = c.spectrum().t_rel;
    const double pi_min = *std::min_element(c.pi().begin(), c.pi().end());
    for (double eps : {0.25, 0.125}) {
      const auto tm = c.t_mix(eps);
      ASSERT_FALSE(tm.lower_bound);
      EXPECT_LE(static_cast<double>(tm.t), t_rel * std::log(1.0 / (eps * pi_min)) + 1e-9);
    }
  }
}

TEST(Chain, VisitBound) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + gen() % 40;
    const auto c = ChainAnalysis::from_tree(test::random_tree(n, gen));
    const auto v = static_cast<VertexId>(gen() % n);
    const std::uint64_t t = gen() % 1001;
    EXPECT_LE(c.expected_subtree_visits(v, v, t), c.visit_bound(v, t));
    EXPECT_GE(c.expected_subtree_visits(v, v, t), c.expected_visits(v, v, t) - 1e-12);
  }
}

TEST(Chain, DenseCap) {
  GrowthTree t = GrowthTree::loop_vertex();
  for (int i = 0; i < 2000; ++i) t.add_leaf(static_cast<VertexId>(i / 3));
  const auto c = ChainAnalysis::from_tree(t);
  EXPECT_THROW(c.spectrum(), DomainError);
  EXPECT_NO_THROW(c.geometric_bounds());
}

TEST(Sst, SingleStateStopsImmediately) {
  const auto c = ChainAnalysis::from_tree(GrowthTree::loop_vertex());
  SstSampler s(c, 0);
  Xoshiro256 rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(s.sample(rng).eta, 0u);
}

TEST(Sst, BlockOneTailIsSeparation) {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + gen() % 20;
    const auto c = ChainAnalysis::from_tree(test::random_tree(n, gen));
    const auto x = static_cast<VertexId>(gen() % n);
    SstSampler s(c, x);
    const auto sep = c.separation_profile(x, 100);
    for (std::uint64_t t = 0; t <= 100; ++t) EXPECT_NEAR(s.tail(t), std::max(sep[t], 0.0), 1e-12);
  }
}

TEST(Sst, TwoStateBlockTwo) {
  const auto c = two_state();
  SstSampler s(c, kA, 2);
  Xoshiro256 rng(12);
  const std::uint64_t samples = 100'000;
  std::uint64_t at_root = 0;
  constexpr std::size_t kBlocks = 6;
  std::vector<std::uint64_t> table(kBlocks * 2, 0);
  for (std::uint64_t i = 0; i < samples; ++i) {
    const auto r = s.sample(rng);
    at_root += r.state == kR;
    table[std::min<std::size_t>(r.eta / 2, kBlocks - 1) * 2 + r.state] += 1;
  }
  EXPECT_TRUE(test::within_sigmas(at_root, samples, 0.75, 3.0));
  EXPECT_GT(chi_square_independence(table, kBlocks, 2).p_value, 0.01);
}

TEST(Sst, StoppedStateIsStationaryOnRandomTrees) {
  std::mt19937_64 gen(10);
  Xoshiro256 rng(10);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t n = 3 + gen() % 15;
    const auto c = ChainAnalysis::from_tree(test::random_tree(n, gen));
    const auto x = static_cast<VertexId>(gen() % n);
    SstSampler s(c, x);
    std::vector<std::uint64_t> counts(n, 0);
    constexpr std::size_t kBins = 4;
    std::vector<std::uint64_t> table(kBins * n, 0);
    const auto median = [&] {
      std::uint64_t t = 0;
      while (s.tail(t) > 0.5) ++t;
      return t;
    }();
    for (int i = 0; i < 40'000; ++i) {
      const auto r = s.sample(rng);
      ++counts[r.state];
      const std::size_t bin = r.eta < median / 2 ? 0 : r.eta < median ? 1 : r.eta < 2 * median ? 2 : 3;
      ++table[bin * n + r.state];
    }
    EXPECT_GT(ks_discrete(counts, c.pi()).p_value, 0.001);
    EXPECT_GT(chi_square_independence(table, kBins, n).p_value, 0.001);
  }
}

TEST(RightBias, TinyGrowthRateIsStationary) {
  std::mt19937_64 gen(11);
  const auto c = ChainAnalysis::from_tree(test::random_tree(6, gen));
  Xoshiro256 rng(11);
  const auto r = rightbias_experiment(c, 0, LawSequence::constant(0.001), 0, 20'000, rng);
  EXPECT_GT(r.conditioning_rate, 0.95);
  EXPECT_FALSE(r.inconclusive);
  EXPECT_GT(chi_square_gof(r.conditional, c.pi()).p_value, 0.01);
}

TEST(RightBias, ImmediateGrowthNeverConditions) {
  const auto c = ChainAnalysis::from_tree(star(4));
  Xoshiro256 rng(12);
  const auto r = rightbias_experiment(c, 1, LawSequence::constant(1.0), 0, 1000, rng);
  EXPECT_EQ(r.conditioned, 0u);
  EXPECT_DOUBLE_EQ(r.conditioning_rate, 0.0);
  EXPECT_TRUE(r.inconclusive);
  EXPECT_EQ(r.unconditional[1], 1000u);
}

TEST(RightBias, UnfilteredStarDeviates) {
  const auto c = ChainAnalysis::from_tree(star(8));
  Xoshiro256 rng(13);
  const auto law = LawSequence::constant(0.3);
  const auto r = rightbias_experiment(c, 1, law, 0, 100'000, rng);
  EXPECT_LT(chi_square_gof(r.unconditional, c.pi()).p_value, 0.01);
  EXPECT_GT(chi_square_gof(r.conditional, c.pi()).p_value, 0.01);
  // The unfiltered counts follow the exact mixture of t-step laws.
  const auto exact = growth_position_law(c, 1, law, 0);
  EXPECT_GT(chi_square_gof(r.unconditional, exact).p_value, 0.001);
}

TEST(Coupling, ForcedIncrementThree) {
  const auto c = two_state();
  const auto q = coupling_failure_prob(c, kA, LawSequence::custom({0.0, 0.0, 1.0}), 0);
  EXPECT_NEAR(q.q, 1.0 / 9.0, 1e-15);
  EXPECT_FALSE(q.widened);
  EXPECT_EQ(q.terms, 3u);
}

TEST(Coupling, AlmostSureGrowthGivesOne) {
  const auto c = ChainAnalysis::from_tree(star(3));
  for (double eps : {1e-2, 1e-4, 1e-8}) {
    const auto q = coupling_failure_prob(c, 0, LawSequence::constant(1.0 - eps), 0);
    EXPECT_NEAR(q.q, 1.0, 2.0 * eps);
    EXPECT_LE(q.q, 1.0 + 1e-12);
  }
}

TEST(Coupling, MatchesSumOverSeparationProfile) {
  std::mt19937_64 gen(14);
  const auto c = ChainAnalysis::from_tree(test::random_tree(12, gen));
  const auto law = LawSequence::bernoulli_power(0.7);
  const std::uint64_t n0 = 500;
  const auto q = coupling_failure_prob(c, 3, law, n0);
  EXPECT_FALSE(q.widened);
  // Direct sum with the law's own geometric tail, independent truncation.
  const auto sep = c.separation_profile(3, 20'000);
  double direct = 0.0, tail = 1.0;
  for (std::uint64_t m = 1; m <= sep.size(); ++m) {
    const double p = law.prob_at(n0 + m);
    direct += tail * p * sep[m - 1];
    tail *= 1.0 - p;
  }
  EXPECT_NEAR(q.q, direct, 1e-12);
}
