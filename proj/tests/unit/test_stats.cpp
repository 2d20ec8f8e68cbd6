#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "tbrw/stats.hpp"

using namespace tbrw;

TEST(FitPower, ExactSquare) {
  std::vector<double> n, y;
  for (int i = 1; i <= 20; ++i) n.push_back(i * 10.0), y.push_back(i * 10.0 * i * 10.0);
  const auto f = fit_power(n, y, 1.0);
  EXPECT_NEAR(f.slope, 2.0, 1e-12);
  EXPECT_NEAR(f.intercept, 0.0, 1e-10);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);
  EXPECT_EQ(f.points, 20u);
}

TEST(FitPower, NoisyPower) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> noise;
  std::vector<double> n, y;
  for (int i = 0; i < 40; ++i) {
    const double x = std::pow(2.0, 5 + 0.5 * i);
    n.push_back(x);
    y.push_back(3.0 * std::pow(x, 0.7) * (1.0 + 0.01 * noise(gen)));
  }
  const auto f = fit_power(n, y);
  EXPECT_NEAR(f.slope, 0.7, 0.02);
  EXPECT_EQ(f.points, 20u);
  EXPECT_GT(f.slope_stderr, 0.0);
  EXPECT_LT(f.slope_stderr, 0.01);
}

TEST(FitPower, ConstantSeries) {
  std::vector<double> n{1, 2, 4, 8, 16, 32}, y(6, 5.0);
  EXPECT_NEAR(fit_power(n, y, 1.0).slope, 0.0, 1e-15);
}

TEST(FitPower, RejectsBadInput) {
  std::vector<double> n{1, 2, 4, 8, 16}, y{1, 2, 0, 4, 5};
  EXPECT_THROW(fit_power(n, y), DomainError);
  y[2] = -1.0;
  EXPECT_THROW(fit_power(n, y), DomainError);
  std::vector<double> short_n{1, 2, 3, 4}, short_y{1, 2, 3, 4};
  EXPECT_THROW(fit_power(short_n, short_y), ConfigError);
  y[2] = 3.0;
  EXPECT_THROW(fit_power(n, y, 0.0), ConfigError);
}

TEST(Ols, StandardErrorMatchesTextbook) {
  // x = 1..5, y = 2x + residuals (1,-1,0,1,-1): sxx = 10, rss = 4, se = sqrt(4/3/10).
  std::vector<double> x{1, 2, 3, 4, 5}, y{3, 3, 6, 9, 9};
  const auto f = ols(x, y);
  EXPECT_NEAR(f.slope, 1.8, 1e-12);
  const double rss = f.residual_ss;
  EXPECT_NEAR(f.slope_stderr, std::sqrt(rss / 3.0 / 10.0), 1e-12);
}

TEST(ChiSquare, SurvivalFunctionValues) {
  // 1 dof: P(X > 3.841458820694124) = 0.05; 2 dof: sf(x) = exp(-x/2).
  EXPECT_NEAR(chi_square_sf(3.841458820694124, 1.0), 0.05, 1e-12);
  for (double x : {0.5, 2.0, 9.0}) EXPECT_NEAR(chi_square_sf(x, 2.0), std::exp(-x / 2.0), 1e-14);
}

TEST(ChiSquare, GoodnessOfFit) {
  std::vector<std::uint64_t> counts{250, 250, 500};
  std::vector<double> probs{0.25, 0.25, 0.5};
  const auto r = chi_square_gof(counts, probs);
  EXPECT_DOUBLE_EQ(r.statistic, 0.0);
  EXPECT_DOUBLE_EQ(r.p_value, 1.0);
  EXPECT_EQ(r.dof, 2.0);
  std::vector<std::uint64_t> skewed{400, 100, 500};
  EXPECT_LT(chi_square_gof(skewed, probs).p_value, 1e-10);
  // Mass observed where the law has none is an outright rejection.
  std::vector<std::uint64_t> impossible{100, 0, 0, 1};
  std::vector<double> support{1.0, 0.0, 0.0, 0.0};
  EXPECT_EQ(chi_square_gof(impossible, support).p_value, 0.0);
}

TEST(ChiSquare, Independence) {
  std::vector<std::uint64_t> table{100, 200, 300, 600};
  const auto r = chi_square_independence(table, 2, 2);
  EXPECT_NEAR(r.statistic, 0.0, 1e-12);
  std::vector<std::uint64_t> dependent{300, 0, 0, 300};
  EXPECT_LT(chi_square_independence(dependent, 2, 2).p_value, 1e-10);
}

TEST(Ks, DistanceAndPValue) {
  std::vector<std::uint64_t> counts{50, 50};
  std::vector<double> probs{0.5, 0.5};
  EXPECT_DOUBLE_EQ(ks_discrete(counts, probs).distance, 0.0);
  std::vector<std::uint64_t> shifted{700, 300};
  const auto r = ks_discrete(shifted, probs);
  EXPECT_NEAR(r.distance, 0.2, 1e-15);
  EXPECT_LT(r.p_value, 1e-10);
  // Q(1.3581) is the 5% point of the Kolmogorov distribution.
  EXPECT_NEAR(kolmogorov_sf(1.3581), 0.05, 1e-4);
}

TEST(MeanStderr, Basic) {
  std::vector<double> v{1, 2, 3, 4};
  const auto m = mean_stderr(v);
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.std_error, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
}
