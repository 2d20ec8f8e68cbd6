#pragma once

// Small statistics toolkit: least squares, power-law fits, chi-square and
// Kolmogorov tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "tbrw/error.hpp"

namespace tbrw {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double r2 = 0.0;
  double residual_ss = 0.0;
  std::size_t points = 0;
};

inline LinearFit ols(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ConfigError("ols: x and y differ in length");
  const std::size_t n = x.size();
  if (n < 2) throw ConfigError("ols: needs at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw ConfigError("ols: x values are all equal");
  LinearFit f;
  f.points = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    f.residual_ss += r * r;
  }
  f.r2 = syy == 0.0 ? 1.0 : 1.0 - f.residual_ss / syy;
  f.slope_stderr = n > 2 ? std::sqrt(f.residual_ss / static_cast<double>(n - 2) / sxx) : 0.0;
  return f;
}

/// y ~ C n^b by least squares on (log n, log y) over the last `tail_fraction`
/// of the points (at least 5 of them overall).
inline LinearFit fit_power(std::span<const double> n, std::span<const double> y, double tail_fraction = 0.5) {
  if (n.size() != y.size()) throw ConfigError("fit_power: series differ in length");
  if (n.size() < 5) throw ConfigError("fit_power: needs at least 5 points");
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) throw ConfigError("fit_power: tail fraction must lie in (0, 1]");
  for (std::size_t i = 0; i < n.size(); ++i)
    if (!(n[i] > 0.0) || !(y[i] > 0.0)) throw DomainError("fit_power: values must be positive");
  const auto keep = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(n.size()))));
  const std::size_t first = n.size() - std::min(keep, n.size());
  std::vector<double> lx, ly;
  for (std::size_t i = first; i < n.size(); ++i) {
    lx.push_back(std::log(n[i]));
    ly.push_back(std::log(y[i]));
  }
  return ols(lx, ly);
}

struct ChiSquareResult {
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
  std::size_t cells = 0;
};

inline double chi_square_sf(double statistic, double dof) {
  if (dof <= 0.0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(dof), statistic));
}

/// Pearson goodness of fit of counts against probabilities. Cells with
/// expected count below `min_expected` are pooled into one.
inline ChiSquareResult chi_square_gof(std::span<const std::uint64_t> counts, std::span<const double> probs,
                                      double min_expected = 5.0) {
  if (counts.size() != probs.size()) throw ConfigError("chi_square_gof: size mismatch");
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  ChiSquareResult r;
  if (total == 0) return r;
  double pooled_obs = 0.0, pooled_exp = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = probs[i] * static_cast<double>(total);
    const auto o = static_cast<double>(counts[i]);
    if (e < min_expected) {
      pooled_obs += o;
      pooled_exp += e;
      continue;
    }
    r.statistic += (o - e) * (o - e) / e;
    ++r.cells;
  }
  if (pooled_exp > 0.0) {
    r.statistic += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
    ++r.cells;
  } else if (pooled_obs > 0.0) {
    r.statistic = std::numeric_limits<double>::infinity();
  }
  r.dof = static_cast<double>(r.cells) - 1.0;
  r.p_value = std::isinf(r.statistic) ? 0.0 : chi_square_sf(r.statistic, r.dof);
  return r;
}

/// Pearson independence test on a rows x cols contingency table (row-major).
/// Empty rows and columns are dropped.
inline ChiSquareResult chi_square_independence(std::span<const std::uint64_t> table, std::size_t rows, std::size_t cols) {
  if (table.size() != rows * cols) throw ConfigError("chi_square_independence: bad table shape");
  std::vector<double> rs(rows, 0.0), cs(cols, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const auto v = static_cast<double>(table[i * cols + j]);
      rs[i] += v;
      cs[j] += v;
      total += v;
    }
  ChiSquareResult r;
  if (total == 0.0) return r;
  std::size_t live_rows = 0, live_cols = 0;
  for (double v : rs) live_rows += v > 0.0;
  for (double v : cs) live_cols += v > 0.0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      if (rs[i] == 0.0 || cs[j] == 0.0) continue;
      const double e = rs[i] * cs[j] / total;
      const double o = static_cast<double>(table[i * cols + j]);
      r.statistic += (o - e) * (o - e) / e;
    }
  r.cells = live_rows * live_cols;
  r.dof = static_cast<double>((live_rows - 1) * (live_cols - 1));
  r.p_value = chi_square_sf(r.statistic, r.dof);
  return r;
}

/// Kolmogorov distribution survival function Q(x) = 2 sum_{k>=1} (-1)^{k-1} e^{-2k^2x^2}.
inline double kolmogorov_sf(double x) {
  if (x <= 0.0) return 1.0;
  if (x < 0.2) return 1.0;  // the series converges slowly there; Q is 1 to double precision
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double distance = 0.0;
  double p_value = 1.0;  // asymptotic; conservative for discrete laws
  std::uint64_t samples = 0;
};

/// Kolmogorov distance between empirical counts on 0..K-1 and a law given by
/// its probabilities on the same support (any missing mass sits above K-1).
inline KsResult ks_discrete(std::span<const std::uint64_t> counts, std::span<const double> probs) {
  if (counts.size() != probs.size()) throw ConfigError("ks_discrete: size mismatch");
  KsResult r;
  for (auto c : counts) r.samples += c;
  if (r.samples == 0) return r;
  double ecdf = 0.0, cdf = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    ecdf += static_cast<double>(counts[i]) / static_cast<double>(r.samples);
    cdf += probs[i];
    r.distance = std::max(r.distance, std::fabs(ecdf - cdf));
  }
  const double sn = std::sqrt(static_cast<double>(r.samples));
  r.p_value = kolmogorov_sf((sn + 0.12 + 0.11 / sn) * r.distance);
  return r;
}

struct MeanStderr {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

inline MeanStderr mean_stderr(std::span<const double> v) {
  MeanStderr m;
  m.n = v.size();
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.std_error = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return m;
}

}  // namespace tbrw
