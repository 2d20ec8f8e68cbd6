#pragma once

// Preferential-attachment trees: the classical one-leaf-per-step model and
// the random-burst variant (RPAT), plus the closed-form limit laws they obey.

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "tbrw/error.hpp"
#include "tbrw/law.hpp"
#include "tbrw/rng.hpp"
#include "tbrw/tree.hpp"

namespace tbrw {

/// Attaches one leaf to a degree-proportionally chosen vertex; returns the target.
inline VertexId ba_step(GrowthTree& tree, Xoshiro256& rng, std::uint64_t birth_time = 0) {
  const VertexId target = tree.sample_degree_proportional(rng);
  tree.add_leaf(target, birth_time);
  return target;
}

inline GrowthTree ba_generate(SeedKind kind, std::size_t n_vertices, Xoshiro256& rng) {
  GrowthTree tree = GrowthTree::seed(kind);
  if (n_vertices < tree.size()) throw ConfigError("ba_generate: target smaller than the seed");
  tree.reserve(n_vertices);
  for (std::uint64_t t = 1; tree.size() < n_vertices; ++t) ba_step(tree, rng, t);
  return tree;
}

/// One target chosen by the pre-attachment degrees, then z leaves attached to
/// it. z = 0 draws nothing and returns nullopt.
inline std::optional<VertexId> rpat_step(GrowthTree& tree, std::uint64_t z, Xoshiro256& rng,
                                         std::uint64_t birth_time = 0) {
  if (z == 0) return std::nullopt;
  const VertexId target = tree.sample_degree_proportional(rng);
  for (std::uint64_t i = 0; i < z; ++i) tree.add_leaf(target, birth_time);
  return target;
}

/// RPAT for n steps with Z_i drawn from `law` (one uniform for Z_i, then one
/// draw for the target when Z_i > 0).
inline GrowthTree rpat_generate(const LawSequence& law, SeedKind kind, std::uint64_t steps, Xoshiro256& rng) {
  GrowthTree tree = GrowthTree::seed(kind);
  for (std::uint64_t n = 1; n <= steps; ++n) rpat_step(tree, law.sample_leaf_count(n, rng), rng, n);
  return tree;
}

// ---------------------------------------------------------------------------
// Limit laws

/// 4 / (d(d+1)(d+2)): limiting fraction of vertices of degree d.
inline double degree_law(std::uint64_t d) {
  const auto x = static_cast<double>(d);
  return 4.0 / (x * (x + 1.0) * (x + 2.0));
}

/// 1 / (d(d+1)): limiting degree fraction within a fixed level.
inline double level_law(std::uint64_t d) {
  const auto x = static_cast<double>(d);
  return 1.0 / (x * (x + 1.0));
}

struct HeightConstant {
  double c = 0.0;      // root of c e^{c+1} = 1
  double ratio = 0.0;  // 1 / (2c): limit of height / ln n
  double residual = 0.0;
};

/// Bisection on [0.01, 1] for f(c) = c e^{c+1} - 1, which is increasing there.
inline HeightConstant height_constant() {
  auto f = [](double c) { return c * std::exp(c + 1.0) - 1.0; };
  double lo = 0.01, hi = 1.0;
  double mid = 0.5 * (lo + hi);
  for (int i = 0; i < 200; ++i) {
    mid = 0.5 * (lo + hi);
    const double v = f(mid);
    if (std::fabs(v) < 1e-15 || hi - lo < 1e-17) break;
    (v < 0.0 ? lo : hi) = mid;
  }
  return {mid, 1.0 / (2.0 * mid), std::fabs(f(mid))};
}

struct TargetRow {
  std::uint64_t d = 0;
  double degree = 0.0;
  double degree_cumulative = 0.0;
  double level = 0.0;
  double level_cumulative = 0.0;
};

inline std::vector<TargetRow> targets_table(std::uint64_t d_max) {
  if (d_max < 1) throw ConfigError("targets_table: d_max must be >= 1");
  std::vector<TargetRow> rows;
  double deg_sum = 0.0, lev_sum = 0.0;
  for (std::uint64_t d = 1; d <= d_max; ++d) {
    TargetRow row;
    row.d = d;
    row.degree = degree_law(d);
    row.level = level_law(d);
    row.degree_cumulative = deg_sum += row.degree;
    row.level_cumulative = lev_sum += row.level;
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// RPAT mean-degree recursion, with m_{n-1} replaced by its mean M_{n-1}:
//   E N_n(k) = sum_{l<k} l E N_{n-1}(l)/(2M_{n-1}) P(Z_n = k-l)
//              + E N_{n-1}(k) (1 - k P(Z_n >= 1)/(2M_{n-1}))         (plus E Z_n when k = 1)
// from a single root with a loop. The P(Z_n >= 1) factor accounts for steps
// without attachment; it is 1 when every step attaches.

struct RpatRecursionPoint {
  std::uint64_t n = 0;
  double mean_size = 0.0;           // M_n
  std::vector<double> expected;     // [k-1] = E N_n(k), k = 1..k_max
};

inline std::vector<RpatRecursionPoint> rpat_recursion(const LawSequence& law, std::uint64_t steps, std::uint32_t k_max,
                                                      const std::vector<std::uint64_t>& checkpoints) {
  if (k_max < 1) throw ConfigError("rpat_recursion: k_max must be >= 1");
  std::vector<double> n_k(k_max + 1, 0.0), next(k_max + 1, 0.0);
  // The root (degree 2 from the loop) is not a degree-1 vertex.
  if (k_max >= 2) n_k[2] = 1.0;
  double mean_size = 1.0;
  std::vector<RpatRecursionPoint> out;
  std::size_t cp = 0;
  auto emit = [&](std::uint64_t n) {
    while (cp < checkpoints.size() && checkpoints[cp] < n) ++cp;
    if (cp < checkpoints.size() && checkpoints[cp] == n) {
      out.push_back({n, mean_size, std::vector<double>(n_k.begin() + 1, n_k.end())});
      ++cp;
    }
  };
  emit(0);
  for (std::uint64_t n = 1; n <= steps; ++n) {
    const double p = law.prob_at(n);
    const auto w = law.weight_at(n);
    const double two_m = 2.0 * mean_size;
    for (std::uint32_t k = 1; k <= k_max; ++k) {
      double value = n_k[k] * (1.0 - static_cast<double>(k) * p / two_m);
      // Z_n takes only the values 0 and w: the l-term needs k - l = w.
      if (w < k) value += static_cast<double>(k - w) * n_k[k - w] / two_m * p;
      if (k == 1) value += p * static_cast<double>(w);
      next[k] = value;
    }
    std::swap(n_k, next);
    mean_size += p * static_cast<double>(w);
    emit(n);
  }
  return out;
}

}  // namespace tbrw
