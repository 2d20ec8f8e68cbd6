#pragma once

// Test oracles written independently of the library: random labelled trees
// from Prüfer sequences, brute-force BFS, dense matrix powers.

#include <cmath>
#include <cstdint>
#include <queue>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "tbrw/tree.hpp"

namespace tbrw::test {

using Edge = std::pair<VertexId, VertexId>;

/// Uniform random labelled tree on n vertices (Prüfer decoding).
inline std::vector<Edge> prufer_tree(std::size_t n, std::mt19937_64& gen) {
  std::vector<Edge> edges;
  if (n <= 1) return edges;
  if (n == 2) return {{0, 1}};
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> code(n - 2);
  for (auto& c : code) c = pick(gen);
  std::vector<std::size_t> degree(n, 1);
  for (auto c : code) ++degree[c];
  std::set<std::size_t> leaves;
  for (std::size_t v = 0; v < n; ++v)
    if (degree[v] == 1) leaves.insert(v);
  for (auto c : code) {
    const std::size_t leaf = *leaves.begin();
    leaves.erase(leaves.begin());
    edges.emplace_back(static_cast<VertexId>(leaf), static_cast<VertexId>(c));
    if (--degree[c] == 1) leaves.insert(c);
  }
  const std::size_t a = *leaves.begin();
  const std::size_t b = *std::next(leaves.begin());
  edges.emplace_back(static_cast<VertexId>(a), static_cast<VertexId>(b));
  return edges;
}

inline GrowthTree random_tree(std::size_t n, std::mt19937_64& gen, bool loop = true) {
  const auto edges = prufer_tree(n, gen);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  return GrowthTree::from_edges(n, edges, static_cast<VertexId>(pick(gen)), loop);
}

inline std::vector<std::vector<VertexId>> adjacency(const GrowthTree& t) {
  std::vector<std::vector<VertexId>> adj(t.size());
  for (VertexId v = 0; v < t.size(); ++v)
    if (t.parent(v) != kNoVertex) {
      adj[v].push_back(t.parent(v));
      adj[t.parent(v)].push_back(v);
    }
  return adj;
}

inline std::vector<int> bfs(const std::vector<std::vector<VertexId>>& adj, VertexId s) {
  std::vector<int> d(adj.size(), -1);
  std::queue<VertexId> q;
  d[s] = 0;
  q.push(s);
  while (!q.empty()) {
    const VertexId u = q.front();
    q.pop();
    for (VertexId w : adj[u])
      if (d[w] < 0) d[w] = d[u] + 1, q.push(w);
  }
  return d;
}

inline int brute_diameter(const GrowthTree& t) {
  const auto adj = adjacency(t);
  int best = 0;
  for (VertexId v = 0; v < t.size(); ++v)
    for (int x : bfs(adj, v)) best = std::max(best, x);
  return best;
}

/// Dense transition matrix built from the slot rule: deg counts children, the
/// parent and two loop slots at the root.
inline std::vector<std::vector<double>> dense_transition(const GrowthTree& t) {
  const std::size_t n = t.size();
  std::vector<std::vector<double>> P(n, std::vector<double>(n, 0.0));
  const auto adj = adjacency(t);
  for (VertexId v = 0; v < n; ++v) {
    double deg = static_cast<double>(adj[v].size()) + (v == t.root() && t.has_loop() ? 2.0 : 0.0);
    for (VertexId w : adj[v]) P[v][w] += 1.0 / deg;
    if (v == t.root() && t.has_loop()) P[v][v] += 2.0 / deg;
  }
  return P;
}

inline std::vector<double> dense_step(const std::vector<double>& d, const std::vector<std::vector<double>>& P) {
  std::vector<double> out(d.size(), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d.size(); ++j) out[j] += d[i] * P[i][j];
  return out;
}

/// Binomial 4-sigma band check for an empirical count.
inline bool within_sigmas(std::uint64_t count, std::uint64_t trials, double p, double sigmas = 4.0) {
  const double mean = p * static_cast<double>(trials);
  const double sd = std::sqrt(static_cast<double>(trials) * p * (1.0 - p));
  return std::fabs(static_cast<double>(count) - mean) <= sigmas * sd + 1e-9;
}

}  // namespace tbrw::test
