#pragma once

// Growable rooted tree with (optionally) one self-loop at the root.
//
// Degree convention: the loop contributes 2 to deg(root) and occupies two of
// the root's edge slots, so a walker at the root stays put with probability
// 2/deg(root). With this convention simple random walk is reversible with
// respect to deg(v)/total_degree. The loop never counts toward distances.

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "tbrw/error.hpp"
#include "tbrw/rng.hpp"

namespace tbrw {

using VertexId = std::uint32_t;
inline constexpr VertexId kNoVertex = 0xFFFFFFFFu;

enum class SeedKind {
  loop_vertex,     // single root with a loop
  edge_with_loop,  // root with a loop plus one leaf
  edge,            // two vertices, no loop
};

struct VertexRecord {
  VertexId parent = kNoVertex;
  std::uint32_t degree = 0;
  std::uint32_t depth = 0;
  std::uint64_t birth_time = 0;
  std::vector<VertexId> children;
};

class GrowthTree {
 public:
  GrowthTree() = default;

  static GrowthTree loop_vertex() {
    GrowthTree t;
    t.init_root(true);
    return t;
  }

  static GrowthTree edge_with_loop() {
    GrowthTree t = loop_vertex();
    t.add_leaf(0, 0);
    return t;
  }

  static GrowthTree edge() {
    GrowthTree t;
    t.init_root(false);
    t.add_leaf(0, 0);
    return t;
  }

  static GrowthTree seed(SeedKind kind) {
    switch (kind) {
      case SeedKind::loop_vertex: return loop_vertex();
      case SeedKind::edge_with_loop: return edge_with_loop();
      case SeedKind::edge: return edge();
    }
    throw ConfigError("unknown seed kind");
  }

  /// Builds a seed tree on vertices 0..n-1 from an undirected edge list. Ids are
  /// kept; parents and depths come from a BFS out of `root`. All birth times are 0.
  static GrowthTree from_edges(std::size_t n,
                               std::span<const std::pair<VertexId, VertexId>> edges,
                               VertexId root, bool loop = true) {
    if (n == 0) throw StructuralError("tree must have at least one vertex");
    if (root >= n) throw StructuralError("root id out of range");
    if (edges.size() + 1 > n) throw StructuralError("edge list contains a cycle");
    std::vector<std::vector<VertexId>> adj(n);
    for (const auto& [a, b] : edges) {
      if (a >= n || b >= n) throw StructuralError("edge endpoint out of range");
      if (a == b) throw StructuralError("edge list contains a self-loop");
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    std::vector<VertexId> parent(n, kNoVertex);
    std::vector<char> seen(n, 0);
    std::vector<VertexId> order{root};
    order.reserve(n);
    seen[root] = 1;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const VertexId v = order[i];
      for (VertexId u : adj[v]) {
        if (u == parent[v]) continue;
        if (seen[u]) throw StructuralError("edge list contains a cycle");
        seen[u] = 1;
        parent[u] = v;
        order.push_back(u);
      }
    }
    if (order.size() != n) throw StructuralError("edge list is disconnected");
    return from_parents(root, parent, std::vector<std::uint64_t>(n, 0), loop);
  }

  /// Builds a tree from a parent array (kNoVertex marks the root). Children are
  /// stored in increasing id order.
  static GrowthTree from_parents(VertexId root, std::span<const VertexId> parents,
                                 std::span<const std::uint64_t> birth_times, bool loop) {
    const std::size_t n = parents.size();
    if (n == 0 || birth_times.size() != n) throw StructuralError("empty or inconsistent parent array");
    if (root >= n || parents[root] != kNoVertex) throw StructuralError("root must have no parent");
    GrowthTree t;
    t.loop_ = loop;
    t.root_ = root;
    t.vertices_.resize(n);
    for (std::size_t v = 0; v < n; ++v) {
      t.vertices_[v].birth_time = birth_times[v];
      if (v == root) continue;
      const VertexId p = parents[v];
      if (p == kNoVertex) throw StructuralError("more than one root");
      if (p >= n || p == v) throw StructuralError("invalid parent id");
      t.vertices_[p].children.push_back(static_cast<VertexId>(v));
      t.vertices_[v].parent = p;
    }
    // Depths by BFS also detect cycles / unreachable vertices.
    std::vector<VertexId> order{root};
    order.reserve(n);
    for (std::size_t i = 0; i < order.size(); ++i) {
      const VertexId v = order[i];
      for (VertexId c : t.vertices_[v].children) {
        t.vertices_[c].depth = t.vertices_[v].depth + 1;
        order.push_back(c);
      }
    }
    if (order.size() != n) throw StructuralError("parent array contains a cycle");
    for (std::size_t v = 0; v < n; ++v) {
      auto& rec = t.vertices_[v];
      rec.degree = static_cast<std::uint32_t>(rec.children.size()) + (v == root ? (loop ? 2u : 0u) : 1u);
      t.height_ = std::max(t.height_, rec.depth);
      t.max_degree_ = std::max(t.max_degree_, rec.degree);
    }
    if (loop) {
      t.endpoints_.push_back(root);
      t.endpoints_.push_back(root);
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (v == root) continue;
      t.endpoints_.push_back(t.vertices_[v].parent);
      t.endpoints_.push_back(static_cast<VertexId>(v));
    }
    return t;
  }

  std::size_t size() const noexcept { return vertices_.size(); }
  VertexId root() const noexcept { return root_; }
  bool has_loop() const noexcept { return loop_; }
  /// Edge count, the loop included.
  std::uint64_t num_edges() const noexcept { return endpoints_.size() / 2; }
  std::uint64_t total_degree() const noexcept { return endpoints_.size(); }
  bool contains(VertexId v) const noexcept { return v < vertices_.size(); }

  const VertexRecord& vertex(VertexId v) const { return vertices_[v]; }
  std::uint32_t degree(VertexId v) const { return vertices_[v].degree; }
  std::uint32_t depth(VertexId v) const { return vertices_[v].depth; }
  VertexId parent(VertexId v) const { return vertices_[v].parent; }
  std::uint64_t birth_time(VertexId v) const { return vertices_[v].birth_time; }
  std::span<const VertexId> children(VertexId v) const { return vertices_[v].children; }
  std::span<const VertexId> endpoints() const noexcept { return endpoints_; }

  std::uint32_t height() const noexcept { return height_; }
  std::uint32_t max_degree() const noexcept { return max_degree_; }

  void reserve(std::size_t n) {
    vertices_.reserve(n);
    endpoints_.reserve(2 * n + 2);
  }

  VertexId add_leaf(VertexId parent, std::uint64_t birth_time = 0) {
    if (parent >= vertices_.size()) throw StructuralError("add_leaf: unknown parent " + std::to_string(parent));
    const auto id = static_cast<VertexId>(vertices_.size());
    VertexRecord rec;
    rec.parent = parent;
    rec.degree = 1;
    rec.depth = vertices_[parent].depth + 1;
    rec.birth_time = birth_time;
    vertices_.push_back(std::move(rec));
    auto& p = vertices_[parent];
    p.children.push_back(id);
    ++p.degree;
    endpoints_.push_back(parent);
    endpoints_.push_back(id);
    height_ = std::max(height_, vertices_[id].depth);
    max_degree_ = std::max(max_degree_, p.degree);
    return id;
  }

  /// The neighbor reached through edge slot `slot` of v, slot in [0, deg(v)).
  /// Slot order: loop (two slots, root only), then parent, then children.
  VertexId neighbor_at(VertexId v, std::uint64_t slot) const {
    const auto& rec = vertices_[v];
    if (v == root_) {
      if (loop_) {
        if (slot < 2) return v;
        return rec.children[slot - 2];
      }
      return rec.children[slot];
    }
    if (slot == 0) return rec.parent;
    return rec.children[slot - 1];
  }

  VertexId uniform_neighbor_step(VertexId v, Xoshiro256& rng) const {
    assert(v < vertices_.size());
    return neighbor_at(v, rng.below(vertices_[v].degree));
  }

  /// Draws v with probability deg(v)/total_degree.
  VertexId sample_degree_proportional(Xoshiro256& rng) const {
    assert(!endpoints_.empty());
    return endpoints_[rng.below(endpoints_.size())];
  }

  /// Distance through parent pointers (the loop never shortens a path).
  std::uint32_t distance(VertexId u, VertexId v) const {
    std::uint32_t d = 0;
    while (vertices_[u].depth > vertices_[v].depth) u = vertices_[u].parent, ++d;
    while (vertices_[v].depth > vertices_[u].depth) v = vertices_[v].parent, ++d;
    while (u != v) {
      u = vertices_[u].parent;
      v = vertices_[v].parent;
      d += 2;
    }
    return d;
  }

  /// Double BFS: the farthest vertex from any start is an end of a longest path.
  std::uint32_t diameter() const {
    if (vertices_.size() <= 1) return 0;
    std::vector<std::uint32_t> dist;
    const VertexId far = bfs_farthest(root_, dist);
    bfs_farthest(far, dist);
    return *std::max_element(dist.begin(), dist.end());
  }

  /// BFS distances from `source` to every vertex.
  std::vector<std::uint32_t> distances_from(VertexId source) const {
    std::vector<std::uint32_t> dist;
    bfs_farthest(source, dist);
    return dist;
  }

  std::uint64_t subtree_order(VertexId v) const {
    std::uint64_t count = 0;
    std::vector<VertexId> stack{v};
    while (!stack.empty()) {
      const VertexId u = stack.back();
      stack.pop_back();
      ++count;
      for (VertexId c : vertices_[u].children) stack.push_back(c);
    }
    return count;
  }

  /// degree -> number of vertices at depth k with that degree.
  std::map<std::uint32_t, std::uint64_t> level_degree_histogram(std::uint32_t k) const {
    std::map<std::uint32_t, std::uint64_t> hist;
    for (const auto& rec : vertices_)
      if (rec.depth == k) ++hist[rec.degree];
    return hist;
  }

  /// hist[d] = number of vertices of degree d (index 0 unused unless an isolated root).
  std::vector<std::uint64_t> degree_histogram() const {
    std::vector<std::uint64_t> hist(max_degree_ + 1, 0);
    for (const auto& rec : vertices_) ++hist[rec.degree];
    return hist;
  }

  /// Checks every structural invariant from scratch; throws StructuralError.
  void validate() const {
    const std::size_t n = vertices_.size();
    if (n == 0) throw StructuralError("empty tree");
    std::vector<std::uint64_t> multiplicity(n, 0);
    for (VertexId v : endpoints_) {
      if (v >= n) throw StructuralError("endpoint out of range");
      ++multiplicity[v];
    }
    std::uint64_t reachable = 0;
    std::vector<VertexId> stack{root_};
    std::uint32_t max_depth = 0, max_deg = 0;
    while (!stack.empty()) {
      const VertexId v = stack.back();
      stack.pop_back();
      ++reachable;
      const auto& rec = vertices_[v];
      for (VertexId c : rec.children) {
        if (vertices_[c].parent != v) throw StructuralError("child/parent mismatch");
        if (vertices_[c].depth != rec.depth + 1) throw StructuralError("depth mismatch");
        stack.push_back(c);
      }
      const std::uint32_t expected =
          static_cast<std::uint32_t>(rec.children.size()) + (v == root_ ? (loop_ ? 2u : 0u) : 1u);
      if (rec.degree != expected) throw StructuralError("stored degree mismatch");
      if (multiplicity[v] != rec.degree) throw StructuralError("endpoint multiplicity mismatch");
      max_depth = std::max(max_depth, rec.depth);
      max_deg = std::max(max_deg, rec.degree);
    }
    if (reachable != n) throw StructuralError("tree is not connected / acyclic");
    if (vertices_[root_].parent != kNoVertex) throw StructuralError("root has a parent");
    if (max_depth != height_ || max_deg != max_degree_) throw StructuralError("cached height/max degree stale");
    if (endpoints_.size() != 2 * (n - 1) + (loop_ ? 2 : 0)) throw StructuralError("edge count mismatch");
  }

  bool operator==(const GrowthTree& other) const {
    if (root_ != other.root_ || loop_ != other.loop_ || size() != other.size()) return false;
    for (std::size_t v = 0; v < size(); ++v) {
      const auto& a = vertices_[v];
      const auto& b = other.vertices_[v];
      if (a.parent != b.parent || a.birth_time != b.birth_time || a.children != b.children) return false;
    }
    return true;
  }

 private:
  void init_root(bool loop) {
    loop_ = loop;
    root_ = 0;
    vertices_.assign(1, VertexRecord{});
    vertices_[0].degree = loop ? 2 : 0;
    max_degree_ = vertices_[0].degree;
    height_ = 0;
    endpoints_.clear();
    if (loop) endpoints_.assign(2, 0);
  }

  VertexId bfs_farthest(VertexId source, std::vector<std::uint32_t>& dist) const {
    const std::size_t n = vertices_.size();
    dist.assign(n, 0xFFFFFFFFu);
    std::vector<VertexId> queue;
    queue.reserve(n);
    queue.push_back(source);
    dist[source] = 0;
    VertexId last = source;
    for (std::size_t i = 0; i < queue.size(); ++i) {
      const VertexId v = queue[i];
      last = v;
      const auto& rec = vertices_[v];
      if (rec.parent != kNoVertex && dist[rec.parent] == 0xFFFFFFFFu) {
        dist[rec.parent] = dist[v] + 1;
        queue.push_back(rec.parent);
      }
      for (VertexId c : rec.children) {
        if (dist[c] == 0xFFFFFFFFu) {
          dist[c] = dist[v] + 1;
          queue.push_back(c);
        }
      }
    }
    return last;
  }

  std::vector<VertexRecord> vertices_;
  std::vector<VertexId> endpoints_;
  VertexId root_ = 0;
  bool loop_ = true;
  std::uint32_t height_ = 0;
  std::uint32_t max_degree_ = 0;
};

// Snapshot format:
//   #tbrw-tree v1 root=<id> loop=<0|1>
//   <id> <parent_id or -1> <birth_time>      (one line per vertex, id order)

inline void write_snapshot(std::ostream& out, const GrowthTree& tree) {
  out << "#tbrw-tree v1 root=" << tree.root() << " loop=" << (tree.has_loop() ? 1 : 0) << '\n';
  for (VertexId v = 0; v < tree.size(); ++v) {
    out << v << ' ';
    if (tree.parent(v) == kNoVertex)
      out << -1;
    else
      out << tree.parent(v);
    out << ' ' << tree.birth_time(v) << '\n';
  }
}

inline GrowthTree read_snapshot(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw StructuralError("snapshot: missing header");
  long long root = -1;
  int loop = -1;
  {
    std::istringstream hs(line);
    std::string magic, version, root_field, loop_field;
    hs >> magic >> version >> root_field >> loop_field;
    if (magic != "#tbrw-tree" || version != "v1") throw StructuralError("snapshot: bad header");
    if (root_field.rfind("root=", 0) != 0 || loop_field.rfind("loop=", 0) != 0)
      throw StructuralError("snapshot: bad header fields");
    try {
      root = std::stoll(root_field.substr(5));
      loop = std::stoi(loop_field.substr(5));
    } catch (const std::exception&) {
      throw StructuralError("snapshot: bad header values");
    }
    if (loop != 0 && loop != 1) throw StructuralError("snapshot: loop must be 0 or 1");
  }
  std::vector<std::tuple<long long, long long, std::uint64_t>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    long long id, parent;
    std::uint64_t birth;
    if (!(ls >> id >> parent >> birth)) throw StructuralError("snapshot: malformed line '" + line + "'");
    rows.emplace_back(id, parent, birth);
  }
  const std::size_t n = rows.size();
  std::vector<VertexId> parents(n, kNoVertex);
  std::vector<std::uint64_t> births(n, 0);
  std::vector<char> seen(n, 0);
  for (const auto& [id, parent, birth] : rows) {
    if (id < 0 || static_cast<std::size_t>(id) >= n || seen[id]) throw StructuralError("snapshot: ids must be 0..n-1");
    seen[id] = 1;
    if (parent < -1 || parent >= static_cast<long long>(n)) throw StructuralError("snapshot: parent out of range");
    parents[id] = parent < 0 ? kNoVertex : static_cast<VertexId>(parent);
    births[id] = birth;
  }
  if (root < 0 || static_cast<std::size_t>(root) >= n) throw StructuralError("snapshot: root out of range");
  return GrowthTree::from_parents(static_cast<VertexId>(root), parents, births, loop == 1);
}

}  // namespace tbrw
