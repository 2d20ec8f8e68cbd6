#pragma once

// The tree builder random walk and its run instrumentation.
//
// One step at time n (n >= 1):
//   1. draw Z_n from the law at index n (one uniform); if it fires, attach w_n
//      leaves to X_{n-1}, all born at time n;
//   2. move X_{n-1} -> X_n to a uniform neighbor on the modified tree.
// Instrumentation never draws from the walk's generator, so enabling it does
// not change the trajectory.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "tbrw/error.hpp"
#include "tbrw/law.hpp"
#include "tbrw/rng.hpp"
#include "tbrw/tree.hpp"

namespace tbrw {

struct WalkState {
  std::uint64_t time = 0;
  VertexId position = 0;
  Xoshiro256 rng;
};

/// One entry per growth event (a step at which at least one leaf was added).
struct GrowthLog {
  std::vector<std::uint64_t> tau;
  std::vector<std::uint64_t> delta_tau;
  std::vector<VertexId> attach_vertex;
  std::vector<std::uint64_t> leaf_counts;
  /// Filled only when a ColorLedger is attached; one flag per growth event.
  std::vector<char> good;

  std::size_t size() const noexcept { return tau.size(); }

  void record(std::uint64_t n, VertexId attach, std::uint64_t leaves) {
    delta_tau.push_back(n - (tau.empty() ? 0 : tau.back()));
    tau.push_back(n);
    attach_vertex.push_back(attach);
    leaf_counts.push_back(leaves);
  }
};

/// Blue/red half-edge coloring of the growing tree. The seed's half-edges
/// start blue (B = 2 * seed edges, R = 0); edge k then gets colored from the
/// length of its growth interval:
///   bad  (delta_tau < k^(2+delta) + 1): both half-edges red;
///   good: the new vertex's half-edge blue, the attach vertex's half-edge blue
///         with probability B_{k-1} / (2(k-1)).
class ColorLedger {
 public:
  ColorLedger(const GrowthTree& seed, double delta, std::uint64_t coin_seed)
      : delta_(delta), rng_(coin_seed), k_(seed.num_edges()), blue_(seed.total_degree()) {
    if (!(delta > 0.0)) throw ConfigError("coloring delta must be positive");
    blue_deg_.resize(seed.size());
    red_deg_.assign(seed.size(), 0);
    for (VertexId v = 0; v < seed.size(); ++v) blue_deg_[v] = seed.degree(v);
    for (auto d : blue_deg_) bump_hist(d, +1);
  }

  static bool is_good(std::uint64_t k, std::uint64_t delta_tau, double delta) {
    return static_cast<long double>(delta_tau) >=
           std::pow(static_cast<long double>(k), 2.0L + static_cast<long double>(delta)) + 1.0L;
  }

  /// Colors edge k+1 (new vertex `child` attached to `attach`). Returns whether the interval was good.
  bool color_growth_event(VertexId child, VertexId attach, std::uint64_t delta_tau) {
    const bool good = is_good(k_ + 1, delta_tau, delta_);
    const bool coin = good && rng_.uniform() * static_cast<double>(2 * k_) < static_cast<double>(blue_);
    color_edge(child, attach, good, coin);
    return good;
  }

  /// Deterministic core: applies one edge with the given verdict and coin.
  void color_edge(VertexId child, VertexId attach, bool good, bool coin_blue) {
    ++k_;
    if (child >= blue_deg_.size()) {
      blue_deg_.resize(child + 1, 0);
      red_deg_.resize(child + 1, 0);
      bump_hist(0, +1);
    }
    if (good) {
      add_blue(child);
      if (coin_blue)
        add_blue(attach);
      else
        add_red(attach);
    } else {
      add_red(child);
      add_red(attach);
    }
  }

  std::uint64_t k() const noexcept { return k_; }
  std::uint64_t blue() const noexcept { return blue_; }
  std::uint64_t red() const noexcept { return red_; }
  std::uint32_t blue_degree(VertexId v) const { return blue_deg_[v]; }
  std::uint32_t red_degree(VertexId v) const { return red_deg_[v]; }
  /// hist[d] = number of vertices with blue degree d.
  const std::vector<std::uint64_t>& blue_degree_histogram() const noexcept { return hist_; }
  double delta() const noexcept { return delta_; }

 private:
  void bump_hist(std::uint32_t d, int by) {
    if (d >= hist_.size()) hist_.resize(d + 1, 0);
    hist_[d] += static_cast<std::uint64_t>(static_cast<std::int64_t>(by));
  }

  void add_blue(VertexId v) {
    bump_hist(blue_deg_[v], -1);
    ++blue_deg_[v];
    bump_hist(blue_deg_[v], +1);
    ++blue_;
  }

  void add_red(VertexId v) {
    ++red_deg_[v];
    ++red_;
  }

  double delta_;
  Xoshiro256 rng_;
  std::uint64_t k_;
  std::uint64_t blue_;
  std::uint64_t red_ = 0;
  std::vector<std::uint32_t> blue_deg_;
  std::vector<std::uint32_t> red_deg_;
  std::vector<std::uint64_t> hist_;
};

/// Observes the window of steps (start, start + length]. Vertices born inside
/// the window are red; for each red vertex v_k it tracks the order D_{k,t} of
/// its subtree, the first time eta_{k,d} that order reaches d, and the visits
/// N^(d) to the subtree while its order equals d. Orders >= d_cap share the
/// last bucket.
class SubtreeTracker {
 public:
  struct Tracked {
    VertexId vertex = kNoVertex;
    std::uint64_t birth = 0;
    std::uint64_t order = 1;
    std::vector<std::uint64_t> first_reach;  // [d-1] = eta_{k,d}, 0 if not reached
    std::vector<std::uint64_t> subtree_visits;  // [d-1] = N^(d)
    std::uint64_t visits = 0;  // visits to the vertex itself
  };

  SubtreeTracker(std::uint64_t start, std::uint64_t length, const GrowthTree& tree, std::uint32_t d_cap = 8)
      : start_(start), end_(start + length), first_red_(static_cast<VertexId>(tree.size())), d_cap_(d_cap) {
    if (d_cap < 1) throw ConfigError("subtree tracker needs d_cap >= 1");
  }

  std::uint64_t start() const noexcept { return start_; }
  std::uint64_t end() const noexcept { return end_; }
  bool in_window(std::uint64_t n) const noexcept { return n > start_ && n <= end_; }
  bool is_red(VertexId v) const noexcept { return v >= first_red_ && v - first_red_ < tracked_.size(); }

  void on_leaf(const GrowthTree& tree, VertexId child, std::uint64_t n) {
    if (!in_window(n)) return;
    if (child != first_red_ + tracked_.size()) throw StructuralError("subtree tracker: vertex ids out of order");
    Tracked t;
    t.vertex = child;
    t.birth = n;
    t.first_reach.assign(d_cap_, 0);
    t.subtree_visits.assign(d_cap_, 0);
    t.first_reach[0] = n;
    tracked_.push_back(std::move(t));
    for (VertexId u = tree.parent(child); u != kNoVertex && is_red(u); u = tree.parent(u)) {
      Tracked& a = tracked_[u - first_red_];
      ++a.order;
      if (a.order <= d_cap_ && a.first_reach[a.order - 1] == 0) a.first_reach[a.order - 1] = n;
    }
  }

  void on_visit(const GrowthTree& tree, VertexId x, std::uint64_t n) {
    if (!in_window(n)) return;
    ++steps_;
    if (!is_red(x)) return;
    ++red_visits_;
    ++tracked_[x - first_red_].visits;
    for (VertexId u = x; u != kNoVertex && is_red(u); u = tree.parent(u)) {
      Tracked& a = tracked_[u - first_red_];
      ++a.subtree_visits[std::min<std::uint64_t>(a.order, d_cap_) - 1];
    }
  }

  /// N_{start, end}: visits to red vertices during the window.
  std::uint64_t red_visits() const noexcept { return red_visits_; }
  std::uint64_t steps_observed() const noexcept { return steps_; }
  const std::vector<Tracked>& tracked() const noexcept { return tracked_; }
  std::uint32_t d_cap() const noexcept { return d_cap_; }

 private:
  std::uint64_t start_;
  std::uint64_t end_;
  VertexId first_red_;
  std::uint32_t d_cap_;
  std::uint64_t steps_ = 0;
  std::uint64_t red_visits_ = 0;
  std::vector<Tracked> tracked_;
};

/// Residence-time statistics for eta_k = inf{n > eta_{k-1} : deg_{T_n}(X_n) >= 2}.
/// Entries are grouped in dyadic blocks of k: block b holds k in [2^b, 2^{b+1}).
struct EtaHistogram {
  std::uint32_t m_max = 8;
  std::vector<std::uint64_t> block_count;            // [b] number of k seen
  std::vector<std::vector<std::uint64_t>> at_least;  // [b][m-1] #{k : delta_eta_k >= m}, m = 1..m_max
  std::uint64_t count = 0;

  void add(std::uint64_t delta_eta) {
    ++count;
    const auto b = static_cast<std::size_t>(std::bit_width(count) - 1);
    if (b >= block_count.size()) {
      block_count.resize(b + 1, 0);
      at_least.resize(b + 1, std::vector<std::uint64_t>(m_max, 0));
    }
    ++block_count[b];
    const auto top = std::min<std::uint64_t>(delta_eta, m_max);
    for (std::uint64_t m = 1; m <= top; ++m) ++at_least[b][m - 1];
  }
};

struct WalkInstrumentation {
  std::uint64_t root_visits = 0;  // #{1 <= j <= n : X_j = root}
  /// Sum_{j=1}^{n-1} Z_{j+1} Z_j 1{deg_{T_{j-1}}(X_{j-1}) >= 2} (every term whose factors are known at time n).
  std::uint64_t l_count = 0;
  bool track_eta = false;
  std::uint64_t last_eta = 0;
  EtaHistogram eta;
};

struct CheckpointRow {
  std::uint64_t n = 0;
  std::uint64_t size = 0;
  std::uint32_t diam = 0;
  std::uint32_t height = 0;
  std::uint32_t maxdeg = 0;
  std::uint32_t dist_root = 0;
  std::uint64_t root_visits = 0;
  std::uint64_t l_count = 0;
  std::optional<std::uint64_t> blue;
  std::optional<std::uint64_t> red;

  bool operator==(const CheckpointRow&) const = default;
};

struct EngineOptions {
  std::uint64_t seed = 0;
  /// Attach a ColorLedger with this delta.
  std::optional<double> color_delta;
  bool track_eta = false;
  std::uint32_t eta_m_max = 8;
  std::size_t reserve_vertices = 0;
};

class Engine {
 public:
  Engine(LawSequence law, GrowthTree seed_tree, const EngineOptions& options = {})
      : law_(std::move(law)), tree_(std::move(seed_tree)), indicator_(law_) {
    tree_.validate();
    state_.position = tree_.root();
    state_.rng.reseed(options.seed);
    if (options.reserve_vertices > 0) tree_.reserve(options.reserve_vertices);
    if (options.color_delta)
      ledger_.emplace(tree_, *options.color_delta, mix64(options.seed ^ 0xC0102EDULL));
    inst_.track_eta = options.track_eta;
    inst_.eta.m_max = options.eta_m_max;
  }

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;
  // indicator_ points into law_, so moving must rebind it.
  Engine(Engine&& other) noexcept
      : law_(std::move(other.law_)),
        tree_(std::move(other.tree_)),
        indicator_(law_),
        state_(other.state_),
        log_(std::move(other.log_)),
        ledger_(std::move(other.ledger_)),
        inst_(std::move(other.inst_)),
        trackers_(std::move(other.trackers_)),
        prev_z_(other.prev_z_),
        prev_indicator_(other.prev_indicator_) {}

  void step() {
    const std::uint64_t n = ++state_.time;
    const VertexId x = state_.position;
    const bool deg2 = tree_.degree(x) >= 2;
    std::uint64_t z = 0;
    if (indicator_.draw(n, state_.rng.uniform())) {
      z = law_.weight_at(n);
      grow(n, x, z);
    }
    if (z != 0 && prev_z_ != 0 && prev_indicator_) inst_.l_count += z * prev_z_;
    prev_z_ = z;
    prev_indicator_ = deg2;
    const VertexId y = tree_.uniform_neighbor_step(x, state_.rng);
    state_.position = y;
    if (y == tree_.root()) ++inst_.root_visits;
    if (inst_.track_eta && tree_.degree(y) >= 2) {
      inst_.eta.add(n - inst_.last_eta);
      inst_.last_eta = n;
    }
    for (SubtreeTracker* t : trackers_) t->on_visit(tree_, y, n);
  }

  void run_to(std::uint64_t n_end) {
    while (state_.time < n_end) step();
  }

  /// Steps until the tree has at least `vertices` vertices or `budget` total steps elapsed.
  bool run_until_size(std::uint64_t vertices, std::uint64_t budget) {
    while (tree_.size() < vertices) {
      if (state_.time >= budget) return false;
      step();
    }
    return true;
  }

  /// The tracker must outlive its attachment; detach before destroying it.
  void attach(SubtreeTracker& tracker) { trackers_.push_back(&tracker); }
  void detach(SubtreeTracker& tracker) { std::erase(trackers_, &tracker); }

  CheckpointRow checkpoint() const {
    CheckpointRow row;
    row.n = state_.time;
    row.size = tree_.size();
    row.diam = tree_.diameter();
    row.height = tree_.height();
    row.maxdeg = tree_.max_degree();
    row.dist_root = tree_.depth(state_.position);
    row.root_visits = inst_.root_visits;
    row.l_count = inst_.l_count;
    if (ledger_) {
      row.blue = ledger_->blue();
      row.red = ledger_->red();
    }
    return row;
  }

  const GrowthTree& tree() const noexcept { return tree_; }
  GrowthTree release_tree() { return std::move(tree_); }
  const LawSequence& law() const noexcept { return law_; }
  const WalkState& state() const noexcept { return state_; }
  std::uint64_t time() const noexcept { return state_.time; }
  VertexId position() const noexcept { return state_.position; }
  const GrowthLog& growth_log() const noexcept { return log_; }
  const WalkInstrumentation& instrumentation() const noexcept { return inst_; }
  const ColorLedger* ledger() const noexcept { return ledger_ ? &*ledger_ : nullptr; }

 private:
  void grow(std::uint64_t n, VertexId x, std::uint64_t z) {
    log_.record(n, x, z);
    for (std::uint64_t i = 0; i < z; ++i) {
      const VertexId child = tree_.add_leaf(x, n);
      if (ledger_) {
        // Extra edges of a burst come with no waiting interval of their own.
        const bool good = i == 0 ? ledger_->color_growth_event(child, x, log_.delta_tau.back())
                                 : (ledger_->color_edge(child, x, false, false), false);
        if (i == 0) log_.good.push_back(good ? 1 : 0);
      }
      for (SubtreeTracker* t : trackers_) t->on_leaf(tree_, child, n);
    }
  }

  LawSequence law_;
  GrowthTree tree_;
  GrowthIndicator indicator_;
  WalkState state_;
  GrowthLog log_;
  std::optional<ColorLedger> ledger_;
  WalkInstrumentation inst_;
  std::vector<SubtreeTracker*> trackers_;
  std::uint64_t prev_z_ = 0;
  bool prev_indicator_ = false;
};

/// Runs `length` steps from the engine's current time with a fresh tracker
/// over (n, n + length], and returns it.
inline SubtreeTracker red_visit_window(Engine& engine, std::uint64_t length, std::uint32_t d_cap = 8) {
  SubtreeTracker tracker(engine.time(), length, engine.tree(), d_cap);
  engine.attach(tracker);
  engine.run_to(tracker.end());
  engine.detach(tracker);
  return tracker;
}

struct WindowSpec {
  std::uint64_t start = 0;
  std::uint64_t length = 0;
};

struct WindowResult {
  std::uint64_t start = 0;
  std::uint64_t length = 0;
  std::uint64_t red_visits = 0;
  std::uint64_t red_vertices = 0;
  std::uint32_t diam_before = 0;
  std::uint32_t diam_after = 0;
  /// [d-1] = number of red vertices whose subtree order reached d by the window end.
  std::vector<std::uint64_t> order_at_least;
};

struct RunOptions {
  std::uint64_t horizon_steps = 0;     // run to this time, or
  std::uint64_t horizon_vertices = 0;  // run until this many vertices (then horizon_steps is unused)
  std::uint64_t step_budget = std::uint64_t{1} << 40;
  std::vector<std::uint64_t> checkpoints;  // strictly increasing step indices
  std::vector<WindowSpec> windows;         // nonoverlapping, sorted by start
  std::uint32_t window_d_cap = 8;
  bool keep_tree = false;
};

struct RunReport {
  std::vector<CheckpointRow> rows;
  GrowthLog growth;
  std::vector<std::uint64_t> degree_histogram;
  std::uint64_t steps = 0;
  std::uint64_t final_size = 0;
  bool truncated = false;
  std::uint64_t root_visits = 0;
  std::uint64_t l_count = 0;
  EtaHistogram eta;
  std::vector<WindowResult> windows;
  std::optional<std::uint64_t> blue;
  std::optional<std::uint64_t> red;
  std::vector<std::uint64_t> blue_degree_histogram;
  std::optional<GrowthTree> tree;
};

/// Dyadic schedule 1, 2, 4, ... up to and including `horizon`.
inline std::vector<std::uint64_t> dyadic_checkpoints(std::uint64_t horizon, std::uint64_t first = 1) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t n = std::max<std::uint64_t>(first, 1); n < horizon; n *= 2) out.push_back(n);
  if (horizon > 0) out.push_back(horizon);
  return out;
}

inline RunReport run(const LawSequence& law, const GrowthTree& seed_tree, const EngineOptions& engine_options,
                     const RunOptions& options) {
  if (options.horizon_steps == 0 && options.horizon_vertices == 0) throw ConfigError("run: horizon must be positive");
  for (std::size_t i = 1; i < options.checkpoints.size(); ++i)
    if (options.checkpoints[i] <= options.checkpoints[i - 1]) throw ConfigError("run: checkpoints must increase");
  for (std::size_t i = 1; i < options.windows.size(); ++i)
    if (options.windows[i].start < options.windows[i - 1].start + options.windows[i - 1].length)
      throw ConfigError("run: windows must be sorted and disjoint");

  Engine engine(law, seed_tree, engine_options);
  RunReport report;
  std::size_t next_cp = 0;
  std::size_t next_win = 0;

  const bool by_vertices = options.horizon_vertices > 0;
  const std::uint64_t limit = by_vertices ? options.step_budget : std::min(options.horizon_steps, options.step_budget);
  report.truncated = !by_vertices && options.horizon_steps > options.step_budget;

  auto done = [&] { return by_vertices ? engine.tree().size() >= options.horizon_vertices : engine.time() >= limit; };
  auto flush_checkpoints = [&] {
    while (next_cp < options.checkpoints.size() && options.checkpoints[next_cp] <= engine.time()) {
      if (options.checkpoints[next_cp] == engine.time()) report.rows.push_back(engine.checkpoint());
      ++next_cp;
    }
  };

  flush_checkpoints();
  while (!done()) {
    if (engine.time() >= limit) {
      report.truncated = true;
      break;
    }
    std::uint64_t target = limit;
    if (next_cp < options.checkpoints.size()) target = std::min(target, options.checkpoints[next_cp]);
    if (next_win < options.windows.size()) {
      const WindowSpec& w = options.windows[next_win];
      if (w.start == engine.time()) {
        WindowResult result;
        result.start = w.start;
        result.length = w.length;
        result.diam_before = engine.tree().diameter();
        SubtreeTracker tracker(engine.time(), w.length, engine.tree(), options.window_d_cap);
        engine.attach(tracker);
        while (engine.time() < tracker.end() && !(by_vertices && done())) {
          std::uint64_t stop = tracker.end();
          if (next_cp < options.checkpoints.size()) stop = std::min(stop, options.checkpoints[next_cp]);
          engine.run_to(stop);
          flush_checkpoints();
        }
        engine.detach(tracker);
        result.diam_after = engine.tree().diameter();
        result.red_visits = tracker.red_visits();
        result.red_vertices = tracker.tracked().size();
        result.order_at_least.assign(tracker.d_cap(), 0);
        for (const auto& t : tracker.tracked())
          for (std::uint64_t d = 1; d <= std::min<std::uint64_t>(t.order, tracker.d_cap()); ++d)
            ++result.order_at_least[d - 1];
        report.windows.push_back(std::move(result));
        ++next_win;
        continue;
      }
      if (w.start > engine.time()) target = std::min(target, w.start);
    }
    if (by_vertices) {
      while (engine.time() < target && !done()) engine.step();
    } else {
      engine.run_to(target);
    }
    flush_checkpoints();
    while (next_win < options.windows.size() && options.windows[next_win].start < engine.time()) ++next_win;
  }

  report.steps = engine.time();
  report.final_size = engine.tree().size();
  report.degree_histogram = engine.tree().degree_histogram();
  report.root_visits = engine.instrumentation().root_visits;
  report.l_count = engine.instrumentation().l_count;
  report.eta = engine.instrumentation().eta;
  report.growth = engine.growth_log();
  if (const ColorLedger* ledger = engine.ledger()) {
    report.blue = ledger->blue();
    report.red = ledger->red();
    report.blue_degree_histogram = ledger->blue_degree_histogram();
  }
  if (options.keep_tree) report.tree = engine.release_tree();
  return report;
}

}  // namespace tbrw
