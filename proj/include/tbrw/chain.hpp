#pragma once

// Exact analysis of simple random walk on a fixed tree (with its root loop):
// t-step laws, separation and total variation distances, spectrum, hitting
// times, visit sums, and the optimal strong stationary time.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "tbrw/error.hpp"
#include "tbrw/law.hpp"
#include "tbrw/rng.hpp"
#include "tbrw/tree.hpp"

namespace tbrw {

using Distribution = std::vector<double>;

struct Spectrum {
  std::vector<double> eigenvalues;  // descending, eigenvalues[0] = 1
  double gamma_star = 0.0;          // 1 - max_{i>=2} |lambda_i|
  double t_rel = 0.0;               // 1 / gamma_star
  double lambda_min = 0.0;
};

struct MixingTime {
  std::uint64_t t = 0;
  bool lower_bound = false;  // threshold not reached by t_max; t = t_max + 1 is a lower bound
};

struct EigentimeCheck {
  double lhs = 0.0;  // sum_y pi(y) E_x[H_y]
  double rhs = 0.0;  // sum_{i>=2} 1 / (1 - lambda_i)
  double gap = 0.0;
};

struct GeometricBounds {
  std::uint32_t diam = 0;
  std::uint64_t edges = 0;        // |E|, loop included
  double i_sigma = 0.0;           // sum_x (2 dist(x, root) + 1) deg(x)
  double lambda_min_path = 0.0;   // -1 + 2 / i_sigma
  double lambda_min_diam = 0.0;   // -1 + 1 / ((2 diam + 1) |E|)
  double t_rel_bound = 0.0;       // (2 diam + 1) |E|
  double t_mix_bound(double eps) const { return t_rel_bound * std::log(2.0 * static_cast<double>(edges) / eps); }
};

class ChainAnalysis {
 public:
  static constexpr std::size_t kDenseCap = 2000;

  static ChainAnalysis from_tree(const GrowthTree& tree) {
    if (!tree.has_loop() && tree.size() > 1)
      throw ConfigError("chain analysis needs the root loop (the walk would be periodic)");
    ChainAnalysis c;
    const std::size_t n = tree.size();
    c.tree_ = tree;
    c.total_degree_ = tree.total_degree();
    c.deg_.resize(n);
    c.offset_.assign(n + 1, 0);
    for (VertexId v = 0; v < n; ++v) {
      c.deg_[v] = tree.degree(v);
      const std::size_t distinct = tree.children(v).size() + (v == tree.root() ? (tree.has_loop() ? 1 : 0) : 1);
      c.offset_[v + 1] = c.offset_[v] + distinct;
    }
    c.col_.resize(c.offset_[n]);
    c.slots_.resize(c.offset_[n]);
    c.prob_.resize(c.offset_[n]);
    for (VertexId v = 0; v < n; ++v) {
      std::size_t k = c.offset_[v];
      auto put = [&](VertexId u, std::uint32_t slots) {
        c.col_[k] = u;
        c.slots_[k] = slots;
        c.prob_[k] = static_cast<double>(slots) / static_cast<double>(c.deg_[v]);
        ++k;
      };
      if (v == tree.root()) {
        if (tree.has_loop()) put(v, 2);
      } else {
        put(tree.parent(v), 1);
      }
      for (VertexId ch : tree.children(v)) put(ch, 1);
    }
    c.pi_.resize(n);
    for (VertexId v = 0; v < n; ++v)
      c.pi_[v] = static_cast<double>(c.deg_[v]) / static_cast<double>(c.total_degree_);
    return c;
  }

  std::size_t size() const noexcept { return deg_.size(); }
  const GrowthTree& tree() const noexcept { return tree_; }
  const Distribution& pi() const noexcept { return pi_; }
  std::uint32_t degree(VertexId v) const { return deg_[v]; }
  std::uint64_t total_degree() const noexcept { return total_degree_; }
  std::uint64_t edges() const noexcept { return total_degree_ / 2; }

  /// P(x, y), 0 when not adjacent.
  double transition(VertexId x, VertexId y) const {
    for (std::size_t k = offset_[x]; k < offset_[x + 1]; ++k)
      if (col_[k] == y) return prob_[k];
    return 0.0;
  }

  /// Edge slots from x to y (2 for the root loop).
  std::uint32_t slots(VertexId x, VertexId y) const {
    for (std::size_t k = offset_[x]; k < offset_[x + 1]; ++k)
      if (col_[k] == y) return slots_[k];
    return 0;
  }

  template <typename F>
  void for_each_neighbor(VertexId x, F&& f) const {
    for (std::size_t k = offset_[x]; k < offset_[x + 1]; ++k) f(col_[k], prob_[k]);
  }

  /// Detailed balance in exact integer arithmetic:
  /// pi(x) P(x,y) = slots(x,y)/D and pi(y) P(y,x) = slots(y,x)/D, so compare slot counts.
  bool detailed_balance_exact() const {
    for (VertexId x = 0; x < size(); ++x)
      for (std::size_t k = offset_[x]; k < offset_[x + 1]; ++k)
        if (slots(col_[k], x) != slots_[k]) return false;
    return true;
  }

  /// Largest |sum_y P(x,y) - 1| over rows.
  double row_sum_error() const {
    double worst = 0.0;
    for (VertexId x = 0; x < size(); ++x) {
      double s = 0.0;
      for (std::size_t k = offset_[x]; k < offset_[x + 1]; ++k) s += prob_[k];
      worst = std::max(worst, std::fabs(s - 1.0));
    }
    return worst;
  }

  Distribution point_mass(VertexId x) const {
    Distribution d(size(), 0.0);
    d.at(x) = 1.0;
    return d;
  }

  /// out = d P.
  void step(const Distribution& d, Distribution& out) const {
    out.assign(size(), 0.0);
    for (VertexId x = 0; x < size(); ++x) {
      const double mass = d[x];
      if (mass == 0.0) continue;
      for (std::size_t k = offset_[x]; k < offset_[x + 1]; ++k) out[col_[k]] += mass * prob_[k];
    }
  }

  Distribution evolve(Distribution d, std::uint64_t t) const {
    if (d.size() != size()) throw ConfigError("evolve: distribution size mismatch");
    Distribution tmp;
    for (std::uint64_t i = 0; i < t; ++i) {
      step(d, tmp);
      d.swap(tmp);
    }
    return d;
  }

  /// max_y (1 - d(y)/pi(y)).
  double separation_of(const Distribution& d) const {
    double s = -std::numeric_limits<double>::infinity();
    for (VertexId y = 0; y < size(); ++y) s = std::max(s, 1.0 - d[y] / pi_[y]);
    return s;
  }

  double tv_of(const Distribution& d) const {
    double s = 0.0;
    for (VertexId y = 0; y < size(); ++y) s += std::fabs(d[y] - pi_[y]);
    return 0.5 * s;
  }

  double separation(VertexId x, std::uint64_t t) const { return separation_of(evolve(point_mass(x), t)); }

  /// s_x(t) for t = 0..t_max.
  std::vector<double> separation_profile(VertexId x, std::uint64_t t_max) const {
    std::vector<double> out;
    out.reserve(t_max + 1);
    Distribution d = point_mass(x), tmp;
    for (std::uint64_t t = 0; t <= t_max; ++t) {
      out.push_back(separation_of(d));
      step(d, tmp);
      d.swap(tmp);
    }
    return out;
  }

  /// Worst-case profiles over all starts, t = 0..t_max: d(t) and s(t).
  struct Profiles {
    std::vector<double> tv;
    std::vector<double> sep;
  };

  Profiles worst_case_profiles(std::uint64_t t_max) const {
    const std::size_t n = size();
    // Row x of `m` is P^t(x, .).
    std::vector<double> m(n * n, 0.0), next(n * n, 0.0);
    for (std::size_t x = 0; x < n; ++x) m[x * n + x] = 1.0;
    Profiles out;
    out.tv.reserve(t_max + 1);
    out.sep.reserve(t_max + 1);
    for (std::uint64_t t = 0;; ++t) {
      double tv = 0.0, sep = -std::numeric_limits<double>::infinity();
      for (std::size_t x = 0; x < n; ++x) {
        const double* row = &m[x * n];
        double s = 0.0;
        for (std::size_t y = 0; y < n; ++y) {
          s += std::fabs(row[y] - pi_[y]);
          sep = std::max(sep, 1.0 - row[y] / pi_[y]);
        }
        tv = std::max(tv, 0.5 * s);
      }
      out.tv.push_back(tv);
      out.sep.push_back(sep);
      if (t == t_max) break;
      std::fill(next.begin(), next.end(), 0.0);
      for (std::size_t x = 0; x < n; ++x) {
        const double* row = &m[x * n];
        double* dst = &next[x * n];
        for (std::size_t z = 0; z < n; ++z) {
          const double mass = row[z];
          if (mass == 0.0) continue;
          for (std::size_t k = offset_[z]; k < offset_[z + 1]; ++k) dst[col_[k]] += mass * prob_[k];
        }
      }
      m.swap(next);
    }
    return out;
  }

  std::vector<double> tv_profile(std::uint64_t t_max) const { return worst_case_profiles(t_max).tv; }

  /// Smallest t with d(t) <= eps.
  MixingTime t_mix(double eps = 0.25, std::uint64_t t_max = 1'000'000) const {
    const std::size_t n = size();
    std::vector<double> m(n * n, 0.0), next(n * n, 0.0);
    for (std::size_t x = 0; x < n; ++x) m[x * n + x] = 1.0;
    for (std::uint64_t t = 0; t <= t_max; ++t) {
      double worst = 0.0;
      for (std::size_t x = 0; x < n && worst <= eps; ++x) {
        double s = 0.0;
        for (std::size_t y = 0; y < n; ++y) s += std::fabs(m[x * n + y] - pi_[y]);
        worst = std::max(worst, 0.5 * s);
      }
      if (worst <= eps) return {t, false};
      std::fill(next.begin(), next.end(), 0.0);
      for (std::size_t x = 0; x < n; ++x)
        for (std::size_t z = 0; z < n; ++z) {
          const double mass = m[x * n + z];
          if (mass == 0.0) continue;
          for (std::size_t k = offset_[z]; k < offset_[z + 1]; ++k) next[x * n + col_[k]] += mass * prob_[k];
        }
      m.swap(next);
    }
    return {t_max + 1, true};
  }

  /// Dense symmetric eigen-solve of D^{1/2} P D^{-1/2}.
  Spectrum spectrum() const {
    const std::size_t n = size();
    if (n > kDenseCap) throw DomainError("spectrum: more than 2000 states; use geometric_bounds() instead");
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (VertexId x = 0; x < n; ++x)
      for (std::size_t k = offset_[x]; k < offset_[x + 1]; ++k)
        s(x, col_[k]) = static_cast<double>(slots_[k]) /
                        std::sqrt(static_cast<double>(deg_[x]) * static_cast<double>(deg_[col_[k]]));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw DomainError("spectrum: eigen-solve failed");
    Spectrum out;
    const auto& ev = solver.eigenvalues();
    for (Eigen::Index i = ev.size() - 1; i >= 0; --i) out.eigenvalues.push_back(ev(i));
    double worst = 0.0;
    for (std::size_t i = 1; i < out.eigenvalues.size(); ++i) worst = std::max(worst, std::fabs(out.eigenvalues[i]));
    out.gamma_star = 1.0 - worst;
    out.t_rel = n == 1 ? 1.0 : 1.0 / out.gamma_star;
    out.lambda_min = out.eigenvalues.back();
    return out;
  }

  GeometricBounds geometric_bounds() const {
    GeometricBounds b;
    b.diam = tree_.diameter();
    b.edges = edges();
    for (VertexId x = 0; x < size(); ++x)
      b.i_sigma += (2.0 * tree_.depth(x) + 1.0) * static_cast<double>(deg_[x]);
    b.lambda_min_path = -1.0 + 2.0 / b.i_sigma;
    b.t_rel_bound = (2.0 * b.diam + 1.0) * static_cast<double>(b.edges);
    b.lambda_min_diam = -1.0 + 1.0 / b.t_rel_bound;
    return b;
  }

  /// h[x] = E_x[H_y] for the fixed target y. The tree is re-rooted at y and
  /// eliminated leaves-first: each child c of x satisfies h(c) = a_c + h(x) with
  ///   a_x = (1 + sum_{children c} P(x,c) a_c) / P(x, parent).
  std::vector<double> hitting_times_to(VertexId y) const {
    const std::size_t n = size();
    std::vector<VertexId> parent(n, kNoVertex), order;
    order.reserve(n);
    std::vector<char> seen(n, 0);
    order.push_back(y);
    seen[y] = 1;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const VertexId u = order[i];
      for (std::size_t k = offset_[u]; k < offset_[u + 1]; ++k) {
        const VertexId w = col_[k];
        if (seen[w]) continue;
        seen[w] = 1;
        parent[w] = u;
        order.push_back(w);
      }
    }
    if (order.size() != n) throw DomainError("hitting_times: chain is not irreducible");
    std::vector<double> a(n, 0.0), acc(n, 0.0);
    for (std::size_t i = order.size(); i-- > 1;) {
      const VertexId x = order[i];
      const double to_parent = transition(x, parent[x]);
      if (!(to_parent > 0.0)) throw DomainError("hitting_times: singular elimination step");
      a[x] = (1.0 + acc[x]) / to_parent;
      acc[parent[x]] += transition(parent[x], x) * a[x];
    }
    std::vector<double> h(n, 0.0);
    for (std::size_t i = 1; i < order.size(); ++i) h[order[i]] = h[parent[order[i]]] + a[order[i]];
    return h;
  }

  /// Full matrix, row-major: H[x * n + y] = E_x[H_y].
  std::vector<double> hitting_times() const {
    const std::size_t n = size();
    std::vector<double> out(n * n);
    for (VertexId y = 0; y < n; ++y) {
      const auto h = hitting_times_to(y);
      for (VertexId x = 0; x < n; ++x) out[x * n + y] = h[x];
    }
    return out;
  }

  /// E_v[H_v^+] = 1 + sum_z P(v,z) E_z[H_v].
  double return_time(VertexId v) const {
    const auto h = hitting_times_to(v);
    double r = 1.0;
    for_each_neighbor(v, [&](VertexId z, double p) { r += p * h[z]; });
    return r;
  }

  EigentimeCheck eigentime_check(VertexId x, const Spectrum& spec) const {
    EigentimeCheck out;
    const std::size_t n = size();
    for (VertexId y = 0; y < n; ++y) out.lhs += pi_[y] * hitting_times_to(y)[x];
    for (std::size_t i = 1; i < spec.eigenvalues.size(); ++i) out.rhs += 1.0 / (1.0 - spec.eigenvalues[i]);
    out.gap = std::fabs(out.lhs - out.rhs);
    return out;
  }

  /// sum_{j=0..t} P^j(start, v).
  double expected_visits(VertexId start, VertexId v, std::uint64_t t) const {
    Distribution d = point_mass(start), tmp;
    double total = d[v];
    for (std::uint64_t j = 1; j <= t; ++j) {
      step(d, tmp);
      d.swap(tmp);
      total += d[v];
    }
    return total;
  }

  /// sum_{j=0..t} P^j(start, T(v)), T(v) the descendants of v (v included).
  double expected_subtree_visits(VertexId start, VertexId v, std::uint64_t t) const {
    const std::vector<char> in = subtree_mask(v);
    Distribution d = point_mass(start), tmp;
    auto mass_in = [&] {
      double s = 0.0;
      for (VertexId u = 0; u < size(); ++u)
        if (in[u]) s += d[u];
      return s;
    };
    double total = mass_in();
    for (std::uint64_t j = 1; j <= t; ++j) {
      step(d, tmp);
      d.swap(tmp);
      total += mass_in();
    }
    return total;
  }

  /// |T(v)| [ (t+3)/(|T|-1) + 48 |T| ].
  double visit_bound(VertexId v, std::uint64_t t) const {
    if (size() < 2) throw DomainError("visit_bound: needs at least two vertices");
    const auto n = static_cast<double>(size());
    return static_cast<double>(tree_.subtree_order(v)) * ((static_cast<double>(t) + 3.0) / (n - 1.0) + 48.0 * n);
  }

  /// P(eta_x > t) for the optimal strong stationary time equals s_x(t).
  std::vector<double> optimal_sst_tail(VertexId x, std::uint64_t t_max) const { return separation_profile(x, t_max); }

 private:
  std::vector<char> subtree_mask(VertexId v) const {
    std::vector<char> in(size(), 0);
    std::vector<VertexId> stack{v};
    while (!stack.empty()) {
      const VertexId u = stack.back();
      stack.pop_back();
      in[u] = 1;
      for (VertexId c : tree_.children(u)) stack.push_back(c);
    }
    return in;
  }

  GrowthTree tree_;
  std::uint64_t total_degree_ = 0;
  std::vector<std::uint32_t> deg_;
  std::vector<std::size_t> offset_;
  std::vector<VertexId> col_;
  std::vector<std::uint32_t> slots_;
  std::vector<double> prob_;
  Distribution pi_;
};

/// P(eta > l t_mix) <= 4 * 2^{-l/2}.
inline double sst_tail_bound(double l) { return 4.0 * std::pow(2.0, -l / 2.0); }

// ---------------------------------------------------------------------------
// Strong stationary time by mixture peeling.
//
// mu_t(y) = P(X_t = y, not stopped before t). At a peel time t the largest
// multiple a_t pi with a_t pi <= mu_t is removed, i.e. the walker at y stops
// with probability a_t pi(y) / mu_t(y). The stopped state is then pi-distributed
// and independent of the stop time. Peeling at every step (t0 = 1) gives
// P(eta > t) = s_x(t), the optimal tail.

struct SstSample {
  std::uint64_t eta = 0;
  VertexId state = kNoVertex;
  std::vector<VertexId> path;  // X_0..X_eta, when requested
  std::uint32_t block = 1;
  bool slow = false;  // some peel removed zero mass
};

class SstSampler {
 public:
  SstSampler(const ChainAnalysis& chain, VertexId x, std::uint32_t block = 1)
      : chain_(&chain), start_(x), block_(block) {
    if (block < 1) throw ConfigError("sst sampler: block length must be >= 1");
    if (x >= chain.size()) throw ConfigError("sst sampler: unknown start state");
    mu_ = chain.point_mass(x);
  }

  VertexId start() const noexcept { return start_; }
  std::uint32_t block() const noexcept { return block_; }

  /// Stop probability at time t in state y, given not stopped before t.
  double hazard(std::uint64_t t, VertexId y) {
    extend(t);
    return hazard_[t * chain_->size() + y];
  }

  /// P(eta > t) implied by the peeled masses.
  double tail(std::uint64_t t) {
    extend(t);
    return tail_[t];
  }

  bool slow() const noexcept { return slow_; }

  /// Runs `steps` steps from the start state. Returns X_steps and eta if eta <= steps.
  std::pair<VertexId, std::optional<std::uint64_t>> run(std::uint64_t steps, Xoshiro256& rng) {
    VertexId pos = start_;
    std::optional<std::uint64_t> eta;
    const GrowthTree& tree = chain_->tree();
    for (std::uint64_t t = 0;; ++t) {
      if (!eta && rng.uniform() < hazard(t, pos)) eta = t;
      if (t == steps) break;
      pos = tree.uniform_neighbor_step(pos, rng);
    }
    return {pos, eta};
  }

  SstSample sample(Xoshiro256& rng, bool keep_path = false, std::uint64_t max_steps = std::uint64_t{1} << 40) {
    SstSample s;
    s.block = block_;
    VertexId pos = start_;
    const GrowthTree& tree = chain_->tree();
    for (std::uint64_t t = 0; t <= max_steps; ++t) {
      if (keep_path) s.path.push_back(pos);
      if (rng.uniform() < hazard(t, pos)) {
        s.eta = t;
        s.state = pos;
        s.slow = slow_;
        return s;
      }
      pos = tree.uniform_neighbor_step(pos, rng);
    }
    throw DomainError("sst sampler: no stop within max_steps");
  }

 private:
  static constexpr double kExhausted = 1e-15;

  void extend(std::uint64_t t) {
    const std::size_t n = chain_->size();
    const auto& pi = chain_->pi();
    while (tail_.size() <= t) {
      const std::uint64_t now = tail_.size();
      double remaining = 0.0;
      for (double m : mu_) remaining += m;
      const std::size_t base = hazard_.size();
      hazard_.resize(base + n, 0.0);
      if (remaining <= kExhausted) {
        // Numerically nothing is left unstopped: stop wherever the walker is.
        std::fill(hazard_.begin() + static_cast<std::ptrdiff_t>(base), hazard_.end(), 1.0);
        std::fill(mu_.begin(), mu_.end(), 0.0);
        tail_.push_back(0.0);
        continue;
      }
      if (now % block_ == 0) {
        double a = std::numeric_limits<double>::infinity();
        for (VertexId y = 0; y < n; ++y) a = std::min(a, mu_[y] / pi[y]);
        a = std::max(a, 0.0);
        if (a == 0.0) slow_ = true;
        for (VertexId y = 0; y < n; ++y) {
          if (mu_[y] > 0.0) hazard_[base + y] = std::min(1.0, a * pi[y] / mu_[y]);
          mu_[y] = std::max(0.0, mu_[y] - a * pi[y]);
        }
        remaining -= a;
      }
      tail_.push_back(std::max(remaining, 0.0));
      Distribution next;
      chain_->step(mu_, next);
      mu_.swap(next);
    }
  }

  const ChainAnalysis* chain_;
  VertexId start_;
  std::uint32_t block_;
  Distribution mu_;
  std::vector<double> hazard_;  // row t: hazard at time t for each state
  std::vector<double> tail_;    // tail_[t] = P(eta > t)
  bool slow_ = false;
};

// ---------------------------------------------------------------------------
// Growth against mixing

struct CouplingFailure {
  double q = 0.0;          // P(eta > delta_tau - 1) = sum_m P(delta_tau = m) s_x(m - 1)
  double remainder = 0.0;  // bound on the omitted terms
  std::uint64_t terms = 0;
  bool widened = false;    // remainder above 1e-9
};

/// Sums until tail(m) s_x(m-1) <= 1e-13 (the omitted terms are bounded by it
/// since s_x is nonincreasing), or `max_terms` terms.
inline CouplingFailure coupling_failure_prob(const ChainAnalysis& chain, VertexId x, const LawSequence& law,
                                             std::uint64_t n0, std::uint64_t max_terms = 50'000'000) {
  CouplingFailure out;
  Distribution d = chain.point_mass(x), tmp;
  double tail = 1.0;  // P(delta_tau > m - 1)
  for (std::uint64_t m = 1; m <= max_terms; ++m) {
    const double s = chain.separation_of(d);  // s_x(m - 1)
    const double next_tail = tail * (1.0 - law.prob_at(n0 + m));
    out.q += (tail - next_tail) * s;
    tail = next_tail;
    out.terms = m;
    out.remainder = tail * std::max(s, 0.0);
    if (out.remainder <= 1e-13) break;
    chain.step(d, tmp);
    d.swap(tmp);
  }
  out.widened = out.remainder > 1e-9;
  return out;
}

struct RightBiasResult {
  std::vector<std::uint64_t> conditional;    // counts of X_{tau-1} given eta < tau
  std::vector<std::uint64_t> unconditional;  // counts of X_{tau-1}
  std::uint64_t replicas = 0;
  std::uint64_t conditioned = 0;
  double conditioning_rate = 0.0;
  bool inconclusive = false;  // no replica met the condition
};

/// Each replica draws delta_tau from the law at base n0, then runs the
/// peeling sampler from x for delta_tau - 1 steps on the same generator.
inline RightBiasResult rightbias_experiment(const ChainAnalysis& chain, VertexId x, const LawSequence& law,
                                            std::uint64_t n0, std::uint64_t replicas, Xoshiro256& rng,
                                            std::uint64_t growth_cap = std::uint64_t{1} << 32) {
  RightBiasResult out;
  out.conditional.assign(chain.size(), 0);
  out.unconditional.assign(chain.size(), 0);
  out.replicas = replicas;
  SstSampler sampler(chain, x);
  for (std::uint64_t r = 0; r < replicas; ++r) {
    const auto dt = law.sample_next_growth(n0, rng, growth_cap);
    if (!dt) throw DomainError("rightbias_experiment: no growth within the cap");
    const auto [pos, eta] = sampler.run(*dt - 1, rng);
    ++out.unconditional[pos];
    if (eta) {
      ++out.conditional[pos];
      ++out.conditioned;
    }
  }
  out.conditioning_rate = replicas == 0 ? 0.0 : static_cast<double>(out.conditioned) / static_cast<double>(replicas);
  out.inconclusive = out.conditioned == 0;
  return out;
}

/// Exact law of X_{tau-1} from x, with delta_tau drawn from the law at base n0:
/// sum_m P(delta_tau = m) P^{m-1}(x, .).
inline Distribution growth_position_law(const ChainAnalysis& chain, VertexId x, const LawSequence& law,
                                        std::uint64_t n0, double tol = 1e-14, std::uint64_t max_terms = 50'000'000) {
  Distribution acc(chain.size(), 0.0), d = chain.point_mass(x), tmp;
  double tail = 1.0;
  for (std::uint64_t m = 1; m <= max_terms && tail > tol; ++m) {
    const double next_tail = tail * (1.0 - law.prob_at(n0 + m));
    for (std::size_t y = 0; y < acc.size(); ++y) acc[y] += (tail - next_tail) * d[y];
    tail = next_tail;
    chain.step(d, tmp);
    d.swap(tmp);
  }
  return acc;
}

}  // namespace tbrw
