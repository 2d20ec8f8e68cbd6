#pragma once

// Replica orchestration and the reductions that turn runs into estimates.
//
// Every experiment is a pure function of its ExperimentConfig: replica i is
// seeded with derive_replica_seed(config.seed, i), results are stored by
// replica index and reduced in index order, so the thread count never changes
// an output byte.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "tbrw/chain.hpp"
#include "tbrw/config.hpp"
#include "tbrw/io.hpp"
#include "tbrw/law.hpp"
#include "tbrw/pa.hpp"
#include "tbrw/rng.hpp"
#include "tbrw/stats.hpp"
#include "tbrw/tree.hpp"
#include "tbrw/walk.hpp"

namespace tbrw {

/// Runs fn(index, seed) for index = 0..count-1 on `threads` workers.
template <typename F>
auto run_replicas(std::uint64_t count, std::uint64_t threads, std::uint64_t master_seed, F&& fn)
    -> std::vector<decltype(fn(std::uint64_t{}, std::uint64_t{}))> {
  using R = decltype(fn(std::uint64_t{}, std::uint64_t{}));
  std::vector<R> results(count);
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::uint64_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        results[i] = fn(i, derive_replica_seed(master_seed, i));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  const auto workers = static_cast<std::size_t>(std::clamp<std::uint64_t>(threads, 1, std::max<std::uint64_t>(count, 1)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  return results;
}

struct ExperimentResult {
  std::string experiment;
  std::uint64_t config_hash = 0;
  Json targets = Json::object();
  Json estimates = Json::object();
  Json tolerances = Json::object();
  Json checks = Json::object();
  Json flags = Json::array();
  std::vector<std::pair<std::string, CsvTable>> tables;

  bool pass() const {
    for (const auto& [name, ok] : checks.items())
      if (!ok.get<bool>()) return false;
    return true;
  }

  void check(const std::string& name, bool ok) { checks[name] = ok; }

  CsvTable& table(const std::string& name, std::vector<std::string> header) {
    tables.emplace_back(name, CsvTable(std::move(header)));
    return tables.back().second;
  }

  Json summary() const {
    Json j;
    j["experiment"] = experiment;
    j["config_hash"] = hex64(config_hash);
    j["targets"] = targets;
    j["estimates"] = estimates;
    j["tolerances"] = tolerances;
    j["checks"] = checks;
    j["flags"] = flags;
    j["pass"] = pass();
    return j;
  }
};

inline void write_result(OutputSet& out, const ExperimentResult& result, const ExperimentConfig& config) {
  out.write("config.ini", echo_config(config));
  for (const auto& [name, table] : result.tables) out.write_csv(result.experiment + "_" + name + ".csv", table);
  out.write_json("summary.json", result.summary());
  out.finish(result.experiment, result.config_hash);
}

inline SeedKind parse_seed_kind(const std::string& s) {
  if (s == "loop") return SeedKind::loop_vertex;
  if (s == "edge_loop") return SeedKind::edge_with_loop;
  if (s == "edge") return SeedKind::edge;
  throw ConfigError("unknown seed kind '" + s + "' (expected loop, edge_loop or edge)");
}

inline std::vector<std::uint64_t> resolve_checkpoints(const ExperimentConfig& c, std::uint64_t horizon) {
  if (c.checkpoints == "dyadic") return dyadic_checkpoints(horizon);
  auto list = parse_count_list("checkpoints", c.checkpoints);
  for (std::size_t i = 1; i < list.size(); ++i)
    if (list[i] <= list[i - 1]) throw ConfigError("checkpoints must be strictly increasing");
  return list;
}

namespace detail {

inline void require_gamma_range(const LawSequence& law, double lo, double hi, bool lo_open, const char* what) {
  if (law.kind() == LawSequence::Kind::custom) return;
  const double g = law.gamma();
  const bool ok = (lo_open ? g > lo : g >= lo) && g <= hi;
  if (!ok) throw ConfigError(std::string(what) + ": gamma outside the regime this experiment targets");
}

/// One replica of a degree-type experiment: the final tree, plus the tree
/// statistics at each checkpoint (vertex counts for BA, steps otherwise).
struct GrowthSnapshot {
  std::uint64_t at = 0;
  std::uint64_t size = 0;
  std::uint32_t height = 0;
  std::uint32_t maxdeg = 0;
};

struct GrownTree {
  GrowthTree tree;
  std::vector<GrowthSnapshot> snapshots;
  bool truncated = false;
};

inline GrownTree grow_tree(const ExperimentConfig& c, const LawSequence& law, std::uint64_t seed) {
  GrownTree out;
  Xoshiro256 rng(seed);
  const SeedKind kind = parse_seed_kind(c.seed_kind);
  auto snap = [&out](std::uint64_t at, const GrowthTree& t) {
    out.snapshots.push_back({at, t.size(), t.height(), t.max_degree()});
  };
  if (c.model == "ba") {
    if (c.vertices == 0) throw ConfigError("ba model needs vertices > 0");
    const auto cps = resolve_checkpoints(c, c.vertices);
    GrowthTree tree = GrowthTree::seed(kind);
    if (c.vertices < tree.size()) throw ConfigError("vertices below the seed size");
    tree.reserve(c.vertices);
    std::size_t cp = 0;
    auto flush = [&] {
      while (cp < cps.size() && cps[cp] <= tree.size()) {
        if (cps[cp] == tree.size()) snap(cps[cp], tree);
        ++cp;
      }
    };
    flush();
    for (std::uint64_t t = 1; tree.size() < c.vertices; ++t) {
      ba_step(tree, rng, t);
      flush();
    }
    out.tree = std::move(tree);
    return out;
  }
  if (c.model == "rpat") {
    if (c.steps == 0) throw ConfigError("rpat model needs steps > 0");
    const auto cps = resolve_checkpoints(c, c.steps);
    GrowthTree tree = GrowthTree::seed(kind);
    std::size_t cp = 0;
    for (std::uint64_t n = 1; n <= c.steps; ++n) {
      rpat_step(tree, law.sample_leaf_count(n, rng), rng, n);
      while (cp < cps.size() && cps[cp] <= n) {
        if (cps[cp] == n) snap(n, tree);
        ++cp;
      }
    }
    out.tree = std::move(tree);
    return out;
  }
  if (c.model == "tbrw") {
    EngineOptions eo;
    eo.seed = seed;
    Engine engine(law, GrowthTree::seed(kind), eo);
    if (c.vertices > 0) {
      const std::uint64_t budget = c.steps > 0 ? c.steps : std::uint64_t{1} << 40;
      const auto cps = resolve_checkpoints(c, c.vertices);
      std::size_t cp = 0;
      while (engine.tree().size() < c.vertices && engine.time() < budget) {
        engine.step();
        while (cp < cps.size() && cps[cp] <= engine.tree().size()) {
          if (cps[cp] == engine.tree().size()) snap(cps[cp], engine.tree());
          ++cp;
        }
      }
      out.truncated = engine.tree().size() < c.vertices;
    } else {
      if (c.steps == 0) throw ConfigError("tbrw model needs steps or vertices");
      for (std::uint64_t cp : resolve_checkpoints(c, c.steps)) {
        if (cp > c.steps) break;
        engine.run_to(cp);
        snap(cp, engine.tree());
      }
      engine.run_to(c.steps);
    }
    out.tree = engine.release_tree();
    return out;
  }
  throw ConfigError("unknown model '" + c.model + "' (expected ba, rpat or tbrw)");
}

inline ExperimentResult start(const ExperimentConfig& c) {
  ExperimentResult r;
  r.experiment = c.experiment;
  r.config_hash = config_hash(c);
  return r;
}

/// Sum_{k=a}^{b} k^{-g}, g >= 0.
inline long double power_range_sum(std::uint64_t a, std::uint64_t b, double g) {
  if (b < a) return 0.0L;
  if (g == 0.0) return static_cast<long double>(b - a + 1);
  const auto law = LawSequence::bernoulli_power(g);
  return law.cumulative_real(static_cast<long double>(b)) - law.cumulative_real(static_cast<long double>(a - 1));
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline ExperimentResult degree_experiment(const ExperimentConfig& c, std::uint64_t d_check = 4) {
  const LawSequence law = parse_law(c.law);
  if (c.model == "tbrw") detail::require_gamma_range(law, 2.0 / 3.0, 1.0, true, "degree_experiment");
  auto trees = run_replicas(c.replicas, c.threads, c.seed, [&](std::uint64_t, std::uint64_t seed) {
    auto grown = detail::grow_tree(c, law, seed);
    return std::make_pair(grown.tree.degree_histogram(), grown.truncated);
  });
  ExperimentResult r = detail::start(c);
  std::vector<std::uint64_t> agg;
  std::uint64_t total = 0;
  bool truncated = false;
  auto& per = r.table("per_replica", {"replica", "d", "count"});
  for (std::size_t i = 0; i < trees.size(); ++i) {
    const auto& h = trees[i].first;
    truncated = truncated || trees[i].second;
    if (h.size() > agg.size()) agg.resize(h.size(), 0);
    for (std::size_t d = 0; d < h.size(); ++d) {
      agg[d] += h[d];
      total += h[d];
      if (h[d] > 0) per.row() << static_cast<std::uint64_t>(i) << static_cast<std::uint64_t>(d) << h[d];
    }
  }
  if (total < 200) r.flags.push_back("underpowered");
  if (truncated) r.flags.push_back("truncated");
  auto& tab = r.table("degree", {"d", "count", "fraction", "target"});
  bool ok = true;
  for (std::uint64_t d = 1; d <= c.d_max; ++d) {
    const std::uint64_t count = d < agg.size() ? agg[d] : 0;
    const double frac = total ? static_cast<double>(count) / static_cast<double>(total) : 0.0;
    const double target = degree_law(d);
    tab.row() << d << count << frac << target;
    r.estimates["fraction_d" + std::to_string(d)] = frac;
    r.targets["fraction_d" + std::to_string(d)] = target;
    if (d <= d_check) ok = ok && std::fabs(frac - target) <= c.tolerance;
  }
  r.estimates["vertices"] = total;
  r.tolerances["fraction"] = c.tolerance;
  r.tolerances["d_check"] = d_check;
  r.check("degree_fractions", ok);
  return r;
}

inline ExperimentResult height_experiment(const ExperimentConfig& c) {
  const LawSequence law = parse_law(c.law);
  auto snaps = run_replicas(c.replicas, c.threads, c.seed, [&](std::uint64_t, std::uint64_t seed) {
    auto grown = detail::grow_tree(c, law, seed);
    if (grown.snapshots.empty() || grown.snapshots.back().size != grown.tree.size())
      grown.snapshots.push_back({0, grown.tree.size(), grown.tree.height(), grown.tree.max_degree()});
    return grown.snapshots;
  });
  ExperimentResult r = detail::start(c);
  const HeightConstant hc = height_constant();
  auto& tab = r.table("height", {"replica", "at", "size", "height", "ratio"});
  std::vector<double> finals;
  for (std::size_t i = 0; i < snaps.size(); ++i)
    for (const auto& s : snaps[i]) {
      const double ratio = static_cast<double>(s.height) / std::log(static_cast<double>(s.size));
      tab.row() << static_cast<std::uint64_t>(i) << s.at << s.size << s.height << ratio;
      if (&s == &snaps[i].back()) finals.push_back(ratio);
    }
  const auto m = mean_stderr(finals);
  r.targets["height_ratio"] = hc.ratio;
  r.targets["c"] = hc.c;
  r.estimates["height_ratio_mean"] = m.mean;
  r.estimates["height_ratio_stderr"] = m.std_error;
  r.tolerances["height_ratio"] = c.tolerance;
  r.check("height_ratio", std::fabs(m.mean - hc.ratio) <= c.tolerance);
  return r;
}

inline ExperimentResult maxdeg_experiment(const ExperimentConfig& c) {
  const LawSequence law = parse_law(c.law);
  auto snaps = run_replicas(c.replicas, c.threads, c.seed, [&](std::uint64_t, std::uint64_t seed) {
    return detail::grow_tree(c, law, seed).snapshots;
  });
  ExperimentResult r = detail::start(c);
  auto& tab = r.table("maxdeg", {"replica", "at", "size", "maxdeg", "ratio"});
  auto& drift_tab = r.table("drift", {"replica", "min_ratio", "max_ratio", "drift"});
  std::uint64_t stable = 0;
  bool positive = true;
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    std::vector<double> ratios;
    for (const auto& s : snaps[i]) {
      const double ratio = static_cast<double>(s.maxdeg) / std::sqrt(static_cast<double>(s.size));
      tab.row() << static_cast<std::uint64_t>(i) << s.at << s.size << s.maxdeg << ratio;
      ratios.push_back(ratio);
    }
    if (ratios.size() > 3) ratios.erase(ratios.begin(), ratios.end() - 3);
    if (ratios.empty()) continue;
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    positive = positive && *lo > 0.0;
    const double drift = *lo > 0.0 ? (*hi - *lo) / *lo : INFINITY;
    if (drift < c.tolerance) ++stable;
    drift_tab.row() << static_cast<std::uint64_t>(i) << *lo << *hi << drift;
  }
  r.estimates["stable_replicas"] = stable;
  r.estimates["replicas"] = c.replicas;
  r.tolerances["drift"] = c.tolerance;
  r.check("ratio_positive", positive);
  r.check("ratio_stable", stable == c.replicas);
  return r;
}

inline ExperimentResult level_experiment(const ExperimentConfig& c) {
  const LawSequence law = parse_law(c.law);
  const auto k_max = static_cast<std::uint32_t>(c.levels);
  auto hists = run_replicas(c.replicas, c.threads, c.seed, [&](std::uint64_t, std::uint64_t seed) {
    const auto grown = detail::grow_tree(c, law, seed);
    std::vector<std::map<std::uint32_t, std::uint64_t>> out;
    for (std::uint32_t k = 1; k <= k_max; ++k) out.push_back(grown.tree.level_degree_histogram(k));
    return out;
  });
  ExperimentResult r = detail::start(c);
  auto& tab = r.table("level", {"k", "d", "count", "fraction", "target"});
  bool ok = true;
  for (std::uint32_t k = 1; k <= k_max; ++k) {
    std::map<std::uint32_t, std::uint64_t> agg;
    std::uint64_t total = 0;
    for (const auto& h : hists)
      for (const auto& [d, n] : h[k - 1]) agg[d] += n, total += n;
    for (std::uint64_t d = 1; d <= c.d_max; ++d) {
      const std::uint64_t count = agg.count(static_cast<std::uint32_t>(d)) ? agg[static_cast<std::uint32_t>(d)] : 0;
      const double frac = total ? static_cast<double>(count) / static_cast<double>(total) : 0.0;
      tab.row() << static_cast<std::uint64_t>(k) << d << count << frac << level_law(d);
      ok = ok && std::fabs(frac - level_law(d)) <= c.tolerance;
      r.estimates["level" + std::to_string(k) + "_d" + std::to_string(d)] = frac;
    }
  }
  for (std::uint64_t d = 1; d <= c.d_max; ++d) r.targets["d" + std::to_string(d)] = level_law(d);
  r.tolerances["fraction"] = c.tolerance;
  r.check("level_fractions", ok);
  return r;
}

/// Growth times tau_1..tau_kmax: Z_n is independent of the walk, so the
/// growth process is sampled directly from the law.
inline std::vector<std::uint64_t> sample_growth_times(const LawSequence& law, std::uint64_t k_max, Xoshiro256& rng,
                                                      std::uint64_t budget = std::uint64_t{1} << 50) {
  std::vector<std::uint64_t> tau;
  tau.reserve(k_max);
  GrowthIndicator indicator(law);
  for (std::uint64_t n = 1; tau.size() < k_max; ++n) {
    if (n > budget) throw DomainError("sample_growth_times: budget exhausted");
    if (indicator.draw(n, rng.uniform())) tau.push_back(n);
  }
  return tau;
}

inline ExperimentResult growth_time_experiment(const ExperimentConfig& c) {
  const LawSequence law = parse_law(c.law);
  if (c.k_min < 1 || c.k_max < c.k_min + 4) throw ConfigError("growth_time: need 1 <= k_min and k_max >= k_min + 4");
  const bool power = law.kind() != LawSequence::Kind::custom;
  if (power && !(law.gamma() > 0.0 && law.gamma() < 1.0)) throw ConfigError("growth_time: gamma must lie in (0, 1)");
  const double target = power ? 1.0 / (1.0 - law.gamma()) : 1.0;
  auto taus = run_replicas(c.replicas, c.threads, c.seed, [&](std::uint64_t, std::uint64_t seed) {
    Xoshiro256 rng(seed);
    return sample_growth_times(law, c.k_max, rng);
  });
  ExperimentResult r = detail::start(c);
  auto& series = r.table("tau", {"replica", "k", "tau"});
  auto& fits = r.table("fits", {"replica", "slope", "stderr", "r2", "residual_ss", "points", "prefactor_ratio"});
  std::vector<double> slopes, ratios;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    std::vector<double> ks, ts;
    for (std::uint64_t k = c.k_min; k <= c.k_max; ++k) {
      ks.push_back(static_cast<double>(k));
      ts.push_back(static_cast<double>(taus[i][k - 1]));
      series.row() << static_cast<std::uint64_t>(i) << k << taus[i][k - 1];
    }
    const auto f = fit_power(ks, ts, c.tail_fraction);
    // tau_k ~ ((1 - gamma) k / scale)^{1/(1-gamma)}
    double ratio = 0.0;
    if (power) {
      const double g = law.gamma();
      const double predicted =
          std::pow((1.0 - g) * static_cast<double>(c.k_max) / law.scale(), 1.0 / (1.0 - g)) - static_cast<double>(law.shift());
      ratio = static_cast<double>(taus[i][c.k_max - 1]) / predicted;
    }
    fits.row() << static_cast<std::uint64_t>(i) << f.slope << f.slope_stderr << f.r2 << f.residual_ss
               << static_cast<std::uint64_t>(f.points) << ratio;
    slopes.push_back(f.slope);
    ratios.push_back(ratio);
  }
  const auto ms = mean_stderr(slopes);
  r.targets["slope"] = target;
  r.estimates["slope_mean"] = ms.mean;
  r.estimates["slope_stderr"] = ms.std_error;
  r.estimates["prefactor_ratio_mean"] = mean_stderr(ratios).mean;
  r.tolerances["slope"] = c.tolerance;
  r.check("slope", std::fabs(ms.mean - target) <= c.tolerance);
  return r;
}

inline std::uint64_t window_length(double gamma, double eps, std::uint64_t n) {
  return static_cast<std::uint64_t>(std::llround(std::pow(static_cast<double>(n), 2.0 * (1.0 - gamma) + eps)));
}

inline ExperimentResult recurrence_experiment(const ExperimentConfig& c) {
  const LawSequence law = parse_law(c.law);
  const double gamma = law.kind() == LawSequence::Kind::custom ? 1.0 : law.gamma();
  std::vector<WindowSpec> windows;
  for (std::uint64_t n : parse_count_list("windows", c.windows)) {
    const std::uint64_t s = window_length(gamma, c.window_eps, n);
    if (s >= 1 && n + s <= c.steps) windows.push_back({n, s});
  }
  std::vector<std::uint64_t> cps;
  for (std::uint64_t v = 1; v <= c.steps; v *= 2) cps.push_back(v);
  auto reports = run_replicas(c.replicas, c.threads, c.seed, [&](std::uint64_t, std::uint64_t seed) {
    EngineOptions eo;
    eo.seed = seed;
    RunOptions ro;
    ro.horizon_steps = c.steps;
    ro.checkpoints = cps;
    ro.windows = windows;
    auto rep = run(law, GrowthTree::seed(parse_seed_kind(c.seed_kind)), eo, ro);
    rep.growth = {};
    return rep;
  });
  ExperimentResult r = detail::start(c);
  auto& roots = r.table("root_windows", {"j", "start", "end", "replicas_with_visit", "mean_visits"});
  bool all_windows = true;
  std::uint64_t checked = 0;
  const auto needed = static_cast<std::uint64_t>(std::ceil(c.tolerance * static_cast<double>(c.replicas) - 1e-9));
  for (std::size_t j = 0; j + 1 < cps.size(); ++j) {
    std::uint64_t with_visit = 0;
    double total = 0.0;
    for (const auto& rep : reports) {
      const auto visits = rep.rows[j + 1].root_visits - rep.rows[j].root_visits;
      with_visit += visits > 0;
      total += static_cast<double>(visits);
    }
    roots.row() << static_cast<std::uint64_t>(j) << cps[j] << cps[j + 1] << with_visit
                << total / static_cast<double>(c.replicas);
    if (j >= c.window_min_j) {
      ++checked;
      all_windows = all_windows && with_visit >= needed;
    }
  }
  auto& red = r.table("red_windows", {"n", "s", "mean_red_visits", "ratio", "mean_red_vertices"});
  std::vector<double> ratios;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    double visits = 0.0, vertices = 0.0;
    for (const auto& rep : reports) {
      visits += static_cast<double>(rep.windows[w].red_visits);
      vertices += static_cast<double>(rep.windows[w].red_vertices);
    }
    const double R = static_cast<double>(c.replicas);
    const double ratio = visits / (R * static_cast<double>(windows[w].length));
    ratios.push_back(ratio);
    red.row() << windows[w].start << windows[w].length << visits / R << ratio << vertices / R;
  }
  bool decreasing = ratios.size() >= 2;
  for (std::size_t i = 1; i < ratios.size(); ++i) decreasing = decreasing && ratios[i] < ratios[i - 1];
  r.estimates["dyadic_windows_checked"] = checked;
  r.estimates["red_visit_ratios"] = ratios;
  r.tolerances["replica_fraction"] = c.tolerance;
  r.tolerances["window_min_j"] = c.window_min_j;
  if (checked == 0) r.flags.push_back("no dyadic window at or above window_min_j");
  r.check("root_visit_windows", all_windows && checked > 0);
  r.check("red_visit_ratio_decreasing", decreasing);
  return r;
}

inline ExperimentResult transience_experiment(const ExperimentConfig& c) {
  const LawSequence law = parse_law(c.law);
  if (law.kind() == LawSequence::Kind::custom) throw ConfigError("transience: needs a power law");
  const double gamma = law.gamma();
  const auto cps = resolve_checkpoints(c, c.steps);
  const std::uint32_t m_max = 6;
  auto reports = run_replicas(c.replicas, c.threads, c.seed, [&](std::uint64_t, std::uint64_t seed) {
    EngineOptions eo;
    eo.seed = seed;
    eo.track_eta = true;
    eo.eta_m_max = m_max;
    RunOptions ro;
    ro.horizon_steps = c.steps;
    ro.checkpoints = cps;
    auto rep = run(law, GrowthTree::seed(parse_seed_kind(c.seed_kind)), eo, ro);
    rep.growth = {};
    return rep;
  });
  ExperimentResult r = detail::start(c);
  const double R = static_cast<double>(c.replicas);
  auto& dtab = r.table("distance", {"n", "mean_dist", "mean_size", "mean_l", "l_ratio"});
  std::vector<double> ns, ds;
  std::uint64_t zero_rows = 0;
  long double pp = 0.0L;  // sum_{j=1}^{n-1} p_j p_{j+1}
  std::uint64_t pp_upto = 1;
  double prev_p = law.prob_at(1);
  for (std::size_t i = 0; i < cps.size(); ++i) {
    double dist = 0.0, size = 0.0, l = 0.0;
    for (const auto& rep : reports) {
      dist += rep.rows[i].dist_root;
      size += static_cast<double>(rep.rows[i].size);
      l += static_cast<double>(rep.rows[i].l_count);
      zero_rows += rep.rows[i].dist_root == 0;
    }
    for (; pp_upto < cps[i]; ++pp_upto) {
      const double p = law.prob_at(pp_upto + 1);
      pp += static_cast<long double>(prev_p) * p;
      prev_p = p;
    }
    const double l_ratio = pp > 0.0L ? l / R / static_cast<double>(pp) : 0.0;
    dtab.row() << cps[i] << dist / R << size / R << l / R << l_ratio;
    ns.push_back(static_cast<double>(cps[i]));
    ds.push_back(dist / R);
  }
  r.estimates["zero_distance_checkpoints"] = zero_rows;
  if (zero_rows * 10 > cps.size() * c.replicas) r.flags.push_back("d_n hit 0 at more than 10% of checkpoints");
  // Fit only the tail where the mean distance is positive.
  std::vector<double> fn, fd;
  for (std::size_t i = 0; i < ns.size(); ++i)
    if (ds[i] > 0.0) fn.push_back(ns[i]), fd.push_back(ds[i]);
  const double target = 1.0 - 2.0 * gamma;
  double slope = NAN;
  if (fn.size() >= 5) {
    const auto f = fit_power(fn, fd, c.tail_fraction);
    slope = f.slope;
    r.estimates["slope_stderr"] = f.slope_stderr;
    r.estimates["fit_residual_ss"] = f.residual_ss;
    r.estimates["fit_r2"] = f.r2;
    r.estimates["fit_points"] = f.points;
  } else {
    r.flags.push_back("too few positive distance points to fit");
  }
  r.targets["slope"] = target;
  r.estimates["slope"] = slope;
  r.tolerances["slope"] = c.tolerance;
  r.check("distance_slope", std::isfinite(slope) && std::fabs(slope - target) <= c.tolerance);

  // P(delta eta_k >= m) per dyadic block of k against the block-averaged k^{-(m-1) gamma}.
  auto& etab = r.table("eta_tail", {"block", "k_from", "count", "m", "empirical", "bound"});
  std::uint64_t violations = 0;
  std::size_t blocks = 0;
  for (const auto& rep : reports) blocks = std::max(blocks, rep.eta.block_count.size());
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::uint64_t k_from = std::uint64_t{1} << b;
    for (std::uint32_t m = 1; m <= m_max; ++m) {
      std::uint64_t count = 0, hits = 0;
      long double bound_sum = 0.0L;
      for (const auto& rep : reports) {
        if (b >= rep.eta.block_count.size()) continue;
        const std::uint64_t n = rep.eta.block_count[b];
        count += n;
        hits += rep.eta.at_least[b][m - 1];
        bound_sum += detail::power_range_sum(k_from, k_from + n - 1, (m - 1) * gamma);
      }
      if (count == 0) continue;
      const double emp = static_cast<double>(hits) / static_cast<double>(count);
      const double bound = std::min(1.0, static_cast<double>(bound_sum / static_cast<long double>(count)));
      etab.row() << static_cast<std::uint64_t>(b) << k_from << count << m << emp << bound;
      const double slack = 3.0 * std::sqrt(std::max(bound * (1.0 - bound), 1e-12) / static_cast<double>(count));
      if (emp > bound + slack) ++violations;
    }
  }
  r.estimates["eta_bound_violations"] = violations;
  r.check("eta_tail_bound", violations == 0);
  return r;
}

inline ExperimentResult diameter_window_experiment(const ExperimentConfig& c) {
  const LawSequence law = parse_law(c.law);
  detail::require_gamma_range(law, 0.5, 1.0, true, "diameter_window_experiment");
  const double gamma = law.kind() == LawSequence::Kind::custom ? 1.0 : law.gamma();
  if (law.kind() != LawSequence::Kind::custom && !(c.window_eps < 2.0 * gamma - 1.0))
    throw ConfigError("diameter_window: window_eps must be below 2 gamma - 1");
  std::vector<WindowSpec> windows;
  std::uint64_t horizon = 0;
  for (std::uint64_t n : parse_count_list("windows", c.windows)) {
    const std::uint64_t s = window_length(gamma, c.window_eps, n);
    if (s < 1) continue;  // shorter than one step
    if (!windows.empty() && n < windows.back().start + windows.back().length)
      throw ConfigError("diameter_window: windows overlap");
    windows.push_back({n, s});
    horizon = n + s;
  }
  if (windows.empty()) throw ConfigError("diameter_window: no usable windows");
  const auto d_cap = static_cast<std::uint32_t>(c.d_max);
  auto reports = run_replicas(c.replicas, c.threads, c.seed, [&](std::uint64_t, std::uint64_t seed) {
    EngineOptions eo;
    eo.seed = seed;
    RunOptions ro;
    ro.horizon_steps = horizon;
    ro.windows = windows;
    ro.window_d_cap = d_cap;
    return run(law, GrowthTree::seed(parse_seed_kind(c.seed_kind)), eo, ro).windows;
  });
  ExperimentResult r = detail::start(c);
  auto& tab = r.table("windows", {"n", "s", "d", "diam_exceed", "order_tail_vertex", "order_tail_window"});
  const double R = static_cast<double>(c.replicas);
  // exceed[w][d-1] = P(delta diam >= d); window_tail[w][d-1] = P(some red subtree reaches order d)
  std::vector<std::vector<double>> exceed(windows.size()), window_tail(windows.size()), vertex_tail(windows.size());
  for (std::size_t w = 0; w < windows.size(); ++w) {
    for (std::uint32_t d = 1; d <= d_cap; ++d) {
      double ex = 0.0, any = 0.0, reach = 0.0, red = 0.0;
      for (const auto& rep : reports) {
        const WindowResult& wr = rep[w];
        ex += (wr.diam_after - wr.diam_before) >= d;
        any += wr.order_at_least[d - 1] > 0;
        reach += static_cast<double>(wr.order_at_least[d - 1]);
        red += static_cast<double>(wr.red_vertices);
      }
      exceed[w].push_back(ex / R);
      window_tail[w].push_back(any / R);
      vertex_tail[w].push_back(red > 0.0 ? reach / red : 0.0);
      tab.row() << windows[w].start << windows[w].length << static_cast<std::uint64_t>(d) << ex / R
                << vertex_tail[w].back() << any / R;
    }
  }
  auto nonincreasing_in_n = [&](const std::vector<std::vector<double>>& v, std::uint32_t d) {
    for (std::size_t w = 1; w < v.size(); ++w)
      if (v[w][d - 1] > v[w - 1][d - 1]) return false;
    return true;
  };
  auto decreasing_in_n = [&](const std::vector<std::vector<double>>& v, std::uint32_t d) {
    for (std::size_t w = 1; w < v.size(); ++w)
      if (!(v[w][d - 1] < v[w - 1][d - 1])) return false;
    return v.size() >= 2;
  };
  // Implied kappa from P(D >= d) ~ C / (k^gamma n^{kappa (d-1)}) between the first and last window.
  Json kappas = Json::object();
  if (windows.size() >= 2 && d_cap >= 2) {
    const double ln_ratio = std::log(static_cast<double>(windows.back().start) / static_cast<double>(windows.front().start));
    for (std::uint32_t d = 2; d <= d_cap; ++d) {
      const double a = vertex_tail.front()[d - 1], b = vertex_tail.back()[d - 1];
      if (a > 0.0 && b > 0.0) kappas["d" + std::to_string(d)] = -std::log(b / a) / (ln_ratio * (d - 1));
    }
  }
  r.estimates["kappa_implied"] = kappas;
  r.targets["kappa_config"] = c.kappa;
  bool monotone_d = true;
  for (std::size_t w = 0; w < windows.size(); ++w)
    for (std::uint32_t d = 2; d <= d_cap; ++d)
      monotone_d = monotone_d && exceed[w][d - 1] <= exceed[w][d - 2] && vertex_tail[w][d - 1] <= vertex_tail[w][d - 2];
  r.check("tails_monotone_in_d", monotone_d);
  if (d_cap >= 2) r.check("diam_exceed_d2_nonincreasing", nonincreasing_in_n(exceed, 2));
  if (d_cap >= 3) r.check("red_order3_decreasing", decreasing_in_n(window_tail, 3));
  return r;
}

inline ExperimentResult redness_experiment(const ExperimentConfig& c) {
  const LawSequence law = parse_law(c.law);
  detail::require_gamma_range(law, 2.0 / 3.0, 1.0, true, "redness_experiment");
  struct Out {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> series;  // (k, R_k)
    std::vector<std::uint64_t> blue_hist;
    std::uint64_t k = 0, blue = 0, red = 0;
    std::uint64_t good = 0;
  };
  auto outs = run_replicas(c.replicas, c.threads, c.seed, [&](std::uint64_t, std::uint64_t seed) {
    EngineOptions eo;
    eo.seed = seed;
    eo.color_delta = c.delta;
    Engine engine(law, GrowthTree::seed(parse_seed_kind(c.seed_kind)), eo);
    Out o;
    std::uint64_t next_k = 1;
    const std::uint64_t budget = c.steps;
    while (engine.tree().size() < c.vertices && engine.time() < budget) {
      engine.step();
      const ColorLedger& L = *engine.ledger();
      while (next_k <= L.k()) {
        if (next_k == L.k()) o.series.emplace_back(L.k(), L.red());
        next_k = std::max<std::uint64_t>(next_k + 1, static_cast<std::uint64_t>(std::ceil(next_k * 1.25)));
      }
    }
    const ColorLedger& L = *engine.ledger();
    o.series.emplace_back(L.k(), L.red());
    o.blue_hist = L.blue_degree_histogram();
    o.k = L.k();
    o.blue = L.blue();
    o.red = L.red();
    for (char g : engine.growth_log().good) o.good += g != 0;
    return o;
  });
  ExperimentResult r = detail::start(c);
  auto& st = r.table("series", {"replica", "k", "R_k", "R_over_k", "R_over_2k"});
  auto& bt = r.table("blue_degrees", {"d", "mean_B_over_k", "target"});
  std::uint64_t improved = 0, good_total = 0;
  bool invariant = true;
  for (std::size_t i = 0; i < outs.size(); ++i) {
    const Out& o = outs[i];
    invariant = invariant && o.blue + o.red == 2 * o.k;
    good_total += o.good;
    for (const auto& [k, red] : o.series)
      st.row() << static_cast<std::uint64_t>(i) << k << red << static_cast<double>(red) / static_cast<double>(k)
               << static_cast<double>(red) / (2.0 * static_cast<double>(k));
    // R_k/k at the final k against the recorded point nearest below k/4.
    const std::uint64_t quarter = o.k / 4;
    double early = NAN;
    for (const auto& [k, red] : o.series)
      if (k <= quarter) early = static_cast<double>(red) / static_cast<double>(k);
    const double late = static_cast<double>(o.red) / static_cast<double>(o.k);
    if (std::isfinite(early) && late < early) ++improved;
  }
  if (good_total == 0) r.flags.push_back("no good intervals observed");
  for (std::uint64_t d = 1; d <= c.d_max; ++d) {
    double acc = 0.0;
    for (const auto& o : outs) acc += (d < o.blue_hist.size() ? static_cast<double>(o.blue_hist[d]) : 0.0) / static_cast<double>(o.k);
    bt.row() << d << acc / static_cast<double>(outs.size()) << degree_law(d);
  }
  r.estimates["replicas_with_decreasing_red_fraction"] = improved;
  r.estimates["good_intervals"] = good_total;
  r.tolerances["replica_fraction"] = c.tolerance;
  r.check("colour_invariant", invariant);
  r.check("red_fraction_decreasing",
          static_cast<double>(improved) >= c.tolerance * static_cast<double>(c.replicas) - 1e-9);
  return r;
}

struct EpochFailure {
  std::uint64_t k = 0;
  std::uint64_t tau = 0;
  std::uint64_t size = 0;
  VertexId position = 0;
  CouplingFailure q;
  std::uint64_t next_delta_tau = 0;
  double realized_failure_prob = 0.0;  // s_x(delta_tau_{k+1} - 1) on the realized interval
  bool failed = false;                 // one draw of {eta >= delta_tau_{k+1}}
};

/// Runs the walk until the tree reaches `max_vertices`. After every growth
/// event k it computes the exact probability q_k that the optimal strong
/// stationary time from X_{tau_k} on T_{tau_k} exceeds delta_tau_{k+1} - 1,
/// and, once delta_tau_{k+1} is realized, draws the failure event itself.
inline std::vector<EpochFailure> condition_m_epochs(const LawSequence& law, SeedKind kind, std::uint64_t max_vertices,
                                                    std::uint64_t seed, std::uint64_t budget = std::uint64_t{1} << 40) {
  EngineOptions eo;
  eo.seed = seed;
  Engine engine(law, GrowthTree::seed(kind), eo);
  Xoshiro256 coin(mix64(seed ^ 0xFA11ED));
  std::vector<EpochFailure> out;
  std::optional<ChainAnalysis> pending;
  std::size_t seen = 0;
  bool done = false;
  while (engine.time() < budget) {
    engine.step();
    if (engine.growth_log().size() == seen) continue;
    seen = engine.growth_log().size();
    if (pending) {
      EpochFailure& e = out.back();
      e.next_delta_tau = engine.time() - e.tau;
      e.realized_failure_prob = pending->separation(e.position, e.next_delta_tau - 1);
      e.failed = coin.uniform() < e.realized_failure_prob;
      pending.reset();
    }
    if (done || engine.tree().size() > max_vertices) break;
    pending = ChainAnalysis::from_tree(engine.tree());
    EpochFailure e;
    e.k = seen;
    e.tau = engine.time();
    e.size = engine.tree().size();
    e.position = engine.position();
    e.q = coupling_failure_prob(*pending, engine.position(), law, engine.time());
    out.push_back(e);
    done = engine.tree().size() >= max_vertices;
  }
  return out;
}

inline ExperimentResult condition_m_experiment(const ExperimentConfig& c) {
  const LawSequence law = parse_law(c.law);
  auto runs = run_replicas(c.replicas, c.threads, c.seed, [&](std::uint64_t, std::uint64_t seed) {
    return condition_m_epochs(law, parse_seed_kind(c.seed_kind), c.vertices, seed, c.steps);
  });
  ExperimentResult r = detail::start(c);
  auto& tab = r.table("epochs", {"replica", "k", "tau", "size", "x", "q", "partial_sum", "terms", "remainder",
                                 "next_delta_tau", "realized_failure_prob", "failed"});
  std::size_t epochs = runs.empty() ? 0 : runs.front().size();
  for (const auto& run_ : runs) epochs = std::min(epochs, run_.size());
  bool widened = false;
  std::uint64_t last_failure = 0;  // proxy only: M itself is not observable from a finite run
  for (std::size_t i = 0; i < runs.size(); ++i) {
    double partial = 0.0;
    for (const auto& e : runs[i]) {
      partial += e.q.q;
      widened = widened || e.q.widened;
      tab.row() << static_cast<std::uint64_t>(i) << e.k << e.tau << e.size << static_cast<std::uint64_t>(e.position)
                << e.q.q << partial << e.q.terms << e.q.remainder << e.next_delta_tau << e.realized_failure_prob
                << e.failed;
      if (e.failed) last_failure = std::max(last_failure, e.k);
    }
  }
  if (widened) r.flags.push_back("some epoch sums truncated above 1e-9");
  // Mean q_k over replicas, on the epochs every replica reached.
  std::vector<double> q(epochs, 0.0);
  for (const auto& run_ : runs)
    for (std::size_t k = 0; k < epochs; ++k) q[k] += run_[k].q.q / static_cast<double>(runs.size());
  const std::size_t quarter = epochs / 4;
  std::vector<double> quartile_means;
  if (quarter > 0)
    for (int j = 0; j < 4; ++j) {
      const std::size_t lo = j * quarter, hi = j == 3 ? epochs : (j + 1) * quarter;
      double s = 0.0;
      for (std::size_t k = lo; k < hi; ++k) s += q[k];
      quartile_means.push_back(s / static_cast<double>(hi - lo));
    }
  bool decreasing = quartile_means.size() == 4;
  for (std::size_t j = 1; j < quartile_means.size(); ++j) decreasing = decreasing && quartile_means[j] < quartile_means[j - 1];
  double last_quarter_increase = 0.0;
  for (std::size_t k = epochs - (epochs - 3 * quarter); k < epochs && quarter > 0; ++k) last_quarter_increase += q[k];
  double total = 0.0;
  for (double v : q) total += v;
  r.estimates["epochs"] = epochs;
  r.estimates["quartile_mean_q"] = quartile_means;
  r.estimates["sum_q"] = total;
  r.estimates["last_quartile_increase"] = last_quarter_increase;
  r.estimates["last_failure_epoch"] = last_failure;
  r.tolerances["last_quartile_increase"] = c.tolerance;
  r.check("q_decreasing", decreasing);
  r.check("partial_sums_flat", quarter > 0 && last_quarter_increase < c.tolerance);
  return r;
}

inline ExperimentResult run_experiment(const ExperimentConfig& c) {
  if (c.replicas < 1) throw ConfigError("replicas must be >= 1");
  if (c.experiment == "degree") return degree_experiment(c, c.model == "tbrw" ? 1 : 4);
  if (c.experiment == "height") return height_experiment(c);
  if (c.experiment == "maxdeg") return maxdeg_experiment(c);
  if (c.experiment == "level") return level_experiment(c);
  if (c.experiment == "growth_time") return growth_time_experiment(c);
  if (c.experiment == "recurrence") return recurrence_experiment(c);
  if (c.experiment == "transience") return transience_experiment(c);
  if (c.experiment == "diameter_window") return diameter_window_experiment(c);
  if (c.experiment == "redness") return redness_experiment(c);
  if (c.experiment == "condition_m") return condition_m_experiment(c);
  throw ConfigError("unknown experiment '" + c.experiment + "'");
}

}  // namespace tbrw
