#pragma once

// Command-line front end. Subcommands: simulate, ba, rpat, chain, experiment,
// targets. Exit codes: 0 success, 1 configuration or runtime error, 2 when
// --check is set and the run failed its acceptance checks.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "tbrw/chain.hpp"
#include "tbrw/config.hpp"
#include "tbrw/experiments.hpp"
#include "tbrw/io.hpp"
#include "tbrw/law.hpp"
#include "tbrw/pa.hpp"
#include "tbrw/stats.hpp"
#include "tbrw/tree.hpp"
#include "tbrw/walk.hpp"

namespace tbrw::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitCheckFailed = 2;

/// Flags shared by the run-type subcommands. Strings so that absent flags are
/// distinguishable and counts accept forms like 1e6.
struct RunFlags {
  std::string law, steps, vertices, seed, replicas, threads, checkpoints, delta, window_eps, seed_kind;
  std::vector<std::string> sets;
  std::string out;
  bool check = false;
  bool verbose = false;
};

inline void add_run_flags(CLI::App* sub, RunFlags& f) {
  sub->add_option("--law", f.law, "growth law, e.g. ber:gamma=0.7,scale=1,shift=0");
  sub->add_option("--steps", f.steps, "walk steps (accepts 1e6)");
  sub->add_option("--vertices", f.vertices, "target tree size");
  sub->add_option("--seed", f.seed, "64-bit master seed");
  sub->add_option("--replicas", f.replicas, "number of replicas");
  sub->add_option("--threads", f.threads, "worker threads (default: available parallelism)");
  sub->add_option("--checkpoints", f.checkpoints, "dyadic or a comma-separated list");
  sub->add_option("--delta", f.delta, "good-interval exponent slack");
  sub->add_option("--window-eps", f.window_eps, "window length exponent slack");
  sub->add_option("--seed-kind", f.seed_kind, "loop | edge_loop | edge");
  sub->add_option("--set", f.sets, "override any config key: key=value")->take_all();
  sub->add_option("--out", f.out, "output directory");
  sub->add_flag("--check", f.check, "exit 2 if the run fails its checks");
  sub->add_flag("-v,--verbose", f.verbose, "progress on standard error");
}

inline void apply_run_flags(ExperimentConfig& c, const RunFlags& f) {
  auto set = [&c](const char* key, const std::string& v) {
    if (!v.empty()) set_config_value(c, key, v);
  };
  set("law", f.law);
  set("steps", f.steps);
  set("vertices", f.vertices);
  set("seed", f.seed);
  set("replicas", f.replicas);
  set("threads", f.threads);
  set("checkpoints", f.checkpoints);
  set("delta", f.delta);
  set("window_eps", f.window_eps);
  set("seed_kind", f.seed_kind);
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(c, detail::trim(std::string_view(kv).substr(0, eq)), detail::trim(std::string_view(kv).substr(eq + 1)));
  }
  set("out", f.out);
}

inline std::uint64_t default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

/// --out, else $TBRW_OUT_DIR/<kind>-<hash>, else tbrw-out/<kind>-<hash>.
inline std::filesystem::path output_dir(const std::string& out, const std::string& kind, std::uint64_t hash) {
  if (!out.empty()) return out;
  const char* root = std::getenv("TBRW_OUT_DIR");
  const std::filesystem::path base = root && *root ? root : "tbrw-out";
  return base / (kind + "-" + hex64(hash).substr(0, 12));
}

class Progress {
 public:
  Progress(bool on, std::string what) : on_(on), what_(std::move(what)), start_(std::chrono::steady_clock::now()) {
    if (on_) std::cerr << what_ << ": running\n";
  }
  void done(const std::filesystem::path& dir) const {
    if (!on_) return;
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::cerr << what_ << ": done in " << format_double(s) << " s, output in " << dir.string() << "\n";
  }

 private:
  bool on_;
  std::string what_;
  std::chrono::steady_clock::time_point start_;
};

inline int finish_experiment(const ExperimentConfig& c, const ExperimentResult& r, bool check, bool verbose,
                             const Progress& progress) {
  const auto dir = output_dir(c.out, r.experiment, r.config_hash);
  OutputSet out(dir);
  write_result(out, r, c);
  progress.done(dir);
  std::cout << r.experiment << " " << (r.pass() ? "pass" : "fail") << " " << dir.string() << "\n";
  if (verbose) std::cerr << r.summary().dump(2) << "\n";
  return check && !r.pass() ? kExitCheckFailed : kExitOk;
}

// ---------------------------------------------------------------------------

inline int cmd_simulate(const RunFlags& f) {
  ExperimentConfig c;
  c.experiment = "simulate";
  c.model = "tbrw";
  c.threads = 1;
  apply_run_flags(c, f);
  if (c.steps == 0 && c.vertices == 0) throw ConfigError("simulate: give --steps or --vertices");
  const LawSequence law = parse_law(c.law);
  Progress progress(f.verbose, "simulate");
  EngineOptions eo;
  eo.seed = c.seed;
  if (!f.delta.empty()) eo.color_delta = c.delta;
  RunOptions ro;
  if (c.vertices > 0) {
    ro.horizon_vertices = c.vertices;
    if (c.steps > 0) ro.step_budget = c.steps;
    if (c.checkpoints != "dyadic") ro.checkpoints = resolve_checkpoints(c, c.steps);
  } else {
    ro.horizon_steps = c.steps;
    ro.checkpoints = resolve_checkpoints(c, c.steps);
  }
  ro.keep_tree = true;
  const RunReport rep = run(law, GrowthTree::seed(parse_seed_kind(c.seed_kind)), eo, ro);

  const std::uint64_t hash = config_hash(c);
  const auto dir = output_dir(c.out, "simulate", hash);
  OutputSet out(dir);
  out.write("config.ini", echo_config(c));
  std::vector<std::string> cp_header{"n", "size", "diam", "height", "maxdeg", "dist_root", "root_visits"};
  if (eo.color_delta) cp_header.insert(cp_header.end(), {"Bk", "Rk"});
  CsvTable cps(cp_header);
  for (const auto& row : rep.rows) {
    auto line = cps.row();
    line << row.n << row.size << row.diam << row.height << row.maxdeg << row.dist_root << row.root_visits;
    if (eo.color_delta) line << row.blue.value_or(0) << row.red.value_or(0);
  }
  out.write_csv("checkpoints.csv", cps);
  CsvTable growth({"k", "tau", "delta_tau", "attach_vertex", "good"});
  for (std::size_t k = 0; k < rep.growth.size(); ++k)
    growth.row() << static_cast<std::uint64_t>(k + 1) << rep.growth.tau[k] << rep.growth.delta_tau[k]
                 << static_cast<std::uint64_t>(rep.growth.attach_vertex[k])
                 << (k < rep.growth.good.size() ? std::to_string(int(rep.growth.good[k])) : std::string());
  out.write_csv("growth.csv", growth);
  CsvTable degrees({"d", "count"});
  for (std::size_t d = 1; d < rep.degree_histogram.size(); ++d)
    if (rep.degree_histogram[d]) degrees.row() << static_cast<std::uint64_t>(d) << rep.degree_histogram[d];
  out.write_csv("degrees.csv", degrees);
  std::ostringstream snap;
  write_snapshot(snap, *rep.tree);
  out.write("tree.txt", snap.str());
  Json s;
  s["experiment"] = "simulate";
  s["config_hash"] = hex64(hash);
  s["law"] = law.to_spec();
  s["steps"] = rep.steps;
  s["final_size"] = rep.final_size;
  s["truncated"] = rep.truncated;
  s["root_visits"] = rep.root_visits;
  s["l_count"] = rep.l_count;
  s["growth_events"] = rep.growth.size();
  if (rep.blue) s["blue"] = *rep.blue, s["red"] = *rep.red;
  out.write_json("summary.json", s);
  out.finish("simulate", hash);
  progress.done(dir);
  std::cout << "simulate " << dir.string() << "\n";
  return f.check && rep.truncated ? kExitCheckFailed : kExitOk;
}

/// `ba` and `rpat` run the degree experiment on the chosen generator.
inline int cmd_generator(const std::string& model, const RunFlags& f) {
  ExperimentConfig c = ExperimentConfig::defaults_for("degree");
  c.model = model;
  c.replicas = 1;
  c.threads = default_threads();
  if (model == "rpat") c.steps = 1000;
  if (model == "ba") c.vertices = 10000;
  apply_run_flags(c, f);
  Progress progress(f.verbose, model);
  const auto r = degree_experiment(c, 4);
  return finish_experiment(c, r, f.check, f.verbose, progress);
}

struct ChainFlags {
  std::string tree;
  std::uint64_t profile = 0;
  std::optional<std::uint64_t> start;
  std::uint64_t rightbias = 0;
  std::string law = "ber:gamma=0.7,scale=1,shift=0";
  std::uint64_t n0 = 1000;
  std::uint64_t seed = 0;
  std::string out;
  bool check = false;
  bool verbose = false;
};

/// Reads a snapshot (`#tbrw-tree v1 ...`) or a plain edge list: one `u v` per
/// line, optional `root <id>` and `loop <0|1>` lines (defaults root 0, loop 1).
inline GrowthTree read_tree_file(const std::string& path) {
  const std::string text = read_text_file(path);
  if (text.rfind("#tbrw-tree", 0) == 0) {
    std::istringstream in(text);
    return read_snapshot(in);
  }
  std::istringstream in(text);
  std::string line;
  std::vector<std::pair<VertexId, VertexId>> edges;
  VertexId root = 0;
  bool loop = true;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream ls(t);
    std::string a, b;
    ls >> a >> b;
    if (a == "root") {
      root = static_cast<VertexId>(detail::parse_count("root", b));
    } else if (a == "loop") {
      loop = detail::parse_count("loop", b) != 0;
    } else {
      const auto u = static_cast<VertexId>(detail::parse_count("edge", a));
      const auto v = static_cast<VertexId>(detail::parse_count("edge", b));
      edges.emplace_back(u, v);
      n = std::max<std::size_t>(n, std::max(u, v) + 1);
    }
  }
  return GrowthTree::from_edges(n, edges, root, loop);
}

inline int cmd_chain(const ChainFlags& f) {
  const GrowthTree tree = read_tree_file(f.tree);
  Progress progress(f.verbose, "chain");
  const auto chain = ChainAnalysis::from_tree(tree);
  std::string echo = "tree = " + f.tree + "\nprofile = " + std::to_string(f.profile) + "\nstart = " +
                     (f.start ? std::to_string(*f.start) : std::string("worst")) + "\nrightbias = " +
                     std::to_string(f.rightbias) + "\nlaw = " + f.law + "\nn0 = " + std::to_string(f.n0) +
                     "\nseed = " + std::to_string(f.seed) + "\n";
  const std::uint64_t hash = fnv1a(echo + "tree_hash = " + hex64(fnv1a(read_text_file(f.tree))) + "\n");
  const auto dir = output_dir(f.out, "chain", hash);
  OutputSet out(dir);
  out.write("config.ini", echo);
  Json s;
  s["experiment"] = "chain";
  s["config_hash"] = hex64(hash);
  s["size"] = chain.size();
  s["edges"] = chain.edges();
  const auto gb = chain.geometric_bounds();
  s["diam"] = gb.diam;
  s["detailed_balance"] = chain.detailed_balance_exact();
  s["trel_bound"] = gb.t_rel_bound;
  s["lambda_min_bound"] = gb.lambda_min_diam;
  bool pass = chain.detailed_balance_exact();
  if (chain.size() <= ChainAnalysis::kDenseCap) {
    const auto spec = chain.spectrum();
    const auto x = static_cast<VertexId>(f.start.value_or(tree.root()));
    if (x >= chain.size()) throw ConfigError("chain: --start out of range");
    const auto et = chain.eigentime_check(x, spec);
    const auto tm = chain.t_mix(0.25);
    s["tmix"] = tm.t;
    s["tmix_lower_bound"] = tm.lower_bound;
    s["trel"] = spec.t_rel;
    s["gamma_star"] = spec.gamma_star;
    s["lambda_min"] = spec.lambda_min;
    s["eigentime_lhs"] = et.lhs;
    s["eigentime_rhs"] = et.rhs;
    pass = pass && spec.t_rel <= gb.t_rel_bound * (1 + 1e-9) && et.gap <= 1e-8 * std::max(1.0, et.rhs);
  }
  if (f.profile > 0) {
    CsvTable prof({"t", "sep", "tv"});
    if (f.start) {
      if (*f.start >= chain.size()) throw ConfigError("chain: --start out of range");
      const auto sep = chain.separation_profile(static_cast<VertexId>(*f.start), f.profile);
      Distribution d = chain.point_mass(static_cast<VertexId>(*f.start)), tmp;
      for (std::uint64_t t = 0; t <= f.profile; ++t) {
        prof.row() << t << sep[t] << chain.tv_of(d);
        chain.step(d, tmp);
        d.swap(tmp);
      }
    } else {
      const auto p = chain.worst_case_profiles(f.profile);
      for (std::uint64_t t = 0; t <= f.profile; ++t) prof.row() << t << p.sep[t] << p.tv[t];
    }
    out.write_csv("profile.csv", prof);
  }
  if (f.rightbias > 0) {
    const LawSequence law = parse_law(f.law);
    const auto x = static_cast<VertexId>(f.start.value_or(tree.root()));
    Xoshiro256 rng(f.seed);
    const auto rb = rightbias_experiment(chain, x, law, f.n0, f.rightbias, rng);
    const auto cond = chi_square_gof(rb.conditional, chain.pi());
    const auto uncond = chi_square_gof(rb.unconditional, chain.pi());
    CsvTable tab({"vertex", "pi", "conditional", "unconditional"});
    for (std::size_t v = 0; v < chain.size(); ++v)
      tab.row() << static_cast<std::uint64_t>(v) << chain.pi()[v] << rb.conditional[v] << rb.unconditional[v];
    out.write_csv("rightbias.csv", tab);
    s["rightbias"] = {{"replicas", rb.replicas},
                      {"conditioned", rb.conditioned},
                      {"conditional_p_value", cond.p_value},
                      {"unconditional_p_value", uncond.p_value},
                      {"inconclusive", rb.inconclusive}};
    pass = pass && !rb.inconclusive && cond.p_value > 0.01;
  }
  s["pass"] = pass;
  out.write_json("summary.json", s);
  out.finish("chain", hash);
  progress.done(dir);
  std::cout << "chain " << (pass ? "pass" : "fail") << " " << dir.string() << "\n";
  return f.check && !pass ? kExitCheckFailed : kExitOk;
}

inline int cmd_experiment(const std::string& config_path, const std::string& kind, const RunFlags& f) {
  std::vector<ConfigEntry> entries;
  std::string name = kind;
  if (!config_path.empty()) {
    entries = parse_config_text(read_text_file(config_path));
    if (name.empty()) name = config_experiment(entries);
  }
  if (name.empty()) throw ConfigError("experiment: no experiment named (use --experiment or `experiment = ...`)");
  ExperimentConfig c = ExperimentConfig::defaults_for(name);
  c.threads = default_threads();
  apply_config(c, entries);
  c.experiment = name;
  apply_run_flags(c, f);
  Progress progress(f.verbose, "experiment " + name);
  const auto r = run_experiment(c);
  return finish_experiment(c, r, f.check, f.verbose, progress);
}

inline int cmd_targets(std::uint64_t d_max, const std::string& out_dir) {
  const auto rows = targets_table(d_max);
  const auto hc = height_constant();
  CsvTable tab({"d", "degree", "degree_cumulative", "level", "level_cumulative"});
  for (const auto& r : rows) tab.row() << r.d << r.degree << r.degree_cumulative << r.level << r.level_cumulative;
  std::cout << tab.str();
  std::cout << "# height constant c = " << format_double(hc.c) << " (c e^(c+1) = 1), height/ln n -> 1/(2c) = "
            << format_double(hc.ratio) << "\n";
  if (!out_dir.empty()) {
    OutputSet out(out_dir);
    out.write_csv("targets.csv", tab);
    Json s;
    s["c"] = hc.c;
    s["height_ratio"] = hc.ratio;
    s["residual"] = hc.residual;
    out.write_json("height.json", s);
    out.finish("targets", fnv1a("d_max = " + std::to_string(d_max) + "\n"));
  }
  return kExitOk;
}

inline int main(int argc, char** argv) {
  CLI::App app{"Tree builder random walk and preferential attachment lab"};
  app.require_subcommand(1);

  RunFlags sim_flags, ba_flags, rpat_flags, exp_flags;
  auto* sim = app.add_subcommand("simulate", "one tree builder random walk run");
  add_run_flags(sim, sim_flags);
  auto* ba = app.add_subcommand("ba", "preferential attachment trees and their degree law");
  add_run_flags(ba, ba_flags);
  auto* rpat = app.add_subcommand("rpat", "random preferential attachment trees driven by a growth law");
  add_run_flags(rpat, rpat_flags);

  ChainFlags chain_flags;
  auto* chain = app.add_subcommand("chain", "exact analysis of the walk on a fixed tree");
  chain->add_option("--tree", chain_flags.tree, "tree file (snapshot or edge list)")->required();
  chain->add_option("--profile", chain_flags.profile, "write s(t), d(t) for t = 0..T");
  chain->add_option("--start", chain_flags.start, "start vertex (default: worst case / root)");
  chain->add_option("--rightbias", chain_flags.rightbias, "replicas of the stationarity-at-growth experiment");
  chain->add_option("--law", chain_flags.law, "growth law for --rightbias");
  chain->add_option("--n0", chain_flags.n0, "base time for the growth interval");
  chain->add_option("--seed", chain_flags.seed, "seed for --rightbias");
  chain->add_option("--out", chain_flags.out, "output directory");
  chain->add_flag("--check", chain_flags.check, "exit 2 if a check fails");
  chain->add_flag("-v,--verbose", chain_flags.verbose, "progress on standard error");

  std::string config_path, kind;
  auto* exp = app.add_subcommand("experiment", "run a named experiment");
  exp->add_option("--config", config_path, "config file (key = value, [experiment] sections)");
  exp->add_option("--experiment", kind, "experiment kind");
  add_run_flags(exp, exp_flags);

  std::uint64_t d_max = 10;
  std::string targets_out;
  auto* targets = app.add_subcommand("targets", "print the limiting degree and level laws");
  targets->add_option("--dmax", d_max, "largest degree listed");
  targets->add_option("--out", targets_out, "also write targets.csv here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (*sim) return cmd_simulate(sim_flags);
    if (*ba) return cmd_generator("ba", ba_flags);
    if (*rpat) return cmd_generator("rpat", rpat_flags);
    if (*chain) return cmd_chain(chain_flags);
    if (*exp) {
      if (config_path.empty() && kind.empty()) {
        std::cerr << exp->help();
        std::cerr << "error: experiment needs --config or --experiment\n";
        return kExitError;
      }
      return cmd_experiment(config_path, kind, exp_flags);
    }
    if (*targets) return cmd_targets(d_max, targets_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace tbrw::cli
