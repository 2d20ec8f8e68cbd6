#pragma once

// Experiment configuration: flat `key = value` text, optionally split into
// `[experiment]` sections. Keys before any section apply to every experiment;
// keys inside a section apply only when that experiment runs. Unknown keys and
// sections are rejected.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tbrw/error.hpp"
#include "tbrw/format.hpp"
#include "tbrw/io.hpp"

namespace tbrw {

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds = {"degree",     "height",     "maxdeg",          "level",
                                                 "growth_time", "recurrence", "transience", "diameter_window",
                                                 "redness",    "condition_m"};
  return kinds;
}

struct ExperimentConfig {
  std::string experiment = "degree";
  std::string model = "ba";  // ba | tbrw | rpat (degree-type experiments)
  std::string law = "ber:gamma=0.7,scale=1,shift=0";
  std::string seed_kind = "loop";  // loop | edge_loop | edge
  std::uint64_t steps = 0;
  std::uint64_t vertices = 0;
  std::uint64_t replicas = 1;
  std::uint64_t seed = 0;
  std::uint64_t threads = 1;  // execution only: excluded from the hash
  std::string checkpoints = "dyadic";  // dyadic | comma-separated step list
  double delta = 0.05;       // good-interval exponent slack in k^(2+delta) + 1
  double window_eps = 0.1;   // window length n^(2(1-gamma) + window_eps)
  double kappa = 0.1;        // subtree-order decay exponent used in the window report
  double tail_fraction = 0.5;
  std::uint64_t d_max = 10;
  std::uint64_t levels = 3;
  std::uint64_t k_min = 100;
  std::uint64_t k_max = 1000;
  std::string windows = "100000,1000000,10000000";
  double tolerance = 0.01;
  std::uint64_t window_min_j = 20;
  std::string out;  // output directory: excluded from the hash

  bool operator==(const ExperimentConfig&) const = default;

  /// Acceptance-scale defaults for each experiment.
  static ExperimentConfig defaults_for(const std::string& kind) {
    ExperimentConfig c;
    c.experiment = kind;
    if (kind == "degree") {
      c.vertices = 200000;
      c.replicas = 10;
    } else if (kind == "height") {
      c.vertices = 200000;
      c.replicas = 20;
      c.tolerance = 0.15;
    } else if (kind == "maxdeg") {
      c.vertices = 100000;
      c.checkpoints = "25000,50000,100000";
      c.replicas = 10;
      c.tolerance = 0.25;
    } else if (kind == "level") {
      c.vertices = 200000;
      c.replicas = 10;
      c.tolerance = 0.02;
      c.d_max = 5;
    } else if (kind == "growth_time") {
      c.model = "tbrw";
      c.replicas = 10;
      c.tolerance = 0.1;
      c.tail_fraction = 1.0;
    } else if (kind == "recurrence") {
      c.model = "tbrw";
      c.law = "ber:gamma=0.6,scale=1,shift=0";
      c.steps = 100000000;
      c.replicas = 10;
      c.tolerance = 0.9;
    } else if (kind == "transience") {
      c.model = "tbrw";
      c.law = "ber:gamma=0.15,scale=1,shift=0";
      c.steps = 10000000;
      c.replicas = 10;
      c.tolerance = 0.05;
    } else if (kind == "diameter_window") {
      c.model = "tbrw";
      c.steps = 10000000;
      c.replicas = 200;
      c.d_max = 6;
    } else if (kind == "redness") {
      c.model = "tbrw";
      c.vertices = 1001;
      c.steps = std::uint64_t{1} << 40;
      c.replicas = 20;
      c.tolerance = 0.9;
    } else if (kind == "condition_m") {
      c.model = "tbrw";
      c.vertices = 200;
      c.steps = std::uint64_t{1} << 40;
      c.replicas = 1;
      c.tolerance = 1e-3;
    } else {
      throw ConfigError("unknown experiment '" + kind + "'");
    }
    return c;
  }
};

namespace detail {

struct ConfigKey {
  std::string name;
  bool hashed;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
  // Accepts plain integers and exact scientific forms such as 2e8.
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec == std::errc{} && res.ptr == v.data() + v.size() && !v.empty()) return out;
  double x = 0.0;
  try {
    x = parse_double_exact(v);
  } catch (const ConfigError&) {
    throw ConfigError("config: '" + key + "' expects a nonnegative integer, got '" + v + "'");
  }
  if (!(x >= 0.0) || x != std::floor(x) || x >= 1.8446744073709552e19)
    throw ConfigError("config: '" + key + "' expects a nonnegative integer, got '" + v + "'");
  return static_cast<std::uint64_t>(x);
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    return parse_double_exact(v);
  } catch (const ConfigError&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

inline const std::vector<ConfigKey>& config_keys() {
  using C = ExperimentConfig;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    auto str = [&k](const char* name, std::string C::*field, bool hashed = true) {
      k.push_back({name, hashed, [field](const C& c) { return c.*field; },
                   [field](C& c, const std::string& v) { c.*field = v; }});
    };
    auto count = [&k](const char* name, std::uint64_t C::*field, bool hashed = true) {
      k.push_back({name, hashed, [field](const C& c) { return std::to_string(c.*field); },
                   [field, name](C& c, const std::string& v) { c.*field = parse_count(name, v); }});
    };
    auto real = [&k](const char* name, double C::*field) {
      k.push_back({name, true, [field](const C& c) { return format_double(c.*field); },
                   [field, name](C& c, const std::string& v) { c.*field = parse_real(name, v); }});
    };
    str("experiment", &C::experiment);
    str("model", &C::model);
    str("law", &C::law);
    str("seed_kind", &C::seed_kind);
    count("steps", &C::steps);
    count("vertices", &C::vertices);
    count("replicas", &C::replicas);
    count("seed", &C::seed);
    count("threads", &C::threads, false);
    str("checkpoints", &C::checkpoints);
    real("delta", &C::delta);
    real("window_eps", &C::window_eps);
    real("kappa", &C::kappa);
    real("tail_fraction", &C::tail_fraction);
    count("d_max", &C::d_max);
    count("levels", &C::levels);
    count("k_min", &C::k_min);
    count("k_max", &C::k_max);
    str("windows", &C::windows);
    real("tolerance", &C::tolerance);
    count("window_min_j", &C::window_min_j);
    str("out", &C::out, false);
    return k;
  }();
  return keys;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

/// Sets one key; throws ConfigError for unknown keys or malformed values.
inline void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : detail::config_keys())
    if (k.name == key) {
      k.set(config, value);
      return;
    }
  throw ConfigError("config: unknown key '" + key + "'");
}

struct ConfigEntry {
  std::string section;  // empty for global keys
  std::string key;
  std::string value;
};

/// Splits config text into entries, validating keys and section names.
inline std::vector<ConfigEntry> parse_config_text(std::string_view text) {
  std::vector<ConfigEntry> out;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
      section = detail::trim(std::string_view(t).substr(1, t.size() - 2));
      const auto& kinds = experiment_kinds();
      if (std::find(kinds.begin(), kinds.end(), section) == kinds.end())
        throw ConfigError("config line " + std::to_string(lineno) + ": unknown section '" + section + "'");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    ConfigEntry e{section, detail::trim(std::string_view(t).substr(0, eq)), detail::trim(std::string_view(t).substr(eq + 1))};
    const auto& keys = detail::config_keys();
    if (std::none_of(keys.begin(), keys.end(), [&](const auto& k) { return k.name == e.key; }))
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + e.key + "'");
    out.push_back(std::move(e));
  }
  return out;
}

/// Applies global entries, then those of the section matching config.experiment.
inline void apply_config(ExperimentConfig& config, const std::vector<ConfigEntry>& entries) {
  for (const auto& e : entries)
    if (e.section.empty()) set_config_value(config, e.key, e.value);
  for (const auto& e : entries)
    if (e.section == config.experiment) set_config_value(config, e.key, e.value);
}

/// Experiment named by the text (global `experiment = ...`), if any.
inline std::string config_experiment(const std::vector<ConfigEntry>& entries) {
  std::string name;
  for (const auto& e : entries)
    if (e.section.empty() && e.key == "experiment") name = e.value;
  return name;
}

/// Canonical echo: every key in a fixed order. Parsing it back yields the same config.
inline std::string echo_config(const ExperimentConfig& config, bool include_unhashed = true) {
  std::string out;
  for (const auto& k : detail::config_keys()) {
    if (!k.hashed && !include_unhashed) continue;
    out += k.name + " = " + k.get(config) + "\n";
  }
  return out;
}

inline std::uint64_t config_hash(const ExperimentConfig& config) { return fnv1a(echo_config(config, false)); }

/// Parses a comma-separated list of step counts.
inline std::vector<std::uint64_t> parse_count_list(const std::string& key, const std::string& text) {
  std::vector<std::uint64_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item = detail::trim(std::string_view(text).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    if (!item.empty()) out.push_back(detail::parse_count(key, item));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace tbrw
