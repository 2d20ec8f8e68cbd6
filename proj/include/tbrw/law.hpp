#pragma once

// Leaf-count law sequences: Z_n = w_n with probability p_n, else 0.
//
//   ber       p_j = scale * j^-gamma, w_j = 1
//   weighted  p_j = scale * j^-gamma, w_j from a table (extended by its last entry)
//   custom    p_j, w_j from a table (extended by its last row)
//
// Every query at index n reads row j = n + shift, so a shifted law is the tail
// {L_{m+n}} of the unshifted one.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tbrw/error.hpp"
#include "tbrw/format.hpp"
#include "tbrw/rng.hpp"

namespace tbrw {

struct GrowthIncrementTail {
  std::uint64_t base_time = 0;
  /// values[m] = P(delta tau > m), m = 0..m_max (shorter when truncated).
  std::vector<double> values;
  bool truncated = false;
};

class LawSequence {
 public:
  enum class Kind { bernoulli_power, weighted, custom };

  static LawSequence bernoulli_power(double gamma, double scale = 1.0, std::uint64_t shift = 0) {
    check_power(gamma, scale);
    LawSequence law;
    law.kind_ = Kind::bernoulli_power;
    law.gamma_ = gamma;
    law.scale_ = scale;
    law.shift_ = shift;
    return law;
  }

  static LawSequence weighted(double gamma, std::vector<std::uint64_t> weights, double scale = 1.0,
                              std::uint64_t shift = 0, std::string source = {}) {
    check_power(gamma, scale);
    if (weights.empty()) throw ConfigError("weighted law needs at least one weight");
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] < 1) throw ConfigError("weights must be positive integers");
      if (i > 0 && weights[i] < weights[i - 1]) throw ConfigError("weights must be nondecreasing");
    }
    LawSequence law;
    law.kind_ = Kind::weighted;
    law.gamma_ = gamma;
    law.scale_ = scale;
    law.shift_ = shift;
    law.w_ = std::move(weights);
    law.source_ = std::move(source);
    return law;
  }

  /// Rows j = 1..N of (p_j, w_j); queries past N reuse row N. Empty `w` means w = 1.
  static LawSequence custom(std::vector<double> p, std::vector<std::uint64_t> w = {}, std::uint64_t shift = 0,
                            std::string source = {}) {
    if (p.empty()) throw ConfigError("custom law needs at least one row");
    if (w.empty()) w.assign(p.size(), 1);
    if (w.size() != p.size()) throw ConfigError("custom law: p and w tables differ in length");
    for (double x : p)
      if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("custom law: p_n must lie in [0, 1]");
    for (auto x : w)
      if (x < 1) throw ConfigError("custom law: w_n must be >= 1");
    LawSequence law;
    law.kind_ = Kind::custom;
    law.p_ = std::move(p);
    law.w_ = std::move(w);
    law.shift_ = shift;
    law.source_ = std::move(source);
    law.monotone_ = std::is_sorted(law.p_.rbegin(), law.p_.rend());
    return law;
  }

  static LawSequence constant(double p, std::uint64_t w = 1) {
    LawSequence law = custom({p}, {w});
    law.constant_ = true;
    return law;
  }

  Kind kind() const noexcept { return kind_; }
  double gamma() const noexcept { return gamma_; }
  double scale() const noexcept { return scale_; }
  std::uint64_t shift() const noexcept { return shift_; }
  /// True when p_n is nonincreasing in n.
  bool nonincreasing() const noexcept { return monotone_; }

  /// The shifted law L^(m): row n reads row n + m of this law.
  LawSequence shifted(std::uint64_t m) const {
    LawSequence law = *this;
    law.shift_ += m;
    return law;
  }

  double prob_at(std::uint64_t n) const {
    if (n == 0) throw DomainError("law index must be >= 1");
    return prob_row(n + shift_);
  }

  std::uint64_t weight_at(std::uint64_t n) const {
    if (n == 0) throw DomainError("law index must be >= 1");
    return weight_row(n + shift_);
  }

  /// Z_n * w_n: w_n with probability p_n, else 0. One uniform draw.
  std::uint64_t sample_leaf_count(std::uint64_t n, Xoshiro256& rng) const {
    return rng.uniform() < prob_at(n) ? weight_at(n) : 0;
  }

  /// P(delta tau > m) = prod_{j=1..m} (1 - p_{n0+j}), m = 0..m_max.
  GrowthIncrementTail growth_tail(std::uint64_t n0, std::uint64_t m_max) const {
    GrowthIncrementTail tail;
    tail.base_time = n0;
    tail.values.reserve(m_max + 1);
    double value = 1.0;
    tail.values.push_back(value);
    for (std::uint64_t m = 1; m <= m_max; ++m) {
      value *= 1.0 - prob_row(n0 + m + shift_);
      if (value < std::numeric_limits<double>::min()) {
        tail.truncated = true;
        break;
      }
      tail.values.push_back(value);
    }
    return tail;
  }

  /// Next growth increment after base time n0, by sequential Bernoulli draws
  /// (one uniform per step). nullopt if no growth within `cap` steps.
  std::optional<std::uint64_t> sample_next_growth(std::uint64_t n0, Xoshiro256& rng,
                                                  std::uint64_t cap = std::uint64_t{1} << 62) const;

  /// Sum_{k=1..n} p_k.
  double cumulative(std::uint64_t n) const {
    return static_cast<double>(cumulative_real(static_cast<long double>(n)));
  }

  /// Same as cumulative() for integral n that may exceed 2^64.
  long double cumulative_real(long double n) const {
    const auto shift = static_cast<long double>(shift_);
    return row_sum(n + shift, false) - row_sum(shift, false);
  }

  /// seed_size + Sum_{k=1..n} p_k w_k.
  double expected_size(std::uint64_t n, double seed_size) const {
    const auto shift = static_cast<long double>(shift_);
    const auto upto = static_cast<long double>(n) + shift;
    return seed_size + static_cast<double>(row_sum(upto, true) - row_sum(shift, true));
  }

  /// Smallest n with expected_size(n, seed_size) >= target.
  std::uint64_t time_for_size(double target, double seed_size = 1.0) const {
    if (!(target > seed_size)) throw DomainError("time_for_size: target must exceed the seed size");
    constexpr std::uint64_t kHorizon = std::uint64_t{1} << 62;
    std::uint64_t hi = 1;
    while (expected_size(hi, seed_size) < target) {
      if (hi >= kHorizon) throw DomainError("time_for_size: target unreachable within 2^62 steps");
      hi *= 2;
    }
    std::uint64_t lo = hi / 2;  // expected_size(lo) < target unless lo == 0
    while (hi - lo > 1) {
      const std::uint64_t mid = lo + (hi - lo) / 2;
      if (expected_size(mid, seed_size) >= target)
        hi = mid;
      else
        lo = mid;
    }
    return hi;
  }

  /// Chebyshev bound P(tau_i > j) <= P_j / (P_j - i + 1)^2; nullopt when P_j <= i - 1.
  std::optional<long double> rij_chebyshev(std::uint64_t i, long double j) const {
    const long double mass = cumulative_real(j);
    const long double margin = mass - static_cast<long double>(i) + 1.0L;
    if (!(margin > 0.0L)) return std::nullopt;
    return mass / (margin * margin);
  }

  /// Monte Carlo estimate of P(tau_i > j): fewer than i growths among steps 1..j.
  double rij_monte_carlo(std::uint64_t i, std::uint64_t j, std::uint64_t replicas, Xoshiro256& rng) const {
    std::uint64_t hits = 0;
    for (std::uint64_t r = 0; r < replicas; ++r) {
      std::uint64_t growths = 0;
      for (std::uint64_t n = 1; n <= j && growths < i; ++n)
        if (rng.uniform() < prob_at(n)) ++growths;
      if (growths < i) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(replicas);
  }

  /// Canonical law spec string (see parse_law).
  std::string to_spec() const {
    std::string s;
    switch (kind_) {
      case Kind::bernoulli_power:
        s = "ber:gamma=" + format_double(gamma_) + ",scale=" + format_double(scale_);
        break;
      case Kind::weighted:
        s = "weighted:gamma=" + format_double(gamma_) + ",scale=" + format_double(scale_) + ",w=" +
            (source_.empty() ? std::to_string(w_.front()) : "table@" + source_);
        break;
      case Kind::custom:
        if (constant_) {
          s = "const:p=" + format_double(p_.front()) + ",w=" + std::to_string(w_.front());
        } else {
          s = "custom@" + source_;
        }
        break;
    }
    if (shift_ != 0 || kind_ != Kind::custom) s += ",shift=" + std::to_string(shift_);
    return s;
  }

  bool operator==(const LawSequence&) const = default;

 private:
  LawSequence() = default;

  static void check_power(double gamma, double scale) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be a positive real");
    if (!(scale > 0.0 && scale <= 1.0)) throw ConfigError("scale must lie in (0, 1]");
  }

  double prob_row(std::uint64_t j) const {
    if (kind_ == Kind::custom) return p_[std::min<std::uint64_t>(j, p_.size()) - 1];
    return scale_ * std::pow(static_cast<double>(j), -gamma_);
  }

  std::uint64_t weight_row(std::uint64_t j) const {
    if (w_.empty()) return 1;
    return w_[std::min<std::uint64_t>(j, w_.size()) - 1];
  }

  // Sum_{j=1..upto} p_j (times w_j when `weighted_sum`), upto integral.
  long double row_sum(long double upto, bool weighted_sum) const {
    if (upto < 1.0L) return 0.0L;
    if (kind_ == Kind::custom) {
      const auto rows = static_cast<long double>(p_.size());
      const long double direct_end = std::min(upto, rows);
      long double sum = 0.0L;
      for (std::size_t j = 0; j < static_cast<std::size_t>(direct_end); ++j)
        sum += static_cast<long double>(p_[j]) * (weighted_sum ? static_cast<long double>(w_[j]) : 1.0L);
      if (upto > rows)
        sum += (upto - rows) * static_cast<long double>(p_.back()) *
               (weighted_sum ? static_cast<long double>(w_.back()) : 1.0L);
      return sum;
    }
    if (kind_ == Kind::weighted && weighted_sum) {
      const auto rows = static_cast<long double>(w_.size());
      const long double direct_end = std::min(upto, rows);
      long double sum = 0.0L;
      for (std::size_t j = 1; j <= static_cast<std::size_t>(direct_end); ++j)
        sum += static_cast<long double>(prob_row(j)) * static_cast<long double>(w_[j - 1]);
      if (upto > rows) sum += static_cast<long double>(w_.back()) * (power_sum(upto) - power_sum(rows));
      return sum;
    }
    return power_sum(upto);
  }

  // Sum_{j=1..N} scale * j^-gamma: direct below kDirect, Euler-Maclaurin beyond
  // (terms through B6; the remainder is O(N0^(-gamma-7)), far below double eps).
  long double power_sum(long double upto) const {
    constexpr std::uint64_t kDirect = 4096;
    const long double g = gamma_;
    const long double c = scale_;
    auto f = [&](long double x) { return c * std::pow(x, -g); };
    const auto direct_end = static_cast<std::uint64_t>(std::min<long double>(upto, kDirect));
    long double sum = 0.0L;
    for (std::uint64_t j = direct_end; j >= 1; --j) sum += f(static_cast<long double>(j));
    if (upto <= static_cast<long double>(kDirect)) return sum;
    const long double a = kDirect;
    const long double b = upto;
    const long double log_ratio = std::log(b / a);
    long double integral;
    if (std::fabs(1.0L - g) < 1e-12L)
      integral = c * log_ratio;
    else
      integral = c * std::pow(a, 1.0L - g) * std::expm1((1.0L - g) * log_ratio) / (1.0L - g);
    auto deriv = [&](long double x, int order) {
      // d^order/dx^order of c x^-g, order odd.
      long double coef = -g;
      for (int k = 1; k < order; ++k) coef *= -(g + k);
      return c * coef * std::pow(x, -g - order);
    };
    long double tail = integral + (f(b) - f(a)) / 2.0L;
    tail += (deriv(b, 1) - deriv(a, 1)) / 12.0L;
    tail -= (deriv(b, 3) - deriv(a, 3)) / 720.0L;
    tail += (deriv(b, 5) - deriv(a, 5)) / 30240.0L;
    return sum + tail;
  }

  Kind kind_ = Kind::bernoulli_power;
  double gamma_ = 1.0;
  double scale_ = 1.0;
  std::uint64_t shift_ = 0;
  std::vector<double> p_;
  std::vector<std::uint64_t> w_;
  std::string source_;
  bool monotone_ = true;
  bool constant_ = false;

  friend class GrowthIndicator;
};

/// Draws the growth indicators 1{u < p_n} for increasing n with one uniform
/// per call. For monotone power laws the exact p_n is only evaluated when u
/// falls between cached bounds of the current block, so the result equals the
/// direct comparison while skipping almost every pow() call.
class GrowthIndicator {
 public:
  explicit GrowthIndicator(const LawSequence& law) : law_(&law) {}

  bool draw(std::uint64_t n, double u) {
    if (law_->kind_ == LawSequence::Kind::custom) return u < law_->prob_at(n);
    if (n < block_begin_ || n >= block_end_) refill(n);
    if (u >= upper_) return false;
    if (u < lower_) return true;
    return u < law_->prob_at(n);
  }

 private:
  static constexpr std::uint64_t kBlock = 512;
  // Relative guard band absorbing any non-monotone rounding in pow().
  static constexpr double kGuard = 1e-12;

  void refill(std::uint64_t n) {
    block_begin_ = n;
    block_end_ = n + kBlock;
    upper_ = law_->prob_at(block_begin_) * (1.0 + kGuard);
    lower_ = law_->prob_at(block_end_ - 1) * (1.0 - kGuard);
  }

  const LawSequence* law_;
  std::uint64_t block_begin_ = 1;
  std::uint64_t block_end_ = 0;
  double upper_ = 0.0;
  double lower_ = 0.0;
};

inline std::optional<std::uint64_t> LawSequence::sample_next_growth(std::uint64_t n0, Xoshiro256& rng,
                                                                    std::uint64_t cap) const {
  GrowthIndicator indicator(*this);
  for (std::uint64_t m = 1; m <= cap; ++m)
    if (indicator.draw(n0 + m, rng.uniform())) return m;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Transience diagnostics

struct SeriesTrend {
  std::vector<long double> partial_sums;
  bool converging = false;
};

/// Heuristic trend flag (not a proof): the series is called converging when its
/// last full dyadic block of terms sums to less than 0.99 of the block before.
inline SeriesTrend classify_series(std::vector<long double> terms) {
  SeriesTrend trend;
  long double running = 0.0L;
  trend.partial_sums.reserve(terms.size());
  for (long double t : terms) trend.partial_sums.push_back(running += t);
  std::vector<long double> blocks;
  for (std::size_t start = 1; 2 * start - 1 <= terms.size(); start *= 2) {
    long double s = 0.0L;
    for (std::size_t i = start; i < 2 * start; ++i) s += terms[i - 1];
    blocks.push_back(s);
  }
  if (blocks.size() >= 3) {
    const long double last = blocks.back();
    const long double prev = blocks[blocks.size() - 2];
    trend.converging = last < 0.99L * prev;
  }
  return trend;
}

struct TransienceConditionsReport {
  SeriesTrend r_bound;        // sum_i r_{i, a_i} via the Chebyshev bound
  SeriesTrend weight_ratio;   // sum_i (a_i - a_{i-1}) / (w_{i-1} + 1)
  SeriesTrend min_prob;       // sum_n min{p_n, p_{n+1}}
  std::uint64_t inapplicable = 0;  // indices where the Chebyshev bound does not apply (term set to 1)
};

/// `a` holds a_1..a_H (strictly increasing, integral values); a_0 = 0.
/// `weight(i)` returns w_i for i >= 0; by default w_0 := w_1.
inline TransienceConditionsReport transience_conditions_report(
    const LawSequence& law, const std::vector<long double>& a, std::uint64_t horizon,
    std::function<long double(std::uint64_t)> weight = {}) {
  if (!weight) weight = [&law](std::uint64_t i) { return static_cast<long double>(law.weight_at(std::max<std::uint64_t>(i, 1))); };
  const std::uint64_t count = std::min<std::uint64_t>(horizon, a.size());
  for (std::uint64_t i = 1; i < count; ++i)
    if (!(a[i] > a[i - 1])) throw ConfigError("a-sequence must be strictly increasing");
  TransienceConditionsReport report;
  std::vector<long double> r_terms, w_terms, p_terms;
  for (std::uint64_t i = 1; i <= count; ++i) {
    const auto bound = law.rij_chebyshev(i, a[i - 1]);
    if (bound) {
      r_terms.push_back(std::min(*bound, 1.0L));
    } else {
      r_terms.push_back(1.0L);
      ++report.inapplicable;
    }
    const long double prev = i == 1 ? 0.0L : a[i - 2];
    w_terms.push_back((a[i - 1] - prev) / (weight(i - 1) + 1.0L));
  }
  for (std::uint64_t n = 1; n <= horizon; ++n)
    p_terms.push_back(std::min(law.prob_at(n), law.prob_at(n + 1)));
  report.r_bound = classify_series(std::move(r_terms));
  report.weight_ratio = classify_series(std::move(w_terms));
  report.min_prob = classify_series(std::move(p_terms));
  return report;
}

// ---------------------------------------------------------------------------
// Law spec strings:
//   ber:gamma=0.7,scale=1.0,shift=0
//   weighted:gamma=0.5,w=table@weights.txt[,scale=..][,shift=..]   (or w=<integer>)
//   custom@table.txt[,shift=..]    rows "n p_n [w_n]" with n = 1..N
//   const:p=0.5[,w=1]

namespace detail {

inline std::vector<std::pair<std::string, std::string>> split_params(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t pos = 0;
  while (pos <= text.size() && !text.empty()) {
    const std::size_t comma = text.find(',', pos);
    const std::string_view item = text.substr(pos, comma == std::string_view::npos ? text.npos : comma - pos);
    const std::size_t eq = item.find('=');
    if (eq == std::string_view::npos) throw ConfigError("law spec: expected key=value, got '" + std::string(item) + "'");
    out.emplace_back(std::string(item.substr(0, eq)), std::string(item.substr(eq + 1)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline double parse_double(const std::string& s, const char* what) {
  try {
    return parse_double_exact(s);
  } catch (const ConfigError&) {
    throw ConfigError(std::string("law spec: bad number for ") + what + ": '" + s + "'");
  }
}

inline std::uint64_t parse_uint(const std::string& s, const char* what) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    x = std::stoull(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty() || s[0] == '-')
    throw ConfigError(std::string("law spec: bad integer for ") + what + ": '" + s + "'");
  return x;
}

inline std::string join_path(const std::string& base_dir, const std::string& path) {
  if (base_dir.empty() || (!path.empty() && path[0] == '/')) return path;
  return base_dir + "/" + path;
}

}  // namespace detail

inline LawSequence parse_law(std::string_view spec, const std::string& base_dir = {}) {
  using namespace detail;
  const std::size_t colon = spec.find(':');
  const std::size_t at = spec.find('@');
  if (spec.rfind("custom@", 0) == 0) {
    std::string rest(spec.substr(7));
    std::string path = rest;
    std::uint64_t shift = 0;
    if (const auto comma = rest.find(','); comma != std::string::npos) {
      path = rest.substr(0, comma);
      for (const auto& [k, v] : split_params(std::string_view(rest).substr(comma + 1))) {
        if (k == "shift")
          shift = parse_uint(v, "shift");
        else
          throw ConfigError("law spec: unknown key '" + k + "' for custom law");
      }
    }
    std::ifstream in(join_path(base_dir, path));
    if (!in) throw ConfigError("law spec: cannot open table '" + path + "'");
    std::vector<double> p;
    std::vector<std::uint64_t> w;
    std::string line;
    bool has_w = false;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      ls.imbue(std::locale::classic());
      std::uint64_t n;
      double pn;
      if (!(ls >> n >> pn)) throw ConfigError("law table: malformed row '" + line + "'");
      if (n != p.size() + 1) throw ConfigError("law table: rows must be numbered 1..N in order");
      std::uint64_t wn = 1;
      if (ls >> wn) has_w = true;
      p.push_back(pn);
      w.push_back(wn);
    }
    if (!has_w) w.clear();
    return LawSequence::custom(std::move(p), std::move(w), shift, path);
  }
  if (colon == std::string_view::npos || (at != std::string_view::npos && at < colon))
    throw ConfigError("law spec: expected '<kind>:<params>', got '" + std::string(spec) + "'");
  const std::string kind(spec.substr(0, colon));
  const auto params = split_params(spec.substr(colon + 1));
  double gamma = std::numeric_limits<double>::quiet_NaN(), scale = 1.0, p = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t shift = 0, w_const = 1;
  std::string w_table;
  bool have_w = false;
  for (const auto& [k, v] : params) {
    if (k == "gamma" && kind != "const") {
      gamma = parse_double(v, "gamma");
    } else if (k == "scale" && kind != "const") {
      scale = parse_double(v, "scale");
    } else if (k == "shift") {
      shift = parse_uint(v, "shift");
    } else if (k == "p" && kind == "const") {
      p = parse_double(v, "p");
    } else if (k == "w" && (kind == "weighted" || kind == "const")) {
      have_w = true;
      if (v.rfind("table@", 0) == 0)
        w_table = v.substr(6);
      else
        w_const = parse_uint(v, "w");
    } else {
      throw ConfigError("law spec: unknown key '" + k + "' for " + kind + " law");
    }
  }
  if (kind == "ber") {
    if (std::isnan(gamma)) throw ConfigError("law spec: ber needs gamma");
    return LawSequence::bernoulli_power(gamma, scale, shift);
  }
  if (kind == "weighted") {
    if (std::isnan(gamma)) throw ConfigError("law spec: weighted needs gamma");
    if (!have_w) throw ConfigError("law spec: weighted needs w");
    if (w_table.empty()) return LawSequence::weighted(gamma, {w_const}, scale, shift);
    std::ifstream in(join_path(base_dir, w_table));
    if (!in) throw ConfigError("law spec: cannot open weight table '" + w_table + "'");
    std::vector<std::uint64_t> weights;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::uint64_t n, wn;
      if (!(ls >> n >> wn)) throw ConfigError("weight table: malformed row '" + line + "'");
      if (n != weights.size() + 1) throw ConfigError("weight table: rows must be numbered 1..N in order");
      weights.push_back(wn);
    }
    return LawSequence::weighted(gamma, std::move(weights), scale, shift, w_table);
  }
  if (kind == "const") {
    if (std::isnan(p)) throw ConfigError("law spec: const needs p");
    LawSequence law = LawSequence::constant(p, w_const);
    return shift == 0 ? law : law.shifted(shift);
  }
  throw ConfigError("law spec: unknown law kind '" + kind + "'");
}

}  // namespace tbrw
