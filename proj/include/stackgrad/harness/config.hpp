#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stackgrad/errors.hpp"
#include "stackgrad/games/generate.hpp"
#include "stackgrad/leader.hpp"
#include "stackgrad/text.hpp"

namespace stackgrad::harness {

/// A malformed config; `line` is 1-based, 0 when not tied to a line.
class ConfigError : public Error {
 public:
  ConfigError(int line, const std::string& what)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line(line) {}
  int line;
};

/// Everything a solve or sweep run needs. Text form:
///
///   [game]
///   kind = nfg
///   scale = desk
///   [seeds]
///   list = 1..3
///   [optimizer]
///   total_iters = 200
///
/// Unset keys keep the defaults below; unknown sections or keys are errors.
struct RunConfig {
  // [game]
  std::string kind = "nfg";
  /// "desk" shrinks instances for CI, "paper" keeps the full sizes.
  std::string scale = "desk";
  std::optional<Index> followers;
  std::optional<Index> actions;
  std::optional<Index> targets;
  double budget = 1.0;
  double risk_lambda = 1.0;
  double omega = 5.0;
  double risk_aversion = 0.01;
  double value_preference = 0.0;

  // [seeds]; unset means 1..30, or 1..100 for ssg
  std::optional<std::vector<std::uint64_t>> seeds;

  // [optimizer]
  double step = 0.01;
  int period = 100;
  double penalty = 10.0;
  int total_iters = 5000;
  int batch = 1;
  double ridge = 1e-8;

  // [oracle]
  double relax_weight = 0.5;
  int max_outer_iters = 5000;
  double br_tol = 1e-12;
  int br_max_iters = 5000;
  double eq_tol = 1e-6;
  double fixed_point_tol = 1e-10;
  double init_extent = 1.0;

  // [sweep]
  std::optional<std::vector<double>> budgets;

  // [output]
  std::string dir = "stackgrad_out";
  /// Off by default: wall-clock columns are then written as 0 so reruns
  /// are byte-identical.
  bool timing = false;
  /// 0 means one worker per hardware thread.
  int workers = 0;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

  std::vector<std::uint64_t> effective_seeds() const {
    if (seeds) return *seeds;
    const std::uint64_t last = kind == "ssg" ? 100 : 30;
    std::vector<std::uint64_t> out;
    for (std::uint64_t s = 1; s <= last; ++s) out.push_back(s);
    return out;
  }

  games::InstanceOptions instance_options() const {
    games::InstanceOptions o = scale == "desk" ? games::desk_options(kind) : games::InstanceOptions{};
    if (followers) o.followers = followers;
    if (actions) o.actions = actions;
    if (targets) o.targets = targets;
    o.budget = budget;
    o.risk_lambda = risk_lambda;
    o.omega = omega;
    o.risk_aversion = risk_aversion;
    o.value_preference = value_preference;
    return o;
  }

  OracleConfig oracle() const {
    OracleConfig c;
    c.relax_weight = relax_weight;
    c.min_relax_weight = std::min(c.min_relax_weight, relax_weight);
    c.max_outer_iters = max_outer_iters;
    c.br_tol = br_tol;
    c.br_max_iters = br_max_iters;
    c.eq_tol = eq_tol;
    c.fixed_point_tol = fixed_point_tol;
    c.init_extent = init_extent;
    return c;
  }

  /// Leader settings for one seed; the seed also drives the oracle stream.
  LeaderConfig leader(std::uint64_t seed) const {
    LeaderConfig c;
    c.step = step;
    c.period = period;
    c.penalty = penalty;
    c.total_iters = total_iters;
    c.batch = batch;
    c.ridge = ridge;
    c.seed = seed;
    c.oracle = oracle();
    return c;
  }

  /// Semantic checks beyond syntax; throws ConfigError without a line.
  void validate() const {
    try {
      games::check_kind(kind);
    } catch (const UnknownKind& e) {
      throw ConfigError(0, e.what());
    }
    if (scale != "desk" && scale != "paper")
      throw ConfigError(0, "scale must be 'desk' or 'paper', got '" + scale + "'");
    if (seeds && seeds->empty()) throw ConfigError(0, "seed list is empty");
    if (seeds)
      for (auto s : *seeds)
        if (s < 1) throw ConfigError(0, "seeds start at 1");
    if (workers < 0) throw ConfigError(0, "workers must be nonnegative");
    if (dir.empty()) throw ConfigError(0, "output dir is empty");
    try {
      leader(1).validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(0, e.what());
    }
  }
};

namespace detail {

inline std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + format_double(v[k]);
  return out;
}

/// Compresses runs of consecutive seeds into a..b.
inline std::string join_seeds(const std::vector<std::uint64_t>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size();) {
    std::size_t e = k;
    while (e + 1 < v.size() && v[e + 1] == v[e] + 1) ++e;
    if (!out.empty()) out += ',';
    out += std::to_string(v[k]);
    if (e > k) out += ".." + std::to_string(v[e]);
    k = e + 1;
  }
  return out;
}

}  // namespace detail

/// Seed lists: comma-separated integers and inclusive a..b ranges.
inline std::optional<std::vector<std::uint64_t>> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> out;
  for (auto piece : split(text, ",")) {
    piece = trim(piece);
    const auto dots = piece.find("..");
    std::uint64_t a = 0, b = 0;
    if (dots == std::string_view::npos) {
      if (!parse_integer(piece, a)) return std::nullopt;
      b = a;
    } else if (!parse_integer(trim(piece.substr(0, dots)), a) ||
               !parse_integer(trim(piece.substr(dots + 2)), b) || b < a || b - a > 1000000) {
      return std::nullopt;
    }
    for (std::uint64_t s = a; s <= b; ++s) out.push_back(s);
  }
  if (out.empty()) return std::nullopt;
  return out;
}

inline RunConfig parse_config(std::string_view text) {
  RunConfig c;
  std::string section;
  std::vector<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(lineno, "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      static const std::vector<std::string> known{"game", "seeds", "optimizer", "oracle", "sweep",
                                                  "output"};
      if (std::find(known.begin(), known.end(), section) == known.end())
        throw ConfigError(lineno, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(lineno, "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(lineno, "key '" + key + "' outside any section");
    const std::string full = section + "." + key;
    if (std::find(seen.begin(), seen.end(), full) != seen.end())
      throw ConfigError(lineno, "duplicate key '" + key + "' in [" + section + "]");
    seen.push_back(full);

    auto bad = [&](const char* expect) {
      return ConfigError(lineno, "key '" + key + "' expects " + expect + ", got '" +
                                     std::string(value) + "'");
    };
    auto as_double = [&](double& out) {
      if (!parse_double(value, out)) throw bad("a number");
    };
    auto as_int = [&](int& out) {
      if (!parse_integer(value, out)) throw bad("an integer");
    };
    auto as_size = [&](std::optional<Index>& out) {
      Index v = 0;
      if (!parse_integer(value, v) || v < 1) throw bad("a positive integer");
      out = v;
    };
    auto as_word = [&](std::string& out) {
      if (value.empty()) throw bad("a value");
      out = std::string(value);
    };

    bool ok = true;
    if (section == "game") {
      if (key == "kind") as_word(c.kind);
      else if (key == "scale") as_word(c.scale);
      else if (key == "followers") as_size(c.followers);
      else if (key == "actions") as_size(c.actions);
      else if (key == "targets") as_size(c.targets);
      else if (key == "budget") as_double(c.budget);
      else if (key == "risk_lambda") as_double(c.risk_lambda);
      else if (key == "omega") as_double(c.omega);
      else if (key == "risk_aversion") as_double(c.risk_aversion);
      else if (key == "value_preference") as_double(c.value_preference);
      else ok = false;
    } else if (section == "seeds") {
      if (key == "list") {
        c.seeds = parse_seed_list(value);
        if (!c.seeds) throw bad("integers and a..b ranges");
      } else {
        ok = false;
      }
    } else if (section == "optimizer") {
      if (key == "step") as_double(c.step);
      else if (key == "period") as_int(c.period);
      else if (key == "penalty") as_double(c.penalty);
      else if (key == "total_iters") as_int(c.total_iters);
      else if (key == "batch") as_int(c.batch);
      else if (key == "ridge") as_double(c.ridge);
      else ok = false;
    } else if (section == "oracle") {
      if (key == "relax_weight") as_double(c.relax_weight);
      else if (key == "max_outer_iters") as_int(c.max_outer_iters);
      else if (key == "br_tol") as_double(c.br_tol);
      else if (key == "br_max_iters") as_int(c.br_max_iters);
      else if (key == "eq_tol") as_double(c.eq_tol);
      else if (key == "fixed_point_tol") as_double(c.fixed_point_tol);
      else if (key == "init_extent") as_double(c.init_extent);
      else ok = false;
    } else if (section == "sweep") {
      if (key == "budgets") {
        std::vector<double> b;
        for (auto piece : split(value, ",")) {
          double v = 0.0;
          if (!parse_double(trim(piece), v)) throw bad("a comma-separated list of numbers");
          b.push_back(v);
        }
        if (b.empty()) throw bad("a comma-separated list of numbers");
        c.budgets = std::move(b);
      } else {
        ok = false;
      }
    } else if (section == "output") {
      if (key == "dir") as_word(c.dir);
      else if (key == "timing") {
        if (value == "true") c.timing = true;
        else if (value == "false") c.timing = false;
        else throw bad("true or false");
      } else if (key == "workers") as_int(c.workers);
      else ok = false;
    }
    if (!ok) throw ConfigError(lineno, "unknown key '" + key + "' in [" + section + "]");
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(0, "cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

/// Canonical text: every set key, fixed order. parse_config inverts it.
inline std::string print_config(const RunConfig& c) {
  std::string out;
  auto kv = [&out](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  auto num = [](double v) { return format_double(v); };
  out += "[game]\n";
  kv("kind", c.kind);
  kv("scale", c.scale);
  if (c.followers) kv("followers", std::to_string(*c.followers));
  if (c.actions) kv("actions", std::to_string(*c.actions));
  if (c.targets) kv("targets", std::to_string(*c.targets));
  kv("budget", num(c.budget));
  kv("risk_lambda", num(c.risk_lambda));
  kv("omega", num(c.omega));
  kv("risk_aversion", num(c.risk_aversion));
  kv("value_preference", num(c.value_preference));
  if (c.seeds) {
    out += "\n[seeds]\n";
    kv("list", detail::join_seeds(*c.seeds));
  }
  out += "\n[optimizer]\n";
  kv("step", num(c.step));
  kv("period", std::to_string(c.period));
  kv("penalty", num(c.penalty));
  kv("total_iters", std::to_string(c.total_iters));
  kv("batch", std::to_string(c.batch));
  kv("ridge", num(c.ridge));
  out += "\n[oracle]\n";
  kv("relax_weight", num(c.relax_weight));
  kv("max_outer_iters", std::to_string(c.max_outer_iters));
  kv("br_tol", num(c.br_tol));
  kv("br_max_iters", std::to_string(c.br_max_iters));
  kv("eq_tol", num(c.eq_tol));
  kv("fixed_point_tol", num(c.fixed_point_tol));
  kv("init_extent", num(c.init_extent));
  if (c.budgets) {
    out += "\n[sweep]\n";
    kv("budgets", detail::join_doubles(*c.budgets));
  }
  out += "\n[output]\n";
  kv("dir", c.dir);
  kv("timing", c.timing ? "true" : "false");
  kv("workers", std::to_string(c.workers));
  return out;
}

}  // namespace stackgrad::harness
