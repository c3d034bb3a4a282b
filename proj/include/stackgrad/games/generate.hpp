#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "stackgrad/errors.hpp"
#include "stackgrad/games/cyber.hpp"
#include "stackgrad/games/nfg.hpp"
#include "stackgrad/games/ssg.hpp"
#include "stackgrad/games/toy.hpp"
#include "stackgrad/random.hpp"

namespace stackgrad::games {

/// Instance kinds known to the generator. The two toys carry no random data.
inline const std::vector<std::string>& known_kinds() {
  static const std::vector<std::string> kinds{"nfg", "ssg", "cyber", "quadratic", "two_basin"};
  return kinds;
}

inline void check_kind(std::string_view kind) {
  const auto& k = known_kinds();
  if (std::find(k.begin(), k.end(), kind) == k.end())
    throw UnknownKind("unknown game kind '" + std::string(kind) + "'");
}

/// Size and model overrides; unset fields take the per-kind defaults.
struct InstanceOptions {
  std::optional<Index> followers;
  /// NFG actions per follower, SSG targets per defender.
  std::optional<Index> actions;
  /// SSG |T|.
  std::optional<Index> targets;
  double budget = 1.0;
  double risk_lambda = 1.0;
  double omega = 5.0;
  double risk_aversion = 0.01;
  double value_preference = 0.0;
  /// Permits NFG joint action spaces above 10⁴ profiles.
  bool allow_large = false;

  friend bool operator==(const InstanceOptions&, const InstanceOptions&) = default;
};

/// Reduced sizes used by tests and CI: NFG n=m=3, SSG |T|=10 n=2 m=5,
/// cyber n=3.
inline InstanceOptions desk_options(std::string_view kind) {
  check_kind(kind);
  InstanceOptions o;
  if (kind == "nfg") {
    o.followers = 3;
    o.actions = 3;
  } else if (kind == "ssg") {
    o.followers = 2;
    o.actions = 5;
    o.targets = 10;
  } else if (kind == "cyber") {
    o.followers = 3;
  }
  return o;
}

using DomainData = std::variant<std::monostate, std::shared_ptr<const NfgInstance>,
                                std::shared_ptr<const SsgInstance>,
                                std::shared_ptr<const CyberInstance>>;

/// A generated instance: its sampled data and the game built on it.
struct DomainInstance {
  std::string kind;
  std::uint64_t seed = 0;
  DomainData data;
  GameInstance game;
};

inline NfgInstance sample_nfg(const InstanceOptions& o, Rng& rng) {
  const Index n = o.followers.value_or(3), m = o.actions.value_or(3);
  if (n < 1 || m < 1) throw InvalidArgument("normal-form sizes must be positive");
  NfgInstance g;
  g.actions.assign(static_cast<std::size_t>(n), m);
  double profiles = 1.0;
  for (Index k = 0; k < n; ++k) profiles *= static_cast<double>(m);
  if (profiles > 1e4 && !o.allow_large)
    throw InvalidArgument("normal-form game has " + std::to_string(profiles) +
                          " joint profiles, above the 10^4 cap; set allow_large to proceed");
  for (Index i = 0; i < n; ++i) {
    VectorXd u(g.num_profiles());
    for (Index p = 0; p < u.size(); ++p) u[p] = rng.uniform(0.0, 10.0);
    g.payoffs.push_back(std::move(u));
  }
  g.risk_lambda = o.risk_lambda;
  g.budget = o.budget;
  return g;
}

inline SsgInstance sample_ssg(const InstanceOptions& o, Rng& rng) {
  const Index n = o.followers.value_or(5), T = o.targets.value_or(100),
              m = o.actions.value_or(50);
  if (n < 1 || T < 1 || m < 1 || m > T)
    throw InvalidArgument("security game sizes need 1 <= m <= |T| and n >= 1");
  SsgInstance g;
  g.num_targets = T;
  g.omega = o.omega;
  g.budget = o.budget;
  g.effort_budgets.resize(n);
  for (Index i = 0; i < n; ++i) {
    // partial Fisher-Yates draw of m distinct targets
    std::vector<Index> pool(static_cast<std::size_t>(T));
    for (Index t = 0; t < T; ++t) pool[static_cast<std::size_t>(t)] = t;
    for (Index k = 0; k < m; ++k) {
      const auto j = static_cast<std::size_t>(k) + rng.below(static_cast<std::uint64_t>(T - k));
      std::swap(pool[static_cast<std::size_t>(k)], pool[j]);
    }
    pool.resize(static_cast<std::size_t>(m));
    std::sort(pool.begin(), pool.end());
    VectorXd pen(m);
    for (Index k = 0; k < m; ++k) pen[k] = rng.uniform(-10.0, 0.0);
    g.target_sets.push_back(std::move(pool));
    g.defender_penalties.push_back(std::move(pen));
    // at most half the set can be fully covered, so the effort polytope
    // keeps an interior
    g.effort_budgets[i] = std::min(10.0, static_cast<double>(m) / 2.0);
  }
  g.leader_penalties.resize(T);
  for (Index t = 0; t < T; ++t) g.leader_penalties[t] = rng.uniform(-10.0, 0.0);
  g.attractiveness.resize(T);
  for (Index t = 0; t < T; ++t) g.attractiveness[t] = rng.normal();
  return g;
}

inline CyberInstance sample_cyber(const InstanceOptions& o, Rng& rng) {
  const Index n = o.followers.value_or(10);
  if (n < 1) throw InvalidArgument("cyber game needs at least one agent");
  CyberInstance g;
  g.costs.resize(n);
  g.losses.resize(n);
  g.weights.resize(n, n);
  for (Index i = 0; i < n; ++i) g.costs[i] = rng.uniform(5.0, 10.0);
  for (Index i = 0; i < n; ++i) g.losses[i] = rng.uniform(50.0, 100.0);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) g.weights(i, j) = i == j ? rng.uniform(1.0, 2.0) : rng.uniform(0.0, 1.0);
  g.risk_aversion = o.risk_aversion;
  g.value_preference = o.value_preference;
  return g;
}

/// Builds the game for already sampled (or deserialized) data.
inline GameInstance make_game(const std::string& kind, const DomainData& data) {
  check_kind(kind);
  if (kind == "quadratic") return quadratic_pair();
  if (kind == "two_basin") return two_basin();
  if (kind == "nfg") {
    if (auto p = std::get_if<std::shared_ptr<const NfgInstance>>(&data)) return make_nfg_game(*p);
  } else if (kind == "ssg") {
    if (auto p = std::get_if<std::shared_ptr<const SsgInstance>>(&data)) return make_ssg_game(*p);
  } else if (kind == "cyber") {
    if (auto p = std::get_if<std::shared_ptr<const CyberInstance>>(&data))
      return make_cyber_game(*p);
  }
  throw InvalidArgument("instance data does not match kind '" + kind + "'");
}

/// Deterministic instance of `kind` drawn from the per-domain distributions
/// with the given seed (≥ 1).
inline DomainInstance generate_instance(const std::string& kind, const InstanceOptions& opts,
                                        std::uint64_t seed) {
  check_kind(kind);
  if (seed < 1) throw InvalidArgument("instance seeds start at 1");
  DomainInstance out;
  out.kind = kind;
  out.seed = seed;
  Rng rng(seed);
  if (kind == "nfg")
    out.data = std::make_shared<const NfgInstance>(sample_nfg(opts, rng));
  else if (kind == "ssg")
    out.data = std::make_shared<const SsgInstance>(sample_ssg(opts, rng));
  else if (kind == "cyber")
    out.data = std::make_shared<const CyberInstance>(sample_cyber(opts, rng));
  out.game = make_game(kind, out.data);
  return out;
}

}  // namespace stackgrad::games
