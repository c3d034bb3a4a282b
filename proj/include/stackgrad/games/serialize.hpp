#pragma once

#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "stackgrad/errors.hpp"
#include "stackgrad/games/generate.hpp"
#include "stackgrad/text.hpp"

namespace stackgrad::games {

/// Text form of a DomainInstance: one "key value..." record per line, all
/// arrays row-major. Reading it back rebuilds the same instance without
/// re-sampling.
///
///   stackgrad-instance 1
///   kind nfg
///   seed 7
///   actions 3 3 3
///   payoff.0 4.17 0.31 ...
inline std::string serialize_instance(const DomainInstance& inst) {
  std::ostringstream out;
  auto row = [&out](const std::string& key, const auto& values) {
    out << key;
    for (Index k = 0; k < static_cast<Index>(values.size()); ++k)
      out << ' ' << format_double(static_cast<double>(values[k]));
    out << '\n';
  };
  auto scalar = [&out](const std::string& key, double v) {
    out << key << ' ' << format_double(v) << '\n';
  };
  out << "stackgrad-instance 1\n";
  out << "kind " << inst.kind << '\n';
  out << "seed " << inst.seed << '\n';
  if (auto p = std::get_if<std::shared_ptr<const NfgInstance>>(&inst.data)) {
    const NfgInstance& g = **p;
    row("actions", g.actions);
    scalar("risk_lambda", g.risk_lambda);
    scalar("budget", g.budget);
    for (std::size_t i = 0; i < g.payoffs.size(); ++i)
      row("payoff." + std::to_string(i), g.payoffs[i]);
  } else if (auto p = std::get_if<std::shared_ptr<const SsgInstance>>(&inst.data)) {
    const SsgInstance& g = **p;
    scalar("targets", static_cast<double>(g.num_targets));
    scalar("defenders", static_cast<double>(g.num_followers()));
    scalar("omega", g.omega);
    scalar("budget", g.budget);
    row("effort_budgets", g.effort_budgets);
    row("leader_penalties", g.leader_penalties);
    row("attractiveness", g.attractiveness);
    for (std::size_t i = 0; i < g.target_sets.size(); ++i) {
      row("target_set." + std::to_string(i), g.target_sets[i]);
      row("penalties." + std::to_string(i), g.defender_penalties[i]);
    }
  } else if (auto p = std::get_if<std::shared_ptr<const CyberInstance>>(&inst.data)) {
    const CyberInstance& g = **p;
    scalar("agents", static_cast<double>(g.num_followers()));
    scalar("risk_aversion", g.risk_aversion);
    scalar("value_preference", g.value_preference);
    row("costs", g.costs);
    row("losses", g.losses);
    const MatrixXd wt = g.weights.transpose();  // column-major storage of Wᵀ is row-major W
    row("weights", VectorXd(Eigen::Map<const VectorXd>(wt.data(), wt.size())));
  }
  return out.str();
}

namespace detail {

class InstanceRecords {
 public:
  explicit InstanceRecords(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto parts = split(trim(line));
      if (parts.empty()) continue;
      const std::string key(parts[0]);
      if (records_.count(key))
        throw InvalidArgument("instance line " + std::to_string(lineno) + ": duplicate key '" +
                              key + "'");
      records_[key] = std::vector<std::string>(parts.begin() + 1, parts.end());
    }
  }

  const std::vector<std::string>& raw(const std::string& key) const {
    const auto it = records_.find(key);
    if (it == records_.end()) throw InvalidArgument("instance: missing record '" + key + "'");
    return it->second;
  }

  std::string word(const std::string& key) const {
    const auto& r = raw(key);
    if (r.size() != 1) throw InvalidArgument("instance: '" + key + "' expects one value");
    return r[0];
  }

  VectorXd vec(const std::string& key) const {
    const auto& r = raw(key);
    VectorXd v(static_cast<Index>(r.size()));
    for (std::size_t k = 0; k < r.size(); ++k)
      if (!parse_double(r[k], v[static_cast<Index>(k)]))
        throw InvalidArgument("instance: bad number '" + r[k] + "' in '" + key + "'");
    return v;
  }

  double num(const std::string& key) const {
    const VectorXd v = vec(key);
    if (v.size() != 1) throw InvalidArgument("instance: '" + key + "' expects one value");
    return v[0];
  }

  std::vector<Index> indices(const std::string& key) const {
    std::vector<Index> out;
    for (double d : vec(key)) {
      if (d < 0 || d != static_cast<double>(static_cast<Index>(d)))
        throw InvalidArgument("instance: '" + key + "' must hold nonnegative integers");
      out.push_back(static_cast<Index>(d));
    }
    return out;
  }

  Index count(const std::string& key) const {
    const auto v = indices(key);
    if (v.size() != 1) throw InvalidArgument("instance: '" + key + "' expects one value");
    return v[0];
  }

 private:
  std::map<std::string, std::vector<std::string>> records_;
};

}  // namespace detail

/// Parses serialize_instance output and rebuilds the game. Throws
/// InvalidArgument on malformed text and UnknownKind on an unknown kind.
inline DomainInstance parse_instance(const std::string& text) {
  const detail::InstanceRecords r(text);
  if (r.word("stackgrad-instance") != "1")
    throw InvalidArgument("instance: unsupported format version");
  DomainInstance inst;
  inst.kind = r.word("kind");
  check_kind(inst.kind);
  std::uint64_t seed = 0;
  if (!parse_integer(r.word("seed"), seed)) throw InvalidArgument("instance: bad seed");
  inst.seed = seed;
  if (inst.kind == "nfg") {
    auto g = std::make_shared<NfgInstance>();
    g->actions = r.indices("actions");
    g->risk_lambda = r.num("risk_lambda");
    g->budget = r.num("budget");
    for (std::size_t i = 0; i < g->actions.size(); ++i)
      g->payoffs.push_back(r.vec("payoff." + std::to_string(i)));
    inst.data = std::shared_ptr<const NfgInstance>(g);
  } else if (inst.kind == "ssg") {
    auto g = std::make_shared<SsgInstance>();
    g->num_targets = r.count("targets");
    const Index n = r.count("defenders");
    g->omega = r.num("omega");
    g->budget = r.num("budget");
    g->effort_budgets = r.vec("effort_budgets");
    g->leader_penalties = r.vec("leader_penalties");
    g->attractiveness = r.vec("attractiveness");
    for (Index i = 0; i < n; ++i) {
      g->target_sets.push_back(r.indices("target_set." + std::to_string(i)));
      g->defender_penalties.push_back(r.vec("penalties." + std::to_string(i)));
    }
    inst.data = std::shared_ptr<const SsgInstance>(g);
  } else if (inst.kind == "cyber") {
    auto g = std::make_shared<CyberInstance>();
    const Index n = r.count("agents");
    g->risk_aversion = r.num("risk_aversion");
    g->value_preference = r.num("value_preference");
    g->costs = r.vec("costs");
    g->losses = r.vec("losses");
    const VectorXd w = r.vec("weights");
    require_dims(w.size() == n * n, "instance: weights must hold agents^2 entries");
    g->weights = Eigen::Map<const MatrixXd>(w.data(), n, n).transpose();
    inst.data = std::shared_ptr<const CyberInstance>(g);
  }
  inst.game = make_game(inst.kind, inst.data);
  return inst;
}

}  // namespace stackgrad::games
