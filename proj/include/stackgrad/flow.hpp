#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stackgrad/equilibrium.hpp"
#include "stackgrad/errors.hpp"
#include "stackgrad/kkt.hpp"
#include "stackgrad/model.hpp"
#include "stackgrad/random.hpp"
#include "stackgrad/text.hpp"

namespace stackgrad {

// ---------------------------------------------------------------------------
// Pure equilibria of two-player identical-interest matrix games

/// (row, col), zero based. Rows belong to the row follower.
using Cell = std::pair<Index, Index>;

/// Cells whose entry is maximal in its column (the row player cannot gain)
/// and maximal in its row (neither can the column player). Row-major order.
inline std::vector<Cell> enumerate_pure_equilibria(const MatrixXd& payoff) {
  if (payoff.rows() != payoff.cols() || payoff.rows() == 0)
    throw InvalidArgument("enumerate_pure_equilibria: need a nonempty square payoff matrix");
  const VectorXd col_max = payoff.colwise().maxCoeff().transpose();
  const VectorXd row_max = payoff.rowwise().maxCoeff();
  std::vector<Cell> out;
  for (Index r = 0; r < payoff.rows(); ++r)
    for (Index c = 0; c < payoff.cols(); ++c)
      if (payoff(r, c) >= col_max[c] && payoff(r, c) >= row_max[r]) out.emplace_back(r, c);
  return out;
}

struct SelectionRule {
  enum class Kind { kUniform, kOptimistic, kPessimistic, kCustom };
  Kind kind = Kind::kUniform;
  /// Probabilities over the enumerated equilibria, for kCustom only.
  VectorXd weights;

  static SelectionRule uniform() { return {Kind::kUniform, {}}; }
  static SelectionRule optimistic() { return {Kind::kOptimistic, {}}; }
  static SelectionRule pessimistic() { return {Kind::kPessimistic, {}}; }
  static SelectionRule custom(VectorXd w) {
    if (w.size() == 0 || (w.array() < 0.0).any() || !w.allFinite() ||
        std::abs(w.sum() - 1.0) > 1e-12)
      throw InvalidArgument("custom selection weights must be a probability vector");
    return {Kind::kCustom, std::move(w)};
  }
};

inline std::string to_string(SelectionRule::Kind k) {
  switch (k) {
    case SelectionRule::Kind::kUniform: return "uniform";
    case SelectionRule::Kind::kOptimistic: return "optimistic";
    case SelectionRule::Kind::kPessimistic: return "pessimistic";
    case SelectionRule::Kind::kCustom: return "custom";
  }
  return "?";
}

/// Index of the equilibrium an optimistic or pessimistic follower pair
/// picks; ties go to the lowest index.
inline std::size_t selected_equilibrium(const MatrixXd& leader, const std::vector<Cell>& eqs,
                                        SelectionRule::Kind kind) {
  if (eqs.empty()) throw EmptyEquilibriumSet("no equilibria to select from");
  if (kind != SelectionRule::Kind::kOptimistic && kind != SelectionRule::Kind::kPessimistic)
    throw InvalidArgument("selected_equilibrium: only optimistic and pessimistic pick one cell");
  const double sign = kind == SelectionRule::Kind::kOptimistic ? 1.0 : -1.0;
  std::size_t best = 0;
  for (std::size_t k = 1; k < eqs.size(); ++k)
    if (sign * leader(eqs[k].first, eqs[k].second) >
        sign * leader(eqs[best].first, eqs[best].second))
      best = k;
  return best;
}

inline double expected_leader_payoff(const MatrixXd& leader, const std::vector<Cell>& eqs,
                                     const SelectionRule& rule) {
  if (eqs.empty()) throw EmptyEquilibriumSet("expected_leader_payoff: empty equilibrium set");
  for (const auto& [r, c] : eqs)
    if (r < 0 || c < 0 || r >= leader.rows() || c >= leader.cols())
      throw InvalidArgument("expected_leader_payoff: cell outside the leader matrix");
  switch (rule.kind) {
    case SelectionRule::Kind::kUniform: {
      double s = 0.0;
      for (const auto& [r, c] : eqs) s += leader(r, c);
      return s / static_cast<double>(eqs.size());
    }
    case SelectionRule::Kind::kOptimistic:
    case SelectionRule::Kind::kPessimistic: {
      const Cell& e = eqs[selected_equilibrium(leader, eqs, rule.kind)];
      return leader(e.first, e.second);
    }
    case SelectionRule::Kind::kCustom: {
      if (rule.weights.size() != static_cast<Index>(eqs.size()))
        throw DimensionMismatch("custom selection weights do not match the equilibrium count");
      double s = 0.0;
      for (std::size_t k = 0; k < eqs.size(); ++k)
        s += rule.weights[static_cast<Index>(k)] * leader(eqs[k].first, eqs[k].second);
      return s;
    }
  }
  return kNaN;
}

// ---------------------------------------------------------------------------
// The three-strategy separation example

/// Follower payoffs for leader strategies 1..3 (rows: row follower).
inline std::array<MatrixXd, 3> separation_follower_payoffs() {
  std::array<MatrixXd, 3> m;
  for (auto& a : m) a = MatrixXd::Zero(3, 3);
  for (Index k = 0; k < 3; ++k) {
    m[0](k, k) = 1.0;
    m[1](k, (k + 1) % 3) = 1.0;
    m[2](k, (k + 2) % 3) = 1.0;
  }
  return m;
}

inline MatrixXd separation_leader_payoffs(double C, double eps) {
  MatrixXd L(3, 3);
  L << C, 0.0, -eps,
       C - eps, 0.0, 0.0,
       0.0, C - eps, -C;
  return L;
}

struct SeparationTable {
  double C = 0.0, eps = 0.0;
  /// values(strategy, rule), rule columns in `rules` order.
  Eigen::Matrix3d values;
  /// Best strategy per rule, zero based, ties to the lowest index.
  std::array<Index, 3> argmax{};
  static constexpr std::array<SelectionRule::Kind, 3> rules{
      SelectionRule::Kind::kUniform, SelectionRule::Kind::kOptimistic,
      SelectionRule::Kind::kPessimistic};

  /// Uniform picks strategy 3, optimistic strategy 1, pessimistic strategy 2.
  bool matches_expected_pattern() const {
    return argmax[0] == 2 && argmax[1] == 0 && argmax[2] == 1;
  }
};

inline SeparationTable separation_table(double C, double eps) {
  if (!(eps > 0.0) || !(C > 3.0 * eps) || !std::isfinite(C))
    throw InvalidArgument("separation_table needs eps > 0 and C > 3*eps");
  SeparationTable t;
  t.C = C;
  t.eps = eps;
  const auto follower = separation_follower_payoffs();
  const MatrixXd L = separation_leader_payoffs(C, eps);
  for (Index s = 0; s < 3; ++s) {
    const auto eqs = enumerate_pure_equilibria(follower[static_cast<std::size_t>(s)]);
    for (std::size_t r = 0; r < 3; ++r)
      t.values(s, static_cast<Index>(r)) =
          expected_leader_payoff(L, eqs, SelectionRule{SeparationTable::rules[r], {}});
  }
  for (Index r = 0; r < 3; ++r) {
    Index best = 0;
    for (Index s = 1; s < 3; ++s)
      if (t.values(s, r) > t.values(best, r)) best = s;
    t.argmax[static_cast<std::size_t>(r)] = best;
  }
  return t;
}

inline std::string format_separation_table(const SeparationTable& t) {
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.insert(0, w - s.size(), ' ');
    return s;
  };
  std::string out = "C = " + format_double(t.C) + ", eps = " + format_double(t.eps) + "\n";
  out += pad("strategy", 8);
  for (auto k : SeparationTable::rules) out += pad(to_string(k), 13);
  out += '\n';
  for (Index s = 0; s < 3; ++s) {
    out += pad(std::to_string(s + 1), 8);
    for (Index r = 0; r < 3; ++r) out += pad(format_double_short(t.values(s, r)), 13);
    out += '\n';
  }
  out += pad("argmax", 8);
  for (auto a : t.argmax) out += pad(std::to_string(a + 1), 13);
  out += '\n';
  return out;
}

inline std::string separation_csv(const SeparationTable& t) {
  std::string out = "strategy";
  for (auto k : SeparationTable::rules) out += "," + to_string(k);
  out += '\n';
  for (Index s = 0; s < 3; ++s) {
    out += std::to_string(s + 1);
    for (Index r = 0; r < 3; ++r) out += "," + format_double_short(t.values(s, r));
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Monte-Carlo check of the sampled-equilibrium gradient

struct FlowCheckConfig {
  std::size_t n_samples = 2000;
  double h = 1e-4;
  std::uint64_t seed = 1;
  /// Samples below this count are reported, not judged.
  std::size_t min_samples = 1000;
  double z_threshold = 3.0;
  double ridge = 1e-8;
  OracleConfig oracle = OracleConfig::precise();
};

struct FlowCheckReport {
  enum class Verdict { kPass, kFail, kInsufficientSamples, kBranchJump };

  std::size_t n_samples = 0;
  /// Mean and standard error of f_π + f_x·dx*/dπ over the samples.
  VectorXd gradient_mean;
  VectorXd gradient_stderr;
  /// Central difference of the sample mean of f, same seeds at π ± h.
  VectorXd fd_estimate;
  VectorXd z;
  double max_abs_z = 0.0;
  /// Seeds whose perturbed solves left the base basin.
  std::size_t branch_jumps = 0;
  std::size_t nonconverged = 0;
  Verdict verdict = Verdict::kFail;

  bool passed() const { return verdict == Verdict::kPass; }
};

inline std::string to_string(FlowCheckReport::Verdict v) {
  switch (v) {
    case FlowCheckReport::Verdict::kPass: return "pass";
    case FlowCheckReport::Verdict::kFail: return "fail";
    case FlowCheckReport::Verdict::kInsufficientSamples: return "insufficient_samples";
    case FlowCheckReport::Verdict::kBranchJump: return "branch_jump";
  }
  return "?";
}

/// Per-seed pieces of the check; aggregation over seeds is a plain sum.
struct FlowSample {
  VectorXd gradient;
  VectorXd fd;
  bool jumped = false;
  bool converged = true;
};

inline FlowSample flow_sample(const GameInstance& game, const VectorXd& pi, std::uint64_t seed,
                              const FlowCheckConfig& cfg) {
  const LeaderObjective& leader = *game.leader.objective;
  FlowSample s;
  const EquilibriumPoint eq = sample_equilibrium(game, pi, seed, cfg.oracle);
  s.converged = eq.converged();
  const auto jac = solve_equilibrium_jacobian(assemble_kkt(game, eq, pi), cfg.ridge);
  s.gradient = leader.grad_pi(eq.x, pi) + jac.dx_dpi.transpose() * leader.grad_x(eq.x, pi);

  s.fd.resize(pi.size());
  for (Index k = 0; k < pi.size(); ++k) {
    VectorXd plus = pi, minus = pi;
    plus[k] += cfg.h;
    minus[k] -= cfg.h;
    const EquilibriumPoint ep = sample_equilibrium(game, plus, seed, cfg.oracle);
    const EquilibriumPoint em = sample_equilibrium(game, minus, seed, cfg.oracle);
    s.converged = s.converged && ep.converged() && em.converged();
    const double jump = std::max((ep.x.values() - eq.x.values()).lpNorm<Eigen::Infinity>(),
                                 (em.x.values() - eq.x.values()).lpNorm<Eigen::Infinity>());
    // the response Jacobian is O(1) here, so 10·h is far above a smooth move
    if (jump > 10.0 * cfg.h + 1e-6) s.jumped = true;
    s.fd[k] = (leader.value(ep.x, plus) - leader.value(em.x, minus)) / (2.0 * cfg.h);
  }
  return s;
}

/// Compares the mean sampled gradient against the finite difference of the
/// Monte-Carlo expectation with common random numbers.
///
/// z uses the standard error of the sampled gradient, floored at 1e-6
/// relative so that a single-atom distribution reduces to an FD agreement
/// check. Any seed that changes basin between π − h and π + h voids the run.
inline FlowCheckReport unbiasedness_check(const GameInstance& game, const VectorXd& pi,
                                          const FlowCheckConfig& cfg = FlowCheckConfig{}) {
  game.check_param(pi);
  if (!(cfg.h > 0.0)) throw InvalidArgument("unbiasedness_check: h must be positive");
  if (cfg.n_samples < 2) throw InvalidArgument("unbiasedness_check: need at least two samples");
  const Index d = pi.size();
  FlowCheckReport rep;
  rep.n_samples = cfg.n_samples;
  VectorXd sum = VectorXd::Zero(d), sum_sq = VectorXd::Zero(d), fd = VectorXd::Zero(d);
  for (std::size_t k = 0; k < cfg.n_samples; ++k) {
    const FlowSample s = flow_sample(game, pi, mix_seed(cfg.seed, k), cfg);
    sum += s.gradient;
    sum_sq += s.gradient.cwiseAbs2();
    fd += s.fd;
    rep.branch_jumps += s.jumped ? 1 : 0;
    rep.nonconverged += s.converged ? 0 : 1;
  }
  const double n = static_cast<double>(cfg.n_samples);
  rep.gradient_mean = sum / n;
  const VectorXd var =
      ((sum_sq - n * rep.gradient_mean.cwiseAbs2()) / (n - 1.0)).cwiseMax(0.0);
  rep.gradient_stderr = (var / n).cwiseSqrt();
  rep.fd_estimate = fd / n;
  const VectorXd scale =
      rep.gradient_stderr.cwiseMax(1e-6 * rep.fd_estimate.cwiseAbs().cwiseMax(1.0));
  rep.z = (rep.gradient_mean - rep.fd_estimate).cwiseQuotient(scale);
  rep.max_abs_z = d > 0 ? rep.z.cwiseAbs().maxCoeff() : 0.0;

  using V = FlowCheckReport::Verdict;
  if (rep.branch_jumps > 0)
    rep.verdict = V::kBranchJump;
  else if (cfg.n_samples < cfg.min_samples)
    rep.verdict = V::kInsufficientSamples;
  else
    rep.verdict = rep.max_abs_z <= cfg.z_threshold ? V::kPass : V::kFail;
  return rep;
}

inline std::string flow_report_csv(const FlowCheckReport& r) {
  std::string out = "coordinate,gradient_mean,gradient_stderr,fd_estimate,z\n";
  for (Index k = 0; k < r.z.size(); ++k)
    out += std::to_string(k) + "," + format_double(r.gradient_mean[k]) + "," +
           format_double(r.gradient_stderr[k]) + "," + format_double(r.fd_estimate[k]) + "," +
           format_double(r.z[k]) + "\n";
  return out;
}

inline std::string format_flow_report(const FlowCheckReport& r) {
  std::string out = "samples " + std::to_string(r.n_samples) + ", branch jumps " +
                    std::to_string(r.branch_jumps) + ", nonconverged " +
                    std::to_string(r.nonconverged) + "\n";
  for (Index k = 0; k < r.z.size(); ++k)
    out += "  pi[" + std::to_string(k) + "]  mean " + format_double(r.gradient_mean[k]) +
           "  se " + format_double(r.gradient_stderr[k]) + "  fd " +
           format_double(r.fd_estimate[k]) + "  z " + format_double(r.z[k]) + "\n";
  out += "max |z| " + format_double(r.max_abs_z) + ": " + to_string(r.verdict) + "\n";
  return out;
}

}  // namespace stackgrad
