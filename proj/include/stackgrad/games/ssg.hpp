#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "stackgrad/errors.hpp"
#include "stackgrad/model.hpp"

namespace stackgrad::games {

/// Security game with several defenders covering overlapping target sets
/// against a quantal-response attacker.
///
/// Defender i covers targets target_sets[i] (sorted, distinct) with effort
/// x_{i,k} ∈ [0,1] on its k-th target and Σₖ x_{i,k} ≤ effort_budgets[i].
/// The planner's reimbursements π use the same (i, k) layout.
struct SsgInstance {
  Index num_targets = 0;
  std::vector<std::vector<Index>> target_sets;
  /// U_{i,t} aligned with target_sets[i].
  std::vector<VectorXd> defender_penalties;
  /// U_t over all targets.
  VectorXd leader_penalties;
  VectorXd attractiveness;
  VectorXd effort_budgets;
  double omega = 5.0;
  double budget = 1.0;

  Index num_followers() const { return static_cast<Index>(target_sets.size()); }
  Index set_size(Index i) const {
    return static_cast<Index>(target_sets[static_cast<std::size_t>(i)].size());
  }
  Index offset(Index i) const {
    Index o = 0;
    for (Index k = 0; k < i; ++k) o += set_size(k);
    return o;
  }
  Index param_dim() const { return offset(num_followers()); }

  void validate() const {
    if (num_targets < 1) throw InvalidArgument("security game needs targets");
    const auto n = target_sets.size();
    require_dims(defender_penalties.size() == n && static_cast<std::size_t>(effort_budgets.size()) == n,
                 "one penalty vector and budget per defender");
    require_dims(leader_penalties.size() == num_targets && attractiveness.size() == num_targets,
                 "per-target arrays must have one entry per target");
    for (std::size_t i = 0; i < n; ++i) {
      const auto& set = target_sets[i];
      require_dims(defender_penalties[i].size() == static_cast<Index>(set.size()),
                   "defender penalties must align with its target set");
      for (std::size_t k = 0; k < set.size(); ++k) {
        if (set[k] < 0 || set[k] >= num_targets)
          throw InvalidArgument("target index out of range");
        if (k > 0 && set[k] <= set[k - 1])
          throw InvalidArgument("target sets must be sorted and distinct");
      }
    }
    if (!(omega >= 0.0)) throw InvalidArgument("attack scaling must be nonnegative");
  }
};

/// Coverage y and attack distribution p for the given efforts.
struct SsgCoverage {
  /// u_t = ∏ᵢ (1 − x_{i,t}) = 1 − y_t.
  VectorXd unprotected;
  VectorXd coverage;
  VectorXd attack;
};

/// y_t = 1 − ∏ᵢ(1 − x_{i,t}) and p = softmax(−ω·y + a), computed with the
/// maximum subtracted.
inline SsgCoverage ssg_coverage_and_attack(const SsgInstance& g, const JointStrategy& x) {
  require_dims(x.num_blocks() == g.num_followers(), "coverage: wrong number of defenders");
  SsgCoverage c;
  c.unprotected = VectorXd::Ones(g.num_targets);
  for (Index i = 0; i < g.num_followers(); ++i) {
    const auto& set = g.target_sets[static_cast<std::size_t>(i)];
    require_dims(x.block_size(i) == static_cast<Index>(set.size()),
                 "coverage: effort vector does not match target set");
    for (std::size_t k = 0; k < set.size(); ++k)
      c.unprotected[set[k]] *= 1.0 - x.block(i)[static_cast<Index>(k)];
  }
  c.coverage = VectorXd::Ones(g.num_targets) - c.unprotected;
  const VectorXd score = -g.omega * c.coverage + g.attractiveness;
  const VectorXd e = (score.array() - score.maxCoeff()).exp();
  c.attack = e / e.sum();
  return c;
}

namespace detail {

/// Φ(w) = Σₜ wₜ uₜ pₜ as a function of the unprotected vector u, with its
/// gradient pₜ rₜ and Hessian in u.
struct SsgPotential {
  double value = 0.0;
  VectorXd r;
  VectorXd grad;

  SsgPotential(const VectorXd& w, const SsgCoverage& c, double omega) {
    const VectorXd& u = c.unprotected;
    const VectorXd& p = c.attack;
    value = (w.array() * u.array() * p.array()).sum();
    r = w.array() + omega * (w.array() * u.array() - value);
    grad = p.cwiseProduct(r);
  }

  double hessian(const VectorXd& w, const SsgCoverage& c, double omega, Index t,
                 Index s) const {
    const VectorXd& p = c.attack;
    const double diag = t == s ? r[t] + w[t] : 0.0;
    return omega * p[t] * (diag - p[s] * (r[t] + r[s]));
  }
};

/// ∏ (1 − x_{j,t}) over defenders j covering t, skipping defenders skip1
/// and skip2.
inline double unprotected_without(const SsgInstance& g, const JointStrategy& x, Index t,
                                  Index skip1, Index skip2 = -1) {
  double prod = 1.0;
  for (Index j = 0; j < g.num_followers(); ++j) {
    if (j == skip1 || j == skip2) continue;
    const auto& set = g.target_sets[static_cast<std::size_t>(j)];
    const auto it = std::lower_bound(set.begin(), set.end(), t);
    if (it != set.end() && *it == t) prod *= 1.0 - x.block(j)[it - set.begin()];
  }
  return prod;
}

/// ∂Φ/∂x for a weight vector w: −Φ_u[t]·u_t^{(−i)} at every (i, k).
inline VectorXd potential_grad_x(const SsgInstance& g, const JointStrategy& x,
                                 const SsgPotential& phi) {
  VectorXd out(x.size());
  for (Index i = 0; i < g.num_followers(); ++i) {
    const auto& set = g.target_sets[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < set.size(); ++k)
      out[x.offset(i) + static_cast<Index>(k)] =
          -phi.grad[set[k]] * unprotected_without(g, x, set[k], i);
  }
  return out;
}

}  // namespace detail

/// Defender i's loss −Σ_{t∈Tᵢ}(U_{i,t} + π_{i,t}) uₜ pₜ.
class SsgFollower final : public FollowerObjective {
 public:
  SsgFollower(std::shared_ptr<const SsgInstance> game, Index index)
      : g_(std::move(game)), i_(index) {}

  double value(const JointStrategy& x, const VectorXd& pi) const override {
    const SsgCoverage c = ssg_coverage_and_attack(*g_, x);
    return -detail::SsgPotential(weights(pi), c, g_->omega).value;
  }

  VectorXd gradient(const JointStrategy& x, const VectorXd& pi) const override {
    const SsgCoverage c = ssg_coverage_and_attack(*g_, x);
    const detail::SsgPotential phi(weights(pi), c, g_->omega);
    const auto& set = targets(i_);
    VectorXd grad(static_cast<Index>(set.size()));
    for (std::size_t k = 0; k < set.size(); ++k)
      grad[static_cast<Index>(k)] =
          phi.grad[set[k]] * detail::unprotected_without(*g_, x, set[k], i_);
    return grad;
  }

  MatrixXd hessian_block(Index j, const JointStrategy& x, const VectorXd& pi) const override {
    const SsgCoverage c = ssg_coverage_and_attack(*g_, x);
    const VectorXd w = weights(pi);
    const detail::SsgPotential phi(w, c, g_->omega);
    const auto& si = targets(i_);
    const auto& sj = targets(j);
    MatrixXd h(static_cast<Index>(si.size()), static_cast<Index>(sj.size()));
    for (std::size_t k = 0; k < si.size(); ++k) {
      const Index t = si[k];
      const double ut = detail::unprotected_without(*g_, x, t, i_);
      for (std::size_t l = 0; l < sj.size(); ++l) {
        const Index s = sj[l];
        double v = phi.hessian(w, c, g_->omega, t, s) * ut *
                   detail::unprotected_without(*g_, x, s, j);
        if (t == s && j != i_) v += phi.grad[t] * detail::unprotected_without(*g_, x, t, i_, j);
        h(static_cast<Index>(k), static_cast<Index>(l)) = -v;
      }
    }
    return h;
  }

  MatrixXd param_hessian(const JointStrategy& x, const VectorXd& pi) const override {
    const SsgCoverage c = ssg_coverage_and_attack(*g_, x);
    const VectorXd& u = c.unprotected;
    const VectorXd& p = c.attack;
    const double omega = g_->omega;
    const auto& set = targets(i_);
    const Index off = g_->offset(i_);
    MatrixXd h = MatrixXd::Zero(static_cast<Index>(set.size()), pi.size());
    for (std::size_t k = 0; k < set.size(); ++k) {
      const Index t = set[k];
      const double ut = detail::unprotected_without(*g_, x, t, i_);
      for (std::size_t l = 0; l < set.size(); ++l) {
        const Index s = set[l];
        const double d = (t == s ? 1.0 + omega * u[t] : 0.0) - omega * u[s] * p[s];
        h(static_cast<Index>(k), off + static_cast<Index>(l)) = ut * p[t] * d;
      }
    }
    return h;
  }

 private:
  const std::vector<Index>& targets(Index j) const {
    return g_->target_sets[static_cast<std::size_t>(j)];
  }

  VectorXd weights(const VectorXd& pi) const {
    VectorXd w = VectorXd::Zero(g_->num_targets);
    const auto& set = targets(i_);
    const Index off = g_->offset(i_);
    for (std::size_t k = 0; k < set.size(); ++k)
      w[set[k]] = g_->defender_penalties[static_cast<std::size_t>(i_)][static_cast<Index>(k)] +
                  pi[off + static_cast<Index>(k)];
    return w;
  }

  std::shared_ptr<const SsgInstance> g_;
  Index i_;
};

/// Planner payoff Σₜ Uₜ uₜ pₜ with the reimbursement budget
/// Σ_{i,t} π_{i,t} uₜ pₜ − B ≤ 0.
class SsgLeader final : public LeaderObjective {
 public:
  explicit SsgLeader(std::shared_ptr<const SsgInstance> game) : g_(std::move(game)) {}

  Index num_constraints() const override { return 1; }

  double value(const JointStrategy& x, const VectorXd&) const override {
    return detail::SsgPotential(g_->leader_penalties, ssg_coverage_and_attack(*g_, x),
                                g_->omega)
        .value;
  }
  VectorXd grad_pi(const JointStrategy&, const VectorXd& pi) const override {
    return VectorXd::Zero(pi.size());
  }
  VectorXd grad_x(const JointStrategy& x, const VectorXd&) const override {
    const detail::SsgPotential phi(g_->leader_penalties, ssg_coverage_and_attack(*g_, x),
                                   g_->omega);
    return detail::potential_grad_x(*g_, x, phi);
  }

  VectorXd constraints(const JointStrategy& x, const VectorXd& pi) const override {
    const detail::SsgPotential phi(paid(pi), ssg_coverage_and_attack(*g_, x), g_->omega);
    return VectorXd::Constant(1, phi.value - g_->budget);
  }
  MatrixXd constraints_jac_pi(const JointStrategy& x, const VectorXd& pi) const override {
    const SsgCoverage c = ssg_coverage_and_attack(*g_, x);
    MatrixXd jac(1, pi.size());
    for (Index i = 0; i < g_->num_followers(); ++i) {
      const auto& set = g_->target_sets[static_cast<std::size_t>(i)];
      for (std::size_t k = 0; k < set.size(); ++k)
        jac(0, g_->offset(i) + static_cast<Index>(k)) =
            c.unprotected[set[k]] * c.attack[set[k]];
    }
    return jac;
  }
  MatrixXd constraints_jac_x(const JointStrategy& x, const VectorXd& pi) const override {
    const detail::SsgPotential phi(paid(pi), ssg_coverage_and_attack(*g_, x), g_->omega);
    return detail::potential_grad_x(*g_, x, phi).transpose();
  }

 private:
  /// Total reimbursement rate per target.
  VectorXd paid(const VectorXd& pi) const {
    VectorXd w = VectorXd::Zero(g_->num_targets);
    for (Index i = 0; i < g_->num_followers(); ++i) {
      const auto& set = g_->target_sets[static_cast<std::size_t>(i)];
      for (std::size_t k = 0; k < set.size(); ++k)
        w[set[k]] += pi[g_->offset(i) + static_cast<Index>(k)];
    }
    return w;
  }

  std::shared_ptr<const SsgInstance> g_;
};

inline GameInstance make_ssg_game(std::shared_ptr<const SsgInstance> inst) {
  inst->validate();
  GameInstance game;
  game.kind = "ssg";
  for (Index i = 0; i < inst->num_followers(); ++i) {
    const Index m = inst->set_size(i);
    game.followers.push_back(
        FollowerSpec{i,
                     StrategySpace::capped_box(VectorXd::Zero(m), VectorXd::Ones(m),
                                               inst->effort_budgets[i]),
                     std::make_shared<SsgFollower>(inst, i)});
  }
  const Index d = inst->param_dim();
  game.leader = LeaderProblem{std::make_shared<SsgLeader>(inst), d, VectorXd::Zero(d),
                              VectorXd::Constant(d, kInf)};
  return game;
}

}  // namespace stackgrad::games
