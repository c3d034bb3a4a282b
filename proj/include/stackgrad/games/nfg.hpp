#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "stackgrad/errors.hpp"
#include "stackgrad/model.hpp"

namespace stackgrad::games {

/// Normal-form game with subsidies. Payoff tensors are stored flattened in
/// row-major profile order (last follower's action varies fastest).
struct NfgInstance {
  std::vector<Index> actions;
  std::vector<VectorXd> payoffs;
  /// Risk constant; the entropy term is weighted by 1/risk_lambda and
  /// vanishes when risk_lambda is infinite.
  double risk_lambda = 1.0;
  double budget = 1.0;

  Index num_followers() const { return static_cast<Index>(actions.size()); }
  Index num_profiles() const {
    Index p = 1;
    for (Index m : actions) p *= m;
    return p;
  }
  Index param_dim() const { return num_followers() * num_profiles(); }
  double entropy_weight() const { return std::isinf(risk_lambda) ? 0.0 : 1.0 / risk_lambda; }

  void validate() const {
    if (actions.empty()) throw InvalidArgument("normal-form game needs at least one follower");
    for (Index m : actions)
      if (m < 1) throw InvalidArgument("every follower needs at least one action");
    require_dims(static_cast<Index>(payoffs.size()) == num_followers(),
                 "one payoff tensor per follower");
    for (const auto& u : payoffs)
      require_dims(u.size() == num_profiles(), "payoff tensor size does not match actions");
    if (!(risk_lambda > 0.0)) throw InvalidArgument("risk constant must be positive");
  }
};

namespace detail {

/// Iterates all pure profiles in row-major order.
class ProfileCounter {
 public:
  explicit ProfileCounter(const std::vector<Index>& actions)
      : actions_(actions), a_(actions.size(), 0) {}

  const std::vector<Index>& profile() const { return a_; }
  Index operator[](std::size_t k) const { return a_[k]; }

  void advance() {
    for (std::size_t k = a_.size(); k-- > 0;) {
      if (++a_[k] < actions_[k]) return;
      a_[k] = 0;
    }
  }

 private:
  const std::vector<Index>& actions_;
  std::vector<Index> a_;
};

/// ∏ₖ xₖ[aₖ] over followers k outside {skip1, skip2}.
inline double profile_weight(const JointStrategy& x, const ProfileCounter& a, Index skip1 = -1,
                             Index skip2 = -1) {
  double w = 1.0;
  for (Index k = 0; k < x.num_blocks(); ++k) {
    if (k == skip1 || k == skip2) continue;
    w *= x.block(k)[a[static_cast<std::size_t>(k)]];
  }
  return w;
}

inline constexpr double kEntropyFloor = 1e-12;

/// Contracts a row-major payoff tensor with every xₖ except x_keep, giving
/// the expected payoff of each pure action of follower `keep`. Trailing
/// axes are folded first (they are contiguous), then leading ones.
inline VectorXd contract_except(VectorXd tensor, const std::vector<Index>& actions,
                                const JointStrategy& x, Index keep) {
  const Index n = static_cast<Index>(actions.size());
  Index len = tensor.size();
  for (Index k = n - 1; k > keep; --k) {
    const Index m = actions[static_cast<std::size_t>(k)];
    len /= m;
    VectorXd next = Eigen::Map<const MatrixXd>(tensor.data(), m, len).transpose() * x.block(k);
    tensor = std::move(next);
  }
  for (Index k = 0; k < keep; ++k) {
    const Index m = actions[static_cast<std::size_t>(k)];
    len /= m;
    VectorXd next = Eigen::Map<const MatrixXd>(tensor.data(), len, m) * x.block(k);
    tensor = std::move(next);
  }
  return tensor;
}

}  // namespace detail

/// Multilinear expected payoff Σ_a U[a] ∏ᵢ xᵢ[aᵢ].
inline double nfg_expected_payoff(const VectorXd& tensor, const std::vector<Index>& actions,
                                  const JointStrategy& x) {
  require_dims(x.num_blocks() == static_cast<Index>(actions.size()),
               "expected payoff: wrong number of followers");
  Index profiles = 1;
  for (std::size_t k = 0; k < actions.size(); ++k) {
    require_dims(x.block_size(static_cast<Index>(k)) == actions[k],
                 "expected payoff: strategy length does not match actions");
    profiles *= actions[k];
  }
  require_dims(tensor.size() == profiles, "expected payoff: tensor size");
  detail::ProfileCounter a(actions);
  double total = 0.0;
  for (Index p = 0; p < profiles; ++p, a.advance())
    total += tensor[p] * detail::profile_weight(x, a);
  return total;
}

/// fᵢ = −(Uᵢ + πᵢ)(x) + H(xᵢ)/λ, the negated entropic payoff.
class NfgFollower final : public FollowerObjective {
 public:
  NfgFollower(std::shared_ptr<const NfgInstance> game, Index index)
      : g_(std::move(game)), i_(index) {}

  double value(const JointStrategy& x, const VectorXd& pi) const override {
    const double payoff = action_payoffs(x, pi).dot(x.block(i_));
    double entropy = 0.0;
    if (const double w = g_->entropy_weight(); w > 0.0) {
      for (double v : x.block(i_)) entropy += v * std::log(std::max(v, detail::kEntropyFloor));
      entropy *= w;
    }
    return -payoff + entropy;
  }

  VectorXd gradient(const JointStrategy& x, const VectorXd& pi) const override {
    VectorXd grad = -action_payoffs(x, pi);
    if (const double w = g_->entropy_weight(); w > 0.0)
      for (Index c = 0; c < grad.size(); ++c)
        grad[c] += w * (1.0 + std::log(std::max(x.block(i_)[c], detail::kEntropyFloor)));
    return grad;
  }

  MatrixXd hessian_block(Index j, const JointStrategy& x, const VectorXd& pi) const override {
    const Index mi = x.block_size(i_), mj = x.block_size(j);
    MatrixXd h = MatrixXd::Zero(mi, mj);
    if (j == i_) {
      if (const double w = g_->entropy_weight(); w > 0.0)
        for (Index c = 0; c < mi; ++c)
          h(c, c) = w / std::max(x.block(i_)[c], detail::kEntropyFloor);
      return h;
    }
    const Index P = g_->num_profiles();
    detail::ProfileCounter a(g_->actions);
    for (Index p = 0; p < P; ++p, a.advance())
      h(own(a), a[static_cast<std::size_t>(j)]) -=
          (u()[p] + pi[i_ * P + p]) * detail::profile_weight(x, a, i_, j);
    return h;
  }

  MatrixXd param_hessian(const JointStrategy& x, const VectorXd& pi) const override {
    const Index P = g_->num_profiles();
    MatrixXd h = MatrixXd::Zero(x.block_size(i_), pi.size());
    detail::ProfileCounter a(g_->actions);
    for (Index p = 0; p < P; ++p, a.advance())
      h(own(a), i_ * P + p) = -detail::profile_weight(x, a, i_);
    return h;
  }

 private:
  const VectorXd& u() const { return g_->payoffs[static_cast<std::size_t>(i_)]; }
  VectorXd action_payoffs(const JointStrategy& x, const VectorXd& pi) const {
    const Index P = g_->num_profiles();
    return detail::contract_except(u() + pi.segment(i_ * P, P), g_->actions, x, i_);
  }
  Index own(const detail::ProfileCounter& a) const { return a[static_cast<std::size_t>(i_)]; }

  std::shared_ptr<const NfgInstance> g_;
  Index i_;
};

/// Leader payoff Σᵢ Uᵢ(x) (welfare without subsidies) with the budget
/// constraint Σᵢ πᵢ(x) − B ≤ 0.
class NfgLeader final : public LeaderObjective {
 public:
  explicit NfgLeader(std::shared_ptr<const NfgInstance> game) : g_(std::move(game)) {}

  Index num_constraints() const override { return 1; }

  double value(const JointStrategy& x, const VectorXd&) const override {
    double total = 0.0;
    for (const auto& u : g_->payoffs) total += nfg_expected_payoff(u, g_->actions, x);
    return total;
  }

  VectorXd grad_pi(const JointStrategy&, const VectorXd& pi) const override {
    return VectorXd::Zero(pi.size());
  }

  VectorXd grad_x(const JointStrategy& x, const VectorXd&) const override {
    const Index P = g_->num_profiles(), n = g_->num_followers();
    VectorXd grad = VectorXd::Zero(x.size());
    detail::ProfileCounter a(g_->actions);
    for (Index p = 0; p < P; ++p, a.advance()) {
      double welfare = 0.0;
      for (const auto& u : g_->payoffs) welfare += u[p];
      for (Index k = 0; k < n; ++k)
        grad[x.offset(k) + a[static_cast<std::size_t>(k)]] +=
            welfare * detail::profile_weight(x, a, k);
    }
    return grad;
  }

  VectorXd constraints(const JointStrategy& x, const VectorXd& pi) const override {
    const Index P = g_->num_profiles(), n = g_->num_followers();
    double paid = 0.0;
    detail::ProfileCounter a(g_->actions);
    for (Index p = 0; p < P; ++p, a.advance()) {
      double s = 0.0;
      for (Index i = 0; i < n; ++i) s += pi[i * P + p];
      paid += s * detail::profile_weight(x, a);
    }
    return VectorXd::Constant(1, paid - g_->budget);
  }

  MatrixXd constraints_jac_pi(const JointStrategy& x, const VectorXd& pi) const override {
    const Index P = g_->num_profiles(), n = g_->num_followers();
    MatrixXd jac(1, pi.size());
    detail::ProfileCounter a(g_->actions);
    for (Index p = 0; p < P; ++p, a.advance()) {
      const double w = detail::profile_weight(x, a);
      for (Index i = 0; i < n; ++i) jac(0, i * P + p) = w;
    }
    return jac;
  }

  MatrixXd constraints_jac_x(const JointStrategy& x, const VectorXd& pi) const override {
    const Index P = g_->num_profiles(), n = g_->num_followers();
    MatrixXd jac = MatrixXd::Zero(1, x.size());
    detail::ProfileCounter a(g_->actions);
    for (Index p = 0; p < P; ++p, a.advance()) {
      double s = 0.0;
      for (Index i = 0; i < n; ++i) s += pi[i * P + p];
      for (Index k = 0; k < n; ++k)
        jac(0, x.offset(k) + a[static_cast<std::size_t>(k)]) +=
            s * detail::profile_weight(x, a, k);
    }
    return jac;
  }

 private:
  std::shared_ptr<const NfgInstance> g_;
};

/// Wraps an NFG as a GameInstance: simplex strategy spaces and subsidies
/// π ≥ 0 of dimension n·∏mᵢ.
inline GameInstance make_nfg_game(std::shared_ptr<const NfgInstance> inst) {
  inst->validate();
  GameInstance game;
  game.kind = "nfg";
  for (Index i = 0; i < inst->num_followers(); ++i)
    game.followers.push_back(FollowerSpec{
        i, StrategySpace::simplex(inst->actions[static_cast<std::size_t>(i)]),
        std::make_shared<NfgFollower>(inst, i)});
  const Index d = inst->param_dim();
  game.leader = LeaderProblem{std::make_shared<NfgLeader>(inst), d, VectorXd::Zero(d),
                              VectorXd::Constant(d, kInf)};
  return game;
}

}  // namespace stackgrad::games
