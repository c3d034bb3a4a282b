#pragma once

#include <cmath>
#include <memory>
#include <utility>

#include "stackgrad/errors.hpp"
#include "stackgrad/model.hpp"

namespace stackgrad::games {

/// Cyber insurance: an insurer offers each agent coverage Iᵢ at premium ρᵢ;
/// agents choose protection effort xᵢ ≥ 0. π is interleaved as
/// [I₀, ρ₀, I₁, ρ₁, …].
struct CyberInstance {
  VectorXd costs;
  VectorXd losses;
  MatrixXd weights;
  double risk_aversion = 0.01;
  double value_preference = 0.0;

  Index num_followers() const { return costs.size(); }
  Index param_dim() const { return 2 * num_followers(); }

  void validate() const {
    const Index n = costs.size();
    if (n < 1) throw InvalidArgument("cyber game needs agents");
    require_dims(losses.size() == n && weights.rows() == n && weights.cols() == n,
                 "cyber arrays must agree on the number of agents");
    if (!(risk_aversion >= 0.0)) throw InvalidArgument("risk aversion must be nonnegative");
  }
};

namespace detail {

/// Per-agent attack quantities at one strategy.
struct CyberState {
  double q = 0.0;   // σ(zᵢ)
  double s = 0.0;   // √(q(1 − q))
  double d = 0.0;   // Lᵢ − Iᵢ
  double sign = 1;  // sign of d, +1 at 0 (the insured side of the kink)

  static double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
  }

  CyberState(const CyberInstance& g, const JointStrategy& x, const VectorXd& pi, Index i) {
    const double z = -g.weights.row(i).dot(x.values()) + g.value_preference * g.losses[i];
    q = sigmoid(z);
    s = std::sqrt(q * (1.0 - q));
    d = g.losses[i] - pi[2 * i];
    sign = d < 0.0 ? -1.0 : 1.0;
  }

  double a() const { return std::abs(d); }
  /// ∂φᵢ/∂zᵢ of the payoff φᵢ = −cᵢxᵢ − ρᵢ − d·q − γ|d|·s.
  double dz(double gamma) const { return -d * s * s - gamma * a() * (1.0 - 2.0 * q) * s / 2.0; }
  double dzz(double gamma) const {
    return -d * (1.0 - 2.0 * q) * s * s - gamma * a() * s * (1.0 - 8.0 * q + 8.0 * q * q) / 4.0;
  }
};

}  // namespace detail

/// Agent i's loss cᵢxᵢ + ρᵢ + (Lᵢ − Iᵢ)qᵢ + γ|Lᵢ − Iᵢ|√(qᵢ(1 − qᵢ)), the
/// negated payoff. All derivatives are written in terms of s rather than
/// 1/s, so they stay finite even if q saturates to 0 or 1.
class CyberFollower final : public FollowerObjective {
 public:
  CyberFollower(std::shared_ptr<const CyberInstance> game, Index index)
      : g_(std::move(game)), i_(index) {}

  double value(const JointStrategy& x, const VectorXd& pi) const override {
    const detail::CyberState st(*g_, x, pi, i_);
    return g_->costs[i_] * x.values()[i_] + pi[2 * i_ + 1] + st.d * st.q +
           g_->risk_aversion * st.a() * st.s;
  }

  VectorXd gradient(const JointStrategy& x, const VectorXd& pi) const override {
    const detail::CyberState st(*g_, x, pi, i_);
    return VectorXd::Constant(1, g_->costs[i_] + w(i_) * st.dz(g_->risk_aversion));
  }

  MatrixXd hessian_block(Index j, const JointStrategy& x, const VectorXd& pi) const override {
    const detail::CyberState st(*g_, x, pi, i_);
    return MatrixXd::Constant(1, 1, -w(i_) * w(j) * st.dzz(g_->risk_aversion));
  }

  MatrixXd param_hessian(const JointStrategy& x, const VectorXd& pi) const override {
    const detail::CyberState st(*g_, x, pi, i_);
    MatrixXd h = MatrixXd::Zero(1, pi.size());
    h(0, 2 * i_) =
        w(i_) * (st.s * st.s + g_->risk_aversion * st.sign * (1.0 - 2.0 * st.q) * st.s / 2.0);
    return h;
  }

 private:
  double w(Index j) const { return g_->weights(i_, j); }

  std::shared_ptr<const CyberInstance> g_;
  Index i_;
};

/// Insurer profit Σᵢ(ρᵢ − Iᵢqᵢ) subject to individual rationality
/// gᵢ = ρᵢ − Iᵢqᵢ + γ√(qᵢ(1 − qᵢ))(|Lᵢ − Iᵢ| − Lᵢ) ≤ 0: no agent is worse
/// off insured than uninsured at the same efforts.
class CyberLeader final : public LeaderObjective {
 public:
  explicit CyberLeader(std::shared_ptr<const CyberInstance> game) : g_(std::move(game)) {}

  Index num_constraints() const override { return g_->num_followers(); }

  double value(const JointStrategy& x, const VectorXd& pi) const override {
    double total = 0.0;
    for (Index i = 0; i < n(); ++i) {
      const detail::CyberState st(*g_, x, pi, i);
      total += pi[2 * i + 1] - pi[2 * i] * st.q;
    }
    return total;
  }

  VectorXd grad_pi(const JointStrategy& x, const VectorXd& pi) const override {
    VectorXd grad(pi.size());
    for (Index i = 0; i < n(); ++i) {
      const detail::CyberState st(*g_, x, pi, i);
      grad[2 * i] = -st.q;
      grad[2 * i + 1] = 1.0;
    }
    return grad;
  }

  VectorXd grad_x(const JointStrategy& x, const VectorXd& pi) const override {
    VectorXd grad = VectorXd::Zero(x.size());
    for (Index i = 0; i < n(); ++i) {
      const detail::CyberState st(*g_, x, pi, i);
      grad += (pi[2 * i] * st.s * st.s) * g_->weights.row(i).transpose();
    }
    return grad;
  }

  VectorXd constraints(const JointStrategy& x, const VectorXd& pi) const override {
    VectorXd g(n());
    for (Index i = 0; i < n(); ++i) {
      const detail::CyberState st(*g_, x, pi, i);
      g[i] = pi[2 * i + 1] - pi[2 * i] * st.q +
             g_->risk_aversion * st.s * (st.a() - g_->losses[i]);
    }
    return g;
  }

  MatrixXd constraints_jac_pi(const JointStrategy& x, const VectorXd& pi) const override {
    MatrixXd jac = MatrixXd::Zero(n(), pi.size());
    for (Index i = 0; i < n(); ++i) {
      const detail::CyberState st(*g_, x, pi, i);
      jac(i, 2 * i) = -st.q - g_->risk_aversion * st.s * st.sign;
      jac(i, 2 * i + 1) = 1.0;
    }
    return jac;
  }

  MatrixXd constraints_jac_x(const JointStrategy& x, const VectorXd& pi) const override {
    MatrixXd jac(n(), x.size());
    for (Index i = 0; i < n(); ++i) {
      const detail::CyberState st(*g_, x, pi, i);
      const double dz = -pi[2 * i] * st.s * st.s +
                        g_->risk_aversion * (st.a() - g_->losses[i]) * (1.0 - 2.0 * st.q) *
                            st.s / 2.0;
      jac.row(i) = -dz * g_->weights.row(i);
    }
    return jac;
  }

 private:
  Index n() const { return g_->num_followers(); }

  std::shared_ptr<const CyberInstance> g_;
};

/// Efforts xᵢ ∈ [0, ∞); coverage Iᵢ ∈ [0, Lᵢ] and premium ρᵢ ≥ 0.
inline GameInstance make_cyber_game(std::shared_ptr<const CyberInstance> inst) {
  inst->validate();
  GameInstance game;
  game.kind = "cyber";
  for (Index i = 0; i < inst->num_followers(); ++i)
    game.followers.push_back(FollowerSpec{
        i, StrategySpace::box(VectorXd::Zero(1), VectorXd::Constant(1, kInf)),
        std::make_shared<CyberFollower>(inst, i)});
  const Index d = inst->param_dim();
  VectorXd upper(d);
  for (Index i = 0; i < inst->num_followers(); ++i) {
    upper[2 * i] = inst->losses[i];
    upper[2 * i + 1] = kInf;
  }
  game.leader =
      LeaderProblem{std::make_shared<CyberLeader>(inst), d, VectorXd::Zero(d), upper};
  return game;
}

}  // namespace stackgrad::games
