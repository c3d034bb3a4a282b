#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "stackgrad/model.hpp"

namespace stackgrad::games {

/// Follower objective assembled from callables; handy for small
/// hand-built instances.
class LambdaFollower final : public FollowerObjective {
 public:
  using Value = std::function<double(const JointStrategy&, const VectorXd&)>;
  using Vector = std::function<VectorXd(const JointStrategy&, const VectorXd&)>;
  using Block = std::function<MatrixXd(Index, const JointStrategy&, const VectorXd&)>;
  using Matrix = std::function<MatrixXd(const JointStrategy&, const VectorXd&)>;

  LambdaFollower(Value value, Vector gradient, Block hessian, Matrix param_hessian)
      : value_(std::move(value)),
        gradient_(std::move(gradient)),
        hessian_(std::move(hessian)),
        param_hessian_(std::move(param_hessian)) {}

  double value(const JointStrategy& x, const VectorXd& pi) const override {
    return value_(x, pi);
  }
  VectorXd gradient(const JointStrategy& x, const VectorXd& pi) const override {
    return gradient_(x, pi);
  }
  MatrixXd hessian_block(Index j, const JointStrategy& x, const VectorXd& pi) const override {
    return hessian_(j, x, pi);
  }
  MatrixXd param_hessian(const JointStrategy& x, const VectorXd& pi) const override {
    return param_hessian_(x, pi);
  }

 private:
  Value value_;
  Vector gradient_;
  Block hessian_;
  Matrix param_hessian_;
};

/// Leader objective assembled from callables. Without constraint callables
/// the leader is unconstrained.
class LambdaLeader final : public LeaderObjective {
 public:
  using Value = std::function<double(const JointStrategy&, const VectorXd&)>;
  using Vector = std::function<VectorXd(const JointStrategy&, const VectorXd&)>;
  using Matrix = std::function<MatrixXd(const JointStrategy&, const VectorXd&)>;

  LambdaLeader(Value value, Vector grad_pi, Vector grad_x)
      : value_(std::move(value)), grad_pi_(std::move(grad_pi)), grad_x_(std::move(grad_x)) {}

  LambdaLeader& with_constraints(Index count, Vector g, Matrix jac_pi, Matrix jac_x) {
    num_constraints_ = count;
    g_ = std::move(g);
    jac_pi_ = std::move(jac_pi);
    jac_x_ = std::move(jac_x);
    return *this;
  }

  Index num_constraints() const override { return num_constraints_; }
  double value(const JointStrategy& x, const VectorXd& pi) const override {
    return value_(x, pi);
  }
  VectorXd grad_pi(const JointStrategy& x, const VectorXd& pi) const override {
    return grad_pi_(x, pi);
  }
  VectorXd grad_x(const JointStrategy& x, const VectorXd& pi) const override {
    return grad_x_(x, pi);
  }
  VectorXd constraints(const JointStrategy& x, const VectorXd& pi) const override {
    return num_constraints_ == 0 ? VectorXd::Zero(0) : g_(x, pi);
  }
  MatrixXd constraints_jac_pi(const JointStrategy& x, const VectorXd& pi) const override {
    return num_constraints_ == 0 ? MatrixXd::Zero(0, pi.size()) : jac_pi_(x, pi);
  }
  MatrixXd constraints_jac_x(const JointStrategy& x, const VectorXd& pi) const override {
    return num_constraints_ == 0 ? MatrixXd::Zero(0, x.size()) : jac_x_(x, pi);
  }

 private:
  Value value_;
  Vector grad_pi_, grad_x_;
  Index num_constraints_ = 0;
  Vector g_;
  Matrix jac_pi_, jac_x_;
};

/// Scalar follower fᵢ = ½(xᵢ − Σⱼ cᵢⱼ xⱼ − Σₖ dᵢₖ πₖ)², with cᵢᵢ ignored.
class LinearQuadraticFollower final : public FollowerObjective {
 public:
  LinearQuadraticFollower(Index index, VectorXd coupling, VectorXd param_weights)
      : index_(index), c_(std::move(coupling)), d_(std::move(param_weights)) {
    c_[index_] = 0.0;
  }

  double value(const JointStrategy& x, const VectorXd& pi) const override {
    const double r = residual(x, pi);
    return 0.5 * r * r;
  }
  VectorXd gradient(const JointStrategy& x, const VectorXd& pi) const override {
    return VectorXd::Constant(1, residual(x, pi));
  }
  MatrixXd hessian_block(Index j, const JointStrategy&, const VectorXd&) const override {
    return MatrixXd::Constant(1, 1, j == index_ ? 1.0 : -c_[j]);
  }
  MatrixXd param_hessian(const JointStrategy&, const VectorXd&) const override {
    return -d_.transpose();
  }

 private:
  double residual(const JointStrategy& x, const VectorXd& pi) const {
    return x.values()[index_] - c_.dot(x.values()) - d_.dot(pi);
  }

  Index index_;
  VectorXd c_;
  VectorXd d_;
};

/// Scalar follower fᵢ = ½(xᵢ − κ·tanh(β·xⱼ) − πᵢ)² coupled to one partner j.
///
/// With κβ > 1 a pair of these has two stable equilibria (±a, ±a) whose
/// basins are picked by the initialization.
class DoubleWellFollower final : public FollowerObjective {
 public:
  DoubleWellFollower(Index index, Index partner, double kappa, double beta)
      : index_(index), partner_(partner), kappa_(kappa), beta_(beta) {}

  double value(const JointStrategy& x, const VectorXd& pi) const override {
    const double r = residual(x, pi);
    return 0.5 * r * r;
  }
  VectorXd gradient(const JointStrategy& x, const VectorXd& pi) const override {
    return VectorXd::Constant(1, residual(x, pi));
  }
  MatrixXd hessian_block(Index j, const JointStrategy& x, const VectorXd&) const override {
    if (j == index_) return MatrixXd::Ones(1, 1);
    if (j != partner_) return MatrixXd::Zero(1, 1);
    const double t = std::tanh(beta_ * x.values()[partner_]);
    return MatrixXd::Constant(1, 1, -kappa_ * beta_ * (1.0 - t * t));
  }
  MatrixXd param_hessian(const JointStrategy&, const VectorXd& pi) const override {
    MatrixXd m = MatrixXd::Zero(1, pi.size());
    m(0, index_) = -1.0;
    return m;
  }

 private:
  double residual(const JointStrategy& x, const VectorXd& pi) const {
    return x.values()[index_] - kappa_ * std::tanh(beta_ * x.values()[partner_]) -
           pi[index_];
  }

  Index index_, partner_;
  double kappa_, beta_;
};

/// Unconstrained linear leader payoff f = wᵀx + vᵀπ.
inline std::shared_ptr<LambdaLeader> linear_leader(VectorXd x_weights, VectorXd pi_weights) {
  auto w = std::make_shared<VectorXd>(std::move(x_weights));
  auto v = std::make_shared<VectorXd>(std::move(pi_weights));
  return std::make_shared<LambdaLeader>(
      [w, v](const JointStrategy& x, const VectorXd& pi) {
        return w->dot(x.values()) + v->dot(pi);
      },
      [v](const JointStrategy&, const VectorXd&) { return *v; },
      [w](const JointStrategy&, const VectorXd&) { return *w; });
}

/// One follower f = ½(x − π)² on the box [lower, upper]; leader payoff x.
inline GameInstance quadratic_single(double lower = -10.0, double upper = 10.0) {
  GameInstance g;
  g.kind = "toy";
  g.followers.push_back(FollowerSpec{
      0, StrategySpace::box(VectorXd::Constant(1, lower), VectorXd::Constant(1, upper)),
      std::make_shared<LinearQuadraticFollower>(0, VectorXd::Zero(1), VectorXd::Ones(1))});
  g.leader = LeaderProblem{linear_leader(VectorXd::Ones(1), VectorXd::Zero(1)), 1,
                           VectorXd::Constant(1, -kInf), VectorXd::Constant(1, kInf)};
  return g;
}

/// f₁ = ½(x₁ − ½x₂ − π)², f₂ = ½(x₂ − ½x₁)² on [−10, 10]; equilibrium
/// (4π/3, 2π/3). Leader payoff x₁ + x₂.
inline GameInstance quadratic_pair() {
  GameInstance g;
  g.kind = "toy";
  const VectorXd lo = VectorXd::Constant(1, -10.0), hi = VectorXd::Constant(1, 10.0);
  VectorXd c1(2), c2(2);
  c1 << 0.0, 0.5;
  c2 << 0.5, 0.0;
  g.followers.push_back(FollowerSpec{
      0, StrategySpace::box(lo, hi),
      std::make_shared<LinearQuadraticFollower>(0, c1, VectorXd::Ones(1))});
  g.followers.push_back(FollowerSpec{
      1, StrategySpace::box(lo, hi),
      std::make_shared<LinearQuadraticFollower>(1, c2, VectorXd::Zero(1))});
  g.leader = LeaderProblem{linear_leader(VectorXd::Ones(2), VectorXd::Zero(1)), 1,
                           VectorXd::Constant(1, -kInf), VectorXd::Constant(1, kInf)};
  return g;
}

/// Two double-well followers on [−2, 2] with κ = 1.5, β = 1 and
/// π = (π₁, π₂). Leader payoff x₁ + x₂² + 0.25·π₁ − 0.5·π₂.
inline GameInstance two_basin(double kappa = 1.5, double beta = 1.0) {
  GameInstance g;
  g.kind = "two_basin";
  const VectorXd lo = VectorXd::Constant(1, -2.0), hi = VectorXd::Constant(1, 2.0);
  g.followers.push_back(FollowerSpec{0, StrategySpace::box(lo, hi),
                                     std::make_shared<DoubleWellFollower>(0, 1, kappa, beta)});
  g.followers.push_back(FollowerSpec{1, StrategySpace::box(lo, hi),
                                     std::make_shared<DoubleWellFollower>(1, 0, kappa, beta)});
  VectorXd v(2);
  v << 0.25, -0.5;
  auto leader = std::make_shared<LambdaLeader>(
      [v](const JointStrategy& x, const VectorXd& pi) {
        const auto& s = x.values();
        return s[0] + s[1] * s[1] + v.dot(pi);
      },
      [v](const JointStrategy&, const VectorXd&) { return v; },
      [](const JointStrategy& x, const VectorXd&) {
        VectorXd gx(2);
        gx << 1.0, 2.0 * x.values()[1];
        return gx;
      });
  g.leader = LeaderProblem{leader, 2, VectorXd::Constant(2, -1.0), VectorXd::Constant(2, 1.0)};
  return g;
}

}  // namespace stackgrad::games
