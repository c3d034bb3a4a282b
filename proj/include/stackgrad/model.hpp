#pragma once

#include <algorithm>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stackgrad/errors.hpp"
#include "stackgrad/space.hpp"

namespace stackgrad {

/// Joint follower strategy: per-follower blocks over one contiguous vector.
class JointStrategy {
 public:
  JointStrategy() = default;

  /// Zero strategy with the given block sizes.
  explicit JointStrategy(std::span<const Index> block_sizes) {
    offsets_.reserve(block_sizes.size() + 1);
    for (Index s : block_sizes) offsets_.push_back(offsets_.back() + s);
    values_ = VectorXd::Zero(offsets_.back());
  }

  JointStrategy(std::span<const Index> block_sizes, VectorXd values)
      : JointStrategy(block_sizes) {
    require_dims(values.size() == values_.size(),
                 "joint strategy: concatenated length does not match blocks");
    values_ = std::move(values);
  }

  static JointStrategy concatenate(std::span<const VectorXd> blocks) {
    std::vector<Index> sizes;
    sizes.reserve(blocks.size());
    for (const auto& b : blocks) sizes.push_back(b.size());
    JointStrategy x(sizes);
    for (std::size_t i = 0; i < blocks.size(); ++i)
      x.values_.segment(x.offsets_[i], blocks[i].size()) = blocks[i];
    return x;
  }

  Index num_blocks() const { return static_cast<Index>(offsets_.size()) - 1; }
  Index size() const { return values_.size(); }
  Index offset(Index i) const { return offsets_[static_cast<std::size_t>(i)]; }
  Index block_size(Index i) const { return offset(i + 1) - offset(i); }
  std::vector<Index> block_sizes() const {
    std::vector<Index> s;
    for (Index i = 0; i < num_blocks(); ++i) s.push_back(block_size(i));
    return s;
  }

  auto block(Index i) { return values_.segment(offset(i), block_size(i)); }
  auto block(Index i) const { return values_.segment(offset(i), block_size(i)); }

  const VectorXd& values() const { return values_; }
  VectorXd& values() { return values_; }

  std::vector<VectorXd> split() const {
    std::vector<VectorXd> out;
    for (Index i = 0; i < num_blocks(); ++i) out.emplace_back(block(i));
    return out;
  }

  /// Copy with block i replaced (a unilateral deviation).
  JointStrategy with_block(Index i, const VectorXd& y) const {
    JointStrategy copy = *this;
    copy.block(i) = y;
    return copy;
  }

  friend bool operator==(const JointStrategy& a, const JointStrategy& b) {
    return a.offsets_ == b.offsets_ && a.values_ == b.values_;
  }

 private:
  std::vector<Index> offsets_{0};
  VectorXd values_;
};

/// Objective fᵢ(x, π) a follower minimises, with its derivative oracles.
///
/// Implementations must be re-entrant: the oracles are called concurrently
/// from independent equilibrium samples.
class FollowerObjective {
 public:
  virtual ~FollowerObjective() = default;

  virtual double value(const JointStrategy& x, const VectorXd& pi) const = 0;
  /// ∇_{xᵢ} fᵢ.
  virtual VectorXd gradient(const JointStrategy& x, const VectorXd& pi) const = 0;
  /// ∇²_{xᵢ xⱼ} fᵢ, shape dim xᵢ × dim xⱼ.
  virtual MatrixXd hessian_block(Index j, const JointStrategy& x,
                                 const VectorXd& pi) const = 0;
  /// ∇²_{π xᵢ} fᵢ, shape dim xᵢ × dim π.
  virtual MatrixXd param_hessian(const JointStrategy& x, const VectorXd& pi) const = 0;
};

struct FollowerSpec {
  Index index = 0;
  StrategySpace space;
  std::shared_ptr<const FollowerObjective> objective;
};

/// Leader payoff f(x, π) (maximised) and constraints g(x, π) <= 0.
class LeaderObjective {
 public:
  virtual ~LeaderObjective() = default;

  virtual Index num_constraints() const = 0;
  virtual double value(const JointStrategy& x, const VectorXd& pi) const = 0;
  virtual VectorXd grad_pi(const JointStrategy& x, const VectorXd& pi) const = 0;
  virtual VectorXd grad_x(const JointStrategy& x, const VectorXd& pi) const = 0;
  virtual VectorXd constraints(const JointStrategy& x, const VectorXd& pi) const = 0;
  /// ∂g/∂π, shape #constraints × dim π.
  virtual MatrixXd constraints_jac_pi(const JointStrategy& x, const VectorXd& pi) const = 0;
  /// ∂g/∂x, shape #constraints × dim x.
  virtual MatrixXd constraints_jac_x(const JointStrategy& x, const VectorXd& pi) const = 0;
};

struct LeaderProblem {
  std::shared_ptr<const LeaderObjective> objective;
  Index param_dim = 0;
  VectorXd param_lower;
  VectorXd param_upper;

  VectorXd clamp(const VectorXd& pi) const {
    return pi.cwiseMax(param_lower).cwiseMin(param_upper);
  }
};

/// One Stackelberg game: n followers and the leader.
struct GameInstance {
  std::string kind;
  std::vector<FollowerSpec> followers;
  LeaderProblem leader;

  Index num_followers() const { return static_cast<Index>(followers.size()); }
  Index param_dim() const { return leader.param_dim; }

  std::vector<Index> block_sizes() const {
    std::vector<Index> s;
    for (const auto& f : followers) s.push_back(f.space.dim());
    return s;
  }
  Index strategy_dim() const {
    Index d = 0;
    for (const auto& f : followers) d += f.space.dim();
    return d;
  }
  JointStrategy zero_strategy() const { return JointStrategy(block_sizes()); }

  void check_strategy(const JointStrategy& x) const {
    require_dims(x.num_blocks() == num_followers(), "joint strategy: wrong number of blocks");
    for (Index i = 0; i < num_followers(); ++i)
      require_dims(x.block_size(i) == followers[static_cast<std::size_t>(i)].space.dim(),
                   "joint strategy: block " + std::to_string(i) + " has wrong size");
  }
  void check_param(const VectorXd& pi) const {
    require_dims(pi.size() == param_dim(), "leader parameter has wrong dimension");
  }
};

/// Largest equality or inequality violation over all followers; 0 iff x is
/// feasible.
inline double feasibility_residual(const JointStrategy& x, const GameInstance& game) {
  game.check_strategy(x);
  double r = 0.0;
  for (Index i = 0; i < game.num_followers(); ++i)
    r = std::max(r, game.followers[static_cast<std::size_t>(i)].space.residual(x.block(i)));
  return r;
}

}  // namespace stackgrad
