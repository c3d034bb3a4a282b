#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stackgrad/equilibrium.hpp"
#include "stackgrad/errors.hpp"
#include "stackgrad/kkt.hpp"
#include "stackgrad/model.hpp"
#include "stackgrad/random.hpp"

namespace stackgrad {

struct LeaderConfig {
  /// γ, shared by π and the slacks.
  double step = 0.01;
  /// K: multipliers are updated at iterations ≡ 0 (mod K).
  int period = 100;
  /// μ, held constant.
  double penalty = 10.0;
  int total_iters = 5000;
  /// Base of the equilibrium seed stream.
  std::uint64_t seed = 1;
  /// Equilibrium samples averaged per gradient step.
  int batch = 1;
  double ridge = 1e-8;
  OracleConfig oracle;

  void validate() const {
    if (!(step > 0.0)) throw InvalidArgument("step must be positive");
    if (!(penalty > 0.0)) throw InvalidArgument("penalty must be positive");
    if (period <= 0 || total_iters < 0 || batch <= 0)
      throw InvalidArgument("period and batch must be positive, total_iters nonnegative");
    if (!(ridge >= 0.0)) throw InvalidArgument("ridge must be nonnegative");
    oracle.validate();
  }
};

struct LagrangianState {
  VectorXd pi;
  VectorXd slack;
  VectorXd multipliers;
  double penalty = 10.0;
  double step = 0.01;
  int period = 100;
  int iteration = 0;
};

struct IterationRecord {
  int iteration = 0;
  std::uint64_t seed = 0;
  double objective = 0.0;
  VectorXd constraints;
  double lagrangian = 0.0;
  double violation = 0.0;
  double ni_residual = 0.0;
  bool regularized = false;
  bool converged = true;
  double wall_ms = 0.0;
  /// Time in the equilibrium oracle and in KKT assembly plus solve.
  double forward_ms = 0.0;
  double backward_ms = 0.0;
};

struct RunTrajectory {
  std::vector<IterationRecord> records;
  std::vector<std::string> warnings;
};

/// Called with the state after every gradient step.
using LeaderObserver = std::function<void(const LagrangianState&)>;

struct LeaderResult {
  LagrangianState state;
  RunTrajectory trajectory;
};

struct LagrangianGradient {
  VectorXd pi;
  VectorXd slack;
};

/// −f + λᵀ(g + s) + (μ/2)‖g + s‖².
inline double lagrangian_value(double f_val, const VectorXd& g_val,
                               const LagrangianState& state) {
  require_dims(g_val.size() == state.slack.size() && g_val.size() == state.multipliers.size(),
               "lagrangian_value: constraint, slack and multiplier lengths");
  const VectorXd r = g_val + state.slack;
  return -f_val + state.multipliers.dot(r) + 0.5 * state.penalty * r.squaredNorm();
}

/// Single-sample gradient of the Lagrangian in (π, s), chaining ∂L/∂x
/// through dx*/dπ.
inline LagrangianGradient sampled_lagrangian_gradient(const GameInstance& game,
                                                      const LagrangianState& state,
                                                      const EquilibriumPoint& eq,
                                                      const EquilibriumJacobian& jac) {
  const LeaderObjective& leader = *game.leader.objective;
  const VectorXd& pi = state.pi;
  require_dims(jac.dx_dpi.rows() == game.strategy_dim() && jac.dx_dpi.cols() == pi.size(),
               "sampled_lagrangian_gradient: Jacobian shape");
  const VectorXd g = leader.constraints(eq.x, pi);
  require_dims(g.size() == state.slack.size(), "sampled_lagrangian_gradient: slack length");
  const VectorXd weight = state.multipliers + state.penalty * (g + state.slack);

  VectorXd d_pi = -leader.grad_pi(eq.x, pi);
  VectorXd d_x = -leader.grad_x(eq.x, pi);
  if (g.size() > 0) {
    d_pi += leader.constraints_jac_pi(eq.x, pi).transpose() * weight;
    d_x += leader.constraints_jac_x(eq.x, pi).transpose() * weight;
  }
  return {d_pi + jac.dx_dpi.transpose() * d_x, weight};
}

namespace detail {

inline std::uint64_t leader_seed(const LeaderConfig& cfg, std::uint64_t draw) {
  return mix_seed(cfg.seed, draw);
}

}  // namespace detail

/// Stochastic gradient descent on the augmented Lagrangian with slacks.
///
/// Every iteration samples `batch` equilibria at the current π, solves the
/// KKT system at each and steps (π, s) along the averaged gradient, with π
/// clamped to its box and s at zero. Oracle failures are recorded as
/// warnings; a step with no usable sample leaves (π, s) unchanged.
inline LeaderResult augmented_lagrangian_solve(const GameInstance& game, const VectorXd& pi0,
                                               const LeaderConfig& cfg = LeaderConfig{},
                                               const LeaderObserver& observer = {}) {
  cfg.validate();
  game.check_param(pi0);
  const LeaderProblem& lp = game.leader;
  if (((pi0 - lp.clamp(pi0)).array() != 0.0).any())
    throw InvalidArgument("augmented_lagrangian_solve: π0 lies outside the leader box");
  const LeaderObjective& leader = *lp.objective;
  const Index C = leader.num_constraints();

  LeaderResult out;
  LagrangianState& st = out.state;
  st.pi = pi0;
  st.penalty = cfg.penalty;
  st.step = cfg.step;
  st.period = cfg.period;
  st.multipliers = VectorXd::Zero(C);
  st.slack = VectorXd::Zero(C);
  if (C > 0) {
    const EquilibriumPoint e0 =
        sample_equilibrium(game, st.pi, detail::leader_seed(cfg, 0), cfg.oracle);
    st.slack = (-leader.constraints(e0.x, st.pi)).cwiseMax(0.0);
  }

  std::uint64_t draw = 1;
  for (int t = 1; t <= cfg.total_iters; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    VectorXd grad_pi = VectorXd::Zero(st.pi.size()), grad_s = VectorXd::Zero(C);
    VectorXd g_mean = VectorXd::Zero(C);
    IterationRecord rec;
    rec.iteration = t;
    int used = 0;
    for (int b = 0; b < cfg.batch; ++b, ++draw) {
      const std::uint64_t seed = detail::leader_seed(cfg, draw);
      if (b == 0) rec.seed = seed;
      const auto f0 = std::chrono::steady_clock::now();
      const EquilibriumPoint eq = sample_equilibrium(game, st.pi, seed, cfg.oracle);
      const auto f1 = std::chrono::steady_clock::now();
      rec.forward_ms += std::chrono::duration<double, std::milli>(f1 - f0).count();
      if (!eq.converged()) {
        rec.converged = false;
        out.trajectory.warnings.push_back("iteration " + std::to_string(t) + " seed " +
                                          std::to_string(seed) + ": " + to_string(eq.status));
        if (eq.status == EquilibriumStatus::kDualRecoveryFailed) continue;
      }
      EquilibriumJacobian jac;
      try {
        jac = solve_equilibrium_jacobian(assemble_kkt(game, eq, st.pi), cfg.ridge);
        rec.backward_ms += std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - f1)
                               .count();
      } catch (const Error& e) {
        out.trajectory.warnings.push_back("iteration " + std::to_string(t) + " seed " +
                                          std::to_string(seed) + ": " + e.what());
        continue;
      }
      const LagrangianGradient grad = sampled_lagrangian_gradient(game, st, eq, jac);
      const VectorXd g = leader.constraints(eq.x, st.pi);
      grad_pi += grad.pi;
      grad_s += grad.slack;
      g_mean += g;
      rec.objective += leader.value(eq.x, st.pi);
      rec.ni_residual = std::max(rec.ni_residual, eq.ni_residual);
      rec.regularized = rec.regularized || jac.regularized;
      ++used;
    }
    if (used > 0) {
      const double inv = 1.0 / used;
      grad_pi *= inv;
      grad_s *= inv;
      g_mean *= inv;
      rec.objective *= inv;
      rec.constraints = g_mean;
      rec.lagrangian = lagrangian_value(rec.objective, g_mean, st);
      rec.violation = C > 0 ? g_mean.cwiseMax(0.0).maxCoeff() : 0.0;

      st.pi = lp.clamp(st.pi - st.step * grad_pi);
      st.slack = (st.slack - st.step * grad_s).cwiseMax(0.0);
      if (t % st.period == 0) st.multipliers += st.penalty * (g_mean + st.slack);
    } else {
      rec.constraints = VectorXd::Constant(C, kNaN);
      rec.objective = rec.lagrangian = rec.violation = kNaN;
    }
    st.iteration = t;
    rec.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.trajectory.records.push_back(std::move(rec));
    if (observer) observer(st);
  }
  return out;
}

}  // namespace stackgrad
