#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stackgrad/errors.hpp"
#include "stackgrad/model.hpp"
#include "stackgrad/random.hpp"
#include "stackgrad/space.hpp"

namespace stackgrad {

/// Settings of the relaxation equilibrium oracle.
struct OracleConfig {
  /// α in x ← (1−α)x + α·BR(x).
  double relax_weight = 0.5;
  /// α is halved (down to this floor) whenever a step would raise the
  /// Nikaido-Isoda residual.
  double min_relax_weight = 1.0 / 1024.0;
  /// After this many outer steps without a new best NI residual the
  /// monotone safeguard is dropped and plain steps are taken, with α halved
  /// at every further stall. This lets the iterate leave non-equilibrium
  /// local minima of the residual and breaks best-response cycles.
  int stall_patience = 100;
  int max_outer_iters = 5000;
  double br_tol = 1e-12;
  int br_max_iters = 5000;
  /// Outer tolerance on the Nikaido-Isoda residual.
  double eq_tol = 1e-6;
  /// Outer tolerance on ‖BR(x) − x‖∞.
  double fixed_point_tol = 1e-10;
  double active_tol = 1e-7;
  /// Active constraints whose multiplier is below this are degenerate.
  double degenerate_tol = 1e-9;
  /// Half-width of the initialization box along unbounded coordinates.
  double init_extent = 1.0;

  void validate() const {
    if (!(relax_weight > 0.0 && relax_weight <= 1.0))
      throw InvalidArgument("relax_weight must lie in (0, 1]");
    if (!(min_relax_weight > 0.0 && min_relax_weight <= relax_weight))
      throw InvalidArgument("min_relax_weight must lie in (0, relax_weight]");
    if (!(br_tol > 0 && eq_tol > 0 && fixed_point_tol > 0 && active_tol > 0))
      throw InvalidArgument("oracle tolerances must be positive");
    if (max_outer_iters <= 0 || br_max_iters <= 0 || stall_patience <= 0)
      throw InvalidArgument("oracle iteration caps must be positive");
  }

  /// Configuration tight enough for finite-difference differentiation: the
  /// central difference divides solve error by 2h.
  static OracleConfig precise() {
    OracleConfig cfg;
    cfg.br_tol = 1e-15;
    cfg.fixed_point_tol = 1e-15;
    cfg.eq_tol = 1e-10;
    cfg.max_outer_iters = 20000;
    cfg.br_max_iters = 20000;
    return cfg;
  }
};

struct BestResponse {
  VectorXd strategy;
  /// ‖y − P(y − ∇fᵢ)‖∞ at the returned point.
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

enum class EquilibriumStatus { kConverged, kNotConverged, kDualRecoveryFailed };

inline std::string to_string(EquilibriumStatus s) {
  switch (s) {
    case EquilibriumStatus::kConverged: return "converged";
    case EquilibriumStatus::kNotConverged: return "not_converged";
    case EquilibriumStatus::kDualRecoveryFailed: return "dual_recovery_failed";
  }
  return "unknown";
}

/// A follower equilibrium with its multipliers and certificates.
struct EquilibriumPoint {
  JointStrategy x;
  std::vector<VectorXd> duals_ineq;  // λᵢ* >= 0
  std::vector<VectorXd> duals_eq;    // νᵢ*
  double ni_residual = 0.0;
  double kkt_residual = 0.0;
  double fixed_point_residual = 0.0;
  std::uint64_t init_seed = 0;
  int outer_iterations = 0;
  /// Active constraints with (near) zero multiplier.
  int degenerate_constraints = 0;
  EquilibriumStatus status = EquilibriumStatus::kNotConverged;

  bool converged() const { return status == EquilibriumStatus::kConverged; }
};

struct DualSolution {
  std::vector<VectorXd> lambda;
  std::vector<VectorXd> nu;
  double kkt_residual = 0.0;
  int degenerate = 0;
};

namespace detail {

inline const FollowerSpec& follower(const GameInstance& game, Index i) {
  return game.followers[static_cast<std::size_t>(i)];
}

/// Nonnegative least squares min ‖C w + d‖ with w_j >= 0 for j < num_signed
/// and the remaining coordinates free (Lawson-Hanson active set).
inline VectorXd nnls_partially_free(const MatrixXd& C, const VectorXd& d,
                                    Index num_signed) {
  const Index n = C.cols();
  VectorXd w = VectorXd::Zero(n);
  if (n == 0) return w;
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  for (Index j = num_signed; j < n; ++j) passive[static_cast<std::size_t>(j)] = true;

  auto solve_passive = [&]() {
    std::vector<Index> idx;
    for (Index j = 0; j < n; ++j)
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    VectorXd s = VectorXd::Zero(n);
    if (idx.empty()) return s;
    MatrixXd Cp(C.rows(), static_cast<Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) Cp.col(static_cast<Index>(k)) = C.col(idx[k]);
    const VectorXd sp = Cp.colPivHouseholderQr().solve(-d);
    for (std::size_t k = 0; k < idx.size(); ++k) s[idx[k]] = sp[static_cast<Index>(k)];
    return s;
  };

  w = solve_passive();
  const double scale = std::max(1.0, d.lpNorm<Eigen::Infinity>());
  for (int outer = 0; outer < 3 * static_cast<int>(n) + 10; ++outer) {
    const VectorXd grad = -C.transpose() * (C * w + d);
    Index best = -1;
    double best_val = 1e-13 * scale;
    for (Index j = 0; j < num_signed; ++j)
      if (!passive[static_cast<std::size_t>(j)] && grad[j] > best_val) {
        best_val = grad[j];
        best = j;
      }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;
    for (int inner = 0; inner < 3 * static_cast<int>(n) + 10; ++inner) {
      const VectorXd s = solve_passive();
      double alpha = 1.0;
      bool feasible = true;
      for (Index j = 0; j < num_signed; ++j) {
        if (passive[static_cast<std::size_t>(j)] && s[j] <= 0.0) {
          feasible = false;
          const double denom = w[j] - s[j];
          if (denom > 0.0) alpha = std::min(alpha, w[j] / denom);
        }
      }
      if (feasible) {
        w = s;
        break;
      }
      w += alpha * (s - w);
      for (Index j = 0; j < num_signed; ++j)
        if (passive[static_cast<std::size_t>(j)] && w[j] <= 1e-15 * scale) {
          passive[static_cast<std::size_t>(j)] = false;
          w[j] = 0.0;
        }
    }
  }
  for (Index j = 0; j < num_signed; ++j) w[j] = std::max(w[j], 0.0);
  return w;
}

}  // namespace detail

/// Best response of follower i to the others' current strategies.
///
/// Projected gradient with Barzilai-Borwein trial steps and a halving
/// Armijo search (constant 1e-4), warm started from xᵢ. Once decreases
/// fall below floating-point resolution of fᵢ, the approximate-Wolfe test
/// on the directional derivative replaces the value comparison.
inline BestResponse best_response(const GameInstance& game, Index i,
                                  const JointStrategy& x, const VectorXd& pi,
                                  double tol, int max_iters = 5000) {
  if (!(tol > 0.0)) throw InvalidArgument("best_response: tol must be positive");
  const FollowerSpec& spec = detail::follower(game, i);
  const FollowerObjective& f = *spec.objective;
  constexpr double kArmijo = 1e-4;

  // Components of ∇fᵢ along the rows of Aᵢ do not change the projected
  // step; dropping them keeps gᵀd free of cancellation near the optimum.
  MatrixXd row_basis;
  if (spec.space.num_eq() > 0)
    row_basis = Eigen::HouseholderQR<MatrixXd>(spec.space.eq_matrix().transpose())
                    .householderQ() *
                MatrixXd::Identity(spec.space.dim(), spec.space.num_eq());
  auto tangent = [&row_basis](VectorXd grad) {
    if (row_basis.cols() > 0) grad -= row_basis * (row_basis.transpose() * grad);
    return grad;
  };

  JointStrategy work = x;
  VectorXd y = project_to_space(VectorXd(x.block(i)), spec.space);
  work.block(i) = y;
  double fy = f.value(work, pi);
  VectorXd g = tangent(f.gradient(work, pi));

  auto stationarity = [&](const VectorXd& point, const VectorXd& grad) {
    return (point - project_to_space(point - grad, spec.space)).lpNorm<Eigen::Infinity>();
  };

  BestResponse out;
  double eta = 1.0 / std::max(1.0, g.lpNorm<Eigen::Infinity>());
  double res = stationarity(y, g);
  bool restarted = false;
  // at the rounding floor of ∇fᵢ the residual stops improving; give up then
  double best_res = res;
  int since_best = 0;
  int it = 0;
  for (; it < max_iters && res > tol && since_best < 200; ++it) {
    const VectorXd d = project_to_space(y - eta * g, spec.space) - y;
    const double slope = g.dot(d);
    if (!(slope < 0.0)) {
      // Along an active inequality face gᵀd cancels down to rounding and
      // loses its sign. Fall back to projected steps judged by the
      // stationarity residual, shrinking η until one helps.
      if (d.lpNorm<Eigen::Infinity>() == 0.0) break;
      bool moved = false;
      for (double e = eta; e > 1e-12 * eta; e *= 0.5) {
        const VectorXd y_try = project_to_space(y - e * g, spec.space);
        work.block(i) = y_try;
        const VectorXd g_try = tangent(f.gradient(work, pi));
        const double r_try = stationarity(y_try, g_try);
        if (r_try < res) {
          y = y_try;
          g = g_try;
          fy = f.value(work, pi);
          res = r_try;
          eta = e;
          moved = true;
          break;
        }
      }
      if (!moved) {
        if (restarted) break;
        // BB step degenerated; retry once from a unit step
        restarted = true;
        eta = 1.0;
        continue;
      }
      if (res < best_res) {
        best_res = res;
        since_best = 0;
      } else {
        ++since_best;
      }
      continue;
    }
    const double noise = 1e-13 * (1.0 + std::abs(fy));
    double t = 1.0;
    VectorXd y_new, g_new;
    double f_new = 0.0;
    bool accepted = false;
    while (t > 1e-20) {
      y_new = y + t * d;
      work.block(i) = y_new;
      f_new = f.value(work, pi);
      if (f_new <= fy + kArmijo * t * slope) {
        g_new = tangent(f.gradient(work, pi));
        accepted = true;
        break;
      }
      if (f_new <= fy + noise) {
        g_new = tangent(f.gradient(work, pi));
        if (g_new.dot(d) <= (1.0 - 2.0 * kArmijo) * std::abs(slope)) {
          accepted = true;
          break;
        }
      }
      t *= 0.5;
    }
    if (!accepted) break;
    restarted = false;
    const VectorXd s = y_new - y;
    const VectorXd dg = g_new - g;
    const double sy = s.dot(dg);
    eta = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-12, 1e12) : 1e12;
    y = std::move(y_new);
    g = std::move(g_new);
    fy = f_new;
    res = stationarity(y, g);
    if (res < best_res) {
      best_res = res;
      since_best = 0;
    } else {
      ++since_best;
    }
  }
  out.strategy = std::move(y);
  out.residual = res;
  out.iterations = it;
  out.converged = res <= tol;
  return out;
}

namespace detail {

struct JointResponse {
  JointStrategy response;
  double ni = 0.0;
  double fixed_point = 0.0;
  bool converged = true;
};

/// Best responses of every follower to x. With `warm`, follower i starts
/// from warm's block i instead of xᵢ.
inline JointResponse joint_best_response(const GameInstance& game,
                                         const JointStrategy& x, const VectorXd& pi,
                                         const OracleConfig& cfg,
                                         const JointStrategy* warm = nullptr) {
  JointResponse out{x, 0.0, 0.0, true};
  for (Index i = 0; i < game.num_followers(); ++i) {
    const BestResponse br =
        warm ? best_response(game, i, x.with_block(i, warm->block(i)), pi, cfg.br_tol,
                             cfg.br_max_iters)
             : best_response(game, i, x, pi, cfg.br_tol, cfg.br_max_iters);
    out.converged = out.converged && br.converged;
    const FollowerObjective& f = *follower(game, i).objective;
    out.ni += f.value(x, pi) - f.value(x.with_block(i, br.strategy), pi);
    out.fixed_point = std::max(
        out.fixed_point, (br.strategy - x.block(i)).lpNorm<Eigen::Infinity>());
    out.response.block(i) = br.strategy;
  }
  if (out.ni < 0.0 && out.ni > -1e-10) out.ni = 0.0;
  return out;
}

}  // namespace detail

/// Nikaido-Isoda value V(x; π) = Σᵢ fᵢ(x) − min_{yᵢ∈Xᵢ} fᵢ(yᵢ, x₋ᵢ).
///
/// Zero exactly at Nash equilibria. Each minimum comes from best_response,
/// so for nonconvex fᵢ this is a local gap. Throws NonConvergence if a best
/// response does not converge.
inline double nikaido_isoda_residual(const GameInstance& game, const JointStrategy& x,
                                     const VectorXd& pi,
                                     const OracleConfig& cfg = OracleConfig{}) {
  game.check_strategy(x);
  game.check_param(pi);
  const auto jr = detail::joint_best_response(game, x, pi, cfg);
  if (!jr.converged) throw NonConvergence("best response did not converge");
  return jr.ni;
}

/// Multipliers (λ*, ν*) solving the stationarity equations of every follower
/// at x*, by nonnegative least squares over the active inequalities.
///
/// Throws DualRecoveryFailure when the resulting KKT residual exceeds
/// `max_residual`.
inline DualSolution recover_duals(const GameInstance& game, const JointStrategy& x_star,
                                  const VectorXd& pi, double active_tol = 1e-7,
                                  double max_residual = 1e-5,
                                  double degenerate_tol = 1e-9) {
  game.check_strategy(x_star);
  game.check_param(pi);
  DualSolution out;
  for (Index i = 0; i < game.num_followers(); ++i) {
    const FollowerSpec& spec = detail::follower(game, i);
    const StrategySpace& space = spec.space;
    const VectorXd xi = x_star.block(i);
    const VectorXd grad = spec.objective->gradient(x_star, pi);
    const VectorXd slack = space.ineq_rhs() - space.ineq_matrix() * xi;

    std::vector<Index> active;
    for (Index j = 0; j < space.num_ineq(); ++j)
      if (slack[j] <= active_tol) active.push_back(j);
    const Index na = static_cast<Index>(active.size());
    MatrixXd C(space.dim(), na + space.num_eq());
    for (Index k = 0; k < na; ++k)
      C.col(k) = space.ineq_matrix().row(active[static_cast<std::size_t>(k)]).transpose();
    if (space.num_eq() > 0) C.rightCols(space.num_eq()) = space.eq_matrix().transpose();
    const VectorXd w = detail::nnls_partially_free(C, grad, na);

    VectorXd lambda = VectorXd::Zero(space.num_ineq());
    for (Index k = 0; k < na; ++k) {
      lambda[active[static_cast<std::size_t>(k)]] = w[k];
      if (w[k] <= degenerate_tol) ++out.degenerate;
    }
    VectorXd nu = w.tail(space.num_eq());

    VectorXd stationarity = grad;
    if (space.num_ineq() > 0) stationarity += space.ineq_matrix().transpose() * lambda;
    if (space.num_eq() > 0) stationarity += space.eq_matrix().transpose() * nu;
    double r = stationarity.lpNorm<Eigen::Infinity>();
    if (space.num_ineq() > 0)
      r = std::max(r, lambda.cwiseProduct(slack).lpNorm<Eigen::Infinity>());
    out.kkt_residual = std::max(out.kkt_residual, r);
    out.lambda.push_back(std::move(lambda));
    out.nu.push_back(std::move(nu));
  }
  if (!(out.kkt_residual <= max_residual))
    throw DualRecoveryFailure("dual recovery left KKT residual " +
                              std::to_string(out.kkt_residual));
  return out;
}

/// Called after every accepted outer iteration with the iteration number
/// and the Nikaido-Isoda residual of the new iterate.
using RelaxationObserver = std::function<void(int, double)>;

/// Relaxation algorithm: x ← (1−α)x + α·BR(x) until the Nikaido-Isoda
/// residual is below eq_tol and the best-response step below
/// fixed_point_tol. α is halved for a step that would raise the residual.
///
/// Every iterate is a convex combination of feasible points. When the outer
/// cap is hit the best iterate so far is returned with status
/// kNotConverged; the caller decides what to do with it.
inline EquilibriumPoint relaxation_solve(const GameInstance& game, const VectorXd& pi,
                                         const JointStrategy& init,
                                         const OracleConfig& cfg = OracleConfig{},
                                         const RelaxationObserver& observer = {}) {
  cfg.validate();
  game.check_strategy(init);
  game.check_param(pi);
  if (feasibility_residual(init, game) > 1e-8)
    throw InvalidArgument("relaxation_solve: initial strategy is infeasible");

  JointStrategy x = init;
  auto jr = detail::joint_best_response(game, x, pi, cfg);
  JointStrategy best = x;
  double best_ni = jr.ni, best_fp = jr.fixed_point;
  int k = 0, since_best = 0;
  bool converged = false, monotone = true;
  double step_weight = cfg.relax_weight;
  // in the monotone phase α starts each step at twice the last accepted one
  double trial_weight = cfg.relax_weight;
  for (;; ++k) {
    if (k > 0 && jr.ni <= cfg.eq_tol && jr.fixed_point > cfg.fixed_point_tol &&
        jr.fixed_point > 10.0 * std::sqrt(jr.ni)) {
      // a set-valued best response: the warm start found another optimum
      // far from x, so ask again starting from x itself
      auto cold = detail::joint_best_response(game, x, pi, cfg);
      if (cold.fixed_point < jr.fixed_point) jr = std::move(cold);
    }
    if (jr.ni <= cfg.eq_tol && jr.fixed_point <= cfg.fixed_point_tol) {
      converged = true;
      break;
    }
    if (k >= cfg.max_outer_iters) break;
    double alpha = monotone ? trial_weight : step_weight;
    JointStrategy candidate;
    detail::JointResponse next;
    while (true) {
      candidate = x;
      candidate.values() = (1.0 - alpha) * x.values() + alpha * jr.response.values();
      // successive responses move little, so the last one is a good start
      next = detail::joint_best_response(game, candidate, pi, cfg, &jr.response);
      if (!monotone || next.ni <= jr.ni + 1e-9 || alpha * 0.5 < cfg.min_relax_weight) break;
      alpha *= 0.5;
    }
    trial_weight = std::min(step_weight, 2.0 * alpha);
    x = std::move(candidate);
    jr = std::move(next);
    if (observer) observer(k + 1, jr.ni);
    if (jr.ni < best_ni || (jr.ni == best_ni && jr.fixed_point < best_fp)) {
      best = x;
      best_ni = jr.ni;
      best_fp = jr.fixed_point;
      since_best = 0;
    } else if (++since_best >= cfg.stall_patience) {
      if (!monotone) step_weight = std::max(0.5 * step_weight, cfg.min_relax_weight);
      monotone = false;
      since_best = 0;
    }
  }

  EquilibriumPoint point;
  point.outer_iterations = k;
  if (converged) {
    point.x = std::move(x);
    point.ni_residual = jr.ni;
    point.fixed_point_residual = jr.fixed_point;
  } else {
    point.x = std::move(best);
    point.ni_residual = best_ni;
    point.fixed_point_residual = best_fp;
  }
  point.status = converged ? EquilibriumStatus::kConverged : EquilibriumStatus::kNotConverged;
  try {
    DualSolution duals =
        recover_duals(game, point.x, pi, cfg.active_tol, kInf, cfg.degenerate_tol);
    point.duals_ineq = std::move(duals.lambda);
    point.duals_eq = std::move(duals.nu);
    point.kkt_residual = duals.kkt_residual;
    point.degenerate_constraints = duals.degenerate;
    if (converged && !(point.kkt_residual <= 10.0 * cfg.eq_tol))
      point.status = EquilibriumStatus::kDualRecoveryFailed;
  } catch (const DualRecoveryFailure&) {
    point.status = EquilibriumStatus::kDualRecoveryFailed;
  }
  return point;
}

/// Uniform sample from the bounding box of each strategy space, projected
/// onto the space.
inline JointStrategy random_initialization(const GameInstance& game, Rng& rng,
                                           double extent) {
  JointStrategy x = game.zero_strategy();
  for (Index i = 0; i < game.num_followers(); ++i) {
    const StrategySpace& space = detail::follower(game, i).space;
    const auto [lo, hi] = space.bounding_box(extent);
    VectorXd y(space.dim());
    for (Index j = 0; j < space.dim(); ++j) y[j] = rng.uniform(lo[j], hi[j]);
    x.block(i) = project_to_space(y, space);
  }
  return x;
}

/// The stochastic equilibrium oracle O(π): relaxation from a random feasible
/// initialization drawn with `seed`. Deterministic in (game, π, seed, cfg).
inline EquilibriumPoint sample_equilibrium(const GameInstance& game, const VectorXd& pi,
                                           std::uint64_t seed,
                                           const OracleConfig& cfg = OracleConfig{}) {
  Rng rng(seed);
  const JointStrategy init = random_initialization(game, rng, cfg.init_extent);
  EquilibriumPoint point = relaxation_solve(game, pi, init, cfg);
  point.init_seed = seed;
  return point;
}

}  // namespace stackgrad
