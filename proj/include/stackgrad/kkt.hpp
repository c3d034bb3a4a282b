#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "stackgrad/equilibrium.hpp"
#include "stackgrad/errors.hpp"
#include "stackgrad/model.hpp"

namespace stackgrad {

/// Row/column ranges of one follower inside the concatenated KKT system.
struct KktBlock {
  Index x_offset = 0, x_size = 0;
  Index lambda_offset = 0, lambda_size = 0;
  Index nu_offset = 0, nu_size = 0;
};

/// Concatenated KKT Jacobian M and right-hand side R = [−∇_π F; 0; 0].
///
/// Column (and row) order is [x₁..xₙ | λ₁..λₙ | ν₁..νₙ]: stationarity rows
/// [∇ₓF | Gᵀ | Aᵀ], complementarity rows [Diag(λ)G | Diag(Gx − h) | 0],
/// equality rows [A | 0 | 0], with G and A block diagonal.
struct KktAssembly {
  MatrixXd matrix;
  MatrixXd rhs;
  std::vector<KktBlock> blocks;
  Index strategy_dim = 0;
  Index num_ineq = 0;
  Index num_eq = 0;
  int degenerate_constraints = 0;

  Index size() const { return matrix.rows(); }
};

struct EquilibriumJacobian {
  MatrixXd dx_dpi;
  MatrixXd dlambda_dpi;
  MatrixXd dnu_dpi;
  double condition_estimate = 0.0;
  bool regularized = false;
  double ridge = 0.0;
  /// ‖M·J − R‖∞ of the unregularized system.
  double residual = 0.0;
};

inline KktAssembly assemble_kkt(const GameInstance& game, const EquilibriumPoint& eq,
                                const VectorXd& pi) {
  game.check_strategy(eq.x);
  game.check_param(pi);
  const Index n = game.num_followers();
  require_dims(static_cast<Index>(eq.duals_ineq.size()) == n &&
                   static_cast<Index>(eq.duals_eq.size()) == n,
               "assemble_kkt: equilibrium carries no recovered duals");

  KktAssembly a;
  a.strategy_dim = game.strategy_dim();
  for (const auto& f : game.followers) {
    a.num_ineq += f.space.num_ineq();
    a.num_eq += f.space.num_eq();
  }
  Index xo = 0, lo = a.strategy_dim, no = a.strategy_dim + a.num_ineq;
  for (const auto& f : game.followers) {
    KktBlock b{xo, f.space.dim(), lo, f.space.num_ineq(), no, f.space.num_eq()};
    a.blocks.push_back(b);
    xo += b.x_size;
    lo += b.lambda_size;
    no += b.nu_size;
  }
  const Index L = no;
  a.matrix = MatrixXd::Zero(L, L);
  a.rhs = MatrixXd::Zero(L, game.param_dim());
  a.degenerate_constraints = eq.degenerate_constraints;

  for (Index i = 0; i < n; ++i) {
    const FollowerSpec& spec = game.followers[static_cast<std::size_t>(i)];
    const KktBlock& b = a.blocks[static_cast<std::size_t>(i)];
    const StrategySpace& space = spec.space;
    const VectorXd& lambda = eq.duals_ineq[static_cast<std::size_t>(i)];
    require_dims(lambda.size() == b.lambda_size, "assemble_kkt: λ length");
    require_dims(eq.duals_eq[static_cast<std::size_t>(i)].size() == b.nu_size,
                 "assemble_kkt: ν length");

    for (Index j = 0; j < n; ++j) {
      const KktBlock& bj = a.blocks[static_cast<std::size_t>(j)];
      const MatrixXd h = spec.objective->hessian_block(j, eq.x, pi);
      require_dims(h.rows() == b.x_size && h.cols() == bj.x_size,
                   "assemble_kkt: Hessian block shape");
      a.matrix.block(b.x_offset, bj.x_offset, b.x_size, bj.x_size) = h;
    }
    if (b.lambda_size > 0) {
      const MatrixXd& G = space.ineq_matrix();
      a.matrix.block(b.x_offset, b.lambda_offset, b.x_size, b.lambda_size) = G.transpose();
      // complementarity rows share the λ row range
      a.matrix.block(b.lambda_offset, b.x_offset, b.lambda_size, b.x_size) =
          lambda.asDiagonal() * G;
      const VectorXd slack = G * eq.x.block(i) - space.ineq_rhs();
      a.matrix.block(b.lambda_offset, b.lambda_offset, b.lambda_size, b.lambda_size) =
          slack.asDiagonal();
    }
    if (b.nu_size > 0) {
      const MatrixXd& A = space.eq_matrix();
      a.matrix.block(b.x_offset, b.nu_offset, b.x_size, b.nu_size) = A.transpose();
      a.matrix.block(b.nu_offset, b.x_offset, b.nu_size, b.x_size) = A;
    }
    const MatrixXd cross = spec.objective->param_hessian(eq.x, pi);
    require_dims(cross.rows() == b.x_size && cross.cols() == game.param_dim(),
                 "assemble_kkt: parameter Hessian shape");
    a.rhs.middleRows(b.x_offset, b.x_size) = -cross;
  }
  return a;
}

/// Solves M·[dx; dλ; dν] = R by partial-pivot LU.
///
/// When M is numerically singular (reciprocal condition estimate below
/// 1e-12), or the equilibrium has degenerate complementarity, the system
/// M + ridge·I is solved instead and `regularized` is set. Throws
/// SingularSystem if the regularized solve fails as well.
inline EquilibriumJacobian solve_equilibrium_jacobian(const KktAssembly& asm_,
                                                      double ridge = 1e-8) {
  if (!(ridge >= 0.0)) throw InvalidArgument("ridge must be nonnegative");
  const Index L = asm_.size();
  require_dims(asm_.matrix.cols() == L && asm_.rhs.rows() == L, "KKT system shape");

  EquilibriumJacobian out;
  MatrixXd sol;
  Eigen::PartialPivLU<MatrixXd> lu(asm_.matrix);
  const double rcond = L == 0 ? 1.0 : lu.rcond();
  out.condition_estimate = rcond > 0.0 ? 1.0 / rcond : kInf;
  bool ok = asm_.degenerate_constraints == 0 && out.condition_estimate <= 1e12;
  if (ok) {
    sol = lu.solve(asm_.rhs);
    ok = sol.allFinite();
  }
  if (!ok) {
    const MatrixXd shifted = asm_.matrix + ridge * MatrixXd::Identity(L, L);
    sol = Eigen::PartialPivLU<MatrixXd>(shifted).solve(asm_.rhs);
    if (!sol.allFinite())
      throw SingularSystem("KKT system is singular even after regularization");
    out.regularized = true;
    out.ridge = ridge;
  }
  out.residual = L == 0 ? 0.0 : (asm_.matrix * sol - asm_.rhs).lpNorm<Eigen::Infinity>();
  out.dx_dpi = sol.topRows(asm_.strategy_dim);
  out.dlambda_dpi = sol.middleRows(asm_.strategy_dim, asm_.num_ineq);
  out.dnu_dpi = sol.bottomRows(asm_.num_eq);
  return out;
}

/// Central differences of the equilibrium map around `base`, warm starting
/// every perturbed solve from `base` so they stay on its branch. Throws
/// BranchJump when a perturbed solve lands more than 10·h away, and
/// NonConvergence when one hits its iteration cap.
inline MatrixXd finite_difference_jacobian_at(const GameInstance& game, const VectorXd& pi,
                                              const JointStrategy& base, double h,
                                              const OracleConfig& cfg = OracleConfig::precise()) {
  if (!(h > 0.0)) throw InvalidArgument("finite-difference step must be positive");
  game.check_param(pi);
  MatrixXd J(game.strategy_dim(), game.param_dim());
  for (Index j = 0; j < game.param_dim(); ++j) {
    VectorXd plus = pi, minus = pi;
    plus[j] += h;
    minus[j] -= h;
    const EquilibriumPoint ep = relaxation_solve(game, plus, base, cfg);
    const EquilibriumPoint em = relaxation_solve(game, minus, base, cfg);
    if (ep.status == EquilibriumStatus::kNotConverged ||
        em.status == EquilibriumStatus::kNotConverged)
      throw NonConvergence("perturbed solve for leader coordinate " + std::to_string(j) +
                           " did not converge");
    const double jump = std::max((ep.x.values() - base.values()).lpNorm<Eigen::Infinity>(),
                                 (em.x.values() - base.values()).lpNorm<Eigen::Infinity>());
    if (jump > 10.0 * h)
      throw BranchJump("perturbing leader coordinate " + std::to_string(j) +
                       " moved the equilibrium by " + std::to_string(jump));
    J.col(j) = (ep.x.values() - em.x.values()) / (2.0 * h);
  }
  return J;
}

/// Finite-difference oracle for dx*/dπ at the equilibrium sampled with
/// `seed`; independent of the KKT route.
inline MatrixXd finite_difference_jacobian(const GameInstance& game, const VectorXd& pi,
                                           std::uint64_t seed, double h = 1e-5,
                                           const OracleConfig& cfg = OracleConfig::precise()) {
  const EquilibriumPoint base = sample_equilibrium(game, pi, seed, cfg);
  return finite_difference_jacobian_at(game, pi, base.x, h, cfg);
}

/// Entrywise max |a − b| / max(|a|, |b|) over entries where the larger
/// magnitude reaches `floor`.
inline double max_relative_error(const MatrixXd& a, const MatrixXd& b, double floor = 1e-8) {
  require_dims(a.rows() == b.rows() && a.cols() == b.cols(), "max_relative_error shapes");
  double worst = 0.0;
  for (Index c = 0; c < a.cols(); ++c)
    for (Index r = 0; r < a.rows(); ++r) {
      const double scale = std::max(std::abs(a(r, c)), std::abs(b(r, c)));
      if (scale < floor) continue;
      worst = std::max(worst, std::abs(a(r, c) - b(r, c)) / scale);
    }
  return worst;
}

}  // namespace stackgrad
