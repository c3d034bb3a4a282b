#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "stackgrad/model.hpp"
#include "stackgrad/random.hpp"

namespace stackgrad {

/// One analytic-vs-finite-difference comparison.
struct OracleCheck {
  std::string name;
  double error = 0.0;
};

/// ‖a − b‖∞ / max(‖a‖∞, ‖b‖∞, floor).
inline double normwise_relative_error(const MatrixXd& a, const MatrixXd& b,
                                      double floor = 1e-6) {
  require_dims(a.rows() == b.rows() && a.cols() == b.cols(), "relative error shapes");
  if (a.size() == 0) return 0.0;
  const double scale = std::max({a.lpNorm<Eigen::Infinity>(), b.lpNorm<Eigen::Infinity>(), floor});
  return (a - b).lpNorm<Eigen::Infinity>() / scale;
}

/// Central-difference Jacobian of a vector map, one column per coordinate.
inline MatrixXd central_difference(const std::function<VectorXd(const VectorXd&)>& f,
                                   const VectorXd& at, double h) {
  const VectorXd f0 = f(at);
  MatrixXd J(f0.size(), at.size());
  for (Index j = 0; j < at.size(); ++j) {
    VectorXd p = at, m = at;
    p[j] += h;
    m[j] -= h;
    J.col(j) = (f(p) - f(m)) / (2.0 * h);
  }
  return J;
}

/// Compares every derivative oracle of the game against central differences
/// of the oracle one level below, at strategy x and parameter pi.
inline std::vector<OracleCheck> check_derivative_oracles(const GameInstance& game,
                                                         const JointStrategy& x,
                                                         const VectorXd& pi, double h = 1e-5) {
  game.check_strategy(x);
  game.check_param(pi);
  std::vector<OracleCheck> out;
  const Index n = game.num_followers();
  auto with_x = [&x](const VectorXd& v) { return JointStrategy(x.block_sizes(), v); };

  for (Index i = 0; i < n; ++i) {
    const auto& f = *game.followers[static_cast<std::size_t>(i)].objective;
    const std::string tag = "follower " + std::to_string(i);
    const auto value_in_block = [&](const VectorXd& xi) {
      return VectorXd::Constant(1, f.value(x.with_block(i, xi), pi));
    };
    const MatrixXd fd_grad = central_difference(value_in_block, x.block(i), h);
    out.push_back({tag + " gradient",
                   normwise_relative_error(f.gradient(x, pi).transpose(), fd_grad)});
    for (Index j = 0; j < n; ++j) {
      const auto grad_in_block = [&](const VectorXd& xj) {
        return f.gradient(x.with_block(j, xj), pi);
      };
      out.push_back({tag + " hessian block " + std::to_string(j),
                     normwise_relative_error(f.hessian_block(j, x, pi),
                                             central_difference(grad_in_block, x.block(j), h))});
    }
    const auto grad_in_pi = [&](const VectorXd& p) { return f.gradient(x, p); };
    out.push_back({tag + " parameter hessian",
                   normwise_relative_error(f.param_hessian(x, pi),
                                           central_difference(grad_in_pi, pi, h))});
  }

  const auto& leader = *game.leader.objective;
  const auto f_of_pi = [&](const VectorXd& p) { return VectorXd::Constant(1, leader.value(x, p)); };
  const auto f_of_x = [&](const VectorXd& v) {
    return VectorXd::Constant(1, leader.value(with_x(v), pi));
  };
  out.push_back({"leader grad_pi", normwise_relative_error(leader.grad_pi(x, pi).transpose(),
                                                           central_difference(f_of_pi, pi, h))});
  out.push_back({"leader grad_x",
                 normwise_relative_error(leader.grad_x(x, pi).transpose(),
                                         central_difference(f_of_x, x.values(), h))});
  if (leader.num_constraints() > 0) {
    const auto g_of_pi = [&](const VectorXd& p) { return leader.constraints(x, p); };
    const auto g_of_x = [&](const VectorXd& v) { return leader.constraints(with_x(v), pi); };
    out.push_back({"leader constraints_jac_pi",
                   normwise_relative_error(leader.constraints_jac_pi(x, pi),
                                           central_difference(g_of_pi, pi, h))});
    out.push_back({"leader constraints_jac_x",
                   normwise_relative_error(leader.constraints_jac_x(x, pi),
                                           central_difference(g_of_x, x.values(), h))});
  }
  return out;
}

/// A strictly interior evaluation point: a random feasible strategy pulled
/// 30% of the way toward the projected centre of the bounding box, so every
/// bounded coordinate sits away from its bounds.
inline JointStrategy interior_probe_point(const GameInstance& game, Rng& rng,
                                          double extent = 1.0) {
  JointStrategy x = game.zero_strategy();
  for (Index i = 0; i < game.num_followers(); ++i) {
    const auto& space = game.followers[static_cast<std::size_t>(i)].space;
    const auto [lo, hi] = space.bounding_box(extent);
    VectorXd r(space.dim());
    for (Index k = 0; k < r.size(); ++k) r[k] = rng.uniform(lo[k], hi[k]);
    const VectorXd centre = project_to_space(0.5 * (lo + hi), space);
    x.block(i) = 0.7 * project_to_space(r, space) + 0.3 * centre;
  }
  return x;
}

/// Random leader parameter inside the box; unbounded coordinates are drawn
/// from [lower, lower + 1].
inline VectorXd random_parameter(const GameInstance& game, Rng& rng) {
  const auto& lp = game.leader;
  VectorXd pi(lp.param_dim);
  for (Index k = 0; k < pi.size(); ++k) {
    const double lo = std::isfinite(lp.param_lower[k]) ? lp.param_lower[k] : -1.0;
    const double hi = std::isfinite(lp.param_upper[k]) ? lp.param_upper[k] : lo + 1.0;
    pi[k] = rng.uniform(lo, hi);
  }
  return pi;
}

}  // namespace stackgrad
