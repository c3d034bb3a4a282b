#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stackgrad/errors.hpp"

namespace stackgrad {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Polyhedral strategy set {x : A x = b, G x <= h}.
///
/// Construction checks that A has full row rank and that the set is
/// nonempty (one projection must succeed). Spaces made only of coordinate
/// bounds plus at most one all-ones row are recognized so projection can
/// take a closed-form path.
class StrategySpace {
 public:
  /// Bounds plus an optional sum row, as recognized from the raw matrices.
  struct SeparableForm {
    VectorXd lower;
    VectorXd upper;
    std::optional<double> sum_eq;   // 1ᵀx = s
    std::optional<double> sum_cap;  // 1ᵀx <= c
  };

  StrategySpace(MatrixXd eq_matrix, VectorXd eq_rhs, MatrixXd ineq_matrix,
                VectorXd ineq_rhs);

  /// {x >= 0, 1ᵀx = 1}, with the redundant x <= 1 rows when requested.
  static StrategySpace simplex(Index dim, bool with_upper_bounds = true);
  /// Coordinate box; infinite bounds produce no constraint row.
  static StrategySpace box(const VectorXd& lower, const VectorXd& upper);
  /// Box with an additional cap on the coordinate sum.
  static StrategySpace capped_box(const VectorXd& lower, const VectorXd& upper,
                                  double sum_cap);

  Index dim() const { return dim_; }
  Index num_eq() const { return A_.rows(); }
  Index num_ineq() const { return G_.rows(); }
  const MatrixXd& eq_matrix() const { return A_; }
  const VectorXd& eq_rhs() const { return b_; }
  const MatrixXd& ineq_matrix() const { return G_; }
  const VectorXd& ineq_rhs() const { return h_; }

  const std::optional<SeparableForm>& separable() const { return separable_; }
  bool is_probability_simplex() const { return simplex_; }

  /// Per-coordinate bounding box; coordinates without a finite bound get
  /// [anchor - extent, anchor + extent] around the nearest known bound.
  std::pair<VectorXd, VectorXd> bounding_box(double extent) const;

  /// max(‖Ax − b‖∞, ‖max(Gx − h, 0)‖∞).
  double residual(const VectorXd& x) const;

 private:
  StrategySpace() = default;
  void recognize_structure();
  void validate();

  Index dim_ = 0;
  MatrixXd A_;
  VectorXd b_;
  MatrixXd G_;
  VectorXd h_;
  std::optional<SeparableForm> separable_;
  bool simplex_ = false;
};

VectorXd project_to_space(const VectorXd& y, const StrategySpace& space,
                          double tol = 1e-12);

namespace detail {

/// Euclidean projection onto the probability-type simplex {x >= 0, 1ᵀx = s}
/// by sorting.
inline VectorXd project_simplex_sorted(const VectorXd& y, double s) {
  const Index n = y.size();
  std::vector<double> u(y.data(), y.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double tau = 0.0;
  for (Index j = 0; j < n; ++j) {
    cumulative += u[j];
    const double candidate = (cumulative - s) / static_cast<double>(j + 1);
    if (u[j] - candidate > 0.0) tau = candidate;
  }
  return (y.array() - tau).max(0.0).matrix();
}

/// Projection onto {l <= x <= u, 1ᵀx = s} (or 1ᵀx <= s when `cap`):
/// x = clamp(y − τ, l, u) with τ found exactly on the piecewise-linear
/// sum function by searching its sorted breakpoints.
inline VectorXd project_bounded_sum(const VectorXd& y, const VectorXd& lower,
                                    const VectorXd& upper,
                                    std::optional<double> total, bool cap) {
  const Index n = y.size();
  if ((lower.array() > upper.array()).any())
    throw InfeasibleSpace("bounded-sum projection: lower bound above upper bound");
  auto clamp_at = [&](double tau) {
    VectorXd x(n);
    for (Index j = 0; j < n; ++j)
      x[j] = std::clamp(y[j] - tau, lower[j], upper[j]);
    return x;
  };
  if (!total) return clamp_at(0.0);
  const double s = *total;
  if (cap) {
    VectorXd x = clamp_at(0.0);
    if (x.sum() <= s) return x;
  }
  if (lower.sum() > s || upper.sum() < s)
    throw InfeasibleSpace("bounded-sum projection: sum target outside bounds");

  auto sum_at = [&](double tau) {
    double acc = 0.0;
    for (Index j = 0; j < n; ++j) acc += std::clamp(y[j] - tau, lower[j], upper[j]);
    return acc;
  };
  auto slope_count = [&](double tau) {
    Index free = 0;
    for (Index j = 0; j < n; ++j) {
      const double v = y[j] - tau;
      if (v > lower[j] && v < upper[j]) ++free;
    }
    return free;
  };

  std::vector<double> bps;
  bps.reserve(2 * n);
  for (Index j = 0; j < n; ++j) {
    if (std::isfinite(lower[j])) bps.push_back(y[j] - lower[j]);
    if (std::isfinite(upper[j])) bps.push_back(y[j] - upper[j]);
  }
  std::sort(bps.begin(), bps.end());
  bps.erase(std::unique(bps.begin(), bps.end()), bps.end());

  double tau = 0.0;
  if (bps.empty() || sum_at(bps.front()) < s) {
    // left of every breakpoint the sum grows with the unbounded coordinates
    const double ref = bps.empty() ? 0.0 : bps.front();
    const Index free = slope_count(ref - 1.0);
    if (free == 0) throw InfeasibleSpace("bounded-sum projection: no slack");
    tau = ref - (s - sum_at(ref)) / static_cast<double>(free);
  } else if (sum_at(bps.back()) > s) {
    const double ref = bps.back();
    const Index free = slope_count(ref + 1.0);
    if (free == 0) throw InfeasibleSpace("bounded-sum projection: no slack");
    tau = ref + (sum_at(ref) - s) / static_cast<double>(free);
  } else {
    // sum_at is nonincreasing: find the segment [lo, hi] bracketing s
    std::size_t lo = 0, hi = bps.size() - 1;
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      if (sum_at(bps[mid]) >= s)
        lo = mid;
      else
        hi = mid;
    }
    const double s_lo = sum_at(bps[lo]);
    const double s_hi = sum_at(bps[hi]);
    if (s_lo == s_hi)
      tau = bps[lo];
    else
      tau = bps[lo] + (s_lo - s) * (bps[hi] - bps[lo]) / (s_lo - s_hi);
  }
  return clamp_at(tau);
}

/// Dual active-set method of Goldfarb and Idnani specialised to the
/// identity Hessian: min ½‖x − y‖² s.t. Ax = b, Gx <= h.
///
/// Starts from the unconstrained minimiser and adds the most violated
/// constraint at each outer step, dropping active constraints whose
/// multipliers would turn negative.
inline VectorXd project_dual_active_set(const VectorXd& y,
                                        const StrategySpace& space,
                                        double tol) {
  const Index n = y.size();
  const MatrixXd& A = space.eq_matrix();
  const VectorXd& b = space.eq_rhs();
  const MatrixXd& G = space.ineq_matrix();
  const VectorXd& h = space.ineq_rhs();

  struct Active {
    Index row;
    bool equality;
  };
  std::vector<Active> active;
  std::vector<double> mult;
  VectorXd x = y;
  // add/drop budget
  const long cap = std::max<long>(10 * n, 10) + 2 * (A.rows() + G.rows());
  long steps = 0;

  // Normal and rhs in the n·x >= e orientation.
  auto constraint = [&](const Active& c, VectorXd& normal, double& rhs) {
    if (c.equality) {
      normal = A.row(c.row).transpose();
      rhs = b[c.row];
    } else {
      normal = -G.row(c.row).transpose();
      rhs = -h[c.row];
    }
  };

  auto add_constraint = [&](Active p, VectorXd normal, double rhs) {
    double viol = normal.dot(x) - rhs;
    if (p.equality && viol > 0.0) {
      normal = -normal;
      rhs = -rhs;
      viol = -viol;
    }
    double u_p = 0.0;
    while (true) {
      if (++steps > cap)
        throw NonConvergence("dual active-set projection exceeded iteration cap");
      VectorXd z = normal;
      VectorXd r;
      if (!active.empty()) {
        MatrixXd N(n, static_cast<Index>(active.size()));
        for (std::size_t k = 0; k < active.size(); ++k) {
          VectorXd nk;
          double ek;
          constraint(active[k], nk, ek);
          // equalities may have been added with flipped orientation; the
          // sign is absorbed by the free multiplier
          N.col(static_cast<Index>(k)) = nk;
        }
        r = N.householderQr().solve(normal);
        z = normal - N * r;
      }
      double t1 = kInf;
      std::size_t drop = active.size();
      for (std::size_t k = 0; k < active.size(); ++k) {
        if (active[k].equality) continue;
        if (r[static_cast<Index>(k)] > 1e-14) {
          const double ratio = mult[k] / r[static_cast<Index>(k)];
          if (ratio < t1) {
            t1 = ratio;
            drop = k;
          }
        }
      }
      const double zz = z.squaredNorm();
      const double t2 =
          zz <= 1e-28 * std::max(1.0, normal.squaredNorm()) ? kInf : -viol / zz;
      if (!std::isfinite(t1) && !std::isfinite(t2))
        throw InfeasibleSpace("strategy space is empty");
      if (!std::isfinite(t2)) {
        for (std::size_t k = 0; k < active.size(); ++k)
          mult[k] -= t1 * r[static_cast<Index>(k)];
        u_p += t1;
        active.erase(active.begin() + static_cast<long>(drop));
        mult.erase(mult.begin() + static_cast<long>(drop));
        continue;
      }
      const double t = std::min(t1, t2);
      x += t * z;
      for (std::size_t k = 0; k < active.size(); ++k)
        mult[k] -= t * r[static_cast<Index>(k)];
      u_p += t;
      if (t2 <= t1) {
        active.push_back(p);
        mult.push_back(u_p);
        return;
      }
      active.erase(active.begin() + static_cast<long>(drop));
      mult.erase(mult.begin() + static_cast<long>(drop));
      viol = normal.dot(x) - rhs;
    }
  };

  for (Index k = 0; k < A.rows(); ++k) {
    Active p{k, true};
    VectorXd normal;
    double rhs;
    constraint(p, normal, rhs);
    add_constraint(p, normal, rhs);
  }
  while (true) {
    Index worst = -1;
    double worst_viol = -tol;
    for (Index j = 0; j < G.rows(); ++j) {
      const double v = h[j] - G.row(j).dot(x);
      if (v < worst_viol) {
        bool is_active = false;
        for (const auto& c : active)
          if (!c.equality && c.row == j) is_active = true;
        if (is_active) continue;
        worst_viol = v;
        worst = j;
      }
    }
    if (worst < 0) break;
    Active p{worst, false};
    VectorXd normal;
    double rhs;
    constraint(p, normal, rhs);
    add_constraint(p, normal, rhs);
  }
  return x;
}

}  // namespace detail

inline StrategySpace::StrategySpace(MatrixXd eq_matrix, VectorXd eq_rhs,
                                    MatrixXd ineq_matrix, VectorXd ineq_rhs)
    : A_(std::move(eq_matrix)),
      b_(std::move(eq_rhs)),
      G_(std::move(ineq_matrix)),
      h_(std::move(ineq_rhs)) {
  dim_ = std::max(A_.cols(), G_.cols());
  if (A_.rows() == 0) A_.resize(0, dim_);
  if (G_.rows() == 0) G_.resize(0, dim_);
  validate();
}

inline void StrategySpace::validate() {
  if (dim_ <= 0) throw InvalidArgument("strategy space needs a positive dimension");
  require_dims(A_.cols() == dim_ && G_.cols() == dim_,
               "strategy space: constraint matrices disagree on dimension");
  require_dims(b_.size() == A_.rows(), "strategy space: eq_rhs length");
  require_dims(h_.size() == G_.rows(), "strategy space: ineq_rhs length");
  if (A_.rows() > 0) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(A_);
    qr.setThreshold(1e-10);
    if (qr.rank() != A_.rows())
      throw InvalidArgument("strategy space: equality matrix is rank deficient");
  }
  recognize_structure();
  const VectorXd probe = project_to_space(VectorXd::Zero(dim_), *this, 1e-12);
  if (residual(probe) > 1e-8) throw InfeasibleSpace("strategy space is empty");
}

inline void StrategySpace::recognize_structure() {
  SeparableForm form{VectorXd::Constant(dim_, -kInf), VectorXd::Constant(dim_, kInf),
                     std::nullopt, std::nullopt};
  auto ones_multiple = [&](const auto& row, double& scale) {
    scale = row[0];
    if (scale <= 0.0) return false;
    for (Index j = 1; j < row.size(); ++j)
      if (std::abs(row[j] - scale) > 1e-15 * scale) return false;
    return true;
  };
  if (A_.rows() > 1) return;
  if (A_.rows() == 1) {
    double scale;
    if (!ones_multiple(A_.row(0), scale)) return;
    form.sum_eq = b_[0] / scale;
  }
  for (Index r = 0; r < G_.rows(); ++r) {
    Index nonzero = 0, col = -1;
    for (Index j = 0; j < dim_; ++j)
      if (G_(r, j) != 0.0) {
        ++nonzero;
        col = j;
      }
    if (nonzero == 1) {
      const double a = G_(r, col);
      if (a > 0)
        form.upper[col] = std::min(form.upper[col], h_[r] / a);
      else
        form.lower[col] = std::max(form.lower[col], h_[r] / a);
      continue;
    }
    double scale;
    if (dim_ > 1 && nonzero == dim_ && ones_multiple(G_.row(r), scale) &&
        !form.sum_cap) {
      form.sum_cap = h_[r] / scale;
      continue;
    }
    return;
  }
  if (form.sum_eq && form.sum_cap) return;
  separable_ = form;
  simplex_ = form.sum_eq.has_value() && (form.lower.array() == 0.0).all() &&
             (form.upper.array() >= *form.sum_eq).all();
}

inline StrategySpace StrategySpace::simplex(Index dim, bool with_upper_bounds) {
  MatrixXd G(with_upper_bounds ? 2 * dim : dim, dim);
  VectorXd h(G.rows());
  G.topRows(dim) = -MatrixXd::Identity(dim, dim);
  h.head(dim).setZero();
  if (with_upper_bounds) {
    G.bottomRows(dim) = MatrixXd::Identity(dim, dim);
    h.tail(dim).setOnes();
  }
  return StrategySpace(MatrixXd::Ones(1, dim), VectorXd::Ones(1), std::move(G),
                       std::move(h));
}

inline StrategySpace StrategySpace::box(const VectorXd& lower, const VectorXd& upper) {
  require_dims(lower.size() == upper.size(), "box bounds length");
  const Index n = lower.size();
  MatrixXd G = MatrixXd::Zero(0, n);
  std::vector<VectorXd> g_rows;
  std::vector<double> h_vals;
  for (Index j = 0; j < n; ++j) {
    if (std::isfinite(lower[j])) {
      VectorXd r = VectorXd::Zero(n);
      r[j] = -1.0;
      g_rows.push_back(r);
      h_vals.push_back(-lower[j]);
    }
  }
  for (Index j = 0; j < n; ++j) {
    if (std::isfinite(upper[j])) {
      VectorXd r = VectorXd::Zero(n);
      r[j] = 1.0;
      g_rows.push_back(r);
      h_vals.push_back(upper[j]);
    }
  }
  G.resize(static_cast<Index>(g_rows.size()), n);
  VectorXd h(static_cast<Index>(h_vals.size()));
  for (std::size_t r = 0; r < g_rows.size(); ++r) {
    G.row(static_cast<Index>(r)) = g_rows[r].transpose();
    h[static_cast<Index>(r)] = h_vals[r];
  }
  return StrategySpace(MatrixXd::Zero(0, n), VectorXd::Zero(0), std::move(G),
                       std::move(h));
}

inline StrategySpace StrategySpace::capped_box(const VectorXd& lower,
                                               const VectorXd& upper, double sum_cap) {
  StrategySpace base = box(lower, upper);
  MatrixXd G(base.G_.rows() + 1, base.dim_);
  G << base.G_, MatrixXd::Ones(1, base.dim_);
  VectorXd h(base.h_.size() + 1);
  h << base.h_, sum_cap;
  return StrategySpace(MatrixXd::Zero(0, base.dim_), VectorXd::Zero(0), std::move(G),
                       std::move(h));
}

inline double StrategySpace::residual(const VectorXd& x) const {
  require_dims(x.size() == dim_, "strategy dimension does not match its space");
  double r = 0.0;
  if (A_.rows() > 0) r = (A_ * x - b_).lpNorm<Eigen::Infinity>();
  if (G_.rows() > 0) r = std::max(r, (G_ * x - h_).cwiseMax(0.0).maxCoeff());
  return r;
}

inline std::pair<VectorXd, VectorXd> StrategySpace::bounding_box(double extent) const {
  VectorXd lo = VectorXd::Constant(dim_, -kInf);
  VectorXd hi = VectorXd::Constant(dim_, kInf);
  for (Index r = 0; r < G_.rows(); ++r) {
    Index nonzero = 0, col = -1;
    for (Index j = 0; j < dim_; ++j)
      if (G_(r, j) != 0.0) {
        ++nonzero;
        col = j;
      }
    if (nonzero != 1) continue;
    const double v = h_[r] / G_(r, col);
    if (G_(r, col) > 0)
      hi[col] = std::min(hi[col], v);
    else
      lo[col] = std::max(lo[col], v);
  }
  if (separable_ && separable_->sum_eq && std::isfinite(lo.sum())) {
    // 1ᵀx = s with finite lower bounds caps every coordinate
    const double slack = *separable_->sum_eq - lo.sum();
    for (Index j = 0; j < dim_; ++j) hi[j] = std::min(hi[j], lo[j] + slack);
  }
  for (Index j = 0; j < dim_; ++j) {
    if (!std::isfinite(lo[j]) && !std::isfinite(hi[j])) {
      lo[j] = -extent;
      hi[j] = extent;
    } else if (!std::isfinite(lo[j])) {
      lo[j] = hi[j] - extent;
    } else if (!std::isfinite(hi[j])) {
      hi[j] = lo[j] + extent;
    }
  }
  return {lo, hi};
}

/// Euclidean projection onto `space`.
///
/// Simplices use the sort-based closed form, other bound-plus-sum spaces the
/// exact breakpoint search, and general polytopes the dual active-set QP.
/// Throws InfeasibleSpace or NonConvergence.
inline VectorXd project_to_space(const VectorXd& y, const StrategySpace& space,
                                 double tol) {
  require_dims(y.size() == space.dim(), "project_to_space: dimension mismatch");
  if (!(tol > 0.0)) throw InvalidArgument("project_to_space: tol must be positive");
  if (space.is_probability_simplex())
    return detail::project_simplex_sorted(y, *space.separable()->sum_eq);
  if (const auto& form = space.separable()) {
    if (form->sum_eq)
      return detail::project_bounded_sum(y, form->lower, form->upper, form->sum_eq,
                                         false);
    return detail::project_bounded_sum(y, form->lower, form->upper, form->sum_cap,
                                       true);
  }
  return detail::project_dual_active_set(y, space, tol);
}

}  // namespace stackgrad
