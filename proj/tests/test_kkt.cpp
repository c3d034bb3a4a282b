#include <gtest/gtest.h>

#include <memory>

#include "stackgrad/equilibrium.hpp"
#include "stackgrad/errors.hpp"
#include "stackgrad/games/generate.hpp"
#include "stackgrad/games/nfg.hpp"
#include "stackgrad/games/toy.hpp"
#include "stackgrad/gradcheck.hpp"
#include "stackgrad/kkt.hpp"

using namespace stackgrad;
using namespace stackgrad::games;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Index>(v.size()));
  Index k = 0;
  for (double d : v) out[k++] = d;
  return out;
}

EquilibriumPoint solve_precise(const GameInstance& g, const VectorXd& pi, std::uint64_t seed = 1) {
  const auto eq = sample_equilibrium(g, pi, seed, OracleConfig::precise());
  EXPECT_TRUE(eq.converged());
  return eq;
}

double residual_bound(const KktAssembly& a) {
  return 1e-8 * (1.0 + a.rhs.lpNorm<Eigen::Infinity>());
}

/// Two symmetric followers fᵢ = ½(xᵢ − ½xⱼ − πᵢ)² on [−10, 10].
GameInstance symmetric_pair() {
  GameInstance g;
  g.kind = "toy";
  const VectorXd lo = VectorXd::Constant(1, -10.0), hi = VectorXd::Constant(1, 10.0);
  for (Index i = 0; i < 2; ++i) {
    VectorXd c = VectorXd::Constant(2, 0.5), d = VectorXd::Zero(2);
    d[i] = 1.0;
    g.followers.push_back(FollowerSpec{
        i, StrategySpace::box(lo, hi), std::make_shared<LinearQuadraticFollower>(i, c, d)});
  }
  g.leader = LeaderProblem{linear_leader(VectorXd::Ones(2), VectorXd::Zero(2)), 2,
                           VectorXd::Constant(2, -kInf), VectorXd::Constant(2, kInf)};
  return g;
}

/// Two-player 3×3 entropic game whose second payoff is the transpose of the
/// first, so swapping players is a symmetry.
std::shared_ptr<NfgInstance> symmetric_nfg() {
  auto inst = std::make_shared<NfgInstance>();
  inst->actions = {3, 3};
  Rng rng(17);
  VectorXd u(9), ut(9);
  for (Index k = 0; k < 9; ++k) u[k] = rng.uniform(0.0, 1.0);
  for (Index a = 0; a < 3; ++a)
    for (Index b = 0; b < 3; ++b) ut[a * 3 + b] = u[b * 3 + a];
  inst->payoffs = {u, ut};
  return inst;
}

}  // namespace

TEST(AssembleKkt, SingleFollowerScalarBlocks) {
  const GameInstance g = quadratic_single();
  const VectorXd pi = vec({0.4});
  const auto eq = solve_precise(g, pi);
  const auto a = assemble_kkt(g, eq, pi);
  // one primal, two box rows, no equalities
  ASSERT_EQ(a.size(), 3);
  EXPECT_EQ(a.matrix(0, 0), 1.0);
  EXPECT_EQ(a.rhs(0, 0), 1.0);
  EXPECT_EQ(a.rhs.bottomRows(2), MatrixXd::Zero(2, 1));
  // box duals are zero, so complementarity rows carry only the slacks
  EXPECT_EQ(a.matrix.block(1, 0, 2, 1), MatrixXd::Zero(2, 1));
  // Gx − h for −x ≤ 10 and x ≤ 10 at x = 0.4
  EXPECT_NEAR(a.matrix(1, 1), -10.4, 1e-12);
  EXPECT_NEAR(a.matrix(2, 2), -9.6, 1e-12);
  EXPECT_EQ(a.matrix(0, 1), -1.0);
  EXPECT_EQ(a.matrix(0, 2), 1.0);
}

TEST(AssembleKkt, QuadraticPairCrossHessians) {
  const GameInstance g = quadratic_pair();
  const VectorXd pi = vec({1.0});
  const auto a = assemble_kkt(g, solve_precise(g, pi), pi);
  MatrixXd expected(2, 2);
  expected << 1, -0.5, -0.5, 1;
  EXPECT_EQ(a.matrix.topLeftCorner(2, 2), expected);
}

TEST(AssembleKkt, NfgDeskShape) {
  const auto d = generate_instance("nfg", desk_options("nfg"), 1);
  const VectorXd pi = VectorXd::Zero(d.game.param_dim());
  const auto a = assemble_kkt(d.game, sample_equilibrium(d.game, pi, 1), pi);
  EXPECT_EQ(a.size(), 30);
  EXPECT_EQ(a.rhs.rows(), 30);
  EXPECT_EQ(a.rhs.cols(), 81);
  EXPECT_EQ(a.strategy_dim, 9);
  EXPECT_EQ(a.num_ineq, 18);
  EXPECT_EQ(a.num_eq, 3);
}

TEST(AssembleKkt, RejectsMissingDuals) {
  const GameInstance g = quadratic_pair();
  const VectorXd pi = vec({1.0});
  auto eq = solve_precise(g, pi);
  eq.duals_ineq[1] = VectorXd::Zero(5);
  EXPECT_THROW(assemble_kkt(g, eq, pi), DimensionMismatch);
  EXPECT_THROW(assemble_kkt(g, solve_precise(g, pi), vec({1.0, 2.0})), DimensionMismatch);
}

TEST(SolveJacobian, SingleFollowerIdentityResponse) {
  const GameInstance g = quadratic_single();
  const VectorXd pi = vec({0.4});
  const auto eq = solve_precise(g, pi);
  const auto j = solve_equilibrium_jacobian(assemble_kkt(g, eq, pi));
  EXPECT_FALSE(j.regularized);
  EXPECT_NEAR(j.dx_dpi(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(finite_difference_jacobian_at(g, pi, eq.x, 1e-5)(0, 0), 1.0, 1e-6);
}

TEST(SolveJacobian, QuadraticPairClosedForm) {
  const GameInstance g = quadratic_pair();
  const VectorXd pi = vec({1.0});
  const auto j = solve_equilibrium_jacobian(assemble_kkt(g, solve_precise(g, pi), pi));
  EXPECT_NEAR(j.dx_dpi(0, 0), 4.0 / 3.0, 1e-12);
  EXPECT_NEAR(j.dx_dpi(1, 0), 2.0 / 3.0, 1e-12);
  const MatrixXd fd = finite_difference_jacobian(g, pi, 1, 1e-5);
  EXPECT_NEAR(fd(0, 0), 4.0 / 3.0, 1e-4);
  EXPECT_NEAR(fd(1, 0), 2.0 / 3.0, 1e-4);
}

TEST(SolveJacobian, PinnedCoordinateDoesNotMove) {
  // f = ½(x − π)² on [0, 1] with π = 2: x* = 1 and the upper bound carries λ = 1
  const GameInstance g = quadratic_single(0.0, 1.0);
  const VectorXd pi = vec({2.0});
  const auto eq = solve_precise(g, pi);
  ASSERT_EQ(eq.degenerate_constraints, 0);
  EXPECT_NEAR(eq.duals_ineq[0].maxCoeff(), 1.0, 1e-10);
  const auto j = solve_equilibrium_jacobian(assemble_kkt(g, eq, pi));
  EXPECT_FALSE(j.regularized);
  EXPECT_NEAR(j.dx_dpi(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(finite_difference_jacobian_at(g, pi, eq.x, 1e-5)(0, 0), 0.0, 1e-9);
}

TEST(SolveJacobian, DegenerateComplementarityIsRegularized) {
  // π = 1 puts x* on the bound with a zero multiplier
  const GameInstance g = quadratic_single(0.0, 1.0);
  const VectorXd pi = vec({1.0});
  const auto eq = sample_equilibrium(g, pi, 1);
  ASSERT_GT(eq.degenerate_constraints, 0);
  const auto j = solve_equilibrium_jacobian(assemble_kkt(g, eq, pi), 1e-8);
  EXPECT_TRUE(j.regularized);
  EXPECT_EQ(j.ridge, 1e-8);
  EXPECT_TRUE(j.dx_dpi.allFinite());
}

TEST(SolveJacobian, ResidualBoundOnAllDomains) {
  for (const std::string& kind : known_kinds()) {
    const auto d = generate_instance(kind, desk_options(kind), 1);
    Rng rng(3);
    const VectorXd pi = kind == "nfg" ? VectorXd::Zero(d.game.param_dim())
                                      : random_parameter(d.game, rng);
    const auto eq = solve_precise(d.game, pi);
    const auto a = assemble_kkt(d.game, eq, pi);
    const auto j = solve_equilibrium_jacobian(a);
    if (!j.regularized) {
      EXPECT_LE(j.residual, residual_bound(a)) << kind;
    }
    EXPECT_EQ(j.dx_dpi.rows(), d.game.strategy_dim());
    EXPECT_EQ(j.dx_dpi.cols(), d.game.param_dim());
  }
}

TEST(SolveJacobian, RejectsNegativeRidge) {
  const GameInstance g = quadratic_single();
  const VectorXd pi = vec({0.4});
  EXPECT_THROW(solve_equilibrium_jacobian(assemble_kkt(g, solve_precise(g, pi), pi), -1.0),
               InvalidArgument);
}

TEST(FiniteDifference, AgreesOnNfgSeedOne) {
  const auto d = generate_instance("nfg", desk_options("nfg"), 1);
  const VectorXd pi = VectorXd::Zero(d.game.param_dim());
  const auto eq = solve_precise(d.game, pi);
  const auto j = solve_equilibrium_jacobian(assemble_kkt(d.game, eq, pi));
  const MatrixXd fd = finite_difference_jacobian_at(d.game, pi, eq.x, 1e-5);
  EXPECT_LE(max_relative_error(j.dx_dpi, fd, 1e-8), 1e-4);
}

// Entrywise agreement on every seed is checked by the acceptance binary;
// here the normwise error must sit far below the FD truncation scale.
TEST(FiniteDifference, NormwiseAgreementAcrossNfgSeeds) {
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const auto d = generate_instance("nfg", desk_options("nfg"), s);
    const VectorXd pi = VectorXd::Zero(d.game.param_dim());
    const auto eq = solve_precise(d.game, pi);
    const auto j = solve_equilibrium_jacobian(assemble_kkt(d.game, eq, pi));
    const MatrixXd fd = finite_difference_jacobian_at(d.game, pi, eq.x, 1e-5);
    const double err = (j.dx_dpi - fd).lpNorm<Eigen::Infinity>() /
                       j.dx_dpi.lpNorm<Eigen::Infinity>();
    EXPECT_LE(err, 1e-6) << "seed " << s;
  }
}

TEST(FiniteDifference, AgreesOnCyberAndTwoBasin) {
  for (const std::string& kind : {std::string("cyber"), std::string("two_basin")}) {
    const auto d = generate_instance(kind, desk_options(kind), 2);
    Rng rng(8);
    const VectorXd pi = random_parameter(d.game, rng);
    const auto eq = solve_precise(d.game, pi);
    const auto j = solve_equilibrium_jacobian(assemble_kkt(d.game, eq, pi));
    const MatrixXd fd = finite_difference_jacobian_at(d.game, pi, eq.x, 1e-5);
    EXPECT_LE((j.dx_dpi - fd).lpNorm<Eigen::Infinity>(),
              1e-5 * std::max(1.0, j.dx_dpi.lpNorm<Eigen::Infinity>()))
        << kind;
  }
}

// Desk SSG equilibria sit on the effort cap with some coordinates at zero;
// the warm-started perturbed solves must still move off the base point.
TEST(FiniteDifference, AgreesOnSsgWithActiveEffortCap) {
  for (std::uint64_t s : {1u, 2u}) {
    const auto d = generate_instance("ssg", desk_options("ssg"), s);
    Rng rng(s);
    const VectorXd pi = random_parameter(d.game, rng);
    const auto eq = solve_precise(d.game, pi, s);
    ASSERT_TRUE(eq.converged());
    const auto j = solve_equilibrium_jacobian(assemble_kkt(d.game, eq, pi));
    const MatrixXd fd = finite_difference_jacobian_at(d.game, pi, eq.x, 1e-5);
    EXPECT_LE((j.dx_dpi - fd).lpNorm<Eigen::Infinity>(), 1e-5 * j.dx_dpi.lpNorm<Eigen::Infinity>())
        << "seed " << s;
  }
}

TEST(FiniteDifference, BranchJumpFromNonEquilibriumBase) {
  const GameInstance g = quadratic_pair();
  EXPECT_THROW(finite_difference_jacobian_at(g, vec({1.0}), g.zero_strategy(), 1e-5), BranchJump);
}

TEST(FiniteDifference, RejectsNonPositiveStep) {
  const GameInstance g = quadratic_single();
  EXPECT_THROW(finite_difference_jacobian(g, vec({0.4}), 1, 0.0), InvalidArgument);
}

TEST(Symmetry, SymmetricPairSwapsResponses) {
  const GameInstance g = symmetric_pair();
  const VectorXd pi = vec({0.3, 0.3});
  const auto j = solve_equilibrium_jacobian(assemble_kkt(g, solve_precise(g, pi), pi));
  EXPECT_NEAR(j.dx_dpi(0, 0), j.dx_dpi(1, 1), 1e-12);
  EXPECT_NEAR(j.dx_dpi(0, 1), j.dx_dpi(1, 0), 1e-12);
  // closed form: (I − C)⁻¹ with C = [[0, ½], [½, 0]]
  EXPECT_NEAR(j.dx_dpi(0, 0), 4.0 / 3.0, 1e-12);
  EXPECT_NEAR(j.dx_dpi(0, 1), 2.0 / 3.0, 1e-12);
}

TEST(Symmetry, SymmetricNfgPermutesJacobian) {
  const auto inst = symmetric_nfg();
  const GameInstance g = make_nfg_game(inst);
  const Index P = 9;
  // π₂(a, b) = π₁(b, a): subsidies respect the swap
  VectorXd pi(2 * P);
  Rng rng(4);
  for (Index k = 0; k < P; ++k) pi[k] = rng.uniform(0.0, 0.5);
  for (Index a = 0; a < 3; ++a)
    for (Index b = 0; b < 3; ++b) pi[P + a * 3 + b] = pi[b * 3 + a];
  const auto eq = solve_precise(g, pi);
  EXPECT_LE((eq.x.block(0) - eq.x.block(1)).lpNorm<Eigen::Infinity>(), 1e-10);
  const auto j = solve_equilibrium_jacobian(assemble_kkt(g, eq, pi));
  auto swap_pi = [P](Index c) {
    const Index i = c / P, flat = c % P;
    return (1 - i) * P + (flat % 3) * 3 + flat / 3;
  };
  for (Index r = 0; r < 6; ++r)
    for (Index c = 0; c < 2 * P; ++c)
      EXPECT_NEAR(j.dx_dpi(r, c), j.dx_dpi((r + 3) % 6, swap_pi(c)), 1e-10);
}
