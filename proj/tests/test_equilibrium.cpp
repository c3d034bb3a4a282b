#include <gtest/gtest.h>

#include <memory>
#include <set>

#include "stackgrad/equilibrium.hpp"
#include "stackgrad/games/generate.hpp"
#include "stackgrad/gradcheck.hpp"

using namespace stackgrad;
using namespace stackgrad::games;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Index>(v.size()));
  Index k = 0;
  for (double d : v) out[k++] = d;
  return out;
}

GameInstance zero_payoff_nfg(Index n = 3, Index m = 3) {
  auto inst = std::make_shared<NfgInstance>();
  inst->actions.assign(static_cast<std::size_t>(n), m);
  for (Index i = 0; i < n; ++i) inst->payoffs.push_back(VectorXd::Zero(inst->num_profiles()));
  return make_nfg_game(inst);
}

/// Two followers with identical payoffs 1 on the diagonal and no entropy:
/// three pure equilibria (1,1), (2,2), (3,3).
GameInstance identical_interest() {
  auto inst = std::make_shared<NfgInstance>();
  inst->actions = {3, 3};
  const VectorXd diag = vec({1, 0, 0, 0, 1, 0, 0, 0, 1});
  inst->payoffs = {diag, diag};
  inst->risk_lambda = kInf;
  return make_nfg_game(inst);
}

void expect_certified(const EquilibriumPoint& eq, const OracleConfig& cfg) {
  ASSERT_TRUE(eq.converged());
  EXPECT_LE(eq.ni_residual, cfg.eq_tol);
  EXPECT_GE(eq.ni_residual, 0.0);
  EXPECT_LE(eq.kkt_residual, 10.0 * cfg.eq_tol);
  for (const auto& l : eq.duals_ineq) {
    if (l.size() > 0) {
      EXPECT_GE(l.minCoeff(), 0.0);
    }
  }
}

}  // namespace

TEST(BestResponse, EntropyAloneGivesUniform) {
  const GameInstance g = zero_payoff_nfg();
  JointStrategy x = g.zero_strategy();
  for (Index i = 0; i < 3; ++i) x.block(i) = vec({0.7, 0.2, 0.1});
  const auto br = best_response(g, 0, x, VectorXd::Zero(g.param_dim()), 1e-12);
  ASSERT_TRUE(br.converged);
  EXPECT_LE((br.strategy - VectorXd::Constant(3, 1.0 / 3)).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(BestResponse, InteriorQuadraticMinimizer) {
  const GameInstance g = quadratic_single(0.0, 1.0);
  const auto br = best_response(g, 0, g.zero_strategy(), vec({0.4}), 1e-12);
  EXPECT_NEAR(br.strategy[0], 0.4, 1e-12);
}

TEST(BestResponse, FullyInsuredAgentStopsInvesting) {
  const auto d = generate_instance("cyber", desk_options("cyber"), 1);
  const auto inst = std::get<std::shared_ptr<const CyberInstance>>(d.data);
  VectorXd pi(6);
  for (Index i = 0; i < 3; ++i) {
    pi[2 * i] = inst->losses[i];
    pi[2 * i + 1] = 2.0;
  }
  JointStrategy x = d.game.zero_strategy();
  x.values().setConstant(0.5);
  for (Index i = 0; i < 3; ++i)
    EXPECT_EQ(best_response(d.game, i, x, pi, 1e-12).strategy[0], 0.0);
}

TEST(Relaxation, ZeroPayoffNfgIsUniform) {
  const GameInstance g = zero_payoff_nfg();
  const OracleConfig cfg;
  const auto eq = sample_equilibrium(g, VectorXd::Zero(g.param_dim()), 3, cfg);
  expect_certified(eq, cfg);
  EXPECT_LE((eq.x.values() - VectorXd::Constant(9, 1.0 / 3)).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(Relaxation, QuadraticPairClosedForm) {
  const GameInstance g = quadratic_pair();
  const OracleConfig cfg;
  for (double pi : {1.0, -2.5, 4.0}) {
    const auto eq = sample_equilibrium(g, vec({pi}), 1, cfg);
    expect_certified(eq, cfg);
    // independent oracle: plain Jacobi iteration of the linear system
    double a = 0.0, b = 0.0;
    for (int k = 0; k < 200; ++k) {
      const double na = 0.5 * b + pi, nb = 0.5 * a;
      a = na;
      b = nb;
    }
    EXPECT_NEAR(a, 4.0 * pi / 3.0, 1e-12);
    EXPECT_NEAR(eq.x.values()[0], a, 1e-6);
    EXPECT_NEAR(eq.x.values()[1], b, 1e-6);
  }
}

TEST(Relaxation, ConvergedPointIsAFixedPoint) {
  const auto d = generate_instance("nfg", desk_options("nfg"), 4);
  const VectorXd pi = VectorXd::Constant(d.game.param_dim(), 0.1);
  const OracleConfig cfg;
  const auto eq = sample_equilibrium(d.game, pi, 11, cfg);
  expect_certified(eq, cfg);
  const auto again = relaxation_solve(d.game, pi, eq.x, cfg);
  EXPECT_LE(again.outer_iterations, 1);
  EXPECT_LE((again.x.values() - eq.x.values()).lpNorm<Eigen::Infinity>(), cfg.eq_tol);
}

TEST(Relaxation, RejectsInfeasibleInit) {
  const GameInstance g = zero_payoff_nfg();
  EXPECT_THROW(relaxation_solve(g, VectorXd::Zero(g.param_dim()), g.zero_strategy()),
               InvalidArgument);
}

TEST(Relaxation, NiResidualIsMonotoneOnEntropicNfg) {
  const auto d = generate_instance("nfg", desk_options("nfg"), 2);
  const VectorXd pi = VectorXd::Zero(d.game.param_dim());
  Rng rng(5);
  const JointStrategy init = random_initialization(d.game, rng, 1.0);
  std::vector<double> trace{nikaido_isoda_residual(d.game, init, pi)};
  const auto eq = relaxation_solve(d.game, pi, init, OracleConfig{},
                                   [&](int, double ni) { trace.push_back(ni); });
  ASSERT_TRUE(eq.converged());
  for (std::size_t k = 1; k < trace.size(); ++k) EXPECT_LE(trace[k], trace[k - 1] + 1e-9);
}

TEST(Relaxation, ReportsNonConvergenceWithBestIterate) {
  const auto d = generate_instance("nfg", desk_options("nfg"), 1);
  OracleConfig cfg;
  cfg.max_outer_iters = 1;
  const auto eq = sample_equilibrium(d.game, VectorXd::Zero(d.game.param_dim()), 1, cfg);
  EXPECT_EQ(eq.status, EquilibriumStatus::kNotConverged);
  EXPECT_LE(feasibility_residual(eq.x, d.game), 1e-12);
}

TEST(SampleEquilibrium, QreIsSeedIndependent) {
  for (std::uint64_t inst_seed : {1u, 2u, 3u}) {
    const auto d = generate_instance("nfg", desk_options("nfg"), inst_seed);
    const VectorXd pi = VectorXd::Zero(d.game.param_dim());
    const auto ref = sample_equilibrium(d.game, pi, 1);
    for (std::uint64_t s = 2; s <= 10; ++s) {
      const auto eq = sample_equilibrium(d.game, pi, s);
      ASSERT_TRUE(eq.converged());
      EXPECT_LE((eq.x.values() - ref.x.values()).lpNorm<Eigen::Infinity>(), 1e-5)
          << "instance " << inst_seed << " seed " << s;
    }
  }
}

TEST(SampleEquilibrium, IdenticalInterestSeedsReachDifferentPureEquilibria) {
  const GameInstance g = identical_interest();
  const VectorXd pi = VectorXd::Zero(g.param_dim());
  std::set<std::pair<Index, Index>> reached;
  int pure = 0;
  for (std::uint64_t s = 1; s <= 30; ++s) {
    const auto eq = sample_equilibrium(g, pi, s);
    ASSERT_TRUE(eq.converged()) << "seed " << s;
    // a cycle-breaking seed may settle on a mixed equilibrium instead
    EXPECT_LE(nikaido_isoda_residual(g, eq.x, pi), 1e-6);
    Index a, b;
    const double pa = eq.x.block(0).maxCoeff(&a);
    const double pb = eq.x.block(1).maxCoeff(&b);
    if (pa < 1.0 - 1e-6 || pb < 1.0 - 1e-6) continue;
    ++pure;
    EXPECT_EQ(a, b);
    reached.insert({a, b});
  }
  EXPECT_GE(pure, 25);
  EXPECT_GE(reached.size(), 2u);
}

TEST(SampleEquilibrium, BitwiseDeterministic) {
  for (const std::string& kind : {std::string("nfg"), std::string("ssg"), std::string("cyber")}) {
    const auto d = generate_instance(kind, desk_options(kind), 2);
    Rng rng(1);
    const VectorXd pi = random_parameter(d.game, rng);
    const auto a = sample_equilibrium(d.game, pi, 17);
    const auto b = sample_equilibrium(d.game, pi, 17);
    EXPECT_EQ(a.x, b.x) << kind;
    ASSERT_EQ(a.duals_ineq.size(), b.duals_ineq.size());
    for (std::size_t i = 0; i < a.duals_ineq.size(); ++i) {
      EXPECT_EQ(a.duals_ineq[i], b.duals_ineq[i]);
      EXPECT_EQ(a.duals_eq[i], b.duals_eq[i]);
    }
  }
}

TEST(SampleEquilibrium, CertifiedOnAllDomains) {
  const OracleConfig cfg;
  for (const std::string& kind : known_kinds())
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto d = generate_instance(kind, desk_options(kind), seed);
      Rng rng(seed);
      const VectorXd pi = random_parameter(d.game, rng);
      const auto eq = sample_equilibrium(d.game, pi, seed, cfg);
      SCOPED_TRACE(kind + " seed " + std::to_string(seed));
      expect_certified(eq, cfg);
      EXPECT_LE(feasibility_residual(eq.x, d.game), 1e-10);
    }
}

TEST(NikaidoIsoda, ExamplesFromDirectEvaluation) {
  const GameInstance single = quadratic_single(0.0, 1.0);
  EXPECT_NEAR(nikaido_isoda_residual(single, single.zero_strategy(), vec({1.0})), 0.5, 1e-12);
  const GameInstance pair = quadratic_pair();
  EXPECT_NEAR(nikaido_isoda_residual(pair, pair.zero_strategy(), vec({1.0})), 0.5, 1e-12);
  const std::vector<Index> sizes{1, 1};
  const JointStrategy eq(sizes, vec({4.0 / 3.0, 2.0 / 3.0}));
  EXPECT_LE(nikaido_isoda_residual(pair, eq, vec({1.0})), 1e-12);
}

TEST(NikaidoIsoda, NonNegativeOnRandomFeasiblePoints) {
  Rng rng(21);
  int count = 0;
  for (std::uint64_t seed = 1; count < 1000; ++seed) {
    const std::string kind = seed % 3 == 0 ? "two_basin" : "nfg";
    const auto d = generate_instance(kind, desk_options(kind), seed);
    const VectorXd pi = random_parameter(d.game, rng);
    for (int t = 0; t < 50; ++t, ++count)
      ASSERT_GE(nikaido_isoda_residual(d.game, random_initialization(d.game, rng, 1.0), pi), 0.0);
  }
}

TEST(RecoverDuals, InteriorQuadraticHasNoMultipliers) {
  const GameInstance g = quadratic_pair();
  const std::vector<Index> sizes{1, 1};
  const auto duals = recover_duals(g, JointStrategy(sizes, vec({4.0 / 3.0, 2.0 / 3.0})), vec({1.0}));
  for (const auto& l : duals.lambda) EXPECT_EQ(l, VectorXd::Zero(2));
  EXPECT_LE(duals.kkt_residual, 1e-12);
}

TEST(RecoverDuals, UniformQreSimplexMultiplier) {
  const GameInstance g = zero_payoff_nfg();
  JointStrategy x = g.zero_strategy();
  x.values().setConstant(1.0 / 3.0);
  const auto duals = recover_duals(g, x, VectorXd::Zero(g.param_dim()));
  for (Index i = 0; i < 3; ++i) {
    ASSERT_EQ(duals.nu[static_cast<std::size_t>(i)].size(), 1);
    EXPECT_NEAR(duals.nu[static_cast<std::size_t>(i)][0], -(1.0 + std::log(1.0 / 3.0)), 1e-12);
    EXPECT_EQ(duals.lambda[static_cast<std::size_t>(i)], VectorXd::Zero(6));
  }
}

TEST(RecoverDuals, PinnedVertexHasSignedMultipliers) {
  auto inst = std::make_shared<NfgInstance>();
  inst->actions = {3};
  inst->payoffs = {vec({5, 0, 0})};
  inst->risk_lambda = kInf;
  const GameInstance g = make_nfg_game(inst);
  const OracleConfig cfg;
  const auto eq = sample_equilibrium(g, VectorXd::Zero(3), 1, cfg);
  expect_certified(eq, cfg);
  // relaxation reaches the vertex geometrically, never exactly
  EXPECT_LE((eq.x.values() - vec({1, 0, 0})).lpNorm<Eigen::Infinity>(), 1e-9);
  const auto& space = g.followers[0].space;
  const VectorXd& l = eq.duals_ineq[0];
  const VectorXd slack = space.ineq_rhs() - space.ineq_matrix() * eq.x.values();
  EXPECT_LE(l.cwiseProduct(slack).lpNorm<Eigen::Infinity>(), 1e-9);
  // the upper bounds of the unused actions have unit slack
  EXPECT_EQ(l[4], 0.0);
  EXPECT_EQ(l[5], 0.0);
  // stationarity rebuilt independently: ∇f + Gᵀλ + Aᵀν = 0 with ∇f = (−5, 0, 0)
  const VectorXd lhs = vec({-5, 0, 0}) + space.ineq_matrix().transpose() * l +
                       space.eq_matrix().transpose() * eq.duals_eq[0];
  EXPECT_LE(lhs.lpNorm<Eigen::Infinity>(), 1e-9);
}

TEST(RecoverDuals, FailsAwayFromEquilibrium) {
  const GameInstance g = quadratic_pair();
  EXPECT_THROW(recover_duals(g, g.zero_strategy(), vec({1.0})), DualRecoveryFailure);
}

TEST(NnlsPartiallyFree, MatchesHandSolution) {
  // min ‖C w + d‖ with w₀ ≥ 0 and w₁ free: unconstrained optimum has w₀ < 0
  MatrixXd C(2, 2);
  C << 1, 0, 0, 1;
  const VectorXd w = stackgrad::detail::nnls_partially_free(C, vec({1.0, -2.0}), 1);
  EXPECT_EQ(w[0], 0.0);
  EXPECT_NEAR(w[1], 2.0, 1e-14);
}
