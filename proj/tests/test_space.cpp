#include <gtest/gtest.h>

#include <vector>

#include "stackgrad/errors.hpp"
#include "stackgrad/model.hpp"
#include "stackgrad/random.hpp"
#include "stackgrad/space.hpp"

using namespace stackgrad;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Index>(v.size()));
  Index k = 0;
  for (double d : v) out[k++] = d;
  return out;
}

/// {x ≥ 0, x₁ + 2x₂ + x₃ = 1, x₁ − x₂ ≤ 0.2}: not separable, so it goes
/// through the general QP.
StrategySpace skewed_polytope() {
  MatrixXd A(1, 3);
  A << 1, 2, 1;
  MatrixXd G(4, 3);
  G << -1, 0, 0, 0, -1, 0, 0, 0, -1, 1, -1, 0;
  return StrategySpace(A, vec({1.0}), G, vec({0, 0, 0, 0.2}));
}

/// Hand-computed vertices of skewed_polytope().
std::vector<VectorXd> skewed_vertices() {
  const double x2 = 0.8 / 3.0;
  return {vec({0, 0, 1}), vec({0, 0.5, 0}), vec({0.2, 0, 0.8}), vec({x2 + 0.2, x2, 0})};
}

VectorXd random_convex_combination(const std::vector<VectorXd>& pts, Rng& rng) {
  VectorXd w(static_cast<Index>(pts.size()));
  for (Index k = 0; k < w.size(); ++k) w[k] = -std::log(1.0 - rng.canonical());
  w /= w.sum();
  VectorXd z = VectorXd::Zero(pts[0].size());
  for (std::size_t k = 0; k < pts.size(); ++k) z += w[static_cast<Index>(k)] * pts[k];
  return z;
}

VectorXd random_vector(Index n, Rng& rng, double scale) {
  VectorXd y(n);
  for (Index k = 0; k < n; ++k) y[k] = rng.uniform(-scale, scale);
  return y;
}

}  // namespace

TEST(Projection, SimplexSymmetricPoint) {
  const VectorXd p = project_to_space(vec({0.5, 0.5, 0.5}), StrategySpace::simplex(3));
  EXPECT_NEAR((p - VectorXd::Constant(3, 1.0 / 3.0)).lpNorm<Eigen::Infinity>(), 0.0, 1e-15);
}

TEST(Projection, SimplexVertexIsFixed) {
  const VectorXd p = project_to_space(vec({1, 0, 0}), StrategySpace::simplex(3));
  EXPECT_EQ(p, vec({1, 0, 0}));
}

TEST(Projection, BoxClamps) {
  const auto box = StrategySpace::box(VectorXd::Zero(2), VectorXd::Ones(2));
  EXPECT_EQ(project_to_space(vec({2.0, -0.5}), box), vec({1.0, 0.0}));
}

TEST(Projection, SimplexRecognized) {
  EXPECT_TRUE(StrategySpace::simplex(4).is_probability_simplex());
  EXPECT_TRUE(StrategySpace::simplex(4, false).is_probability_simplex());
  EXPECT_FALSE(skewed_polytope().separable().has_value());
  EXPECT_TRUE(StrategySpace::capped_box(VectorXd::Zero(3), VectorXd::Ones(3), 1.5)
                  .separable()
                  ->sum_cap.has_value());
}

TEST(Projection, SimplexShapeMatchesKktCount) {
  const auto s = StrategySpace::simplex(3);
  EXPECT_EQ(s.num_eq(), 1);
  EXPECT_EQ(s.num_ineq(), 6);
}

TEST(Projection, IdempotentOnAllPaths) {
  Rng rng(11);
  const std::vector<StrategySpace> spaces{
      StrategySpace::simplex(5),
      StrategySpace::box(VectorXd::Constant(4, -1.0), VectorXd::Constant(4, 2.0)),
      StrategySpace::capped_box(VectorXd::Zero(6), VectorXd::Ones(6), 2.5),
      skewed_polytope()};
  for (const auto& s : spaces)
    for (int trial = 0; trial < 200; ++trial) {
      const VectorXd p = project_to_space(random_vector(s.dim(), rng, 3.0), s);
      EXPECT_LE(s.residual(p), 1e-10);
      EXPECT_LE((project_to_space(p, s) - p).lpNorm<Eigen::Infinity>(), 2e-12);
    }
}

// Optimality is checked against feasible points built independently of the
// projection: normalized exponentials for the simplex, uniform draws for the
// capped box (rejecting over-cap points) and vertex mixtures for the
// general polytope.
TEST(Projection, NoFeasiblePointIsCloserSimplex) {
  Rng rng(1);
  const auto s = StrategySpace::simplex(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const VectorXd y = random_vector(4, rng, 2.0);
    VectorXd z(4);
    for (Index k = 0; k < 4; ++k) z[k] = -std::log(1.0 - rng.canonical());
    z /= z.sum();
    const VectorXd p = project_to_space(y, s);
    ASSERT_LE((p - y).norm(), (z - y).norm() + 1e-12);
    // variational inequality of the projection
    ASSERT_LE((y - p).dot(z - p), 1e-12);
  }
}

TEST(Projection, NoFeasiblePointIsCloserCappedBox) {
  Rng rng(2);
  const auto s = StrategySpace::capped_box(VectorXd::Zero(5), VectorXd::Ones(5), 2.0);
  int trials = 0;
  while (trials < 1000) {
    VectorXd z(5);
    for (Index k = 0; k < 5; ++k) z[k] = rng.canonical();
    if (z.sum() > 2.0) continue;
    ++trials;
    const VectorXd y = random_vector(5, rng, 2.0);
    const VectorXd p = project_to_space(y, s);
    ASSERT_LE((p - y).norm(), (z - y).norm() + 1e-12);
    ASSERT_LE((y - p).dot(z - p), 1e-12);
  }
}

TEST(Projection, NoFeasiblePointIsCloserGeneralPolytope) {
  Rng rng(3);
  const auto s = skewed_polytope();
  const auto verts = skewed_vertices();
  for (const auto& v : verts) ASSERT_LE(s.residual(v), 1e-15);
  for (int trial = 0; trial < 1000; ++trial) {
    const VectorXd y = random_vector(3, rng, 2.0);
    const VectorXd z = random_convex_combination(verts, rng);
    const VectorXd p = project_to_space(y, s);
    ASSERT_LE(s.residual(p), 1e-10);
    ASSERT_LE((p - y).norm(), (z - y).norm() + 1e-10);
    ASSERT_LE((y - p).dot(z - p), 1e-10);
  }
}

TEST(Projection, GeneralPathAgreesWithClosedForm) {
  // a redundant pairwise cap hides the simplex from the pattern matcher
  MatrixXd G = MatrixXd::Zero(5, 4);
  G.topRows(4) = -MatrixXd::Identity(4, 4);
  G(4, 0) = G(4, 1) = 1.0;
  const StrategySpace general(MatrixXd::Ones(1, 4), vec({1.0}), G, vec({0, 0, 0, 0, 5}));
  ASSERT_FALSE(general.separable().has_value());
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const VectorXd y = random_vector(4, rng, 3.0);
    EXPECT_LE((project_to_space(y, general) - project_to_space(y, StrategySpace::simplex(4)))
                  .lpNorm<Eigen::Infinity>(),
              1e-10);
  }
}

TEST(Space, RejectsEmptyPolytope) {
  MatrixXd G(2, 1);
  G << 1, -1;
  EXPECT_THROW(StrategySpace(MatrixXd::Zero(0, 1), VectorXd::Zero(0), G, vec({-1, -1})),
               InfeasibleSpace);
  EXPECT_THROW(StrategySpace::box(vec({1.0}), vec({0.0})), InfeasibleSpace);
}

TEST(Space, RejectsRankDeficientEqualities) {
  MatrixXd A(2, 2);
  A << 1, 1, 2, 2;
  EXPECT_THROW(StrategySpace(A, vec({1, 2}), MatrixXd::Zero(0, 2), VectorXd::Zero(0)),
               InvalidArgument);
}

TEST(Space, RejectsShapeMismatch) {
  EXPECT_THROW(StrategySpace(MatrixXd::Ones(1, 2), vec({1, 2}), MatrixXd::Zero(0, 2),
                             VectorXd::Zero(0)),
               DimensionMismatch);
  EXPECT_THROW(project_to_space(vec({1, 2}), StrategySpace::simplex(3)), DimensionMismatch);
}

TEST(Feasibility, ResidualExamples) {
  GameInstance g;
  g.followers.push_back(FollowerSpec{0, StrategySpace::simplex(3), nullptr});
  const std::vector<Index> sizes{3};
  EXPECT_EQ(feasibility_residual(JointStrategy(sizes, vec({0.2, 0.3, 0.5})), g), 0.0);
  EXPECT_NEAR(feasibility_residual(JointStrategy(sizes, vec({0.6, 0.6, -0.2})), g), 0.2, 1e-15);
  EXPECT_NEAR(feasibility_residual(JointStrategy(sizes, vec({0.5, 0.5, 0.5})), g), 0.5, 1e-15);
  EXPECT_THROW(feasibility_residual(JointStrategy(std::vector<Index>{2}), g), DimensionMismatch);
}

TEST(JointStrategy, SplitConcatenateRoundTrip) {
  Rng rng(5);
  const std::vector<Index> sizes{2, 3, 1};
  const JointStrategy x(sizes, random_vector(6, rng, 1.0));
  const auto blocks = x.split();
  ASSERT_EQ(blocks.size(), 3u);
  EXPECT_EQ(JointStrategy::concatenate(blocks), x);
  EXPECT_EQ(x.block(1), x.values().segment(2, 3));
  EXPECT_THROW(JointStrategy(sizes, VectorXd::Zero(5)), DimensionMismatch);
}

TEST(JointStrategy, WithBlockReplacesOnlyThatBlock) {
  const std::vector<Index> sizes{2, 2};
  const JointStrategy x(sizes, vec({1, 2, 3, 4}));
  const JointStrategy y = x.with_block(1, vec({7, 8}));
  EXPECT_EQ(y.values(), vec({1, 2, 7, 8}));
  EXPECT_EQ(x.values(), vec({1, 2, 3, 4}));
}

TEST(Rng, StreamIsReproducible) {
  Rng a(42), b(42);
  for (int k = 0; k < 100; ++k) {
    EXPECT_EQ(a.canonical(), b.canonical());
    EXPECT_EQ(a.normal(), b.normal());
    EXPECT_EQ(a.below(7), b.below(7));
  }
  EXPECT_NE(mix_seed(1, 0), mix_seed(1, 1));
  EXPECT_NE(mix_seed(1, 0), mix_seed(2, 0));
}
