#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace estnet;

namespace {

// f_i = ½x_i² - c_i x_i + e x_i σ with σ = Σ_j x_j, shared constraint Σ_j x_j = 1.
AggregativeGameSpec small_game(const Vec& c, double e) {
  const int I = int(c.size());
  AggregativeGameSpec g;
  g.dims.assign(I, 1);
  g.sigma_part = Partition::scalars(1);
  g.lambda_part = Partition::scalars(1);
  for (int i = 1; i <= I; ++i) {
    g.B[{1, i}] = Mat::Ones(1, 1);
    g.A[{1, i}] = Mat::Ones(1, 1);
    g.a[{1, i}] = Vec::Constant(1, 1.0 / I);
    g.sigma_interference.push_back({1, i});
    g.lambda_interference.push_back({1, i});
  }
  g.grad_x = [c, e](int i, const Vec& xi, const LocalBlocks& s) { return Vec::Constant(1, xi[0] - c[i - 1] + e * s(1)[0]); };
  g.grad_sigma = [e](int, int, const Vec& xi, const LocalBlocks&) { return Vec::Constant(1, e * xi[0]); };
  g.sets.assign(I, box(1, -10, 10));
  return g;
}

// KKT of the small game as one linear system: (1+e)x + e·11ᵀx + 1λ = c, 1ᵀx = 1.
std::pair<Vec, double> small_game_kkt(const Vec& c, double e) {
  const int I = int(c.size());
  Mat K = Mat::Zero(I + 1, I + 1);
  K.topLeftCorner(I, I) = (1 + e) * Mat::Identity(I, I) + e * Mat::Ones(I, I);
  K.topRightCorner(I, 1).setOnes();
  K.bottomLeftCorner(1, I).setOnes();
  Vec rhs(I + 1);
  rhs << c, 1.0;
  Vec s = K.fullPivLu().solve(rhs);
  return {s.head(I), s[I]};
}

std::vector<EndLayout> path_layouts(const AggregativeGameSpec& g) {
  const int I = g.agents();
  std::vector<Edge> es;
  for (int i = 1; i < I; ++i) es.push_back({i, i + 1});
  std::vector<int> nodes(I);
  for (int i = 0; i < I; ++i) nodes[i] = i + 1;
  Graph comm(nodes, es, false);
  return {standard_layout(comm, g.sigma_part, g.sigma_interference, WeightRule::MetropolisHastings),
          standard_layout(comm, g.lambda_part, g.lambda_interference, WeightRule::MetropolisHastings)};
}

}  // namespace

TEST(Gne, SmallEqualityGameMatchesKktSolve) {
  Vec c(3);
  c << 1.0, 0.2, -0.4;
  auto g = small_game(c, 0.3);
  auto [xs, ls] = small_game_kkt(c, 0.3);
  auto L = path_layouts(g);
  GneOperators ops(L[0], L[1], g);
  GneSolveOptions opt;
  opt.stop.max_iters = 200000;
  opt.reference = xs;
  opt.x_tol = 1e-7;
  opt.kkt_tol = 1e-7;
  const double alpha = 0.5, beta = 0.05;
  ASSERT_GT(ops.preconditioner_min_eig(beta), 0);
  auto tr = gne_solve(ops, alpha, beta, opt, Vec::Zero(3));
  EXPECT_TRUE(tr.converged);
  EXPECT_LE(tr.last("dist_x"), 1e-7);
  EXPECT_LE(tr.summary["max_invariant"], 1e-10);
  // Centralized extragradient oracle agrees with the linear solve.
  auto [xr, lr] = reference_vgne(g, 0.1);
  EXPECT_LE((xr - xs).norm(), 1e-9);
  EXPECT_NEAR(lr[0], ls, 1e-9);
}

TEST(Gne, MultiplierScaleAndTracking) {
  Vec c(3);
  c << 0.5, 0.5, 1.5;
  auto g = small_game(c, 0.1);
  auto [xs, ls] = small_game_kkt(c, 0.1);
  auto L = path_layouts(g);
  GneOperators ops(L[0], L[1], g);
  auto st = ops.init(Vec::Zero(3));
  const double alpha = 0.4, beta = 0.05;
  for (int k = 0; k < 100000; ++k) {
    st = gne_step(ops, st, alpha, beta);
    ASSERT_LE(consensus_projection(L[0], st.s).norm(), 1e-10);
  }
  EXPECT_LE((st.x - xs).norm(), 1e-9);
  EXPECT_NEAR(kkt_multiplier(ops, st, alpha)[0], ls, 1e-8);
  // σ̂ copies average to σ(x).
  EXPECT_NEAR(component_means(L[0], ops.sigma_hat(st))[0], g.sigma(st.x)[0], 1e-12);
  EXPECT_LE(kkt_residual(g, st.x, kkt_multiplier(ops, st, alpha)), 1e-8);
}

TEST(Gne, LargeBetaRejected) {
  Vec c = Vec::Ones(3);
  auto g = small_game(c, 0.1);
  auto L = path_layouts(g);
  GneOperators ops(L[0], L[1], g);
  double b = 10.0;
  ASSERT_LE(ops.preconditioner_min_eig(b), 0);
  EXPECT_THROW(gne_step(ops, ops.init(Vec::Zero(3)), 0.1, b), PreconditionError);
  EXPECT_THROW(gne_solve(ops, 0.1, b, GneSolveOptions{}, Vec::Zero(3)), PreconditionError);
  EXPECT_THROW(gne_step(ops, ops.init(Vec::Zero(3)), 0.0, 0.1), std::invalid_argument);
  // Φ ≻ 0 check against the dense preconditioner.
  for (double beta : {0.05, 0.2, 0.6}) {
    double dense = Eigen::SelfAdjointEigenSolver<Mat>(ops.preconditioner(beta)).eigenvalues().minCoeff();
    EXPECT_EQ(dense > 1e-12, ops.preconditioner_min_eig(beta) > 1e-12) << beta;
  }
  double ab = auto_beta(ops, 0.1, Vec::Zero(3));
  EXPECT_GT(ab, 0);
  EXPECT_GT(ops.preconditioner_min_eig(ab), 0);
}

TEST(Gne, MissingEstimateRejected) {
  Vec c = Vec::Ones(2);
  auto g = small_game(c, 0.1);
  Graph comm({1, 2}, {{1, 2}}, false);
  EndLayout Ls(2, g.sigma_part, comm, {{1, 1}}, {metropolis_hastings_weights(Graph({1}, {}))});
  auto Ll = standard_layout(comm, g.lambda_part, g.lambda_interference, WeightRule::MetropolisHastings);
  EXPECT_THROW(GneOperators(Ls, Ll, g), PreconditionError);
}

TEST(Gne, SevenNodeUnicastBothArmsAgree) {
  auto u = build_unicast_seven(1);
  auto [xs, ls] = reference_vgne(u.game, 0.05);
  ASSERT_LE(kkt_residual(u.game, xs, ls), 1e-9);
  std::vector<double> costs;
  for (const auto* arm : {&u.standard, &u.customized}) {
    GneOperators ops((*arm)[0], (*arm)[1], u.game);
    GneSolveOptions opt;
    opt.stop.max_iters = 400000;
    opt.stop.stride = 1000;
    opt.reference = xs;
    auto tr = gne_solve(ops, 0.1, 1e-2, opt, Vec::Zero(7));
    EXPECT_TRUE(tr.converged);
    EXPECT_LE(tr.last("dist_x"), 1e-2);
    EXPECT_LE(tr.last("residual"), 1e-3);
    EXPECT_LE(tr.summary["max_invariant"], 1e-10);
    costs.push_back(ops.cost_per_iteration());
  }
  EXPECT_LT(costs[1], costs[0]);
}
