#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace estnet;

namespace {

// f_i = -U log(1 + x_i) + x_i Σ_{p∈ℒ_i} ψ_p ℓ(σ_p), σ_p = Σ_{j: p∈ℒ_j} x_j, written from scratch.
double unicast_cost(const UnicastInstance& u, int i, const Vec& x) {
  const int P = int(u.links.size());
  std::vector<double> sig(P, 0.0);
  for (int j = 1; j <= int(x.size()); ++j)
    for (int p : u.user_links[j - 1]) sig[p - 1] += x[j - 1];
  double f = -u.utility * std::log(1 + x[i - 1]);
  for (int p : u.user_links[i - 1]) f += x[i - 1] * u.psi[p - 1] / (1 + std::exp(-sig[p - 1]));
  return f;
}

bool same_layout(const EndLayout& a, const EndLayout& b) {
  if (a.num_components() != b.num_components()) return false;
  for (int p = 1; p <= a.num_components(); ++p) {
    if (a.design(p).graph().nodes() != b.design(p).graph().nodes()) return false;
    if (a.design(p).graph().edges() != b.design(p).graph().edges()) return false;
    if (a.design(p).matrix() != b.design(p).matrix()) return false;
  }
  return true;
}

}  // namespace

TEST(Unicast, PseudoGradientMatchesFiniteDifferences) {
  auto u = build_unicast(UnicastScenario{});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0, 1);
  const double h = 1e-6;
  for (int t = 0; t < 5; ++t) {
    Vec x(12);
    for (auto& v : x) v = U(rng);
    Vec F = u.game.pseudo_gradient(x);
    for (int i = 1; i <= 12; ++i) {
      Vec xp = x, xm = x;
      xp[i - 1] += h;
      xm[i - 1] -= h;
      EXPECT_NEAR(F[i - 1], (unicast_cost(u, i, xp) - unicast_cost(u, i, xm)) / (2 * h), 1e-6);
    }
  }
  // The fused oracle agrees with the generic composition.
  auto plain = u.game;
  plain.fused_gradient = nullptr;
  Vec x = Vec::Constant(12, 0.4);
  EXPECT_LE((plain.pseudo_gradient(x) - u.game.pseudo_gradient(x)).norm(), 1e-14);
}

TEST(Unicast, StructureAndLayouts) {
  for (std::uint64_t s = 1; s <= 5; ++s) {
    UnicastScenario sc;
    sc.seed = s;
    auto u = build_unicast(sc);
    const int P = int(u.links.size());
    EXPECT_TRUE(is_connected_undirected(u.comm));
    for (int i = 1; i <= 12; ++i) {
      const auto& r = u.routes[i - 1];
      ASSERT_GE(r.size(), 2u);
      EXPECT_LE(int(r.size()) - 1, sc.max_path_length);
      EXPECT_EQ(r.front(), i);
    }
    for (double c : u.capacity) EXPECT_TRUE(c >= 0.5 && c <= 1.5);
    for (double v : u.psi) EXPECT_TRUE(v >= 0 && v <= 1);
    EXPECT_DOUBLE_EQ(mean_estimate_size(u.standard[0]), P);
    EXPECT_LT(mean_estimate_size(u.customized[0]), P);
    for (const auto& L : u.customized) EXPECT_TRUE(validate(L, ConnectivityMode::undirected()).empty());
    GneOperators a(u.standard[0], u.standard[1], u.game), b(u.customized[0], u.customized[1], u.game);
    EXPECT_LT(b.cost_per_iteration(), a.cost_per_iteration());
  }
}

TEST(Unicast, SevenNodeRelayAndBystander) {
  auto u = build_unicast_seven();
  auto id = [&](int a, int b) {
    return int(std::find(u.links.begin(), u.links.end(), Edge{std::min(a, b), std::max(a, b)}) - u.links.begin()) + 1;
  };
  const int p45 = id(4, 5);
  ASSERT_LE(p45, int(u.links.size()));
  const auto& Ls = u.customized[0];
  EXPECT_EQ(Ls.holders(p45), (std::vector<int>{3, 4, 5}));
  EXPECT_EQ(Ls.users(p45), (std::vector<int>{3, 5}));
  EXPECT_TRUE(u.user_links[6].empty());
  EXPECT_TRUE(Ls.held(7).empty());
  EXPECT_EQ(int(u.standard[0].held(7).size()), int(u.links.size()));
}

TEST(Unicast, Deterministic) {
  UnicastScenario sc;
  sc.seed = 42;
  EXPECT_EQ(to_json(build_unicast(sc)).dump(), to_json(build_unicast(sc)).dump());
  sc.seed = 43;
  auto other = to_json(build_unicast(sc)).dump();
  sc.seed = 42;
  EXPECT_NE(to_json(build_unicast(sc)).dump(), other);
}

TEST(Sensors, RegressionInstance) {
  SensorScenario sc;
  auto inst = build_regression(sc);
  EXPECT_TRUE(is_strongly_connected(inst.comm));
  ASSERT_EQ(int(inst.output_matrices.size()), sc.sensors);
  for (int i = 1; i <= sc.sensors; ++i) {
    const Mat& H = inst.output_matrices[i - 1];
    EXPECT_EQ(H.rows(), sc.nh);
    EXPECT_EQ(H.cols(), int(inst.prob.costs[i - 1].footprint.size()));
    for (Eigen::Index r = 0; r < H.rows() && H.cols(); ++r) {
      EXPECT_NEAR(H.row(r).norm(), 1.0, 1e-12);
      EXPECT_GE(H.row(r).minCoeff(), 0.0);
    }
  }
  // Interference is "within r_s" plus the flagged attachments.
  auto d = [&](int i, int p) {
    return std::hypot(inst.sensor_pos[i - 1][0] - inst.source_pos[p - 1][0], inst.sensor_pos[i - 1][1] - inst.source_pos[p - 1][1]);
  };
  for (auto [p, i] : inst.interference)
    EXPECT_TRUE(d(i, p) < sc.r_s || std::count(inst.attached.begin(), inst.attached.end(), p)) << p << " " << i;
  for (int i = 1; i <= sc.sensors; ++i)
    for (int p = 1; p <= sc.sources; ++p)
      if (d(i, p) < sc.r_s) {
        EXPECT_TRUE(std::count(inst.interference.begin(), inst.interference.end(), ComponentAgent{p, i}));
      }
  // Centralized optimum: ∇f(y*) = 0.
  EXPECT_LE(inst.prob.gradient(inst.reference.y).norm(), 1e-8);
  EXPECT_EQ(inst.standard().stacked_size(), sc.sources * sc.sensors);
  EXPECT_LE(inst.customized().stacked_size(), inst.standard().stacked_size());
  EXPECT_TRUE(validate(inst.customized(), ConnectivityMode::strong()).empty());
  for (const auto& W : inst.customized().designs()) EXPECT_TRUE(W.column_stochastic(1e-12));
}

TEST(Sensors, LassoOptimalityAndWeights) {
  SensorScenario sc;
  sc.sensors = 10;
  sc.sources = 20;
  sc.rc_min = 0.3;
  sc.nh = 1;
  sc.seed = 5;
  auto inst = build_lasso(sc);
  const auto& prob = inst.prob;
  // ℓ1 weight of component p is split evenly among its users.
  std::vector<double> total(sc.sources, 0.0);
  for (const auto& c : prob.costs)
    for (std::size_t k = 0; k < c.footprint.size(); ++k) total[c.footprint[k] - 1] += c.l1[Eigen::Index(k)];
  for (double t : total) EXPECT_NEAR(t, 1.0, 1e-12);
  // 0 ∈ ∇g(y*) + ∂‖y*‖₁ componentwise.
  Vec y = inst.reference.y, g = prob.gradient(y);
  for (int p = 0; p < sc.sources; ++p) {
    if (std::abs(y[p]) > 1e-9)
      EXPECT_NEAR(g[p] + (y[p] > 0 ? 1.0 : -1.0), 0.0, 1e-6) << p;
    else
      EXPECT_LE(std::abs(g[p]), 1.0 + 1e-6) << p;
  }
}

TEST(Sensors, CompleteInterferenceGivesIdenticalArms) {
  SensorScenario sc;
  sc.sensors = 10;
  sc.sources = 6;
  sc.r_s = 1.5;  // every source within range of every sensor
  sc.seed = 2;
  auto inst = build_lasso(sc);
  EXPECT_EQ(int(inst.interference.size()), sc.sensors * sc.sources);
  EXPECT_TRUE(same_layout(inst.standard(), inst.customized()));
  // Small r_s separates them.
  sc.r_s = 0.2;
  auto sparse = build_lasso(sc);
  EXPECT_FALSE(same_layout(sparse.standard(), sparse.customized()));
}

TEST(Sensors, DeterministicAndValidated) {
  SensorScenario sc;
  sc.seed = 9;
  EXPECT_EQ(to_json(build_regression(sc)).dump(), to_json(build_regression(sc)).dump());
  sc.sensors = 0;
  EXPECT_THROW(build_regression(sc), std::invalid_argument);
  sc.sensors = 6;
  sc.rc_min = 0.01;
  sc.rc_width = 0.0;
  sc.max_resample = 5;
  EXPECT_THROW(build_regression(sc), PreconditionError);
}

TEST(Synthetic, RandomInstancesSolveTheirOwnOptimality) {
  for (std::uint64_t s = 1; s <= 5; ++s) {
    auto rs = build_random_separable(8, 6, 0.4, s);
    EXPECT_LE(rs.prob.gradient(rs.y_star).norm(), 1e-9);
    for (int p = 1; p <= 6; ++p) {
      bool seen = false;
      for (const auto& c : rs.prob.costs) seen = seen || std::count(c.footprint.begin(), c.footprint.end(), p);
      EXPECT_TRUE(seen);
    }
    auto rg = build_random_quadratic_game(6, 0.4, s);
    EXPECT_LE(rg.game.pseudo_gradient(rg.x_star).norm(), 1e-10);
  }
}
