#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace estnet;

namespace {

// 4 agents on a path, P = 2 with dims {2, 1}.
EndLayout small_layout() {
  Graph comm({1, 2, 3, 4}, {{1, 2}, {2, 3}, {3, 4}}, false);
  std::vector<ComponentAgent> inter{{1, 1}, {1, 3}, {2, 4}, {2, 3}};
  std::vector<WeightedGraph> d{metropolis_hastings_weights(restrict(comm, {1, 2, 3})), metropolis_hastings_weights(restrict(comm, {3, 4}))};
  return EndLayout(4, Partition({2, 1}), comm, inter, d);
}

EndLayout random_layout(std::mt19937_64& rng, int I, int P) {
  Graph comm = random_connected_graph(I, 0.3, rng);
  std::uniform_int_distribution<int> dim(1, 3);
  std::vector<int> dims;
  for (int p = 0; p < P; ++p) dims.push_back(dim(rng));
  std::vector<ComponentAgent> inter;
  std::uniform_real_distribution<double> U(0, 1);
  for (int p = 1; p <= P; ++p) {
    bool any = false;
    for (int i = 1; i <= I; ++i)
      if (U(rng) < 0.3) inter.push_back({p, i}), any = true;
    if (!any) inter.push_back({p, 1});
  }
  DesignCriterion c;
  c.connectivity = ConnectivityMode::undirected();
  c.objective = Objective::MinEdges;
  return design_layout(comm, Partition(dims), inter, c);
}

}  // namespace

TEST(Layout, Bookkeeping) {
  auto L = small_layout();
  EXPECT_EQ(L.stacked_size(), 3 * 2 + 2 * 1);
  EXPECT_EQ(L.holders(1), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(L.held(3), (std::vector<int>{1, 2}));
  EXPECT_EQ(L.needs(3), (std::vector<int>{1, 2}));
  EXPECT_EQ(L.users(1), (std::vector<int>{1, 3}));
  EXPECT_TRUE(L.holds(2, 1));
  EXPECT_FALSE(L.holds(2, 2));
  EXPECT_EQ(L.offset(1, 2), 2);
  EXPECT_EQ(L.offset(2, 4), 7);
  EXPECT_EQ(L.agent_block_size(3), 3);
  Vec v = Vec::LinSpaced(8, 0, 7);
  auto C = L.component(v, 1);
  EXPECT_EQ(C.rows(), 2);
  EXPECT_EQ(C.cols(), 3);
  EXPECT_EQ(C(1, 2), 5);
}

TEST(Layout, StackedOperatorsMatchDenseOracle) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    auto L = random_layout(rng, 8, 5);
    std::vector<Mat> W, Lp;
    for (int p = 1; p <= L.num_components(); ++p) W.push_back(L.design(p).matrix()), Lp.push_back(L.design_laplacian(p));
    Mat Wd = oracle::dense_kron(L, W), Ld = oracle::dense_kron(L, Lp);
    Vec v = oracle::random_vec(L.stacked_size(), rng);
    EXPECT_LE((apply_weights(L, v) - Wd * v).norm(), 1e-12);
    EXPECT_LE((apply_laplacian(L, v) - Ld * v).norm(), 1e-12);
    EXPECT_LE((Mat(materialize_weights(L)) - Wd).norm(), 1e-15);
    Mat Pi = oracle::dense_consensus(L);
    EXPECT_LE((consensus_projection(L, v) - Pi * v).norm(), 1e-12);
    Vec d = disagreement(L, v);
    EXPECT_LE(std::abs(d.dot(consensus_projection(L, v))), 1e-10);
    EXPECT_LE((consensus_projection(L, consensus_projection(L, v)) - consensus_projection(L, v)).norm(), 1e-12);
    Vec y = oracle::random_vec(L.partition().total(), rng);
    EXPECT_LE((component_means(L, embed_consensus(L, y)) - y).norm(), 1e-12);
    EXPECT_LE((permute_to_variable_major(L, permute_to_agent_major(L, v)) - v).norm(), 0);
    EXPECT_LE((permutation_matrix(L) * v - permute_to_agent_major(L, v)).norm(), 0);
  }
}

TEST(Layout, AgentMajorOrder) {
  auto L = small_layout();
  Vec v = Vec::LinSpaced(8, 0, 7);
  Vec t = permute_to_agent_major(L, v);
  // Agent 3 holds p=1 (entries 4,5) then p=2 (entry 6).
  EXPECT_EQ(t.segment(L.agent_offset(3, 1), 2), v.segment(4, 2));
  EXPECT_EQ(t[L.agent_offset(3, 2)], v[6]);
}

TEST(Layout, ValidateReportsViolations) {
  Graph comm({1, 2, 3}, {{1, 2}, {2, 3}}, false);
  // Agent 3 needs p=1 but does not hold it.
  EndLayout a(3, Partition::scalars(1), comm, {{1, 3}}, {metropolis_hastings_weights(restrict(comm, {1, 2}))});
  auto v = validate(a, ConnectivityMode::undirected());
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v[0].component, 1);
  // Edge (1,3) is not a communication edge.
  Graph bad({1, 3}, {{1, 3}}, false);
  EndLayout b(3, Partition::scalars(1), comm, {{1, 1}, {1, 3}}, {metropolis_hastings_weights(bad)});
  v = validate(b, ConnectivityMode::undirected());
  EXPECT_TRUE(std::any_of(v.begin(), v.end(), [](const Violation& x) { return x.what.find("not in") != std::string::npos; }));
  // Disconnected design.
  EndLayout c(3, Partition::scalars(1), comm, {{1, 1}, {1, 3}}, {metropolis_hastings_weights(Graph({1, 3}, {}, false))});
  EXPECT_FALSE(validate(c, ConnectivityMode::undirected()).empty());
  EXPECT_TRUE(validate(small_layout(), ConnectivityMode::undirected()).empty());
}

TEST(Layout, RootedValidation) {
  Graph comm({1, 2, 3}, {{1, 2}, {2, 3}});
  EndLayout L(3, Partition::scalars(1), comm, {{1, 1}, {1, 3}}, {row_stochastic_weights(comm)});
  EXPECT_TRUE(validate(L, ConnectivityMode::rooted({{1, 1}})).empty());
  EXPECT_FALSE(validate(L, ConnectivityMode::rooted({{1, 3}})).empty());
  EXPECT_FALSE(validate(L, ConnectivityMode::strong()).empty());
}

TEST(Layout, LaplacianNullSpaceIsConsensus) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) EXPECT_TRUE(verify_lemma1(random_layout(rng, 7, 4)));
  Graph comm({1, 2}, {{1, 2}});
  EndLayout rooted(2, Partition::scalars(1), comm, {{1, 1}, {1, 2}}, {row_stochastic_weights(comm)});
  EXPECT_TRUE(verify_lemma1(rooted));
  EndLayout split(2, Partition::scalars(1), comm, {{1, 1}, {1, 2}}, {row_stochastic_weights(Graph({1, 2}, {}))});
  EXPECT_THROW(verify_lemma1(split), PreconditionError);
}

TEST(Layout, DisagreementQuadraticBound) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    auto L = random_layout(rng, 7, 4);
    auto r = verify_lemma2(L, 64, unsigned(t));
    EXPECT_TRUE(r.holds);
    EXPECT_GT(r.lambda_bar, 0);
  }
}

TEST(Layout, CommunicationCost) {
  auto L = small_layout();
  // p=1: path 1-2-3 has 4 directed edges of size 2; p=2: 3-4 has 2 edges of size 1.
  EXPECT_DOUBLE_EQ(communication_cost(L, CostMode::Unicast), 4 * 2 + 2 * 1);
  // Every holder has a neighbour: 3 senders of size 2 plus 2 of size 1.
  EXPECT_DOUBLE_EQ(communication_cost(L, CostMode::Broadcast), 3 * 2 + 2 * 1);
  EXPECT_DOUBLE_EQ(mean_estimate_size(L), (1 + 1 + 2 + 1) / 4.0);
}

TEST(Layout, LocalBlocksEnforceAccess) {
  auto L = small_layout();
  Vec v = Vec::LinSpaced(8, 0, 7);
  auto t = access_table(L, {{1}, {1}, {1, 2}, {2}});
  LocalBlocks b(v.data(), &t[1], &L.partition().dims);
  EXPECT_EQ(b(1)[0], 2);
  EXPECT_FALSE(b.has(2));
  EXPECT_THROW(b(2), std::out_of_range);
}
