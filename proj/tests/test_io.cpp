#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"

using namespace estnet;

TEST(Io, GraphJsonRoundTrip) {
  Graph d({1, 2, 3}, {{1, 2}, {2, 3}, {3, 1}, {2, 2}});
  Graph u({1, 2, 4}, {{1, 2}, {2, 4}}, false);
  for (const Graph& g : {d, u}) {
    Graph r = graph_from_json(json::parse(to_json(g).dump()));
    EXPECT_EQ(r.nodes(), g.nodes());
    EXPECT_EQ(r.edges(), g.edges());
    EXPECT_EQ(r.directed(), g.directed());
  }
  EXPECT_EQ(to_json(u)["edges"].size(), 2u);
}

TEST(Io, WeightedGraphAndLayoutRoundTrip) {
  auto rs = build_random_separable(6, 4, 0.5, 2);
  Rng rng(1);
  Graph comm = random_connected_graph(6, 0.4, rng);
  DesignCriterion c;
  c.connectivity = ConnectivityMode::undirected();
  auto L = design_layout(comm, rs.prob.partition, rs.prob.interference(), c);
  auto R = layout_from_json(json::parse(to_json(L).dump()));
  ASSERT_EQ(R.num_components(), L.num_components());
  for (int p = 1; p <= L.num_components(); ++p) {
    EXPECT_EQ(R.holders(p), L.holders(p));
    EXPECT_EQ(R.design(p).graph().edges(), L.design(p).graph().edges());
    EXPECT_EQ(R.design(p).matrix(), L.design(p).matrix());  // json keeps doubles exact
  }
  EXPECT_EQ(R.interference(), L.interference());
  json bad = to_json(L);
  bad["design"].erase("1");
  EXPECT_THROW(layout_from_json(bad), std::invalid_argument);
  json badkey = to_json(L.design(1));
  badkey["weights"]["12"] = 0.5;
  EXPECT_THROW(weighted_graph_from_json(badkey), std::invalid_argument);
}

TEST(Io, CsvQuotingAndLineEndings) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(csv_field("two\nlines"), "\"two\nlines\"");
  RunTrace t({"k", "value"});
  t.add({0, 0.1});
  t.add({1, std::numeric_limits<double>::quiet_NaN()});
  std::ostringstream os;
  write_csv(os, t);
  EXPECT_EQ(os.str(), "k,value\r\n0,0.10000000000000001\r\n1,nan\r\n");
  EXPECT_THROW(t.add({1}), std::logic_error);
}

TEST(Io, DoublesRoundTripExactly) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1e6, 1e6);
  for (int k = 0; k < 1000; ++k) {
    double x = U(rng) * std::pow(10.0, double(k % 40) - 20);
    EXPECT_EQ(std::stod(format_double(x)), x);
  }
  EXPECT_EQ(format_double(INFINITY), "inf");
  EXPECT_EQ(format_double(-INFINITY), "-inf");
}

TEST(Io, DotOutput) {
  Graph u({1, 2}, {{1, 2}}, false);
  EXPECT_EQ(to_dot(u), "graph G {\n  1;\n  2;\n  1 -- 2;\n}\n");
  auto s = to_dot(row_stochastic_weights(Graph({1, 2}, {{1, 2}})), "W");
  EXPECT_NE(s.find("digraph W"), std::string::npos);
  EXPECT_NE(s.find("1 -> 2 [label="), std::string::npos);
}
