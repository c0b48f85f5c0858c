#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace estnet {

// An edge (from, to): "to" receives information from "from".
struct Edge {
  int from = 0;
  int to = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Graph {
 public:
  Graph() = default;

  // Undirected graphs are symmetrized, duplicates are dropped.
  Graph(std::vector<int> nodes, std::vector<Edge> edges, bool directed = true)
      : nodes_(std::move(nodes)), directed_(directed) {
    std::sort(nodes_.begin(), nodes_.end());
    if (std::adjacent_find(nodes_.begin(), nodes_.end()) != nodes_.end())
      throw std::invalid_argument("Graph: duplicate node id");
    std::set<Edge> es;
    for (const auto& e : edges) {
      if (!has_node(e.from) || !has_node(e.to))
        throw std::invalid_argument("Graph: edge (" + std::to_string(e.from) + "," +
                                    std::to_string(e.to) + ") references unknown node");
      es.insert(e);
      if (!directed_) es.insert({e.to, e.from});
    }
    edges_.assign(es.begin(), es.end());
    in_.assign(nodes_.size(), {});
    out_.assign(nodes_.size(), {});
    for (const auto& e : edges_) {
      out_[index(e.from)].push_back(e.to);
      in_[index(e.to)].push_back(e.from);
    }
    for (auto& v : in_) std::sort(v.begin(), v.end());
  }

  static Graph complete(const std::vector<int>& nodes, bool self_loops = false) {
    std::vector<Edge> es;
    for (int u : nodes)
      for (int v : nodes)
        if (u != v || self_loops) es.push_back({u, v});
    return Graph(nodes, es, false);
  }

  const std::vector<int>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  bool directed() const { return directed_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  bool has_node(int v) const { return std::binary_search(nodes_.begin(), nodes_.end(), v); }

  // Position of a node in the ascending node list.
  int index(int v) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), v);
    if (it == nodes_.end() || *it != v)
      throw std::out_of_range("Graph: node " + std::to_string(v) + " not present");
    return static_cast<int>(it - nodes_.begin());
  }

  bool has_edge(int from, int to) const {
    return std::binary_search(edges_.begin(), edges_.end(), Edge{from, to});
  }
  bool has_self_loop(int v) const { return has_edge(v, v); }

  // In-neighbours (senders) of v, self included when a self-loop exists.
  const std::vector<int>& in_neighbors(int v) const { return in_[index(v)]; }
  const std::vector<int>& out_neighbors(int v) const { return out_[index(v)]; }

  std::size_t num_edges_without_loops() const {
    return static_cast<std::size_t>(
        std::count_if(edges_.begin(), edges_.end(), [](const Edge& e) { return e.from != e.to; }));
  }

  // True when every edge is matched by its reverse.
  bool symmetric() const {
    for (const auto& e : edges_)
      if (!has_edge(e.to, e.from)) return false;
    return true;
  }

  Graph with_self_loops() const {
    auto es = edges_;
    for (int v : nodes_) es.push_back({v, v});
    return Graph(nodes_, es, directed_);
  }

  Graph without_self_loops() const {
    std::vector<Edge> es;
    for (const auto& e : edges_)
      if (e.from != e.to) es.push_back(e);
    return Graph(nodes_, es, directed_);
  }

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.nodes_ == b.nodes_ && a.edges_ == b.edges_ && a.directed_ == b.directed_;
  }

 private:
  std::vector<int> nodes_;
  std::vector<Edge> edges_;
  bool directed_ = true;
  std::vector<std::vector<int>> in_, out_;
};

// Induced subgraph on nodes ∩ g.nodes().
inline Graph restrict(const Graph& g, const std::vector<int>& nodes) {
  std::vector<int> keep;
  for (int v : nodes)
    if (g.has_node(v)) keep.push_back(v);
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  std::vector<Edge> es;
  for (const auto& e : g.edges())
    if (std::binary_search(keep.begin(), keep.end(), e.from) &&
        std::binary_search(keep.begin(), keep.end(), e.to))
      es.push_back(e);
  return Graph(keep, es, g.directed());
}

inline Graph graph_union(const Graph& a, const Graph& b) {
  std::set<int> ns(a.nodes().begin(), a.nodes().end());
  ns.insert(b.nodes().begin(), b.nodes().end());
  std::vector<Edge> es = a.edges();
  es.insert(es.end(), b.edges().begin(), b.edges().end());
  return Graph({ns.begin(), ns.end()}, es, a.directed() || b.directed());
}

// Edges of a that are also in b, node set of a.
inline Graph graph_intersection(const Graph& a, const Graph& b) {
  std::vector<Edge> es;
  for (const auto& e : a.edges())
    if (b.has_edge(e.from, e.to)) es.push_back(e);
  return Graph(a.nodes(), es, a.directed());
}

// ---------------------------------------------------------------- connectivity

inline std::vector<int> reachable_from(const Graph& g, int root, bool forward = true) {
  std::vector<char> seen(g.size(), 0);
  std::deque<int> q{root};
  seen[g.index(root)] = 1;
  std::vector<int> out;
  while (!q.empty()) {
    int u = q.front();
    q.pop_front();
    out.push_back(u);
    const auto& nb = forward ? g.out_neighbors(u) : g.in_neighbors(u);
    for (int v : nb) {
      int k = g.index(v);
      if (!seen[k]) {
        seen[k] = 1;
        q.push_back(v);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline bool is_rooted(const Graph& g, int root) {
  if (!g.has_node(root)) return false;
  return reachable_from(g, root).size() == g.size();
}

inline bool is_strongly_connected(const Graph& g) {
  if (g.empty()) return false;
  int r = g.nodes().front();
  return reachable_from(g, r, true).size() == g.size() &&
         reachable_from(g, r, false).size() == g.size();
}

inline bool is_connected_undirected(const Graph& g) {
  if (g.directed()) throw PreconditionError("is_connected_undirected: graph is directed");
  if (g.empty()) return false;
  return reachable_from(g, g.nodes().front()).size() == g.size();
}

// Time-varying graph over a fixed horizon.
struct GraphSequence {
  std::vector<Graph> snapshots;
  std::size_t horizon() const { return snapshots.size(); }
  // Cyclic access past the stored horizon.
  const Graph& at(std::size_t k) const { return snapshots.at(k % snapshots.size()); }
};

// Every full window [kQ, (k+1)Q) of the stored horizon must have a strongly
// connected union. A partial trailing window is ignored.
inline bool is_q_strongly_connected(const GraphSequence& seq, std::size_t Q) {
  if (Q == 0) throw std::invalid_argument("is_q_strongly_connected: Q must be positive");
  if (seq.horizon() < Q)
    throw PreconditionError("is_q_strongly_connected: horizon shorter than Q");
  for (std::size_t k = 0; (k + 1) * Q <= seq.horizon(); ++k) {
    Graph u = seq.snapshots[k * Q];
    for (std::size_t t = 1; t < Q; ++t) u = graph_union(u, seq.snapshots[k * Q + t]);
    if (!is_strongly_connected(u)) return false;
  }
  return true;
}

// ---------------------------------------------------------------- weights

// Weights indexed (receiver, sender) by node position; W(r,s) > 0 iff (s,r) is an edge.
class WeightedGraph {
 public:
  WeightedGraph() = default;
  WeightedGraph(Graph g, Eigen::MatrixXd w) : g_(std::move(g)), w_(std::move(w)) {
    const auto n = static_cast<Eigen::Index>(g_.size());
    if (w_.rows() != n || w_.cols() != n)
      throw std::invalid_argument("WeightedGraph: weight matrix size mismatch");
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index s = 0; s < n; ++s) {
        bool e = g_.has_edge(g_.nodes()[s], g_.nodes()[r]);
        if (e && !(w_(r, s) > 0.0))
          throw std::invalid_argument("WeightedGraph: edge without positive weight");
        if (!e && w_(r, s) != 0.0)
          throw std::invalid_argument("WeightedGraph: nonzero weight off the edge set");
      }
  }

  const Graph& graph() const { return g_; }
  const Eigen::MatrixXd& matrix() const { return w_; }
  const std::vector<int>& nodes() const { return g_.nodes(); }
  std::size_t size() const { return g_.size(); }

  double weight(int receiver, int sender) const {
    return w_(g_.index(receiver), g_.index(sender));
  }

  bool row_stochastic(double tol = 1e-12) const {
    return ((w_.rowwise().sum().array() - 1.0).abs() <= tol).all();
  }
  bool column_stochastic(double tol = 1e-12) const {
    return ((w_.colwise().sum().array() - 1.0).abs() <= tol).all();
  }
  bool doubly_stochastic(double tol = 1e-12) const {
    return row_stochastic(tol) && column_stochastic(tol);
  }
  bool balanced(double tol = 1e-12) const {
    return ((w_.rowwise().sum() - w_.colwise().sum().transpose()).array().abs() <= tol).all();
  }

 private:
  Graph g_;
  Eigen::MatrixXd w_;
};

inline WeightedGraph unit_weights(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (const auto& e : g.edges()) w(g.index(e.to), g.index(e.from)) = 1.0;
  return WeightedGraph(g, w);
}

// Everyone copies `center`: W = 1 e_centerᵀ, the full-information broadcast pattern.
inline WeightedGraph star_weights(const std::vector<int>& nodes, int center) {
  std::vector<Edge> es{{center, center}};
  for (int v : nodes)
    if (v != center) es.push_back({center, v});
  Graph g(nodes, es);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(g.size(), g.size());
  w.col(g.index(center)).setOnes();
  return WeightedGraph(g, w);
}

// L = D - W with D the row sums of W.
inline Eigen::MatrixXd laplacian(const WeightedGraph& wg) {
  Eigen::MatrixXd L = -wg.matrix();
  L.diagonal() += wg.matrix().rowwise().sum();
  return L;
}

// Metropolis-Hastings: symmetric doubly stochastic on undirected graphs.
inline WeightedGraph metropolis_hastings_weights(const Graph& g) {
  if (g.directed() && !g.symmetric())
    throw PreconditionError("metropolis_hastings_weights: graph must be undirected");
  Graph base = g.without_self_loops();
  const auto n = static_cast<Eigen::Index>(g.size());
  std::vector<double> deg(n);
  for (Eigen::Index k = 0; k < n; ++k) deg[k] = double(base.out_neighbors(g.nodes()[k]).size());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (const auto& e : base.edges()) {
    int a = g.index(e.from), b = g.index(e.to);
    w(b, a) = 1.0 / (1.0 + std::max(deg[a], deg[b]));
  }
  for (Eigen::Index k = 0; k < n; ++k) w(k, k) = 1.0 - (w.row(k).sum() - w(k, k));
  Graph out(g.nodes(), base.with_self_loops().edges(), false);
  return WeightedGraph(out, w);
}

// (I + W_MH)/2, spectrum in [0, 1].
inline WeightedGraph lazy_metropolis_weights(const Graph& g) {
  auto mh = metropolis_hastings_weights(g);
  Eigen::MatrixXd w = 0.5 * mh.matrix();
  w.diagonal().array() += 0.5;
  return WeightedGraph(mh.graph(), w);
}

// Self-loops added, W(r,s) = 1/|in(r)|.
inline WeightedGraph row_stochastic_weights(const Graph& g) {
  Graph gs = g.with_self_loops();
  const auto n = static_cast<Eigen::Index>(gs.size());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int r : gs.nodes()) {
    const auto& in = gs.in_neighbors(r);
    for (int s : in) w(gs.index(r), gs.index(s)) = 1.0 / double(in.size());
  }
  return WeightedGraph(gs, w);
}

// Self-loops added, W(r,s) = 1/|out(s)|.
inline WeightedGraph column_stochastic_weights(const Graph& g) {
  Graph gs = g.with_self_loops();
  const auto n = static_cast<Eigen::Index>(gs.size());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int s : gs.nodes()) {
    const auto& out = gs.out_neighbors(s);
    for (int r : out) w(gs.index(r), gs.index(s)) = 1.0 / double(out.size());
  }
  return WeightedGraph(gs, w);
}

enum class WeightRule { MetropolisHastings, LazyMetropolis, RowStochastic, ColumnStochastic, Unit };

inline WeightedGraph apply_weight_rule(const Graph& g, WeightRule rule) {
  switch (rule) {
    case WeightRule::MetropolisHastings: return metropolis_hastings_weights(g);
    case WeightRule::LazyMetropolis: return lazy_metropolis_weights(g);
    case WeightRule::RowStochastic: return row_stochastic_weights(g);
    case WeightRule::ColumnStochastic: return column_stochastic_weights(g);
    case WeightRule::Unit: return unit_weights(g);
  }
  throw std::invalid_argument("apply_weight_rule: unknown rule");
}

inline const char* to_string(WeightRule r) {
  switch (r) {
    case WeightRule::MetropolisHastings: return "metropolis";
    case WeightRule::LazyMetropolis: return "lazy_metropolis";
    case WeightRule::RowStochastic: return "row_stochastic";
    case WeightRule::ColumnStochastic: return "column_stochastic";
    case WeightRule::Unit: return "unit";
  }
  return "?";
}

inline WeightRule weight_rule_from_string(const std::string& s) {
  if (s == "metropolis") return WeightRule::MetropolisHastings;
  if (s == "lazy_metropolis") return WeightRule::LazyMetropolis;
  if (s == "row_stochastic") return WeightRule::RowStochastic;
  if (s == "column_stochastic") return WeightRule::ColumnStochastic;
  if (s == "unit") return WeightRule::Unit;
  throw std::invalid_argument("unknown weight rule '" + s + "'");
}

}  // namespace estnet
