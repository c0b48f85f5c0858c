#pragma once

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>

#include "layout.hpp"

namespace estnet {

class InfeasibleDesign : public std::runtime_error {
 public:
  InfeasibleDesign(int component, const std::string& msg)
      : std::runtime_error(component > 0 ? "component " + std::to_string(component) + ": " + msg : msg),
        component_(component) {}
  int component() const { return component_; }

 private:
  int component_;
};

struct SteinerInstance {
  Graph host;
  std::vector<int> terminals;
  std::optional<int> root;
  std::map<Edge, double> costs;  // missing edges cost 1

  double cost(int u, int v) const {
    auto it = costs.find({u, v});
    if (it != costs.end()) return it->second;
    if (!host.directed()) {
      it = costs.find({v, u});
      if (it != costs.end()) return it->second;
    }
    return 1.0;
  }
};

// Sum of edge costs, undirected edges counted once, self-loops ignored.
inline double steiner_cost(const SteinerInstance& inst, const Graph& g) {
  double c = 0;
  for (const auto& e : g.edges()) {
    if (e.from == e.to) continue;
    if (!g.directed() && e.from > e.to) continue;
    c += inst.cost(e.from, e.to);
  }
  return c;
}

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct ShortestPaths {
  std::vector<double> dist;  // by host index
  std::vector<int> pred;     // node id of the previous hop toward the source, -1 if none
};

// Dijkstra over allowed nodes; backward follows in-edges. Ties go to the smallest node id.
inline ShortestPaths dijkstra(const Graph& g, int source, const std::function<double(int, int)>& cost,
                              bool forward = true, const std::vector<char>* allowed = nullptr) {
  const std::size_t n = g.size();
  ShortestPaths sp{std::vector<double>(n, kInf), std::vector<int>(n, -1)};
  std::vector<char> done(n, 0);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
  sp.dist[g.index(source)] = 0;
  pq.push({0.0, source});
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    int ku = g.index(u);
    if (done[ku]) continue;
    done[ku] = 1;
    const auto& nb = forward ? g.out_neighbors(u) : g.in_neighbors(u);
    for (int v : nb) {
      if (v == u) continue;
      int kv = g.index(v);
      if (allowed && !(*allowed)[kv]) continue;
      double nd = d + (forward ? cost(u, v) : cost(v, u));
      if (nd < sp.dist[kv]) {
        sp.dist[kv] = nd;
        sp.pred[kv] = u;
        pq.push({nd, v});
      }
    }
  }
  return sp;
}

inline std::vector<int> sorted_unique(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

inline void check_terminals(const SteinerInstance& inst, const std::vector<int>& T) {
  for (int t : T)
    if (!inst.host.has_node(t))
      throw std::invalid_argument("Steiner: terminal " + std::to_string(t) + " not in host");
  if (inst.root && !inst.host.has_node(*inst.root))
    throw std::invalid_argument("Steiner: root not in host");
}

}  // namespace detail

// Metric-closure MST heuristic (2-approximation) on an undirected host.
inline Graph solve_st(const SteinerInstance& inst) {
  const Graph& g = inst.host;
  if (!g.symmetric()) throw PreconditionError("solve_st: host must be undirected");
  auto T = detail::sorted_unique(inst.terminals);
  detail::check_terminals(inst, T);
  if (T.empty()) return Graph({}, {}, false);
  auto cost = [&](int u, int v) { return inst.cost(u, v); };

  std::vector<detail::ShortestPaths> sp;
  for (int t : T) sp.push_back(detail::dijkstra(g, t, cost));
  for (int t : T)
    if (sp[0].dist[g.index(t)] == detail::kInf)
      throw InfeasibleDesign(0, "terminals not mutually reachable");

  // Prim over the terminal closure.
  std::set<Edge> es;
  std::set<int> ns{T[0]};
  std::vector<char> in(T.size(), 0);
  in[0] = 1;
  for (std::size_t round = 1; round < T.size(); ++round) {
    double best = detail::kInf;
    int ba = -1, bb = -1;
    for (std::size_t a = 0; a < T.size(); ++a) {
      if (!in[a]) continue;
      for (std::size_t b = 0; b < T.size(); ++b) {
        if (in[b]) continue;
        double d = sp[a].dist[g.index(T[b])];
        if (d < best) best = d, ba = int(a), bb = int(b);
      }
    }
    in[bb] = 1;
    for (int v = T[bb]; v != T[ba];) {
      int u = sp[ba].pred[g.index(v)];
      es.insert({std::min(u, v), std::max(u, v)});
      ns.insert(u);
      ns.insert(v);
      v = u;
    }
  }

  // MST of the expanded subgraph (Kruskal).
  std::vector<std::tuple<double, int, int>> cand;
  for (const auto& e : es) cand.emplace_back(inst.cost(e.from, e.to), e.from, e.to);
  std::sort(cand.begin(), cand.end());
  std::map<int, int> parent;
  for (int v : ns) parent[v] = v;
  std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  std::vector<Edge> tree;
  for (auto [c, u, v] : cand) {
    int a = find(u), b = find(v);
    if (a == b) continue;
    parent[a] = b;
    tree.push_back({u, v});
  }

  // Prune non-terminal leaves.
  std::set<int> nodes = ns;
  for (bool changed = true; changed;) {
    changed = false;
    for (int v : std::vector<int>(nodes.begin(), nodes.end())) {
      if (std::binary_search(T.begin(), T.end(), v)) continue;
      int deg = 0;
      for (const auto& e : tree) deg += (e.from == v) + (e.to == v);
      if (deg <= 1) {
        nodes.erase(v);
        std::erase_if(tree, [v](const Edge& e) { return e.from == v || e.to == v; });
        changed = true;
      }
    }
  }
  return Graph({nodes.begin(), nodes.end()}, tree, false);
}

inline Graph solve_ust(SteinerInstance inst) {
  inst.costs.clear();
  return solve_st(inst);
}

// Shortest-path arborescence from the root, then greedy removal of relay nodes.
inline Graph solve_dst(const SteinerInstance& inst) {
  if (!inst.root) throw PreconditionError("solve_dst: root required");
  const Graph& g = inst.host;
  auto T = detail::sorted_unique(inst.terminals);
  detail::check_terminals(inst, T);
  const int r = *inst.root;
  auto cost = [&](int u, int v) { return inst.cost(u, v); };

  struct Tree {
    std::set<int> nodes;
    std::set<Edge> edges;
    double cost = 0;
  };
  auto build = [&](const std::vector<char>& allowed) -> std::optional<Tree> {
    auto sp = detail::dijkstra(g, r, cost, true, &allowed);
    Tree t;
    t.nodes.insert(r);
    for (int term : T) {
      if (sp.dist[g.index(term)] == detail::kInf) return std::nullopt;
      for (int v = term; v != r;) {
        int u = sp.pred[g.index(v)];
        t.edges.insert({u, v});
        t.nodes.insert(v);
        v = u;
      }
    }
    for (const auto& e : t.edges) t.cost += inst.cost(e.from, e.to);
    return t;
  };

  std::vector<char> all(g.size(), 1);
  auto best = build(all);
  if (!best) throw InfeasibleDesign(0, "some terminal unreachable from root " + std::to_string(r));
  for (bool changed = true; changed;) {
    changed = false;
    for (int v : std::vector<int>(best->nodes.begin(), best->nodes.end())) {
      if (v == r || std::binary_search(T.begin(), T.end(), v) || !best->nodes.count(v)) continue;
      std::vector<char> allowed(g.size(), 0);
      for (int u : best->nodes) allowed[g.index(u)] = 1;
      allowed[g.index(v)] = 0;
      auto t = build(allowed);
      if (t && t->cost <= best->cost + 1e-12) {
        best = std::move(t);
        changed = true;
      }
    }
  }
  return Graph({best->nodes.begin(), best->nodes.end()}, {best->edges.begin(), best->edges.end()}, true);
}

inline Graph solve_udst(SteinerInstance inst) {
  inst.costs.clear();
  return solve_dst(inst);
}

// In/out shortest-path arborescences around the smallest terminal, then greedy node removal.
inline Graph solve_scss(const SteinerInstance& inst) {
  const Graph& g = inst.host;
  auto T = detail::sorted_unique(inst.terminals);
  detail::check_terminals(inst, T);
  if (T.empty()) return Graph({}, {}, true);
  const int t0 = T[0];
  auto unit = [](int, int) { return 1.0; };

  auto fw = detail::dijkstra(g, t0, unit, true);
  auto bw = detail::dijkstra(g, t0, unit, false);
  std::vector<char> keep(g.size(), 0);
  keep[g.index(t0)] = 1;
  for (int t : T) {
    if (fw.dist[g.index(t)] == detail::kInf || bw.dist[g.index(t)] == detail::kInf)
      throw InfeasibleDesign(0, "terminals not in one strongly connected class");
    for (int v = t; v != t0; v = fw.pred[g.index(v)]) keep[g.index(v)] = 1;
    for (int v = t; v != t0; v = bw.pred[g.index(v)]) keep[g.index(v)] = 1;
  }
  // Strong component of t0 within the allowed nodes.
  auto scc = [&](const std::vector<char>& allowed) {
    auto f = detail::dijkstra(g, t0, unit, true, &allowed);
    auto b = detail::dijkstra(g, t0, unit, false, &allowed);
    std::vector<char> s(g.size(), 0);
    for (std::size_t k = 0; k < g.size(); ++k) s[k] = f.dist[k] < detail::kInf && b.dist[k] < detail::kInf;
    return s;
  };
  auto covers = [&](const std::vector<char>& s) {
    return std::all_of(T.begin(), T.end(), [&](int t) { return s[g.index(t)] != 0; });
  };
  keep = scc(keep);
  for (bool changed = true; changed;) {
    changed = false;
    for (int v : g.nodes()) {
      int kv = g.index(v);
      if (!keep[kv] || std::binary_search(T.begin(), T.end(), v)) continue;
      auto cand = keep;
      cand[kv] = 0;
      auto s = scc(cand);
      if (covers(s)) {
        keep = s;
        changed = true;
      }
    }
  }
  std::vector<int> ns;
  for (int v : g.nodes())
    if (keep[g.index(v)]) ns.push_back(v);
  return restrict(g, ns);
}

// ---------------------------------------------------------------- layouts

namespace detail {
// BFS tree of an undirected graph from its minimum-eccentricity node. Ties go to `prefer`
// when it is a center, else to the smallest id. Same edge count as any spanning tree, fewest hops.
inline Graph min_depth_spanning_tree(const Graph& g, std::optional<int> prefer = std::nullopt) {
  if (g.size() <= 1) return g;
  auto unit = [](int, int) { return 1.0; };
  int center = -1;
  double best = kInf;
  for (int v : g.nodes()) {
    auto sp = dijkstra(g, v, unit);
    double ecc = *std::max_element(sp.dist.begin(), sp.dist.end());
    if (ecc < best || (ecc == best && prefer && v == *prefer)) best = ecc, center = v;
  }
  auto sp = dijkstra(g, center, unit);
  std::vector<Edge> es;
  for (int v : g.nodes())
    if (v != center) es.push_back({sp.pred[g.index(v)], v});
  return Graph(g.nodes(), es, false);
}
}  // namespace detail


enum class Objective { MinNodes, MinEdges, MinWeight, BalancedLoad, None };

inline Objective objective_from_string(const std::string& s) {
  if (s == "min_nodes") return Objective::MinNodes;
  if (s == "min_edges") return Objective::MinEdges;
  if (s == "min_weight") return Objective::MinWeight;
  if (s == "balanced") return Objective::BalancedLoad;
  if (s == "none") return Objective::None;
  throw std::invalid_argument("unknown objective '" + s + "'");
}

inline ConnectivityMode::Kind connectivity_from_string(const std::string& s) {
  if (s == "rooted") return ConnectivityMode::Kind::Rooted;
  if (s == "strong") return ConnectivityMode::Kind::StronglyConnected;
  if (s == "undirected") return ConnectivityMode::Kind::UndirectedConnected;
  throw std::invalid_argument("unknown connectivity '" + s + "'");
}

struct DesignCriterion {
  ConnectivityMode connectivity = ConnectivityMode::strong();
  Objective objective = Objective::MinNodes;
  std::map<int, Objective> overrides;
  bool augment = false;  // replace each design graph by comm restricted to its node set
  std::optional<WeightRule> weights;
  std::map<Edge, double> edge_costs;
  double balance_penalty = 1.0;

  WeightRule weight_rule() const {
    if (weights) return *weights;
    return connectivity.kind == ConnectivityMode::Kind::UndirectedConnected ? WeightRule::MetropolisHastings
                                                                            : WeightRule::RowStochastic;
  }
  Objective objective_for(int p) const {
    auto it = overrides.find(p);
    return it == overrides.end() ? objective : it->second;
  }
};

inline std::vector<std::vector<int>> users_by_component(int P, const std::vector<ComponentAgent>& inter) {
  std::vector<std::vector<int>> u(P);
  for (auto [p, i] : inter) {
    if (p < 1 || p > P) throw std::invalid_argument("interference component out of range");
    u[p - 1].push_back(i);
  }
  for (auto& v : u) v = detail::sorted_unique(v);
  return u;
}

// Roots actually used: the configured one, else the smallest interested agent.
inline ConnectivityMode resolve_mode(const ConnectivityMode& mode, int P, const std::vector<ComponentAgent>& inter) {
  if (mode.kind != ConnectivityMode::Kind::Rooted) return mode;
  auto users = users_by_component(P, inter);
  ConnectivityMode m = mode;
  for (int p = 1; p <= P; ++p)
    if (!m.roots.count(p) && !users[p - 1].empty()) m.roots[p] = users[p - 1].front();
  return m;
}

inline void check_agent_ids(const Graph& comm) {
  for (std::size_t k = 0; k < comm.size(); ++k)
    if (comm.nodes()[k] != int(k) + 1) throw std::invalid_argument("communication graph nodes must be 1..I");
}

// Every agent holds everything and every design graph is the communication graph.
inline EndLayout standard_layout(const Graph& comm, const Partition& part, const std::vector<ComponentAgent>& inter,
                                 WeightRule rule) {
  check_agent_ids(comm);
  auto wg = apply_weight_rule(comm, rule);
  return EndLayout(int(comm.size()), part, comm, inter, std::vector<WeightedGraph>(part.size(), wg));
}

inline EndLayout design_layout(const Graph& comm, const Partition& part, const std::vector<ComponentAgent>& inter,
                               const DesignCriterion& crit) {
  check_agent_ids(comm);
  const int P = part.size();
  const auto users = users_by_component(P, inter);
  const auto mode = resolve_mode(crit.connectivity, P, inter);
  using K = ConnectivityMode::Kind;
  if (mode.kind == K::UndirectedConnected && !comm.symmetric())
    throw PreconditionError("design_layout: undirected connectivity needs an undirected communication graph");

  std::vector<int> load(comm.size() + 1, 0);
  std::vector<WeightedGraph> design;
  for (int p = 1; p <= P; ++p) {
    const Objective obj = crit.objective_for(p);
    if (users[p - 1].empty()) throw InfeasibleDesign(p, "component has no interested agent");
    Graph gp;
    if (obj == Objective::None) {
      gp = comm;
    } else {
      SteinerInstance inst{comm, users[p - 1], std::nullopt, {}};
      if (obj == Objective::MinWeight) inst.costs = crit.edge_costs;
      if (obj == Objective::BalancedLoad)
        for (const auto& e : comm.edges()) {
          double base = inst.cost(e.from, e.to);
          inst.costs[e] = base * (1.0 + crit.balance_penalty * (load[e.from] + load[e.to]));
        }
      try {
        switch (mode.kind) {
          case K::Rooted:
            inst.root = mode.roots.at(p);
            inst.terminals.push_back(*inst.root);
            gp = (obj == Objective::MinNodes || obj == Objective::MinEdges) ? solve_udst(inst) : solve_dst(inst);
            break;
          case K::StronglyConnected:
            gp = solve_scss(inst);
            break;
          case K::UndirectedConnected:
            if (obj == Objective::MinNodes || obj == Objective::MinEdges) {
              std::optional<int> hub;
              if (auto it = mode.roots.find(p); it != mode.roots.end()) hub = it->second;
              gp = detail::min_depth_spanning_tree(restrict(comm, solve_ust(inst).nodes()), hub);
            } else {
              gp = solve_st(inst);
            }
            break;
        }
      } catch (const InfeasibleDesign& e) {
        throw InfeasibleDesign(p, e.what());
      }
      if (crit.augment) gp = restrict(comm, gp.nodes());
    }
    for (int v : gp.nodes()) ++load[v];
    design.push_back(apply_weight_rule(gp, crit.weight_rule()));
  }
  EndLayout L(int(comm.size()), part, comm, inter, std::move(design));
  auto viol = validate(L, mode);
  if (!viol.empty()) throw InfeasibleDesign(viol.front().component, viol.front().what);
  return L;
}

struct MinimalLayoutResult {
  std::optional<EndLayout> layout;
  std::vector<Violation> failures;
};

// Each design graph is comm restricted to the interested agents, if that satisfies the mode.
inline MinimalLayoutResult try_minimal_layout(const Graph& comm, const Partition& part,
                                              const std::vector<ComponentAgent>& inter,
                                              const ConnectivityMode& mode_in, WeightRule rule) {
  check_agent_ids(comm);
  const int P = part.size();
  const auto users = users_by_component(P, inter);
  const auto mode = resolve_mode(mode_in, P, inter);
  MinimalLayoutResult res;
  std::vector<Graph> gs;
  for (int p = 1; p <= P; ++p) {
    Graph g = restrict(comm, users[p - 1]);
    gs.push_back(g);
    if (g.empty()) {
      res.failures.push_back({p, "component has no interested agent"});
      continue;
    }
    switch (mode.kind) {
      case ConnectivityMode::Kind::Rooted: {
        int r = mode.roots.at(p);
        if (!g.has_node(r) || !is_rooted(g, r))
          res.failures.push_back({p, "restriction not rooted at " + std::to_string(r)});
        break;
      }
      case ConnectivityMode::Kind::StronglyConnected:
        if (!is_strongly_connected(g)) res.failures.push_back({p, "restriction not strongly connected"});
        break;
      case ConnectivityMode::Kind::UndirectedConnected:
        if (!g.symmetric() || !is_connected_undirected(Graph(g.nodes(), g.edges(), false)))
          res.failures.push_back({p, "restriction not connected"});
        break;
    }
  }
  if (!res.failures.empty()) return res;
  std::vector<WeightedGraph> design;
  for (const auto& g : gs) design.push_back(apply_weight_rule(g, rule));
  res.layout.emplace(int(comm.size()), part, comm, inter, std::move(design));
  return res;
}

// Scalars carried per round on each communication edge.
inline std::map<Edge, double> edge_loads(const EndLayout& L) {
  std::map<Edge, double> load;
  for (int p = 1; p <= L.num_components(); ++p)
    for (const auto& e : L.design(p).graph().edges())
      if (e.from != e.to) load[e] += L.dim(p);
  return load;
}

struct BandwidthEntry {
  Edge edge;
  double load = 0;
  double capacity = 0;
  bool overloaded = false;
};

inline std::vector<BandwidthEntry> bandwidth_report(const EndLayout& L, const std::map<Edge, double>& capacity) {
  std::vector<BandwidthEntry> out;
  for (auto [e, l] : edge_loads(L)) {
    auto it = capacity.find(e);
    double c = it == capacity.end() ? std::numeric_limits<double>::infinity() : it->second;
    out.push_back({e, l, c, l > c});
  }
  return out;
}

}  // namespace estnet
