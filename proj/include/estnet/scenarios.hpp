#pragma once

#include <queue>
#include <random>

#include "design.hpp"
#include "gne.hpp"
#include "graph_io.hpp"
#include "optim.hpp"

namespace estnet {

using Rng = std::mt19937_64;

// Random tree (each node attaches to an earlier one) plus extra edges with probability `density`.
inline Graph random_connected_graph(int n, double density, Rng& rng) {
  std::uniform_real_distribution<double> U(0, 1);
  std::vector<Edge> es;
  for (int v = 2; v <= n; ++v) {
    std::uniform_int_distribution<int> pick(1, v - 1);
    es.push_back({pick(rng), v});
  }
  for (int u = 1; u <= n; ++u)
    for (int v = u + 1; v <= n; ++v)
      if (U(rng) < density) es.push_back({u, v});
  std::vector<int> nodes(n);
  std::iota(nodes.begin(), nodes.end(), 1);
  return Graph(nodes, es, false);
}

// BFS parents with smallest-id tie-breaks; -1 when unreachable.
inline std::vector<int> bfs_parents(const Graph& g, int src, std::vector<int>* dist = nullptr) {
  std::vector<int> par(g.size(), -1), d(g.size(), -1);
  std::queue<int> Q;
  d[g.index(src)] = 0;
  Q.push(src);
  while (!Q.empty()) {
    int u = Q.front();
    Q.pop();
    for (int v : g.out_neighbors(u))
      if (d[g.index(v)] < 0) {
        d[g.index(v)] = d[g.index(u)] + 1;
        par[g.index(v)] = u;
        Q.push(v);
      }
  }
  if (dist) *dist = d;
  return par;
}

// ---------------------------------------------------------------- unicast rate allocation

struct UnicastScenario {
  int agents = 12;
  double density = 0.15;
  int max_path_length = 4;
  double utility = 10.0;
  double capacity_lo = 0.5, capacity_hi = 1.5;
  std::vector<int> relays;  // users that send nothing
  double alpha = 0.1, beta = 1e-3;
  std::uint64_t seed = 1;
};

struct UnicastInstance {
  Graph comm;
  std::vector<std::vector<int>> routes;       // node sequence per user, empty for relays
  std::vector<Edge> links;                     // active link p at index p-1, stored (min, max)
  std::vector<std::vector<int>> user_links;    // ℒ_i as link ids
  std::vector<double> psi, capacity;
  double utility = 10.0;
  AggregativeGameSpec game;
  std::vector<EndLayout> standard;    // {σ, λ}
  std::vector<EndLayout> customized;  // {σ, λ}
};

inline double logistic(double s) { return 1.0 / (1.0 + std::exp(-s)); }

// Builds game and layouts from fixed routes; ψ and capacities are drawn from rng.
inline UnicastInstance build_unicast_from_routes(const Graph& comm, const std::vector<std::vector<int>>& routes, double utility,
                                                 double cap_lo, double cap_hi, Rng& rng) {
  if (!is_connected_undirected(comm)) throw PreconditionError("unicast: communication graph is disconnected");
  const int I = int(comm.size());
  if (int(routes.size()) != I) throw std::invalid_argument("unicast: one route per user is required");
  UnicastInstance u;
  u.comm = comm;
  u.routes = routes;
  u.utility = utility;
  std::set<Edge> active;
  for (int i = 1; i <= I; ++i) {
    const auto& r = routes[i - 1];
    if (!r.empty() && r.front() != i) throw std::invalid_argument("unicast: route of user " + std::to_string(i) + " must start at i");
    for (std::size_t k = 0; k + 1 < r.size(); ++k) {
      if (!comm.has_edge(r[k], r[k + 1])) throw std::invalid_argument("unicast: route uses a missing edge");
      active.insert({std::min(r[k], r[k + 1]), std::max(r[k], r[k + 1])});
    }
  }
  u.links.assign(active.begin(), active.end());
  const int P = int(u.links.size());
  if (P == 0) throw std::invalid_argument("unicast: no active links");
  auto link_id = [&](int a, int b) {
    Edge e{std::min(a, b), std::max(a, b)};
    return int(std::lower_bound(u.links.begin(), u.links.end(), e) - u.links.begin()) + 1;
  };
  u.user_links.resize(I);
  for (int i = 1; i <= I; ++i) {
    const auto& r = routes[i - 1];
    for (std::size_t k = 0; k + 1 < r.size(); ++k) u.user_links[i - 1].push_back(link_id(r[k], r[k + 1]));
    auto& v = u.user_links[i - 1];
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  std::uniform_real_distribution<double> U(0, 1), C(cap_lo, cap_hi);
  for (int p = 0; p < P; ++p) u.psi.push_back(U(rng));
  for (int p = 0; p < P; ++p) u.capacity.push_back(C(rng));

  auto& g = u.game;
  g.dims.assign(I, 1);
  g.sigma_part = Partition::scalars(P);
  g.lambda_part = Partition::scalars(P);
  std::vector<int> nusers(P, 0);
  for (const auto& ls : u.user_links)
    for (int p : ls) ++nusers[p - 1];
  for (int i = 1; i <= I; ++i)
    for (int p : u.user_links[i - 1]) {
      g.B[{p, i}] = Mat::Ones(1, 1);
      g.A[{p, i}] = Mat::Ones(1, 1);
      g.a[{p, i}] = Vec::Constant(1, u.capacity[p - 1] / nusers[p - 1]);
      g.sigma_interference.push_back({p, i});
      g.lambda_interference.push_back({p, i});
    }
  const auto psi = u.psi;
  const auto links = u.user_links;
  g.grad_x = [psi, links, utility](int i, const Vec& xi, const LocalBlocks& s) {
    double v = -utility / (xi[0] + 1.0);
    for (int p : links[i - 1]) v += psi[p - 1] * logistic(s(p)[0]);
    return Vec::Constant(1, v);
  };
  g.grad_sigma = [psi](int, int q, const Vec& xi, const LocalBlocks& s) {
    double l = logistic(s(q)[0]);
    return Vec::Constant(1, psi[q - 1] * xi[0] * l * (1 - l));
  };
  g.fused_gradient = [psi, links, utility](int i, Eigen::Ref<const Vec> xi, const LocalBlocks& s, Eigen::Ref<Vec> out) {
    double v = -utility / (xi[0] + 1.0);
    for (int p : links[i - 1]) {
      double l = logistic(s(p)[0]);
      v += psi[p - 1] * (l + xi[0] * l * (1 - l));
    }
    out[0] = v;
  };
  g.sets.assign(I, box(1, 0.0, 1.0));
  g.sense = ConstraintSense::Inequality;

  const Partition part = Partition::scalars(P);
  const auto inter = g.sigma_interference;
  u.standard.push_back(standard_layout(comm, part, inter, WeightRule::MetropolisHastings));
  u.standard.push_back(standard_layout(comm, part, g.lambda_interference, WeightRule::MetropolisHastings));
  DesignCriterion crit;
  crit.connectivity = ConnectivityMode::undirected();
  crit.objective = Objective::MinEdges;
  crit.weights = WeightRule::MetropolisHastings;
  u.customized.push_back(design_layout(comm, part, inter, crit));
  u.customized.push_back(design_layout(comm, part, g.lambda_interference, crit));
  return u;
}

// Routes are shortest paths toward a random destination at most max_path_length hops away.
inline UnicastInstance build_unicast(const UnicastScenario& sc) {
  if (sc.agents < 2) throw std::invalid_argument("unicast: at least two users");
  Rng rng(sc.seed);
  Graph comm = random_connected_graph(sc.agents, sc.density, rng);
  std::vector<std::vector<int>> routes(sc.agents);
  std::set<int> relays(sc.relays.begin(), sc.relays.end());
  for (int i = 1; i <= sc.agents; ++i) {
    std::vector<int> dist;
    auto par = bfs_parents(comm, i, &dist);
    std::vector<int> cand;
    for (int j = 1; j <= sc.agents; ++j)
      if (dist[j - 1] >= 1 && dist[j - 1] <= sc.max_path_length) cand.push_back(j);
    std::uniform_int_distribution<std::size_t> pick(0, cand.size() - 1);
    int dst = cand[pick(rng)];  // drawn for relays too, keeps the stream aligned
    if (relays.count(i)) continue;
    std::vector<int> r{dst};
    while (r.back() != i) r.push_back(par[r.back() - 1]);
    std::reverse(r.begin(), r.end());
    routes[i - 1] = r;
  }
  return build_unicast_from_routes(comm, routes, sc.utility, sc.capacity_lo, sc.capacity_hi, rng);
}

// Seven users; link (4,5) is shared by users 3 and 5, which are not neighbours; user 7 only relays.
inline UnicastInstance build_unicast_seven(std::uint64_t seed = 1) {
  Graph comm({1, 2, 3, 4, 5, 6, 7}, {{1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 7}, {7, 1}, {2, 6}}, false);
  std::vector<std::vector<int>> routes{{1, 2, 3}, {2, 6, 5}, {3, 4, 5}, {4, 3, 2}, {5, 4}, {6, 7, 1}, {}};
  Rng rng(seed);
  return build_unicast_from_routes(comm, routes, 10.0, 0.5, 1.5, rng);
}

inline json to_json(const UnicastInstance& u) {
  json j;
  j["comm"] = to_json(u.comm);
  j["routes"] = u.routes;
  json links = json::array();
  for (const auto& e : u.links) links.push_back({e.from, e.to});
  j["links"] = links;
  j["user_links"] = u.user_links;
  j["psi"] = u.psi;
  j["capacity"] = u.capacity;
  j["utility"] = u.utility;
  return j;
}

// ---------------------------------------------------------------- sensor networks

struct SensorScenario {
  int sensors = 20;
  int sources = 8;
  double r_s = 0.3;
  double rc_min = 0.3;
  double rc_width = 0.1;
  int nh = 10;
  double noise_variance = 0.1;
  double active_fraction = 1.0;  // share of sources with a nonzero signal
  bool lasso = false;
  int max_resample = 10000;
  std::uint64_t seed = 1;
};

struct SensorInstance {
  Graph comm;
  std::vector<std::array<double, 2>> sensor_pos, source_pos;
  std::vector<double> rc;
  std::vector<ComponentAgent> interference;
  std::vector<int> attached;  // sources sensed by nobody, attached to the nearest sensor
  SeparableProblem prob;
  std::vector<Mat> output_matrices;  // H_i, columns follow the footprint
  Vec y_true;
  ReferenceSolution reference;
  std::vector<EndLayout> layouts;  // {standard, customized}
  const EndLayout& standard() const { return layouts[0]; }
  const EndLayout& customized() const { return layouts[1]; }
};

inline SensorInstance build_sensor_problem(const SensorScenario& sc) {
  if (sc.sensors < 1 || sc.sources < 1) throw std::invalid_argument("sensor scenario: empty instance");
  Rng rng(sc.seed);
  std::uniform_real_distribution<double> U(0, 1);
  auto dist = [](const std::array<double, 2>& a, const std::array<double, 2>& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); };
  SensorInstance s;
  std::vector<int> nodes(sc.sensors);
  std::iota(nodes.begin(), nodes.end(), 1);
  bool ok = false;
  for (int attempt = 0; attempt < sc.max_resample && !ok; ++attempt) {
    s.sensor_pos.assign(sc.sensors, {});
    s.rc.assign(sc.sensors, 0);
    for (auto& p : s.sensor_pos) p = {U(rng), U(rng)};
    for (auto& r : s.rc) r = sc.rc_min + sc.rc_width * U(rng);
    std::vector<Edge> es;
    for (int i = 1; i <= sc.sensors; ++i)
      for (int j = 1; j <= sc.sensors; ++j)
        if (i != j && dist(s.sensor_pos[i - 1], s.sensor_pos[j - 1]) < s.rc[i - 1]) es.push_back({i, j});
    s.comm = Graph(nodes, es, true);
    ok = is_strongly_connected(s.comm);
  }
  if (!ok) throw PreconditionError("sensor scenario: no strongly connected network within the resample cap");

  s.source_pos.assign(sc.sources, {});
  for (auto& p : s.source_pos) p = {U(rng), U(rng)};
  std::vector<std::vector<int>> fp(sc.sensors);
  for (int p = 1; p <= sc.sources; ++p) {
    bool seen = false;
    for (int i = 1; i <= sc.sensors; ++i)
      if (dist(s.sensor_pos[i - 1], s.source_pos[p - 1]) < sc.r_s) fp[i - 1].push_back(p), seen = true;
    if (!seen) {
      int best = 1;
      for (int i = 2; i <= sc.sensors; ++i)
        if (dist(s.sensor_pos[i - 1], s.source_pos[p - 1]) < dist(s.sensor_pos[best - 1], s.source_pos[p - 1])) best = i;
      fp[best - 1].push_back(p);
      std::sort(fp[best - 1].begin(), fp[best - 1].end());
      s.attached.push_back(p);
    }
  }
  for (int i = 1; i <= sc.sensors; ++i)
    for (int p : fp[i - 1]) s.interference.push_back({p, i});

  s.y_true = Vec::Zero(sc.sources);
  for (int p = 0; p < sc.sources; ++p) s.y_true[p] = U(rng);
  if (sc.active_fraction < 1.0) {
    std::vector<int> idx(sc.sources);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    int keep = int(std::lround(sc.active_fraction * sc.sources));
    for (int k = keep; k < sc.sources; ++k) s.y_true[idx[k]] = 0;
  }
  std::vector<int> users(sc.sources, 0);
  for (auto [p, i] : s.interference) ++users[p - 1];

  std::normal_distribution<double> noise(0.0, 1.0);
  const double sd = std::sqrt(sc.noise_variance);
  s.prob.partition = Partition::scalars(sc.sources);
  for (int i = 1; i <= sc.sensors; ++i) {
    const auto& f = fp[i - 1];
    const int m = int(f.size());
    Mat H(sc.nh, m);
    for (int r = 0; r < sc.nh; ++r)
      for (int c = 0; c < m; ++c) H(r, c) = U(rng);
    for (int r = 0; r < sc.nh && m > 0; ++r) H.row(r).normalize();
    Vec yi(m);
    for (int c = 0; c < m; ++c) yi[c] = s.y_true[f[c] - 1];
    Vec h = (m ? Vec(H * yi) : Vec::Zero(sc.nh));
    for (int r = 0; r < sc.nh; ++r) h[r] += sd * noise(rng);
    s.output_matrices.push_back(H);
    LocalCost cost = m ? least_squares_cost(f, H, h) : quadratic_cost({}, Mat(), Vec(), h.squaredNorm());
    if (sc.lasso && m) {
      cost.l1 = Vec(m);
      for (int c = 0; c < m; ++c) cost.l1[c] = 1.0 / users[f[c] - 1];
    }
    s.prob.costs.push_back(std::move(cost));
  }
  s.reference = reference_solution(s.prob);

  s.layouts.push_back(standard_layout(s.comm, s.prob.partition, s.interference, WeightRule::ColumnStochastic));
  DesignCriterion crit;
  crit.connectivity = ConnectivityMode::strong();
  crit.objective = Objective::MinNodes;
  crit.weights = WeightRule::ColumnStochastic;
  s.layouts.push_back(design_layout(s.comm, s.prob.partition, s.interference, crit));
  return s;
}

inline SensorInstance build_regression(SensorScenario sc) {
  sc.lasso = false;
  return build_sensor_problem(sc);
}

inline SensorInstance build_lasso(SensorScenario sc) {
  sc.lasso = true;
  return build_sensor_problem(sc);
}

// ---------------------------------------------------------------- synthetic instances

struct RandomGame {
  GameSpec game;
  Mat G;
  Vec g;
  Vec x_star;
};

// F(x) = Gx + g with scalar actions; off-diagonal pattern drawn with probability `sparsity`.
// The diagonal dominates the symmetric part, so G + Gᵀ ≻ 0.
inline RandomGame build_random_quadratic_game(int I, double sparsity, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> U(0, 1), S(-1, 1);
  Mat G = Mat::Zero(I, I);
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < I; ++j)
      if (i != j && U(rng) < sparsity) G(i, j) = S(rng);
  for (int i = 0; i < I; ++i) G(i, i) = 0.5 * (G.row(i).cwiseAbs().sum() + G.col(i).cwiseAbs().sum()) + 0.5 + U(rng);
  Vec g(I);
  for (auto& v : g) v = S(rng);
  RandomGame r;
  r.G = G;
  r.g = g;
  r.game = make_quadratic_game(G, g, std::vector<int>(I, 1));
  r.x_star = G.partialPivLu().solve(-g);
  return r;
}

struct RandomSeparable {
  SeparableProblem prob;
  Vec y_star;
};

// Each agent reads each component with probability `sparsity`; every component gets at least one reader.
// f_i = ½vᵀHv - hᵀv with H = MᵀM + 0.1·I.
inline RandomSeparable build_random_separable(int I, int P, double sparsity, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> U(0, 1), S(-1, 1);
  std::vector<std::vector<int>> fp(I);
  for (int i = 0; i < I; ++i)
    for (int p = 1; p <= P; ++p)
      if (U(rng) < sparsity) fp[i].push_back(p);
  std::uniform_int_distribution<int> who(0, I - 1);
  for (int p = 1; p <= P; ++p) {
    bool seen = false;
    for (const auto& f : fp) seen = seen || std::binary_search(f.begin(), f.end(), p);
    if (!seen) {
      auto& f = fp[who(rng)];
      f.insert(std::lower_bound(f.begin(), f.end(), p), p);
    }
  }
  RandomSeparable r;
  r.prob.partition = Partition::scalars(P);
  for (int i = 0; i < I; ++i) {
    const int m = int(fp[i].size());
    if (m == 0) {
      r.prob.costs.push_back(quadratic_cost({}, Mat(), Vec()));
      continue;
    }
    Mat M(m, m);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) M(a, b) = S(rng);
    Mat H = M.transpose() * M + 0.1 * Mat::Identity(m, m);
    Vec h(m);
    for (auto& v : h) v = S(rng);
    r.prob.costs.push_back(quadratic_cost(fp[i], H, h));
  }
  r.y_star = reference_solution(r.prob).y;
  return r;
}

// Dense textual dump of a separable problem.
inline json to_json(const SeparableProblem& prob) {
  json j;
  j["partition"] = prob.partition.dims;
  json agents = json::array();
  for (const auto& c : prob.costs) {
    json a;
    a["footprint"] = c.footprint;
    json H = json::array();
    for (Eigen::Index r = 0; r < c.H.rows(); ++r) {
      std::vector<double> row(c.H.cols());
      for (Eigen::Index k = 0; k < c.H.cols(); ++k) row[k] = c.H(r, k);
      H.push_back(row);
    }
    a["H"] = H;
    a["h"] = std::vector<double>(c.h.data(), c.h.data() + c.h.size());
    a["c"] = c.c;
    if (c.has_l1()) a["l1"] = std::vector<double>(c.l1.data(), c.l1.data() + c.l1.size());
    agents.push_back(a);
  }
  j["agents"] = agents;
  return j;
}

inline json to_json(const SensorInstance& s) {
  json j;
  j["comm"] = to_json(s.comm);
  json sp = json::array(), so = json::array();
  for (const auto& p : s.sensor_pos) sp.push_back({p[0], p[1]});
  for (const auto& p : s.source_pos) so.push_back({p[0], p[1]});
  j["sensor_positions"] = sp;
  j["source_positions"] = so;
  j["rc"] = s.rc;
  j["attached_sources"] = s.attached;
  j["problem"] = to_json(s.prob);
  j["y_true"] = std::vector<double>(s.y_true.data(), s.y_true.data() + s.y_true.size());
  j["y_star"] = std::vector<double>(s.reference.y.data(), s.reference.y.data() + s.reference.y.size());
  return j;
}

}  // namespace estnet
