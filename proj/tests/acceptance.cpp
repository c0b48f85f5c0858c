// One PASS/FAIL line per acceptance criterion. Tolerances and budgets are pinned below.
// Usage: acceptance [--expect-red name,...] [--only name,...]
// With --expect-red the exit code ignores the listed criteria; their lines still print FAIL.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "oracles.hpp"

using namespace estnet;

namespace {

constexpr double kRatioSlack = 1e-9, kNeStop = 1e-10;
constexpr double kGridTol = 1e-3;
constexpr double kXTol = 1e-2, kKktTol = 1e-3, kInvariantTol = 1e-10;
constexpr double kBoundSlack = 1e-6, kMeritDrop = 1e-3;
constexpr double kEquivTol = 1e-10;
constexpr double kMassTol = 1e-10, kConsensusTol = 1e-3, kMeritTol = 1e-2;
constexpr double kAdmmTol = 1e-6;
constexpr double kCoupledTol = 1e-4;

struct Outcome {
  bool ok = true;
  std::ostringstream detail;
  std::vector<std::string> failed;
  void check(bool c, const std::string& why) {
    if (!c) ok = false, failed.push_back(why);
  }
  std::string text() const {
    std::string s = detail.str();
    for (std::size_t i = 0; i < failed.size() && i < 6; ++i) s += (i ? ", " : " | failed: ") + failed[i];
    if (failed.size() > 6) s += ", ...";
    return s;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::set<std::string> split(const std::string& s) {
  std::set<std::string> out;
  std::stringstream ss(s);
  for (std::string t; std::getline(ss, t, ',');)
    if (!t.empty()) out.insert(t);
  return out;
}

EndLayout undirected_layout(const Graph& comm, const Partition& part, const std::vector<ComponentAgent>& inter,
                            WeightRule w = WeightRule::MetropolisHastings) {
  DesignCriterion c;
  c.connectivity = ConnectivityMode::undirected();
  c.objective = Objective::MinEdges;
  c.weights = w;
  return design_layout(comm, part, inter, c);
}

// ---------------------------------------------------------------- NE

void ne_rate(Outcome& o) {
  double worst = -1;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    auto rg = build_random_quadratic_game(5, 0.3, s);
    Rng rng(100 + s);
    auto L = undirected_layout(random_connected_graph(5, 0.5, rng), rg.game.partition(), rg.game.interference_edges());
    auto C = ne_rate_constants(L, rg.game);
    if (!C.certified) {
      o.check(false, "seed " + std::to_string(s) + " uncertified: " + C.reason);
      continue;
    }
    const double a = best_alpha(C), rho = C.rho(a);
    NeIteration it(L, rg.game);
    Vec ys = embed_consensus(L, rg.x_star), y = Vec::Zero(L.stacked_size());
    double d = xi_norm_sq(L, C.Q, y - ys);
    int k = 0;
    for (; k < 1000000 && (y - ys).norm() >= kNeStop; ++k) {
      y = it.step(y, a);
      const double dn = xi_norm_sq(L, C.Q, y - ys);
      worst = std::max(worst, dn / d - rho);
      if (dn / d > rho + kRatioSlack) {
        o.check(false, "seed " + std::to_string(s) + " ratio above rho at k=" + std::to_string(k));
        break;
      }
      d = dn;
    }
    o.check((y - ys).norm() < kNeStop, "seed " + std::to_string(s) + " did not reach 1e-10");
  }
  o.detail << "20 seeds, max(ratio - rho) = " << worst;
}

void ne_star(Outcome& o) {
  double dev = 0;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    auto rg = build_random_quadratic_game(5, 0.4, s);
    rg.game.sets.assign(5, box(1, -0.3, 0.4));
    auto L = full_information_layout(rg.game);
    NeIteration it(L, rg.game);
    const double a = *rg.game.mu / (*rg.game.theta * *rg.game.theta);
    Vec x = Vec::Zero(5), y = Vec::Zero(L.stacked_size());
    for (int k = 0; k < 100; ++k) {
      x = centralized_pg_step(rg.game, x, a);
      y = it.step(y, a);
      dev = std::max(dev, (it.actions(y) - x).cwiseAbs().maxCoeff());
    }
  }
  o.check(dev == 0.0, "nonzero deviation");
  o.detail << "10 seeds x 100 steps, max deviation " << dev;
}

void ne_bound(Outcome& o) {
  double worst_in = 0, edge_min = 1e300;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    auto rg = build_random_quadratic_game(5, 0.5, s);
    auto L = full_information_layout(rg.game);
    const double amax = 2 * *rg.game.mu / std::pow(*rg.game.theta, 2);
    for (int k = 1; k <= 50; ++k) {
      auto c = certify_theorem1(L, rg.game, amax * (k - 0.5) / 50.0);
      worst_in = std::max(worst_in, c.rho);
      o.check(c.certified && c.rho < 1, "seed " + std::to_string(s) + " grid point " + std::to_string(k));
    }
    auto e = certify_theorem1(L, rg.game, amax);
    edge_min = std::min(edge_min, e.rho);
    o.check(e.rho >= 1 - kGridTol, "seed " + std::to_string(s) + " rho < 1 at the ceiling");
  }
  o.detail << "5 seeds x 50 points, max rho below ceiling " << worst_in << ", min rho at ceiling " << edge_min;
}

// ---------------------------------------------------------------- GNE

RunTrace gne_run(const EndLayout& Ls, const EndLayout& Ll, const AggregativeGameSpec& g, const Vec& xs, int max_iters, double kkt_tol,
                 double* cost = nullptr) {
  GneOperators ops(Ls, Ll, g);
  if (cost) *cost = ops.cost_per_iteration();
  GneSolveOptions opt;
  opt.stop.max_iters = max_iters;
  opt.stop.stride = std::max(1, max_iters / 10);
  opt.reference = xs;
  opt.x_tol = kXTol;
  opt.kkt_tol = kkt_tol;
  opt.kkt_every = 100;
  return gne_solve(ops, 0.1, 1e-3, opt, Vec::Zero(g.x_part().total()));
}

Vec final_x(const RunTrace& t, int n) {
  Vec x(n);
  for (int i = 0; i < n; ++i) x[i] = t.summary.at("x_" + std::to_string(i + 1));
  return x;
}

void gne_unicast(Outcome& o) {
  auto t0 = std::chrono::steady_clock::now();
  UnicastScenario sc;  // I = 12, max path 4, U = 10 log(x+1), ψ ~ U[0,1]
  sc.seed = 1;
  auto u = build_unicast(sc);
  const int P = int(u.links.size());
  auto [xs, ls] = reference_vgne(u.game, 0.05);
  double cs = 0, cc = 0;
  auto ts = gne_run(u.standard[0], u.standard[1], u.game, xs, 12000000, kKktTol, &cs);
  auto tc = gne_run(u.customized[0], u.customized[1], u.game, xs, 12000000, kKktTol, &cc);
  for (auto [name, t] : {std::pair{"standard", &ts}, std::pair{"customized", &tc}}) {
    const std::string n = name;
    o.check(t->converged, n + " did not converge");
    o.check(t->last("dist_x") <= kXTol, n + " dist_x");
    o.check(t->last("residual") <= kKktTol, n + " KKT residual");
    o.check(t->summary.at("max_invariant") <= kInvariantTol, n + " invariant");
  }
  const double cross = (final_x(ts, 12) - final_x(tc, 12)).norm();
  o.check(cross <= kXTol, "cross-arm distance");
  o.check(cc < cs, "customized cost per iteration not below standard");
  const double main_s = seconds_since(t0);
  o.check(main_s < 60, "seeded instance over 60 s");
  o.detail << "seed 1 (P=" << P << "): iterations std " << ts.iterations << " / cus " << tc.iterations << ", cross-arm "
           << cross << ", max invariant " << std::max(ts.summary.at("max_invariant"), tc.summary.at("max_invariant"))
           << ", cost/iter std " << cs << " / cus " << cc << ", " << main_s << " s";

  // Qualitative claims on 10 seeds, measured as iterations to ‖x − x*‖ ≤ 1e-2.
  auto t1 = std::chrono::steady_clock::now();
  int faster = 0, smaller = 0;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    bool fast = false;
    UnicastInstance v;
    if (s == 1) {
      v = u;
      fast = tc.summary.at("iterations_to_x_tol") <= ts.summary.at("iterations_to_x_tol");
    } else {
      sc.seed = s;
      v = build_unicast(sc);
      auto [x2, l2] = reference_vgne(v.game, 0.05);
      auto c = gne_run(v.customized[0], v.customized[1], v.game, x2, 3000000, INFINITY);
      const int kc = int(c.summary.at("iterations_to_x_tol"));
      if (kc > 0) {
        // The standard arm only needs to run as long as the customized one did.
        auto st = gne_run(v.standard[0], v.standard[1], v.game, x2, kc, INFINITY);
        const int ks = int(st.summary.at("iterations_to_x_tol"));
        fast = ks < 0 || kc <= ks;
      }
    }
    faster += fast;
    smaller += mean_estimate_size(v.customized[0]) < double(v.links.size());
  }
  o.check(faster >= 8, "customized faster on fewer than 8 seeds");
  o.check(smaller >= 8, "customized estimates smaller on fewer than 8 seeds");
  o.detail << "; 10 seeds: customized not slower on " << faster << ", smaller estimates on " << smaller << " (" << seconds_since(t1)
           << " s)";
}

// ---------------------------------------------------------------- optimization

struct AbcRun {
  bool checks = true;
  double gap = -1e300, drop = 0;
};

// comm density 1 with augmented designs gives cliques on the holders; 0.3 without augmentation gives trees.
AbcRun abc_run(std::uint64_t s, double density, bool augment) {
  auto rs = build_random_separable(10, 15, 0.2, s);
  Rng rng(s);
  DesignCriterion c;
  c.connectivity = ConnectivityMode::undirected();
  c.objective = Objective::MinEdges;
  c.weights = WeightRule::LazyMetropolis;
  c.augment = augment;
  auto L = design_layout(random_connected_graph(10, density, rng), rs.prob.partition, rs.prob.interference(), c);
  auto m = augdgm_matrices(L);
  AbcRun r;
  r.checks = abc_check(m, L).ok();
  AbcSolveOptions opt;
  opt.iterations = 10000;
  opt.reference = rs.y_star;
  auto tr = abc_solve(m, L, rs.prob, 0.5 / rs.prob.lipschitz(), opt);
  const double h = tr.summary.at("bound");
  auto k = tr.column("k"), M = tr.column("merit");
  for (std::size_t i = 1; i < k.size(); ++i) r.gap = std::max(r.gap, k[i] * M[i] - h);
  r.drop = k.back() == 10000 ? M.back() / M[10] : INFINITY;
  return r;
}

void abc_rate(Outcome& o) {
  auto t0 = std::chrono::steady_clock::now();
  double gap = -1e300, drop = 0, sparse_gap = -1e300, sparse_drop = 0;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    auto r = abc_run(s, 1.0, true);
    o.check(r.checks, "seed " + std::to_string(s) + " abc_check");
    o.check(r.gap <= kBoundSlack, "seed " + std::to_string(s) + " k*M above bound");
    o.check(r.drop <= kMeritDrop, "seed " + std::to_string(s) + " merit drop " + std::to_string(r.drop));
    gap = std::max(gap, r.gap), drop = std::max(drop, r.drop);
    // Tree designs: the bound holds but the 1/k regime starts well after k = 10. Reported, not gated.
    auto t = abc_run(s, 0.3, false);
    o.check(t.checks && t.gap <= kBoundSlack, "seed " + std::to_string(s) + " tree designs above bound");
    sparse_gap = std::max(sparse_gap, t.gap), sparse_drop = std::max(sparse_drop, t.drop);
  }
  const double t = seconds_since(t0);
  o.check(t < 30, "over 30 s");
  o.detail << "10 problems, max(k*M - bound) " << gap << ", worst M(1e4)/M(10) " << drop << "; tree designs: max(k*M - bound) "
           << sparse_gap << ", worst drop " << sparse_drop << " (not gated), " << t << " s";
}

void abc_equivalence(Outcome& o) {
  double dev = 0;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    auto rs = build_random_separable(8, 8, 0.4, s);
    Rng rng(s);
    auto L = undirected_layout(random_connected_graph(8, 0.3, rng), rs.prob.partition, rs.prob.interference(), WeightRule::LazyMetropolis);
    auto m = augdgm_matrices(L);
    AbcState a{Vec::Zero(L.stacked_size()), Vec::Zero(L.stacked_size())};
    auto g = augdgm_init(L, rs.prob);
    const double gamma = 0.5 / rs.prob.lipschitz();
    for (int k = 0; k < 500; ++k) {
      a = abc_step(m, L, rs.prob, a, gamma);
      g = augdgm_step(L, rs.prob, g, gamma);
      dev = std::max(dev, (a.y - g.y).cwiseAbs().maxCoeff());
    }
  }
  o.check(dev <= kEquivTol, "trajectories differ");
  o.detail << "5 seeds x 500 steps, max deviation " << dev;
}

void pushsum_regression(Outcome& o) {
  auto t0 = std::chrono::steady_clock::now();
  SensorScenario sc;  // 20 sensors, 8 sources, noise variance 0.1
  auto inst = build_regression(sc);
  const auto& L = inst.customized();
  auto sched = round_robin_schedule(L, 3);
  o.check(check_schedule(L, sched, 3).empty(), "schedule not 3-strongly connected");
  PushSumSolveOptions opt;
  opt.max_iters = 100000;
  opt.stride = 1000;
  opt.q_connectivity = 3;
  opt.reference = inst.reference.y;
  opt.consensus_tol = kConsensusTol;
  opt.merit_tol = kMeritTol;
  auto tr = pushsum_solve(L, sched, inst.prob, StepSchedule{1.0, 0.51}, opt);
  const double mass = tr.summary.at("max_mass_error"), avg = tr.summary.at("max_average_identity_error");
  o.check(mass <= kMassTol, "mass conservation");
  o.check(avg <= kMassTol, "averaged identity");
  o.check(tr.converged, "consensus/merit tolerances not reached in 1e5 iterations");
  const double t = seconds_since(t0);
  o.check(t < 120, "over 120 s");
  o.detail << "mass err " << mass << ", relative identity err " << avg << " (peak |z| " << tr.summary.at("peak_z_bar") << "), after " << tr.iterations << " iterations consensus "
           << tr.last("consensus_err") << " merit " << tr.last("merit") << ", " << t << " s";
}

void admm(Outcome& o) {
  int worst_it = 0;
  double worst = 0;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    auto rs = build_random_separable(8, 6, 0.4, s);
    Rng rng(s);
    auto L = undirected_layout(random_connected_graph(8, 0.3, rng), rs.prob.partition, rs.prob.interference());
    OptimSolveOptions opt;
    opt.stop.max_iters = 5000;
    opt.stop.tol = kAdmmTol;
    opt.stop.stride = 5000;
    opt.reference = rs.y_star;
    auto tr = admm_solve(L, rs.prob, 0.5, opt);
    const double d = tr.last("dist");
    o.check(tr.converged && d <= kAdmmTol, "seed " + std::to_string(s));
    worst = std::max(worst, d);
    worst_it = std::max(worst_it, tr.iterations);
    for (double a : {0.0, 1.0}) {
      bool threw = false;
      try {
        admm_solve(L, rs.prob, a, opt);
      } catch (const std::invalid_argument&) {
        threw = true;
      }
      o.check(threw, "alpha " + std::to_string(a) + " accepted");
    }
  }
  o.detail << "10 instances, max block distance " << worst << ", max iterations " << worst_it << ", alpha 0 and 1 rejected";
}

// ---------------------------------------------------------------- design

std::vector<int> pick(const Graph& host, std::mt19937_64& rng, int k) {
  std::vector<int> v = host.nodes();
  std::shuffle(v.begin(), v.end(), rng);
  v.resize(std::min<std::size_t>(k, v.size()));
  std::sort(v.begin(), v.end());
  return v;
}

void design_oracles(Outcome& o) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> U(0.5, 4.0);
  double worst_ratio = 0;
  int st_n = 0, udst_n = 0, scss_n = 0;
  for (int t = 0; t < 50; ++t) {
    const int n = 5 + t % 4;
    Graph ug = oracle::random_host(n, 0.4, rng);
    SteinerInstance st{ug, pick(ug, rng, 3 + t % 3), std::nullopt, {}};
    for (const auto& e : ug.edges())
      if (e.from < e.to) st.costs[e] = U(rng);
    const double ex = oracle::exact_st_cost(st);
    if (std::isfinite(ex)) {
      ++st_n;
      Graph s = solve_st(st);
      worst_ratio = std::max(worst_ratio, steiner_cost(st, s) / ex);
      o.check(steiner_cost(st, s) <= 2 * ex + 1e-12 && is_connected_undirected(s), "ST instance " + std::to_string(t));
    }
    Graph dg = oracle::random_host(n, 0.35, rng, true);
    auto T = pick(dg, rng, 3);
    SteinerInstance rooted{dg, T, T.front(), {}};
    const int er = oracle::exact_min_nodes(dg, T, [&](const Graph& r) { return oracle::reaches_all(r, T.front()); });
    if (er >= 0) {
      ++udst_n;
      try {
        Graph s = solve_udst(rooted);
        o.check(oracle::reaches_all(s, T.front()) && int(s.size()) <= er + int(T.size()), "UDST instance " + std::to_string(t));
      } catch (const InfeasibleDesign&) {
        o.check(false, "UDST feasible instance rejected " + std::to_string(t));
      }
    }
    const int es = oracle::exact_min_nodes(dg, T, oracle::strongly_connected);
    if (es >= 0) {
      ++scss_n;
      try {
        Graph s = solve_scss({dg, T, std::nullopt, {}});
        o.check(oracle::strongly_connected(s) && int(s.size()) <= es + int(T.size()), "SCSS instance " + std::to_string(t));
      } catch (const InfeasibleDesign&) {
        o.check(false, "SCSS feasible instance rejected " + std::to_string(t));
      }
    }
  }
  // y_1 has to travel 1 -> 3 -> 4, so agent 3 relays a component it does not use.
  Graph comm({1, 2, 3, 4}, {{1, 3}, {3, 4}, {4, 2}, {2, 3}, {3, 2}, {2, 1}});
  DesignCriterion c;
  c.connectivity = ConnectivityMode::rooted({{1, 1}, {2, 2}});
  auto L = design_layout(comm, Partition::scalars(2), {{1, 1}, {1, 4}, {2, 2}, {2, 3}, {2, 4}}, c);
  const bool relay = L.design(1).graph().has_node(3) && !std::count(L.users(1).begin(), L.users(1).end(), 3);
  o.check(relay, "relay node missing from the design of component 1");
  o.detail << "50 hosts: ST " << st_n << " feasible (worst ratio " << worst_ratio << "), UDST " << udst_n << ", SCSS " << scss_n
           << " feasible all solved; relay 3 in design 1: " << (relay ? "yes" : "no");
}

// ---------------------------------------------------------------- constraint-coupled dual

void coupled(Outcome& o) {
  // min (x1 - 1)² + 2(x2 - ½)²  s.t.  x1 + x2 = 1: λ = 2/3, x = (2/3, 1/3).
  ConstraintCoupledProblem cp;
  cp.partition = Partition::scalars(1);
  cp.agents.push_back(quadratic_box_agent(Mat::Constant(1, 1, 2), Vec::Constant(1, 2), -5, 5));
  cp.agents.push_back(quadratic_box_agent(Mat::Constant(1, 1, 4), Vec::Constant(1, 2), -5, 5));
  for (auto& ag : cp.agents) {
    ag.A[1] = Mat::Ones(1, 1);
    ag.a[1] = Vec::Constant(1, 0.5);
  }
  Graph comm({1, 2}, {{1, 2}, {2, 1}});
  auto L = standard_layout(comm, cp.partition, cp.interference(), WeightRule::ColumnStochastic);
  PushSumSolveOptions opt;
  opt.max_iters = 5000;
  opt.stride = 100;
  auto r = constraint_coupled_solve(L, cp, constant_schedule(L), StepSchedule{}, opt);
  const double el = std::abs(r.multiplier[0] - 2.0 / 3), ex = std::max(std::abs(r.x[0][0] - 2.0 / 3), std::abs(r.x[1][0] - 1.0 / 3));
  o.check(el <= kCoupledTol, "multiplier");
  o.check(ex <= kCoupledTol, "primal");
  o.detail << "multiplier err " << el << ", primal err " << ex;
}

// ---------------------------------------------------------------- LASSO sweep

bool same_layout(const EndLayout& a, const EndLayout& b) {
  if (a.num_components() != b.num_components()) return false;
  for (int p = 1; p <= a.num_components(); ++p)
    if (a.design(p).graph().nodes() != b.design(p).graph().nodes() || a.design(p).graph().edges() != b.design(p).graph().edges() ||
        a.design(p).matrix() != b.design(p).matrix())
      return false;
  return true;
}

void lasso_sweep(Outcome& o) {
  SensorScenario sc;
  sc.sensors = 10;
  sc.sources = 20;
  sc.rc_min = 0.3;
  sc.nh = 1;
  int identical = 0, cheaper = 0;
  PushSumSolveOptions opt;
  opt.max_iters = 2000;
  opt.stride = 10;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    sc.seed = s;
    sc.r_s = 1.5;  // ranges cover the unit square, so every agent needs every source
    auto full = build_lasso(sc);
    opt.reference = full.reference.y;
    const bool complete = int(full.interference.size()) == sc.sensors * sc.sources;
    auto a = pushsum_solve(full.standard(), constant_schedule(full.standard()), full.prob, StepSchedule{}, opt);
    auto b = pushsum_solve(full.customized(), constant_schedule(full.customized()), full.prob, StepSchedule{}, opt);
    const bool same = complete && same_layout(full.standard(), full.customized()) && a.rows == b.rows;
    identical += same;
    o.check(same, "seed " + std::to_string(s) + " arms differ with complete interference");
    sc.r_s = 0.2;
    auto sparse = build_lasso(sc);
    const double bs = communication_cost(sparse.standard(), CostMode::Broadcast), bc = communication_cost(sparse.customized(), CostMode::Broadcast);
    cheaper += bc < bs;
    o.check(bc < bs, "seed " + std::to_string(s) + " broadcast cost not lower at r_s = 0.2");
  }
  o.detail << "r_s = 1.5: identical layouts and traces on " << identical << "/5; r_s = 0.2: lower broadcast cost on " << cheaper << "/5";
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> expect_red, only;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string a = argv[i];
    if (a == "--expect-red") expect_red = split(argv[i + 1]);
    else if (a == "--only") only = split(argv[i + 1]);
    else {
      std::cerr << "unknown argument " << a << "\n";
      return 2;
    }
  }
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"ne_linear_rate", ne_rate},       {"ne_star_design", ne_star},           {"ne_bound_recovery", ne_bound},
      {"gne_unicast", gne_unicast},      {"abc_rate", abc_rate},                {"abc_augdgm_equivalence", abc_equivalence},
      {"pushsum_regression", pushsum_regression}, {"admm", admm},                {"design_oracles", design_oracles},
      {"coupled_dual", coupled},         {"lasso_sweep", lasso_sweep}};
  int bad = 0, n = 0;
  for (const auto& [name, fn] : criteria) {
    ++n;
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    std::printf("%s %2d %-24s %7.2fs  %s\n", o.ok ? "PASS" : "FAIL", n, name.c_str(), seconds_since(t0), o.text().c_str());
    std::fflush(stdout);
    if (!o.ok && !expect_red.count(name)) ++bad;
  }
  return bad ? 1 : 0;
}
