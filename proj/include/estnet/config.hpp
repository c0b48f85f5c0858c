#pragma once

// JSON configs -> instances, layouts and solver runs. Shared by the CLI and its tests.

#include <fstream>
#include <optional>

#include "estnet.hpp"

namespace estnet {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

inline Mat mat_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("matrix must be a non-empty array of rows");
  const auto r = Eigen::Index(j.size()), c = Eigen::Index(j[0].size());
  Mat M(r, c);
  for (Eigen::Index a = 0; a < r; ++a) {
    if (Eigen::Index(j[a].size()) != c) throw ConfigError("matrix rows differ in length");
    for (Eigen::Index b = 0; b < c; ++b) M(a, b) = j[a][b].get<double>();
  }
  return M;
}

inline Vec vec_from_json(const json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Vec>(v.data(), Eigen::Index(v.size()));
}

inline json vec_to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json mat_to_json(const Mat& M) {
  json a = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) a.push_back(vec_to_json(M.row(r).transpose()));
  return a;
}

// ---------------------------------------------------------------- design criterion

enum class Algorithm { NE, GNE, ABC, ADMM, PushSum, Coupled, None };

inline Algorithm algorithm_from_string(const std::string& s) {
  if (s == "ne") return Algorithm::NE;
  if (s == "gne") return Algorithm::GNE;
  if (s == "abc" || s == "augdgm") return Algorithm::ABC;
  if (s == "admm") return Algorithm::ADMM;
  if (s == "pushsum") return Algorithm::PushSum;
  if (s == "coupled") return Algorithm::Coupled;
  throw ConfigError("unknown algorithm '" + s + "'");
}

// Per-algorithm defaults: the weights each iteration needs.
inline DesignCriterion default_criterion(Algorithm a) {
  DesignCriterion c;
  switch (a) {
    case Algorithm::PushSum:
    case Algorithm::Coupled:
    case Algorithm::None:
      c.connectivity = ConnectivityMode::strong();
      c.objective = Objective::MinNodes;
      c.weights = a == Algorithm::None ? WeightRule::RowStochastic : WeightRule::ColumnStochastic;
      break;
    case Algorithm::ABC:
      c.connectivity = ConnectivityMode::undirected();
      c.objective = Objective::MinEdges;
      c.weights = WeightRule::LazyMetropolis;
      break;
    default:
      c.connectivity = ConnectivityMode::undirected();
      c.objective = Objective::MinEdges;
      c.weights = WeightRule::MetropolisHastings;
  }
  return c;
}

inline WeightRule weight_rule_from_config(const std::string& s) {
  try {
    return weight_rule_from_string(s);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

// {connectivity, objective, roots: {"p": r}, weights, augment}
inline DesignCriterion criterion_from_json(const json& j, DesignCriterion c) {
  if (j.is_null()) return c;
  if (!j.is_object()) throw ConfigError("design must be an object");
  std::map<int, int> roots;
  if (j.contains("roots"))
    for (const auto& [k, v] : j.at("roots").items()) roots[std::stoi(k)] = v.get<int>();
  if (j.contains("connectivity")) {
    const auto s = j.at("connectivity").get<std::string>();
    if (s == "rooted")
      c.connectivity = ConnectivityMode::rooted(roots);
    else if (s == "strong")
      c.connectivity = ConnectivityMode::strong();
    else if (s == "undirected")
      c.connectivity = ConnectivityMode::undirected();
    else
      throw ConfigError("unknown connectivity '" + s + "'");
  }
  if (!roots.empty()) c.connectivity.roots = roots;
  if (j.contains("objective")) {
    try {
      c.objective = objective_from_string(j.at("objective").get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.contains("weights")) c.weights = weight_rule_from_config(j.at("weights").get<std::string>());
  c.augment = j.value("augment", c.augment);
  return c;
}

// ---------------------------------------------------------------- instances

// One family of estimates: its partition and interference (σ and λ for games with coupling constraints).
struct EstimateFamily {
  std::string name;
  Partition partition;
  std::vector<ComponentAgent> interference;
};

struct Instance {
  std::string kind;
  Graph comm;
  std::vector<EstimateFamily> families;
  std::optional<SeparableProblem> separable;
  std::optional<GameSpec> game;
  std::optional<AggregativeGameSpec> aggregative;
  std::optional<ConstraintCoupledProblem> coupled;
  Vec reference;  // y*, x*, or empty
  json dump;
};

namespace detail {

inline Graph comm_from(const json& p, int agents, std::uint64_t seed) {
  if (p.contains("comm")) return graph_from_json(p.at("comm"));
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  return random_connected_graph(agents, p.value("comm_density", 0.3), rng);
}

inline SeparableProblem separable_from_json(const json& p) {
  SeparableProblem prob;
  prob.partition = Partition(p.at("partition").get<std::vector<int>>());
  for (const auto& a : p.at("agents")) {
    auto fp = a.at("footprint").get<std::vector<int>>();
    if (fp.empty()) {
      prob.costs.push_back(quadratic_cost({}, Mat(), Vec(), a.value("c", 0.0)));
      continue;
    }
    LocalCost c = quadratic_cost(fp, mat_from_json(a.at("H")), vec_from_json(a.at("h")), a.value("c", 0.0));
    if (a.contains("l1")) c.l1 = vec_from_json(a.at("l1"));
    prob.costs.push_back(std::move(c));
  }
  return prob;
}

inline ConstraintCoupledProblem coupled_from_json(const json& p) {
  ConstraintCoupledProblem cp;
  cp.partition = Partition(p.at("constraints").get<std::vector<int>>());
  for (const auto& a : p.at("agents")) {
    auto ag = quadratic_box_agent(mat_from_json(a.at("H")), vec_from_json(a.at("h")), a.at("lo").get<double>(), a.at("hi").get<double>());
    for (const auto& [k, v] : a.at("A").items()) ag.A[std::stoi(k)] = mat_from_json(v);
    if (a.contains("a"))
      for (const auto& [k, v] : a.at("a").items()) ag.a[std::stoi(k)] = vec_from_json(v);
    cp.agents.push_back(std::move(ag));
  }
  cp.validate();
  return cp;
}

}  // namespace detail

inline Instance build_instance(const json& p, std::uint64_t seed) {
  if (!p.is_object() || !p.contains("kind")) throw ConfigError("problem.kind is required");
  Instance in;
  in.kind = p.at("kind").get<std::string>();
  const std::string& k = in.kind;
  if (k == "unicast" || k == "unicast_seven") {
    UnicastInstance u;
    if (k == "unicast") {
      UnicastScenario sc;
      sc.agents = p.value("agents", sc.agents);
      sc.density = p.value("density", sc.density);
      sc.max_path_length = p.value("max_path_length", sc.max_path_length);
      sc.utility = p.value("utility", sc.utility);
      sc.capacity_lo = p.value("capacity_lo", sc.capacity_lo);
      sc.capacity_hi = p.value("capacity_hi", sc.capacity_hi);
      sc.relays = p.value("relays", sc.relays);
      sc.seed = seed;
      u = build_unicast(sc);
    } else {
      u = build_unicast_seven(seed);
    }
    in.comm = u.comm;
    in.aggregative = u.game;
    in.families = {{"sigma", u.game.sigma_part, u.game.sigma_interference}, {"lambda", u.game.lambda_part, u.game.lambda_interference}};
    in.dump = to_json(u);
  } else if (k == "regression" || k == "lasso") {
    SensorScenario sc;
    sc.sensors = p.value("sensors", sc.sensors);
    sc.sources = p.value("sources", sc.sources);
    sc.r_s = p.value("r_s", sc.r_s);
    sc.rc_min = p.value("rc_min", sc.rc_min);
    sc.rc_width = p.value("rc_width", sc.rc_width);
    sc.nh = p.value("nh", sc.nh);
    sc.noise_variance = p.value("noise_variance", sc.noise_variance);
    sc.active_fraction = p.value("active_fraction", sc.active_fraction);
    sc.seed = seed;
    auto s = k == "lasso" ? build_lasso(sc) : build_regression(sc);
    in.comm = s.comm;
    in.separable = s.prob;
    in.reference = s.reference.y;
    in.families = {{"y", s.prob.partition, s.interference}};
    in.dump = to_json(s);
  } else if (k == "random_separable" || k == "quadratic") {
    if (k == "random_separable") {
      auto rs = build_random_separable(p.value("agents", 8), p.value("components", 6), p.value("sparsity", 0.4), seed);
      in.separable = rs.prob;
      in.reference = rs.y_star;
    } else {
      in.separable = detail::separable_from_json(p);
      in.reference = reference_solution(*in.separable).y;
    }
    in.comm = detail::comm_from(p, in.separable->agents(), seed);
    in.families = {{"y", in.separable->partition, in.separable->interference()}};
    in.dump = to_json(*in.separable);
  } else if (k == "random_game" || k == "quadratic_game") {
    Mat G;
    Vec g;
    if (k == "random_game") {
      auto rg = build_random_quadratic_game(p.value("agents", 5), p.value("sparsity", 0.3), seed);
      G = rg.G, g = rg.g;
    } else {
      G = mat_from_json(p.at("G"));
      g = vec_from_json(p.at("g"));
      if (G.rows() != G.cols() || G.rows() != g.size()) throw ConfigError("quadratic_game: G and g disagree");
    }
    std::vector<ConvexSet> sets;
    if (p.contains("box")) sets.assign(g.size(), box(1, p.at("box")[0].get<double>(), p.at("box")[1].get<double>()));
    in.game = make_quadratic_game(G, g, std::vector<int>(g.size(), 1), sets);
    in.reference = sets.empty() ? Vec(G.partialPivLu().solve(-g)) : Vec();
    in.comm = detail::comm_from(p, int(g.size()), seed);
    in.families = {{"x", in.game->partition(), in.game->interference_edges()}};
    in.dump = {{"G", mat_to_json(G)}, {"g", vec_to_json(g)}};
  } else if (k == "coupled_qp") {
    in.coupled = detail::coupled_from_json(p);
    in.comm = detail::comm_from(p, in.coupled->num_agents(), seed);
    in.families = {{"multiplier", in.coupled->partition, in.coupled->interference()}};
    in.dump = p;
  } else if (k == "explicit") {
    in.comm = graph_from_json(p.at("comm"));
    std::vector<ComponentAgent> inter;
    for (const auto& e : p.at("interference")) inter.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
    in.families = {{"y", Partition(p.at("partition").get<std::vector<int>>()), inter}};
    in.dump = p;
  } else {
    throw ConfigError("unknown problem kind '" + k + "'");
  }
  in.dump["comm"] = to_json(in.comm);
  return in;
}

// One layout per estimate family.
inline std::vector<EndLayout> build_layouts(const Instance& in, const DesignCriterion& crit, bool customized) {
  std::vector<EndLayout> out;
  for (const auto& f : in.families)
    out.push_back(customized ? design_layout(in.comm, f.partition, f.interference, crit)
                             : standard_layout(in.comm, f.partition, f.interference, crit.weight_rule()));
  return out;
}

// ---------------------------------------------------------------- runs

struct RunResult {
  RunTrace trace;
  json summary;
};

inline double total_cost(const std::vector<EndLayout>& Ls, CostMode m) {
  double c = 0;
  for (const auto& L : Ls) c += communication_cost(L, m);
  return c;
}

inline double mean_estimates(const std::vector<EndLayout>& Ls) {
  double s = 0;
  for (const auto& L : Ls) s += mean_estimate_size(L);
  return Ls.empty() ? 0 : s / double(Ls.size());
}

inline DesignSchedule schedule_for(const EndLayout& L, int Q) { return Q <= 1 ? constant_schedule(L) : round_robin_schedule(L, Q); }

// Dispatch on algo.name. Summary keys cover iterations, final merit and per-iteration costs.
inline RunResult run_algorithm(const Instance& in, const std::vector<EndLayout>& Ls, const json& algo, bool timing) {
  const Algorithm a = algorithm_from_string(algo.at("name").get<std::string>());
  RunResult r;
  json& s = r.summary;
  StopRule stop;
  stop.max_iters = algo.value("max_iters", 10000);
  stop.stride = algo.value("stride", std::max(1, stop.max_iters / 1000));
  stop.tol = algo.value("tol", 1e-8);
  stop.timing = timing;
  double cu = total_cost(Ls, CostMode::Unicast), cb = total_cost(Ls, CostMode::Broadcast);
  std::string merit_col;
  auto need = [&](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("algorithm '") + algo.at("name").get<std::string>() + "' needs " + what);
  };

  if (a == Algorithm::NE) {
    need(in.game.has_value(), "a game problem");
    const EndLayout& L = Ls.at(0);
    auto C = ne_rate_constants(L, *in.game);
    double alpha;
    if (algo.value("alpha", json("auto")).is_string()) {
      if (!C.certified) throw ConfigError("alpha=auto but the layout is not certified: " + C.reason);
      alpha = best_alpha(C);
    } else {
      alpha = algo.at("alpha").get<double>();
    }
    s["alpha"] = alpha;
    s["certified"] = C.certified;
    if (C.certified) s["rho"] = C.rho(alpha), s["alpha_ceiling"] = C.alpha_ceiling();
    NeSolveOptions opt;
    opt.stop = stop;
    if (in.reference.size()) opt.reference = embed_consensus(L, in.reference);
    if (C.certified) opt.xi = C.Q;
    r.trace = ne_solve(L, *in.game, alpha, opt);
    merit_col = "dist_xi";
  } else if (a == Algorithm::GNE) {
    need(in.aggregative.has_value(), "an aggregative game");
    const auto& g = *in.aggregative;
    GneOperators ops(Ls.at(0), Ls.at(1), g);
    auto [xs, ls] = reference_vgne(g, algo.value("reference_step", 0.05));
    GneSolveOptions opt;
    opt.stop = stop;
    opt.reference = xs;
    opt.x_tol = algo.value("x_tol", opt.x_tol);
    opt.kkt_tol = algo.value("kkt_tol", opt.kkt_tol);
    const double alpha = algo.value("alpha", 0.1), beta = algo.value("beta", 1e-3);
    r.trace = gne_solve(ops, alpha, beta, opt, Vec::Zero(g.x_part().total()));
    cu = cb = ops.cost_per_iteration();
    s["alpha"] = alpha;
    s["beta"] = beta;
    s["x_star"] = vec_to_json(xs);
    s["iterations_to_x_tol"] = r.trace.summary["iterations_to_x_tol"];
    merit_col = "residual";
  } else if (a == Algorithm::ABC) {
    need(in.separable.has_value(), "a separable problem");
    const EndLayout& L = Ls.at(0);
    auto m = augdgm_matrices(L);
    auto rep = abc_check(m, L);
    s["abc_check"] = rep.ok();
    s["abc_failures"] = rep.failures;
    const double gamma = algo.value("gamma", 0.5 / in.separable->lipschitz());
    AbcSolveOptions opt;
    opt.iterations = stop.max_iters;
    opt.stride = stop.stride;
    opt.timing = timing;
    if (in.reference.size()) opt.reference = in.reference;
    r.trace = abc_solve(m, L, *in.separable, gamma, opt);
    cu *= 2, cb *= 2;
    s["gamma"] = gamma;
    merit_col = "merit";
  } else if (a == Algorithm::ADMM) {
    need(in.separable.has_value(), "a separable problem");
    OptimSolveOptions opt;
    opt.stop = stop;
    opt.stop.tol = algo.value("tol", 1e-6);
    if (in.reference.size()) opt.reference = in.reference;
    const double alpha = algo.value("alpha", 0.5);
    if (!(alpha > 0 && alpha < 1)) throw ConfigError("admm: alpha must lie in (0,1)");
    r.trace = admm_solve(Ls.at(0), *in.separable, alpha, opt, algo.value("rho", 1.0));
    s["alpha"] = alpha;
    merit_col = "merit";
  } else if (a == Algorithm::PushSum || a == Algorithm::Coupled) {
    const EndLayout& L = Ls.at(0);
    const int Q = algo.value("Q", 1);
    auto sched = schedule_for(L, Q);
    StepSchedule steps{algo.value("c", 1.0), algo.value("a", 0.51)};
    try {
      steps.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    PushSumSolveOptions opt;
    opt.max_iters = stop.max_iters;
    opt.stride = stop.stride;
    opt.timing = timing;
    opt.q_connectivity = std::size_t(std::max(1, Q));
    opt.consensus_tol = algo.value("consensus_tol", opt.consensus_tol);
    opt.merit_tol = algo.value("merit_tol", opt.merit_tol);
    double hu = 0, hb = 0;
    for (const auto& W : sched.snapshots) hu += schedule_cost(L, W, CostMode::Unicast), hb += schedule_cost(L, W, CostMode::Broadcast);
    cu = hu / double(sched.horizon()), cb = hb / double(sched.horizon());
    s["Q"] = Q;
    s["step_c"] = steps.c;
    s["step_a"] = steps.a;
    if (a == Algorithm::PushSum) {
      need(in.separable.has_value(), "a separable problem");
      if (in.reference.size()) opt.reference = in.reference;
      r.trace = pushsum_solve(L, sched, *in.separable, steps, opt);
      merit_col = "merit";
    } else {
      need(in.coupled.has_value(), "a constraint-coupled problem");
      auto cr = constraint_coupled_solve(L, *in.coupled, sched, steps, opt);
      r.trace = std::move(cr.trace);
      s["multiplier"] = vec_to_json(cr.multiplier);
      json xs = json::array();
      for (const auto& x : cr.x) xs.push_back(vec_to_json(x));
      s["x"] = xs;
      merit_col = "consensus_err";
    }
  } else {
    throw ConfigError("no algorithm given");
  }
  for (const auto& [k, v] : r.trace.summary) s[k] = std::isfinite(v) ? json(v) : json(format_double(v));
  s["algorithm"] = algo.at("name");
  s["iterations"] = r.trace.iterations;
  s["converged"] = r.trace.converged;
  s["diverged"] = r.trace.diverged;
  if (!r.trace.diagnostic.empty()) s["diagnostic"] = r.trace.diagnostic;
  if (!r.trace.warnings.empty()) s["warnings"] = r.trace.warnings;
  const double fm = r.trace.last(merit_col);
  s["final_merit_column"] = merit_col;
  s["final_merit"] = std::isfinite(fm) ? json(fm) : json(format_double(fm));
  s["cost_per_iteration_unicast"] = cu;
  s["cost_per_iteration_broadcast"] = cb;
  s["total_cost_unicast"] = cu * r.trace.iterations;
  s["total_cost_broadcast"] = cb * r.trace.iterations;
  s["mean_estimate_size"] = mean_estimates(Ls);
  s["wall_ns"] = r.trace.rows.empty() ? 0.0 : r.trace.rows.back().at(r.trace.col("wall_ns"));
  return r;
}

}  // namespace estnet
