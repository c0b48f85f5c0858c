#pragma once

#include <cmath>

#include "admm.hpp"

namespace estnet {

// γᵏ = c (k+1)^{-a}. Positive, non-increasing, Σγ = ∞ and Σγ² < ∞ exactly when a ∈ (1/2, 1].
struct StepSchedule {
  double c = 1.0;
  double a = 0.51;

  void validate() const {
    if (!(c > 0)) throw std::invalid_argument("step schedule: c must be positive");
    if (!(a > 0.5 && a <= 1.0)) throw std::invalid_argument("step schedule: exponent must lie in (1/2, 1]");
  }
  double operator()(int k) const { return c * std::pow(double(k + 1), -a); }
};

// Per-step, per-component column-stochastic weights. Snapshots repeat cyclically.
struct DesignSchedule {
  std::vector<std::vector<WeightedGraph>> snapshots;  // [k][p-1]

  std::size_t horizon() const { return snapshots.size(); }
  const std::vector<WeightedGraph>& at(std::size_t k) const { return snapshots.at(k % snapshots.size()); }
  GraphSequence component(int p) const {
    GraphSequence s;
    for (const auto& snap : snapshots) s.snapshots.push_back(snap.at(p - 1).graph());
    return s;
  }
};

// Static schedule: every step uses the layout's design graphs with column-stochastic weights.
inline DesignSchedule constant_schedule(const EndLayout& L) {
  DesignSchedule s;
  std::vector<WeightedGraph> snap;
  for (int p = 1; p <= L.num_components(); ++p) snap.push_back(column_stochastic_weights(L.design(p).graph()));
  s.snapshots.push_back(std::move(snap));
  return s;
}

// Splits the non-loop edges of comm into Q groups, round-robin in sorted edge order.
// Undirected pairs stay together.
inline std::vector<Graph> split_comm(const Graph& comm, int Q) {
  if (Q <= 0) throw std::invalid_argument("split_comm: Q must be positive");
  std::vector<std::vector<Edge>> groups(Q);
  int k = 0;
  for (const auto& e : comm.edges()) {
    if (e.from == e.to) continue;
    if (!comm.directed() && e.from > e.to) continue;
    groups[k % Q].push_back(e);
    if (!comm.directed()) groups[k % Q].push_back({e.to, e.from});
    ++k;
  }
  std::vector<Graph> out;
  for (auto& g : groups) out.emplace_back(comm.nodes(), g, true);
  return out;
}

// 𝒢pD,k = 𝒢pD ∩ 𝒢Ck plus self-loops.
inline DesignSchedule intersect_schedule(const EndLayout& L, const std::vector<Graph>& comm_seq) {
  if (comm_seq.empty()) throw std::invalid_argument("intersect_schedule: empty communication sequence");
  DesignSchedule s;
  for (const auto& ck : comm_seq) {
    std::vector<WeightedGraph> snap;
    for (int p = 1; p <= L.num_components(); ++p) {
      const Graph& d = L.design(p).graph();
      std::vector<Edge> es;
      for (const auto& e : d.edges())
        if (e.from == e.to || ck.has_edge(e.from, e.to)) es.push_back(e);
      snap.push_back(column_stochastic_weights(Graph(d.nodes(), es, true)));
    }
    s.snapshots.push_back(std::move(snap));
  }
  return s;
}

inline DesignSchedule round_robin_schedule(const EndLayout& L, int Q) { return intersect_schedule(L, split_comm(L.comm(), Q)); }

// Per snapshot: holders as nodes, self-loops, edges inside comm, positive column-stochastic weights. Then Q-strong connectivity.
inline std::vector<std::string> check_schedule(const EndLayout& L, const DesignSchedule& s, std::size_t Q, double tol = 1e-12) {
  std::vector<std::string> bad;
  for (std::size_t k = 0; k < s.horizon(); ++k)
    for (int p = 1; p <= L.num_components(); ++p) {
      const auto& wg = s.at(k)[p - 1];
      std::string where = "step " + std::to_string(k) + ", component " + std::to_string(p) + ": ";
      if (wg.nodes() != L.holders(p)) bad.push_back(where + "node set differs from the estimate holders");
      for (int i : wg.nodes())
        if (!wg.graph().has_self_loop(i)) bad.push_back(where + "missing self-loop at " + std::to_string(i));
      if (!wg.column_stochastic(tol)) bad.push_back(where + "not column stochastic");
      for (const auto& e : wg.graph().edges()) {
        if (e.from != e.to && !L.comm().has_edge(e.from, e.to)) bad.push_back(where + "edge outside the communication graph");
        if (!(wg.weight(e.to, e.from) > 0)) bad.push_back(where + "non-positive weight on an edge");
      }
    }
  for (int p = 1; p <= L.num_components(); ++p)
    if (!is_q_strongly_connected(s.component(p), Q))
      bad.push_back("component " + std::to_string(p) + ": schedule is not " + std::to_string(Q) + "-strongly connected");
  return bad;
}

// z and ŷ are stacked vectors; q holds one scalar per (p, i), component-major.
struct PushSumState {
  Vec z, q;
  Vec y, w, g;  // last ratio iterate, mixed values and subgradients
};

inline int q_offset(const EndLayout& L, int p) {
  int o = 0;
  for (int r = 1; r < p; ++r) o += L.copies(r);
  return o;
}

inline int q_size(const EndLayout& L) { return q_offset(L, L.num_components() + 1); }

inline PushSumState pushsum_init(const EndLayout& L, const Vec& z0 = Vec()) {
  PushSumState st;
  st.z = z0.size() ? z0 : Vec::Zero(L.stacked_size());
  if (st.z.size() != L.stacked_size()) throw std::invalid_argument("pushsum_init: size mismatch");
  st.q = Vec::Ones(q_size(L));
  st.y = st.z;
  st.w = st.z;
  st.g = Vec::Zero(L.stacked_size());
  return st;
}

using SubgradientOracle = std::function<Vec(const Vec& y_hat)>;

// q+ = Wq, w+ = Wz, ŷ+ = w+/q+, g+ ∈ ∂f(ŷ+), z+ = w+ - γg+
inline PushSumState pushsum_dgd_step(const EndLayout& L, const std::vector<WeightedGraph>& W, const SubgradientOracle& sub,
                                     const PushSumState& st, double gamma) {
  PushSumState n;
  n.q.resize(st.q.size());
  n.w.resize(st.z.size());
  n.y.resize(st.z.size());
  for (int p = 1; p <= L.num_components(); ++p) {
    const Mat& Wp = W.at(p - 1).matrix();
    const int o = q_offset(L, p), N = L.copies(p);
    n.q.segment(o, N) = Wp * st.q.segment(o, N);
    if (n.q.segment(o, N).minCoeff() <= 0) throw std::runtime_error("pushsum: non-positive weight q for component " + std::to_string(p));
    L.component(n.w, p).noalias() = L.component(st.z, p) * Wp.transpose();
    L.component(n.y, p) = L.component(n.w, p) * n.q.segment(o, N).cwiseInverse().asDiagonal();
  }
  n.g = sub(n.y);
  n.z = n.w - gamma * n.g;
  return n;
}

inline PushSumState pushsum_dgd_step(const EndLayout& L, const std::vector<WeightedGraph>& W, const SeparableProblem& prob,
                                     const PushSumState& st, double gamma) {
  return pushsum_dgd_step(L, W, [&](const Vec& y) { return prob.stacked_gradient(L, y, true); }, st, gamma);
}

// Per-component averages z̄_p.
inline Vec pushsum_average(const EndLayout& L, const Vec& z) { return component_means(L, z); }

// max_{i,p} ‖ŷ_{i,p} - z̄_p‖
inline double pushsum_consensus(const EndLayout& L, const Vec& y, const Vec& z) {
  Vec d = y - embed_consensus(L, component_means(L, z));
  double m = 0;
  for (int p = 1; p <= L.num_components(); ++p)
    for (int i : L.holders(p)) m = std::max(m, L.block(d, p, i).norm());
  return m;
}

// Scalars sent per step: each non-loop edge carries n_p values plus the weight q.
inline double schedule_cost(const EndLayout& L, const std::vector<WeightedGraph>& W, CostMode mode) {
  double c = 0;
  for (int p = 1; p <= L.num_components(); ++p) {
    const Graph& g = W[p - 1].graph();
    const double sz = L.dim(p) + 1;
    if (mode == CostMode::Unicast) {
      c += double(g.num_edges_without_loops()) * sz;
    } else {
      for (int i : g.nodes())
        for (int j : g.out_neighbors(i))
          if (j != i) {
            c += sz;
            break;
          }
    }
  }
  return c;
}

struct PushSumSolveOptions {
  int max_iters = 100000;
  int stride = 1;
  bool timing = false;
  std::optional<Vec> reference;  // y*
  std::optional<std::size_t> q_connectivity;  // Q to verify, skipped when unset
  double consensus_tol = 1e-3;
  double merit_tol = 1e-2;
  bool check_invariants = true;
};

// Columns: k, f_gap (at z̄), consensus_err, merit (𝔙 of ŷ), comm costs, wall_ns, dist, mass_err, avg_err.
// Stops once consensus_err ≤ consensus_tol and 𝔙 ≤ merit_tol (needs a reference).
inline RunTrace pushsum_solve(const EndLayout& L, const DesignSchedule& sched, const SubgradientOracle& sub,
                              const std::function<double(const Vec&)>& stacked_value, const SeparableProblem* prob,
                              const StepSchedule& steps, const PushSumSolveOptions& opt, const Vec& z0 = Vec(),
                              PushSumState* final_state = nullptr) {
  steps.validate();
  if (sched.horizon() == 0) throw std::invalid_argument("pushsum: empty design schedule");
  if (opt.q_connectivity) {
    auto bad = check_schedule(L, sched, *opt.q_connectivity, 1e-10);
    if (!bad.empty()) throw PreconditionError("pushsum: " + bad.front());
  }
  auto cols = optim_columns();
  cols.push_back("mass_err");
  cols.push_back("avg_err");
  RunTrace tr(cols);
  WallClock clock(opt.timing);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const bool ref = opt.reference && prob;
  double fstar = opt.reference ? stacked_value(embed_consensus(L, *opt.reference)) : nan;
  PushSumState st = pushsum_init(L, z0);
  double cu = 0, cb = 0, max_mass = 0, max_avg = 0, peak = 1;
  auto row = [&](int k, double mass, double avg) {
    Vec zbar = embed_consensus(L, pushsum_average(L, st.z));
    return std::vector<double>{double(k),
                               stacked_value(zbar) - fstar,
                               pushsum_consensus(L, st.y, st.z),
                               ref ? merit_v(L, *prob, st.y, *opt.reference) : nan,
                               cu,
                               cb,
                               clock.ns(),
                               opt.reference ? max_block_distance(L, st.y, *opt.reference) : nan,
                               mass,
                               avg};
  };
  tr.add(row(0, 0, 0));
  for (int k = 0; k < opt.max_iters; ++k) {
    const auto& W = sched.at(std::size_t(k));
    const double gamma = steps(k);
    PushSumState n = pushsum_dgd_step(L, W, sub, st, gamma);
    cu += schedule_cost(L, W, CostMode::Unicast);
    cb += schedule_cost(L, W, CostMode::Broadcast);
    double mass = 0, avg = 0;
    if (opt.check_invariants) {
      for (int p = 1; p <= L.num_components(); ++p) mass = std::max(mass, std::abs(n.q.segment(q_offset(L, p), L.copies(p)).sum() - L.copies(p)));
      Vec lhs = pushsum_average(L, n.z), rhs = pushsum_average(L, st.z) - gamma * pushsum_average(L, n.g);
      // Relative once |z̄| > 1: large early steps can inflate z̄ by many orders before it contracts.
      const double scale = std::max(1.0, rhs.lpNorm<Eigen::Infinity>());
      peak = std::max(peak, scale);
      avg = (lhs - rhs).lpNorm<Eigen::Infinity>() / scale;
      max_mass = std::max(max_mass, mass);
      max_avg = std::max(max_avg, avg);
    }
    st = std::move(n);
    tr.iterations = k + 1;
    if (!std::isfinite(st.z.norm())) {
      tr.diverged = true;
      tr.diagnostic = "non-finite iterate at k=" + std::to_string(k + 1);
      tr.add(row(k + 1, mass, avg));
      break;
    }
    bool done = false;
    if (ref) {
      // 𝔙 is costly; only evaluate it when consensus is already met.
      double ce = pushsum_consensus(L, st.y, st.z);
      done = ce <= opt.consensus_tol && merit_v(L, *prob, st.y, *opt.reference) <= opt.merit_tol;
    }
    if ((k + 1) % opt.stride == 0 || done || k + 1 == opt.max_iters) tr.add(row(k + 1, mass, avg));
    if (done) {
      tr.converged = true;
      break;
    }
  }
  tr.summary["max_mass_error"] = max_mass;
  tr.summary["max_average_identity_error"] = max_avg;
  tr.summary["peak_z_bar"] = peak;
  tr.summary["comm_cost_unicast"] = cu;
  tr.summary["comm_cost_broadcast"] = cb;
  tr.summary["final_z_bar_norm"] = pushsum_average(L, st.z).norm();
  if (final_state) *final_state = std::move(st);
  return tr;
}

inline RunTrace pushsum_solve(const EndLayout& L, const DesignSchedule& sched, const SeparableProblem& prob, const StepSchedule& steps,
                              const PushSumSolveOptions& opt) {
  check_layout(L, prob);
  return pushsum_solve(
      L, sched, [&](const Vec& y) { return prob.stacked_gradient(L, y, true); },
      [&](const Vec& y) { return prob.stacked_value(L, y); }, &prob, steps, opt);
}

}  // namespace estnet
