#pragma once

#include <map>

#include "pushsum.hpp"
#include "sets.hpp"

namespace estnet {

// Agent i of   min Σ f_i(x_i)  s.t.  Σ_i A_{p,i} x_i - a_{p,i} = 0  (∀p).
struct CoupledAgent {
  int nx = 1;
  std::map<int, Mat> A;  // keyed by p, n_p × nx
  std::map<int, Vec> a;  // keyed by p, n_p
  std::function<double(const Vec&)> cost;
  // argmin_x f_i(x) + cᵀx over the (compact) local domain
  std::function<Vec(const Vec& c)> argmin_linear;

  std::vector<int> footprint() const {
    std::vector<int> fp;
    for (const auto& [p, M] : A) fp.push_back(p);
    return fp;
  }
};

struct ConstraintCoupledProblem {
  Partition partition;  // dual dims n_p
  std::vector<CoupledAgent> agents;

  int num_agents() const { return int(agents.size()); }

  std::vector<ComponentAgent> interference() const {
    std::vector<ComponentAgent> e;
    for (int i = 1; i <= num_agents(); ++i)
      for (int p : agents[i - 1].footprint()) e.push_back({p, i});
    return e;
  }

  void validate() const {
    for (int i = 1; i <= num_agents(); ++i) {
      const auto& ag = agents[i - 1];
      if (!ag.argmin_linear || !ag.cost) throw std::invalid_argument("coupled: agent " + std::to_string(i) + " lacks oracles");
      for (const auto& [p, M] : ag.A) {
        if (p < 1 || p > partition.size()) throw std::invalid_argument("coupled: constraint index out of range");
        if (M.rows() != partition.dim(p) || M.cols() != ag.nx) throw std::invalid_argument("coupled: A block has wrong shape");
        auto it = ag.a.find(p);
        if (it != ag.a.end() && it->second.size() != partition.dim(p)) throw std::invalid_argument("coupled: a block has wrong size");
      }
      for (const auto& [p, v] : ag.a)
        if (!ag.A.count(p)) throw std::invalid_argument("coupled: a block outside the interference pattern");
    }
  }

  Vec a_block(int i, int p) const {
    const auto& ag = agents[i - 1];
    auto it = ag.a.find(p);
    return it == ag.a.end() ? Vec::Zero(partition.dim(p)) : it->second;
  }

  // x_i*(ỹ_i) from agent i's own multiplier estimates.
  Vec primal(const EndLayout& L, const Vec& yh, int i) const {
    const auto& ag = agents[i - 1];
    Vec c = Vec::Zero(ag.nx);
    for (const auto& [p, M] : ag.A) c += M.transpose() * L.block(yh, p, i);
    return ag.argmin_linear(c);
  }

  // Subgradient of -φ_i in block (p, i): -(A_{p,i} x_i* - a_{p,i}).
  Vec neg_dual_subgradient(const EndLayout& L, const Vec& yh) const {
    Vec g = Vec::Zero(yh.size());
    for (int i = 1; i <= num_agents(); ++i) {
      Vec x = primal(L, yh, i);
      for (const auto& [p, M] : agents[i - 1].A) L.block(g, p, i) = -(M * x - a_block(i, p));
    }
    return g;
  }

  // -Σ φ_i(ỹ_i)
  double neg_dual_value(const EndLayout& L, const Vec& yh) const {
    double v = 0;
    for (int i = 1; i <= num_agents(); ++i) {
      const auto& ag = agents[i - 1];
      Vec x = primal(L, yh, i);
      double phi = ag.cost(x);
      for (const auto& [p, M] : ag.A) phi += L.block(yh, p, i).dot(M * x - a_block(i, p));
      v -= phi;
    }
    return v;
  }

  // Σ_i A_{p,i} x_i - a_{p,i} stacked over p.
  Vec residual(const std::vector<Vec>& x) const {
    Vec r = Vec::Zero(partition.total());
    for (int i = 1; i <= num_agents(); ++i)
      for (const auto& [p, M] : agents[i - 1].A) r.segment(partition.offset(p), partition.dim(p)) += M * x[i - 1] - a_block(i, p);
    return r;
  }
};

// f(x) = ½xᵀHx - hᵀx over a finite box. Closed form for diagonal H, projected FISTA otherwise.
inline CoupledAgent quadratic_box_agent(Mat H, Vec h, double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi)
    throw PreconditionError("coupled: local domain must be a bounded box");
  if (H.rows() != H.cols() || H.rows() != h.size()) throw std::invalid_argument("coupled: H and h disagree");
  CoupledAgent ag;
  ag.nx = int(h.size());
  ag.cost = [H, h](const Vec& x) { return 0.5 * x.dot(H * x) - h.dot(x); };
  const bool diag = (H - Mat(H.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0 && H.diagonal().minCoeff() > 0;
  const double Lh = std::max(1e-12, Eigen::SelfAdjointEigenSolver<Mat>(H).eigenvalues().maxCoeff());
  ag.argmin_linear = [H, h, lo, hi, diag, Lh](const Vec& c) -> Vec {
    if (diag) return ((h - c).array() / H.diagonal().array()).cwiseMax(lo).cwiseMin(hi).matrix();
    Vec x = Vec::Zero(h.size()), u = x;
    double t = 1;
    for (int k = 0; k < 100000; ++k) {
      Vec xn = (u - (H * u - h + c) / Lh).cwiseMax(lo).cwiseMin(hi);
      double tn = 0.5 * (1 + std::sqrt(1 + 4 * t * t));
      u = xn + ((t - 1) / tn) * (xn - x);
      double res = (xn - x).norm();
      x = std::move(xn);
      t = tn;
      if (res < 1e-13) break;
    }
    return x;
  };
  return ag;
}

struct CoupledResult {
  RunTrace trace;
  Vec y_hat;                 // final multiplier estimates
  std::vector<Vec> x;        // recovered x_i*(ỹ_i)
  Vec multiplier;            // per-component mean of the estimates
};

// Dual ascent on Σφ_i through the push-sum iteration (minimizing -Σφ_i).
inline CoupledResult constraint_coupled_solve(const EndLayout& L, const ConstraintCoupledProblem& prob, const DesignSchedule& sched,
                                              const StepSchedule& steps, PushSumSolveOptions opt) {
  prob.validate();
  if (L.partition() != prob.partition || L.num_agents() != prob.num_agents())
    throw std::invalid_argument("coupled: layout does not match the problem");
  for (const auto& [p, i] : prob.interference())
    if (!L.holds(i, p)) throw PreconditionError("coupled: agent " + std::to_string(i) + " lacks multiplier " + std::to_string(p));
  // 𝔙 needs a separable primal, so the run uses the full iteration budget.
  opt.reference.reset();
  auto sub = [&](const Vec& y) { return prob.neg_dual_subgradient(L, y); };
  auto val = [&](const Vec& y) { return prob.neg_dual_value(L, y); };

  CoupledResult r;
  PushSumState st;
  r.trace = pushsum_solve(L, sched, sub, val, nullptr, steps, opt, Vec(), &st);
  r.y_hat = st.y;
  for (int i = 1; i <= prob.num_agents(); ++i) r.x.push_back(prob.primal(L, st.y, i));
  r.multiplier = component_means(L, st.y);
  Vec res = prob.residual(r.x);
  r.trace.summary["primal_residual"] = res.size() ? res.norm() : 0.0;
  return r;
}

}  // namespace estnet
