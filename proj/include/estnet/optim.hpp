#pragma once

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <functional>

#include "layout.hpp"
#include "trace.hpp"

namespace estnet {

// f_i(v) = ½vᵀHv - hᵀv + c + Σ w_e|v_e| + smooth(v), v the concatenated footprint blocks.
struct LocalCost {
  std::vector<int> footprint;  // 𝒩I(i), ascending
  Mat H;
  Vec h;
  double c = 0;
  Vec l1;  // per-entry ℓ1 weights, empty when absent
  std::function<double(const Vec&)> smooth_value;
  std::function<Vec(const Vec&)> smooth_grad;
  double smooth_lipschitz = 0;

  bool has_l1() const { return l1.size() > 0 && l1.cwiseAbs().maxCoeff() > 0; }
  bool has_generic() const { return static_cast<bool>(smooth_value); }
  bool is_quadratic() const { return !has_l1() && !has_generic(); }

  double value(const Vec& v) const {
    double f = c;
    if (H.size()) f += 0.5 * v.dot(H * v);
    if (h.size()) f -= h.dot(v);
    if (has_l1()) f += l1.dot(v.cwiseAbs());
    if (smooth_value) f += smooth_value(v);
    return f;
  }
  // Gradient of the differentiable part.
  Vec gradient(const Vec& v) const {
    Vec g = Vec::Zero(v.size());
    if (H.size()) g += H * v;
    if (h.size()) g -= h;
    if (smooth_grad) g += smooth_grad(v);
    return g;
  }
  // Sign selector for the ℓ1 part, 0 at 0.
  Vec subgradient(const Vec& v) const {
    Vec g = gradient(v);
    if (has_l1())
      for (Eigen::Index k = 0; k < v.size(); ++k) g[k] += l1[k] * double((v[k] > 0) - (v[k] < 0));
    return g;
  }
  double lipschitz() const {
    double L = smooth_lipschitz;
    if (H.size()) L += Eigen::SelfAdjointEigenSolver<Mat>(H).eigenvalues().cwiseAbs().maxCoeff();
    return L;
  }
};

inline LocalCost quadratic_cost(std::vector<int> footprint, Mat H, Vec h, double c = 0) {
  LocalCost f;
  f.footprint = std::move(footprint);
  f.H = std::move(H);
  f.h = std::move(h);
  f.c = c;
  return f;
}

// ‖r - M v‖² as a quadratic cost.
inline LocalCost least_squares_cost(std::vector<int> footprint, const Mat& M, const Vec& r) {
  return quadratic_cost(std::move(footprint), 2 * M.transpose() * M, 2 * M.transpose() * r, r.squaredNorm());
}

struct SeparableProblem {
  Partition partition;
  std::vector<LocalCost> costs;  // one per agent

  int agents() const { return static_cast<int>(costs.size()); }

  std::vector<ComponentAgent> interference() const {
    std::vector<ComponentAgent> e;
    for (int i = 1; i <= agents(); ++i)
      for (int p : costs[i - 1].footprint) e.push_back({p, i});
    return e;
  }
  int local_dim(int i) const {
    int s = 0;
    for (int p : costs[i - 1].footprint) s += partition.dim(p);
    return s;
  }
  double lipschitz() const {
    double L = 0;
    for (const auto& c : costs) L = std::max(L, c.lipschitz());
    return L;
  }
  bool quadratic() const {
    return std::all_of(costs.begin(), costs.end(), [](const LocalCost& c) { return c.is_quadratic(); });
  }

  Vec gather(const Vec& y, int i) const {
    Vec v(local_dim(i));
    int o = 0;
    for (int p : costs[i - 1].footprint) v.segment(o, partition.dim(p)) = y.segment(partition.offset(p), partition.dim(p)), o += partition.dim(p);
    return v;
  }
  Vec gather(const EndLayout& L, const Vec& yh, int i) const {
    Vec v(local_dim(i));
    int o = 0;
    for (int p : costs[i - 1].footprint) v.segment(o, partition.dim(p)) = L.block(yh, p, i), o += partition.dim(p);
    return v;
  }

  double value(const Vec& y) const {
    double f = 0;
    for (int i = 1; i <= agents(); ++i) f += costs[i - 1].value(gather(y, i));
    return f;
  }
  Vec gradient(const Vec& y, bool sub = false) const {
    Vec g = Vec::Zero(y.size());
    for (int i = 1; i <= agents(); ++i) {
      Vec gi = sub ? costs[i - 1].subgradient(gather(y, i)) : costs[i - 1].gradient(gather(y, i));
      int o = 0;
      for (int p : costs[i - 1].footprint) g.segment(partition.offset(p), partition.dim(p)) += gi.segment(o, partition.dim(p)), o += partition.dim(p);
    }
    return g;
  }

  // f(ŷ) = Σ_i f_i(ỹ_i)
  double stacked_value(const EndLayout& L, const Vec& yh) const {
    double f = 0;
    for (int i = 1; i <= agents(); ++i) f += costs[i - 1].value(gather(L, yh, i));
    return f;
  }
  // ∇f(ŷ): agent i's partial gradients placed in its own blocks.
  Vec stacked_gradient(const EndLayout& L, const Vec& yh, bool sub = false) const {
    Vec g = Vec::Zero(yh.size());
    for (int i = 1; i <= agents(); ++i) {
      Vec v = gather(L, yh, i);
      Vec gi = sub ? costs[i - 1].subgradient(v) : costs[i - 1].gradient(v);
      int o = 0;
      for (int p : costs[i - 1].footprint) L.block(g, p, i) += gi.segment(o, partition.dim(p)), o += partition.dim(p);
    }
    return g;
  }
};

inline void check_layout(const EndLayout& L, const SeparableProblem& prob) {
  if (L.partition() != prob.partition) throw std::invalid_argument("layout partition differs from the problem");
  if (L.num_agents() != prob.agents()) throw std::invalid_argument("layout agent count differs from the problem");
  for (int i = 1; i <= prob.agents(); ++i)
    for (int p : prob.costs[i - 1].footprint)
      if (!L.holds(i, p))
        throw PreconditionError("agent " + std::to_string(i) + " lacks an estimate of component " + std::to_string(p));
}

// Scalar soft-thresholding, the prox of t·w|·|.
inline Vec soft_threshold(const Vec& v, const Vec& t) {
  return (v.array().abs() - t.array()).cwiseMax(0.0) * v.array().sign();
}

struct ReferenceSolution {
  Vec y;
  double value = 0;
};

// Centralized optimum: direct solve for quadratics, FISTA otherwise.
inline ReferenceSolution reference_solution(const SeparableProblem& prob, double tol = 1e-10, int max_iters = 2000000) {
  const int n = prob.partition.total();
  Mat H = Mat::Zero(n, n);
  Vec h = Vec::Zero(n);
  Vec w = Vec::Zero(n);
  bool generic = false;
  for (int i = 1; i <= prob.agents(); ++i) {
    const auto& c = prob.costs[i - 1];
    std::vector<int> idx;
    for (int p : c.footprint)
      for (int d = 0; d < prob.partition.dim(p); ++d) idx.push_back(prob.partition.offset(p) + d);
    for (std::size_t a = 0; a < idx.size(); ++a) {
      if (c.h.size()) h[idx[a]] += c.h[a];
      if (c.has_l1()) w[idx[a]] += c.l1[a];
      if (c.H.size())
        for (std::size_t b = 0; b < idx.size(); ++b) H(idx[a], idx[b]) += c.H(a, b);
    }
    generic = generic || c.has_generic();
  }
  ReferenceSolution r;
  if (!generic && w.cwiseAbs().maxCoeff() == 0) {
    r.y = H.completeOrthogonalDecomposition().solve(h);
  } else {
    const double step = 1.0 / std::max(1e-12, Eigen::SelfAdjointEigenSolver<Mat>(H).eigenvalues().maxCoeff() +
                                                  [&] { double s = 0; for (const auto& c : prob.costs) s += c.smooth_lipschitz; return s; }());
    Vec y = Vec::Zero(n), u = y;
    double t = 1;
    for (int k = 0; k < max_iters; ++k) {
      Vec g = prob.gradient(u);
      Vec yn = soft_threshold(u - step * g, step * w);
      double tn = 0.5 * (1 + std::sqrt(1 + 4 * t * t));
      u = yn + ((t - 1) / tn) * (yn - y);
      double res = (yn - y).norm();
      y = std::move(yn);
      t = tn;
      if (res < tol * 1e-3) break;
    }
    r.y = y;
  }
  r.value = prob.value(r.y);
  return r;
}

// 𝔐(ŷ) = max{‖Π⊥ŷ‖‖∇f(ŷ*)‖, |f(ŷ) - f*|}
inline double merit_m(const EndLayout& L, const SeparableProblem& prob, const Vec& yh, const Vec& y_star) {
  Vec ys = embed_consensus(L, y_star);
  double gnorm = prob.stacked_gradient(L, ys, true).norm();
  return std::max(disagreement(L, yh).norm() * gnorm, std::abs(prob.stacked_value(L, yh) - prob.stacked_value(L, ys)));
}

// 𝔙(ŷ) = max{‖diag(1/N_p)Π⊥ŷ‖‖∇f(ŷ*)‖, |f(Π∥ŷ) - f*|}
inline double merit_v(const EndLayout& L, const SeparableProblem& prob, const Vec& yh, const Vec& y_star) {
  Vec ys = embed_consensus(L, y_star);
  double gnorm = prob.stacked_gradient(L, ys, true).norm();
  Vec d = disagreement(L, yh);
  for (int p = 1; p <= L.num_components(); ++p) L.component(d, p) /= double(L.copies(p));
  return std::max(d.norm() * gnorm, std::abs(prob.stacked_value(L, consensus_projection(L, yh)) - prob.stacked_value(L, ys)));
}

// max_{p,i} ‖ŷ_{i,p} - y*_p‖∞
inline double max_block_distance(const EndLayout& L, const Vec& yh, const Vec& y_star) {
  return (yh - embed_consensus(L, y_star)).lpNorm<Eigen::Infinity>();
}

// ---------------------------------------------------------------- dual reformulation

struct EdgeConstraint {
  int p = 0, i = 0, j = 0;  // ŷ_{i,p} = ŷ_{j,p}
};

inline void require_undirected_designs(const EndLayout& L, const char* who) {
  for (int p = 1; p <= L.num_components(); ++p) {
    const Graph& g = L.design(p).graph();
    if (!g.symmetric() || !is_connected_undirected(Graph(g.nodes(), g.edges(), false)))
      throw PreconditionError(std::string(who) + ": design graph " + std::to_string(p) + " must be undirected and connected");
  }
}

inline std::vector<EdgeConstraint> dual_reformulate(const EndLayout& L, const SeparableProblem& prob) {
  check_layout(L, prob);
  require_undirected_designs(L, "dual_reformulate");
  std::vector<EdgeConstraint> out;
  for (int p = 1; p <= L.num_components(); ++p)
    for (const auto& e : L.design(p).graph().edges())
      if (e.from != e.to) out.push_back({p, e.to, e.from});
  return out;
}

inline bool constraints_satisfied(const EndLayout& L, const std::vector<EdgeConstraint>& cons, const Vec& yh, double tol = 1e-12) {
  for (const auto& c : cons)
    if ((L.block(yh, c.p, c.i) - L.block(yh, c.p, c.j)).lpNorm<Eigen::Infinity>() > tol) return false;
  return true;
}

}  // namespace estnet
