#pragma once

#include "optim.hpp"

namespace estnet {

struct AdmmState {
  Vec y;  // stacked, variable-major
  Vec z;  // one block per (p, i, j), j a design neighbour of i
};

// Relaxed consensus ADMM on the edge-constrained reformulation:
//   ỹ_i+ = argmin f_i + Σ_p Σ_{j∈N_p(i)} (ρ/2)‖ŷ_{i,p}‖² - ⟨z_{i,j,p}, ŷ_{i,p}⟩
//   z_{i,j,p}+ = (1-α) z_{i,j,p} - α z_{j,i,p} + 2αρ ŷ_{j,p}+
class AdmmSolver {
 public:
  AdmmSolver(const EndLayout& L, const SeparableProblem& prob, double rho = 1.0) : L_(L), prob_(prob), rho_(rho) {
    if (!(rho > 0)) throw std::invalid_argument("AdmmSolver: penalty must be positive");
    check_layout(L, prob);
    require_undirected_designs(L, "admm");
    const int P = L.num_components();
    nbrs_.assign(P, {});
    zoff_.assign(P, {});
    int off = 0;
    for (int p = 1; p <= P; ++p) {
      const Graph& g = L.design(p).graph();
      for (int i : g.nodes()) {
        std::vector<int> nb;
        for (int j : g.in_neighbors(i))
          if (j != i) nb.push_back(j);
        std::vector<int> o;
        for (std::size_t k = 0; k < nb.size(); ++k) o.push_back(off), off += L.dim(p);
        nbrs_[p - 1].push_back(std::move(nb));
        zoff_[p - 1].push_back(std::move(o));
      }
    }
    zsize_ = off;
    // Cached factorizations of (H + ρD) for the quadratic agents.
    fact_.resize(prob.agents());
    for (int i = 1; i <= prob.agents(); ++i) {
      const auto& c = prob.costs[i - 1];
      if (!c.is_quadratic()) continue;
      const int n = prob.local_dim(i);
      Mat K = c.H.size() ? c.H : Mat::Zero(n, n);
      int o = 0;
      for (int p : c.footprint) {
        K.diagonal().segment(o, L.dim(p)).array() += rho_ * degree(p, i);
        o += L.dim(p);
      }
      fact_[i - 1] = K.ldlt();
    }
  }

  int degree(int p, int i) const { return int(nbrs_[p - 1][L_.position(p, i)].size()); }

  AdmmState init() const { return {Vec::Zero(L_.stacked_size()), Vec::Zero(zsize_)}; }

  int z_offset(int p, int i, int j) const {
    const int a = L_.position(p, i);
    const auto& nb = nbrs_[p - 1][a];
    auto it = std::lower_bound(nb.begin(), nb.end(), j);
    if (it == nb.end() || *it != j) throw std::out_of_range("admm: not a design edge");
    return zoff_[p - 1][a][it - nb.begin()];
  }

  AdmmState step(const AdmmState& st, double alpha) const {
    if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("admm: relaxation alpha must lie in (0,1)");
    AdmmState n{st.y, Vec(zsize_)};
    for (int i = 1; i <= prob_.agents(); ++i) solve_local(i, st, n.y);
    for (int p = 1; p <= L_.num_components(); ++p) {
      const auto& hs = L_.holders(p);
      for (std::size_t a = 0; a < hs.size(); ++a) {
        const int i = hs[a];
        for (std::size_t k = 0; k < nbrs_[p - 1][a].size(); ++k) {
          const int j = nbrs_[p - 1][a][k];
          const int o = zoff_[p - 1][a][k], r = z_offset(p, j, i), d = L_.dim(p);
          n.z.segment(o, d) = (1 - alpha) * st.z.segment(o, d) - alpha * st.z.segment(r, d) + 2 * alpha * rho_ * L_.block(n.y, p, j);
        }
      }
    }
    return n;
  }

 private:
  Vec z_sum(const AdmmState& st, int p, int i) const {
    const int a = L_.position(p, i);
    Vec s = Vec::Zero(L_.dim(p));
    for (int o : zoff_[p - 1][a]) s += st.z.segment(o, L_.dim(p));
    return s;
  }

  void solve_local(int i, const AdmmState& st, Vec& out) const {
    const auto& c = prob_.costs[i - 1];
    // Blocks outside the footprint only see the penalty.
    for (int p : L_.held(i)) {
      if (std::binary_search(c.footprint.begin(), c.footprint.end(), p)) continue;
      int d = degree(p, i);
      L_.block(out, p, i) = d > 0 ? Vec(z_sum(st, p, i) / (rho_ * d)) : Vec(L_.block(st.y, p, i));
    }
    if (c.footprint.empty()) return;
    const int n = prob_.local_dim(i);
    Vec r(n), dg(n);
    int o = 0;
    for (int p : c.footprint) {
      r.segment(o, L_.dim(p)) = z_sum(st, p, i);
      dg.segment(o, L_.dim(p)).setConstant(rho_ * degree(p, i));
      o += L_.dim(p);
    }
    Vec v;
    if (c.is_quadratic()) {
      Vec rhs = r;
      if (c.h.size()) rhs += c.h;
      v = fact_[i - 1].solve(rhs);
    } else {
      v = prox_solve(c, dg, r, prob_.gather(L_, st.y, i));
    }
    o = 0;
    for (int p : c.footprint) L_.block(out, p, i) = v.segment(o, L_.dim(p)), o += L_.dim(p);
  }

  // argmin f(v) + ½ vᵀ diag(dg) v - rᵀv by accelerated proximal gradient.
  static Vec prox_solve(const LocalCost& c, const Vec& dg, const Vec& r, Vec v0) {
    const double Lc = c.lipschitz() + dg.maxCoeff();
    const double step = 1.0 / std::max(Lc, 1e-12);
    const Vec w = c.has_l1() ? c.l1 : Vec::Zero(v0.size());
    Vec v = v0, u = v0;
    double t = 1;
    for (int k = 0; k < 10000; ++k) {
      Vec g = c.gradient(u) + dg.cwiseProduct(u) - r;
      Vec vn = soft_threshold(u - step * g, step * w);
      double tn = 0.5 * (1 + std::sqrt(1 + 4 * t * t));
      u = vn + ((t - 1) / tn) * (vn - v);
      double res = (vn - v).norm();
      v = std::move(vn);
      t = tn;
      if (res < 1e-10) return v;
    }
    throw std::runtime_error("admm: inner proximal solver did not converge");
  }

  const EndLayout& L_;
  const SeparableProblem& prob_;
  double rho_;
  std::vector<std::vector<std::vector<int>>> nbrs_, zoff_;
  int zsize_ = 0;
  std::vector<Eigen::LDLT<Mat>> fact_;
};

inline AdmmState admm_step(const AdmmSolver& s, const AdmmState& st, double alpha) { return s.step(st, alpha); }

struct OptimSolveOptions {
  StopRule stop;
  std::optional<Vec> reference;  // y*
};

inline std::vector<std::string> optim_columns() {
  return {"k", "f_gap", "consensus_err", "merit", "comm_cost_unicast", "comm_cost_broadcast", "wall_ns", "dist"};
}

// Stops once every block is within tol of the reference, or on a step residual below tol.
inline RunTrace admm_solve(const EndLayout& L, const SeparableProblem& prob, double alpha, const OptimSolveOptions& opt,
                           double rho = 1.0) {
  if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("admm: relaxation alpha must lie in (0,1)");
  AdmmSolver s(L, prob, rho);
  RunTrace tr(optim_columns());
  WallClock clock(opt.stop.timing);
  const double cu = communication_cost(L, CostMode::Unicast), cb = communication_cost(L, CostMode::Broadcast);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  double fstar = opt.reference ? prob.value(*opt.reference) : nan;
  AdmmState st = s.init();
  auto row = [&](int k) {
    double dist = opt.reference ? max_block_distance(L, st.y, *opt.reference) : nan;
    double mv = opt.reference ? merit_v(L, prob, st.y, *opt.reference) : nan;
    return std::vector<double>{double(k), prob.stacked_value(L, consensus_projection(L, st.y)) - fstar,
                               disagreement(L, st.y).norm(), mv, cu * k, cb * k, clock.ns(), dist};
  };
  tr.add(row(0));
  for (int k = 1; k <= opt.stop.max_iters; ++k) {
    AdmmState n = s.step(st, alpha);
    double res = (n.y - st.y).norm() + (n.z - st.z).norm();
    st = std::move(n);
    tr.iterations = k;
    bool done = opt.reference ? max_block_distance(L, st.y, *opt.reference) < opt.stop.tol : res < opt.stop.tol;
    bool blown = !std::isfinite(res);
    if (k % opt.stop.stride == 0 || done || blown || k == opt.stop.max_iters) tr.add(row(k));
    if (blown) {
      tr.diverged = true;
      tr.diagnostic = "non-finite iterate at k=" + std::to_string(k);
      break;
    }
    if (done) {
      tr.converged = true;
      break;
    }
  }
  return tr;
}

}  // namespace estnet
