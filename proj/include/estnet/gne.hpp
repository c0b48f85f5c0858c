#pragma once

#include "games.hpp"

namespace estnet {

enum class ConstraintSense { Equality, Inequality };

// Affine-aggregative game with shared affine constraints. Blocks are keyed (q, i) and (m, i).
struct AggregativeGameSpec {
  std::vector<int> dims;  // n_{x_i}
  Partition sigma_part;   // n_{σ_q}
  Partition lambda_part;  // n_{λ_m}
  std::map<ComponentAgent, Mat> B;
  std::map<ComponentAgent, Vec> b;
  std::map<ComponentAgent, Mat> A;
  std::map<ComponentAgent, Vec> a;
  std::vector<ComponentAgent> sigma_interference;   // (q, i)
  std::vector<ComponentAgent> lambda_interference;  // (m, i)
  // ∇_{x_i} f̄_i(x_i, σ̃_i) and ∇_{σ_q} f̄_i(x_i, σ̃_i); σ̃_i readable on 𝒩Iσ(i) only.
  std::function<Vec(int i, const Vec& xi, const LocalBlocks& sigma)> grad_x;
  std::function<Vec(int i, int q, const Vec& xi, const LocalBlocks& sigma)> grad_sigma;
  // Optional fused F̃_i written into `out`; must agree with grad_x + Σ_q Bᵀ grad_sigma.
  std::function<void(int i, Eigen::Ref<const Vec> xi, const LocalBlocks& sigma, Eigen::Ref<Vec> out)> fused_gradient;
  std::vector<ConvexSet> sets;
  ConstraintSense sense = ConstraintSense::Equality;

  int agents() const { return static_cast<int>(dims.size()); }
  Partition x_part() const { return Partition(dims); }

  std::vector<std::vector<int>> sigma_needs() const {
    std::vector<std::vector<int>> n(agents());
    for (auto [q, i] : sigma_interference) n[i - 1].push_back(q);
    for (auto& v : n) std::sort(v.begin(), v.end()), v.erase(std::unique(v.begin(), v.end()), v.end());
    return n;
  }

  // σ(x) = Bx + b
  Vec sigma(const Vec& x) const {
    Partition xp = x_part();
    Vec s = Vec::Zero(sigma_part.total());
    for (const auto& [k, Bqi] : B) s.segment(sigma_part.offset(k.first), sigma_part.dim(k.first)) += Bqi * x.segment(xp.offset(k.second), xp.dim(k.second));
    for (const auto& [k, bqi] : b) s.segment(sigma_part.offset(k.first), sigma_part.dim(k.first)) += bqi;
    return s;
  }

  // Ax - a, with a = Σ_i a_{m,i}
  Vec constraint_residual(const Vec& x) const {
    Partition xp = x_part();
    Vec r = Vec::Zero(lambda_part.total());
    for (const auto& [k, Ami] : A) r.segment(lambda_part.offset(k.first), lambda_part.dim(k.first)) += Ami * x.segment(xp.offset(k.second), xp.dim(k.second));
    for (const auto& [k, ami] : a) r.segment(lambda_part.offset(k.first), lambda_part.dim(k.first)) -= ami;
    return r;
  }

  Vec A_transpose(const Vec& lambda) const {
    Partition xp = x_part();
    Vec r = Vec::Zero(xp.total());
    for (const auto& [k, Ami] : A)
      r.segment(xp.offset(k.second), xp.dim(k.second)) += Ami.transpose() * lambda.segment(lambda_part.offset(k.first), lambda_part.dim(k.first));
    return r;
  }

  // F̃_i with σ̃_i read from `view`.
  Vec extended_gradient(int i, const Vec& xi, const LocalBlocks& view, const std::vector<int>& needs) const {
    if (fused_gradient) {
      Vec g(xi.size());
      fused_gradient(i, xi, view, g);
      return g;
    }
    Vec g = grad_x(i, xi, view);
    for (int q : needs) {
      auto it = B.find({q, i});
      if (it == B.end()) continue;
      g += it->second.transpose() * grad_sigma(i, q, xi, view);
    }
    return g;
  }

  // True pseudo-gradient F(x) = F̃(x, E(σ(x))).
  Vec pseudo_gradient(const Vec& x) const {
    Partition xp = x_part();
    Vec s = sigma(x);
    const auto needs = sigma_needs();
    std::vector<int> offs(sigma_part.size(), -1);
    Vec F(x.size());
    for (int i = 1; i <= agents(); ++i) {
      std::fill(offs.begin(), offs.end(), -1);
      for (int q : needs[i - 1]) offs[q - 1] = sigma_part.offset(q);
      F.segment(xp.offset(i), xp.dim(i)) =
          extended_gradient(i, x.segment(xp.offset(i), xp.dim(i)), LocalBlocks(s.data(), &offs, &sigma_part.dims), needs[i - 1]);
    }
    return F;
  }

  Vec project(const Vec& x) const {
    Partition xp = x_part();
    Vec out(x.size());
    for (int i = 1; i <= agents(); ++i)
      out.segment(xp.offset(i), xp.dim(i)) = estnet::project(sets[i - 1], x.segment(xp.offset(i), xp.dim(i)));
    return out;
  }

  Vec project_dual(const Vec& lambda) const {
    return sense == ConstraintSense::Inequality ? Vec(lambda.cwiseMax(0.0)) : lambda;
  }
};

struct GneState {
  Vec x, s, z, lambda;
};

// Scratch vectors reused across steps.
struct GneWork {
  Vec sh, Lsh, g, dx, lz, r;
};

// Stacked data of the iteration: 𝐁, 𝐛 (scaled by N_q), 𝐀, 𝐚, and the two layouts.
class GneOperators {
 public:
  GneOperators(const EndLayout& Ls, const EndLayout& Ll, const AggregativeGameSpec& g) : Ls_(Ls), Ll_(Ll), g_(g) {
    if (Ls.partition() != g.sigma_part || Ll.partition() != g.lambda_part)
      throw std::invalid_argument("GneOperators: layout partitions differ from the game");
    const Partition xp = g.x_part();
    xoff_.assign(1, 0);
    for (int i = 1; i <= g.agents(); ++i) xoff_.push_back(xoff_.back() + xp.dim(i));
    needs_ = g.sigma_needs();
    for (int i = 1; i <= g.agents(); ++i)
      for (int q : needs_[i - 1])
        if (!Ls.holds(i, q))
          throw PreconditionError("GneOperators: agent " + std::to_string(i) + " lacks estimate of sigma_" + std::to_string(q));
    for (auto [m, i] : g.lambda_interference)
      if (!Ll.holds(i, m))
        throw PreconditionError("GneOperators: agent " + std::to_string(i) + " lacks estimate of lambda_" + std::to_string(m));

    std::vector<Eigen::Triplet<double>> t;
    Bb_ = Vec::Zero(Ls.stacked_size());
    for (const auto& [k, M] : g.B) {
      auto [q, i] = k;
      if (!Ls.holds(i, q)) throw PreconditionError("GneOperators: B block outside the estimate graph");
      const double Nq = Ls.copies(q);
      const int r0 = Ls.offset(q, i), c0 = xp.offset(i);
      for (int r = 0; r < M.rows(); ++r)
        for (int c = 0; c < M.cols(); ++c)
          if (M(r, c) != 0) t.emplace_back(r0 + r, c0 + c, Nq * M(r, c));
    }
    for (const auto& [k, v] : g.b) Ls.block(Bb_, k.first, k.second) += Ls.copies(k.first) * v;
    Bx_.resize(Ls.stacked_size(), xp.total());
    Bx_.setFromTriplets(t.begin(), t.end());

    t.clear();
    Aa_ = Vec::Zero(Ll.stacked_size());
    for (const auto& [k, M] : g.A) {
      auto [m, i] = k;
      if (!Ll.holds(i, m)) throw PreconditionError("GneOperators: A block outside the estimate graph");
      const int r0 = Ll.offset(m, i), c0 = xp.offset(i);
      for (int r = 0; r < M.rows(); ++r)
        for (int c = 0; c < M.cols(); ++c)
          if (M(r, c) != 0) t.emplace_back(r0 + r, c0 + c, M(r, c));
    }
    for (const auto& [k, v] : g.a) Ll.block(Aa_, k.first, k.second) += v;
    Ax_.resize(Ll.stacked_size(), xp.total());
    Ax_.setFromTriplets(t.begin(), t.end());

    table_ = access_table(Ls, needs_);
    Lsig_ = materialize_laplacian(Ls);
    Llam_ = materialize_laplacian(Ll);
    cost_ = communication_cost(Ls, CostMode::Unicast) + 2 * communication_cost(Ll, CostMode::Unicast);
  }

  const EndLayout& sigma_layout() const { return Ls_; }
  const EndLayout& lambda_layout() const { return Ll_; }
  const AggregativeGameSpec& game() const { return g_; }
  const SpMat& B() const { return Bx_; }
  const Vec& b() const { return Bb_; }
  const SpMat& A() const { return Ax_; }
  const Vec& a() const { return Aa_; }
  // σ̂, λ̂ and the 2ẑ⁺ - ẑ combination are exchanged once per iteration.
  double cost_per_iteration() const { return cost_; }

  GneState init(const Vec& x0) const {
    return {x0, Vec::Zero(Ls_.stacked_size()), Vec::Zero(Ll_.stacked_size()), Vec::Zero(Ll_.stacked_size())};
  }

  Vec sigma_hat(const GneState& st) const { return st.s + Bx_ * st.x + Bb_; }

  Vec extended_pseudo_gradient(const Vec& x, const Vec& sigma_hat) const {
    const Partition xp = g_.x_part();
    Vec F(x.size());
    for (int i = 1; i <= g_.agents(); ++i)
      F.segment(xp.offset(i), xp.dim(i)) = g_.extended_gradient(
          i, x.segment(xp.offset(i), xp.dim(i)), LocalBlocks(sigma_hat.data(), &table_[i - 1], &g_.sigma_part.dims), needs_[i - 1]);
    return F;
  }

  GneState step(const GneState& st, double alpha, double beta) const {
    GneState n;
    GneWork w;
    step_into(st, n, alpha, beta, w);
    return n;
  }

  // n must not alias st.
  void step_into(const GneState& st, GneState& n, double alpha, double beta, GneWork& w) const {
    auto seg = [&](const Vec& v, int i) { return v.segment(xoff_[i - 1], xoff_[i] - xoff_[i - 1]); };
    w.sh = st.s + Bb_;
    w.sh.noalias() += Bx_ * st.x;
    w.Lsh.noalias() = Lsig_ * w.sh;
    w.g.resize(st.x.size());
    for (int i = 1; i <= g_.agents(); ++i) {
      LocalBlocks view(w.sh.data(), &table_[i - 1], &g_.sigma_part.dims);
      auto gi = w.g.segment(xoff_[i - 1], xoff_[i] - xoff_[i - 1]);
      if (g_.fused_gradient)
        g_.fused_gradient(i, seg(st.x, i), view, gi);
      else
        gi = g_.extended_gradient(i, seg(st.x, i), view, needs_[i - 1]);
    }
    w.g *= alpha;
    w.g.noalias() += Bx_.transpose() * w.Lsh;
    w.g.noalias() += Ax_.transpose() * st.lambda;
    n.x = st.x - beta * w.g;
    for (int i = 1; i <= g_.agents(); ++i) project_inplace(g_.sets[i - 1], n.x.segment(xoff_[i - 1], xoff_[i] - xoff_[i - 1]));
    n.s = st.s - beta * w.Lsh;
    w.lz.noalias() = Llam_ * st.lambda;
    n.z = st.z + beta * w.lz;
    w.dx = 2 * n.x - st.x;
    w.lz = 2 * n.z - st.z;
    w.r = Aa_;
    w.r.noalias() += Llam_ * w.lz;
    w.r.noalias() -= Ax_ * w.dx;
    n.lambda = st.lambda - beta * w.r;
    if (g_.sense == ConstraintSense::Inequality) n.lambda = n.lambda.cwiseMax(0.0);
  }

  // Skew part of the splitting: (𝐀ᵀλ, 0, -Lλ λ, Lλ z - 𝐀 x).
  GneState skew_apply(const GneState& v) const {
    return {Ax_.transpose() * v.lambda, Vec::Zero(v.s.size()), -apply_laplacian(Ll_, v.lambda),
            apply_laplacian(Ll_, v.z) - Ax_ * v.x};
  }

  // Dense symmetric preconditioner in (x, s, z, λ) order.
  Mat preconditioner(double beta) const {
    const int nx = int(Ax_.cols()), ns = Ls_.stacked_size(), nl = Ll_.stacked_size();
    Mat Phi = Mat::Identity(nx + ns + 2 * nl, nx + ns + 2 * nl) / beta;
    Mat A = Mat(Ax_), L = Mat(materialize_laplacian(Ll_));
    const int oz = nx + ns, ol = nx + ns + nl;
    Phi.block(0, ol, nx, nl) = -A.transpose();
    Phi.block(ol, 0, nl, nx) = -A;
    Phi.block(oz, ol, nl, nl) = L.transpose();
    Phi.block(ol, oz, nl, nl) = L;
    return Phi;
  }

  // λmin(Φ) = 1/β - σmax([-𝐀, Lλ]).
  double preconditioner_min_eig(double beta) const {
    Mat A = Mat(Ax_), L = Mat(materialize_laplacian(Ll_));
    Mat NNt = A * A.transpose() + L * L.transpose();
    double smax = std::sqrt(std::max(0.0, Eigen::SelfAdjointEigenSolver<Mat>(NNt).eigenvalues().maxCoeff()));
    return 1.0 / beta - smax;
  }

  // Φ-weighted squared norm of a state difference.
  double phi_norm_sq(const GneState& d, double beta) const {
    Vec Lz = apply_laplacian(Ll_, d.z);
    double s = (d.x.squaredNorm() + d.s.squaredNorm() + d.z.squaredNorm() + d.lambda.squaredNorm()) / beta;
    s += 2 * (-d.lambda.dot(Ax_ * d.x) + d.lambda.dot(Lz));
    return s;
  }

 private:
  const EndLayout& Ls_;
  const EndLayout& Ll_;
  const AggregativeGameSpec& g_;
  std::vector<int> xoff_;
  std::vector<std::vector<int>> needs_, table_;
  SpMat Bx_, Ax_, Lsig_, Llam_;
  Vec Bb_, Aa_;
  double cost_ = 0;
};

inline GneState gne_step(const GneOperators& ops, const GneState& st, double alpha, double beta) {
  if (!(alpha > 0) || !(beta > 0)) throw std::invalid_argument("gne_step: step sizes must be positive");
  if (ops.preconditioner_min_eig(beta) <= 0) throw PreconditionError("gne_step: beta too large, preconditioner not positive definite");
  return ops.step(st, alpha, beta);
}

inline GneState operator-(const GneState& a, const GneState& b) { return {a.x - b.x, a.s - b.s, a.z - b.z, a.lambda - b.lambda}; }

// KKT residual at (x, λ); λ already in the multiplier scale of the KKT system.
inline double kkt_residual(const AggregativeGameSpec& g, const Vec& x, const Vec& lambda) {
  Vec F = g.pseudo_gradient(x);
  double r = (g.project(x - F - g.A_transpose(lambda)) - x).norm();
  Vec c = g.constraint_residual(x);
  if (g.sense == ConstraintSense::Equality) return r + c.norm();
  return r + c.cwiseMax(0.0).norm() + std::abs(lambda.dot(c));
}

// The iteration converges to λ̂ = E(α λ*); the averaged copies are rescaled here.
inline Vec kkt_multiplier(const GneOperators& ops, const GneState& st, double alpha) {
  return component_means(ops.lambda_layout(), st.lambda) / alpha;
}

// Centralized extragradient on the KKT operator, for the v-GNE reference.
inline std::pair<Vec, Vec> reference_vgne(const AggregativeGameSpec& g, double tau, Vec x0 = Vec(), double tol = 1e-12,
                                          int max_iters = 5000000) {
  Vec x = x0.size() ? x0 : Vec::Zero(g.x_part().total());
  Vec l = Vec::Zero(g.lambda_part.total());
  for (int k = 0; k < max_iters; ++k) {
    Vec xb = g.project(x - tau * (g.pseudo_gradient(x) + g.A_transpose(l)));
    Vec lb = g.project_dual(l + tau * g.constraint_residual(x));
    x = g.project(x - tau * (g.pseudo_gradient(xb) + g.A_transpose(lb)));
    l = g.project_dual(l + tau * g.constraint_residual(xb));
    if (k % 50 == 0 && kkt_residual(g, x, l) < tol) break;
  }
  return {x, l};
}

struct GneSolveOptions {
  StopRule stop;
  std::optional<Vec> reference;  // x*
  double x_tol = 1e-2;
  double kkt_tol = 1e-3;
  int kkt_every = 10;  // KKT checks past x_tol; the stop iteration is exact up to this stride
};

// Columns: k, residual (KKT), consensus_err (σ̂), consensus_lambda, comm_cost, wall_ns, dist_x, invariant.
inline RunTrace gne_solve(const GneOperators& ops, double alpha, double beta, const GneSolveOptions& opt, const Vec& x0) {
  if (ops.preconditioner_min_eig(beta) <= 0) throw PreconditionError("gne_solve: beta too large, preconditioner not positive definite");
  RunTrace tr({"k", "residual", "consensus_err", "consensus_lambda", "comm_cost", "wall_ns", "dist_x", "invariant"});
  WallClock clock(opt.stop.timing);
  const auto& Ls = ops.sigma_layout();
  const auto& Ll = ops.lambda_layout();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  GneState st = ops.init(x0), nx = st;
  GneWork work;
  double max_inv = 0;
  int first_x = -1;
  auto dist = [&] { return opt.reference ? (st.x - *opt.reference).norm() : nan; };
  auto kkt = [&] { return kkt_residual(ops.game(), st.x, kkt_multiplier(ops, st, alpha)); };
  auto row = [&](int k, double inv, double dx, double res) {
    return std::vector<double>{double(k), res, disagreement(Ls, ops.sigma_hat(st)).norm(), disagreement(Ll, st.lambda).norm(),
                               ops.cost_per_iteration() * k, clock.ns(), dx, inv};
  };
  tr.add(row(0, consensus_norm(Ls, st.s), dist(), kkt()));
  const double scale = std::max(1.0, x0.norm());
  for (int k = 1; k <= opt.stop.max_iters; ++k) {
    ops.step_into(st, nx, alpha, beta, work);
    std::swap(st, nx);
    tr.iterations = k;
    const double inv = consensus_norm(Ls, st.s);
    const double dx = dist();
    max_inv = std::max(max_inv, inv);
    // The KKT residual is the expensive part; it is evaluated only when it can matter.
    const bool xok = !opt.reference || dx <= opt.x_tol;
    if (xok && first_x < 0) first_x = k;
    const bool store = k % opt.stop.stride == 0 || k == opt.stop.max_iters;
    const double res = ((xok && k % opt.kkt_every == 0) || store) ? kkt() : nan;
    const bool done = xok && res <= opt.kkt_tol;
    const double nrm = st.x.norm() + st.lambda.norm() + st.s.norm();
    const bool blown = !std::isfinite(nrm) || nrm > opt.stop.divergence_factor * scale;
    if (store || done || blown) tr.add(row(k, inv, dx, blown ? kkt() : res));
    if (blown) {
      tr.diverged = true;
      tr.diagnostic = "state norm exceeded divergence threshold at k=" + std::to_string(k);
      break;
    }
    if (done) {
      tr.converged = true;
      break;
    }
  }
  tr.summary["max_invariant"] = max_inv;
  tr.summary["iterations_to_x_tol"] = first_x;
  tr.summary["final_kkt"] = tr.last("residual");
  tr.summary["cost_per_iteration"] = ops.cost_per_iteration();
  for (int k = 0; k < st.x.size(); ++k) tr.summary["x_" + std::to_string(k + 1)] = st.x[k];
  return tr;
}

// Halve β from 1e-2 until Φ ≻ 0 and 200 probe steps have non-increasing Φ-norm increments.
inline double auto_beta(const GneOperators& ops, double alpha, const Vec& x0, double start = 1e-2) {
  for (double beta = start; beta > 1e-10; beta /= 2) {
    if (ops.preconditioner_min_eig(beta) <= 0) continue;
    GneState st = ops.init(x0), nx = ops.step(st, alpha, beta);
    double prev = ops.phi_norm_sq(nx - st, beta);
    bool ok = std::isfinite(prev);
    for (int k = 0; k < 200 && ok; ++k) {
      st = nx;
      nx = ops.step(st, alpha, beta);
      double d = ops.phi_norm_sq(nx - st, beta);
      if (!std::isfinite(d) || d > prev * (1 + 1e-9) + 1e-300) ok = false;
      prev = d;
    }
    if (ok) return beta;
  }
  return 0.0;
}

}  // namespace estnet
