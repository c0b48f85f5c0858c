#pragma once

#include "optim.hpp"

namespace estnet {

// Per-component N_p × N_p blocks; the stacked operators are M_p ⊗ I.
struct AbcMatrices {
  std::vector<Mat> A, B, C, D;
  bool distributed = true;  // require one-hop sparsity
};

inline Vec apply_blocks(const EndLayout& L, const std::vector<Mat>& M, const Vec& v) {
  Vec out(v.size());
  for (int p = 1; p <= L.num_components(); ++p) L.component(out, p).noalias() = L.component(v, p) * M[p - 1].transpose();
  return out;
}

// A = B = W², C = (I - W)², D = I. Two mixing rounds per step, so not one-hop.
inline AbcMatrices augdgm_matrices(const EndLayout& L) {
  AbcMatrices m;
  m.distributed = false;
  for (const auto& wg : L.designs()) {
    const Mat& W = wg.matrix();
    Mat I = Mat::Identity(W.rows(), W.cols());
    m.A.push_back(W * W);
    m.B.push_back(W * W);
    m.C.push_back((I - W) * (I - W));
    m.D.push_back(I);
  }
  return m;
}

struct AbcReport {
  bool c1 = true, c2 = true, c3 = true, c4 = true, c5 = true, compliant = true;
  std::vector<std::string> failures;
  bool ok() const { return c1 && c2 && c3 && c4 && c5 && compliant; }
};

namespace detail {
inline double min_sym_eig(const Mat& M) { return Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (M + M.transpose())).eigenvalues().minCoeff(); }
inline bool symmetric(const Mat& M, double tol) { return (M - M.transpose()).cwiseAbs().maxCoeff() <= tol; }
// Spectral square root with eigenvalues clipped at 0.
inline Mat psd_sqrt(const Mat& M) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (M + M.transpose()));
  Vec d = es.eigenvalues();
  for (auto& x : d) x = x < 0 ? 0.0 : std::sqrt(x);
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}
}  // namespace detail

inline AbcReport abc_check(const AbcMatrices& m, const EndLayout& L, double tol = 1e-8) {
  AbcReport r;
  auto fail = [&](bool& flag, int p, const std::string& what) {
    flag = false;
    r.failures.push_back("component " + std::to_string(p) + ": " + what);
  };
  for (int p = 1; p <= L.num_components(); ++p) {
    const Mat &A = m.A[p - 1], &B = m.B[p - 1], &C = m.C[p - 1], &D = m.D[p - 1];
    const auto N = A.rows();
    const Vec one = Vec::Ones(N);
    const Mat I = Mat::Identity(N, N);
    if ((A - B * D).cwiseAbs().maxCoeff() > tol) fail(r.c1, p, "C1: A != BD");
    if (!detail::symmetric(B, tol) || detail::min_sym_eig(B) < -tol) fail(r.c1, p, "C1: B not PSD");
    if (!detail::symmetric(D, tol) || detail::min_sym_eig(D) <= tol) fail(r.c1, p, "C1: D not PD");
    if ((D * one - one).cwiseAbs().maxCoeff() > tol) fail(r.c2, p, "C2: D1 != 1");
    if ((B * one - one).cwiseAbs().maxCoeff() > tol) fail(r.c2, p, "C2: B1 != 1");
    if (!detail::symmetric(C, tol) || detail::min_sym_eig(C) < -tol) {
      fail(r.c3, p, "C3: C not PSD");
    } else {
      Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (C + C.transpose()));
      int nul = int((es.eigenvalues().array() <= tol).count());
      if (nul != 1 || (C * one).cwiseAbs().maxCoeff() > tol) fail(r.c3, p, "C3: null(C) != span(1)");
    }
    if ((B * C - C * B).cwiseAbs().maxCoeff() > tol) fail(r.c4, p, "C4: BC != CB");
    Mat sB = detail::psd_sqrt(B);
    Mat M5 = I - 0.5 * C - sB * D * sB;
    if (detail::min_sym_eig(M5) < -tol) fail(r.c5, p, "C5: I - C/2 - sqrt(B) D sqrt(B) not PSD");
    if (m.distributed) {
      const Graph& g = L.design(p).graph();
      for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) {
          if (a == b) continue;
          bool edge = g.has_edge(g.nodes()[b], g.nodes()[a]);
          for (const Mat* M : {&A, &B, &C, &D})
            if (!edge && std::abs((*M)(a, b)) > tol) {
              fail(r.compliant, p, "matrix pattern exceeds the design graph");
              a = b = int(N);
              break;
            }
        }
    }
  }
  return r;
}

struct AbcState {
  Vec y, z;
};

// ŷ+ = Aŷ - γB∇f(ŷ) - ẑ,  ẑ+ = ẑ + Cŷ+
inline AbcState abc_step(const AbcMatrices& m, const EndLayout& L, const SeparableProblem& prob, const AbcState& st, double gamma) {
  AbcState n;
  n.y = apply_blocks(L, m.A, st.y) - gamma * apply_blocks(L, m.B, prob.stacked_gradient(L, st.y)) - st.z;
  n.z = st.z + apply_blocks(L, m.C, n.y);
  return n;
}

// h(ŷ*, 2ẑ*)/2 with ẑ* = -∇f(ŷ*).
inline double abc_bound(const AbcMatrices& m, const EndLayout& L, const SeparableProblem& prob, double gamma, const Vec& y0,
                        const Vec& y_star) {
  Vec ys = embed_consensus(L, y_star);
  Vec d = y0 - ys;
  double dn = d.dot(apply_blocks(L, m.D, d));
  double bnorm = 0, lam = std::numeric_limits<double>::infinity();
  for (int p = 1; p <= L.num_components(); ++p) {
    const auto N = m.B[p - 1].rows();
    Mat J = Mat::Constant(N, N, 1.0 / double(N));
    bnorm = std::max(bnorm, Eigen::JacobiSVD<Mat>(m.B[p - 1] - J).singularValues()(0));
    if (N >= 2) lam = std::min(lam, Eigen::SelfAdjointEigenSolver<Mat>(m.C[p - 1]).eigenvalues()(1));
  }
  double zs = 4 * prob.stacked_gradient(L, ys).squaredNorm();
  double tail = std::isinf(lam) ? 0.0 : gamma * bnorm / lam * zs;
  return 0.5 * (dn / gamma + tail);
}

struct AbcSolveOptions {
  int iterations = 10000;
  int stride = 1;
  bool timing = false;
  std::optional<Vec> reference;  // y*
  Vec y0;                        // defaults to 0
};

// Columns: k, f_gap, consensus_err, merit (of the running average), comm costs, wall_ns, dist.
inline RunTrace abc_solve(const AbcMatrices& m, const EndLayout& L, const SeparableProblem& prob, double gamma,
                          const AbcSolveOptions& opt) {
  check_layout(L, prob);
  RunTrace tr(optim_columns());
  double Lf = prob.lipschitz(), dmin = std::numeric_limits<double>::infinity();
  for (const auto& D : m.D) dmin = std::min(dmin, detail::min_sym_eig(D));
  if (!(gamma > 0 && gamma < dmin / Lf))
    tr.warnings.push_back("gamma outside (0, lambda_min(D)/L): convergence not guaranteed");
  WallClock clock(opt.timing);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  // Two exchanges per round (Aŷ and Bŷ-type products).
  const double cu = 2 * communication_cost(L, CostMode::Unicast), cb = 2 * communication_cost(L, CostMode::Broadcast);
  AbcState st{opt.y0.size() ? opt.y0 : Vec::Zero(L.stacked_size()), Vec::Zero(L.stacked_size())};
  double fstar = opt.reference ? prob.value(*opt.reference) : nan;
  if (opt.reference) tr.summary["bound"] = abc_bound(m, L, prob, gamma, st.y, *opt.reference);
  Vec sum = Vec::Zero(L.stacked_size());
  tr.add({0, prob.stacked_value(L, st.y) - fstar, disagreement(L, st.y).norm(),
          opt.reference ? merit_m(L, prob, st.y, *opt.reference) : nan, 0, 0, clock.ns(),
          opt.reference ? max_block_distance(L, st.y, *opt.reference) : nan});
  for (int k = 1; k <= opt.iterations; ++k) {
    st = abc_step(m, L, prob, st, gamma);
    sum += st.y;
    tr.iterations = k;
    if (!std::isfinite(st.y.norm())) {
      tr.diverged = true;
      tr.diagnostic = "non-finite iterate at k=" + std::to_string(k);
      break;
    }
    if (k % opt.stride == 0 || k == opt.iterations) {
      Vec avg = sum / double(k);
      tr.add({double(k), prob.stacked_value(L, st.y) - fstar, disagreement(L, st.y).norm(),
              opt.reference ? merit_m(L, prob, avg, *opt.reference) : nan, cu * k, cb * k, clock.ns(),
              opt.reference ? max_block_distance(L, st.y, *opt.reference) : nan});
    }
  }
  return tr;
}

// ---------------------------------------------------------------- AugDGM

struct AugDgmState {
  Vec y, v;
};

inline void require_symmetric_doubly_stochastic(const EndLayout& L) {
  for (int p = 1; p <= L.num_components(); ++p) {
    const auto& wg = L.design(p);
    if (!wg.doubly_stochastic(1e-10) || !detail::symmetric(wg.matrix(), 1e-12))
      throw PreconditionError("augdgm: weights of component " + std::to_string(p) + " are not symmetric doubly stochastic");
  }
}

// ŷ⁰ = 0, v̂⁰ = Ŵ∇f(ŷ⁰)
inline AugDgmState augdgm_init(const EndLayout& L, const SeparableProblem& prob) {
  require_symmetric_doubly_stochastic(L);
  Vec y = Vec::Zero(L.stacked_size());
  return {y, apply_weights(L, prob.stacked_gradient(L, y))};
}

// ŷ+ = Ŵ(ŷ - γv̂),  v̂+ = Ŵ(v̂ + ∇f(ŷ+) - ∇f(ŷ))
inline AugDgmState augdgm_step(const EndLayout& L, const SeparableProblem& prob, const AugDgmState& st, double gamma) {
  AugDgmState n;
  n.y = apply_weights(L, st.y - gamma * st.v);
  n.v = apply_weights(L, st.v + prob.stacked_gradient(L, n.y) - prob.stacked_gradient(L, st.y));
  return n;
}

}  // namespace estnet
