#pragma once

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

#include <functional>
#include <optional>
#include <random>

#include "layout.hpp"
#include "sets.hpp"
#include "trace.hpp"

namespace estnet {

// Agent i's gradient oracle reads blocks (x_p)_{p ∈ 𝒩I(i)} by agent id.
using GradientOracle = std::function<Vec(int i, const LocalBlocks& blocks)>;

struct GameSpec {
  std::vector<int> dims;                       // n_{x_i}
  std::vector<std::vector<int>> interference;  // 𝒩I(i), ascending, contains i
  GradientOracle gradient;
  std::vector<ConvexSet> sets;
  std::optional<double> mu, theta;
  bool constants_estimated = false;

  int agents() const { return static_cast<int>(dims.size()); }
  Partition partition() const { return Partition(dims); }

  std::vector<ComponentAgent> interference_edges() const {
    std::vector<ComponentAgent> e;
    for (int i = 1; i <= agents(); ++i)
      for (int p : interference[i - 1]) e.push_back({p, i});
    return e;
  }

  // Full-information pseudo-gradient F(x).
  Vec pseudo_gradient(const Vec& x) const {
    Partition part = partition();
    std::vector<int> offs(agents(), -1);
    Vec F(x.size());
    for (int i = 1; i <= agents(); ++i) {
      std::fill(offs.begin(), offs.end(), -1);
      for (int p : interference[i - 1]) offs[p - 1] = part.offset(p);
      F.segment(part.offset(i), dims[i - 1]) = gradient(i, LocalBlocks(x.data(), &offs, &dims));
    }
    return F;
  }

  Vec project(const Vec& x) const {
    Partition part = partition();
    Vec out(x.size());
    for (int i = 1; i <= agents(); ++i)
      out.segment(part.offset(i), dims[i - 1]) = estnet::project(sets[i - 1], x.segment(part.offset(i), dims[i - 1]));
    return out;
  }
};

// F(x) = G x + g; interference read off the nonzero blocks of G.
inline GameSpec make_quadratic_game(const Mat& G, const Vec& g, std::vector<int> dims, std::vector<ConvexSet> sets = {}) {
  GameSpec s;
  s.dims = std::move(dims);
  Partition part(s.dims);
  const int I = part.size();
  if (G.rows() != part.total() || G.cols() != part.total() || g.size() != part.total())
    throw std::invalid_argument("make_quadratic_game: dimension mismatch");
  s.interference.assign(I, {});
  for (int i = 1; i <= I; ++i)
    for (int p = 1; p <= I; ++p) {
      auto blk = G.block(part.offset(i), part.offset(p), part.dim(i), part.dim(p));
      if (p == i || blk.cwiseAbs().maxCoeff() > 0.0) s.interference[i - 1].push_back(p);
    }
  if (sets.empty()) sets.assign(I, FreeSpace{});
  s.sets = std::move(sets);
  auto inter = s.interference;
  s.gradient = [G, g, part, inter](int i, const LocalBlocks& b) {
    Vec r = g.segment(part.offset(i), part.dim(i));
    for (int p : inter[i - 1]) r += G.block(part.offset(i), part.offset(p), part.dim(i), part.dim(p)) * b(p);
    return r;
  };
  Mat S = 0.5 * (G + G.transpose());
  s.mu = Eigen::SelfAdjointEigenSolver<Mat>(S).eigenvalues().minCoeff();
  s.theta = Eigen::JacobiSVD<Mat>(G).singularValues()(0);
  return s;
}

// Sampled strong-monotonicity and Lipschitz constants over a box; labelled as estimates.
inline std::pair<double, double> estimate_game_constants(GameSpec& game, double lo, double hi, int samples = 2000,
                                                         unsigned seed = 7) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  const int n = game.partition().total();
  double mu = std::numeric_limits<double>::infinity(), theta = 0;
  for (int s = 0; s < samples; ++s) {
    Vec x(n), y(n);
    for (int k = 0; k < n; ++k) x[k] = u(rng), y[k] = u(rng);
    Vec d = x - y;
    double dd = d.squaredNorm();
    if (dd < 1e-24) continue;
    Vec dF = game.pseudo_gradient(x) - game.pseudo_gradient(y);
    mu = std::min(mu, dF.dot(d) / dd);
    theta = std::max(theta, dF.norm() / std::sqrt(dd));
  }
  game.mu = mu;
  game.theta = theta;
  game.constants_estimated = true;
  return {mu, theta};
}

// Centralized projected pseudo-gradient: x+ = proj(x - alpha F(x)).
inline Vec centralized_pg_step(const GameSpec& game, const Vec& x, double alpha) {
  return game.project(x - alpha * game.pseudo_gradient(x));
}

// High-accuracy NE by the centralized projected pseudo-gradient method.
inline Vec reference_ne(const GameSpec& game, Vec x0 = Vec(), double tol = 1e-14, int max_iters = 2000000) {
  if (!game.mu || !game.theta || *game.mu <= 0) throw PreconditionError("reference_ne: needs mu > 0 and theta");
  double alpha = *game.mu / (*game.theta * *game.theta);
  Vec x = x0.size() ? x0 : Vec::Zero(game.partition().total());
  for (int k = 0; k < max_iters; ++k) {
    Vec xn = centralized_pg_step(game, x, alpha);
    double r = (xn - x).norm();
    x = std::move(xn);
    if (r < tol) break;
  }
  return x;
}

// ---------------------------------------------------------------- END pseudo-gradient

class NeIteration {
 public:
  NeIteration(const EndLayout& L, const GameSpec& game) : L_(L), game_(game) {
    if (L.partition().dims != game.dims) throw std::invalid_argument("NeIteration: partition differs from action dims");
    for (int i = 1; i <= game.agents(); ++i) {
      if (!L.holds(i, i)) throw PreconditionError("NeIteration: agent " + std::to_string(i) + " must hold its own action");
      for (int p : game.interference[i - 1])
        if (!L.holds(i, p))
          throw PreconditionError("NeIteration: agent " + std::to_string(i) + " lacks estimate of " + std::to_string(p));
    }
    table_ = access_table(L, game.interference);
  }

  const EndLayout& layout() const { return L_; }

  // ŷ+ = proj_Ω(Ŵŷ - α Rᵀ F(Ŵŷ)), projection on own blocks only.
  Vec step(const Vec& y, double alpha) const {
    Vec w = apply_weights(L_, y);
    Vec out = w;
    for (int i = 1; i <= game_.agents(); ++i) {
      Vec g = game_.gradient(i, LocalBlocks(w.data(), &table_[i - 1], &game_.dims));
      auto own = L_.block(w, i, i);
      L_.block(out, i, i) = project(game_.sets[i - 1], own - alpha * g);
    }
    return out;
  }

  // Real action x = col(ŷ_{i,i}).
  Vec actions(const Vec& y) const {
    Partition part = L_.partition();
    Vec x(part.total());
    for (int i = 1; i <= game_.agents(); ++i) x.segment(part.offset(i), part.dim(i)) = L_.block(y, i, i);
    return x;
  }

  // Pre-projection map ŷ -> Ŵŷ - α Rᵀ F(Ŵŷ).
  Vec forward(const Vec& y, double alpha) const {
    Vec w = apply_weights(L_, y);
    Vec out = w;
    for (int i = 1; i <= game_.agents(); ++i)
      L_.block(out, i, i) -= alpha * game_.gradient(i, LocalBlocks(w.data(), &table_[i - 1], &game_.dims));
    return out;
  }

 private:
  const EndLayout& L_;
  const GameSpec& game_;
  std::vector<std::vector<int>> table_;
};

inline Vec ne_step(const EndLayout& L, const GameSpec& game, const Vec& y, double alpha) {
  if (!(alpha > 0)) throw std::invalid_argument("ne_step: alpha must be positive");
  return NeIteration(L, game).step(y, alpha);
}

// Complete communication, every agent estimates everything, agent p broadcasts x_p.
inline EndLayout full_information_layout(const GameSpec& game) {
  const int I = game.agents();
  std::vector<int> nodes(I);
  std::vector<Edge> es;
  for (int i = 1; i <= I; ++i) {
    nodes[i - 1] = i;
    for (int j = 1; j <= I; ++j)
      if (i != j) es.push_back({i, j});
  }
  std::vector<ComponentAgent> inter;
  std::vector<WeightedGraph> d;
  for (int p = 1; p <= I; ++p) {
    for (int i = 1; i <= I; ++i) inter.push_back({p, i});
    d.push_back(star_weights(nodes, p));
  }
  return EndLayout(I, game.partition(), Graph(nodes, es), inter, d);
}

// ---------------------------------------------------------------- certificate

struct QConstruction {
  Mat Q;
  Vec q;
  double sigma = 0;
  std::string kind;
};

namespace detail {

inline Mat sym_sqrt(const Mat& Q, bool inverse) {
  Eigen::SelfAdjointEigenSolver<Mat> es(Q);
  Vec d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  if (inverse) d = d.cwiseInverse();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

// ‖M‖_Q = ‖Q^{1/2} M Q^{-1/2}‖₂
inline double q_norm(const Mat& M, const Mat& Q) {
  Mat S = sym_sqrt(Q, false) * M * sym_sqrt(Q, true);
  return Eigen::JacobiSVD<Mat>(S).singularValues()(0);
}

// Left Perron vector of a row-stochastic primitive W, normalized to sum 1.
inline Vec perron_vector(const Mat& W, double tol = 1e-12, int max_iters = 1000000) {
  const auto N = W.rows();
  Vec q = Vec::Constant(N, 1.0 / double(N));
  for (int k = 0; k < max_iters; ++k) {
    Vec qn = W.transpose() * q;
    qn /= qn.sum();
    double r = (qn - q).lpNorm<Eigen::Infinity>();
    q = std::move(qn);
    if (r < tol) break;
  }
  return q;
}

// X - Wᵀ X W = I
inline Mat discrete_lyapunov(const Mat& W) {
  const auto n = W.rows();
  Mat K = Mat::Identity(n * n, n * n) - Eigen::kroneckerProduct(W.transpose(), W.transpose()).eval();
  Vec rhs = Eigen::Map<const Vec>(Mat::Identity(n, n).eval().data(), n * n);
  Vec x = K.fullPivLu().solve(rhs);
  Mat X = Eigen::Map<Mat>(x.data(), n, n);
  return 0.5 * (X + X.transpose());
}

}  // namespace detail

inline std::optional<QConstruction> construct_q(const WeightedGraph& wg, int own, bool free_set, std::string* why = nullptr) {
  auto fail = [&](const std::string& m) -> std::optional<QConstruction> {
    if (why) *why = m;
    return std::nullopt;
  };
  const Mat& W = wg.matrix();
  const auto N = W.rows();
  const int o = wg.graph().index(own);
  if (!wg.row_stochastic(1e-10)) return fail("weights not row stochastic");
  if (!is_rooted(wg.graph(), own)) return fail("design graph not rooted at its owner");
  const Vec ones = Vec::Ones(N);

  QConstruction c;
  Mat star = ones * Vec::Unit(N, o).transpose();
  bool own_row_unit = (W.row(o) - Vec::Unit(N, o).transpose()).cwiseAbs().maxCoeff() <= 1e-12;
  bool diag_pos = (W.diagonal().array() > 0).all();
  if ((W - star).cwiseAbs().maxCoeff() <= 1e-12) {
    c = {Mat::Identity(N, N), Vec::Unit(N, o), 0.0, "star"};
  } else if (wg.doubly_stochastic(1e-10)) {
    c.Q = Mat::Identity(N, N);
    c.q = Vec::Constant(N, 1.0 / double(N));
    c.kind = "doubly_stochastic";
  } else if (is_strongly_connected(wg.graph()) && diag_pos) {
    c.q = detail::perron_vector(W);
    c.Q = (c.q / c.q(o)).asDiagonal();
    c.kind = "perron";
  } else if (own_row_unit) {
    if (!free_set) return fail("leader-follower weights need an unconstrained action set");
    std::vector<int> rest;
    for (int k = 0; k < N; ++k)
      if (k != o) rest.push_back(k);
    Mat Wb(N - 1, N - 1);
    for (int a = 0; a < N - 1; ++a)
      for (int b = 0; b < N - 1; ++b) Wb(a, b) = W(rest[a], rest[b]);
    if (Eigen::EigenSolver<Mat>(Wb).eigenvalues().cwiseAbs().maxCoeff() >= 1.0 - 1e-12)
      return fail("follower block not Schur stable");
    Mat X = detail::discrete_lyapunov(Wb);
    Vec X1 = X * Vec::Ones(N - 1);
    c.Q = Mat::Zero(N, N);
    c.Q(o, o) = 1.0 + X1.sum();
    for (int a = 0; a < N - 1; ++a) {
      c.Q(o, rest[a]) = c.Q(rest[a], o) = -X1(a);
      for (int b = 0; b < N - 1; ++b) c.Q(rest[a], rest[b]) = X(a, b);
    }
    c.q = Vec::Unit(N, o);
    c.kind = "leader_follower";
  } else {
    return fail("no weight construction applies");
  }
  Mat Wc = W - ones * c.q.transpose();
  c.sigma = c.kind == "star" ? 0.0 : detail::q_norm(Wc, c.Q);

  bool diagonal = (c.Q - Mat(c.Q.diagonal().asDiagonal())).cwiseAbs().maxCoeff() <= 1e-14;
  if (!diagonal && !free_set) return fail("non-diagonal weight needs an unconstrained action set");
  if (Eigen::SelfAdjointEigenSolver<Mat>(c.Q).eigenvalues().minCoeff() <= 1e-12) return fail("Q not positive definite");
  if (!(c.sigma < 1.0)) return fail("contraction factor not below one");
  if (std::abs((ones.transpose() * c.Q)(o) - 1.0) > 1e-8) return fail("normalization identity fails");
  Mat lhs = ones.transpose() * c.Q * W * (Mat::Identity(N, N) - ones * c.q.transpose());
  if (lhs.cwiseAbs().maxCoeff() > 1e-8) return fail("orthogonality identity fails");
  if ((c.q.transpose() * W - c.q.transpose()).cwiseAbs().maxCoeff() > 1e-8 || std::abs(c.q.sum() - 1.0) > 1e-8)
    return fail("q is not the left Perron vector");
  return c;
}

struct NeRateConstants {
  bool certified = false;
  std::string reason;
  std::vector<QConstruction> Q;
  double mu = 0, theta = 0;
  double sigma_bar = 0, theta_bar = 0, gamma_lo = 0, gamma_hi = 0, lambda_min_xi = 0;
  bool constants_estimated = false;

  Eigen::Matrix2d M(double a) const {
    double off = sigma_bar * (a * (theta_bar + theta * gamma_hi) + a * a * theta_bar * theta * gamma_hi);
    Eigen::Matrix2d m;
    m << 1 - 2 * a * mu * gamma_lo * gamma_lo + a * a * theta * theta * gamma_hi * gamma_hi, off, off,
        sigma_bar * sigma_bar * (1 + 2 * a * theta_bar + a * a * theta_bar * theta_bar);
    return m;
  }
  // λmax of the symmetric 2×2 M_α
  double rho(double a) const {
    auto m = M(a);
    double h = 0.5 * (m(0, 0) - m(1, 1));
    return 0.5 * (m(0, 0) + m(1, 1)) + std::sqrt(h * h + m(0, 1) * m(0, 1));
  }
  // Beyond this step the (1,1) entry alone already exceeds one.
  double alpha_ceiling() const { return 2 * mu * gamma_lo * gamma_lo / (theta * theta * gamma_hi * gamma_hi); }
};

inline NeRateConstants ne_rate_constants(const EndLayout& L, const GameSpec& game) {
  NeRateConstants c;
  if (!game.mu || !game.theta) {
    c.reason = "game constants mu, theta unknown";
    return c;
  }
  c.mu = *game.mu;
  c.theta = *game.theta;
  c.constants_estimated = game.constants_estimated;
  if (!(c.mu > 0)) {
    c.reason = "game not strongly monotone";
    return c;
  }
  double max_diag = 0, max_1Q1 = 0, min_1Q1 = std::numeric_limits<double>::infinity();
  c.lambda_min_xi = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= game.agents(); ++i) {
    std::string why;
    auto q = construct_q(L.design(i), i, is_free(game.sets[i - 1]), &why);
    if (!q) {
      c.reason = "agent " + std::to_string(i) + ": " + why;
      c.Q.clear();
      return c;
    }
    const int o = L.position(i, i);
    max_diag = std::max(max_diag, q->Q(o, o));
    double s = q->Q.sum();
    max_1Q1 = std::max(max_1Q1, s);
    min_1Q1 = std::min(min_1Q1, s);
    c.lambda_min_xi = std::min(c.lambda_min_xi, Eigen::SelfAdjointEigenSolver<Mat>(q->Q).eigenvalues().minCoeff());
    c.sigma_bar = std::max(c.sigma_bar, q->sigma);
    c.Q.push_back(std::move(*q));
  }
  c.theta_bar = c.theta * std::sqrt(max_diag / c.lambda_min_xi);
  c.gamma_lo = std::sqrt(1.0 / max_1Q1);
  c.gamma_hi = std::sqrt(1.0 / min_1Q1);
  c.certified = true;
  return c;
}

struct NeRateCertificate {
  NeRateConstants constants;
  double alpha = 0;
  Eigen::Matrix2d M = Eigen::Matrix2d::Zero();
  double rho = std::numeric_limits<double>::infinity();
  bool certified = false;
  std::string reason;
};

inline NeRateCertificate certify_theorem1(const EndLayout& L, const GameSpec& game, double alpha) {
  NeRateCertificate cert;
  cert.constants = ne_rate_constants(L, game);
  cert.alpha = alpha;
  if (!cert.constants.certified) {
    cert.reason = "uncertified: " + cert.constants.reason;
    return cert;
  }
  cert.M = cert.constants.M(alpha);
  cert.rho = cert.constants.rho(alpha);
  cert.certified = cert.rho < 1.0;
  if (!cert.certified) cert.reason = "rho_alpha >= 1";
  return cert;
}

// Step minimizing ρ_α, found by a log scan and golden-section refinement.
inline double best_alpha(const NeRateConstants& c) {
  const double hi = c.alpha_ceiling();
  double best = hi * 1e-6, rb = c.rho(best);
  for (int k = 0; k <= 600; ++k) {
    double a = hi * std::pow(10.0, -6.0 + 6.0 * k / 600.0);
    double r = c.rho(a);
    if (r < rb) rb = r, best = a;
  }
  double lo = best / 1.03, up = std::min(hi, best * 1.03);
  const double g = (std::sqrt(5.0) - 1) / 2;
  for (int k = 0; k < 200; ++k) {
    double a1 = up - g * (up - lo), a2 = lo + g * (up - lo);
    if (c.rho(a1) < c.rho(a2)) up = a2;
    else lo = a1;
  }
  double a = 0.5 * (lo + up);
  return c.rho(a) < rb ? a : best;
}

// Largest α with ρ_α <= target, by bisection right of the minimizer. Returns 0 if none.
inline double auto_alpha(const NeRateConstants& c, double target = 0.999) {
  if (!c.certified) return 0.0;
  double a0 = best_alpha(c);
  if (c.rho(a0) > target) return 0.0;
  double lo = a0, hi = c.alpha_ceiling();
  for (int k = 0; k < 200; ++k) {
    double m = 0.5 * (lo + hi);
    (c.rho(m) <= target ? lo : hi) = m;
  }
  return lo;
}

// ‖v‖²_Ξ with Ξ = diag(Q_i ⊗ I).
inline double xi_norm_sq(const EndLayout& L, const std::vector<QConstruction>& Q, const Vec& v) {
  double s = 0;
  for (int i = 1; i <= L.num_components(); ++i) {
    auto Y = L.component(v, i);
    s += (Y * Q[i - 1].Q * Y.transpose()).trace();
  }
  return s;
}

struct NeSolveOptions {
  StopRule stop;
  std::optional<Vec> reference;  // ŷ*
  std::vector<QConstruction> xi;  // Ξ weights; identity when empty
};

// Columns: k, residual, consensus_err, comm_cost, wall_ns, dist_xi, ratio.
inline RunTrace ne_solve(const EndLayout& L, const GameSpec& game, double alpha, const NeSolveOptions& opt,
                         Vec y0 = Vec()) {
  if (!(alpha >= 0)) throw std::invalid_argument("ne_solve: alpha must be nonnegative");
  NeIteration it(L, game);
  RunTrace tr({"k", "residual", "consensus_err", "comm_cost", "wall_ns", "dist_xi", "ratio"});
  WallClock clock(opt.stop.timing);
  Vec y = y0.size() ? y0 : Vec::Zero(L.stacked_size());
  const double cost = communication_cost(L, CostMode::Unicast);
  auto dist = [&](const Vec& v) {
    if (!opt.reference) return std::numeric_limits<double>::quiet_NaN();
    Vec d = v - *opt.reference;
    return opt.xi.empty() ? d.squaredNorm() : xi_norm_sq(L, opt.xi, d);
  };
  const double scale = std::max(1.0, y.norm());
  double dprev = dist(y);
  tr.add({0, 0, disagreement(L, y).norm(), 0, clock.ns(), dprev, std::numeric_limits<double>::quiet_NaN()});
  for (int k = 1; k <= opt.stop.max_iters; ++k) {
    Vec yn = it.step(y, alpha);
    double res = (yn - y).norm();
    y = std::move(yn);
    double d = dist(y);
    tr.iterations = k;
    bool done = opt.reference ? std::sqrt((y - *opt.reference).squaredNorm()) < opt.stop.tol : res < opt.stop.tol;
    bool blown = !std::isfinite(y.norm()) || y.norm() > opt.stop.divergence_factor * scale;
    if (k % opt.stop.stride == 0 || done || blown || k == opt.stop.max_iters)
      tr.add({double(k), res, disagreement(L, y).norm(), cost * k, clock.ns(), d, d / dprev});
    dprev = d;
    if (blown) {
      tr.diverged = true;
      tr.diagnostic = "iterate norm grew beyond " + format_double(opt.stop.divergence_factor) + "x the initial scale at k=" +
                      std::to_string(k);
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
