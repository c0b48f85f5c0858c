#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "graph.hpp"

namespace estnet {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;

struct Partition {
  std::vector<int> dims;  // n_p for p = 1..P

  Partition() = default;
  explicit Partition(std::vector<int> d) : dims(std::move(d)) {
    for (int n : dims)
      if (n < 1) throw std::invalid_argument("Partition: every block dimension must be >= 1");
  }
  static Partition scalars(int P) { return Partition(std::vector<int>(P, 1)); }

  int size() const { return static_cast<int>(dims.size()); }
  int dim(int p) const { return dims.at(p - 1); }
  int total() const {
    int s = 0;
    for (int n : dims) s += n;
    return s;
  }
  // Offset of block p inside y.
  int offset(int p) const {
    int s = 0;
    for (int q = 1; q < p; ++q) s += dims[q - 1];
    return s;
  }
  friend bool operator==(const Partition&, const Partition&) = default;
};

struct ConnectivityMode {
  enum class Kind { Rooted, StronglyConnected, UndirectedConnected };
  Kind kind = Kind::StronglyConnected;
  std::map<int, int> roots;  // p -> r_p; a hub hint for undirected designs

  static ConnectivityMode rooted(std::map<int, int> r) { return {Kind::Rooted, std::move(r)}; }
  static ConnectivityMode strong() { return {Kind::StronglyConnected, {}}; }
  static ConnectivityMode undirected() { return {Kind::UndirectedConnected, {}}; }
};

struct Violation {
  int component = 0;  // 0 for layout-wide problems
  std::string what;
};

// (p, i) pair of the bipartite interference / estimate graphs.
using ComponentAgent = std::pair<int, int>;

class EndLayout {
 public:
  EndLayout() = default;

  // design[p-1] lives on the holders of p; the estimate graph is read off its node set.
  EndLayout(int agents, Partition partition, Graph comm, std::vector<ComponentAgent> interference,
            std::vector<WeightedGraph> design)
      : agents_(agents),
        partition_(std::move(partition)),
        comm_(std::move(comm)),
        interference_(std::move(interference)),
        design_(std::move(design)) {
    const int P = partition_.size();
    if (static_cast<int>(design_.size()) != P)
      throw std::invalid_argument("EndLayout: one design graph per component required");
    for (const auto& wg : design_)
      for (int v : wg.nodes())
        if (v < 1 || v > agents_) throw std::invalid_argument("EndLayout: design node out of range");
    std::sort(interference_.begin(), interference_.end());
    interference_.erase(std::unique(interference_.begin(), interference_.end()), interference_.end());
    for (auto [p, i] : interference_)
      if (p < 1 || p > P || i < 1 || i > agents_)
        throw std::invalid_argument("EndLayout: interference pair out of range");

    held_.assign(agents_, {});
    needs_.assign(agents_, {});
    users_.assign(P, {});
    offsets_.assign(P, {});
    int off = 0;
    for (int p = 1; p <= P; ++p) {
      block_start_.push_back(off);
      for (int i : holders(p)) {
        offsets_[p - 1].push_back(off);
        off += partition_.dim(p);
        held_[i - 1].push_back(p);
      }
    }
    block_start_.push_back(off);
    size_ = off;
    for (auto [p, i] : interference_) {
      needs_[i - 1].push_back(p);
      users_[p - 1].push_back(i);
    }
    for (auto& v : needs_) std::sort(v.begin(), v.end());
    for (auto& v : users_) std::sort(v.begin(), v.end());
    int aoff = 0;
    agent_offsets_.assign(agents_, {});
    for (int i = 1; i <= agents_; ++i)
      for (int p : held_[i - 1]) {
        agent_offsets_[i - 1].push_back(aoff);
        aoff += partition_.dim(p);
      }
    laplacians_.reserve(P);
    for (const auto& wg : design_) laplacians_.push_back(laplacian(wg));
  }

  int num_agents() const { return agents_; }
  int num_components() const { return partition_.size(); }
  const Partition& partition() const { return partition_; }
  int dim(int p) const { return partition_.dim(p); }
  const Graph& comm() const { return comm_; }
  const std::vector<ComponentAgent>& interference() const { return interference_; }
  const WeightedGraph& design(int p) const { return design_.at(p - 1); }
  const std::vector<WeightedGraph>& designs() const { return design_; }
  const Mat& design_laplacian(int p) const { return laplacians_.at(p - 1); }

  // 𝒩outE(p), ascending; i_p is the position in this list.
  const std::vector<int>& holders(int p) const { return design_.at(p - 1).nodes(); }
  int copies(int p) const { return static_cast<int>(holders(p).size()); }
  // 𝒩E(i)
  const std::vector<int>& held(int i) const { return held_.at(i - 1); }
  // 𝒩I(i)
  const std::vector<int>& needs(int i) const { return needs_.at(i - 1); }
  // 𝒩outI(p)
  const std::vector<int>& users(int p) const { return users_.at(p - 1); }
  bool holds(int i, int p) const { return design(p).graph().has_node(i); }
  int position(int p, int i) const { return design(p).graph().index(i); }

  // Estimate graph ℰE as sorted (p, i) pairs.
  std::vector<ComponentAgent> estimate() const {
    std::vector<ComponentAgent> e;
    for (int p = 1; p <= num_components(); ++p)
      for (int i : holders(p)) e.push_back({p, i});
    return e;
  }

  int stacked_size() const { return size_; }
  int component_start(int p) const { return block_start_.at(p - 1); }
  int component_size(int p) const { return block_start_.at(p) - block_start_.at(p - 1); }
  // Variable-major offset of ŷ_{i,p}.
  int offset(int p, int i) const { return offsets_.at(p - 1).at(position(p, i)); }
  int offset_at(int p, int k) const { return offsets_[p - 1][k]; }
  // Agent-major offset of ŷ_{i,p} inside ỹ.
  int agent_offset(int i, int p) const {
    const auto& h = held_.at(i - 1);
    auto it = std::lower_bound(h.begin(), h.end(), p);
    if (it == h.end() || *it != p) throw std::out_of_range("agent does not hold component");
    return agent_offsets_[i - 1][it - h.begin()];
  }
  int agent_block_size(int i) const {
    int s = 0;
    for (int p : held_.at(i - 1)) s += dim(p);
    return s;
  }

  // Block ŷ_{i,p} of a stacked vector.
  auto block(Vec& v, int p, int i) const { return v.segment(offset(p, i), dim(p)); }
  auto block(const Vec& v, int p, int i) const { return v.segment(offset(p, i), dim(p)); }

  // Component p of a stacked vector as an n_p × N_p matrix, one column per holder.
  Eigen::Map<Mat> component(Vec& v, int p) const {
    return Eigen::Map<Mat>(v.data() + component_start(p), dim(p), copies(p));
  }
  Eigen::Map<const Mat> component(const Vec& v, int p) const {
    return Eigen::Map<const Mat>(v.data() + component_start(p), dim(p), copies(p));
  }

 private:
  int agents_ = 0;
  Partition partition_;
  Graph comm_;
  std::vector<ComponentAgent> interference_;
  std::vector<WeightedGraph> design_;
  std::vector<Mat> laplacians_;
  std::vector<std::vector<int>> held_, needs_, users_;
  std::vector<std::vector<int>> offsets_, agent_offsets_;
  std::vector<int> block_start_;
  int size_ = 0;
};

// Read-only access to the blocks an agent is entitled to read. Indexed by component id.
class LocalBlocks {
 public:
  LocalBlocks(const double* data, const std::vector<int>* offsets, const std::vector<int>* dims)
      : data_(data), offsets_(offsets), dims_(dims) {}

  Eigen::Map<const Vec> operator()(int p) const {
    int off = (p >= 1 && p <= static_cast<int>(offsets_->size())) ? (*offsets_)[p - 1] : -1;
    if (off < 0)
      throw std::out_of_range("LocalBlocks: block " + std::to_string(p) + " is not accessible");
    return Eigen::Map<const Vec>(data_ + off, (*dims_)[p - 1]);
  }
  bool has(int p) const {
    return p >= 1 && p <= static_cast<int>(offsets_->size()) && (*offsets_)[p - 1] >= 0;
  }

 private:
  const double* data_;
  const std::vector<int>* offsets_;
  const std::vector<int>* dims_;
};

// Per-agent offset tables restricted to a component list; -1 marks forbidden blocks.
inline std::vector<std::vector<int>> access_table(const EndLayout& L,
                                                  const std::vector<std::vector<int>>& allowed) {
  std::vector<std::vector<int>> t(L.num_agents(), std::vector<int>(L.num_components(), -1));
  for (int i = 1; i <= L.num_agents(); ++i)
    for (int p : allowed.at(i - 1)) t[i - 1][p - 1] = L.offset(p, i);
  return t;
}

// ---------------------------------------------------------------- validation

inline std::vector<Violation> validate(const EndLayout& L, const ConnectivityMode& mode) {
  std::vector<Violation> out;
  for (auto [p, i] : L.interference())
    if (!L.holds(i, p))
      out.push_back({p, "interference not covered: agent " + std::to_string(i) +
                            " needs component " + std::to_string(p) + " but holds no estimate"});
  for (int p = 1; p <= L.num_components(); ++p) {
    const Graph& g = L.design(p).graph();
    if (g.empty()) {
      out.push_back({p, "design graph has no nodes"});
      continue;
    }
    if (L.users(p).empty()) out.push_back({p, "component has no interested agent"});
    for (const auto& e : g.edges())
      if (e.from != e.to && !L.comm().has_edge(e.from, e.to))
        out.push_back({p, "design edge (" + std::to_string(e.from) + "," + std::to_string(e.to) +
                              ") not in communication graph"});
    switch (mode.kind) {
      case ConnectivityMode::Kind::Rooted: {
        auto it = mode.roots.find(p);
        if (it == mode.roots.end())
          out.push_back({p, "no root given for rooted mode"});
        else if (!g.has_node(it->second))
          out.push_back({p, "root " + std::to_string(it->second) + " does not hold the component"});
        else if (!is_rooted(g, it->second))
          out.push_back({p, "design graph not rooted at " + std::to_string(it->second)});
        break;
      }
      case ConnectivityMode::Kind::StronglyConnected:
        if (!is_strongly_connected(g)) out.push_back({p, "design graph not strongly connected"});
        break;
      case ConnectivityMode::Kind::UndirectedConnected:
        if (!g.symmetric())
          out.push_back({p, "design graph not undirected"});
        else if (!is_connected_undirected(Graph(g.nodes(), g.edges(), false)))
          out.push_back({p, "design graph not connected"});
        break;
    }
  }
  return out;
}

// ---------------------------------------------------------------- stacked operators

// Ŵ ŷ, block-diagonal W_p ⊗ I.
inline Vec apply_weights(const EndLayout& L, const Vec& v) {
  if (v.size() != L.stacked_size()) throw std::invalid_argument("apply_weights: size mismatch");
  Vec out(v.size());
  for (int p = 1; p <= L.num_components(); ++p)
    L.component(out, p).noalias() = L.component(v, p) * L.design(p).matrix().transpose();
  return out;
}

inline Vec apply_laplacian(const EndLayout& L, const Vec& v) {
  if (v.size() != L.stacked_size()) throw std::invalid_argument("apply_laplacian: size mismatch");
  Vec out(v.size());
  for (int p = 1; p <= L.num_components(); ++p)
    L.component(out, p).noalias() = L.component(v, p) * L.design_laplacian(p).transpose();
  return out;
}

// Block-diagonal (M_p ⊗ I_{n_p}) for one matrix per component.
inline SpMat kron_blocks(const EndLayout& L, const std::vector<Mat>& M) {
  std::vector<Eigen::Triplet<double>> t;
  for (int p = 1; p <= L.num_components(); ++p) {
    const int n = L.dim(p), N = L.copies(p), s = L.component_start(p);
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b)
        if (M[p - 1](a, b) != 0.0)
          for (int d = 0; d < n; ++d) t.emplace_back(s + a * n + d, s + b * n + d, M[p - 1](a, b));
  }
  SpMat S(L.stacked_size(), L.stacked_size());
  S.setFromTriplets(t.begin(), t.end());
  return S;
}

inline SpMat materialize_weights(const EndLayout& L) {
  std::vector<Mat> M;
  for (const auto& wg : L.designs()) M.push_back(wg.matrix());
  return kron_blocks(L, M);
}

inline SpMat materialize_laplacian(const EndLayout& L) {
  std::vector<Mat> M;
  for (int p = 1; p <= L.num_components(); ++p) M.push_back(L.design_laplacian(p));
  return kron_blocks(L, M);
}

inline Vec consensus_projection(const EndLayout& L, const Vec& v) {
  Vec out(v.size());
  for (int p = 1; p <= L.num_components(); ++p) {
    Vec mean = L.component(v, p).rowwise().mean();
    L.component(out, p) = mean.replicate(1, L.copies(p));
  }
  return out;
}

// ‖Π∥ v‖ without forming the projection.
inline double consensus_norm(const EndLayout& L, const Vec& v) {
  double s = 0;
  for (int p = 1; p <= L.num_components(); ++p) {
    const int n = L.dim(p), N = L.copies(p), o = L.component_start(p);
    for (int r = 0; r < n; ++r) {
      double m = 0;
      for (int k = 0; k < N; ++k) m += v[o + k * n + r];
      s += m * m / N;
    }
  }
  return std::sqrt(s);
}

inline Vec disagreement(const EndLayout& L, const Vec& v) { return v - consensus_projection(L, v); }

// Per-component average of the copies, a vector in R^{n_y}.
inline Vec component_means(const EndLayout& L, const Vec& v) {
  Vec y(L.partition().total());
  for (int p = 1; p <= L.num_components(); ++p)
    y.segment(L.partition().offset(p), L.dim(p)) = L.component(v, p).rowwise().mean();
  return y;
}

inline Vec embed_consensus(const EndLayout& L, const Vec& y) {
  if (y.size() != L.partition().total()) throw std::invalid_argument("embed_consensus: size mismatch");
  Vec out(L.stacked_size());
  for (int p = 1; p <= L.num_components(); ++p)
    L.component(out, p) = y.segment(L.partition().offset(p), L.dim(p)).replicate(1, L.copies(p));
  return out;
}

inline Vec permute_to_agent_major(const EndLayout& L, const Vec& v) {
  Vec out(v.size());
  for (int i = 1; i <= L.num_agents(); ++i)
    for (int p : L.held(i)) out.segment(L.agent_offset(i, p), L.dim(p)) = L.block(v, p, i);
  return out;
}

inline Vec permute_to_variable_major(const EndLayout& L, const Vec& t) {
  Vec out(t.size());
  for (int i = 1; i <= L.num_agents(); ++i)
    for (int p : L.held(i)) L.block(out, p, i) = t.segment(L.agent_offset(i, p), L.dim(p));
  return out;
}

// The permutation matrix P with P ŷ = ỹ.
inline SpMat permutation_matrix(const EndLayout& L) {
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 1; i <= L.num_agents(); ++i)
    for (int p : L.held(i))
      for (int d = 0; d < L.dim(p); ++d) t.emplace_back(L.agent_offset(i, p) + d, L.offset(p, i) + d, 1.0);
  SpMat P(L.stacked_size(), L.stacked_size());
  P.setFromTriplets(t.begin(), t.end());
  return P;
}

// ---------------------------------------------------------------- consensus properties

inline bool verify_lemma1(const EndLayout& L, double tol = 1e-9) {
  for (int p = 1; p <= L.num_components(); ++p) {
    const Graph& g = L.design(p).graph();
    bool rooted = std::any_of(g.nodes().begin(), g.nodes().end(), [&](int r) { return is_rooted(g, r); });
    if (!rooted) throw PreconditionError("verify_lemma1: design graph " + std::to_string(p) + " is not rooted");
  }
  Mat Lhat = Mat(materialize_laplacian(L));
  Eigen::FullPivLU<Mat> lu(Lhat);
  lu.setThreshold(tol);
  const int ny = L.partition().total();
  if (lu.rank() != L.stacked_size() - ny) return false;
  for (int k = 0; k < ny; ++k) {
    Vec e = Vec::Unit(ny, k);
    if ((Lhat * embed_consensus(L, e)).norm() > tol) return false;
  }
  return true;
}

struct ConsensusBoundResult {
  bool holds = false;
  double lambda_bar = std::numeric_limits<double>::infinity();
};

inline ConsensusBoundResult verify_lemma2(const EndLayout& L, int samples = 64, unsigned seed = 1,
                                  double tol = 1e-10) {
  for (int p = 1; p <= L.num_components(); ++p) {
    if (!is_strongly_connected(L.design(p).graph()))
      throw PreconditionError("verify_lemma2: design graph " + std::to_string(p) + " not strongly connected");
    if (!L.design(p).balanced(1e-10))
      throw PreconditionError("verify_lemma2: design weights " + std::to_string(p) + " not balanced");
  }
  ConsensusBoundResult r;
  for (int p = 1; p <= L.num_components(); ++p) {
    if (L.copies(p) < 2) continue;
    const Mat& Lp = L.design_laplacian(p);
    Eigen::SelfAdjointEigenSolver<Mat> es(Lp + Lp.transpose());
    r.lambda_bar = std::min(r.lambda_bar, es.eigenvalues()(1));
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  r.holds = true;
  for (int s = 0; s < samples; ++s) {
    Vec v(L.stacked_size());
    for (auto& x : v) x = nd(rng);
    double lhs = v.dot(apply_laplacian(L, v));
    double dis = disagreement(L, v).squaredNorm();
    if (dis == 0.0) continue;
    if (lhs < r.lambda_bar / 2.0 * dis - tol * std::max(1.0, std::abs(lhs))) r.holds = false;
  }
  return r;
}

// ---------------------------------------------------------------- costs

enum class CostMode { Unicast, Broadcast };

inline double communication_cost(const EndLayout& L, CostMode mode) {
  double c = 0;
  for (int p = 1; p <= L.num_components(); ++p) {
    const Graph& g = L.design(p).graph();
    if (mode == CostMode::Unicast) {
      c += double(g.num_edges_without_loops()) * L.dim(p);
    } else {
      for (int i : g.nodes()) {
        const auto& out = g.out_neighbors(i);
        bool sends = std::any_of(out.begin(), out.end(), [i](int j) { return j != i; });
        if (sends) c += L.dim(p);
      }
    }
  }
  return c;
}

inline double mean_estimate_size(const EndLayout& L) {
  double s = 0;
  for (int i = 1; i <= L.num_agents(); ++i) s += double(L.held(i).size());
  return s / L.num_agents();
}

}  // namespace estnet
