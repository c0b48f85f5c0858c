#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <variant>

namespace estnet {

struct Box {
  Eigen::VectorXd lo, hi;
};
struct Ball {
  Eigen::VectorXd center;
  double radius = 1.0;
};
// { x : a'x <= b }
struct Halfspace {
  Eigen::VectorXd a;
  double b = 0.0;
};
struct FreeSpace {};

using ConvexSet = std::variant<FreeSpace, Box, Ball, Halfspace>;

inline Box box(int n, double lo, double hi) {
  return {Eigen::VectorXd::Constant(n, lo), Eigen::VectorXd::Constant(n, hi)};
}

inline Eigen::VectorXd project(const ConvexSet& s, const Eigen::VectorXd& x) {
  struct V {
    const Eigen::VectorXd& x;
    Eigen::VectorXd operator()(const FreeSpace&) const { return x; }
    Eigen::VectorXd operator()(const Box& b) const { return x.cwiseMax(b.lo).cwiseMin(b.hi); }
    Eigen::VectorXd operator()(const Ball& b) const {
      Eigen::VectorXd d = x - b.center;
      double n = d.norm();
      return n <= b.radius ? x : Eigen::VectorXd(b.center + d * (b.radius / n));
    }
    Eigen::VectorXd operator()(const Halfspace& h) const {
      double viol = h.a.dot(x) - h.b;
      double aa = h.a.squaredNorm();
      if (aa == 0.0) {
        if (h.b < 0) throw std::domain_error("project: empty halfspace");
        return x;
      }
      return viol <= 0 ? x : Eigen::VectorXd(x - h.a * (viol / aa));
    }
  };
  return std::visit(V{x}, s);
}

// Same as project, without a temporary for boxes and free space.
inline void project_inplace(const ConvexSet& s, Eigen::Ref<Eigen::VectorXd> x) {
  if (std::holds_alternative<FreeSpace>(s)) return;
  if (const Box* b = std::get_if<Box>(&s)) {
    x = x.cwiseMax(b->lo).cwiseMin(b->hi);
    return;
  }
  x = project(s, Eigen::VectorXd(x));
}

// Product-structured sets, i.e. admissible for diagonal weight matrices.
inline bool is_rectangular(const ConvexSet& s) {
  return std::holds_alternative<FreeSpace>(s) || std::holds_alternative<Box>(s);
}

inline bool is_free(const ConvexSet& s) { return std::holds_alternative<FreeSpace>(s); }

inline bool contains(const ConvexSet& s, const Eigen::VectorXd& x, double tol = 1e-12) {
  return (project(s, x) - x).norm() <= tol;
}

}  // namespace estnet
