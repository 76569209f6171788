#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <sstream>
#include <vector>

#include "hk/common.hpp"

namespace hk {

enum class SpaceKind { euclidean, sphere, finite };

// A point is either a coordinate vector (euclidean/sphere) or an index into a
// finite space's distance matrix.
class Point {
public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  Point() = default;
  static Point at(std::vector<double> coords) {
    Point p;
    p.coords_ = std::move(coords);
    return p;
  }
  static Point at(std::initializer_list<double> coords) { return at(std::vector<double>(coords)); }
  static Point index(std::size_t k) {
    Point p;
    p.index_ = k;
    return p;
  }

  bool is_index() const { return index_ != npos; }
  std::size_t idx() const { return index_; }
  const std::vector<double>& coords() const { return coords_; }
  std::size_t dim() const { return coords_.size(); }
  double operator[](std::size_t i) const { return coords_[i]; }

private:
  std::vector<double> coords_;
  std::size_t index_ = npos;
};

class GroundSpace {
public:
  static GroundSpace euclidean(int dim) {
    if (dim < 1) throw invalid_input("euclidean space needs a positive dimension");
    GroundSpace s;
    s.kind_ = SpaceKind::euclidean;
    s.dim_ = dim;
    return s;
  }

  // Unit vectors of R^dim with the angular metric d(x,y) = arccos<x,y>.
  static GroundSpace sphere(int dim) {
    if (dim < 1) throw invalid_input("sphere space needs a positive ambient dimension");
    GroundSpace s;
    s.kind_ = SpaceKind::sphere;
    s.dim_ = dim;
    return s;
  }

  static GroundSpace finite(std::vector<std::vector<double>> matrix, std::uint64_t check_seed = 42) {
    GroundSpace s;
    s.kind_ = SpaceKind::finite;
    s.n_ = matrix.size();
    if (s.n_ == 0) throw invalid_input("finite space needs a nonempty distance matrix");
    s.dist_.assign(s.n_ * s.n_, 0.0);
    for (std::size_t i = 0; i < s.n_; ++i) {
      if (matrix[i].size() != s.n_) throw invalid_input("finite space: distance matrix is not square");
      for (std::size_t j = 0; j < s.n_; ++j) s.dist_[i * s.n_ + j] = matrix[i][j];
    }
    s.validate_matrix(check_seed);
    return s;
  }

  SpaceKind kind() const { return kind_; }
  int dim() const { return dim_; }
  std::size_t finite_size() const { return n_; }
  double finite_distance(std::size_t i, std::size_t j) const { return dist_[i * n_ + j]; }

  bool same(const GroundSpace& other) const {
    if (kind_ != other.kind_) return false;
    switch (kind_) {
      case SpaceKind::euclidean:
      case SpaceKind::sphere:
        return dim_ == other.dim_;
      case SpaceKind::finite:
        return n_ == other.n_ && dist_ == other.dist_;
    }
    return false;
  }

  void validate_point(const Point& p) const {
    if (kind_ == SpaceKind::finite) {
      if (!p.is_index() || p.idx() >= n_) throw invalid_input("point index out of range for finite space");
      return;
    }
    if (p.is_index() || static_cast<int>(p.dim()) != dim_)
      throw invalid_input("point dimension mismatch");
    if (kind_ == SpaceKind::sphere) {
      double n2 = 0.0;
      for (double c : p.coords()) n2 += c * c;
      if (std::abs(std::sqrt(n2) - 1.0) > 1e-9)
        throw invalid_input("sphere point is not a unit vector");
    }
  }

  double distance(const Point& x, const Point& y) const {
    validate_point(x);
    validate_point(y);
    switch (kind_) {
      case SpaceKind::euclidean: {
        double s = 0.0;
        for (std::size_t i = 0; i < x.dim(); ++i) {
          double d = x[i] - y[i];
          s += d * d;
        }
        return std::sqrt(s);
      }
      case SpaceKind::sphere: {
        double dot = 0.0;
        for (std::size_t i = 0; i < x.dim(); ++i) dot += x[i] * y[i];
        return std::acos(std::clamp(dot, -1.0, 1.0));
      }
      case SpaceKind::finite:
        return finite_distance(x.idx(), y.idx());
    }
    return 0.0;
  }

  bool points_equal(const Point& a, const Point& b, double tol = 1e-12) const {
    if (kind_ == SpaceKind::finite) return a.idx() == b.idx();
    if (a.dim() != b.dim()) return false;
    for (std::size_t i = 0; i < a.dim(); ++i)
      if (std::abs(a[i] - b[i]) > tol) return false;
    return true;
  }

private:
  GroundSpace() = default;

  void validate_matrix(std::uint64_t seed) const {
    for (std::size_t i = 0; i < n_; ++i) {
      if (dist_[i * n_ + i] != 0.0) throw invalid_input("finite space: nonzero diagonal entry");
      for (std::size_t j = 0; j < n_; ++j) {
        double d = dist_[i * n_ + j];
        if (!(d >= 0.0)) throw invalid_input("finite space: negative or NaN distance");
        if (std::abs(d - dist_[j * n_ + i]) > 1e-12) throw invalid_input("finite space: matrix not symmetric");
      }
    }
    auto check_triple = [this](std::size_t i, std::size_t j, std::size_t k) {
      if (dist_[i * n_ + k] > dist_[i * n_ + j] + dist_[j * n_ + k] + 1e-12) {
        std::ostringstream os;
        os << "finite space: triangle inequality fails for (" << i << "," << j << "," << k << ")";
        throw invalid_input(os.str());
      }
    };
    if (n_ <= 512) {
      for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = 0; j < n_; ++j)
          for (std::size_t k = 0; k < n_; ++k) check_triple(i, j, k);
    } else {
      // sampled check above the eager-validation cutoff
      Rng rng(seed);
      for (int t = 0; t < 200000; ++t) check_triple(rng.index(n_), rng.index(n_), rng.index(n_));
    }
  }

  SpaceKind kind_ = SpaceKind::euclidean;
  int dim_ = 1;
  std::size_t n_ = 0;
  std::vector<double> dist_;
};

using SpacePtr = std::shared_ptr<const GroundSpace>;

inline SpacePtr make_space(GroundSpace s) { return std::make_shared<const GroundSpace>(std::move(s)); }

// d_a = d ∧ a
inline double truncated_distance(const GroundSpace& space, const Point& x, const Point& y, double a) {
  if (!(a >= 0.0)) throw invalid_input("truncation level must be nonnegative");
  return std::min(space.distance(x, y), a);
}

// cos(d_{π/2}(x,y))² — the kernel weight shared by the LET cost, the dual
// constraint and the optimality certificate; exactly 0 when d ≥ π/2.
inline double cos2_halfpi(const GroundSpace& space, const Point& x, const Point& y) {
  double d = space.distance(x, y);
  if (d >= kPi / 2) return 0.0;
  double c = std::cos(d);
  return c * c;
}

// ℓ(t) = log(1 + tan²(t ∧ π/2)); +∞ from t = π/2 on.
inline double ell_cost(double t) {
  if (!(t >= 0.0)) throw invalid_input("ell_cost needs a nonnegative argument");
  if (t >= kPi / 2) return kInfinity;
  double tn = std::tan(t);
  return std::log1p(tn * tn);
}

// radius 0 is the apex regardless of base point
struct ConePoint {
  Point base;
  double radius = 0.0;

  static ConePoint apex() { return ConePoint{Point{}, 0.0}; }
  bool is_apex() const { return radius == 0.0; }
};

inline ConePoint cone_point(Point base, double radius) {
  if (!(radius >= 0.0)) throw invalid_input("cone point needs a nonnegative radius");
  return ConePoint{std::move(base), radius};
}

inline double cone_distance(const GroundSpace& space, const ConePoint& p, const ConePoint& q) {
  if (p.is_apex() && q.is_apex()) return 0.0;
  if (p.is_apex()) return q.radius;
  if (q.is_apex()) return p.radius;
  double d = truncated_distance(space, p.base, q.base, kPi);
  double sq = p.radius * p.radius + q.radius * q.radius - 2.0 * p.radius * q.radius * std::cos(d);
  return std::sqrt(std::max(sq, 0.0));
}

inline bool cone_points_equal(const GroundSpace& space, const ConePoint& p, const ConePoint& q,
                              double tol = 1e-12) {
  if (p.is_apex() || q.is_apex()) return p.is_apex() && q.is_apex();
  return std::abs(p.radius - q.radius) <= tol && space.points_equal(p.base, q.base, tol);
}

struct ClosedBall {
  Point center;
  double radius = 0.0;

  bool contains(const GroundSpace& space, const Point& y) const {
    return space.distance(center, y) <= radius;
  }
};

}  // namespace hk
