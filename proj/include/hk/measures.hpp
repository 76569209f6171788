#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

#include "hk/ground_space.hpp"

namespace hk {

struct Atom {
  Point point;
  double mass = 0.0;
};

// Finitely supported nonnegative measure. Zero-mass atoms are dropped,
// duplicate points (within 1e-12 on euclidean/sphere) are merged; the empty
// atom list is the null measure.
class DiscreteMeasure {
public:
  DiscreteMeasure() = default;

  DiscreteMeasure(SpacePtr space, std::vector<Atom> atoms, double merge_tol = 1e-12)
      : space_(std::move(space)) {
    if (!space_) throw invalid_input("measure needs a ground space");
    for (auto& a : atoms) {
      if (std::isnan(a.mass) || a.mass < 0.0) throw invalid_input("measure atom has negative mass");
      if (a.mass == 0.0) continue;
      space_->validate_point(a.point);
      bool merged = false;
      for (auto& b : atoms_) {
        if (space_->points_equal(b.point, a.point, merge_tol)) {
          b.mass += a.mass;
          merged = true;
          break;
        }
      }
      if (!merged) atoms_.push_back(std::move(a));
    }
  }

  const SpacePtr& space_ptr() const { return space_; }
  const GroundSpace& space() const { return *space_; }
  const std::vector<Atom>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  bool is_null() const { return atoms_.empty(); }

  double total_mass() const {
    double s = 0.0;
    for (const auto& a : atoms_) s += a.mass;
    return s;
  }

  DiscreteMeasure scaled(double s) const {
    if (!(s >= 0.0)) throw invalid_input("scale factor must be nonnegative");
    std::vector<Atom> scaled_atoms = atoms_;
    for (auto& a : scaled_atoms) a.mass *= s;
    return DiscreteMeasure(space_, std::move(scaled_atoms));
  }

  static DiscreteMeasure null(SpacePtr space) { return DiscreteMeasure(std::move(space), {}); }

private:
  SpacePtr space_;
  std::vector<Atom> atoms_;
};

inline DiscreteMeasure operator+(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  if (!a.space().same(b.space())) throw invalid_input("cannot add measures on different spaces");
  std::vector<Atom> atoms = a.atoms();
  atoms.insert(atoms.end(), b.atoms().begin(), b.atoms().end());
  return DiscreteMeasure(a.space_ptr(), std::move(atoms));
}

struct ConeAtom {
  std::vector<ConePoint> points;  // one per slot
  double mass = 0.0;
};

// Weighted tuples in C^p; the source of homogeneous marginals.
class ConeMeasure {
public:
  ConeMeasure(SpacePtr space, std::size_t arity, std::vector<ConeAtom> atoms)
      : space_(std::move(space)), arity_(arity), atoms_(std::move(atoms)) {
    if (!space_) throw invalid_input("cone measure needs a ground space");
    if (arity_ == 0) throw invalid_input("cone measure needs a positive arity");
    for (const auto& a : atoms_) {
      if (a.points.size() != arity_) throw invalid_input("cone atom arity mismatch");
      if (std::isnan(a.mass) || a.mass <= 0.0) throw invalid_input("cone atom needs positive mass");
      for (const auto& cp : a.points) {
        if (!(cp.radius >= 0.0)) throw invalid_input("cone atom has a negative radius");
        if (!cp.is_apex()) space_->validate_point(cp.base);
      }
    }
  }

  const SpacePtr& space_ptr() const { return space_; }
  const GroundSpace& space() const { return *space_; }
  std::size_t arity() const { return arity_; }
  const std::vector<ConeAtom>& atoms() const { return atoms_; }

  double max_radius() const {
    double r = 0.0;
    for (const auto& a : atoms_)
      for (const auto& cp : a.points) r = std::max(r, cp.radius);
    return r;
  }

private:
  SpacePtr space_;
  std::size_t arity_;
  std::vector<ConeAtom> atoms_;
};

// h²_i(α) = (x_i)#(r_i² α); apex slots contribute nothing. Slots are 1-based.
inline DiscreteMeasure homogeneous_marginal(const ConeMeasure& cm, std::size_t slot) {
  if (slot < 1 || slot > cm.arity()) throw invalid_input("homogeneous_marginal: slot out of range");
  std::vector<Atom> atoms;
  for (const auto& a : cm.atoms()) {
    const ConePoint& cp = a.points[slot - 1];
    if (cp.is_apex()) continue;
    atoms.push_back(Atom{cp.base, a.mass * cp.radius * cp.radius});
  }
  return DiscreteMeasure(cm.space_ptr(), std::move(atoms));
}

// prd_θ: radii divided by θ(atom), mass multiplied by θ(atom)²; every
// homogeneous marginal is unchanged.
inline ConeMeasure dilate(const ConeMeasure& cm, const std::function<double(const ConeAtom&)>& theta) {
  std::vector<ConeAtom> atoms = cm.atoms();
  for (auto& a : atoms) {
    double t = theta(a);
    if (!(t > 0.0)) throw invalid_input("dilate needs a strictly positive dilation factor");
    for (auto& cp : a.points) cp.radius /= t;
    a.mass *= t * t;
  }
  return ConeMeasure(cm.space_ptr(), cm.arity(), std::move(atoms));
}

// Dilates each atom just enough that every radius is ≤ Ξ.
inline ConeMeasure normalize_to_ball(const ConeMeasure& cm, double xi) {
  if (!(xi > 0.0)) throw invalid_input("normalize_to_ball needs a positive bound");
  return dilate(cm, [xi](const ConeAtom& a) {
    double r = 0.0;
    for (const auto& cp : a.points) r = std::max(r, cp.radius);
    return std::max(1.0, r / xi);
  });
}

// Canonical lift: m δ_x → (m/r²)·δ_{[x,r]}; right inverse of the homogeneous
// marginal.
inline ConeMeasure lift_to_cone(const DiscreteMeasure& mu, double radius = 1.0) {
  if (!(radius > 0.0)) throw invalid_input("lift_to_cone needs a positive radius");
  std::vector<ConeAtom> atoms;
  for (const auto& a : mu.atoms())
    atoms.push_back(ConeAtom{{cone_point(a.point, radius)}, a.mass / (radius * radius)});
  return ConeMeasure(mu.space_ptr(), 1, std::move(atoms));
}

}  // namespace hk
