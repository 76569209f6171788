#pragma once

#include <cmath>
#include <vector>

#include "hk/let_solver.hpp"

namespace hk {

// μ^H(s) = (1−s)² a₁ δ_{x₁} + s² a₂ δ_{x₂}
inline DiscreteMeasure hellinger_curve(const SpacePtr& space, double a1, const Point& x1, double a2,
                                       const Point& x2, double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw invalid_input("hellinger_curve: s must lie in [0,1]");
  if (!(a1 > 0.0 && a2 > 0.0)) throw invalid_input("hellinger_curve: masses must be positive");
  return DiscreteMeasure(space, {Atom{x1, (1.0 - s) * (1.0 - s) * a1}, Atom{x2, s * s * a2}});
}

// a(s) δ_{x(s)} with x(s) = (1−p)x₁ + p x₂ and
// p(s) = (2/π) arctan(s√a₂ / ((1−s)√a₁)), p(1) = 1 by the branch convention.
// Stated only for euclidean endpoints at distance exactly π/2.
inline DiscreteMeasure transport_curve(const SpacePtr& space, double a1, const Point& x1, double a2,
                                       const Point& x2, double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw invalid_input("transport_curve: s must lie in [0,1]");
  if (!(a1 > 0.0 && a2 > 0.0)) throw invalid_input("transport_curve: masses must be positive");
  if (space->kind() != SpaceKind::euclidean)
    throw invalid_input("transport_curve: euclidean ground space required");
  if (std::abs(space->distance(x1, x2) - kPi / 2) > 1e-9)
    throw invalid_input("transport_curve: endpoint distance must be π/2");
  double p = s < 1.0 ? (2.0 / kPi) * std::atan(s * std::sqrt(a2) / ((1.0 - s) * std::sqrt(a1))) : 1.0;
  double a = (1.0 - s) * (1.0 - s) * a1 + s * s * a2;
  std::vector<double> c(x1.dim());
  for (std::size_t d = 0; d < c.size(); ++d) c[d] = (1.0 - p) * x1[d] + p * x2[d];
  return DiscreteMeasure(space, {Atom{Point::at(std::move(c)), a}});
}

class DiracGeodesic {
public:
  enum class Kind { hellinger, transport };

  DiracGeodesic(Kind kind, SpacePtr space, double a1, Point x1, double a2, Point x2)
      : kind_(kind), space_(std::move(space)), a1_(a1), x1_(std::move(x1)), a2_(a2), x2_(std::move(x2)) {
    at(0.5);  // validates masses and the endpoint configuration up front
  }

  Kind kind() const { return kind_; }
  const SpacePtr& space() const { return space_; }

  DiscreteMeasure at(double s) const {
    return kind_ == Kind::hellinger ? hellinger_curve(space_, a1_, x1_, a2_, x2_, s)
                                    : transport_curve(space_, a1_, x1_, a2_, x2_, s);
  }

private:
  Kind kind_;
  SpacePtr space_;
  double a1_;
  Point x1_;
  double a2_;
  Point x2_;
};

struct GeodesicReport {
  double endpoint_distance = 0.0;      // HK between the endpoints
  double max_relative_deviation = 0.0; // from HK(curve(s), curve(t)) = |t−s| HK(0,1)
};

inline GeodesicReport verify_geodesic(const DiracGeodesic& curve, const std::vector<double>& samples,
                                      const SolverOptions& opts = {}) {
  GeodesicReport rep;
  std::vector<DiscreteMeasure> at;
  for (double s : samples) {
    if (!(s >= 0.0 && s <= 1.0)) throw invalid_input("verify_geodesic: samples must lie in [0,1]");
    at.push_back(curve.at(s));
  }
  rep.endpoint_distance = std::sqrt(hk_solve(curve.at(0.0), curve.at(1.0), opts).second.value);
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      double d = std::sqrt(hk_solve(at[i], at[j], opts).second.value);
      double expected = std::abs(samples[j] - samples[i]) * rep.endpoint_distance;
      double dev = rep.endpoint_distance > 0.0 ? std::abs(d - expected) / rep.endpoint_distance
                                               : std::abs(d);
      rep.max_relative_deviation = std::max(rep.max_relative_deviation, dev);
    }
  return rep;
}

}  // namespace hk
