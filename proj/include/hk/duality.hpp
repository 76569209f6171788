#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hk/let_solver.hpp"
#include "hk/measure_io.hpp"

namespace hk {

inline std::string point_to_string(const Point& p) {
  std::ostringstream os;
  if (p.is_index()) {
    os << "#" << p.idx();
  } else {
    os << "(";
    for (std::size_t i = 0; i < p.dim(); ++i) {
      if (i) os << ", ";
      os << p[i];
    }
    os << ")";
  }
  return os.str();
}

// A potential is either a table (values on a finite support, nearest-point
// evaluation) or a 1-D piecewise-linear descriptor (values at breakpoints,
// constant beyond the ends). Plain potentials keep values ≤ 1; the log-domain
// companion φ = −log(1−f) may take +∞.
class PotentialFunction {
public:
  enum class Kind { table, piecewise1d };

  static PotentialFunction table(std::vector<Point> points, std::vector<double> values,
                                 bool log_domain = false) {
    if (points.empty() || points.size() != values.size())
      throw invalid_input("potential table needs matching nonempty points and values");
    PotentialFunction f;
    f.kind_ = Kind::table;
    f.points_ = std::move(points);
    f.values_ = std::move(values);
    f.log_domain_ = log_domain;
    f.validate();
    return f;
  }

  static PotentialFunction piecewise1d(std::vector<double> breakpoints, std::vector<double> values,
                                       bool log_domain = false) {
    if (breakpoints.size() < 2 || breakpoints.size() != values.size())
      throw invalid_input("piecewise1d potential needs >= 2 breakpoints with matching values");
    for (std::size_t i = 1; i < breakpoints.size(); ++i)
      if (!(breakpoints[i] > breakpoints[i - 1]))
        throw invalid_input("piecewise1d breakpoints must be strictly increasing");
    PotentialFunction f;
    f.kind_ = Kind::piecewise1d;
    f.breaks_ = std::move(breakpoints);
    f.values_ = std::move(values);
    f.log_domain_ = log_domain;
    f.validate();
    return f;
  }

  Kind kind() const { return kind_; }
  bool log_domain() const { return log_domain_; }
  const std::vector<Point>& points() const { return points_; }
  const std::vector<double>& breakpoints() const { return breaks_; }
  const std::vector<double>& values() const { return values_; }

  double sup() const {
    double s = -kInfinity;
    for (double v : values_) s = std::max(s, v);
    return s;
  }

  double eval(const GroundSpace& space, const Point& x) const {
    if (kind_ == Kind::table) {
      std::size_t best = 0;
      double best_d = kInfinity;
      for (std::size_t i = 0; i < points_.size(); ++i) {
        double d = space.distance(points_[i], x);
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      return values_[best];
    }
    if (x.is_index() || x.dim() != 1)
      throw invalid_input("piecewise1d potential needs 1-D euclidean points");
    double t = x[0];
    if (t <= breaks_.front()) return values_.front();
    if (t >= breaks_.back()) return values_.back();
    auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
    std::size_t hi = static_cast<std::size_t>(it - breaks_.begin());
    double w = (t - breaks_[hi - 1]) / (breaks_[hi] - breaks_[hi - 1]);
    return values_[hi - 1] + w * (values_[hi] - values_[hi - 1]);
  }

  // negation keeps the structure; used for λ-splittings like f₂ = −f₁
  PotentialFunction negated() const {
    PotentialFunction f = *this;
    for (double& v : f.values_) v = -v;
    f.validate();
    return f;
  }

  PotentialFunction to_log_domain() const {
    PotentialFunction f = *this;
    for (double& v : f.values_) v = v >= 1.0 ? kInfinity : -std::log1p(-v);
    f.log_domain_ = true;
    return f;
  }

  // The pieces of {f = 1} a closed ball can be tested against: points for
  // tables, intervals (possibly rays) for piecewise descriptors.
  double distance_to_one_set(const GroundSpace& space, const Point& x) const {
    double best = kInfinity;
    if (kind_ == Kind::table) {
      for (std::size_t i = 0; i < points_.size(); ++i)
        if (values_[i] >= 1.0) best = std::min(best, space.distance(points_[i], x));
      return best;
    }
    double t = x[0];
    std::size_t last = breaks_.size() - 1;
    for (std::size_t i = 0; i <= last; ++i) {
      if (values_[i] < 1.0) continue;
      best = std::min(best, std::abs(t - breaks_[i]));
      if (i < last && values_[i + 1] >= 1.0)
        best = std::min(best, std::max({breaks_[i] - t, t - breaks_[i + 1], 0.0}));
    }
    if (values_.front() >= 1.0) best = std::min(best, std::max(t - breaks_.front(), 0.0));
    if (values_.back() >= 1.0) best = std::min(best, std::max(breaks_.back() - t, 0.0));
    return best;
  }

private:
  void validate() const {
    for (double v : values_) {
      if (std::isnan(v)) throw invalid_input("potential value is NaN");
      if (!log_domain_ && v > 1.0) throw invalid_input("potential values must not exceed 1");
    }
  }

  Kind kind_ = Kind::table;
  bool log_domain_ = false;
  std::vector<Point> points_;
  std::vector<double> breaks_;
  std::vector<double> values_;
};

// Sf(y): −∞ as soon as a candidate with f = 1 sits within π/2 of y, otherwise
// the inf of 1 − cos²(d_{π/2}(x,y))/(1−f(x)) over candidates with f < 1.
// Returns +∞ on an all-saturated candidate set with nothing near y; callers
// that include y among the candidates never see that case.
inline double s_transform(const PotentialFunction& f, const GroundSpace& space, const Point& y,
                          const std::vector<Point>& candidates) {
  if (candidates.empty()) throw invalid_input("s_transform needs a nonempty candidate set");
  double inf_val = kInfinity;
  for (const Point& x : candidates) {
    double fx = f.eval(space, x);
    if (fx >= 1.0) {
      if (space.distance(x, y) < kPi / 2) return -kInfinity;
      continue;
    }
    inf_val = std::min(inf_val, 1.0 - cos2_halfpi(space, x, y) / (1.0 - fx));
  }
  return inf_val;
}

// S_λ f(y) = inf_x λ − λ² cos²(d_{π/2}(x,y)) / (λ − f(x)); needs sup f < λ.
inline double s_lambda_transform(const PotentialFunction& f, double lambda, const GroundSpace& space,
                                 const Point& y, const std::vector<Point>& candidates) {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw invalid_input("s_lambda_transform needs λ in (0,1]");
  if (candidates.empty()) throw invalid_input("s_lambda_transform needs a nonempty candidate set");
  if (!(f.sup() < lambda)) throw infeasible_error("s_lambda_transform: sup f >= λ");
  double inf_val = kInfinity;
  for (const Point& x : candidates) {
    double fx = f.eval(space, x);
    inf_val = std::min(inf_val, lambda - lambda * lambda * cos2_halfpi(space, x, y) / (lambda - fx));
  }
  return inf_val;
}

// φ^c(y) = inf_x (c(x,y) − φ(x)) with c = −log cos²(d_{π/2}); ∞ − ∞ = +∞.
inline double c_transform(const PotentialFunction& phi, const GroundSpace& space, const Point& y,
                          const std::vector<Point>& candidates) {
  if (candidates.empty()) throw invalid_input("c_transform needs a nonempty candidate set");
  double inf_val = kInfinity;
  for (const Point& x : candidates) {
    double c = ell_cost(space.distance(x, y));
    double px = phi.eval(space, x);
    double term;
    if (c == kInfinity)
      term = kInfinity;  // covers the ∞ − ∞ convention
    else
      term = c - px;
    inf_val = std::min(inf_val, term);
  }
  return inf_val;
}

struct CheckFiResult {
  bool ok = true;
  std::optional<Point> violating_point;
  std::string message;
};

// f ∈ F_i: values never exceed 1, and wherever f attains 1 the closed π/8
// ball carries no μ_i mass.
inline CheckFiResult check_Fi(const PotentialFunction& f, const DiscreteMeasure& mu) {
  CheckFiResult res;
  if (f.sup() > 1.0) {
    res.ok = false;
    res.message = "potential exceeds 1";
    return res;
  }
  for (const auto& atom : mu.atoms()) {
    if (f.distance_to_one_set(mu.space(), atom.point) <= kPi / 8) {
      res.ok = false;
      res.violating_point = atom.point;
      res.message = "mass " + std::to_string(atom.mass) + " at " + point_to_string(atom.point) +
                    " lies in the closed π/8 ball of a point where the potential attains 1";
      return res;
    }
  }
  return res;
}

// F(f₁,…,f_p) = Σ λ_i ∫ Sf_i dμ_i under Σ λ_i f_i = 0 (checked on the union
// of supports and the candidate set) and f_i ∈ F_i.
inline double dual_objective(const std::vector<PotentialFunction>& fs,
                             const std::vector<DiscreteMeasure>& mus,
                             const std::vector<double>& lambdas,
                             const std::vector<Point>& candidates) {
  std::size_t p = fs.size();
  if (p == 0 || mus.size() != p || lambdas.size() != p)
    throw invalid_input("dual_objective: inconsistent input sizes");
  double lam_sum = 0.0;
  for (double l : lambdas) {
    if (!(l > 0.0)) throw invalid_input("dual_objective: weights must be positive");
    lam_sum += l;
  }
  if (std::abs(lam_sum - 1.0) > 1e-12) throw invalid_input("dual_objective: weights must sum to 1");

  const GroundSpace& space = mus.front().space();
  for (std::size_t i = 0; i < p; ++i) {
    if (!mus[i].space().same(space)) throw invalid_input("dual_objective: measures on different spaces");
    CheckFiResult chk = check_Fi(fs[i], mus[i]);
    if (!chk.ok) throw infeasible_error("potential " + std::to_string(i + 1) + " not in F_i: " + chk.message);
  }

  std::vector<Point> constraint_points = candidates;
  for (const auto& mu : mus)
    for (const auto& a : mu.atoms()) constraint_points.push_back(a.point);
  for (const Point& x : constraint_points) {
    double s = 0.0;
    for (std::size_t i = 0; i < p; ++i) s += lambdas[i] * fs[i].eval(space, x);
    if (std::abs(s) > 1e-9) {
      std::ostringstream os;
      os << "dual constraint Σλf = 0 violated at " << point_to_string(x) << " (residual " << s << ")";
      throw infeasible_error(os.str());
    }
  }

  double value = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    for (const auto& atom : mus[i].atoms()) {
      double s = s_transform(fs[i], space, atom.point, candidates);
      if (s == -kInfinity) return -kInfinity;
      value += lambdas[i] * atom.mass * s;
    }
  }
  return value;
}

struct WeakDualityReport {
  double primal = 0.0;  // J(μ) evaluated with hk_solve
  double dual = 0.0;
  double gap = 0.0;
};

inline WeakDualityReport weak_duality_certificate(const std::vector<PotentialFunction>& fs,
                                                  const std::vector<DiscreteMeasure>& mus,
                                                  const std::vector<double>& lambdas,
                                                  const DiscreteMeasure& mu,
                                                  const std::vector<Point>& candidates,
                                                  const SolverOptions& opts = {}) {
  WeakDualityReport rep;
  rep.dual = dual_objective(fs, mus, lambdas, candidates);
  for (std::size_t i = 0; i < mus.size(); ++i)
    rep.primal += lambdas[i] * hk_solve(mu, mus[i], opts).second.value;
  rep.gap = rep.primal - rep.dual;
  return rep;
}

// Dual candidate recovered from an LET plan: f = 1 − σ₁ on supp μ₁. Tight
// exactly when the plan's certificate is.
inline PotentialFunction recover_potential(const TransportPlan& plan, const DiscreteMeasure& mu1) {
  if (plan.rows != mu1.size()) throw invalid_input("recover_potential: plan does not match measure");
  std::vector<Point> pts;
  std::vector<double> vals;
  for (std::size_t j = 0; j < plan.rows; ++j) {
    pts.push_back(mu1.atoms()[j].point);
    vals.push_back(1.0 - plan.sigma1[j]);
  }
  return PotentialFunction::table(std::move(pts), std::move(vals));
}

// Union of supports plus a uniform lattice over the padded bounding box
// (euclidean spaces); all points for finite spaces; supports for spheres.
inline std::vector<Point> default_candidates(const std::vector<DiscreteMeasure>& mus,
                                             std::size_t grid_points = 512, double pad = kPi / 2) {
  if (mus.empty()) throw invalid_input("default_candidates needs at least one measure");
  const GroundSpace& space = mus.front().space();
  std::vector<Point> cands;
  if (space.kind() == SpaceKind::finite) {
    for (std::size_t i = 0; i < space.finite_size(); ++i) cands.push_back(Point::index(i));
    return cands;
  }
  for (const auto& mu : mus)
    for (const auto& a : mu.atoms()) cands.push_back(a.point);
  if (space.kind() == SpaceKind::sphere || cands.empty() || grid_points == 0) return cands;

  std::size_t dim = static_cast<std::size_t>(space.dim());
  std::vector<double> lo(dim, kInfinity), hi(dim, -kInfinity);
  for (const auto& mu : mus)
    for (const auto& a : mu.atoms())
      for (std::size_t d = 0; d < dim; ++d) {
        lo[d] = std::min(lo[d], a.point[d]);
        hi[d] = std::max(hi[d], a.point[d]);
      }
  for (std::size_t d = 0; d < dim; ++d) {
    lo[d] -= pad;
    hi[d] += pad;
  }
  std::size_t per_axis = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::floor(std::pow(double(grid_points), 1.0 / double(dim)))));
  std::size_t total = 1;
  for (std::size_t d = 0; d < dim; ++d) total *= per_axis;
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::vector<double> coords(dim);
    std::size_t rest = idx;
    for (std::size_t d = 0; d < dim; ++d) {
      std::size_t q = rest % per_axis;
      rest /= per_axis;
      coords[d] = lo[d] + (hi[d] - lo[d]) * double(q) / double(per_axis - 1);
    }
    cands.push_back(Point::at(std::move(coords)));
  }
  return cands;
}

// Potential file: {"kind": "table"|"piecewise1d", "points"/"breakpoints": [...],
// "values": [...]}. piecewise1d alternatively takes "slopes" (one per segment)
// with an "anchor" value at the first breakpoint.
inline PotentialFunction read_potential(const std::string& path, const GroundSpace& space) {
  std::ifstream in(path);
  if (!in) throw invalid_input(path + ": cannot open file");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw invalid_input(path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    throw invalid_input(path + ": missing \"kind\"");
  std::string kind = j["kind"].get<std::string>();
  if (kind == "table") {
    if (!j.contains("points") || !j.contains("values"))
      throw invalid_input(path + ": table potential needs \"points\" and \"values\"");
    std::vector<Point> pts;
    for (const auto& jp : j["points"]) {
      if (space.kind() == SpaceKind::finite) {
        pts.push_back(Point::index(jp.get<std::size_t>()));
      } else {
        std::vector<double> coords;
        for (const auto& c : jp) coords.push_back(detail::require_number(c, path + ": points"));
        pts.push_back(Point::at(std::move(coords)));
      }
      space.validate_point(pts.back());
    }
    std::vector<double> vals;
    for (const auto& v : j["values"]) vals.push_back(detail::require_number(v, path + ": values"));
    return PotentialFunction::table(std::move(pts), std::move(vals));
  }
  if (kind == "piecewise1d") {
    if (!j.contains("breakpoints")) throw invalid_input(path + ": piecewise1d needs \"breakpoints\"");
    std::vector<double> breaks;
    for (const auto& v : j["breakpoints"]) breaks.push_back(detail::require_number(v, path + ": breakpoints"));
    std::vector<double> vals;
    if (j.contains("values")) {
      for (const auto& v : j["values"]) vals.push_back(detail::require_number(v, path + ": values"));
    } else if (j.contains("slopes")) {
      if (!j.contains("anchor")) throw invalid_input(path + ": \"slopes\" form needs an \"anchor\" value");
      double cur = detail::require_number(j["anchor"], path + ": anchor");
      vals.push_back(cur);
      std::size_t seg = 0;
      for (const auto& v : j["slopes"]) {
        if (seg + 1 >= breaks.size()) throw invalid_input(path + ": too many slopes");
        cur += detail::require_number(v, path + ": slopes") * (breaks[seg + 1] - breaks[seg]);
        vals.push_back(cur);
        ++seg;
      }
    } else {
      throw invalid_input(path + ": piecewise1d needs \"values\" or \"slopes\"");
    }
    return PotentialFunction::piecewise1d(std::move(breaks), std::move(vals));
  }
  throw invalid_input(path + ": unknown potential kind \"" + kind + "\"");
}

inline std::string potential_to_json(const PotentialFunction& f, const GroundSpace& space) {
  std::ostringstream os;
  if (f.kind() == PotentialFunction::Kind::table) {
    os << "{\"kind\": \"table\", \"points\": [";
    for (std::size_t i = 0; i < f.points().size(); ++i) {
      if (i) os << ", ";
      const Point& p = f.points()[i];
      if (space.kind() == SpaceKind::finite) {
        os << p.idx();
      } else {
        os << "[";
        for (std::size_t d = 0; d < p.dim(); ++d) {
          if (d) os << ", ";
          os << format_double(p[d]);
        }
        os << "]";
      }
    }
  } else {
    os << "{\"kind\": \"piecewise1d\", \"breakpoints\": [";
    for (std::size_t i = 0; i < f.breakpoints().size(); ++i) {
      if (i) os << ", ";
      os << format_double(f.breakpoints()[i]);
    }
  }
  os << "], \"values\": [";
  for (std::size_t i = 0; i < f.values().size(); ++i) {
    if (i) os << ", ";
    os << format_double(f.values()[i]);
  }
  os << "]}\n";
  return os.str();
}

}  // namespace hk
