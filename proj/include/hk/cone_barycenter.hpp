#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "hk/duality.hpp"
#include "hk/let_solver.hpp"

namespace hk {

struct BarycenterSearchOptions {
  int starts = 16;          // local-search starts on euclidean spaces
  int max_iterations = 200; // iterations per local search
  double tie_tolerance = 1e-9;
  std::uint64_t seed = 42;
};

namespace detail {

struct AMax {
  Point x;
  double value = 0.0;
  bool tie = false;
};

inline double cosine_sum(const GroundSpace& space, const std::vector<Point>& pts,
                         const std::vector<double>& weights, const Point& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    s += weights[i] * std::cos(truncated_distance(space, pts[i], x, kPi));
  return s;
}

inline std::vector<double> cosine_sum_gradient(const GroundSpace& space, const std::vector<Point>& pts,
                                               const std::vector<double>& weights, const Point& x) {
  std::size_t dim = x.dim();
  std::vector<double> g(dim, 0.0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double d = space.distance(pts[i], x);
    if (d <= 1e-14 || d >= kPi) continue;
    double scale = -weights[i] * std::sin(d) / d;
    for (std::size_t c = 0; c < dim; ++c) g[c] += scale * (x[c] - pts[i][c]);
  }
  return g;
}

// Exact maximizer of w1 cos(d_π(·,u)) + w2 cos(d_π(·,v)) on a euclidean
// space: the maximum lies on the segment, where the sum is a sinusoid in the
// arclength parameter (pieces clamp at distance π).
inline std::vector<std::pair<Point, double>> two_point_candidates(const GroundSpace& space,
                                                                  const Point& u, const Point& v,
                                                                  double w1, double w2) {
  double D = space.distance(u, v);
  std::size_t dim = u.dim();
  auto at = [&](double a) {
    std::vector<double> c(dim);
    for (std::size_t i = 0; i < dim; ++i) c[i] = u[i] + (a / D) * (v[i] - u[i]);
    return Point::at(std::move(c));
  };
  std::vector<double> params = {0.0, D};
  double lo = std::max(0.0, D - kPi), hi = std::min(kPi, D);
  if (lo < hi) {
    params.push_back(lo);
    params.push_back(hi);
    double phase = std::atan2(w2 * std::sin(D), w1 + w2 * std::cos(D));
    if (phase >= lo && phase <= hi) params.push_back(phase);
  }
  std::vector<std::pair<Point, double>> out;
  for (double a : params) {
    Point x = at(a);
    double val = w1 * std::cos(std::min(a, kPi)) + w2 * std::cos(std::min(D - a, kPi));
    out.emplace_back(std::move(x), val);
  }
  return out;
}

inline Point nelder_mead_max(const GroundSpace& space, const std::vector<Point>& pts,
                             const std::vector<double>& weights, const Point& seed,
                             const std::vector<double>& lo, const std::vector<double>& hi,
                             int max_iter) {
  std::size_t dim = seed.dim();
  auto clamp_point = [&](std::vector<double> c) {
    for (std::size_t i = 0; i < dim; ++i) c[i] = std::clamp(c[i], lo[i], hi[i]);
    return Point::at(std::move(c));
  };
  std::vector<Point> simplex;
  std::vector<double> vals;
  simplex.push_back(seed);
  for (std::size_t i = 0; i < dim; ++i) {
    std::vector<double> c = seed.coords();
    c[i] += 0.5;
    simplex.push_back(clamp_point(std::move(c)));
  }
  for (const auto& p : simplex) vals.push_back(cosine_sum(space, pts, weights, p));

  for (int it = 0; it < max_iter; ++it) {
    std::vector<std::size_t> ord(simplex.size());
    std::iota(ord.begin(), ord.end(), 0);
    std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });
    std::size_t worst = ord.back();
    if (vals[ord.front()] - vals[worst] < 1e-14 * (1.0 + std::abs(vals[ord.front()]))) break;
    std::vector<double> centroid(dim, 0.0);
    for (std::size_t j = 0; j + 1 < ord.size(); ++j)
      for (std::size_t i = 0; i < dim; ++i) centroid[i] += simplex[ord[j]][i] / double(dim);
    auto blend = [&](double t) {
      std::vector<double> c(dim);
      for (std::size_t i = 0; i < dim; ++i) c[i] = centroid[i] + t * (centroid[i] - simplex[worst][i]);
      return clamp_point(std::move(c));
    };
    Point refl = blend(1.0);
    double frefl = cosine_sum(space, pts, weights, refl);
    if (frefl > vals[ord.front()]) {
      Point exp_p = blend(2.0);
      double fexp = cosine_sum(space, pts, weights, exp_p);
      if (fexp > frefl) {
        simplex[worst] = std::move(exp_p);
        vals[worst] = fexp;
      } else {
        simplex[worst] = std::move(refl);
        vals[worst] = frefl;
      }
      continue;
    }
    if (frefl > vals[ord[ord.size() - 2]]) {
      simplex[worst] = std::move(refl);
      vals[worst] = frefl;
      continue;
    }
    Point contr = blend(-0.5);
    double fcontr = cosine_sum(space, pts, weights, contr);
    if (fcontr > vals[worst]) {
      simplex[worst] = std::move(contr);
      vals[worst] = fcontr;
      continue;
    }
    for (std::size_t j = 1; j < ord.size(); ++j) {  // shrink toward the best vertex
      std::vector<double> c(dim);
      for (std::size_t i = 0; i < dim; ++i) c[i] = 0.5 * (simplex[ord[0]][i] + simplex[ord[j]][i]);
      simplex[ord[j]] = clamp_point(std::move(c));
      vals[ord[j]] = cosine_sum(space, pts, weights, simplex[ord[j]]);
    }
  }
  std::size_t best = 0;
  for (std::size_t j = 1; j < simplex.size(); ++j)
    if (vals[j] > vals[best]) best = j;
  return simplex[best];
}

inline Point gradient_polish(const GroundSpace& space, const std::vector<Point>& pts,
                             const std::vector<double>& weights, Point x,
                             const std::vector<double>& lo, const std::vector<double>& hi) {
  double f = cosine_sum(space, pts, weights, x);
  double step = 0.1;
  std::size_t dim = x.dim();
  for (int it = 0; it < 200; ++it) {
    std::vector<double> g = cosine_sum_gradient(space, pts, weights, x);
    double gn = 0.0;
    for (double v : g) gn += v * v;
    if (gn < 1e-26) break;
    bool moved = false;
    for (int bt = 0; bt < 40; ++bt) {
      std::vector<double> c(dim);
      for (std::size_t i = 0; i < dim; ++i) c[i] = std::clamp(x[i] + step * g[i], lo[i], hi[i]);
      Point trial = Point::at(std::move(c));
      double ft = cosine_sum(space, pts, weights, trial);
      if (ft > f) {
        x = std::move(trial);
        f = ft;
        step *= 1.5;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return x;
}

// Maximize A(x) = Σ w_i cos(d_π(x, x_i)) with w_i > 0. Exhaustive on finite
// spaces, closed form on spheres (the cone is euclidean there), segment
// formula / multistart local search on euclidean spaces.
inline AMax maximize_cosine_sum(const GroundSpace& space, std::vector<Point> pts,
                                std::vector<double> weights, const BarycenterSearchOptions& opts) {
  AMax out;
  if (pts.empty()) return out;

  if (space.kind() == SpaceKind::finite) {
    out.value = -kInfinity;
    std::size_t arg = 0;
    std::vector<double> vals(space.finite_size());
    for (std::size_t i = 0; i < space.finite_size(); ++i) {
      vals[i] = cosine_sum(space, pts, weights, Point::index(i));
      if (vals[i] > out.value) {
        out.value = vals[i];
        arg = i;
      }
    }
    out.x = Point::index(arg);
    if (opts.tie_tolerance >= 0.0)
      for (std::size_t i = 0; i < vals.size(); ++i)
        if (i != arg && vals[i] >= out.value - opts.tie_tolerance) out.tie = true;
    return out;
  }

  if (space.kind() == SpaceKind::sphere) {
    std::size_t dim = pts.front().dim();
    std::vector<double> w(dim, 0.0);
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t c = 0; c < dim; ++c) w[c] += weights[i] * pts[i][c];
    double norm = 0.0;
    for (double v : w) norm += v * v;
    norm = std::sqrt(norm);
    out.value = norm;
    if (norm <= opts.tie_tolerance) {
      out.x = pts.front();
      out.tie = true;  // A ≡ 0 up to tolerance, every direction maximizes
      return out;
    }
    for (double& v : w) v /= norm;
    out.x = Point::at(std::move(w));
    return out;
  }

  // euclidean: merge coincident contributors first
  std::vector<Point> mp;
  std::vector<double> mw;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool merged = false;
    for (std::size_t j = 0; j < mp.size(); ++j)
      if (space.points_equal(mp[j], pts[i])) {
        mw[j] += weights[i];
        merged = true;
        break;
      }
    if (!merged) {
      mp.push_back(pts[i]);
      mw.push_back(weights[i]);
    }
  }

  std::vector<std::pair<Point, double>> finals;
  if (mp.size() == 1) {
    finals.emplace_back(mp[0], mw[0]);
  } else if (mp.size() == 2) {
    finals = two_point_candidates(space, mp[0], mp[1], mw[0], mw[1]);
  } else {
    std::size_t dim = mp.front().dim();
    std::vector<double> lo(dim, kInfinity), hi(dim, -kInfinity);
    for (const auto& p : mp)
      for (std::size_t c = 0; c < dim; ++c) {
        lo[c] = std::min(lo[c], p[c]);
        hi[c] = std::max(hi[c], p[c]);
      }
    for (std::size_t c = 0; c < dim; ++c) {
      lo[c] -= kPi;
      hi[c] += kPi;
    }
    std::vector<Point> seeds = mp;
    for (std::size_t i = 0; i < mp.size() && seeds.size() < std::size_t(opts.starts); ++i)
      for (std::size_t j = i + 1; j < mp.size() && seeds.size() < std::size_t(opts.starts); ++j) {
        std::vector<double> c(dim);
        for (std::size_t d = 0; d < dim; ++d) c[d] = 0.5 * (mp[i][d] + mp[j][d]);
        seeds.push_back(Point::at(std::move(c)));
      }
    Rng rng(opts.seed);
    while (seeds.size() < std::size_t(opts.starts)) {
      std::vector<double> c(dim);
      for (std::size_t d = 0; d < dim; ++d) c[d] = rng.uniform(lo[d], hi[d]);
      seeds.push_back(Point::at(std::move(c)));
    }
    for (const Point& s : seeds) {
      Point x = nelder_mead_max(space, mp, mw, s, lo, hi, opts.max_iterations);
      x = gradient_polish(space, mp, mw, x, lo, hi);
      finals.emplace_back(x, cosine_sum(space, mp, mw, x));
    }
  }

  out.value = -kInfinity;
  for (const auto& [x, v] : finals)
    if (v > out.value) {
      out.value = v;
      out.x = x;
    }
  for (const auto& [x, v] : finals)
    if (v >= out.value - opts.tie_tolerance && space.distance(x, out.x) > 1e-6) out.tie = true;
  return out;
}

}  // namespace detail

struct ConeBarycenterResult {
  ConePoint point;       // [x*, max(A*,0)]; the apex when A* ≤ 0
  double value = 0.0;    // Σ λ_i r_i² − max(A*,0)²
  double a_star = 0.0;   // attained max of A(x) = Σ λ_i r_i cos(d_π(x, x_i))
  bool tie = false;      // multiple maximizers within tolerance
};

// Radial reduction: min over r ≥ 0 of Σ λ_i d_C²([x,r], η_i) is attained at
// r = max(A(x), 0), leaving Σ λ_i r_i² − max(A,0)² to minimize over x alone.
inline ConeBarycenterResult cone_point_barycenter(const std::vector<ConePoint>& etas,
                                                  const std::vector<double>& lambdas,
                                                  const GroundSpace& space,
                                                  const BarycenterSearchOptions& opts = {}) {
  if (etas.empty() || etas.size() != lambdas.size())
    throw invalid_input("cone_point_barycenter: inconsistent inputs");
  double lam_sum = 0.0;
  for (double l : lambdas) {
    if (!(l > 0.0)) throw invalid_input("cone_point_barycenter: weights must be positive");
    lam_sum += l;
  }
  if (std::abs(lam_sum - 1.0) > 1e-9) throw invalid_input("cone_point_barycenter: weights must sum to 1");

  ConeBarycenterResult res;
  double radial = 0.0;
  std::vector<Point> pts;
  std::vector<double> weights;
  for (std::size_t i = 0; i < etas.size(); ++i) {
    radial += lambdas[i] * etas[i].radius * etas[i].radius;
    if (!etas[i].is_apex()) {
      pts.push_back(etas[i].base);
      weights.push_back(lambdas[i] * etas[i].radius);
    }
  }
  detail::AMax best = detail::maximize_cosine_sum(space, std::move(pts), std::move(weights), opts);
  res.a_star = best.value;
  res.tie = best.tie;
  double r = std::max(best.value, 0.0);
  res.point = r > 0.0 ? cone_point(best.x, r) : ConePoint::apex();
  res.value = radial - r * r;
  return res;
}

// c(η) = inf_η' Σ λ_i d_C²(η', η_i); 2-homogeneous under dilations.
inline double multimarginal_cost(const std::vector<ConePoint>& etas, const std::vector<double>& lambdas,
                                 const GroundSpace& space, const BarycenterSearchOptions& opts = {}) {
  return cone_point_barycenter(etas, lambdas, space, opts).value;
}

struct MultimarginalOptions {
  std::size_t tuple_budget = 100000;
  int max_sweeps = 200;
  int block_steps = 200;   // projected-gradient steps per block update
  int random_starts = 8;
  double tolerance = 1e-10;
  std::uint64_t seed = 42;
  BarycenterSearchOptions search;
};

struct MultimarginalTuple {
  std::vector<std::size_t> index;  // per-slot atom index; npos marks a null slot
  std::vector<double> carried;     // q_i = per-slot carried mass
  Point x_star;
  double radius = 0.0;   // max(B, 0)
  double b_value = 0.0;  // attained max of B(x; q)
  bool tie = false;
};

struct MultimarginalSolution {
  SpacePtr space;
  std::vector<double> lambdas;
  std::vector<MultimarginalTuple> tuples;
  double objective = 0.0;                  // Σ λ_i μ_i(X) − Σ max(B,0)²
  double total_weighted_mass = 0.0;        // Σ λ_i μ_i(X)
  std::vector<double> marginal_residuals;  // per measure, max atom residual
  int sweeps = 0;
  bool ascent_stalled = false;
  bool ties_detected = false;
};

namespace detail {

struct MmState {
  // q parametrized as s = √q so B is linear in the block variables
  std::vector<double> s;      // T * p
  std::vector<double> b;      // attained max of B per tuple
  std::vector<Point> xstar;   // argmax per tuple
  double gain = 0.0;          // Σ (B⁺)²
};

}  // namespace detail

// Homogeneous multimarginal problem on the one-atom-per-index-tuple
// parametrization: maximize Σ_t max(B_t(x; q), 0)² with
// B(x; q) = Σ_i λ_i √q_i cos(d_π(x, x_{k_i})) subject to the per-atom mass
// balances. Block-coordinate ascent over the per-(measure, atom) groups; each
// block does projected-gradient steps on its √q sphere plus an exact
// single-tuple concentration probe.
inline MultimarginalSolution solve_multimarginal(const std::vector<DiscreteMeasure>& mus,
                                                 const std::vector<double>& lambdas,
                                                 const MultimarginalOptions& opts = {}) {
  std::size_t p = mus.size();
  if (p < 2 || lambdas.size() != p) throw invalid_input("solve_multimarginal needs p >= 2 measures with weights");
  double lam_sum = 0.0;
  for (double l : lambdas) {
    if (!(l > 0.0)) throw invalid_input("solve_multimarginal: weights must be positive");
    lam_sum += l;
  }
  if (std::abs(lam_sum - 1.0) > 1e-9) throw invalid_input("solve_multimarginal: weights must sum to 1");
  const GroundSpace& space = mus.front().space();
  for (const auto& mu : mus)
    if (!mu.space().same(space)) throw invalid_input("solve_multimarginal: measures on different spaces");

  MultimarginalSolution sol;
  sol.space = mus.front().space_ptr();
  sol.lambdas = lambdas;
  for (std::size_t i = 0; i < p; ++i) sol.total_weighted_mass += lambdas[i] * mus[i].total_mass();

  std::vector<std::size_t> live;  // slots with atoms
  for (std::size_t i = 0; i < p; ++i)
    if (!mus[i].is_null()) live.push_back(i);
  if (live.empty()) {
    sol.objective = 0.0;
    sol.marginal_residuals.assign(p, 0.0);
    return sol;
  }

  std::size_t T = 1;
  for (std::size_t i : live) {
    if (mus[i].size() > opts.tuple_budget / T)
      throw budget_exceeded("solve_multimarginal: tuple budget exceeded");
    T *= mus[i].size();
  }

  std::size_t q = live.size();
  std::vector<std::vector<std::size_t>> tuple_index(T, std::vector<std::size_t>(q));
  for (std::size_t t = 0; t < T; ++t) {
    std::size_t rest = t;
    for (std::size_t s = 0; s < q; ++s) {
      std::size_t n = mus[live[s]].size();
      tuple_index[t][s] = rest % n;
      rest /= n;
    }
  }
  // groups[(s,k)] = tuples holding atom k of live slot s
  std::vector<std::vector<std::vector<std::size_t>>> groups(q);
  for (std::size_t s = 0; s < q; ++s) groups[s].assign(mus[live[s]].size(), {});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t s = 0; s < q; ++s) groups[s][tuple_index[t][s]].push_back(t);

  auto atom_point = [&](std::size_t s, std::size_t k) -> const Point& {
    return mus[live[s]].atoms()[k].point;
  };
  auto atom_mass = [&](std::size_t s, std::size_t k) { return mus[live[s]].atoms()[k].mass; };

  auto remax = [&](const detail::MmState& st, std::size_t t, bool ties) -> detail::AMax {
    std::vector<Point> pts;
    std::vector<double> w;
    for (std::size_t s = 0; s < q; ++s) {
      double sv = st.s[t * q + s];
      if (sv > 0.0) {
        pts.push_back(atom_point(s, tuple_index[t][s]));
        w.push_back(lambdas[live[s]] * sv);
      }
    }
    BarycenterSearchOptions so = opts.search;
    so.tie_tolerance = ties ? opts.search.tie_tolerance : -1.0;
    return detail::maximize_cosine_sum(space, std::move(pts), std::move(w), so);
  };
  auto refresh_tuple = [&](detail::MmState& st, std::size_t t) {
    double old = std::max(st.b[t], 0.0);
    detail::AMax m = remax(st, t, false);
    st.b[t] = m.value;
    st.xstar[t] = m.x;
    double neu = std::max(m.value, 0.0);
    st.gain += neu * neu - old * old;
  };
  auto total_gain = [&](const detail::MmState& st) {
    double g = 0.0;
    for (std::size_t t = 0; t < T; ++t) g += std::max(st.b[t], 0.0) * std::max(st.b[t], 0.0);
    return g;
  };

  double mass_scale = 0.0;
  for (const auto& mu : mus) mass_scale += mu.total_mass();

  auto run_start = [&](detail::MmState st) {
    for (std::size_t t = 0; t < T; ++t) refresh_tuple(st, t);
    st.gain = total_gain(st);
    int sweep = 0;
    for (; sweep < opts.max_sweeps; ++sweep) {
      st.gain = total_gain(st);  // kill incremental drift once per sweep
      double before = st.gain;
      for (std::size_t s = 0; s < q; ++s) {
        std::size_t i = live[s];
        for (std::size_t k = 0; k < groups[s].size(); ++k) {
          const auto& grp = groups[s][k];
          const Point& own = atom_point(s, k);
          double radius = std::sqrt(atom_mass(s, k));
          // projected gradient on the block sphere with positions frozen: a
          // minorant of the true objective, so accepted steps never decrease
          // it. Destruction-branch tuples (B ≤ 0) are scored at the group's
          // own atom, where entering mass actually lands.
          std::vector<double> beta(grp.size()), wcoef(grp.size()), sv(grp.size());
          for (std::size_t g = 0; g < grp.size(); ++g) {
            std::size_t t = grp[g];
            sv[g] = st.s[t * q + s];
            if (st.b[t] <= 0.0) {
              double cross = 0.0;
              for (std::size_t o = 0; o < q; ++o) {
                if (o == s) continue;
                double so = st.s[t * q + o];
                if (so > 0.0)
                  cross += lambdas[live[o]] * so *
                           std::cos(truncated_distance(space, own, atom_point(o, tuple_index[t][o]), kPi));
              }
              beta[g] = cross;
              wcoef[g] = lambdas[i];
              continue;
            }
            wcoef[g] = lambdas[i] * std::cos(truncated_distance(space, st.xstar[t], own, kPi));
            beta[g] = st.b[t] - wcoef[g] * sv[g];
          }
          auto block_val = [&](const std::vector<double>& x) {
            double v = 0.0;
            for (std::size_t g = 0; g < grp.size(); ++g) {
              double b = beta[g] + wcoef[g] * x[g];
              if (b > 0.0) v += b * b;
            }
            return v;
          };
          double cur = block_val(sv);
          double step = 0.5;
          bool changed = false;
          for (int bs = 0; bs < opts.block_steps; ++bs) {
            std::vector<double> grad(grp.size());
            for (std::size_t g = 0; g < grp.size(); ++g) {
              double b = beta[g] + wcoef[g] * sv[g];
              grad[g] = b > 0.0 ? 2.0 * b * wcoef[g] : 0.0;
            }
            bool accepted = false;
            for (int bt = 0; bt < 30; ++bt) {
              std::vector<double> trial(grp.size());
              double norm = 0.0;
              for (std::size_t g = 0; g < grp.size(); ++g) {
                trial[g] = std::max(sv[g] + step * grad[g], 0.0);
                norm += trial[g] * trial[g];
              }
              if (norm <= 0.0) break;
              double scale = radius / std::sqrt(norm);
              for (double& v : trial) v *= scale;
              double tv = block_val(trial);
              if (tv > cur + 1e-15 * (1.0 + cur)) {
                sv.swap(trial);
                cur = tv;
                step *= 1.5;
                accepted = true;
                changed = true;
                break;
              }
              step *= 0.5;
            }
            if (!accepted) break;
          }
          if (changed) {
            for (std::size_t g = 0; g < grp.size(); ++g) st.s[grp[g] * q + s] = sv[g];
            for (std::size_t t : grp) refresh_tuple(st, t);
          }
          // concentration probe: exact value of moving the whole group mass
          // onto a single tuple
          std::vector<double> b_zero(grp.size()), b_full(grp.size());
          std::vector<Point> x_zero(grp.size()), x_full(grp.size());
          double zero_sum = 0.0, cur_sum = 0.0;
          for (std::size_t g = 0; g < grp.size(); ++g) {
            std::size_t t = grp[g];
            double keep = st.s[t * q + s];
            st.s[t * q + s] = 0.0;
            detail::AMax mz = remax(st, t, false);
            st.s[t * q + s] = radius;
            detail::AMax mf = remax(st, t, false);
            st.s[t * q + s] = keep;
            b_zero[g] = mz.value;
            x_zero[g] = mz.x;
            b_full[g] = mf.value;
            x_full[g] = mf.x;
            zero_sum += std::max(mz.value, 0.0) * std::max(mz.value, 0.0);
            cur_sum += std::max(st.b[t], 0.0) * std::max(st.b[t], 0.0);
          }
          double best_delta = 0.0;
          std::size_t best_g = grp.size();
          for (std::size_t g = 0; g < grp.size(); ++g) {
            double full_term = std::max(b_full[g], 0.0) * std::max(b_full[g], 0.0);
            double zero_term = std::max(b_zero[g], 0.0) * std::max(b_zero[g], 0.0);
            double delta = zero_sum - zero_term + full_term - cur_sum;
            if (delta > best_delta) {
              best_delta = delta;
              best_g = g;
            }
          }
          if (best_g < grp.size() && best_delta > 1e-14 * (1.0 + mass_scale)) {
            for (std::size_t g = 0; g < grp.size(); ++g) {
              std::size_t t = grp[g];
              double old = std::max(st.b[t], 0.0);
              st.s[t * q + s] = g == best_g ? radius : 0.0;
              st.b[t] = g == best_g ? b_full[g] : b_zero[g];
              st.xstar[t] = g == best_g ? x_full[g] : x_zero[g];
              double neu = std::max(st.b[t], 0.0);
              st.gain += neu * neu - old * old;
            }
          }
        }
      }
      if (st.gain - before <= opts.tolerance * (1.0 + mass_scale)) {
        ++sweep;
        break;
      }
    }
    return std::make_pair(std::move(st), sweep);
  };

  // starts: independent product, nearest pairing, seeded random splits
  std::vector<detail::MmState> starts;
  {
    detail::MmState st;
    st.s.assign(T * q, 0.0);
    st.b.assign(T, 0.0);
    st.xstar.assign(T, Point{});
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t s = 0; s < q; ++s) {
        double qv = atom_mass(s, tuple_index[t][s]);
        for (std::size_t o = 0; o < q; ++o) {
          if (o == s) continue;
          qv *= atom_mass(o, tuple_index[t][o]) / mus[live[o]].total_mass();
        }
        st.s[t * q + s] = std::sqrt(qv);
      }
    starts.push_back(std::move(st));
  }
  {
    detail::MmState st = starts.front();
    std::fill(st.s.begin(), st.s.end(), 0.0);
    for (std::size_t s = 0; s < q; ++s)
      for (std::size_t k = 0; k < groups[s].size(); ++k) {
        // ride the tuple pairing this atom with its nearest atom in every
        // other measure
        std::vector<std::size_t> idx(q);
        idx[s] = k;
        for (std::size_t o = 0; o < q; ++o) {
          if (o == s) continue;
          double best_d = kInfinity;
          std::size_t best_j = 0;
          for (std::size_t j = 0; j < mus[live[o]].size(); ++j) {
            double d = space.distance(atom_point(s, k), atom_point(o, j));
            if (d < best_d) {
              best_d = d;
              best_j = j;
            }
          }
          idx[o] = best_j;
        }
        std::size_t t = 0, stride = 1;
        for (std::size_t o = 0; o < q; ++o) {
          t += idx[o] * stride;
          stride *= mus[live[o]].size();
        }
        st.s[t * q + s] = std::sqrt(atom_mass(s, k));
      }
    starts.push_back(std::move(st));
  }
  Rng rng(opts.seed);
  for (int r = 0; r < opts.random_starts; ++r) {
    detail::MmState st = starts.front();
    for (std::size_t s = 0; s < q; ++s)
      for (std::size_t k = 0; k < groups[s].size(); ++k) {
        const auto& grp = groups[s][k];
        double norm = 0.0;
        std::vector<double> draw(grp.size());
        for (std::size_t g = 0; g < grp.size(); ++g) {
          draw[g] = rng.uniform() + 1e-3;
          norm += draw[g] * draw[g];
        }
        double scale = std::sqrt(atom_mass(s, k)) / std::sqrt(norm);
        for (std::size_t g = 0; g < grp.size(); ++g) st.s[grp[g] * q + s] = draw[g] * scale;
      }
    starts.push_back(std::move(st));
  }

  detail::MmState best;
  double best_gain = -1.0;
  int best_sweeps = 0;
  for (auto& st : starts) {
    auto [done, sweeps] = run_start(std::move(st));
    if (done.gain > best_gain) {
      best_gain = done.gain;
      best = std::move(done);
      best_sweeps = sweeps;
    }
  }
  sol.sweeps = best_sweeps;
  sol.ascent_stalled = best_sweeps >= opts.max_sweeps;

  // exact renormalization of the mass balances
  for (std::size_t s = 0; s < q; ++s)
    for (std::size_t k = 0; k < groups[s].size(); ++k) {
      double norm = 0.0;
      for (std::size_t t : groups[s][k]) norm += best.s[t * q + s] * best.s[t * q + s];
      if (norm <= 0.0) continue;
      double scale = std::sqrt(atom_mass(s, k) / norm);
      for (std::size_t t : groups[s][k]) best.s[t * q + s] *= scale;
    }
  for (std::size_t t = 0; t < T; ++t) refresh_tuple(best, t);

  sol.marginal_residuals.assign(p, 0.0);
  for (std::size_t s = 0; s < q; ++s)
    for (std::size_t k = 0; k < groups[s].size(); ++k) {
      double sum = 0.0;
      for (std::size_t t : groups[s][k]) sum += best.s[t * q + s] * best.s[t * q + s];
      sol.marginal_residuals[live[s]] =
          std::max(sol.marginal_residuals[live[s]], std::abs(sum - atom_mass(s, k)));
    }

  double gain = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    MultimarginalTuple tup;
    tup.index.assign(p, Point::npos);
    tup.carried.assign(p, 0.0);
    double loaded = 0.0, split_value = 0.0;
    int loaded_slots = 0;
    for (std::size_t s = 0; s < q; ++s) {
      std::size_t i = live[s];
      tup.index[i] = tuple_index[t][s];
      double sv = best.s[t * q + s];
      tup.carried[i] = sv * sv;
      loaded += sv * sv;
      if (sv * sv > 1e-12 * (1.0 + mass_scale)) {
        ++loaded_slots;
        split_value += lambdas[i] * lambdas[i] * sv * sv;
      }
    }
    detail::AMax m = remax(best, t, true);
    tup.b_value = m.value;
    tup.radius = std::max(m.value, 0.0);
    tup.x_star = m.x;
    tup.tie = m.tie && loaded > 0.0;
    // a coupled optimum matching the split (Hellinger) value is the π/2
    // degeneracy of Example-4.10 type
    if (loaded_slots >= 2 && tup.radius > 0.0 &&
        std::abs(tup.radius * tup.radius - split_value) <= 1e-9 * (1.0 + tup.radius * tup.radius))
      tup.tie = true;
    if (tup.tie) sol.ties_detected = true;
    gain += tup.radius * tup.radius;
    sol.tuples.push_back(std::move(tup));
  }
  sol.objective = sol.total_weighted_mass - gain;
  return sol;
}

// h² T# α: one atom per tuple with positive radius, mass max(B,0)².
inline DiscreteMeasure extract_barycenter(const MultimarginalSolution& sol) {
  std::vector<Atom> atoms;
  for (const auto& t : sol.tuples)
    if (t.radius > 0.0) atoms.push_back(Atom{t.x_star, t.radius * t.radius});
  return DiscreteMeasure(sol.space, std::move(atoms));
}

struct FixedPointOptions {
  int max_outer = 50;
  double tolerance = 1e-8;       // stop when J improves by less than this
  std::size_t tuple_cap = 4096;  // per-atom cap on glued tuples
  SolverOptions solver;
  BarycenterSearchOptions search;
};

struct FixedPointResult {
  DiscreteMeasure barycenter;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // J per outer iteration
};

namespace detail {

struct GluedSlot {
  // conditional coupling of one barycenter atom with measure i, after the
  // dilation that pins the barycenter-side radius at 1
  std::vector<std::size_t> cols;
  std::vector<double> prob;
  std::vector<double> radius;  // √(σ₁/σ₂) per column; empty list = apex
};

}  // namespace detail

// Alternating scheme: glue the p optimal LET plans through the current
// barycenter's atoms, replace each glued tuple by its pointwise cone
// barycenter, push down by h². J never increases (best iterate kept).
inline FixedPointResult barycenter_fixed_point(const DiscreteMeasure& mu0,
                                               const std::vector<DiscreteMeasure>& mus,
                                               const std::vector<double>& lambdas,
                                               const FixedPointOptions& opts = {}) {
  std::size_t p = mus.size();
  if (p < 2 || lambdas.size() != p) throw invalid_input("barycenter_fixed_point needs p >= 2 measures");
  if (mu0.is_null()) throw invalid_input("barycenter_fixed_point needs a nonnull initial measure");
  const GroundSpace& space = mu0.space();
  for (const auto& mu : mus)
    if (!mu.space().same(space)) throw invalid_input("barycenter_fixed_point: measures on different spaces");
  double lam_sum = 0.0;
  for (double l : lambdas) {
    if (!(l > 0.0)) throw invalid_input("barycenter_fixed_point: weights must be positive");
    lam_sum += l;
  }
  if (std::abs(lam_sum - 1.0) > 1e-9) throw invalid_input("barycenter_fixed_point: weights must sum to 1");

  FixedPointResult res;
  res.barycenter = mu0;
  res.objective = kInfinity;
  DiscreteMeasure current = mu0;

  for (int outer = 0; outer < opts.max_outer; ++outer) {
    std::vector<TransportPlan> plans;
    double J = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      auto [plan, rep] = hk_solve(current, mus[i], opts.solver);
      J += lambdas[i] * rep.value;
      plans.push_back(std::move(plan));
    }
    res.trace.push_back(J);
    res.iterations = outer + 1;
    bool improved = J < res.objective - opts.tolerance;
    if (J < res.objective) {
      res.objective = J;
      res.barycenter = current;
    }
    if (!improved && outer > 0) {
      res.converged = true;
      break;
    }

    std::vector<Atom> next;
    // creation columns glue with the apex in every other slot
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t k = 0; k < mus[i].size(); ++k)
        if (plans[i].sigma2[k] <= 0.0)
          next.push_back(Atom{mus[i].atoms()[k].point,
                              mus[i].atoms()[k].mass * lambdas[i] * lambdas[i]});

    for (std::size_t m = 0; m < current.size(); ++m) {
      double w = current.atoms()[m].mass;
      std::vector<detail::GluedSlot> slots(p);
      std::size_t combos = 1;
      for (std::size_t i = 0; i < p; ++i) {
        auto& slot = slots[i];
        double row = plans[i].marginal1[m];
        if (row > 0.0) {
          double sigma1 = plans[i].sigma1[m];
          for (std::size_t k = 0; k < plans[i].cols; ++k) {
            double g = plans[i].at(m, k);
            if (g <= 0.0) continue;
            slot.cols.push_back(k);
            slot.prob.push_back(g / row);
            slot.radius.push_back(std::sqrt(sigma1 / plans[i].sigma2[k]));
          }
        }
        std::size_t width = std::max<std::size_t>(slot.cols.size(), 1);
        combos *= width;
      }
      if (combos > opts.tuple_cap) {
        // keep the heaviest columns per slot and renormalize
        std::size_t per_slot = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::pow(double(opts.tuple_cap), 1.0 / double(p))));
        for (auto& slot : slots) {
          if (slot.cols.size() <= per_slot) continue;
          std::vector<std::size_t> ord(slot.cols.size());
          std::iota(ord.begin(), ord.end(), 0);
          std::sort(ord.begin(), ord.end(),
                    [&](std::size_t a, std::size_t b) { return slot.prob[a] > slot.prob[b]; });
          ord.resize(per_slot);
          std::sort(ord.begin(), ord.end());
          detail::GluedSlot trimmed;
          double total = 0.0;
          for (std::size_t idx : ord) {
            trimmed.cols.push_back(slot.cols[idx]);
            trimmed.prob.push_back(slot.prob[idx]);
            trimmed.radius.push_back(slot.radius[idx]);
            total += slot.prob[idx];
          }
          for (double& pr : trimmed.prob) pr /= total;
          slot = std::move(trimmed);
        }
      }

      std::vector<std::size_t> pick(p, 0);
      while (true) {
        double weight = w;
        std::vector<Point> pts;
        std::vector<double> ws;
        for (std::size_t i = 0; i < p; ++i) {
          const auto& slot = slots[i];
          if (slot.cols.empty()) continue;  // apex slot
          std::size_t c = pick[i];
          weight *= slot.prob[c];
          pts.push_back(mus[i].atoms()[slot.cols[c]].point);
          ws.push_back(lambdas[i] * slot.radius[c]);
        }
        if (weight > 0.0 && !pts.empty()) {
          detail::AMax bm = detail::maximize_cosine_sum(space, std::move(pts), std::move(ws), opts.search);
          if (bm.value > 0.0) next.push_back(Atom{bm.x, weight * bm.value * bm.value});
        }
        std::size_t i = 0;
        for (; i < p; ++i) {
          if (slots[i].cols.empty()) continue;
          if (++pick[i] < slots[i].cols.size()) break;
          pick[i] = 0;
        }
        if (i == p) break;
      }
    }
    current = DiscreteMeasure(mu0.space_ptr(), std::move(next));
  }
  if (res.objective == kInfinity) res.objective = 0.0;
  return res;
}

// Uniform lattice for density-sample inputs.
struct RegularGrid {
  std::vector<double> origin;
  std::vector<std::size_t> shape;
  double spacing = 0.0;

  std::size_t dim() const { return shape.size(); }
  std::size_t size() const {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
  }
  std::vector<std::size_t> unflatten(std::size_t flat) const {
    std::vector<std::size_t> idx(dim());
    for (std::size_t d = 0; d < dim(); ++d) {
      idx[d] = flat % shape[d];
      flat /= shape[d];
    }
    return idx;
  }
  std::size_t flatten(const std::vector<std::size_t>& idx) const {
    std::size_t f = 0, stride = 1;
    for (std::size_t d = 0; d < dim(); ++d) {
      f += idx[d] * stride;
      stride *= shape[d];
    }
    return f;
  }
  Point node(std::size_t flat) const {
    auto idx = unflatten(flat);
    std::vector<double> c(dim());
    for (std::size_t d = 0; d < dim(); ++d) c[d] = origin[d] + spacing * double(idx[d]);
    return Point::at(std::move(c));
  }
};

// ξ = −½ D log σ by central differences (second-order one-sided at the
// boundary), t(x) = x − (arctan‖ξ‖/‖ξ‖) ξ, masses γ̃/σ̃ with σ̃ = 1 − f at the
// mapped points. Nodes where 1 − f ≤ 0 fall outside {f < 1} and are skipped.
inline DiscreteMeasure transport_map_reconstruct(const RegularGrid& grid,
                                                 const std::vector<double>& sigma,
                                                 const std::vector<double>& gamma_marginal,
                                                 const PotentialFunction& f) {
  if (sigma.size() != grid.size() || gamma_marginal.size() != grid.size())
    throw invalid_input("transport_map_reconstruct: sample vectors do not match the grid");
  if (!(grid.spacing > 0.0)) throw invalid_input("transport_map_reconstruct: grid spacing must be positive");
  std::size_t dim = grid.dim();
  SpacePtr space = make_space(GroundSpace::euclidean(static_cast<int>(dim)));

  std::vector<double> logsigma(grid.size(), 0.0);
  for (std::size_t n = 0; n < grid.size(); ++n) {
    if (gamma_marginal[n] > 0.0 && !(sigma[n] > 0.0))
      throw invalid_input("transport_map_reconstruct: σ ≤ 0 at a loaded node");
    logsigma[n] = sigma[n] > 0.0 ? std::log(sigma[n]) : -kInfinity;
  }

  double h = grid.spacing;
  std::vector<Atom> atoms;
  for (std::size_t n = 0; n < grid.size(); ++n) {
    if (gamma_marginal[n] <= 0.0) continue;
    auto idx = grid.unflatten(n);
    std::vector<double> xi(dim, 0.0);
    for (std::size_t d = 0; d < dim; ++d) {
      std::size_t len = grid.shape[d];
      auto value_at = [&](std::size_t j) {
        auto id2 = idx;
        id2[d] = j;
        return logsigma[grid.flatten(id2)];
      };
      std::size_t j = idx[d];
      double deriv = 0.0;
      auto finite = [&](std::size_t a) { return value_at(a) != -kInfinity; };
      if (j > 0 && j + 1 < len && finite(j - 1) && finite(j + 1)) {
        deriv = (value_at(j + 1) - value_at(j - 1)) / (2.0 * h);
      } else if (j + 2 < len && finite(j + 1) && finite(j + 2)) {
        deriv = (-3.0 * value_at(j) + 4.0 * value_at(j + 1) - value_at(j + 2)) / (2.0 * h);
      } else if (j >= 2 && finite(j - 1) && finite(j - 2)) {
        deriv = (3.0 * value_at(j) - 4.0 * value_at(j - 1) + value_at(j - 2)) / (2.0 * h);
      } else if (j + 1 < len && finite(j + 1)) {
        deriv = (value_at(j + 1) - value_at(j)) / h;
      } else if (j >= 1 && finite(j - 1)) {
        deriv = (value_at(j) - value_at(j - 1)) / h;
      }
      xi[d] = -0.5 * deriv;
    }
    double norm = 0.0;
    for (double v : xi) norm += v * v;
    norm = std::sqrt(norm);
    double factor = norm < 1e-12 ? 1.0 : std::atan(norm) / norm;
    Point x = grid.node(n);
    std::vector<double> mapped(dim);
    for (std::size_t d = 0; d < dim; ++d) mapped[d] = x[d] - factor * xi[d];
    Point tx = Point::at(std::move(mapped));
    double tilde = 1.0 - f.eval(*space, tx);
    if (tilde <= 0.0) continue;
    atoms.push_back(Atom{std::move(tx), gamma_marginal[n] / tilde});
  }
  return DiscreteMeasure(space, std::move(atoms));
}

inline DiscreteMeasure transport_map_reconstruct(const RegularGrid& grid,
                                                 const std::vector<double>& sigma,
                                                 const TransportPlan& plan,
                                                 const PotentialFunction& f) {
  if (plan.cols != grid.size())
    throw invalid_input("transport_map_reconstruct: plan's grid side does not match the grid");
  return transport_map_reconstruct(grid, sigma, plan.marginal2, f);
}

}  // namespace hk
