#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "hk/duality.hpp"
#include "test_support.hpp"

using namespace hk;

namespace {

PotentialFunction paper_f1() { return PotentialFunction::piecewise1d({-kPi / 2, kPi / 2}, {-1.0, 1.0}); }

PotentialFunction constant_table(const std::vector<Point>& pts, double c) {
  return PotentialFunction::table(pts, std::vector<double>(pts.size(), c));
}

std::vector<Point> grid_points(double lo, double hi, int n) {
  std::vector<Point> pts;
  for (int i = 0; i < n; ++i) pts.push_back(Point::at({lo + (hi - lo) * i / (n - 1)}));
  return pts;
}

PotentialFunction random_piecewise(Rng& rng, double lo = -1.0, double hi = 0.9) {
  std::vector<double> breaks, vals;
  double x = -4.0;
  for (int i = 0; i < 6; ++i) {
    breaks.push_back(x);
    vals.push_back(rng.uniform(lo, hi));
    x += rng.uniform(0.5, 2.0);
  }
  return PotentialFunction::piecewise1d(std::move(breaks), std::move(vals));
}

}  // namespace

TEST_CASE("s transform basics") {
  GroundSpace e1 = GroundSpace::euclidean(1);
  std::vector<Point> cands = grid_points(-3.0, 3.0, 61);

  PotentialFunction zero = constant_table(cands, 0.0);
  for (double y : {-3.0, 0.0, 1.3}) {
    // the grid contains y up to rounding; the x = y term gives 1 - 1 = 0
    CHECK(s_transform(zero, e1, Point::at({y}), cands) == Catch::Approx(0.0).margin(1e-3));
  }
  CHECK(s_transform(zero, e1, cands[7], cands) == 0.0);

  double c = 0.4;
  PotentialFunction cf = constant_table(cands, c);
  CHECK(s_transform(cf, e1, cands[10], cands) == Catch::Approx(1.0 - 1.0 / (1.0 - c)));

  CHECK_THROWS_AS(s_transform(zero, e1, cands[0], {}), invalid_input);
}

TEST_CASE("s transform of the paper potential") {
  GroundSpace e1 = GroundSpace::euclidean(1);
  PotentialFunction f1 = paper_f1();
  auto sp = make_space(GroundSpace::euclidean(1));
  DiscreteMeasure mu1 = hktest::interval_measure(sp, -1.0 - kPi, 50);
  DiscreteMeasure mu2 = hktest::interval_measure(sp, kPi, 50);
  std::vector<Point> cands = default_candidates({mu1, mu2});

  for (const auto& atom : mu1.atoms())
    CHECK(s_transform(f1, e1, atom.point, cands) == Catch::Approx(0.5).margin(1e-12));

  // on the other interval f1 saturates at 1 nearby, so Sf1 = -inf there
  CHECK(s_transform(f1, e1, mu2.atoms()[0].point, cands) == -kInfinity);

  // and f2 = -f1 mirrors the picture
  PotentialFunction f2 = f1.negated();
  for (const auto& atom : mu2.atoms())
    CHECK(s_transform(f2, e1, atom.point, cands) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("s transform order reversal and bound") {
  GroundSpace e1 = GroundSpace::euclidean(1);
  Rng rng(101);
  std::vector<Point> cands = grid_points(-4.0, 4.0, 81);
  for (int trial = 0; trial < 10; ++trial) {
    PotentialFunction f = random_piecewise(rng);
    PotentialFunction g = random_piecewise(rng, -0.5, 0.95);
    auto fmax = [&](const Point& x) { return std::max(f.eval(e1, x), g.eval(e1, x)); };
    // build h >= f pointwise on candidates as a table
    std::vector<double> hv;
    for (const auto& x : cands) hv.push_back(fmax(x));
    PotentialFunction h = PotentialFunction::table(cands, hv);
    for (int q = 0; q < 10; ++q) {
      Point y = cands[rng.index(cands.size())];
      double sf = s_transform(f, e1, y, cands);
      double sh = s_transform(h, e1, y, cands);
      CHECK(sh <= sf + 1e-12);
      CHECK(sf <= 1.0);
    }
  }
}

TEST_CASE("s lambda transform") {
  GroundSpace e1 = GroundSpace::euclidean(1);
  Rng rng(103);
  std::vector<Point> cands = grid_points(-4.0, 4.0, 81);

  PotentialFunction zero = constant_table(cands, 0.0);
  CHECK(s_lambda_transform(zero, 0.37, e1, cands[3], cands) == Catch::Approx(0.0).margin(1e-15));
  // λ = 1 coincides with the plain transform
  PotentialFunction f = random_piecewise(rng, -1.0, 0.8);
  for (int q = 0; q < 5; ++q) {
    Point y = cands[rng.index(cands.size())];
    CHECK(s_lambda_transform(f, 1.0, e1, y, cands) ==
          Catch::Approx(s_transform(f, e1, y, cands)).margin(1e-14));
  }
  // S_λ(λ f) = λ S f
  for (int trial = 0; trial < 10; ++trial) {
    double lambda = rng.uniform(0.15, 0.9);
    PotentialFunction g = random_piecewise(rng, -1.0, 0.9);
    std::vector<double> scaled_vals;
    for (double v : g.values()) scaled_vals.push_back(lambda * v);
    PotentialFunction lg = PotentialFunction::piecewise1d(g.breakpoints(), scaled_vals);
    for (int q = 0; q < 5; ++q) {
      Point y = cands[rng.index(cands.size())];
      double lhs = s_lambda_transform(lg, lambda, e1, y, cands);
      double rhs = lambda * s_transform(g, e1, y, cands);
      CHECK(std::abs(lhs - rhs) <= 1e-12 * (1.0 + std::abs(rhs)));
    }
  }
  CHECK_THROWS_AS(s_lambda_transform(zero, 0.0, e1, cands[0], cands), invalid_input);
  PotentialFunction too_high = constant_table(cands, 0.5);
  CHECK_THROWS_AS(s_lambda_transform(too_high, 0.4, e1, cands[0], cands), infeasible_error);
}

TEST_CASE("c transform") {
  GroundSpace e1 = GroundSpace::euclidean(1);
  Rng rng(107);
  std::vector<Point> cands = grid_points(-4.0, 4.0, 81);

  PotentialFunction zero_log = PotentialFunction::table(cands, std::vector<double>(cands.size(), 0.0), true);
  CHECK(c_transform(zero_log, e1, cands[5], cands) == 0.0);

  // φ = −log(1−f) pairs with φ^c = −log(1 − Sf)
  for (int trial = 0; trial < 8; ++trial) {
    PotentialFunction f = random_piecewise(rng, -1.0, 0.85);
    PotentialFunction phi = f.to_log_domain();
    for (int q = 0; q < 6; ++q) {
      Point y = cands[rng.index(cands.size())];
      double sf = s_transform(f, e1, y, cands);
      if (sf == -kInfinity) continue;
      double lhs = c_transform(phi, e1, y, cands);
      double rhs = -std::log1p(-sf);
      CHECK(std::abs(lhs - rhs) <= 1e-12 * (1.0 + std::abs(rhs)));
    }
  }

  // φ^{cc} ≥ φ and c-transforming three times equals once
  for (int trial = 0; trial < 6; ++trial) {
    PotentialFunction phi = random_piecewise(rng, -1.5, 0.9);
    std::vector<double> phic, phicc;
    for (const auto& y : cands) phic.push_back(c_transform(phi, e1, y, cands));
    PotentialFunction phi_c = PotentialFunction::table(cands, phic, true);
    for (const auto& y : cands) phicc.push_back(c_transform(phi_c, e1, y, cands));
    PotentialFunction phi_cc = PotentialFunction::table(cands, phicc, true);
    for (std::size_t i = 0; i < cands.size(); ++i)
      CHECK(phicc[i] >= phi.eval(e1, cands[i]) - 1e-12);
    for (const auto& y : cands) {
      double once = c_transform(phi, e1, y, cands);
      double thrice = c_transform(phi_cc, e1, y, cands);
      CHECK(std::abs(once - thrice) <= 1e-12 * (1.0 + std::abs(once)));
    }
  }
}

TEST_CASE("check Fi") {
  auto sp = make_space(GroundSpace::euclidean(1));
  Rng rng(109);
  DiscreteMeasure mu = hktest::random_measure(rng, sp, 5);
  std::vector<Point> pts;
  for (const auto& a : mu.atoms()) pts.push_back(a.point);

  CHECK(check_Fi(constant_table(pts, 0.0), mu).ok);
  CheckFiResult bad = check_Fi(constant_table(pts, 1.0), mu);
  CHECK_FALSE(bad.ok);
  CHECK(bad.violating_point.has_value());

  DiscreteMeasure mu1 = hktest::interval_measure(sp, -1.0 - kPi, 50);
  CHECK(check_Fi(paper_f1(), mu1).ok);  // f1 < 1 on the support and π/8 around it

  // an atom within π/8 of the saturated region flips the verdict
  DiscreteMeasure close_mass(sp, {Atom{Point::at({kPi / 2 + 0.1}), 1.0}});
  CHECK_FALSE(check_Fi(paper_f1(), close_mass).ok);
  DiscreteMeasure at_ball_boundary(sp, {Atom{Point::at({kPi / 2 - kPi / 8}), 1.0}});
  CHECK_FALSE(check_Fi(paper_f1(), at_ball_boundary).ok);  // closed ball
  DiscreteMeasure just_outside(sp, {Atom{Point::at({kPi / 2 - kPi / 8 - 1e-6}), 1.0}});
  CHECK(check_Fi(paper_f1(), just_outside).ok);
}

TEST_CASE("dual objective") {
  auto sp = make_space(GroundSpace::euclidean(1));
  GroundSpace e1 = *sp;
  int N = 200;
  DiscreteMeasure mu1 = hktest::interval_measure(sp, -1.0 - kPi, N);
  DiscreteMeasure mu2 = hktest::interval_measure(sp, kPi, N);
  std::vector<Point> cands = default_candidates({mu1, mu2});

  // zero potentials are feasible with value 0
  std::vector<Point> support;
  for (const auto& a : mu1.atoms()) support.push_back(a.point);
  for (const auto& a : mu2.atoms()) support.push_back(a.point);
  PotentialFunction zero = constant_table(support, 0.0);
  CHECK(dual_objective({zero, zero}, {mu1, mu2}, {0.5, 0.5}, cands) == Catch::Approx(0.0));

  // the paper's pair attains 1/2
  PotentialFunction f1 = paper_f1();
  PotentialFunction f2 = f1.negated();
  CHECK(dual_objective({f1, f2}, {mu1, mu2}, {0.5, 0.5}, cands) == Catch::Approx(0.5).margin(1e-9));

  // constraint violation names the residual
  PotentialFunction half = constant_table(support, 0.5);
  CHECK_THROWS_AS(dual_objective({half, zero}, {mu1, mu2}, {0.5, 0.5}, cands), infeasible_error);
  CHECK_THROWS_WITH(dual_objective({half, zero}, {mu1, mu2}, {0.5, 0.5}, cands),
                    Catch::Matchers::ContainsSubstring("residual"));
  CHECK_THROWS_AS(dual_objective({f1, f2}, {mu1, mu2}, {0.5, 0.6}, cands), invalid_input);
}

TEST_CASE("weak duality certificate") {
  auto sp = make_space(GroundSpace::euclidean(1));
  int N = 120;
  DiscreteMeasure mu1 = hktest::interval_measure(sp, -1.0 - kPi, N);
  DiscreteMeasure mu2 = hktest::interval_measure(sp, kPi, N);
  DiscreteMeasure bary = mu1.scaled(0.25) + mu2.scaled(0.25);
  std::vector<Point> cands = default_candidates({mu1, mu2});

  PotentialFunction f1 = paper_f1();
  WeakDualityReport rep = weak_duality_certificate({f1, f1.negated()}, {mu1, mu2}, {0.5, 0.5}, bary, cands);
  CHECK(rep.dual == Catch::Approx(0.5).margin(1e-9));
  CHECK(rep.gap >= -1e-9);
  CHECK(rep.gap <= 0.01);

  // zero potentials: gap equals J(μ) ≥ 0
  std::vector<Point> support;
  for (const auto& a : mu1.atoms()) support.push_back(a.point);
  for (const auto& a : mu2.atoms()) support.push_back(a.point);
  PotentialFunction zero = constant_table(support, 0.0);
  WeakDualityReport rep0 = weak_duality_certificate({zero, zero}, {mu1, mu2}, {0.5, 0.5}, bary, cands);
  CHECK(rep0.dual == 0.0);
  CHECK(rep0.gap == Catch::Approx(rep0.primal));
  CHECK(rep0.gap >= 0.0);
}

TEST_CASE("two-potential dual bound and tightness from a plan") {
  auto sp = make_space(GroundSpace::euclidean(1));
  GroundSpace e1 = *sp;
  Rng rng(113);
  for (int trial = 0; trial < 6; ++trial) {
    // keep the diameter below π/2 so every pair couples and σ > 0
    DiscreteMeasure mu1 = hktest::random_measure(rng, sp, 3, -0.6, 0.6);
    DiscreteMeasure mu2 = hktest::random_measure(rng, sp, 3, -0.6, 0.6);
    auto [plan, rep] = hk_solve(mu1, mu2);
    REQUIRE(rep.converged);

    std::vector<Point> cands;
    for (const auto& a : mu1.atoms()) cands.push_back(a.point);
    for (const auto& a : mu2.atoms()) cands.push_back(a.point);

    PotentialFunction f = recover_potential(plan, mu1);
    double dual = 0.0;
    for (const auto& a : mu1.atoms()) dual += a.mass * f.eval(e1, a.point);
    for (const auto& a : mu2.atoms()) {
      std::vector<Point> own;
      for (const auto& b : mu1.atoms()) own.push_back(b.point);
      dual += a.mass * s_transform(f, e1, a.point, own);
    }
    CHECK(dual <= rep.value + 1e-6);
    CHECK(dual == Catch::Approx(rep.value).margin(1e-6));  // tight at the optimal plan

    // random bounded f keeps the inequality
    PotentialFunction g = random_piecewise(rng, -1.0, 0.8);
    double dual_g = 0.0;
    for (const auto& a : mu1.atoms()) dual_g += a.mass * g.eval(e1, a.point);
    for (const auto& a : mu2.atoms()) {
      std::vector<Point> own;
      for (const auto& b : mu1.atoms()) own.push_back(b.point);
      dual_g += a.mass * s_transform(g, e1, a.point, own);
    }
    CHECK(dual_g <= rep.value + 1e-6);
  }
}

TEST_CASE("potential file round trip and forms") {
  GroundSpace e1 = GroundSpace::euclidean(1);
  std::string path = "/tmp/hk_potential.json";

  hktest::write_file(path, R"({"kind": "piecewise1d",
    "breakpoints": [-1.5707963267948966, 1.5707963267948966],
    "values": [-1.0, 1.0]})");
  PotentialFunction f = read_potential(path, e1);
  CHECK(f.eval(e1, Point::at({0.0})) == Catch::Approx(0.0).margin(1e-15));
  CHECK(f.eval(e1, Point::at({kPi})) == 1.0);
  CHECK(f.eval(e1, Point::at({-9.0})) == -1.0);

  // slopes + anchor variant describes the same function
  hktest::write_file(path, R"({"kind": "piecewise1d",
    "breakpoints": [-1.5707963267948966, 1.5707963267948966],
    "slopes": [0.6366197723675814], "anchor": -1.0})");
  PotentialFunction g = read_potential(path, e1);
  for (double x : {-2.0, -0.4, 0.0, 1.1, 2.5})
    CHECK(g.eval(e1, Point::at({x})) == Catch::Approx(f.eval(e1, Point::at({x}))).margin(1e-12));

  hktest::write_file(path, R"({"kind": "table", "points": [[0.0], [1.0]], "values": [0.25, -0.5]})");
  PotentialFunction t = read_potential(path, e1);
  CHECK(t.eval(e1, Point::at({0.2})) == 0.25);   // nearest support point
  CHECK(t.eval(e1, Point::at({0.9})) == -0.5);
  std::string serialized = potential_to_json(t, e1);
  CHECK(serialized.find("table") != std::string::npos);

  hktest::write_file(path, R"({"kind": "table", "points": [[0.0]], "values": [1.5]})");
  CHECK_THROWS_AS(read_potential(path, e1), invalid_input);  // sup > 1
  std::remove(path.c_str());
}
