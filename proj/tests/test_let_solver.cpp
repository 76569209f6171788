#include <catch2/catch_amalgamated.hpp>

#include "hk/let_solver.hpp"
#include "test_support.hpp"

using namespace hk;

namespace {

// scalar oracle for the 1x1 instance: minimize F(m/a)a + F(m/b)b + m ℓ(d)
double scan_1x1(double a, double b, double d) {
  double ell = ell_cost(d);
  if (ell == kInfinity) return a + b;
  double best = a + b;  // m = 0
  for (double m = 1e-10; m < 4.0 * std::sqrt(a * b); m += 1e-5) {
    double v = let_entropy(m / a) * a + let_entropy(m / b) * b + m * ell;
    best = std::min(best, v);
  }
  return best;
}

}  // namespace

TEST_CASE("let entropy") {
  CHECK(let_entropy(1.0) == 0.0);
  CHECK(let_entropy(0.0) == 1.0);
  CHECK(let_entropy(2.0) == Catch::Approx(2.0 * std::log(2.0) - 1.0));
  CHECK_THROWS_AS(let_entropy(-0.5), invalid_input);
  // convex: midpoint below chord
  for (double s : {0.2, 0.7, 1.9}) {
    double mid = let_entropy((s + s + 1.0) / 2.0);
    CHECK(mid <= 0.5 * (let_entropy(s) + let_entropy(s + 1.0)) + 1e-15);
  }
}

TEST_CASE("let objective basics") {
  auto sp = make_space(GroundSpace::euclidean(1));
  Rng rng(41);
  DiscreteMeasure mu1 = hktest::random_measure(rng, sp, 4);
  DiscreteMeasure mu2 = hktest::random_measure(rng, sp, 3);

  TransportPlan zero = TransportPlan::from_entries(mu1, mu2, std::vector<double>(12, 0.0));
  CHECK(let_objective(mu1, mu2, zero) == Catch::Approx(mu1.total_mass() + mu2.total_mass()));

  std::vector<double> diag(mu1.size() * mu1.size(), 0.0);
  for (std::size_t j = 0; j < mu1.size(); ++j) diag[j * mu1.size() + j] = mu1.atoms()[j].mass;
  TransportPlan identity = TransportPlan::from_entries(mu1, mu1, std::move(diag));
  CHECK(let_objective(mu1, mu1, identity) == Catch::Approx(0.0).margin(1e-14));

  CHECK_THROWS_AS(let_objective(mu2, mu1, zero), invalid_input);
}

TEST_CASE("let objective on the interval barycenter plan") {
  // mu = 1/4 mu1 + 1/4 mu2 on the two unit intervals, reference mu1,
  // plan (1/2)(Id,Id)# mu1: the value is 1/2
  auto sp = make_space(GroundSpace::euclidean(1));
  int N = 200;
  DiscreteMeasure mu1 = hktest::interval_measure(sp, -1.0 - kPi, N);
  DiscreteMeasure mu2 = hktest::interval_measure(sp, kPi, N);
  DiscreteMeasure mu = mu1.scaled(0.25) + mu2.scaled(0.25);

  // mu keeps mu1's atoms first, in order
  std::vector<double> entries(mu.size() * mu1.size(), 0.0);
  for (int j = 0; j < N; ++j) entries[j * mu1.size() + j] = 0.5 / N;
  TransportPlan plan = TransportPlan::from_entries(mu, mu1, std::move(entries));
  CHECK(let_objective(mu, mu1, plan) == Catch::Approx(0.5).margin(1e-12));

  // and the plan is optimal: certificate clean on and off support
  OptimalityCertificate cert = certify(plan, mu, mu1);
  CHECK(cert.on_support <= 1e-12);
  CHECK(cert.off_support <= 1e-12);
}

TEST_CASE("dirac closed form") {
  auto sp = make_space(GroundSpace::euclidean(1));
  Point x0 = Point::at({0.0}), x1 = Point::at({1.0});
  CHECK(hk_dirac_formula(*sp, 1.0, 1.0, 0.0, x0, x0) == Catch::Approx(0.0).margin(1e-15));
  CHECK(hk_dirac_formula(*sp, 1.0, 0.0, 1.0, x0, Point::at({2.0})) == Catch::Approx(2.0));
  double a = 1.7, b = 0.6, d = 0.9;
  double expect = 1.0 + a + b - 2.0 * std::sqrt(a + b * std::cos(d) * std::cos(d));
  CHECK(hk_dirac_formula(*sp, 1.0, a, b, x0, Point::at({d})) == Catch::Approx(expect));
  CHECK_THROWS_AS(hk_dirac_formula(*sp, -1.0, 0.0, 1.0, x0, x1), invalid_input);
}

TEST_CASE("hk_solve basics") {
  auto sp = make_space(GroundSpace::euclidean(1));
  Rng rng(43);
  DiscreteMeasure mu = hktest::random_measure(rng, sp, 5);

  auto [plan0, rep0] = hk_solve(mu, mu);
  CHECK(rep0.value == Catch::Approx(0.0).margin(1e-10));
  CHECK(rep0.converged);

  auto [plan1, rep1] = hk_solve(mu, DiscreteMeasure::null(sp));
  CHECK(rep1.value == Catch::Approx(mu.total_mass()));
  CHECK(rep1.method == "closed-form");

  DiscreteMeasure d0(sp, {Atom{Point::at({0.0}), 1.0}});
  DiscreteMeasure d1(sp, {Atom{Point::at({1.0}), 1.0}});
  auto [plan2, rep2] = hk_solve(d0, d1);
  CHECK(rep2.value == Catch::Approx(2.0 - 2.0 * std::cos(1.0)).margin(1e-9));
  CHECK(rep2.value == Catch::Approx(hk_dirac_formula(*sp, 1.0, 0.0, 1.0, Point::at({0.0}),
                                                     Point::at({1.0})))
                          .margin(1e-9));
  CHECK(rep2.value == Catch::Approx(let_oracle(d0, d1).second).margin(1e-6));
}

TEST_CASE("hk_solve requires a common space") {
  auto sp1 = make_space(GroundSpace::euclidean(1));
  auto sp2 = make_space(GroundSpace::euclidean(2));
  DiscreteMeasure a(sp1, {Atom{Point::at({0.0}), 1.0}});
  DiscreteMeasure b(sp2, {Atom{Point::at({0.0, 0.0}), 1.0}});
  CHECK_THROWS_AS(hk_solve(a, b), invalid_input);
}

TEST_CASE("oracle on 1x1 instances matches scalar minimization") {
  auto sp = make_space(GroundSpace::euclidean(1));
  Rng rng(47);
  for (int trial = 0; trial < 5; ++trial) {
    double a = rng.uniform(0.2, 3.0), b = rng.uniform(0.2, 3.0), d = rng.uniform(0.1, 1.4);
    DiscreteMeasure mu1(sp, {Atom{Point::at({0.0}), a}});
    DiscreteMeasure mu2(sp, {Atom{Point::at({d}), b}});
    auto [plan, val] = let_oracle(mu1, mu2);
    double closed = a + b - 2.0 * std::sqrt(a * b) * std::cos(d);
    CHECK(val == Catch::Approx(closed).margin(1e-8));
    CHECK(val == Catch::Approx(scan_1x1(a, b, d)).margin(1e-7));
  }
}

TEST_CASE("oracle with all pairs beyond pi/2") {
  auto sp = make_space(GroundSpace::euclidean(1));
  DiscreteMeasure mu1(sp, {Atom{Point::at({0.0}), 1.2}, Atom{Point::at({0.3}), 0.8}});
  DiscreteMeasure mu2(sp, {Atom{Point::at({5.0}), 0.5}, Atom{Point::at({6.0}), 1.5}});
  auto [plan, val] = let_oracle(mu1, mu2);
  CHECK(val == Catch::Approx(4.0));
  for (double g : plan.entries) CHECK(g == 0.0);
}

TEST_CASE("oracle rejects large supports") {
  auto sp = make_space(GroundSpace::euclidean(1));
  Rng rng(53);
  DiscreteMeasure big = hktest::random_measure(rng, sp, 9);
  DiscreteMeasure small = hktest::random_measure(rng, sp, 2);
  CHECK_THROWS_AS(let_oracle(big, small), invalid_input);
}

TEST_CASE("solver agrees with the oracle on random instances") {
  Rng rng(59);
  for (int trial = 0; trial < 25; ++trial) {
    auto sp = make_space(GroundSpace::euclidean(1 + trial % 2));
    DiscreteMeasure mu1 = hktest::random_measure(rng, sp, 1 + (int)rng.index(3));
    DiscreteMeasure mu2 = hktest::random_measure(rng, sp, 1 + (int)rng.index(3));
    auto [plan, rep] = hk_solve(mu1, mu2);
    auto [oplan, oval] = let_oracle(mu1, mu2);
    CHECK(std::abs(rep.value - oval) <= 1e-5);
  }
}

TEST_CASE("certify examples") {
  auto sp = make_space(GroundSpace::euclidean(1));
  Rng rng(61);
  DiscreteMeasure mu = hktest::random_measure(rng, sp, 4);

  std::vector<double> diag(16, 0.0);
  for (std::size_t j = 0; j < 4; ++j) diag[j * 4 + j] = mu.atoms()[j].mass;
  TransportPlan plan = TransportPlan::from_entries(mu, mu, std::move(diag));
  OptimalityCertificate cert = certify(plan, mu, mu);
  CHECK(cert.on_support == Catch::Approx(0.0).margin(1e-14));
  CHECK(cert.off_support == Catch::Approx(0.0).margin(1e-14));

  // deliberate perturbation: moving diagonal mass breaks the on-support identity
  std::vector<double> bad(16, 0.0);
  for (std::size_t j = 0; j < 4; ++j) bad[j * 4 + j] = mu.atoms()[j].mass * (j == 0 ? 1.4 : 1.0);
  TransportPlan plan_bad = TransportPlan::from_entries(mu, mu, std::move(bad));
  CHECK(certify(plan_bad, mu, mu).on_support > 0.1);
}

TEST_CASE("metric axioms at solver precision") {
  Rng rng(67);
  auto sp = make_space(GroundSpace::euclidean(1));
  for (int trial = 0; trial < 8; ++trial) {
    DiscreteMeasure a = hktest::random_measure(rng, sp, 3);
    DiscreteMeasure b = hktest::random_measure(rng, sp, 3);
    DiscreteMeasure c = hktest::random_measure(rng, sp, 3);
    double dab = std::sqrt(hk_solve(a, b).second.value);
    double dba = std::sqrt(hk_solve(b, a).second.value);
    double dac = std::sqrt(hk_solve(a, c).second.value);
    double dcb = std::sqrt(hk_solve(c, b).second.value);
    CHECK(std::abs(dab - dba) <= 1e-9);
    CHECK(dab <= dac + dcb + 2e-5);
  }
}

TEST_CASE("mass scaling homogeneity") {
  Rng rng(71);
  auto sp = make_space(GroundSpace::euclidean(2));
  DiscreteMeasure a = hktest::random_measure(rng, sp, 4);
  DiscreteMeasure b = hktest::random_measure(rng, sp, 5);
  double base = hk_solve(a, b).second.value;
  for (double s : {0.3, 2.0, 7.5}) {
    double scaled = hk_solve(a.scaled(s), b.scaled(s)).second.value;
    CHECK(std::abs(scaled - s * base) <= 1e-8 * (1.0 + s * base));
  }
}

TEST_CASE("upper bound by the zero plan") {
  Rng rng(73);
  auto sp = make_space(GroundSpace::euclidean(1));
  for (int trial = 0; trial < 10; ++trial) {
    DiscreteMeasure a = hktest::random_measure(rng, sp, 1 + (int)rng.index(6), -4.0, 4.0);
    DiscreteMeasure b = hktest::random_measure(rng, sp, 1 + (int)rng.index(6), -4.0, 4.0);
    CHECK(hk_solve(a, b).second.value <= a.total_mass() + b.total_mass() + 1e-9);
  }
}

TEST_CASE("regularization path decreases to the oracle value") {
  Rng rng(79);
  auto sp = make_space(GroundSpace::euclidean(1));
  DiscreteMeasure a = hktest::random_measure(rng, sp, 4);
  DiscreteMeasure b = hktest::random_measure(rng, sp, 4);
  SolverOptions opts;
  opts.tolerance = 1e-7;
  auto [plan, rep] = hk_solve(a, b, opts);
  REQUIRE(rep.stage_values.size() == rep.regularization_path.size());
  for (std::size_t i = 1; i < rep.stage_values.size(); ++i)
    CHECK(rep.stage_values[i] <= rep.stage_values[i - 1] + 1e-9);
  auto [oplan, oval] = let_oracle(a, b);
  CHECK(std::abs(rep.value - oval) <= opts.tolerance);
}

TEST_CASE("dirac family reproduces the closed form") {
  Rng rng(83);
  for (int trial = 0; trial < 20; ++trial) {
    auto sp = make_space(GroundSpace::euclidean(1 + trial % 3));
    int dim = 1 + trial % 3;
    std::vector<double> c0(dim), c1(dim);
    for (auto& v : c0) v = rng.uniform(-2.0, 2.0);
    for (auto& v : c1) v = rng.uniform(-2.0, 2.0);
    Point x0 = Point::at(c0), x1 = Point::at(c1);
    double a = rng.uniform(0.1, 3.0), a1 = rng.uniform(0.0, 2.0), b1 = rng.uniform(0.1, 3.0);
    DiscreteMeasure mu1(sp, {Atom{x0, a}});
    std::vector<Atom> atoms2;
    if (a1 > 0.0) atoms2.push_back(Atom{x0, a1});
    atoms2.push_back(Atom{x1, b1});
    DiscreteMeasure mu2(sp, atoms2);
    double closed = hk_dirac_formula(*sp, a, a1, b1, x0, x1);
    CHECK(std::abs(hk_solve(mu1, mu2).second.value - closed) <= 1e-6);
  }
}

TEST_CASE("plan invariants") {
  auto sp = make_space(GroundSpace::euclidean(1));
  Rng rng(89);
  DiscreteMeasure a = hktest::random_measure(rng, sp, 5);
  DiscreteMeasure b = hktest::random_measure(rng, sp, 4);
  auto [plan, rep] = hk_solve(a, b);
  for (std::size_t j = 0; j < plan.rows; ++j) {
    double sum = 0.0;
    for (std::size_t k = 0; k < plan.cols; ++k) sum += plan.at(j, k);
    CHECK(std::abs(sum - plan.marginal1[j]) <= 1e-12);
  }
  for (double g : plan.entries) CHECK(g >= 0.0);
  // no mass on infinite costs
  for (std::size_t j = 0; j < plan.rows; ++j)
    for (std::size_t k = 0; k < plan.cols; ++k)
      if (cos2_halfpi(*sp, a.atoms()[j].point, b.atoms()[k].point) == 0.0)
        CHECK(plan.at(j, k) == 0.0);
  CHECK_THROWS_AS(TransportPlan::from_entries(a, b, std::vector<double>(3, 0.0)), invalid_input);
  CHECK_THROWS_AS(TransportPlan::from_entries(a, b, std::vector<double>(20, -1.0)), invalid_input);
}
