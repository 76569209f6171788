#include <catch2/catch_amalgamated.hpp>

#include "hk/geodesics.hpp"
#include "test_support.hpp"

using namespace hk;

TEST_CASE("hellinger curve endpoints and midpoint") {
  auto sp = make_space(GroundSpace::euclidean(1));
  Point x1 = Point::at({0.0}), x2 = Point::at({kPi / 2});
  double a1 = 1.3, a2 = 0.7;

  DiscreteMeasure at0 = hellinger_curve(sp, a1, x1, a2, x2, 0.0);
  REQUIRE(at0.size() == 1);
  CHECK(at0.atoms()[0].mass == a1);
  CHECK(at0.atoms()[0].point[0] == 0.0);

  DiscreteMeasure at1 = hellinger_curve(sp, a1, x1, a2, x2, 1.0);
  REQUIRE(at1.size() == 1);
  CHECK(at1.atoms()[0].mass == a2);

  DiscreteMeasure mid = hellinger_curve(sp, a1, x1, a2, x2, 0.5);
  REQUIRE(mid.size() == 2);
  CHECK(mid.atoms()[0].mass == Catch::Approx(a1 / 4));
  CHECK(mid.atoms()[1].mass == Catch::Approx(a2 / 4));

  CHECK_THROWS_AS(hellinger_curve(sp, a1, x1, a2, x2, 1.5), invalid_input);
  CHECK_THROWS_AS(hellinger_curve(sp, 0.0, x1, a2, x2, 0.5), invalid_input);
}

TEST_CASE("transport curve") {
  auto sp = make_space(GroundSpace::euclidean(1));
  Point x1 = Point::at({0.0}), x2 = Point::at({kPi / 2});

  DiscreteMeasure at0 = transport_curve(sp, 1.0, x1, 1.0, x2, 0.0);
  CHECK(at0.atoms()[0].point[0] == 0.0);
  CHECK(at0.atoms()[0].mass == 1.0);

  DiscreteMeasure at1 = transport_curve(sp, 1.0, x1, 1.0, x2, 1.0);  // branch convention p(1) = 1
  CHECK(at1.atoms()[0].point[0] == Catch::Approx(kPi / 2));
  CHECK(at1.atoms()[0].mass == 1.0);

  DiscreteMeasure mid = transport_curve(sp, 1.0, x1, 1.0, x2, 0.5);
  REQUIRE(mid.size() == 1);
  CHECK(mid.atoms()[0].point[0] == Catch::Approx(kPi / 4));  // arctan(1) = π/4, p = 1/2
  CHECK(mid.atoms()[0].mass == Catch::Approx(0.5));

  CHECK_THROWS_AS(transport_curve(sp, 1.0, x1, 1.0, Point::at({1.0}), 0.5), invalid_input);
}

TEST_CASE("constant speed verification") {
  auto sp = make_space(GroundSpace::euclidean(1));
  Point x1 = Point::at({0.0}), x2 = Point::at({kPi / 2});
  std::vector<double> samples = {0.0, 0.25, 0.5, 0.75, 1.0};

  DiracGeodesic hell(DiracGeodesic::Kind::hellinger, sp, 1.0, x1, 1.0, x2);
  GeodesicReport hrep = verify_geodesic(hell, samples);
  CHECK(hrep.endpoint_distance == Catch::Approx(std::sqrt(2.0)).margin(1e-6));
  CHECK(hrep.max_relative_deviation <= 1e-5);

  DiracGeodesic trans(DiracGeodesic::Kind::transport, sp, 1.0, x1, 1.0, x2);
  GeodesicReport trep = verify_geodesic(trans, samples);
  CHECK(trep.max_relative_deviation <= 1e-5);

  DiracGeodesic degenerate(DiracGeodesic::Kind::hellinger, sp, 1.0, x1, 1.0, x1);
  GeodesicReport drep = verify_geodesic(degenerate, samples);
  CHECK(drep.endpoint_distance == Catch::Approx(0.0).margin(1e-9));
  CHECK(drep.max_relative_deviation <= 1e-9);
}

TEST_CASE("both curves minimize the interpolation problem") {
  auto sp = make_space(GroundSpace::euclidean(1));
  Point x1 = Point::at({0.0}), x2 = Point::at({kPi / 2});
  DiscreteMeasure mu1(sp, {Atom{x1, 1.0}});
  DiscreteMeasure mu2(sp, {Atom{x2, 1.0}});
  for (double t : {0.25, 0.5, 0.75}) {
    DiscreteMeasure h = hellinger_curve(sp, 1.0, x1, 1.0, x2, t);
    DiscreteMeasure tr = transport_curve(sp, 1.0, x1, 1.0, x2, t);
    double Jh = hktest::barycenter_J(h, {mu1, mu2}, {1.0 - t, t});
    double Jt = hktest::barycenter_J(tr, {mu1, mu2}, {1.0 - t, t});
    double expect = 2.0 * t * (1.0 - t);
    CHECK(std::abs(Jh - expect) <= 1e-5);
    CHECK(std::abs(Jt - expect) <= 1e-5);
    CHECK(std::abs(Jh - Jt) <= 1e-5);
  }
}
