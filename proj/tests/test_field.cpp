#include <doctest.h>

#include <cmath>

#include "gyrolab/field.hpp"

using namespace gyrolab;
using namespace gyrolab::field;
using geom::ChartId;
using geom::ChartPoint;
using geom::Profile;

static geom::SurfaceModel sphere() {
  return geom::SurfaceModel::revolution(Profile::from_expression("sin(r)"), M_PI);
}

TEST_CASE("constant field") {
  auto s = sphere();
  FieldSpec b = FieldSpec::constant(2.5);
  CHECK(b.value(s, {ChartId::primary, {1.0, 0.0}}) == 2.5);
  FieldEval e = b.eval2(s, {ChartId::north_cap, {0.01, 0.02}});
  CHECK(e.b == 2.5);
  CHECK(e.grad.norm() == 0.0);
  CHECK(b.min_abs(s) == 2.5);
}

TEST_CASE("radial field matches closed form on the polar chart") {
  auto s = sphere();
  FieldSpec b = FieldSpec::radial("2 + cos(r)");
  double r = 1.1;
  FieldEval e = b.eval2(s, {ChartId::primary, {r, 0.3}});
  CHECK(e.b == doctest::Approx(2 + std::cos(r)).epsilon(1e-14));
  CHECK(e.grad.x == doctest::Approx(-std::sin(r)).epsilon(1e-14));
  CHECK(e.grad.y == 0.0);
  CHECK(e.hess.xx == doctest::Approx(-std::cos(r)).epsilon(1e-14));
  CHECK(e.hess.yy == 0.0);
}

TEST_CASE("radial field in the caps via the chain rule") {
  auto s = sphere();
  FieldSpec b = FieldSpec::radial("2 + cos(r)");
  // value continuity across charts
  ChartPoint p{ChartId::primary, {0.05, 0.8}};
  ChartPoint pc = s.transfer(p, ChartId::north_cap);
  CHECK(b.value(s, pc) == doctest::Approx(b.value(s, p)).epsilon(1e-13));

  // gradient and hessian against finite differences in cap coordinates
  for (auto cap : {ChartId::north_cap, ChartId::south_cap}) {
    Vec2 q{0.021, -0.013};
    FieldEval e = b.eval2(s, {cap, q});
    double d = 1e-5;
    auto val = [&](double x, double y) { return b.value(s, {cap, {x, y}}); };
    CHECK(e.grad.x ==
          doctest::Approx((val(q.x + d, q.y) - val(q.x - d, q.y)) / (2 * d)).epsilon(1e-6));
    CHECK(e.grad.y ==
          doctest::Approx((val(q.x, q.y + d) - val(q.x, q.y - d)) / (2 * d)).epsilon(1e-6));
    double fxx = (val(q.x + d, q.y) - 2 * val(q.x, q.y) + val(q.x - d, q.y)) / (d * d);
    double fyy = (val(q.x, q.y + d) - 2 * val(q.x, q.y) + val(q.x, q.y - d)) / (d * d);
    CHECK(e.hess.xx == doctest::Approx(fxx).epsilon(1e-4));
    CHECK(e.hess.yy == doctest::Approx(fyy).epsilon(1e-4));
  }

  // exact pole: gradient vanishes, hessian is f''(0) I for the north pole
  FieldEval pole = b.eval2(s, {ChartId::north_cap, {0.0, 0.0}});
  CHECK(pole.b == doctest::Approx(3.0));
  CHECK(pole.grad.norm() == 0.0);
  CHECK(pole.hess.xx == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(pole.hess.yy == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(pole.hess.xy == 0.0);
}

TEST_CASE("height affine equals the radial form on the round sphere") {
  auto s = sphere();
  FieldSpec ha = FieldSpec::height_affine(1.0, 2.0);  // b = 2 + z
  FieldSpec rad = FieldSpec::radial("2 + cos(r)");
  for (double r : {0.01, 0.5, 1.4, 2.8, 3.1}) {
    ChartPoint p{ChartId::primary, {r, 0.0}};
    CHECK(ha.value(s, p) == doctest::Approx(rad.value(s, p)).epsilon(1e-10));
    FieldEval a = ha.eval2(s, p), c = rad.eval2(s, p);
    CHECK(a.grad.x == doctest::Approx(c.grad.x).epsilon(1e-9));
    CHECK(a.hess.xx == doctest::Approx(c.hess.xx).epsilon(1e-8));
  }
}

TEST_CASE("resonant family reproduces sqrt(2/(z+3)) on the round sphere") {
  auto s = sphere();
  FieldSpec b = FieldSpec::resonant(0.25, 0.75);
  for (double r : {0.02, 0.7, M_PI / 2, 2.4, 3.0}) {
    double z = std::cos(r);
    CHECK(b.value(s, {ChartId::primary, {r, 0.0}}) ==
          doctest::Approx(std::sqrt(2.0 / (z + 3.0))).epsilon(1e-10));
  }
  CHECK_THROWS_AS(FieldSpec::resonant(1.0, 0.5), geom::DomainError);
}

TEST_CASE("expression field on the torus") {
  auto t = geom::SurfaceModel::flat_torus(2 * M_PI, 2 * M_PI);
  FieldSpec b = FieldSpec::expression("3 + cos(x) + cos(y)");
  FieldEval e = b.eval2(t, {ChartId::primary, {0.9, 1.7}});
  CHECK(e.b == doctest::Approx(3 + std::cos(0.9) + std::cos(1.7)));
  CHECK(e.grad.x == doctest::Approx(-std::sin(0.9)));
  CHECK(e.grad.y == doctest::Approx(-std::sin(1.7)));
  CHECK(e.hess.xx == doctest::Approx(-std::cos(0.9)));
  CHECK(e.hess.yy == doctest::Approx(-std::cos(1.7)));
  CHECK(e.hess.xy == doctest::Approx(0.0));
  // wrap-around evaluation
  CHECK(b.value(t, {ChartId::primary, {0.9 + 2 * M_PI, 1.7 - 2 * M_PI}}) ==
        doctest::Approx(e.b).epsilon(1e-13));
  CHECK(b.min_abs(t) == doctest::Approx(1.0).epsilon(1e-3));

  FieldSpec z = FieldSpec::expression("cos(x)");
  CHECK(z.min_abs(t) < 0.05);
}
