#include <doctest.h>

#include <cmath>

#include "gyrolab/geometry.hpp"

using namespace gyrolab;
using namespace gyrolab::geom;

static SurfaceModel round_sphere() {
  return SurfaceModel::revolution(Profile::from_expression("sin(r)"), M_PI);
}

static SurfaceModel bumpy_sphere() {
  // a(0)=0, a'(0)=1, a(pi)=0, a'(pi)=-1 all hold; breaks the round symmetry
  return SurfaceModel::revolution(Profile::from_expression("sin(r) + 0.1*sin(r)^3"), M_PI);
}

TEST_CASE("round sphere metric coefficients") {
  SurfaceModel s = round_sphere();
  MetricJet m = s.metric_jet({ChartId::primary, {M_PI / 3, 0.4}});
  CHECK(m.E == doctest::Approx(1.0));
  CHECK(m.F == doctest::Approx(0.0));
  CHECK(m.G == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(m.dG.x == doctest::Approx(std::sqrt(3.0) / 2).epsilon(1e-14));
  CHECK(m.dG.y == doctest::Approx(0.0));
  CHECK(m.det() == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(m.density() == doctest::Approx(std::sin(M_PI / 3)).epsilon(1e-14));
}

TEST_CASE("flat torus metric is euclidean") {
  SurfaceModel t = SurfaceModel::flat_torus(2 * M_PI, 2 * M_PI);
  MetricJet m = t.metric_jet({ChartId::primary, {1.0, 5.0}});
  CHECK(m.E == 1.0);
  CHECK(m.F == 0.0);
  CHECK(m.G == 1.0);
  CHECK(m.dE.x == 0.0);
  CHECK(t.gauss_curvature({ChartId::primary, {1.0, 5.0}}) == 0.0);
  CHECK(t.area() == doctest::Approx(4 * M_PI * M_PI));
}

TEST_CASE("sphere curvature is one everywhere including caps") {
  SurfaceModel s = round_sphere();
  for (double r : {0.002, 0.005, 0.02, 0.3, M_PI / 2, 2.9, M_PI - 0.004}) {
    CHECK(s.curvature_radial(r) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(s.curvature_radial_d(r) == doctest::Approx(0.0).epsilon(1e-8));
  }
  double K0, K2;
  s.curvature_pole(true, K0, K2);
  CHECK(K0 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(K2 == doctest::Approx(0.0).epsilon(1e-10));
  s.curvature_pole(false, K0, K2);
  CHECK(K0 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.gauss_curvature({ChartId::north_cap, {0.01, -0.02}}) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(s.gauss_curvature({ChartId::south_cap, {0.03, 0.01}}) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("total curvature obeys gauss-bonnet") {
  CHECK(total_curvature(round_sphere()).value == doctest::Approx(4 * M_PI).epsilon(1e-10));
  CHECK(total_curvature(bumpy_sphere()).value == doctest::Approx(4 * M_PI).epsilon(1e-8));
  SurfaceModel t = SurfaceModel::flat_torus(2 * M_PI, 2 * M_PI);
  CHECK(total_curvature(t).value == doctest::Approx(0.0));
  SurfaceModel c = SurfaceModel::flat_torus_conformal(2 * M_PI, 2 * M_PI, "1 + 0.3*cos(x)*cos(y)");
  CHECK(total_curvature(c).value == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("sphere area height and moment") {
  SurfaceModel s = round_sphere();
  CHECK(s.area() == doctest::Approx(4 * M_PI).epsilon(1e-12));
  for (double r : {0.004, 0.3, 1.0, 2.0, M_PI - 0.01}) {
    CHECK(s.height(r) == doctest::Approx(std::cos(r)).epsilon(1e-11));
    CHECK(s.height_d1(r) == doctest::Approx(-std::sin(r)).epsilon(1e-10));
    CHECK(s.height_d2(r) == doctest::Approx(-std::cos(r)).epsilon(1e-9));
    CHECK(s.moment(r) == doctest::Approx(std::cos(r)).epsilon(1e-11));
    CHECK(s.moment_d1(r) == doctest::Approx(-std::sin(r)).epsilon(1e-11));
    CHECK(s.moment_d2(r) == doctest::Approx(-std::cos(r)).epsilon(1e-11));
  }
  CHECK(s.height(0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.height(M_PI) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(s.moment(0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.moment(M_PI) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("cap conditions are validated") {
  CHECK_THROWS_AS(SurfaceModel::revolution(Profile::from_expression("sin(r)"), 3.0), DomainError);
  CHECK_THROWS_AS(
      SurfaceModel::revolution(Profile::from_expression("sin(r) + 0.01*sin(2*r)"), M_PI),
      DomainError);
  CHECK_THROWS_AS(SurfaceModel::revolution(Profile::from_expression("2*sin(r)"), M_PI),
                  DomainError);
  CHECK_THROWS_AS(SurfaceModel::revolution(Profile::from_expression("sin(r)"), -1.0), DomainError);
}

TEST_CASE("polar chart domain is enforced") {
  SurfaceModel s = round_sphere();
  double eps = s.cap_eps();
  CHECK_THROWS_AS(s.metric_jet({ChartId::primary, {eps / 2, 0.0}}), DomainError);
  CHECK_THROWS_AS(s.metric_jet({ChartId::primary, {M_PI - eps / 2, 0.0}}), DomainError);
  CHECK_THROWS_AS(s.metric_jet({ChartId::north_cap, {0.5, 0.5}}), DomainError);
  CHECK_NOTHROW(s.metric_jet({ChartId::north_cap, {0.05, 0.05}}));
}

TEST_CASE("chart transfers round trip") {
  SurfaceModel s = bumpy_sphere();
  ChartPoint p{ChartId::primary, {0.06, 0.7}};
  ChartPoint n = s.transfer(p, ChartId::north_cap);
  CHECK(n.q.norm() == doctest::Approx(0.06).epsilon(1e-13));
  ChartPoint back = s.transfer(n, ChartId::primary);
  CHECK(back.q.x == doctest::Approx(p.q.x).epsilon(1e-13));
  CHECK(back.q.y == doctest::Approx(p.q.y).epsilon(1e-13));

  ChartPoint ps{ChartId::primary, {M_PI - 0.08, -1.3}};
  ChartPoint sc = s.transfer(ps, ChartId::south_cap);
  CHECK(sc.q.norm() == doctest::Approx(0.08).epsilon(1e-13));
  ChartPoint back2 = s.transfer(sc, ChartId::primary);
  CHECK(back2.q.x == doctest::Approx(ps.q.x).epsilon(1e-13));
  CHECK(back2.q.y == doctest::Approx(ps.q.y).epsilon(1e-12));
}

TEST_CASE("velocity transfers preserve the metric norm") {
  SurfaceModel s = bumpy_sphere();
  for (auto cap : {ChartId::north_cap, ChartId::south_cap}) {
    double r0 = (cap == ChartId::north_cap) ? 0.07 : M_PI - 0.07;
    ChartPoint p{ChartId::primary, {r0, 0.9}};
    Vec2 v{0.3, -0.2};
    double n_primary = s.metric_jet(p).norm(v);
    ChartPoint pc = s.transfer(p, cap);
    Vec2 vc = s.transfer_velocity(p, v, cap);
    double n_cap = s.metric_jet(pc).norm(vc);
    CHECK(n_cap == doctest::Approx(n_primary).epsilon(1e-12));
    Vec2 vback = s.transfer_velocity(pc, vc, ChartId::primary);
    CHECK(vback.x == doctest::Approx(v.x).epsilon(1e-12));
    CHECK(vback.y == doctest::Approx(v.y).epsilon(1e-12));
  }
}

TEST_CASE("chart transitions preserve orientation") {
  // finite-difference jacobian determinant of the transfer must be positive
  SurfaceModel s = round_sphere();
  for (auto cap : {ChartId::north_cap, ChartId::south_cap}) {
    double r0 = (cap == ChartId::north_cap) ? 0.06 : M_PI - 0.06;
    double d = 1e-6;
    ChartPoint p{ChartId::primary, {r0, 0.5}};
    auto f = [&](double dr, double dphi) {
      return s.transfer({ChartId::primary, {r0 + dr, 0.5 + dphi}}, cap).q;
    };
    Vec2 fr = (f(d, 0) - f(-d, 0)) * (1.0 / (2 * d));
    Vec2 fp = (f(0, d) - f(0, -d)) * (1.0 / (2 * d));
    double det = fr.x * fp.y - fr.y * fp.x;
    CHECK(det > 0.0);
    // analytic velocity transfer agrees with the jacobian columns
    Vec2 vr = s.transfer_velocity(p, {1.0, 0.0}, cap);
    Vec2 vp = s.transfer_velocity(p, {0.0, 1.0}, cap);
    CHECK(vr.x == doctest::Approx(fr.x).epsilon(1e-7));
    CHECK(vr.y == doctest::Approx(fr.y).epsilon(1e-7));
    CHECK(vp.x == doctest::Approx(fp.x).epsilon(1e-7));
    CHECK(vp.y == doctest::Approx(fp.y).epsilon(1e-7));
  }
}

TEST_CASE("perp rotates by a positive quarter turn") {
  SurfaceModel s = round_sphere();
  MetricJet m = s.metric_jet({ChartId::primary, {1.1, 0.0}});
  Vec2 v{0.4, 0.9};
  Vec2 w = m.perp(v);
  CHECK(m.inner(v, w) == doctest::Approx(0.0).epsilon(1e-13));
  CHECK(m.norm(w) == doctest::Approx(m.norm(v)).epsilon(1e-13));
  Vec2 ww = m.perp(w);
  CHECK(ww.x == doctest::Approx(-v.x).epsilon(1e-12));
  CHECK(ww.y == doctest::Approx(-v.y).epsilon(1e-12));
  // (v, perp v) is positively oriented in chart coordinates
  CHECK(v.x * w.y - v.y * w.x > 0.0);
}

TEST_CASE("christoffel symbols of the sphere") {
  SurfaceModel s = round_sphere();
  double r = 0.8;
  Christoffel g = christoffel_from(s.metric_first({ChartId::primary, {r, 0.0}}));
  CHECK(g.gamma[0][1][1] == doctest::Approx(-std::sin(r) * std::cos(r)).epsilon(1e-12));
  CHECK(g.gamma[1][0][1] == doctest::Approx(std::cos(r) / std::sin(r)).epsilon(1e-12));
  CHECK(g.gamma[1][1][0] == doctest::Approx(std::cos(r) / std::sin(r)).epsilon(1e-12));
  CHECK(g.gamma[0][0][0] == doctest::Approx(0.0));
  CHECK(g.gamma[0][0][1] == doctest::Approx(0.0));
}

TEST_CASE("cap metric derivatives match finite differences") {
  SurfaceModel s = bumpy_sphere();
  double d = 1e-5;
  for (auto cap : {ChartId::north_cap, ChartId::south_cap}) {
    for (Vec2 q : {Vec2{0.020, -0.015}, Vec2{0.002, 0.003}, Vec2{0.08, 0.05}}) {
      auto E = [&](double x, double y) { return s.metric_jet({cap, {x, y}}).E; };
      auto F = [&](double x, double y) { return s.metric_jet({cap, {x, y}}).F; };
      auto G = [&](double x, double y) { return s.metric_jet({cap, {x, y}}).G; };
      MetricJet m = s.metric_jet({cap, q});
      CHECK(m.dE.x == doctest::Approx((E(q.x + d, q.y) - E(q.x - d, q.y)) / (2 * d)).epsilon(5e-6));
      CHECK(m.dE.y == doctest::Approx((E(q.x, q.y + d) - E(q.x, q.y - d)) / (2 * d)).epsilon(5e-6));
      CHECK(m.dF.x == doctest::Approx((F(q.x + d, q.y) - F(q.x - d, q.y)) / (2 * d)).epsilon(5e-6));
      CHECK(m.dF.y == doctest::Approx((F(q.x, q.y + d) - F(q.x, q.y - d)) / (2 * d)).epsilon(5e-6));
      CHECK(m.dG.x == doctest::Approx((G(q.x + d, q.y) - G(q.x - d, q.y)) / (2 * d)).epsilon(5e-6));
      CHECK(m.dG.y == doctest::Approx((G(q.x, q.y + d) - G(q.x, q.y - d)) / (2 * d)).epsilon(5e-6));
      // second derivatives against differences of the analytic gradient
      auto dEx = [&](double x, double y) { return s.metric_jet({cap, {x, y}}).dE.x; };
      auto dEy = [&](double x, double y) { return s.metric_jet({cap, {x, y}}).dE.y; };
      auto dFx = [&](double x, double y) { return s.metric_jet({cap, {x, y}}).dF.x; };
      CHECK(m.d2E.xx ==
            doctest::Approx((dEx(q.x + d, q.y) - dEx(q.x - d, q.y)) / (2 * d)).epsilon(2e-5));
      CHECK(m.d2E.yy ==
            doctest::Approx((dEy(q.x, q.y + d) - dEy(q.x, q.y - d)) / (2 * d)).epsilon(2e-5));
      CHECK(m.d2E.xy ==
            doctest::Approx((dEx(q.x, q.y + d) - dEx(q.x, q.y - d)) / (2 * d)).epsilon(2e-5));
      CHECK(m.d2F.xy ==
            doctest::Approx((dFx(q.x, q.y + d) - dFx(q.x, q.y - d)) / (2 * d)).epsilon(2e-5));
    }
  }
}

TEST_CASE("cap metric agrees with polar chart on overlap") {
  SurfaceModel s = bumpy_sphere();
  // compare the norm of a fixed tangent vector through both chart routes
  for (double r0 : {0.02, 0.05, 0.11}) {
    ChartPoint p{ChartId::primary, {r0, 1.234}};
    Vec2 v{0.81, 0.37};
    double want = s.metric_jet(p).norm(v);
    ChartPoint pc = s.transfer(p, ChartId::north_cap);
    Vec2 vc = s.transfer_velocity(p, v, ChartId::north_cap);
    CHECK(s.metric_jet(pc).norm(vc) == doctest::Approx(want).epsilon(1e-11));
  }
}

TEST_CASE("preferred chart hysteresis") {
  SurfaceModel s = round_sphere();
  double in = s.switch_to_cap_radius(), out = s.switch_to_primary_radius();
  CHECK(in < out);
  CHECK(s.preferred_chart({ChartId::primary, {in * 0.9, 0.0}}) == ChartId::north_cap);
  CHECK(s.preferred_chart({ChartId::primary, {out * 2, 0.0}}) == ChartId::primary);
  CHECK(s.preferred_chart({ChartId::primary, {M_PI - in * 0.9, 0.0}}) == ChartId::south_cap);
  CHECK(s.preferred_chart({ChartId::north_cap, {out * 0.7, 0.0}}) == ChartId::north_cap);
  CHECK(s.preferred_chart({ChartId::north_cap, {out * 1.1, 0.0}}) == ChartId::primary);
}

TEST_CASE("embedding of the round sphere") {
  SurfaceModel s = round_sphere();
  Vec3 p = s.embed({ChartId::primary, {M_PI / 4, 0.3}});
  CHECK(p.x == doctest::Approx(std::sin(M_PI / 4) * std::cos(0.3)));
  CHECK(p.y == doctest::Approx(std::sin(M_PI / 4) * std::sin(0.3)));
  CHECK(p.z == doctest::Approx(std::cos(M_PI / 4)).epsilon(1e-10));
  // antipodal poles sit a diameter apart
  double diam = s.distance({ChartId::north_cap, {0.0, 0.0}}, {ChartId::south_cap, {0.0, 0.0}});
  CHECK(diam == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("torus distance uses the minimum image") {
  SurfaceModel t = SurfaceModel::flat_torus(2 * M_PI, 2 * M_PI);
  double d = t.distance({ChartId::primary, {0.1, 0.0}}, {ChartId::primary, {2 * M_PI - 0.1, 0.0}});
  CHECK(d == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("density integration over regions") {
  SurfaceModel t = SurfaceModel::flat_torus(2 * M_PI, 2 * M_PI);
  auto one = [](const ChartPoint&) { return 1.0; };
  IntegralResult full = integrate_density(t, one, Region::full());
  CHECK(full.value == doctest::Approx(4 * M_PI * M_PI).epsilon(1e-12));
  IntegralResult rect =
      integrate_density(t, one, Region::rect(ChartId::primary, {0, 0}, {1.0, 2.0}));
  CHECK(rect.value == doctest::Approx(2.0).epsilon(1e-12));

  SurfaceModel s = round_sphere();
  IntegralResult area = integrate_density(s, one, Region::full());
  CHECK(area.value == doctest::Approx(4 * M_PI).epsilon(1e-10));
  CHECK(area.warnings.empty());
  Region clipped = Region::full();
  clipped.cap_correction = false;
  IntegralResult clippedArea = integrate_density(s, one, clipped);
  CHECK_FALSE(clippedArea.warnings.empty());
  CHECK(clippedArea.value < area.value);
}

TEST_CASE("conformal torus metric and curvature") {
  SurfaceModel c = SurfaceModel::flat_torus_conformal(2 * M_PI, 2 * M_PI, "1 + 0.5*cos(x)");
  MetricJet m = c.metric_jet({ChartId::primary, {0.7, 0.2}});
  double psi = 1 + 0.5 * std::cos(0.7);
  CHECK(m.E == doctest::Approx(psi));
  CHECK(m.G == doctest::Approx(psi));
  CHECK(m.F == 0.0);
  CHECK(m.dE.x == doctest::Approx(-0.5 * std::sin(0.7)));
  // K = -(lap log psi) / (2 psi) in conformal coordinates
  double x = 0.7;
  double p0 = 1 + 0.5 * std::cos(x);
  double p1 = -0.5 * std::sin(x);
  double p2 = -0.5 * std::cos(x);
  double want = -(p2 / p0 - p1 * p1 / (p0 * p0)) / (2 * p0);
  CHECK(c.gauss_curvature({ChartId::primary, {x, 0.2}}) == doctest::Approx(want).epsilon(1e-12));
  CHECK_THROWS_AS(SurfaceModel::flat_torus_conformal(2 * M_PI, 1.0, "cos(x)"), DomainError);
}

TEST_CASE("pole taylor data is exposed") {
  SurfaceModel s = round_sphere();
  auto c = s.pole_profile_coeffs(true);
  CHECK(c[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c[1] == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(c[2] == doctest::Approx(-1.0 / 6).epsilon(1e-10));
  auto cs = s.pole_profile_coeffs(false);
  CHECK(cs[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cs[2] == doctest::Approx(-1.0 / 6).epsilon(1e-9));
}
