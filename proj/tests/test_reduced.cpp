#include <doctest.h>

#include <cmath>
#include <sstream>

#include "gyrolab/reduced.hpp"

using namespace gyrolab;
using namespace gyrolab::reduced;
using field::FieldSpec;
using geom::Profile;

static geom::SurfaceModel sphere() {
  return geom::SurfaceModel::revolution(Profile::from_expression("sin(r)"), M_PI);
}

static geom::SurfaceModel torus() { return geom::SurfaceModel::flat_torus(2 * M_PI, 2 * M_PI); }

// period of the level {H = c} for b = 2 + z on the round sphere
static double period_law(double c) { return 2 * M_PI * std::pow(2 * c, -1.5); }

TEST_CASE("mode dispatch and Hamiltonian values") {
  auto s = sphere();
  auto rs = ReducedSystem::make(s, FieldSpec::height_affine(1.0, 2.0));
  CHECK(rs.mode() == Mode::field);
  CHECK(rs.rotationally_symmetric());
  // equator z = 0, b = 2
  CHECK(rs.value({ChartId::primary, {M_PI / 2, 0.3}}) == doctest::Approx(0.125).epsilon(1e-12));

  // constant field has a constant 1/(2 b^2); the curvature Hamiltonian
  // takes over, here K = 1 everywhere on the unit sphere
  auto rk = ReducedSystem::make(s, FieldSpec::constant(2.0));
  CHECK(rk.mode() == Mode::curvature);
  for (ChartPoint p : {ChartPoint{ChartId::primary, {1.2, 0.4}},
                       ChartPoint{ChartId::primary, {0.004, 0.0}},
                       ChartPoint{ChartId::north_cap, {0.001, 0.002}}}) {
    CHECK(rk.value(p) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(rk.hamiltonian(p).value == doctest::Approx(1.0).epsilon(1e-8));
  }

  CHECK_THROWS_AS(ReducedSystem::make(s, FieldSpec::constant(0.0)), geom::DomainError);
  CHECK_THROWS_AS(ReducedSystem::make(torus(), FieldSpec::constant(1.0)), ModeError);
}

TEST_CASE("field mode jet matches finite differences on the torus") {
  auto t = torus();
  auto rs = ReducedSystem::make(t, FieldSpec::expression("3 + cos(x) + cos(y)"));
  ChartPoint p{ChartId::primary, {1.1, 2.3}};
  HamJet j = rs.hamiltonian(p);
  double d = 1e-5;
  auto val = [&](double x, double y) { return rs.value({ChartId::primary, {x, y}}); };
  CHECK(j.value == doctest::Approx(val(p.q.x, p.q.y)).epsilon(1e-14));
  CHECK(j.grad.x ==
        doctest::Approx((val(p.q.x + d, p.q.y) - val(p.q.x - d, p.q.y)) / (2 * d)).epsilon(1e-7));
  CHECK(j.grad.y ==
        doctest::Approx((val(p.q.x, p.q.y + d) - val(p.q.x, p.q.y - d)) / (2 * d)).epsilon(1e-7));
  double fxx = (val(p.q.x + d, p.q.y) - 2 * j.value + val(p.q.x - d, p.q.y)) / (d * d);
  CHECK(j.hess.xx == doctest::Approx(fxx).epsilon(1e-4));
}

TEST_CASE("Hamiltonian field convention on a synthetic height function") {
  // H = cos r = z on the round sphere drifts westward at unit rate
  auto rs = ReducedSystem::synthetic(sphere(), "cos(r)");
  Vec2 X = rs.hamiltonian_field({ChartId::primary, {1.0, 0.5}});
  CHECK(X.x == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(X.y == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(rs.gradient_norm({ChartId::primary, {1.0, 0.5}}) ==
        doctest::Approx(std::sin(1.0)).epsilon(1e-12));
}

TEST_CASE("level circle first return reproduces the period law") {
  auto rs = ReducedSystem::make(sphere(), FieldSpec::height_affine(1.0, 2.0));
  LevelCircle L = trace_level_circle(rs, 0.125, {ChartId::primary, {M_PI / 2 + 0.2, 1.0}});
  CHECK(L.T == doctest::Approx(16 * M_PI).epsilon(1e-9));
  CHECK(L.closure_error < 1e-8);
  CHECK(L.level_drift < 1e-9);
  CHECK(L.points.size() == 257);
  CHECK(L.component_tag == 1);
  CHECK(L.grad_min > 1e-3);

  // synthetic H = z rotates with period 2 pi on every level
  auto rz = ReducedSystem::synthetic(sphere(), "cos(r)");
  LevelCircle Lz = trace_level_circle(rz, 0.3, {ChartId::primary, {1.1, 0.0}});
  CHECK(Lz.T == doctest::Approx(2 * M_PI).epsilon(1e-10));
}

TEST_CASE("near critical and budget failures are reported as such") {
  auto rs = ReducedSystem::make(sphere(), FieldSpec::height_affine(1.0, 2.0));
  CHECK_THROWS_AS(
      trace_level_circle(rs, 1.0 / 18.0, {ChartId::north_cap, {0.0, 0.0}}),
      NearCriticalError);
  TraceOptions opt;
  opt.max_steps = 5;
  CHECK_THROWS_AS(
      trace_level_circle(rs, 0.125, {ChartId::primary, {M_PI / 2, 0.0}}, opt),
      BudgetError);
}

TEST_CASE("cylinder continuation ends at the polar critical points") {
  auto rs = ReducedSystem::make(sphere(), FieldSpec::height_affine(1.0, 2.0));
  LevelCircle L0 = trace_level_circle(rs, 0.125, {ChartId::primary, {M_PI / 2, 0.0}});
  OrbitCylinder cyl = extend_cylinder(rs, L0);

  CHECK(cyl.lower.kind == EndpointKind::critical_point);
  CHECK(cyl.upper.kind == EndpointKind::critical_point);
  CHECK(cyl.c_minus() == doctest::Approx(1.0 / 18.0).epsilon(1e-8));
  CHECK(cyl.c_plus() == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(cyl.lower.location.chart == ChartId::north_cap);
  CHECK(cyl.upper.location.chart == ChartId::south_cap);
  CHECK_FALSE(cyl.lower.degenerate);
  CHECK(cyl.lower.note.find("minimum") != std::string::npos);
  CHECK(cyl.upper.note.find("maximum") != std::string::npos);

  for (std::size_t i = 1; i < cyl.c.size(); ++i) {
    CHECK(cyl.c[i] > cyl.c[i - 1]);
    CHECK(cyl.T[i] < cyl.T[i - 1]);  // period falls toward the south pole
  }
  for (std::size_t i = 0; i < cyl.c.size(); ++i)
    CHECK(cyl.T[i] == doctest::Approx(period_law(cyl.c[i])).epsilon(1e-8));
}

TEST_CASE("period area profile obeys the closed forms and the area slope identity") {
  auto rs = ReducedSystem::make(sphere(), FieldSpec::height_affine(1.0, 2.0));
  LevelCircle L0 = trace_level_circle(rs, 0.125, {ChartId::primary, {M_PI / 2, 0.0}});
  OrbitCylinder cyl = extend_cylinder(rs, L0);

  std::vector<double> grid;
  for (int i = 0; i < 9; ++i) grid.push_back(0.08 + (0.45 - 0.08) * i / 8.0);
  PeriodAreaProfile prof = period_area_profile(rs, cyl, grid);
  REQUIRE(prof.rows.size() == 9);
  CHECK(prof.max_dadc_mismatch < 1e-5);

  double c0 = prof.rows[0].c;
  for (std::size_t i = 0; i < prof.rows.size(); ++i) {
    const ProfileRow& r = prof.rows[i];
    CHECK(r.T == doctest::Approx(period_law(r.c)).epsilon(1e-8));
    double area_law =
        2 * M_PI * (std::pow(2 * c0, -0.5) - std::pow(2 * r.c, -0.5));
    CHECK(r.A == doctest::Approx(area_law).epsilon(1e-7));
    if (i > 0) CHECK(r.A > prof.rows[i - 1].A);
    CHECK(r.verdict == Verdict::non_resonant);
  }

  std::ostringstream os;
  write_profile_csv(os, prof);
  CHECK(os.str().rfind("c,T,A,dTdc_fit,verdict\n", 0) == 0);
  CHECK(os.str().find("non-resonant") != std::string::npos);
}

TEST_CASE("synthetic height profile has unit angular rate and linear area") {
  auto rs = ReducedSystem::synthetic(sphere(), "cos(r)");
  LevelCircle L0 = trace_level_circle(rs, 0.0, {ChartId::primary, {M_PI / 2, 0.0}});
  OrbitCylinder cyl = extend_cylinder(rs, L0);
  CHECK(cyl.c_minus() == doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(cyl.c_plus() == doctest::Approx(1.0).epsilon(1e-7));

  std::vector<double> grid{-0.7, -0.4, -0.1, 0.2, 0.5, 0.8};
  PeriodAreaProfile prof = period_area_profile(rs, cyl, grid);
  REQUIRE(prof.rows.size() == 6);
  CHECK(prof.max_dadc_mismatch < 1e-5);
  double c0 = prof.rows[0].c;
  for (const ProfileRow& r : prof.rows) {
    CHECK(r.T == doctest::Approx(2 * M_PI).epsilon(1e-10));
    CHECK(r.A == doctest::Approx(2 * M_PI * (r.c - c0)).epsilon(1e-8));
    CHECK(r.verdict == Verdict::resonant_within_tolerance);
  }
}

TEST_CASE("twist classification separates the two field families") {
  auto rs = ReducedSystem::make(sphere(), FieldSpec::height_affine(1.0, 2.0));
  LevelCircle L0 = trace_level_circle(rs, 0.125, {ChartId::primary, {M_PI / 2, 0.0}});
  OrbitCylinder cyl = extend_cylinder(rs, L0);
  ResonanceVerdict v = classify_resonance(rs, cyl, 0.125);
  CHECK(v.classification == Verdict::non_resonant);
  CHECK(v.T0 == doctest::Approx(16 * M_PI).epsilon(1e-6));
  CHECK(v.dTdc == doctest::Approx(-192 * M_PI).epsilon(1e-3));
  CHECK(v.dTdc_err < 0.01 * std::abs(v.dTdc));

  // the resonant family turns with the same period on every level
  auto rr = ReducedSystem::make(sphere(), FieldSpec::resonant(0.25, 0.75));
  LevelCircle R0 = trace_level_circle(rr, 0.75, {ChartId::primary, {M_PI / 2, 0.0}});
  OrbitCylinder rcyl = extend_cylinder(rr, R0);
  CHECK(rcyl.c_minus() == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(rcyl.c_plus() == doctest::Approx(1.0).epsilon(1e-7));
  for (double T : rcyl.T) CHECK(std::abs(T - 8 * M_PI) < 1e-8);
  ResonanceVerdict rv = classify_resonance(rr, rcyl, 0.75);
  CHECK(rv.classification == Verdict::resonant_within_tolerance);
  CHECK(rv.max_variation < 1e-8);
}

TEST_CASE("rescaling the Hamiltonian halves periods and keeps verdicts") {
  auto rs = ReducedSystem::make(sphere(), FieldSpec::height_affine(1.0, 2.0));
  auto r2 = rs.scaled(2.0);
  LevelCircle L = trace_level_circle(rs, 0.125, {ChartId::primary, {M_PI / 2, 0.0}});
  LevelCircle L2 = trace_level_circle(r2, 0.25, {ChartId::primary, {M_PI / 2, 0.0}});
  CHECK(L2.T == doctest::Approx(L.T / 2).epsilon(1e-9));

  OrbitCylinder cyl2 = extend_cylinder(r2, L2);
  CHECK(cyl2.c_minus() == doctest::Approx(1.0 / 9.0).epsilon(1e-8));
  CHECK(cyl2.c_plus() == doctest::Approx(1.0).epsilon(1e-8));
  ResonanceVerdict v2 = classify_resonance(r2, cyl2, 0.25);
  CHECK(v2.classification == Verdict::non_resonant);

  auto rr = ReducedSystem::make(sphere(), FieldSpec::resonant(0.25, 0.75)).scaled(2.0);
  LevelCircle R2 = trace_level_circle(rr, 1.5, {ChartId::primary, {M_PI / 2, 0.0}});
  OrbitCylinder rcyl2 = extend_cylinder(rr, R2);
  ResonanceVerdict rv2 = classify_resonance(rr, rcyl2, 1.5);
  CHECK(rv2.classification == Verdict::resonant_within_tolerance);
}

TEST_CASE("critical point census on spheres") {
  auto rs = ReducedSystem::make(sphere(), FieldSpec::height_affine(1.0, 2.0));
  auto crits = critical_points(rs);
  REQUIRE(crits.size() == 2);
  CHECK(crits[0].type == CriticalType::minimum);
  CHECK(crits[0].value == doctest::Approx(1.0 / 18.0).epsilon(1e-12));
  CHECK(crits[0].location.chart == ChartId::north_cap);
  CHECK(crits[1].type == CriticalType::maximum);
  CHECK(crits[1].value == doctest::Approx(0.5).epsilon(1e-12));

  // b = 2 + z^3 flattens at the equator: a degenerate critical circle
  auto rd = ReducedSystem::make(sphere(), FieldSpec::radial("2 + cos(r)^3"));
  auto cd = critical_points(rd);
  REQUIRE(cd.size() == 3);
  CHECK(cd[0].value == doctest::Approx(1.0 / 18.0).epsilon(1e-10));
  CHECK(cd[1].type == CriticalType::degenerate);
  CHECK(cd[1].location.chart == ChartId::primary);
  CHECK(cd[1].location.q.x == doctest::Approx(M_PI / 2).epsilon(1e-6));
  CHECK(cd[1].value == doctest::Approx(0.125).epsilon(1e-8));
  CHECK(cd[2].value == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("critical point census on the torus finds the saddles") {
  auto rs = ReducedSystem::make(torus(), FieldSpec::expression("3 + cos(x) + cos(y)"));
  auto crits = critical_points(rs);
  REQUIRE(crits.size() == 4);
  CHECK(crits[0].type == CriticalType::minimum);
  CHECK(crits[0].value == doctest::Approx(0.02).epsilon(1e-10));
  CHECK(crits[1].type == CriticalType::saddle);
  CHECK(crits[2].type == CriticalType::saddle);
  CHECK(crits[3].type == CriticalType::maximum);
  CHECK(crits[3].value == doctest::Approx(0.5).epsilon(1e-10));

  // the saddle on the x axis carries the expected Hessian
  bool found = false;
  for (const CriticalPoint& cp : crits) {
    if (cp.type != CriticalType::saddle) continue;
    Vec2 q = cp.location.q;
    if (std::abs(q.x - M_PI) < 1e-6 && std::min(q.y, 2 * M_PI - q.y) < 1e-6) {
      found = true;
      CHECK(cp.value == doctest::Approx(1.0 / 18.0).epsilon(1e-10));
      CHECK(cp.hess_det == doctest::Approx(-1.0 / 729.0).epsilon(1e-8));
      HamJet j = rs.hamiltonian(cp.location);
      CHECK(j.hess.xx == doctest::Approx(-1.0 / 27.0).epsilon(1e-8));
      CHECK(j.hess.yy == doctest::Approx(1.0 / 27.0).epsilon(1e-8));
      CHECK(std::abs(j.hess.xy) < 1e-9);
    }
  }
  CHECK(found);
}

TEST_CASE("nonresonant circles certify both sides of a field zero set") {
  auto rs = ReducedSystem::make(torus(), FieldSpec::expression("cos(x)"));
  BoundaryReport rep = locate_nonresonant_boundary(rs, BoundaryTarget::zero_set());
  CHECK(rep.certificate_found);
  CHECK(rep.circles.size() == 4);  // two crossings, two sides each
  for (const BoundaryCircle& bc : rep.circles)
    CHECK(bc.verdict.classification == Verdict::non_resonant);
  CHECK(rep.neighborhood.find("zero set") != std::string::npos);
}

TEST_CASE("nonresonant circles nest around extrema and critical circles") {
  auto rs = ReducedSystem::make(sphere(), FieldSpec::height_affine(1.0, 2.0));
  BoundaryReport re = locate_nonresonant_boundary(
      rs, BoundaryTarget::extremum({ChartId::north_cap, {0.05, 0.02}}));
  CHECK(re.certificate_found);
  REQUIRE(re.circles.size() == 1);
  CHECK(re.circles[0].verdict.classification == Verdict::non_resonant);

  auto rd = ReducedSystem::make(sphere(), FieldSpec::radial("2 + cos(r)^3"));
  BoundaryReport rc = locate_nonresonant_boundary(rd, BoundaryTarget::circle(0.125));
  CHECK(rc.certificate_found);
  CHECK(rc.circles.size() == 2);  // one certificate per side
  for (const BoundaryCircle& bc : rc.circles)
    CHECK(bc.verdict.classification == Verdict::non_resonant);
}

TEST_CASE("saddle approach produces four quadrant circles") {
  auto rs = ReducedSystem::make(torus(), FieldSpec::expression("3 + cos(x) + cos(y)"));
  BoundaryReport rep = locate_nonresonant_boundary(
      rs, BoundaryTarget::saddle({ChartId::primary, {M_PI + 0.05, 0.1}}, 0.4, 0.15));
  CHECK(rep.certificate_found);
  REQUIRE(rep.circles.size() == 4);
  int above = 0, below = 0;
  for (const BoundaryCircle& bc : rep.circles) {
    CHECK(bc.verdict.classification == Verdict::non_resonant);
    (bc.circle.c > 1.0 / 18.0 ? above : below) += 1;
  }
  CHECK(above == 2);
  CHECK(below == 2);
  CHECK(rep.neighborhood.find("Hessian") != std::string::npos);
}

TEST_CASE("every system lands in exactly one dichotomy branch") {
  auto rs = ReducedSystem::make(sphere(), FieldSpec::height_affine(1.0, 2.0));
  DichotomyReport a = dichotomy_report(rs);
  CHECK(a.nonresonant_found);
  CHECK(a.branch == "non-resonant circle");

  auto rr = ReducedSystem::make(sphere(), FieldSpec::resonant(0.25, 0.75));
  DichotomyReport b = dichotomy_report(rr);
  CHECK_FALSE(b.nonresonant_found);
  CHECK(b.sphere_two_critical_points);
  CHECK(b.branch == "resonant sphere");
  REQUIRE(b.criticals.size() == 2);
  CHECK(b.criticals[0].value == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(b.criticals[1].value == doctest::Approx(1.0).epsilon(1e-10));
}
