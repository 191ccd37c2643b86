#include <doctest.h>

#include <cmath>

#include "gyrolab/expr.hpp"

using gyrolab::Expr;
using gyrolab::ExprError;
using gyrolab::Jet2;
using gyrolab::Series6;

static double ev(const Expr& e, double x) { return e.eval(&x); }

TEST_CASE("arithmetic and precedence") {
  Expr e = Expr::parse("2 + 3*r - r/2", {"r"});
  CHECK(ev(e, 4.0) == doctest::Approx(2.0 + 12.0 - 2.0));
  Expr p = Expr::parse("2*r^3", {"r"});
  CHECK(ev(p, 2.0) == doctest::Approx(16.0));
  Expr u = Expr::parse("-r^2", {"r"});   // -(r^2), not (-r)^2
  CHECK(ev(u, 3.0) == doctest::Approx(-9.0));
  Expr rp = Expr::parse("2^3^1", {"r"});
  CHECK(ev(rp, 0.0) == doctest::Approx(8.0));
  Expr pi = Expr::parse("cos(pi)", {});
  CHECK(pi.eval(nullptr) == doctest::Approx(-1.0));
}

TEST_CASE("negative and fractional exponents") {
  Expr e = Expr::parse("r^-2", {"r"});
  CHECK(ev(e, 2.0) == doctest::Approx(0.25));
  Expr h = Expr::parse("r^0.5", {"r"});
  CHECK(ev(h, 9.0) == doctest::Approx(3.0));
  Expr d = Expr::parse("2^r", {"r"});
  CHECK(ev(d, 10.0) == doctest::Approx(1024.0));
}

TEST_CASE("functions") {
  Expr e = Expr::parse("sin(r)^2 + cos(r)^2", {"r"});
  CHECK(ev(e, 0.7) == doctest::Approx(1.0));
  Expr x = Expr::parse("exp(-r)", {"r"});
  CHECK(ev(x, 1.0) == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("series derivatives match closed forms") {
  Expr e = Expr::parse("sin(2*r) + r^3", {"r"});
  Series6 v = Series6::variable(0.3);
  Series6 out = e.eval_series(&v);
  CHECK(out.c[0] == doctest::Approx(std::sin(0.6) + 0.027).epsilon(1e-12));
  CHECK(out.deriv(1) == doctest::Approx(2.0 * std::cos(0.6) + 3.0 * 0.09).epsilon(1e-12));
  CHECK(out.deriv(2) == doctest::Approx(-4.0 * std::sin(0.6) + 6.0 * 0.3).epsilon(1e-12));
  CHECK(out.deriv(3) == doctest::Approx(-8.0 * std::cos(0.6) + 6.0).epsilon(1e-12));
  CHECK(out.deriv(4) == doctest::Approx(16.0 * std::sin(0.6)).epsilon(1e-12));
}

TEST_CASE("fractional power series at positive base") {
  Expr e = Expr::parse("(1 + r^2)^-1.5", {"r"});
  Series6 v = Series6::variable(0.4);
  Series6 out = e.eval_series(&v);
  double f = std::pow(1.16, -1.5);
  double df = -1.5 * std::pow(1.16, -2.5) * 0.8;
  CHECK(out.c[0] == doctest::Approx(f).epsilon(1e-12));
  CHECK(out.deriv(1) == doctest::Approx(df).epsilon(1e-12));
}

TEST_CASE("two-variable jets") {
  Expr e = Expr::parse("3 + cos(x) + cos(y)", {"x", "y"});
  Jet2 vars[2] = {Jet2::var_x(0.9), Jet2::var_y(-0.4)};
  Jet2 j = e.eval_jet(vars);
  CHECK(j.v == doctest::Approx(3.0 + std::cos(0.9) + std::cos(0.4)));
  CHECK(j.gx == doctest::Approx(-std::sin(0.9)));
  CHECK(j.gy == doctest::Approx(std::sin(0.4)));  // -sin(y) at y = -0.4
  CHECK(j.hxx == doctest::Approx(-std::cos(0.9)));
  CHECK(j.hyy == doctest::Approx(-std::cos(0.4)));
  CHECK(j.hxy == doctest::Approx(0.0));

  Expr m = Expr::parse("sin(x)*cos(y) + x*y^2", {"x", "y"});
  Jet2 w[2] = {Jet2::var_x(0.3), Jet2::var_y(0.8)};
  Jet2 k = m.eval_jet(w);
  CHECK(k.gx == doctest::Approx(std::cos(0.3) * std::cos(0.8) + 0.64).epsilon(1e-12));
  CHECK(k.gy == doctest::Approx(-std::sin(0.3) * std::sin(0.8) + 2.0 * 0.3 * 0.8).epsilon(1e-12));
  CHECK(k.hxy == doctest::Approx(-std::cos(0.3) * std::sin(0.8) + 1.6).epsilon(1e-12));
}

TEST_CASE("variable bookkeeping") {
  Expr e = Expr::parse("cos(x)", {"x", "y"});
  CHECK(e.depends_on(0));
  CHECK_FALSE(e.depends_on(1));
  CHECK_FALSE(e.is_constant());
  CHECK(Expr::parse("1 + 2*pi", {"x"}).is_constant());
}

TEST_CASE("parse errors carry position") {
  CHECK_THROWS_AS(Expr::parse("2 +", {"r"}), ExprError);
  CHECK_THROWS_AS(Expr::parse("sin()", {"r"}), ExprError);
  CHECK_THROWS_AS(Expr::parse("bogus(r)", {"r"}), ExprError);
  CHECK_THROWS_AS(Expr::parse("r + q", {"r"}), ExprError);
  CHECK_THROWS_AS(Expr::parse("(1 + r", {"r"}), ExprError);
  try {
    Expr::parse("r + q", {"r"});
  } catch (const ExprError& err) {
    CHECK(std::string(err.what()).find("position") != std::string::npos);
  }
}
