#include "gyrolab/field.hpp"

#include <cmath>

namespace gyrolab::field {

using geom::DomainError;

FieldSpec FieldSpec::constant(double b0) {
  FieldSpec f;
  f.kind_ = Kind::constant;
  f.b0_ = b0;
  return f;
}

FieldSpec FieldSpec::radial(const std::string& expr_text) {
  FieldSpec f;
  f.kind_ = Kind::radial;
  f.expr_ = Expr::parse(expr_text, {"r"});
  f.text_ = expr_text;
  return f;
}

FieldSpec FieldSpec::height_affine(double alpha, double beta) {
  FieldSpec f;
  f.kind_ = Kind::height_affine;
  f.alpha_ = alpha;
  f.beta_ = beta;
  return f;
}

FieldSpec FieldSpec::resonant(double alpha, double beta) {
  if (!(beta > std::abs(alpha)))
    throw DomainError("resonant field needs beta > |alpha| for positivity");
  FieldSpec f;
  f.kind_ = Kind::resonant;
  f.alpha_ = alpha;
  f.beta_ = beta;
  return f;
}

FieldSpec FieldSpec::expression(const std::string& expr_text) {
  FieldSpec f;
  f.kind_ = Kind::expression;
  f.expr_ = Expr::parse(expr_text, {"x", "y"});
  f.text_ = expr_text;
  return f;
}

std::string FieldSpec::describe() const {
  char buf[96];
  switch (kind_) {
    case Kind::constant:
      std::snprintf(buf, sizeof(buf), "b = %.12g", b0_);
      return buf;
    case Kind::radial:
      return "b(r) = " + text_;
    case Kind::height_affine:
      std::snprintf(buf, sizeof(buf), "b = %.12g + %.12g z", beta_, alpha_);
      return buf;
    case Kind::resonant:
      std::snprintf(buf, sizeof(buf), "1/(2 b^2) = %.12g Z + %.12g", alpha_, beta_);
      return buf;
    case Kind::expression:
      return "b(x, y) = " + text_;
  }
  return "?";
}

void FieldSpec::radial_jet(const SurfaceModel& surface, double r, double& f,
                           double& df, double& ddf) const {
  switch (kind_) {
    case Kind::radial: {
      Series<2> v = Series<2>::variable(r);
      Series<2> out = expr_.eval_t<Series<2>>(&v);
      f = out.c[0];
      df = out.deriv(1);
      ddf = out.deriv(2);
      return;
    }
    case Kind::height_affine: {
      f = beta_ + alpha_ * surface.height(r);
      df = alpha_ * surface.height_d1(r);
      ddf = alpha_ * surface.height_d2(r);
      return;
    }
    case Kind::resonant: {
      double u = 2.0 * (alpha_ * surface.moment(r) + beta_);
      double du = 2.0 * alpha_ * surface.moment_d1(r);
      double ddu = 2.0 * alpha_ * surface.moment_d2(r);
      double um = std::pow(u, -1.5);
      f = 1.0 / std::sqrt(u);
      df = -0.5 * du * um;
      ddf = -0.5 * ddu * um + 0.75 * du * du * um / u;
      return;
    }
    default:
      f = b0_;
      df = ddf = 0.0;
      return;
  }
}

FieldEval lift_radial(const SurfaceModel& surface, const ChartPoint& p,
                      const RadialJet& jet) {
  FieldEval out;
  if (p.chart == ChartId::primary) {
    double f, df, ddf;
    jet(p.q.x, f, df, ddf);
    out.b = f;
    out.grad = {df, 0.0};
    out.hess = {ddf, 0.0, 0.0};
    return out;
  }
  double rr = p.q.norm();
  bool north = p.chart == ChartId::north_cap;
  if (rr < 1e-12) {
    double f, df, ddf;
    jet(north ? 0.0 : surface.R(), f, df, ddf);
    out.b = f;
    out.hess = {ddf, 0.0, ddf};
    return out;
  }
  double f, df, ddf;
  jet(north ? rr : surface.R() - rr, f, df, ddf);
  // Composite g(rr) differs from f by the sign of odd derivatives on the
  // south side. A scalar smooth across the pole has df -> 0 there, which
  // makes the polar chain rule regular.
  double g1 = north ? df : -df;
  double q1 = g1 / rr;
  double c2 = (ddf - q1) / (rr * rr);
  out.b = f;
  out.grad = {q1 * p.q.x, q1 * p.q.y};
  out.hess = {q1 + c2 * p.q.x * p.q.x, c2 * p.q.x * p.q.y, q1 + c2 * p.q.y * p.q.y};
  return out;
}

FieldEval FieldSpec::eval_radial_chart(const SurfaceModel& surface,
                                       const ChartPoint& p) const {
  return lift_radial(surface, p, [&](double r, double& f, double& df, double& ddf) {
    radial_jet(surface, r, f, df, ddf);
  });
}

double FieldSpec::value(const SurfaceModel& surface, const ChartPoint& p) const {
  switch (kind_) {
    case Kind::constant:
      return b0_;
    case Kind::expression: {
      Vec2 w = surface.wrap(ChartId::primary, p.q);
      double v[2] = {w.x, w.y};
      return expr_.eval(v);
    }
    case Kind::radial:
    case Kind::height_affine:
    case Kind::resonant: {
      double r;
      switch (p.chart) {
        case ChartId::primary: r = p.q.x; break;
        case ChartId::north_cap: r = p.q.norm(); break;
        default: r = surface.R() - p.q.norm(); break;
      }
      double f, df, ddf;
      radial_jet(surface, std::clamp(r, 0.0, surface.R()), f, df, ddf);
      return f;
    }
  }
  return b0_;
}

FieldEval FieldSpec::eval2(const SurfaceModel& surface, const ChartPoint& p) const {
  FieldEval out;
  switch (kind_) {
    case Kind::constant:
      out.b = b0_;
      return out;
    case Kind::expression: {
      Vec2 w = surface.wrap(ChartId::primary, p.q);
      Jet2 vars[2] = {Jet2::var_x(w.x), Jet2::var_y(w.y)};
      Jet2 j = expr_.eval_jet(vars);
      out.b = j.v;
      out.grad = {j.gx, j.gy};
      out.hess = {j.hxx, j.hxy, j.hyy};
      return out;
    }
    default:
      return eval_radial_chart(surface, p);
  }
}

double FieldSpec::min_abs(const SurfaceModel& surface) const {
  if (kind_ == Kind::constant) return std::abs(b0_);
  double lo = 1e300;
  if (surface.is_revolution()) {
    for (int i = 0; i <= 512; ++i) {
      double r = surface.R() * i / 512.0;
      double f, df, ddf;
      radial_jet(surface, r, f, df, ddf);
      lo = std::min(lo, std::abs(f));
    }
    return lo;
  }
  for (int i = 0; i < 128; ++i)
    for (int j = 0; j < 128; ++j) {
      double v[2] = {surface.Lx() * i / 128.0, surface.Ly() * j / 128.0};
      lo = std::min(lo, std::abs(expr_.eval(v)));
    }
  return lo;
}

}  // namespace gyrolab::field
