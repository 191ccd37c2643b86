#include "gyrolab/reduced.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>

#include "gyrolab/ode.hpp"

namespace gyrolab::reduced {

namespace {

double length_scale(const SurfaceModel& s) {
  return s.is_revolution() ? s.R() : std::min(s.Lx(), s.Ly());
}

// Minimum-image chart displacement a - b.
Vec2 chart_delta(const SurfaceModel& s, ChartId chart, Vec2 a, Vec2 b) {
  Vec2 d = a - b;
  if (chart == ChartId::primary) {
    if (s.is_revolution()) {
      d.y = std::remainder(d.y, 2.0 * M_PI);
    } else {
      d.x = std::remainder(d.x, s.Lx());
      d.y = std::remainder(d.y, s.Ly());
    }
  }
  return d;
}

double chart_radius(const SurfaceModel& s, const ChartPoint& p) {
  if (p.chart == ChartId::primary) return p.q.x;
  double rr = p.q.norm();
  return p.chart == ChartId::north_cap ? rr : s.R() - rr;
}

// Keeps a point inside its chart's numeric domain and hands it to the
// preferred chart. Correction and continuation steps call this after every
// coordinate update.
ChartPoint normalize_point(const SurfaceModel& s, ChartPoint p) {
  if (s.is_revolution() && p.chart == ChartId::primary) {
    double lo = 0.25 * s.cap_eps();
    p.q.x = std::clamp(p.q.x, lo, s.R() - lo);
  }
  p.q = s.wrap(p.chart, p.q);
  ChartId pref = s.preferred_chart(p);
  if (pref != p.chart) p = s.transfer(p, pref);
  return p;
}

bool inside_chart_domain(const SurfaceModel& s, ChartId chart, const Vec2& q) {
  if (chart == ChartId::primary) {
    if (!s.is_revolution()) return true;
    double lo = 0.25 * s.cap_eps();
    return q.x > lo && q.x < s.R() - lo;
  }
  return q.norm() < s.cap_domain_radius();
}

HamJet scale_jet(HamJet j, double scale) {
  j.value *= scale;
  j.grad = scale * j.grad;
  j.hess.xx *= scale;
  j.hess.xy *= scale;
  j.hess.yy *= scale;
  return j;
}

// Radial jet of the Gaussian curvature on a revolution surface, with the
// same pole-series seam as the metric itself.
void curvature_jet(const SurfaceModel& s, double r, double& f, double& df, double& ddf) {
  double R = s.R();
  double seam = 0.01 * R;
  if (r < seam || r > R - seam) {
    bool north = r < seam;
    double K0, K2;
    s.curvature_pole(north, K0, K2);
    double d = north ? r : R - r;
    f = K0 + K2 * d * d;
    df = 2.0 * K2 * d * (north ? 1.0 : -1.0);
    ddf = 2.0 * K2;
    return;
  }
  Series6 a = s.profile().jet6(r);
  double a0 = a.deriv(0), a1 = a.deriv(1), a2 = a.deriv(2), a3 = a.deriv(3),
         a4 = a.deriv(4);
  f = -a2 / a0;
  df = -a3 / a0 + a2 * a1 / (a0 * a0);
  ddf = -a4 / a0 + 2.0 * a3 * a1 / (a0 * a0) + a2 * a2 / (a0 * a0) -
        2.0 * a2 * a1 * a1 / (a0 * a0 * a0);
}

}  // namespace

ReducedSystem ReducedSystem::make(const SurfaceModel& surface,
                                  const field::FieldSpec& field) {
  if (field.is_constant()) return curvature_mode(surface, field);
  return field_mode(surface, field);
}

ReducedSystem ReducedSystem::field_mode(const SurfaceModel& surface,
                                        const field::FieldSpec& field) {
  if (field.is_constant()) {
    if (field.constant_value() == 0.0)
      throw geom::DomainError("field is identically zero; no reduced Hamiltonian");
    // constant b makes 1/(2 b^2) constant as well
    throw ModeError("constant field has a constant Hamiltonian; use curvature mode");
  }
  ReducedSystem rs(surface);
  rs.field_ = field;
  rs.mode_ = Mode::field;
  return rs;
}

ReducedSystem ReducedSystem::curvature_mode(const SurfaceModel& surface,
                                            const field::FieldSpec& field) {
  if (!field.is_constant())
    throw ModeError("curvature mode needs a constant field");
  if (field.constant_value() == 0.0)
    throw geom::DomainError("field is identically zero; no reduced Hamiltonian");
  if (!surface.is_revolution())
    throw ModeError(
        "curvature mode is degenerate or unavailable off revolution surfaces; "
        "supply analytic curvature");
  ReducedSystem rs(surface);
  rs.field_ = field;
  rs.mode_ = Mode::curvature;
  return rs;
}

ReducedSystem ReducedSystem::curvature_mode_analytic(const SurfaceModel& surface,
                                                     const std::string& k_expr) {
  if (surface.is_revolution())
    throw ModeError("analytic curvature override is for non-revolution surfaces");
  ReducedSystem rs(surface);
  rs.expr_ = Expr::parse(k_expr, {"x", "y"});
  rs.expr_text_ = k_expr;
  rs.mode_ = Mode::curvature;
  return rs;
}

ReducedSystem ReducedSystem::synthetic(const SurfaceModel& surface,
                                       const std::string& expr) {
  ReducedSystem rs(surface);
  if (surface.is_revolution())
    rs.expr_ = Expr::parse(expr, {"r"});
  else
    rs.expr_ = Expr::parse(expr, {"x", "y"});
  rs.expr_text_ = expr;
  rs.mode_ = Mode::synthetic;
  return rs;
}

bool ReducedSystem::rotationally_symmetric() const {
  if (!surface_.is_revolution()) return false;
  if (mode_ == Mode::field)
    return field_.kind() != field::FieldSpec::Kind::expression;
  return true;  // curvature and synthetic on revolution surfaces are radial
}

ReducedSystem ReducedSystem::scaled(double factor) const {
  ReducedSystem rs = *this;
  rs.scale_ *= factor;
  return rs;
}

HamJet ReducedSystem::hamiltonian(const ChartPoint& p) const {
  HamJet out;
  switch (mode_) {
    case Mode::field: {
      field::FieldEval fe = field_.eval2(surface_, p);
      double ib = 1.0 / fe.b;
      double ib2 = ib * ib, ib3 = ib2 * ib, ib4 = ib2 * ib2;
      out.value = 0.5 * ib2;
      out.grad = (-ib3) * fe.grad;
      out.hess.xx = 3.0 * ib4 * fe.grad.x * fe.grad.x - ib3 * fe.hess.xx;
      out.hess.xy = 3.0 * ib4 * fe.grad.x * fe.grad.y - ib3 * fe.hess.xy;
      out.hess.yy = 3.0 * ib4 * fe.grad.y * fe.grad.y - ib3 * fe.hess.yy;
      break;
    }
    case Mode::curvature: {
      if (surface_.is_revolution()) {
        field::FieldEval fe = field::lift_radial(
            surface_, p, [this](double r, double& f, double& df, double& ddf) {
              curvature_jet(surface_, r, f, df, ddf);
            });
        out.value = fe.b;
        out.grad = fe.grad;
        out.hess = fe.hess;
      } else {
        Vec2 w = surface_.wrap(ChartId::primary, p.q);
        Jet2 vars[2] = {Jet2::var_x(w.x), Jet2::var_y(w.y)};
        Jet2 j = expr_.eval_jet(vars);
        out.value = j.v;
        out.grad = {j.gx, j.gy};
        out.hess = {j.hxx, j.hxy, j.hyy};
      }
      break;
    }
    case Mode::synthetic: {
      if (surface_.is_revolution()) {
        field::FieldEval fe = field::lift_radial(
            surface_, p, [this](double r, double& f, double& df, double& ddf) {
              Series6 v = Series6::variable(r);
              Series6 s = expr_.eval_series(&v);
              f = s.deriv(0);
              df = s.deriv(1);
              ddf = s.deriv(2);
            });
        out.value = fe.b;
        out.grad = fe.grad;
        out.hess = fe.hess;
      } else {
        Vec2 w = surface_.wrap(ChartId::primary, p.q);
        Jet2 vars[2] = {Jet2::var_x(w.x), Jet2::var_y(w.y)};
        Jet2 j = expr_.eval_jet(vars);
        out.value = j.v;
        out.grad = {j.gx, j.gy};
        out.hess = {j.hxx, j.hxy, j.hyy};
      }
      break;
    }
  }
  return scale_jet(out, scale_);
}

double ReducedSystem::value(const ChartPoint& p) const {
  switch (mode_) {
    case Mode::field: {
      double b = field_.value(surface_, p);
      return scale_ * 0.5 / (b * b);
    }
    case Mode::curvature:
      if (surface_.is_revolution()) return scale_ * surface_.gauss_curvature(p);
      break;
    case Mode::synthetic:
      if (surface_.is_revolution()) {
        double r = chart_radius(surface_, p);
        double vars[1] = {r};
        return scale_ * expr_.eval(vars);
      }
      break;
  }
  Vec2 w = surface_.wrap(ChartId::primary, p.q);
  double vars[2] = {w.x, w.y};
  return scale_ * expr_.eval(vars);
}

Vec2 ReducedSystem::hamiltonian_field(const ChartPoint& p) const {
  HamJet j = hamiltonian(p);
  double rho = surface_.metric_first(p).density();
  return {-j.grad.y / rho, j.grad.x / rho};
}

double ReducedSystem::gradient_norm(const ChartPoint& p) const {
  HamJet j = hamiltonian(p);
  geom::MetricFirst m = surface_.metric_first(p);
  double det = m.det();
  double g2 = (m.G * j.grad.x * j.grad.x - 2.0 * m.F * j.grad.x * j.grad.y +
               m.E * j.grad.y * j.grad.y) /
              det;
  return std::sqrt(std::max(g2, 0.0));
}

std::string ReducedSystem::describe() const {
  char buf[160];
  switch (mode_) {
    case Mode::field:
      std::snprintf(buf, sizeof(buf), "H = 1/(2 b^2), b: %s, scale %g",
                    field_.describe().c_str(), scale_);
      break;
    case Mode::curvature:
      std::snprintf(buf, sizeof(buf), "H = K%s, scale %g",
                    expr_text_.empty() ? "" : (" = " + expr_text_).c_str(), scale_);
      break;
    case Mode::synthetic:
      std::snprintf(buf, sizeof(buf), "H = %s, scale %g", expr_text_.c_str(), scale_);
      break;
  }
  return buf;
}

namespace {

// Newton correction of a point onto the level {H = c} along the gradient.
ChartPoint correct_seed(const ReducedSystem& rs, double c, ChartPoint p,
                        const TraceOptions& opt) {
  const SurfaceModel& s = rs.surface();
  double len = length_scale(s);
  for (int it = 0; it < 80; ++it) {
    p = normalize_point(s, p);
    HamJet j = rs.hamiltonian(p);
    double res = j.value - c;
    // the gradient scale keeps the target meaningful at c = 0
    double target = opt.seed_tol * std::max(std::abs(c), j.grad.norm() * len);
    if (std::abs(res) <= target) return p;
    if (rs.gradient_norm(p) < opt.grad_floor)
      throw NearCriticalError("seed correction stalled near a critical point");
    double g2 = j.grad.dot(j.grad);
    Vec2 step = (-res / g2) * j.grad;
    double sn = step.norm();
    double cap = 0.05 * len;
    if (sn > cap) step = (cap / sn) * step;
    p.q += step;
  }
  throw NearCriticalError("seed correction did not converge to the level");
}

struct XRhs {
  const ReducedSystem* rs;
  ChartId chart;
  void operator()(double, const std::array<double, 2>& y,
                  std::array<double, 2>& dy) const {
    Vec2 q{y[0], y[1]};
    if (!inside_chart_domain(rs->surface(), chart, q)) {
      dy[0] = dy[1] = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    Vec2 X = rs->hamiltonian_field({chart, q});
    dy[0] = X.x;
    dy[1] = X.y;
  }
};

// Shortest wrap period of the chart, infinite in the caps.
double wrap_scale(const SurfaceModel& s, ChartId chart) {
  if (chart != ChartId::primary) return std::numeric_limits<double>::infinity();
  return s.is_revolution() ? 2.0 * M_PI : std::min(s.Lx(), s.Ly());
}

// The level flow can be arbitrarily smooth in chart coordinates (a latitude
// circle is a straight coordinate line), so the error controller alone lets
// steps outrun the circle and the return section would see aliased
// crossings. Each step is capped to a fraction of the chart wrap period and
// of the circle extent seen so far.
double step_time_cap(const SurfaceModel& s, ChartId chart, double max_dist,
                     double first_dist, double speed) {
  if (!(first_dist > 0.0) || !(speed > 0.0))
    return std::numeric_limits<double>::infinity();
  double disp = 0.25 * std::max(max_dist, 4.0 * first_dist);
  disp = std::min(disp, 0.15 * wrap_scale(s, chart));
  return disp / speed;
}

}  // namespace

LevelCircle trace_level_circle(const ReducedSystem& rs, double c, ChartPoint seed,
                               const TraceOptions& opt) {
  const SurfaceModel& s = rs.surface();
  ChartPoint p0 = correct_seed(rs, c, seed, opt);
  if (rs.gradient_norm(p0) < opt.grad_floor)
    throw NearCriticalError("level passes a critical point at the seed");

  Vec2 X0 = rs.hamiltonian_field(p0);
  double X0n = X0.norm();
  if (!(X0n > 0.0))
    throw NearCriticalError("Hamiltonian field vanishes at the seed");
  Vec2 e = (1.0 / X0n) * X0;

  OdeOptions oopt;
  oopt.rtol = opt.rtol;
  oopt.atol = opt.atol;

  // first pass: locate the first return
  XRhs rhs{&rs, p0.chart};
  Dopri5<2, XRhs&> ode(rhs, oopt);
  ode.start(0.0, {p0.q.x, p0.q.y}, 1.0);

  double T = -1.0;
  double max_dist = 0.0, grad_min = rs.gradient_norm(p0), drift = 0.0;
  double d_first = 0.0;
  bool armed = false, have_sigma = false;
  double sigma_prev = 0.0;
  for (int steps = 0; steps < opt.max_steps; ++steps) {
    ChartId step_chart = rhs.chart;
    Vec2 Xc = rs.hamiltonian_field({step_chart, {ode.y()[0], ode.y()[1]}});
    double hcap = step_time_cap(s, step_chart, max_dist, d_first, Xc.norm());
    if (!ode.advance(1e18, hcap))
      throw BudgetError("step size underflow while tracing a level circle");
    Vec2 q{ode.y()[0], ode.y()[1]};
    ChartPoint p{step_chart, q};
    HamJet j = rs.hamiltonian(p);
    drift = std::max(drift, std::abs(j.value - c));
    double gn = rs.gradient_norm(p);
    grad_min = std::min(grad_min, gn);
    if (gn < opt.grad_floor)
      throw NearCriticalError("level passes too close to a critical point");
    double dist = s.distance(p, p0);
    max_dist = std::max(max_dist, dist);
    if (d_first == 0.0) d_first = dist;
    if (!armed && dist > 4.0 * d_first) armed = true;

    if (step_chart == p0.chart) {
      double sigma = e.dot(chart_delta(s, p0.chart, q, p0.q));
      if (armed && have_sigma && sigma_prev < 0.0 && sigma >= 0.0) {
        auto f = [&](double t) {
          auto yt = ode.dense(t);
          return e.dot(chart_delta(s, p0.chart, {yt[0], yt[1]}, p0.q));
        };
        double ts = brent_root(f, ode.t_prev(), ode.t(), 1e-15 * (ode.t() + 1.0));
        auto yt = ode.dense(ts);
        double closure = s.distance({p0.chart, {yt[0], yt[1]}}, p0);
        if (closure < std::max(1e-7, 1e-3 * max_dist)) {
          T = ts;
          break;
        }
      }
      sigma_prev = sigma;
      have_sigma = true;
    } else {
      have_sigma = false;
    }

    ChartId pref = s.preferred_chart(p);
    if (pref != step_chart) {
      ChartPoint pt = s.transfer(p, pref);
      rhs.chart = pref;
      ode.set_state({pt.q.x, pt.q.y}, true);
      have_sigma = false;
    }
  }
  if (T < 0.0) throw BudgetError("no first return within the step budget");

  // second pass: resample the circle uniformly in time
  LevelCircle out;
  out.c = c;
  out.T = T;
  out.seed = p0;
  out.extent = max_dist;
  out.grad_min = grad_min;
  int M = std::max(opt.samples, 8);
  out.points.reserve(M + 1);
  out.points.push_back(p0);

  XRhs rhs2{&rs, p0.chart};
  Dopri5<2, XRhs&> ode2(rhs2, oopt);
  ode2.start(0.0, {p0.q.x, p0.q.y}, 1.0);
  int k = 1;
  int steps2 = 0;
  while (ode2.t() < T) {
    if (++steps2 > 2 * opt.max_steps)
      throw BudgetError("step budget exhausted while resampling a level circle");
    ChartId step_chart = rhs2.chart;
    Vec2 Xc = rs.hamiltonian_field({step_chart, {ode2.y()[0], ode2.y()[1]}});
    double hcap =
        std::min(step_time_cap(s, step_chart, max_dist, d_first, Xc.norm()), T / 8.0);
    if (!ode2.advance(T, hcap))
      throw BudgetError("step size underflow while resampling a level circle");
    while (k < M && k * (T / M) <= ode2.t()) {
      auto yk = ode2.dense(k * (T / M));
      out.points.push_back({step_chart, {yk[0], yk[1]}});
      ++k;
    }
    ChartPoint p{rhs2.chart, {ode2.y()[0], ode2.y()[1]}};
    ChartId pref = s.preferred_chart(p);
    if (pref != rhs2.chart) {
      ChartPoint pt = s.transfer(p, pref);
      rhs2.chart = pref;
      ode2.set_state({pt.q.x, pt.q.y}, true);
    }
  }
  out.points.push_back({rhs2.chart, {ode2.y()[0], ode2.y()[1]}});

  for (const ChartPoint& p : out.points) {
    double h = rs.value(p);
    out.level_drift = std::max(out.level_drift, std::abs(h - c));
  }
  out.closure_error = s.distance(out.points.back(), out.points.front());
  if (rs.mode() == Mode::field) {
    double b0 = rs.field().value(s, p0);
    out.component_tag = b0 > 0.0 ? 1 : -1;
  }
  return out;
}

namespace {

struct Polished {
  ChartPoint p;
  HamJet jet;
};

std::optional<Polished> polish_critical(const ReducedSystem& rs, ChartPoint p) {
  const SurfaceModel& s = rs.surface();
  double len = length_scale(s);
  for (int it = 0; it < 100; ++it) {
    p = normalize_point(s, p);
    HamJet j = rs.hamiltonian(p);
    double gn = j.grad.norm();
    auto ev = sym2_eigen(j.hess);
    double lmax = std::max(std::abs(ev[0].first), std::abs(ev[1].first));
    if (gn < 1e-13 * std::max(1.0, lmax * len)) return Polished{p, j};
    if (!(lmax > 1e-14)) return std::nullopt;
    Vec2 step{0.0, 0.0};
    for (const auto& [lam, vec] : ev) {
      if (std::abs(lam) < 1e-10 * lmax) continue;
      step += (-vec.dot(j.grad) / lam) * vec;
    }
    double sn = step.norm();
    double cap = 0.05 * len;
    if (sn > cap) step = (cap / sn) * step;
    if (!(sn > 0.0)) return std::nullopt;
    p.q += step;
  }
  return std::nullopt;
}

CriticalPoint make_critical(const ReducedSystem& rs, const Polished& pol) {
  CriticalPoint cp;
  cp.location = pol.p;
  cp.value = pol.jet.value;
  cp.hess_det = pol.jet.hess.det();
  cp.hess_trace = pol.jet.hess.trace();
  cp.grad_residual = pol.jet.grad.norm();
  bool on_circle = rs.rotationally_symmetric() && pol.p.chart == ChartId::primary;
  if (on_circle) {
    cp.type = std::abs(pol.jet.hess.xx) < 1e-8 ? CriticalType::degenerate
                                               : CriticalType::circle_extremum;
  } else if (std::abs(cp.hess_det) < 1e-8) {
    cp.type = CriticalType::degenerate;
  } else if (cp.hess_det < 0.0) {
    cp.type = CriticalType::saddle;
  } else {
    cp.type = cp.hess_trace > 0.0 ? CriticalType::minimum : CriticalType::maximum;
  }
  return cp;
}

const char* critical_type_name(CriticalType t) {
  switch (t) {
    case CriticalType::minimum: return "minimum";
    case CriticalType::maximum: return "maximum";
    case CriticalType::saddle: return "saddle";
    case CriticalType::circle_extremum: return "critical circle";
    case CriticalType::degenerate: return "degenerate";
  }
  return "?";
}

void diagnose_end(const ReducedSystem& rs, const ChartPoint& from, double last_c,
                  EndpointDiagnosis& diag) {
  auto pol = polish_critical(rs, from);
  if (!pol) {
    diag.kind = EndpointKind::budget_exhausted;
    diag.c_end = last_c;
    diag.note =
        "gradient collapsed but no critical point could be polished; "
        "inconsistent endpoint";
    return;
  }
  CriticalPoint cp = make_critical(rs, *pol);
  diag.kind = EndpointKind::critical_point;
  diag.c_end = cp.value;
  diag.location = cp.location;
  diag.degenerate =
      cp.type == CriticalType::degenerate || std::abs(cp.hess_det) < 1e-8;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "cylinder collapses at a %s, H = %.12g",
                critical_type_name(cp.type), cp.value);
  diag.note = buf;
}

}  // namespace

OrbitCylinder continue_cylinder(const ReducedSystem& rs, const LevelCircle& L0,
                                Direction direction, const ContinueBudget& budget,
                                const TraceOptions& topt) {
  double dir = direction == Direction::forward ? 1.0 : -1.0;
  std::vector<double> cs{L0.c}, Ts{L0.T};
  std::vector<ChartPoint> seeds{L0.seed};

  double spanscale = std::max(std::abs(L0.c), 0.05);
  double dc = 0.02 * spanscale;
  ChartPoint p = L0.seed;
  double cprev = L0.c;
  EndpointDiagnosis diag;
  bool ended = false;

  for (int level = 0; level < budget.max_levels && !ended; ++level) {
    double cn = cprev + dir * dc;
    if (std::abs(cn) > budget.c_limit) {
      diag.kind = EndpointKind::open_end;
      diag.c_end = cprev;
      diag.note = "level bound reached; interval end open";
      ended = true;
      break;
    }
    HamJet j = rs.hamiltonian(p);
    double g2 = j.grad.dot(j.grad);
    ChartPoint ptry = p;
    if (g2 > 0.0) ptry.q += (dir * dc / g2) * j.grad;
    try {
      LevelCircle L = trace_level_circle(rs, cn, ptry, topt);
      cs.push_back(cn);
      Ts.push_back(L.T);
      seeds.push_back(L.seed);
      p = L.seed;
      cprev = cn;
      spanscale = std::max(spanscale, std::abs(cn));
      double gnow = rs.gradient_norm(L.seed);
      if (gnow < budget.stop_grad) {
        diagnose_end(rs, p, cprev, diag);
        ended = true;
        break;
      }
      dc = std::min(dc * 1.4, 0.08 * spanscale);
    } catch (const NearCriticalError&) {
      dc *= 0.25;
      if (dc < 1e-10 * spanscale) {
        diagnose_end(rs, p, cprev, diag);
        ended = true;
      }
    } catch (const BudgetError& err) {
      diag.kind = EndpointKind::budget_exhausted;
      diag.c_end = cprev;
      diag.note = err.what();
      ended = true;
    }
  }
  if (!ended) {
    diag.kind = EndpointKind::open_end;
    diag.c_end = cprev;
    diag.note =
        "level budget exhausted with a healthy gradient; interval end "
        "appears open";
  }

  OrbitCylinder cyl;
  EndpointDiagnosis start;
  start.kind = EndpointKind::start;
  start.c_end = L0.c;
  start.note = "continuation started here";
  if (direction == Direction::forward) {
    cyl.c = std::move(cs);
    cyl.T = std::move(Ts);
    cyl.seeds = std::move(seeds);
    cyl.lower = start;
    cyl.upper = diag;
  } else {
    std::reverse(cs.begin(), cs.end());
    std::reverse(Ts.begin(), Ts.end());
    std::reverse(seeds.begin(), seeds.end());
    cyl.c = std::move(cs);
    cyl.T = std::move(Ts);
    cyl.seeds = std::move(seeds);
    cyl.lower = diag;
    cyl.upper = start;
  }
  return cyl;
}

OrbitCylinder extend_cylinder(const ReducedSystem& rs, const LevelCircle& L0,
                              const ContinueBudget& budget, const TraceOptions& topt) {
  OrbitCylinder back = continue_cylinder(rs, L0, Direction::backward, budget, topt);
  OrbitCylinder fwd = continue_cylinder(rs, L0, Direction::forward, budget, topt);
  OrbitCylinder cyl;
  cyl.c = back.c;
  cyl.T = back.T;
  cyl.seeds = back.seeds;
  cyl.c.insert(cyl.c.end(), fwd.c.begin() + 1, fwd.c.end());
  cyl.T.insert(cyl.T.end(), fwd.T.begin() + 1, fwd.T.end());
  cyl.seeds.insert(cyl.seeds.end(), fwd.seeds.begin() + 1, fwd.seeds.end());
  cyl.lower = back.lower;
  cyl.upper = fwd.upper;
  return cyl;
}

namespace {

ChartPoint nearest_seed(const OrbitCylinder& cyl, double c) {
  std::size_t best = 0;
  double bestd = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cyl.c.size(); ++i) {
    double d = std::abs(cyl.c[i] - c);
    if (d < bestd) {
      bestd = d;
      best = i;
    }
  }
  return cyl.seeds[best];
}

Verdict apply_rule(double slope, double err, double variation, double Tref,
                   double halfw, double tol) {
  double ts = std::max(std::abs(Tref), 1e-12);
  if (variation < tol * ts) return Verdict::resonant_within_tolerance;
  if (std::abs(slope) > 2.0 * err + tol * ts / std::max(halfw, 1e-300))
    return Verdict::non_resonant;
  return Verdict::undetermined;
}

// Primitive P of the area density along the first coordinate, P(0, y) = 0,
// and the analogous primitive Q along the second coordinate. Stokes turns
// the area between homologous circles into contour integrals of P dq2 or
// -Q dq1; the winding of the circles picks the primitive that is single
// valued on the strip between them.
struct AreaPrimitive {
  const SurfaceModel* s;
  bool flat = false;

  explicit AreaPrimitive(const SurfaceModel& surf) : s(&surf) {
    if (!surf.is_revolution()) {
      double d1 = surf.metric_first({ChartId::primary, {0.3 * surf.Lx(), 0.7 * surf.Ly()}})
                      .density();
      double d2 = surf.metric_first({ChartId::primary, {0.1 * surf.Lx(), 0.2 * surf.Ly()}})
                      .density();
      flat = d1 == 1.0 && d2 == 1.0;
    }
  }

  double P(double x, double y) const {
    if (s->is_revolution()) return s->area() / (4.0 * M_PI) * (1.0 - s->moment(x));
    if (flat) return x;
    int panels = 4 + static_cast<int>(std::ceil(std::abs(x)));
    return gl_integrate(
        [&](double u) {
          return s->metric_first({ChartId::primary, {u, y}}).density();
        },
        0.0, x, panels);
  }

  double Q(double x, double y) const {
    if (s->is_revolution()) {
      double a, da;
      s->profile().jet1(x, a, da);
      return a * y;
    }
    if (flat) return y;
    int panels = 4 + static_cast<int>(std::ceil(std::abs(y)));
    return gl_integrate(
        [&](double v) {
          return s->metric_first({ChartId::primary, {x, v}}).density();
        },
        0.0, y, panels);
  }
};

struct LiftedCircle {
  std::vector<Vec2> q;   // continuous primary-chart lift, last sample dropped
  std::vector<Vec2> X;   // X_H in the primary chart
  int wx = 0, wy = 0;    // winding numbers of the loop
  double T = 0.0;
};

LiftedCircle lift_circle(const ReducedSystem& rs, const LevelCircle& L,
                         const Vec2* base) {
  const SurfaceModel& s = rs.surface();
  std::size_t M = L.points.size() - 1;
  LiftedCircle out;
  out.T = L.T;
  out.q.reserve(M);
  out.X.reserve(M);
  Vec2 prev{0.0, 0.0};
  for (std::size_t k = 0; k <= M; ++k) {
    const ChartPoint& p = L.points[k];
    Vec2 qp;
    Vec2 X{0.0, 0.0};
    if (k < M) X = rs.hamiltonian_field(p);
    if (p.chart != ChartId::primary) {
      if (k < M) X = s.transfer_velocity(p, X, ChartId::primary);
      qp = s.transfer(p, ChartId::primary).q;
    } else {
      qp = p.q;
    }
    if (k == 0) {
      if (base) qp = *base + chart_delta(s, ChartId::primary, qp, *base);
    } else {
      qp = prev + chart_delta(s, ChartId::primary, qp, prev);
    }
    if (k < M) {
      out.q.push_back(qp);
      out.X.push_back(X);
    } else {
      Vec2 net = qp - out.q.front();
      if (s.is_revolution()) {
        out.wy = static_cast<int>(std::lround(net.y / (2.0 * M_PI)));
      } else {
        out.wx = static_cast<int>(std::lround(net.x / s.Lx()));
        out.wy = static_cast<int>(std::lround(net.y / s.Ly()));
      }
    }
    prev = qp;
  }
  return out;
}

double contour_area(const AreaPrimitive& prim, const LiftedCircle& L, bool x_primitive) {
  double sum = 0.0;
  std::size_t M = L.q.size();
  for (std::size_t k = 0; k < M; ++k) {
    if (x_primitive)
      sum += prim.P(L.q[k].x, L.q[k].y) * L.X[k].y;
    else
      sum -= prim.Q(L.q[k].x, L.q[k].y) * L.X[k].x;
  }
  return sum * (L.T / static_cast<double>(M));
}

}  // namespace

PeriodAreaProfile period_area_profile(const ReducedSystem& rs, const OrbitCylinder& cyl,
                                      const std::vector<double>& grid,
                                      const TraceOptions& topt, double resonance_tol) {
  PeriodAreaProfile out;
  double clo = cyl.c_minus(), chi = cyl.c_plus();
  double span = chi - clo;
  if (!(span > 0.0)) {
    out.notes.push_back("cylinder has empty parameter range");
    return out;
  }
  double margin = 1e-3 * span;
  double h = 2.5e-4 * span;  // area-slope stencil half step

  std::vector<double> cs = grid;
  std::sort(cs.begin(), cs.end());

  AreaPrimitive prim(rs.surface());
  struct Working {
    double c, T, raw, dadc;
  };
  std::vector<Working> rows;
  Vec2 base{0.0, 0.0};
  bool have_base = false, xprim = true;
  char buf[128];

  for (double c : cs) {
    if (c < clo + margin + 2.0 * h || c > chi - margin - 2.0 * h) {
      std::snprintf(buf, sizeof(buf), "grid point %.12g skipped near a cylinder end", c);
      out.notes.push_back(buf);
      continue;
    }
    try {
      LevelCircle L = trace_level_circle(rs, c, nearest_seed(cyl, c), topt);
      LiftedCircle lift = lift_circle(rs, L, have_base ? &base : nullptr);
      if (!have_base) xprim = !(lift.wx != 0 && lift.wy == 0);
      double raw = contour_area(prim, lift, xprim);
      base = lift.q.front();
      have_base = true;

      double raws[4];
      const double offs[4] = {-2.0 * h, -h, h, 2.0 * h};
      for (int i = 0; i < 4; ++i) {
        LevelCircle Ls = trace_level_circle(rs, c + offs[i], L.seed, topt);
        LiftedCircle ls = lift_circle(rs, Ls, &base);
        raws[i] = contour_area(prim, ls, xprim);
      }
      double dadc = (raws[0] - 8.0 * raws[1] + 8.0 * raws[2] - raws[3]) / (12.0 * h);
      rows.push_back({c, L.T, raw, dadc});
    } catch (const geom::DomainError& err) {
      std::snprintf(buf, sizeof(buf), "grid point %.12g skipped: %s", c, err.what());
      out.notes.push_back(buf);
    }
  }

  if (rows.empty()) return out;
  int n = static_cast<int>(rows.size());
  out.rows.resize(n);
  for (int i = 0; i < n; ++i) {
    out.rows[i].c = rows[i].c;
    out.rows[i].T = rows[i].T;
    out.rows[i].A = rows[i].raw - rows[0].raw;
    out.max_dadc_mismatch = std::max(
        out.max_dadc_mismatch, std::abs(rows[i].dadc - rows[i].T) / rows[i].T);
  }

  // local least-squares slope of T(c) and the twist verdict per row
  for (int i = 0; i < n; ++i) {
    int lo = std::clamp(i - 2, 0, std::max(0, n - 5));
    int hi = std::min(lo + 4, n - 1);
    std::vector<double> xs, ys;
    for (int j = lo; j <= hi; ++j) {
      xs.push_back(rows[j].c - rows[i].c);
      ys.push_back(rows[j].T);
    }
    int deg = std::min<int>(3, static_cast<int>(xs.size()) - 1);
    if (deg < 1) {
      out.rows[i].verdict = Verdict::undetermined;
      continue;
    }
    PolyFit fit = polyfit(xs, ys, deg);
    double variation = *std::max_element(ys.begin(), ys.end()) -
                       *std::min_element(ys.begin(), ys.end());
    double halfw = 0.5 * (rows[hi].c - rows[lo].c);
    out.rows[i].dTdc_fit = fit.coeff[1];
    out.rows[i].verdict = apply_rule(fit.coeff[1], fit.coeff_stderr[1], variation,
                                     rows[i].T, halfw, resonance_tol);
  }
  return out;
}

void write_profile_csv(std::ostream& os, const PeriodAreaProfile& profile) {
  os << "c,T,A,dTdc_fit,verdict\n";
  char buf[256];
  for (const ProfileRow& r : profile.rows) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%s\n", r.c, r.T, r.A,
                  r.dTdc_fit, verdict_name(r.verdict));
    os << buf;
  }
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::non_resonant: return "non-resonant";
    case Verdict::resonant_within_tolerance: return "resonant-within-tolerance";
    case Verdict::undetermined: return "undetermined";
  }
  return "?";
}

ResonanceVerdict classify_resonance(const ReducedSystem& rs, const OrbitCylinder& cyl,
                                    double c0, double tol, const TraceOptions& topt) {
  ResonanceVerdict out;
  out.tol = tol;
  double clo = cyl.c_minus(), chi = cyl.c_plus();
  double span = chi - clo;
  if (!(span > 0.0) || c0 <= clo || c0 >= chi) {
    out.note = "scan center outside the cylinder";
    return out;
  }
  double halfw = 0.01 * span;
  double margin = 1e-3 * span;
  double wlo = std::max(c0 - halfw, clo + margin);
  double whi = std::min(c0 + halfw, chi - margin);
  if (whi - wlo < 0.2 * halfw) {
    out.note = "scan window collapsed against a cylinder end";
    return out;
  }
  out.window_lo = wlo;
  out.window_hi = whi;

  const int N = 11;
  std::vector<double> xs, ys;
  for (int i = 0; i < N; ++i) {
    double c = wlo + (whi - wlo) * i / (N - 1);
    try {
      LevelCircle L = trace_level_circle(rs, c, nearest_seed(cyl, c), topt);
      xs.push_back(c - c0);
      ys.push_back(L.T);
    } catch (const geom::DomainError&) {
      // skipped sample; the count check below reports scarcity
    }
  }
  if (xs.size() < 6) {
    out.note = "insufficient valid samples in the scan window";
    return out;
  }
  PolyFit fit = polyfit(xs, ys, 3);
  out.dTdc = fit.coeff[1];
  out.dTdc_err = fit.coeff_stderr[1];
  out.T0 = fit.coeff[0];
  out.max_variation = *std::max_element(ys.begin(), ys.end()) -
                      *std::min_element(ys.begin(), ys.end());
  out.classification = apply_rule(out.dTdc, out.dTdc_err, out.max_variation, out.T0,
                                  0.5 * (whi - wlo), tol);
  switch (out.classification) {
    case Verdict::resonant_within_tolerance:
      out.note = "period variation below tolerance across the window";
      break;
    case Verdict::non_resonant:
      out.note = "period slope separated from the fit error";
      break;
    case Verdict::undetermined:
      out.note = "period slope not separated from the fit error";
      break;
  }
  return out;
}

std::vector<CriticalPoint> critical_points(const ReducedSystem& rs) {
  const SurfaceModel& s = rs.surface();
  std::vector<CriticalPoint> out;
  if (rs.rotationally_symmetric()) {
    for (bool north : {true, false}) {
      ChartPoint pole{north ? ChartId::north_cap : ChartId::south_cap, {0.0, 0.0}};
      HamJet j = rs.hamiltonian(pole);
      Polished pol{pole, j};
      CriticalPoint cp = make_critical(rs, pol);
      cp.grad_residual = 0.0;
      out.push_back(cp);
    }
    // interior critical latitude circles from the radial derivative
    auto dHdr = [&](double r) {
      return rs.hamiltonian({ChartId::primary, {r, 0.0}}).grad.x;
    };
    auto d2Hdr2 = [&](double r) {
      return rs.hamiltonian({ChartId::primary, {r, 0.0}}).hess.xx;
    };
    auto add_circle = [&](double rstar) {
      for (const CriticalPoint& cp : out)
        if (cp.location.chart == ChartId::primary &&
            std::abs(cp.location.q.x - rstar) < 1e-6 * s.R())
          return;
      HamJet j = rs.hamiltonian({ChartId::primary, {rstar, 0.0}});
      Polished pol{{ChartId::primary, {rstar, 0.0}}, j};
      out.push_back(make_critical(rs, pol));
    };
    const int N = 1024;
    double rlo = 2.0 * s.cap_eps(), rhi = s.R() - 2.0 * s.cap_eps();
    double gmax = 0.0;
    for (int i = 0; i <= N; ++i)
      gmax = std::max(gmax, std::abs(dHdr(rlo + (rhi - rlo) * i / N)));
    double prev = dHdr(rlo);
    for (int i = 1; i <= N; ++i) {
      double r = rlo + (rhi - rlo) * i / N;
      double cur = dHdr(r);
      if (prev == 0.0) prev = cur;
      if (prev * cur < 0.0)
        add_circle(brent_root(dHdr, rlo + (rhi - rlo) * (i - 1) / N, r, 1e-14));
      prev = cur;
    }
    // a double root of dH/dr touches zero without a sign change; catch it
    // through the inflection of H, filtered by the residual of dH/dr
    double prev2 = d2Hdr2(rlo);
    for (int i = 1; i <= N; ++i) {
      double r = rlo + (rhi - rlo) * i / N;
      double cur2 = d2Hdr2(r);
      if (prev2 == 0.0) prev2 = cur2;
      if (prev2 * cur2 < 0.0) {
        double rstar =
            brent_root(d2Hdr2, rlo + (rhi - rlo) * (i - 1) / N, r, 1e-14);
        if (std::abs(dHdr(rstar)) < 1e-7 * gmax) add_circle(rstar);
      }
      prev2 = cur2;
    }
    std::sort(out.begin(), out.end(),
              [](const CriticalPoint& a, const CriticalPoint& b) {
                return a.value < b.value;
              });
    return out;
  }
  if (s.is_revolution())
    throw ModeError(
        "critical point scan supports rotationally symmetric systems and tori");

  // torus: screen |grad H|^2 on a grid, polish local minima
  const int N = 96;
  std::vector<double> gn2(N * N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      Vec2 g = rs.hamiltonian({ChartId::primary,
                               {s.Lx() * i / N, s.Ly() * j / N}})
                   .grad;
      gn2[i * N + j] = g.dot(g);
    }
  double len = length_scale(s);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      double v = gn2[i * N + j];
      bool is_min = true;
      for (int di = -1; di <= 1 && is_min; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          int ii = (i + di + N) % N, jj = (j + dj + N) % N;
          if (gn2[ii * N + jj] < v) {
            is_min = false;
            break;
          }
        }
      if (!is_min) continue;
      auto pol = polish_critical(
          rs, {ChartId::primary, {s.Lx() * i / N, s.Ly() * j / N}});
      if (!pol) continue;
      bool dup = false;
      for (const CriticalPoint& cp : out) {
        Vec2 d = chart_delta(s, ChartId::primary, pol->p.q, cp.location.q);
        if (d.norm() < 1e-6 * len) {
          dup = true;
          break;
        }
      }
      if (!dup) out.push_back(make_critical(rs, *pol));
    }
  std::sort(out.begin(), out.end(),
            [](const CriticalPoint& a, const CriticalPoint& b) {
              return a.value < b.value;
            });
  return out;
}

BoundaryTarget BoundaryTarget::zero_set() {
  BoundaryTarget t;
  t.kind = Kind::field_zero_set;
  return t;
}
BoundaryTarget BoundaryTarget::extremum(const ChartPoint& p) {
  BoundaryTarget t;
  t.kind = Kind::extremum_point;
  t.point = p;
  return t;
}
BoundaryTarget BoundaryTarget::circle(double level) {
  BoundaryTarget t;
  t.kind = Kind::extremal_circle;
  t.level = level;
  return t;
}
BoundaryTarget BoundaryTarget::saddle(const ChartPoint& p, double delta, double eps) {
  BoundaryTarget t;
  t.kind = Kind::saddle_box;
  t.point = p;
  t.delta = delta;
  t.eps = eps;
  return t;
}

namespace {

// Traces the circle through (c, seed), grows a short cylinder around it and
// classifies the twist there. The local cylinder supplies the window span
// that the classification needs.
std::optional<BoundaryCircle> certify_level(const ReducedSystem& rs, double c,
                                            const ChartPoint& seed,
                                            const std::string& branch, double tol,
                                            const TraceOptions& topt,
                                            std::vector<std::string>& notes) {
  try {
    LevelCircle L = trace_level_circle(rs, c, seed, topt);
    ContinueBudget small;
    small.max_levels = 14;
    OrbitCylinder cyl = extend_cylinder(rs, L, small, topt);
    ResonanceVerdict v = classify_resonance(rs, cyl, L.c, tol, topt);
    return BoundaryCircle{std::move(L), std::move(v), branch};
  } catch (const geom::DomainError& err) {
    notes.push_back(branch + ": " + err.what());
    return std::nullopt;
  }
}

void scan_branch(const ReducedSystem& rs, const std::string& branch,
                 const std::function<ChartPoint(double)>& seed_at, double off0,
                 double tol, const TraceOptions& topt, BoundaryReport& rep,
                 bool& all_ok) {
  std::optional<BoundaryCircle> last;
  for (int k = 0; k < 5; ++k) {
    double off = off0 * std::pow(0.6, k);
    ChartPoint seed = seed_at(off);
    double c;
    try {
      c = rs.value(normalize_point(rs.surface(), seed));
    } catch (const geom::DomainError&) {
      continue;
    }
    if (!std::isfinite(c)) continue;
    auto bc = certify_level(rs, c, seed, branch, tol, topt, rep.notes);
    if (!bc) continue;
    last = bc;
    if (bc->verdict.classification == Verdict::non_resonant) {
      rep.circles.push_back(*bc);
      return;
    }
  }
  all_ok = false;
  if (last) rep.circles.push_back(*last);
  rep.notes.push_back("no certificate found on branch: " + branch);
}

}  // namespace

BoundaryReport locate_nonresonant_boundary(const ReducedSystem& rs,
                                           const BoundaryTarget& target,
                                           const TraceOptions& topt) {
  const SurfaceModel& s = rs.surface();
  BoundaryReport rep;
  bool all_ok = true;
  double tol = 1e-6;
  double len = length_scale(s);
  char buf[160];

  switch (target.kind) {
    case BoundaryTarget::Kind::field_zero_set: {
      if (rs.mode() != Mode::field)
        throw ModeError("zero set target needs field mode");
      // locate zero crossings of b along the coordinate axes
      struct Crossing {
        bool along_x;
        double at;
      };
      std::vector<Crossing> zs;
      auto bval = [&](bool along_x, double t) {
        ChartPoint p{ChartId::primary, along_x ? Vec2{t, 0.0} : Vec2{0.0, t}};
        return rs.field().value(s, p);
      };
      auto scan_axis = [&](bool along_x) {
        const int N = 512;
        double L = along_x ? (s.is_revolution() ? s.R() : s.Lx()) : s.Ly();
        double lo = s.is_revolution() ? 2.0 * s.cap_eps() : 0.0;
        double hi = s.is_revolution() ? L - 2.0 * s.cap_eps() : L;
        double prev = 0.0;
        for (int i = 0; i <= N; ++i) {
          double t = lo + (hi - lo) * i / N;
          double b = bval(along_x, t);
          if (i > 0 && prev * b < 0.0) {
            double tz = brent_root([&](double u) { return bval(along_x, u); },
                                   lo + (hi - lo) * (i - 1) / N, t, 1e-13);
            zs.push_back({along_x, tz});
          }
          prev = b;
        }
      };
      scan_axis(true);
      if (!s.is_revolution()) scan_axis(false);
      if (zs.empty()) {
        rep.notes.push_back("no zero set found on the probe axes");
        rep.certificate_found = false;
        return rep;
      }
      double off0 = 0.12 * len;
      for (const Crossing& z : zs) {
        for (double side : {-1.0, 1.0}) {
          std::snprintf(buf, sizeof(buf), "zero crossing %s=%.6g, %s side",
                        z.along_x ? "q1" : "q2", z.at, side < 0 ? "minus" : "plus");
          std::string branch = buf;
          scan_branch(
              rs, branch,
              [&, z, side](double off) {
                Vec2 q = z.along_x ? Vec2{z.at + side * off, 0.0}
                                   : Vec2{0.0, z.at + side * off};
                return ChartPoint{ChartId::primary, q};
              },
              off0, tol, topt, rep, all_ok);
        }
      }
      std::snprintf(buf, sizeof(buf),
                    "neighborhood of the zero set approached to offset %.4g",
                    off0 * std::pow(0.6, 4));
      rep.neighborhood = buf;
      break;
    }
    case BoundaryTarget::Kind::extremum_point: {
      auto pol = polish_critical(rs, target.point);
      if (!pol) throw geom::DomainError("no critical point near the given hint");
      CriticalPoint cp = make_critical(rs, *pol);
      if (cp.type != CriticalType::minimum && cp.type != CriticalType::maximum)
        rep.notes.push_back("polished point is not a strict extremum; scanning anyway");
      double dirn = cp.type == CriticalType::maximum ? -1.0 : 1.0;
      auto ev = sym2_eigen(pol->jet.hess);
      Vec2 u = ev[0].second;
      double d0 = 0.04 * std::max(std::abs(cp.value), 0.05);
      std::snprintf(buf, sizeof(buf), "nested circles around extremum H=%.8g",
                    cp.value);
      std::string branch = buf;
      bool done = false;
      for (int k = 0; k < 5 && !done; ++k) {
        double dlev = d0 * std::pow(0.5, k);
        double c = cp.value + dirn * dlev;
        ChartPoint seed = pol->p;
        seed.q += std::sqrt(2.0 * dlev / std::max(std::abs(ev[0].first), 1e-12)) * u;
        auto bc = certify_level(rs, c, seed, branch, tol, topt, rep.notes);
        if (bc && bc->verdict.classification == Verdict::non_resonant) {
          rep.circles.push_back(*bc);
          std::snprintf(buf, sizeof(buf),
                        "non-resonant circle at level offset %.4g from the extremum",
                        dlev);
          rep.neighborhood = buf;
          done = true;
        }
      }
      if (!done) {
        all_ok = false;
        rep.notes.push_back("no certificate found on branch: " + branch);
      }
      break;
    }
    case BoundaryTarget::Kind::extremal_circle: {
      std::vector<CriticalPoint> crits = critical_points(rs);
      const CriticalPoint* best = nullptr;
      for (const CriticalPoint& cp : crits) {
        if (cp.type != CriticalType::circle_extremum &&
            cp.type != CriticalType::degenerate)
          continue;
        if (!best || std::abs(cp.value - target.level) <
                         std::abs(best->value - target.level))
          best = &cp;
      }
      if (!best)
        throw geom::DomainError("no critical circle near the requested level");
      double c1 = best->value;
      double d0 = 0.03 * std::max(std::abs(c1), 0.05);
      for (double side : {-1.0, 1.0}) {
        std::snprintf(buf, sizeof(buf), "circles %s the critical circle H=%.8g",
                      side < 0 ? "below" : "above", c1);
        std::string branch = buf;
        bool done = false;
        for (int k = 0; k < 5 && !done; ++k) {
          double c = c1 + side * d0 * std::pow(0.5, k);
          ChartPoint seed = best->location;
          seed.q.x += side * 0.02 * len;
          auto bc = certify_level(rs, c, seed, branch, tol, topt, rep.notes);
          if (bc && bc->verdict.classification == Verdict::non_resonant) {
            rep.circles.push_back(*bc);
            done = true;
          }
        }
        if (!done) {
          all_ok = false;
          rep.notes.push_back("no certificate found on branch: " + branch);
        }
      }
      std::snprintf(buf, sizeof(buf), "two-sided scan around critical level %.8g", c1);
      rep.neighborhood = buf;
      break;
    }
    case BoundaryTarget::Kind::saddle_box: {
      auto pol = polish_critical(rs, target.point);
      if (!pol) throw geom::DomainError("no critical point near the saddle hint");
      CriticalPoint cp = make_critical(rs, *pol);
      if (cp.type != CriticalType::saddle)
        throw geom::DomainError("polished point is not a saddle");
      double c1 = cp.value;
      double dlev = target.delta * target.eps;
      std::vector<CriticalPoint> crits = critical_points(rs);
      for (const CriticalPoint& other : crits) {
        double gap = std::abs(other.value - c1);
        if (gap > 1e-10) dlev = std::min(dlev, 0.45 * gap);
      }
      auto ev = sym2_eigen(pol->jet.hess);
      Vec2 eplus = ev[0].second;   // positive eigenvalue first (descending order)
      Vec2 eminus = ev[1].second;
      double lplus = ev[0].first, lminus = ev[1].first;
      struct Quadrant {
        Vec2 dir;
        double lam;
        double sign;
        const char* name;
      } quads[4] = {{eplus, lplus, 1.0, "quadrant +u"},
                    {-1.0 * eplus, lplus, 1.0, "quadrant -u"},
                    {eminus, lminus, -1.0, "quadrant +v"},
                    {-1.0 * eminus, lminus, -1.0, "quadrant -v"}};
      for (const Quadrant& qd : quads) {
        double c = c1 + qd.sign * dlev;
        ChartPoint seed = pol->p;
        seed.q += std::sqrt(2.0 * dlev / std::max(std::abs(qd.lam), 1e-12)) * qd.dir;
        std::string branch = std::string("saddle ") + qd.name;
        auto bc = certify_level(rs, c, seed, branch, tol, topt, rep.notes);
        if (bc && bc->verdict.classification == Verdict::non_resonant) {
          rep.circles.push_back(*bc);
        } else {
          all_ok = false;
          if (bc) rep.circles.push_back(*bc);
          rep.notes.push_back("no certificate found on branch: " + branch);
        }
      }
      std::snprintf(buf, sizeof(buf),
                    "saddle H=%.8g, box (%.3g, %.3g), level offset %.4g; quadrants "
                    "in chart coordinates after Hessian normalization",
                    c1, target.delta, target.eps, dlev);
      rep.neighborhood = buf;
      break;
    }
  }
  rep.certificate_found = all_ok && !rep.circles.empty();
  return rep;
}

DichotomyReport dichotomy_report(const ReducedSystem& rs, int scan_levels, double tol,
                                 const TraceOptions& topt) {
  const SurfaceModel& s = rs.surface();
  DichotomyReport out;
  ChartPoint seed = s.is_revolution()
                        ? ChartPoint{ChartId::primary, {0.5 * s.R(), 0.0}}
                        : ChartPoint{ChartId::primary, {0.37 * s.Lx(), 0.23 * s.Ly()}};
  LevelCircle L0 = trace_level_circle(rs, rs.value(seed), seed, topt);
  OrbitCylinder cyl = extend_cylinder(rs, L0, {}, topt);
  double span = cyl.span();
  for (int i = 0; i < scan_levels; ++i) {
    double c = cyl.c_minus() + span * (0.05 + 0.9 * i / std::max(scan_levels - 1, 1));
    ResonanceVerdict v = classify_resonance(rs, cyl, c, tol, topt);
    if (v.classification == Verdict::non_resonant) {
      out.nonresonant_found = true;
      out.witness = v;
      out.witness_c = c;
      out.branch = "non-resonant circle";
      return out;
    }
  }
  out.criticals = critical_points(rs);
  bool two_extrema =
      s.is_revolution() && out.criticals.size() == 2 &&
      (out.criticals[0].type == CriticalType::minimum ||
       out.criticals[0].type == CriticalType::maximum) &&
      (out.criticals[1].type == CriticalType::minimum ||
       out.criticals[1].type == CriticalType::maximum);
  if (two_extrema) {
    out.sphere_two_critical_points = true;
    out.branch = "resonant sphere";
  } else {
    out.branch = "inconclusive";
  }
  return out;
}

}  // namespace gyrolab::reduced
