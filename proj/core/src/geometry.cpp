#include "gyrolab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gyrolab::geom {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// Inclusive wrap of v into [0, L).
double wrap_period(double v, double L) {
  double w = std::fmod(v, L);
  if (w < 0.0) w += L;
  return w;
}

}  // namespace

Christoffel christoffel_from(const MetricFirst& m) {
  double det = m.det();
  double inv[2][2] = {{m.G / det, -m.F / det}, {-m.F / det, m.E / det}};
  // dg[l][a][b] = d_l g_{ab}
  double dg[2][2][2] = {
      {{m.dE.x, m.dF.x}, {m.dF.x, m.dG.x}},
      {{m.dE.y, m.dF.y}, {m.dF.y, m.dG.y}},
  };
  Christoffel out;
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        double acc = 0.0;
        for (int l = 0; l < 2; ++l)
          acc += inv[k][l] * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]);
        out.gamma[k][i][j] = 0.5 * acc;
      }
  return out;
}

// ---------------------------------------------------------------------------
// Profile

Profile Profile::from_expression(const std::string& text) {
  Profile p;
  p.expr_ = Expr::parse(text, {"r"});
  p.text_ = text;
  return p;
}

double Profile::value(double r) const {
  return expr_.eval(&r);
}

void Profile::jet1(double r, double& a, double& da) const {
  Series<1> v = Series<1>::variable(r);
  Series<1> out = expr_.eval_t<Series<1>>(&v);
  a = out.c[0];
  da = out.c[1];
}

Series<2> Profile::jet2(double r) const {
  Series<2> v = Series<2>::variable(r);
  return expr_.eval_t<Series<2>>(&v);
}

Series6 Profile::jet6(double r) const {
  Series6 v = Series6::variable(r);
  return expr_.eval_series(&v);
}

// ---------------------------------------------------------------------------
// SurfaceModel construction

SurfaceModel SurfaceModel::revolution(const Profile& profile, double R,
                                      double cap_fraction) {
  if (!(R > 0.0)) throw DomainError("revolution surface: R must be positive");
  if (!(cap_fraction > 0.0 && cap_fraction < 0.05))
    throw DomainError("revolution surface: cap fraction must lie in (0, 0.05)");

  SurfaceModel s;
  s.kind_ = Kind::revolution;
  s.profile_ = profile;
  s.R_ = R;
  s.cap_eps_ = cap_fraction * R;
  s.cap_domain_ = std::max(0.12 * R, 10.0 * s.cap_eps_);
  s.cap_series_radius_ = 0.01 * R;

  Series6 j0 = profile.jet6(0.0);
  Series6 jR = profile.jet6(R);
  const double tol = 1e-8;
  if (std::abs(j0.c[0]) > tol)
    throw DomainError("profile does not close at r = 0: a(0) = " + fmt(j0.c[0]));
  if (std::abs(j0.c[1] - 1.0) > tol)
    throw DomainError("polar cap condition a'(0) = 1 violated: a'(0) = " + fmt(j0.c[1]));
  if (std::abs(jR.c[0]) > tol)
    throw DomainError("profile does not close at r = R: a(R) = " + fmt(jR.c[0]));
  if (std::abs(jR.c[1] + 1.0) > tol)
    throw DomainError("polar cap condition a'(R) = -1 violated: a'(R) = " + fmt(jR.c[1]));
  for (int i = 1; i < 512; ++i) {
    double r = R * i / 512.0;
    if (!(profile.value(r) > 0.0))
      throw DomainError("profile must be positive on (0, R); a(" + fmt(r) + ") <= 0");
  }
  if (std::abs(j0.deriv(2)) > 1e-6 || std::abs(jR.deriv(2)) > 1e-6)
    s.warnings_.notes.push_back(
        "profile has nonzero a'' at a pole; the cap charts are only C^1 there");

  // Taylor coefficients a_k at each pole. South uses u = R - r, so odd
  // derivatives flip sign.
  for (int k = 1; k <= 6; ++k) {
    s.pole_coeff_[0][k - 1] = j0.c[k];
    s.pole_coeff_[1][k - 1] = (k % 2 == 0) ? jR.c[k] : -jR.c[k];
  }
  for (int cap = 0; cap < 2; ++cap) {
    const auto& a = s.pole_coeff_[cap];
    // (a(r)^2 - r^2) / r^4 = h0 + h1 r + h2 r^2 + h3 r^3 from the square of
    // the Taylor polynomial; the 1/r cone term 2 a1 a2 is dropped (a2 ~ 0).
    double a1 = a[0], a2 = a[1], a3 = a[2], a4 = a[3], a5 = a[4], a6 = a[5];
    s.h_coeff_[cap][0] = 2.0 * a1 * a3 + a2 * a2;
    s.h_coeff_[cap][1] = 2.0 * a1 * a4 + 2.0 * a2 * a3;
    s.h_coeff_[cap][2] = 2.0 * a1 * a5 + 2.0 * a2 * a4 + a3 * a3;
    s.h_coeff_[cap][3] = 2.0 * a1 * a6 + 2.0 * a2 * a5 + 2.0 * a3 * a4;
  }

  s.build_revolution_caches();
  return s;
}

SurfaceModel SurfaceModel::flat_torus(double Lx, double Ly) {
  if (!(Lx > 0.0) || !(Ly > 0.0)) throw DomainError("flat torus: periods must be positive");
  SurfaceModel s;
  s.kind_ = Kind::flat_torus;
  s.Lx_ = Lx;
  s.Ly_ = Ly;
  s.area_ = Lx * Ly;
  return s;
}

SurfaceModel SurfaceModel::flat_torus_conformal(double Lx, double Ly,
                                                const std::string& psi) {
  SurfaceModel s = flat_torus(Lx, Ly);
  s.conformal_ = Expr::parse(psi, {"x", "y"});
  s.has_conformal_ = true;
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j) {
      double v[2] = {Lx * i / 32.0, Ly * j / 32.0};
      if (!(s.conformal_.eval(v) > 0.0))
        throw DomainError("conformal factor must be positive; failed at (" +
                          fmt(v[0]) + ", " + fmt(v[1]) + ")");
    }
  // Area of the conformal metric by quadrature.
  auto density_one = [](const ChartPoint&) { return 1.0; };
  s.area_ = 0.0;  // integrate_density needs area_ unset only for reporting
  IntegralResult a = integrate_density(s, density_one, Region::full(), 48);
  s.area_ = a.value;
  return s;
}

void SurfaceModel::build_revolution_caches() {
  const int npanel = 2048;
  grid_r_.resize(npanel + 1);
  cum_a_.resize(npanel + 1);
  cum_z_.resize(npanel + 1);
  const auto& nw = gauss_legendre(8);
  double h = R_ / npanel;
  cum_a_[0] = cum_z_[0] = 0.0;
  for (int i = 0; i < npanel; ++i) {
    double lo = i * h, mid = lo + 0.5 * h, half = 0.5 * h;
    double acc_a = 0.0, acc_z = 0.0;
    for (const auto& [xi, wi] : nw) {
      double r = mid + half * xi;
      double a, da;
      profile_.jet1(r, a, da);
      acc_a += wi * a;
      acc_z += wi * std::sqrt(std::max(0.0, 1.0 - da * da));
    }
    grid_r_[i] = lo;
    cum_a_[i + 1] = cum_a_[i] + acc_a * half;
    cum_z_[i + 1] = cum_z_[i] + acc_z * half;
  }
  grid_r_[npanel] = R_;
  total_a_ = cum_a_[npanel];
  total_z_ = cum_z_[npanel];
  area_ = 2.0 * M_PI * total_a_;
  build_radial_tables();
}

void SurfaceModel::build_radial_tables() {
  // tab_n_ is still zero here, so height()/moment() below go through the
  // cumulative-quadrature path while the tables are filled.
  const int n = 4096;
  const double h = R_ / n;
  tab_prof_.assign(6 * n, 0.0);
  tab_hgt_.assign(4 * n, 0.0);
  tab_mom_.assign(4 * n, 0.0);
  Series<2> jl = profile_.jet2(0.0);
  double hl = height(0.0), ml = moment(0.0);
  double dhl = height_d1(0.0), dml = moment_d1(0.0);
  for (int i = 0; i < n; ++i) {
    double r1 = (i + 1 == n) ? R_ : (i + 1) * h;
    Series<2> jr = profile_.jet2(r1);
    // Quintic Hermite for the profile in local u = (r - r_i)/h; value and
    // derivative come from the same polynomial, so downstream metric terms
    // stay consistent with each other.
    double a0 = jl.c[0], d0 = h * jl.deriv(1), s0 = h * h * jl.deriv(2);
    double a1 = jr.c[0], d1 = h * jr.deriv(1), s1 = h * h * jr.deriv(2);
    double A = a1 - a0 - d0 - 0.5 * s0;
    double B = d1 - d0 - s0;
    double C = s1 - s0;
    double* p = &tab_prof_[6 * i];
    p[0] = a0;
    p[1] = d0;
    p[2] = 0.5 * s0;
    p[3] = 10.0 * A - 4.0 * B + 0.5 * C;
    p[4] = -15.0 * A + 7.0 * B - C;
    p[5] = 6.0 * A - 3.0 * B + 0.5 * C;
    auto cubic = [h](double f0, double f1, double g0, double g1, double* c) {
      double gg0 = h * g0, gg1 = h * g1, delta = f1 - f0;
      c[0] = f0;
      c[1] = gg0;
      c[2] = 3.0 * delta - 2.0 * gg0 - gg1;
      c[3] = -2.0 * delta + gg0 + gg1;
    };
    double hr = height(r1), mr = moment(r1);
    double dhr = height_d1(r1), dmr = moment_d1(r1);
    cubic(hl, hr, dhl, dhr, &tab_hgt_[4 * i]);
    cubic(ml, mr, dml, dmr, &tab_mom_[4 * i]);
    jl = jr;
    hl = hr;
    ml = mr;
    dhl = dhr;
    dml = dmr;
  }
  tab_h_ = h;
  tab_n_ = n;
}

void SurfaceModel::radial_fast(double r, double& a, double& da) const {
  if (tab_n_ > 0)
    prof_fast(r, a, da);
  else
    profile_.jet1(r, a, da);
}

void SurfaceModel::prof_fast(double r, double& a, double& da) const {
  int i = std::clamp(static_cast<int>(r / tab_h_), 0, tab_n_ - 1);
  double u = r / tab_h_ - i;
  const double* p = &tab_prof_[6 * i];
  a = p[0] + u * (p[1] + u * (p[2] + u * (p[3] + u * (p[4] + u * p[5]))));
  da = (p[1] + u * (2.0 * p[2] + u * (3.0 * p[3] + u * (4.0 * p[4] + u * 5.0 * p[5])))) / tab_h_;
}

double SurfaceModel::cum_eval(const std::vector<double>& cum, double r,
                              bool height_integrand) const {
  const int npanel = static_cast<int>(cum.size()) - 1;
  double h = R_ / npanel;
  double rc = std::clamp(r, 0.0, R_);
  int i = std::min(static_cast<int>(rc / h), npanel - 1);
  double lo = i * h;
  double acc = cum[i];
  if (rc > lo) {
    const auto& nw = gauss_legendre(8);
    double mid = 0.5 * (lo + rc), half = 0.5 * (rc - lo);
    double part = 0.0;
    for (const auto& [xi, wi] : nw) {
      double rr = mid + half * xi;
      double a, da;
      profile_.jet1(rr, a, da);
      part += wi * (height_integrand ? std::sqrt(std::max(0.0, 1.0 - da * da)) : a);
    }
    acc += part * half;
  }
  return acc;
}

std::string SurfaceModel::describe() const {
  std::ostringstream os;
  if (kind_ == Kind::revolution)
    os << "revolution(a = " << profile_.text() << ", R = " << fmt(R_) << ")";
  else if (has_conformal_)
    os << "flat-torus(" << fmt(Lx_) << " x " << fmt(Ly_) << ", psi = "
       << conformal_.text() << ")";
  else
    os << "flat-torus(" << fmt(Lx_) << " x " << fmt(Ly_) << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// Charts

bool SurfaceModel::chart_exists(ChartId c) const {
  if (c == ChartId::primary) return true;
  return kind_ == Kind::revolution;
}

ChartId SurfaceModel::preferred_chart(const ChartPoint& p) const {
  if (kind_ != Kind::revolution) return ChartId::primary;
  switch (p.chart) {
    case ChartId::primary: {
      if (p.q.x < switch_to_cap_radius()) return ChartId::north_cap;
      if (p.q.x > R_ - switch_to_cap_radius()) return ChartId::south_cap;
      return ChartId::primary;
    }
    case ChartId::north_cap:
    case ChartId::south_cap: {
      double rr = p.q.norm();
      return rr > switch_to_primary_radius() ? ChartId::primary : p.chart;
    }
  }
  return ChartId::primary;
}

ChartPoint SurfaceModel::transfer(const ChartPoint& p, ChartId target) const {
  if (p.chart == target) return p;
  if (kind_ != Kind::revolution)
    throw DomainError("chart transfer requested on a single-chart surface");
  // Route through polar coordinates.
  double r, phi;
  switch (p.chart) {
    case ChartId::primary:
      r = p.q.x;
      phi = p.q.y;
      break;
    case ChartId::north_cap:
      r = p.q.norm();
      phi = std::atan2(p.q.y, p.q.x);
      break;
    case ChartId::south_cap:
      r = R_ - p.q.norm();
      phi = std::atan2(-p.q.y, p.q.x);
      break;
    default:
      throw DomainError("unknown chart");
  }
  switch (target) {
    case ChartId::primary:
      return {ChartId::primary, {r, phi}};
    case ChartId::north_cap:
      return {ChartId::north_cap, {r * std::cos(phi), r * std::sin(phi)}};
    case ChartId::south_cap: {
      double u = R_ - r;
      return {ChartId::south_cap, {u * std::cos(phi), -u * std::sin(phi)}};
    }
  }
  throw DomainError("unknown chart");
}

Vec2 SurfaceModel::transfer_velocity(const ChartPoint& p, const Vec2& v,
                                     ChartId target) const {
  if (p.chart == target) return v;
  // First express (r_dot, phi_dot), then push into the target chart.
  double r, phi, rdot, phidot;
  switch (p.chart) {
    case ChartId::primary:
      r = p.q.x;
      phi = p.q.y;
      rdot = v.x;
      phidot = v.y;
      break;
    case ChartId::north_cap: {
      double rr = p.q.norm();
      r = rr;
      phi = std::atan2(p.q.y, p.q.x);
      rdot = (p.q.x * v.x + p.q.y * v.y) / rr;
      phidot = (p.q.x * v.y - p.q.y * v.x) / (rr * rr);
      break;
    }
    case ChartId::south_cap: {
      double rr = p.q.norm();
      r = R_ - rr;
      phi = std::atan2(-p.q.y, p.q.x);
      double srdot = (p.q.x * v.x + p.q.y * v.y) / rr;   // d/dt (R - r)
      double psidot = (p.q.x * v.y - p.q.y * v.x) / (rr * rr);  // psi = -phi
      rdot = -srdot;
      phidot = -psidot;
      break;
    }
    default:
      throw DomainError("unknown chart");
  }
  switch (target) {
    case ChartId::primary:
      return {rdot, phidot};
    case ChartId::north_cap: {
      double c = std::cos(phi), s = std::sin(phi);
      return {rdot * c - r * s * phidot, rdot * s + r * c * phidot};
    }
    case ChartId::south_cap: {
      double u = R_ - r, udot = -rdot, psidot = -phidot;
      double c = std::cos(-phi), s = std::sin(-phi);
      // (u cos psi, u sin psi) with psi = -phi
      return {udot * c - u * s * psidot, udot * s + u * c * psidot};
    }
  }
  throw DomainError("unknown chart");
}

Vec2 SurfaceModel::wrap(ChartId chart, Vec2 q) const {
  if (kind_ == Kind::flat_torus)
    return {wrap_period(q.x, Lx_), wrap_period(q.y, Ly_)};
  if (chart == ChartId::primary) return {q.x, wrap_period(q.y, 2.0 * M_PI)};
  return q;
}

// ---------------------------------------------------------------------------
// Metric evaluation

void SurfaceModel::cap_h(int cap, double rr, double& h, double& w1, double& w2) const {
  const double h0 = h_coeff_[cap][0], h1 = h_coeff_[cap][1];
  const double h2 = h_coeff_[cap][2], h3 = h_coeff_[cap][3];
  if (rr < cap_series_radius_) {
    h = h0 + (h1 + (h2 + h3 * rr) * rr) * rr;
    // w1 = h'/r and w2 = (h'' - h'/r)/r^2 carry 1/r pieces from the odd
    // coefficients; they always appear multiplied by powers of the
    // coordinates that keep the products bounded.
    w1 = h1 / rr + 2.0 * h2 + 3.0 * h3 * rr;
    w2 = -h1 / (rr * rr * rr) + 3.0 * h3 / rr;
    return;
  }
  // Direct formulas from the profile jet; safe away from the pole.
  double r_polar = (cap == 0) ? rr : R_ - rr;
  Series<2> j = profile_.jet2(r_polar);
  double a = j.c[0];
  double da = (cap == 0) ? j.deriv(1) : -j.deriv(1);
  double dda = j.deriv(2);
  double r2 = rr * rr, r4 = r2 * r2;
  double diff = (a - rr) * (a + rr);
  h = diff / r4;
  double hp = (2.0 * a * da - 2.0 * rr) / r4 - 4.0 * diff / (r4 * rr);
  double hpp = (2.0 * da * da + 2.0 * a * dda - 2.0) / r4 -
               16.0 * (a * da - rr) / (r4 * rr) + 20.0 * diff / (r4 * r2);
  w1 = hp / rr;
  w2 = (hpp - w1) / r2;
}

MetricJet SurfaceModel::cap_metric(int cap, Vec2 q, bool second_order) const {
  MetricJet m;
  double rr = q.norm();
  if (rr < 1e-12) {
    // Exact pole: normal coordinates to second order.
    double h0 = h_coeff_[cap][0];
    m.E = 1.0;
    m.F = 0.0;
    m.G = 1.0;
    if (second_order) {
      m.d2E = {0.0, 0.0, 2.0 * h0};
      m.d2F = {0.0, -h0, 0.0};
      m.d2G = {2.0 * h0, 0.0, 0.0};
    }
    return m;
  }
  double h, w1, w2;
  cap_h(cap, rr, h, w1, w2);
  double x = q.x, y = q.y;
  double x2 = x * x, y2 = y * y, xy = x * y;
  m.E = 1.0 + h * y2;
  m.F = -h * xy;
  m.G = 1.0 + h * x2;
  m.dE = {w1 * x * y2, w1 * y * y2 + 2.0 * h * y};
  m.dF = {-(w1 * x2 * y + h * y), -(w1 * x * y2 + h * x)};
  m.dG = {w1 * x * x2 + 2.0 * h * x, w1 * y * x2};
  if (second_order) {
    m.d2E = {w1 * y2 + w2 * x2 * y2, 2.0 * w1 * xy + w2 * x * y * y2,
             w2 * y2 * y2 + 5.0 * w1 * y2 + 2.0 * h};
    m.d2F = {-(w2 * x2 * xy + 3.0 * w1 * xy), -(w2 * x2 * y2 + w1 * x2 + w1 * y2 + h),
             -(w2 * xy * y2 + 3.0 * w1 * xy)};
    m.d2G = {w2 * x2 * x2 + 5.0 * w1 * x2 + 2.0 * h, 2.0 * w1 * xy + w2 * x2 * xy,
             w1 * x2 + w2 * y2 * x2};
  }
  return m;
}

MetricJet SurfaceModel::metric_jet(const ChartPoint& p) const {
  MetricJet m;
  if (kind_ == Kind::flat_torus) {
    if (!has_conformal_) return m;  // identity metric
    Vec2 w = wrap(ChartId::primary, p.q);
    Jet2 vars[2] = {Jet2::var_x(w.x), Jet2::var_y(w.y)};
    Jet2 psi = conformal_.eval_jet(vars);
    m.E = m.G = psi.v;
    m.dE = m.dG = {psi.gx, psi.gy};
    m.d2E = m.d2G = {psi.hxx, psi.hxy, psi.hyy};
    return m;
  }
  switch (p.chart) {
    case ChartId::primary: {
      double r = p.q.x;
      if (r < cap_eps_ || r > R_ - cap_eps_)
        throw DomainError("point outside polar chart domain r in [" + fmt(cap_eps_) +
                          ", " + fmt(R_ - cap_eps_) + "]: r = " + fmt(r) +
                          " (use the cap charts inside the poles)");
      Series<2> j = profile_.jet2(r);
      double a = j.c[0], da = j.deriv(1), dda = j.deriv(2);
      m.G = a * a;
      m.dG = {2.0 * a * da, 0.0};
      m.d2G = {2.0 * (da * da + a * dda), 0.0, 0.0};
      return m;
    }
    case ChartId::north_cap:
    case ChartId::south_cap: {
      double rr = p.q.norm();
      if (rr > cap_domain_)
        throw DomainError("point outside cap chart domain |q| <= " + fmt(cap_domain_) +
                          ": |q| = " + fmt(rr));
      return cap_metric(p.chart == ChartId::north_cap ? 0 : 1, p.q, true);
    }
  }
  throw DomainError("unknown chart");
}

MetricFirst SurfaceModel::metric_first(const ChartPoint& p) const {
  MetricFirst m;
  if (kind_ == Kind::flat_torus) {
    if (!has_conformal_) return m;
    Vec2 w = wrap(ChartId::primary, p.q);
    Jet2 vars[2] = {Jet2::var_x(w.x), Jet2::var_y(w.y)};
    Jet2 psi = conformal_.eval_jet(vars);
    m.E = m.G = psi.v;
    m.dE = m.dG = {psi.gx, psi.gy};
    return m;
  }
  if (p.chart == ChartId::primary) {
    double a, da;
    if (tab_n_ > 0)
      prof_fast(p.q.x, a, da);
    else
      profile_.jet1(p.q.x, a, da);
    m.G = a * a;
    m.dG = {2.0 * a * da, 0.0};
    return m;
  }
  MetricJet mj = cap_metric(p.chart == ChartId::north_cap ? 0 : 1, p.q, false);
  m.E = mj.E;
  m.F = mj.F;
  m.G = mj.G;
  m.dE = mj.dE;
  m.dF = mj.dF;
  m.dG = mj.dG;
  return m;
}

// ---------------------------------------------------------------------------
// Curvature

double SurfaceModel::curvature_radial(double r) const {
  // K = -a''/a with series handling at the poles (the ratio is finite).
  auto series_K = [&](int cap, double u) {
    const auto& a = pole_coeff_[cap];
    double num[5], den[5];
    for (int k = 0; k < 5; ++k) {
      num[k] = (k + 2.0) * (k + 1.0) * (k + 1 < 6 ? a[k + 1] : 0.0);
      den[k] = a[k];
    }
    // Power series division q = num/den; drop the cone term q0/r.
    double q[5];
    for (int k = 0; k < 5; ++k) {
      double acc = num[k];
      for (int j = 0; j < k; ++j) acc -= q[j] * den[k - j];
      q[k] = acc / den[0];
    }
    return -(q[1] + u * (q[2] + u * (q[3] + u * q[4])));
  };
  if (r < cap_series_radius_) return series_K(0, r);
  if (r > R_ - cap_series_radius_) return series_K(1, R_ - r);
  Series<2> j = profile_.jet2(r);
  return -j.deriv(2) / j.c[0];
}

double SurfaceModel::curvature_radial_d(double r) const {
  auto series_Kd = [&](int cap, double u, double sign) {
    const auto& a = pole_coeff_[cap];
    double num[5], den[5], q[5];
    for (int k = 0; k < 5; ++k) {
      num[k] = (k + 2.0) * (k + 1.0) * (k + 1 < 6 ? a[k + 1] : 0.0);
      den[k] = a[k];
    }
    for (int k = 0; k < 5; ++k) {
      double acc = num[k];
      for (int j = 0; j < k; ++j) acc -= q[j] * den[k - j];
      q[k] = acc / den[0];
    }
    return sign * (-(q[2] + u * (2.0 * q[3] + 3.0 * u * q[4])));
  };
  if (r < cap_series_radius_) return series_Kd(0, r, 1.0);
  if (r > R_ - cap_series_radius_) return series_Kd(1, R_ - r, -1.0);
  Series6 j = profile_.jet6(r);
  double a = j.c[0], da = j.deriv(1), dda = j.deriv(2), ddda = j.deriv(3);
  return -ddda / a + dda * da / (a * a);
}

void SurfaceModel::curvature_pole(bool north, double& K0, double& K2) const {
  int cap = north ? 0 : 1;
  const auto& a = pole_coeff_[cap];
  double num[5], den[5], q[5];
  for (int k = 0; k < 5; ++k) {
    num[k] = (k + 2.0) * (k + 1.0) * (k + 1 < 6 ? a[k + 1] : 0.0);
    den[k] = a[k];
  }
  for (int k = 0; k < 5; ++k) {
    double acc = num[k];
    for (int j = 0; j < k; ++j) acc -= q[j] * den[k - j];
    q[k] = acc / den[0];
  }
  K0 = -q[1];
  K2 = -q[3];  // coefficient of u^2 in K(u)
}

double SurfaceModel::gauss_curvature(const ChartPoint& p) const {
  if (kind_ == Kind::flat_torus) {
    if (!has_conformal_) return 0.0;
    Vec2 w = wrap(ChartId::primary, p.q);
    Jet2 vars[2] = {Jet2::var_x(w.x), Jet2::var_y(w.y)};
    Jet2 psi = conformal_.eval_jet(vars);
    double lap_log = (psi.hxx + psi.hyy) / psi.v -
                     (psi.gx * psi.gx + psi.gy * psi.gy) / (psi.v * psi.v);
    return -lap_log / (2.0 * psi.v);
  }
  switch (p.chart) {
    case ChartId::primary:
      return curvature_radial(p.q.x);
    case ChartId::north_cap:
      return curvature_radial(p.q.norm());
    case ChartId::south_cap:
      return curvature_radial(R_ - p.q.norm());
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Height and moment

namespace {
double hermite3(const std::vector<double>& tab, int n, double h, double r) {
  int i = std::clamp(static_cast<int>(r / h), 0, n - 1);
  double u = r / h - i;
  const double* c = &tab[4 * i];
  return c[0] + u * (c[1] + u * (c[2] + u * c[3]));
}
}  // namespace

double SurfaceModel::height(double r) const {
  if (tab_n_ > 0) return hermite3(tab_hgt_, tab_n_, tab_h_, std::clamp(r, 0.0, R_));
  return 0.5 * total_z_ - cum_eval(cum_z_, r, true);
}

double SurfaceModel::height_d1(double r) const {
  // z' = -sqrt(1 - a'^2) is negative toward both poles; in the series form
  // u is the distance to the nearest pole.
  auto series_zp = [&](int cap, double u) {
    const auto& a = pole_coeff_[cap];
    double a2 = a[1], a3 = a[2], a4 = a[3], a5 = a[4];
    double u0 = -(6.0 * a3 + 4.0 * a2 * a2);
    double u1 = -(8.0 * a4 + 12.0 * a2 * a3);
    double u2 = -(10.0 * a5 + 16.0 * a2 * a4 + 9.0 * a3 * a3);
    double ui = std::max(0.0, u0 + u * (u1 + u * u2));
    return -u * std::sqrt(ui);
  };
  // The direct form only loses ~eps/u^2 to cancellation, so the truncated
  // pole series earns its keep much closer to the pole than the other
  // cap series.
  double seam = 1e-3 * R_;
  if (r < seam) return series_zp(0, r);
  if (r > R_ - seam) return series_zp(1, R_ - r);
  double a, da;
  profile_.jet1(r, a, da);
  return -std::sqrt(std::max(0.0, 1.0 - da * da));
}

double SurfaceModel::height_d2(double r) const {
  auto series_zpp = [&](int cap, double u) {
    const auto& a = pole_coeff_[cap];
    double a2 = a[1], a3 = a[2], a4 = a[3], a5 = a[4];
    double u0 = -(6.0 * a3 + 4.0 * a2 * a2);
    double u1 = -(8.0 * a4 + 12.0 * a2 * a3);
    double u2 = -(10.0 * a5 + 16.0 * a2 * a4 + 9.0 * a3 * a3);
    double uv = std::max(1e-300, u0 + u * (u1 + u * u2));
    double duv = u1 + 2.0 * u2 * u;
    // z' = -u sqrt(uv); d/du gives -(sqrt(uv) + u duv / (2 sqrt(uv))).
    return -(std::sqrt(uv) + u * duv / (2.0 * std::sqrt(uv)));
  };
  // z'' = a' a'' / sqrt(1 - a'^2); the series form is used at the poles,
  // with the same narrow seam as height_d1.
  // South side: u = R - r, so d/dr flips the sign of d/du once.
  double seam = 1e-3 * R_;
  if (r < seam) return series_zpp(0, r);
  if (r > R_ - seam) return -series_zpp(1, R_ - r);
  Series<2> j = profile_.jet2(r);
  double da = j.deriv(1), dda = j.deriv(2);
  double root = std::sqrt(std::max(1e-300, 1.0 - da * da));
  return da * dda / root;
}

double SurfaceModel::moment(double r) const {
  if (tab_n_ > 0) return hermite3(tab_mom_, tab_n_, tab_h_, std::clamp(r, 0.0, R_));
  return 1.0 - 2.0 * cum_eval(cum_a_, r, false) / total_a_;
}

double SurfaceModel::moment_d1(double r) const {
  return -2.0 * profile_.value(r) / total_a_;
}

double SurfaceModel::moment_d2(double r) const {
  double a, da;
  profile_.jet1(r, a, da);
  return -2.0 * da / total_a_;
}

// ---------------------------------------------------------------------------
// Embedding and distances

Vec3 SurfaceModel::embed(const ChartPoint& p) const {
  if (kind_ == Kind::flat_torus) {
    Vec2 w = wrap(ChartId::primary, p.q);
    return {w.x, w.y, 0.0};
  }
  double r, cphi, sphi;
  switch (p.chart) {
    case ChartId::primary:
      r = p.q.x;
      cphi = std::cos(p.q.y);
      sphi = std::sin(p.q.y);
      break;
    case ChartId::north_cap: {
      double rr = p.q.norm();
      r = rr;
      if (rr < 1e-9) return {p.q.x, p.q.y, height(0.0)};
      cphi = p.q.x / rr;
      sphi = p.q.y / rr;
      break;
    }
    case ChartId::south_cap: {
      double rr = p.q.norm();
      r = R_ - rr;
      if (rr < 1e-9) return {p.q.x, -p.q.y, height(R_)};
      cphi = p.q.x / rr;
      sphi = -p.q.y / rr;
      break;
    }
    default:
      throw DomainError("unknown chart");
  }
  double a = profile_.value(std::clamp(r, 0.0, R_));
  return {a * cphi, a * sphi, height(r)};
}

double SurfaceModel::distance(const ChartPoint& a, const ChartPoint& b) const {
  if (kind_ == Kind::flat_torus) {
    Vec2 wa = wrap(ChartId::primary, a.q), wb = wrap(ChartId::primary, b.q);
    double dx = std::abs(wa.x - wb.x), dy = std::abs(wa.y - wb.y);
    dx = std::min(dx, Lx_ - dx);
    dy = std::min(dy, Ly_ - dy);
    double scale = 1.0;
    if (has_conformal_) {
      double v[2] = {wa.x, wa.y};
      scale = std::sqrt(conformal_.eval(v));
    }
    return scale * std::hypot(dx, dy);
  }
  return (embed(a) - embed(b)).norm();
}

std::array<double, 6> SurfaceModel::pole_profile_coeffs(bool north) const {
  return pole_coeff_[north ? 0 : 1];
}

// ---------------------------------------------------------------------------
// Quadrature

namespace {

double rect_integral(const SurfaceModel& surface, ChartId chart,
                     const std::function<double(const ChartPoint&)>& density,
                     Vec2 lo, Vec2 hi, int panels_x, int panels_y, int order) {
  const auto& nw = gauss_legendre(order);
  double hx = (hi.x - lo.x) / panels_x;
  double hy = (hi.y - lo.y) / panels_y;
  double total = 0.0;
  for (int px = 0; px < panels_x; ++px) {
    double mx = lo.x + (px + 0.5) * hx;
    for (int py = 0; py < panels_y; ++py) {
      double my = lo.y + (py + 0.5) * hy;
      double acc = 0.0;
      for (const auto& [xi, wx] : nw) {
        double qx = mx + 0.5 * hx * xi;
        for (const auto& [eta, wy] : nw) {
          double qy = my + 0.5 * hy * eta;
          ChartPoint p{chart, {qx, qy}};
          acc += wx * wy * density(p) * surface.metric_first(p).density();
        }
      }
      total += acc * 0.25 * hx * hy;
    }
  }
  return total;
}

}  // namespace

IntegralResult integrate_density(const SurfaceModel& surface,
                                 const std::function<double(const ChartPoint&)>& density,
                                 const Region& region, int panels) {
  IntegralResult out;
  Vec2 lo, hi;
  ChartId chart = ChartId::primary;
  if (region.kind == Region::Kind::full_surface) {
    if (surface.kind() == SurfaceModel::Kind::revolution) {
      double r0 = 0.0, r1 = surface.R();
      if (!region.cap_correction) {
        r0 = surface.cap_eps();
        r1 = surface.R() - surface.cap_eps();
        out.warnings.push_back(
            "integration region clipped to the polar chart; pole caps of total area ~" +
            fmt(M_PI * surface.cap_eps() * surface.cap_eps() * 2.0) + " are excluded");
      }
      lo = {r0, 0.0};
      hi = {r1, 2.0 * M_PI};
    } else {
      lo = {0.0, 0.0};
      hi = {surface.Lx(), surface.Ly()};
    }
  } else {
    chart = region.chart;
    lo = region.lo;
    hi = region.hi;
    if (surface.kind() == SurfaceModel::Kind::revolution && chart == ChartId::primary &&
        !region.cap_correction &&
        (lo.x < surface.cap_eps() || hi.x > surface.R() - surface.cap_eps()))
      out.warnings.push_back("chart rectangle overlaps the excluded pole caps");
  }
  int px = panels, py = std::max(8, panels / 2);
  double coarse = rect_integral(surface, chart, density, lo, hi, px, py, 8);
  double fine = rect_integral(surface, chart, density, lo, hi, 2 * px, 2 * py, 8);
  out.value = fine;
  out.error_estimate = std::abs(fine - coarse);
  return out;
}

IntegralResult total_curvature(const SurfaceModel& surface, int panels) {
  auto k = [&](const ChartPoint& p) { return surface.gauss_curvature(p); };
  return integrate_density(surface, k, Region::full(), panels);
}

}  // namespace gyrolab::geom
