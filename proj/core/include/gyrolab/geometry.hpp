#pragma once
// Surface models for the two supported topologies: surfaces of revolution
// with closed polar caps (profile a(r) on [0, R], metric dr^2 + a^2 dphi^2)
// and flat tori (optionally with a conformal factor). A revolution surface
// carries three charts: the polar-coordinate chart away from the axis and
// one geodesic normal chart per pole, used to continue trajectories through
// the caps where the polar chart degenerates.

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gyrolab/expr.hpp"
#include "gyrolab/num.hpp"
#include "gyrolab/series.hpp"

namespace gyrolab::geom {

enum class ChartId : int { primary = 0, north_cap = 1, south_cap = 2 };

struct ChartPoint {
  ChartId chart = ChartId::primary;
  Vec2 q;

  ChartPoint() = default;
  ChartPoint(ChartId c, Vec2 p) : chart(c), q(p) {}
  ChartPoint(double q1, double q2) : chart(ChartId::primary), q{q1, q2} {}
};

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

// Metric coefficients with first and second partial derivatives.
struct MetricJet {
  double E = 1.0, F = 0.0, G = 1.0;
  Vec2 dE, dF, dG;       // (d/dq1, d/dq2)
  Sym2 d2E, d2F, d2G;
  double det() const { return E * G - F * F; }
  double density() const { return std::sqrt(det()); }
  double norm(const Vec2& v) const {
    return std::sqrt(E * v.x * v.x + 2.0 * F * v.x * v.y + G * v.y * v.y);
  }
  double inner(const Vec2& u, const Vec2& v) const {
    return E * u.x * v.x + F * (u.x * v.y + u.y * v.x) + G * u.y * v.y;
  }
  // Rotation of v by +90 degrees in the oriented tangent plane.
  Vec2 perp(const Vec2& v) const {
    double rho = density();
    return {-(F * v.x + G * v.y) / rho, (E * v.x + F * v.y) / rho};
  }
};

// First-order subset used on integration hot paths.
struct MetricFirst {
  double E = 1.0, F = 0.0, G = 1.0;
  Vec2 dE, dF, dG;
  double det() const { return E * G - F * F; }
  double density() const { return std::sqrt(det()); }
  double norm(const Vec2& v) const {
    return std::sqrt(E * v.x * v.x + 2.0 * F * v.x * v.y + G * v.y * v.y);
  }
  Vec2 perp(const Vec2& v) const {
    double rho = density();
    return {-(F * v.x + G * v.y) / rho, (E * v.x + F * v.y) / rho};
  }
};

// Christoffel symbols gamma[k][i][j] = Gamma^k_{ij}.
struct Christoffel {
  double gamma[2][2][2] = {};
  // Covariant quadratic term Gamma^k_{ij} v^i v^j.
  Vec2 quad(const Vec2& v) const {
    double vv[2] = {v.x, v.y};
    double out[2] = {0.0, 0.0};
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) out[k] += gamma[k][i][j] * vv[i] * vv[j];
    return {out[0], out[1]};
  }
};

Christoffel christoffel_from(const MetricFirst& m);

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Profile function a(r) of a surface of revolution, backed by a closed-form
// expression in r with exact derivatives through Taylor arithmetic.
class Profile {
 public:
  Profile() = default;
  static Profile from_expression(const std::string& text);

  const std::string& text() const { return text_; }
  double value(double r) const;
  // value and first derivative; cheap path for integration loops
  void jet1(double r, double& a, double& da) const;
  Series<2> jet2(double r) const;
  Series6 jet6(double r) const;

 private:
  Expr expr_;
  std::string text_;
};

struct SurfaceWarnings {
  std::vector<std::string> notes;
};

class SurfaceModel {
 public:
  enum class Kind { revolution, flat_torus };

  // Builds a revolution surface from a profile on [0, R]. Validates the
  // closed-cap conditions a(0) = 0, a'(0) = 1, a(R) = 0, a'(R) = -1 to
  // 1e-8 and positivity of a on the interior.
  static SurfaceModel revolution(const Profile& profile, double R,
                                 double cap_fraction = 1e-3);
  static SurfaceModel flat_torus(double Lx, double Ly);
  // Conformal metric psi * (dx^2 + dy^2) with psi > 0 given in x, y.
  static SurfaceModel flat_torus_conformal(double Lx, double Ly, const std::string& psi);

  Kind kind() const { return kind_; }
  bool is_revolution() const { return kind_ == Kind::revolution; }
  double R() const { return R_; }
  double Lx() const { return Lx_; }
  double Ly() const { return Ly_; }
  double cap_eps() const { return cap_eps_; }
  double area() const { return area_; }
  const Profile& profile() const { return profile_; }
  const SurfaceWarnings& warnings() const { return warnings_; }
  std::string describe() const;

  // Chart management. Trajectory integration keeps states in the chart
  // reported by preferred_chart; switch_out_radius / switch_in_radius give
  // the hysteresis band around the cap exclusion radius.
  bool chart_exists(ChartId c) const;
  double cap_domain_radius() const { return cap_domain_; }
  double switch_to_cap_radius() const { return 2.0 * cap_eps_; }
  double switch_to_primary_radius() const { return 4.0 * cap_eps_; }
  ChartId preferred_chart(const ChartPoint& p) const;
  ChartPoint transfer(const ChartPoint& p, ChartId target) const;
  Vec2 transfer_velocity(const ChartPoint& p, const Vec2& v, ChartId target) const;

  // Wraps periodic coordinates into the fundamental domain (torus only;
  // revolution charts wrap phi).
  Vec2 wrap(ChartId chart, Vec2 q) const;

  // Metric evaluation. metric_jet validates the chart domain (the polar
  // chart excludes the caps r < eps and r > R - eps); metric_first is the
  // unchecked fast path used inside integrators and tolerates small
  // excursions past the nominal chart bounds.
  MetricJet metric_jet(const ChartPoint& p) const;
  MetricFirst metric_first(const ChartPoint& p) const;

  double gauss_curvature(const ChartPoint& p) const;
  // Radial data for revolution surfaces: K(r) = -a''(r)/a(r) and its first
  // derivative, finite at the poles.
  double curvature_radial(double r) const;
  double curvature_radial_d(double r) const;
  // Curvature at a pole together with the radial second derivative used to
  // classify the critical point there.
  void curvature_pole(bool north, double& K0, double& K2) const;

  // Height above the equatorial plane of the embedding (revolution only),
  // normalized so the poles sit at +H/2 and -H/2.
  double height(double r) const;
  double height_d1(double r) const;
  double height_d2(double r) const;
  // Normalized area moment: Z(0) = 1, Z(R) = -1, Z' = -2 a / int_0^R a.
  // Coincides with the height on the round sphere.
  double moment(double r) const;
  double moment_d1(double r) const;
  double moment_d2(double r) const;

  // Profile value and derivative through the Hermite evaluation table
  // (exact expression fallback before the caches exist). Hot integration
  // loops use this instead of re-evaluating the profile expression.
  void radial_fast(double r, double& a, double& da) const;

  Vec3 embed(const ChartPoint& p) const;
  // Distance between points for closure checks: embedding chord length for
  // revolution surfaces, minimum-image distance on tori.
  double distance(const ChartPoint& a, const ChartPoint& b) const;

  // Pole Taylor data of f(a-jets): coefficient list of a(r) = sum a_k r^k
  // at the named pole (a_0 dropped), k = 1..6.
  std::array<double, 6> pole_profile_coeffs(bool north) const;

 private:
  SurfaceModel() = default;

  Kind kind_ = Kind::flat_torus;
  Profile profile_;
  double R_ = 0.0;
  double Lx_ = 2.0 * M_PI, Ly_ = 2.0 * M_PI;
  double cap_eps_ = 0.0;
  double cap_domain_ = 0.0;
  double cap_series_radius_ = 0.0;  // switch to pole Taylor data below this
  Expr conformal_;
  bool has_conformal_ = false;
  double area_ = 0.0;
  SurfaceWarnings warnings_;

  // Pole Taylor coefficients a_k (k = 1..6) at each pole, and derived cap
  // metric coefficients h(r) = (a^2 - r^2) / r^4 = h0 + h1 r + h2 r^2 + h3 r^3
  std::array<double, 6> pole_coeff_[2] = {};
  double h_coeff_[2][4] = {};

  // Cumulative quadratures: I_a(r) = int_0^r a, I_z(r) = int_0^r sqrt(1-a'^2).
  std::vector<double> grid_r_, cum_a_, cum_z_;
  double total_a_ = 0.0, total_z_ = 0.0;

  // Piecewise Hermite evaluation caches on a fine uniform grid: quintic
  // segments for the profile (value and derivative from one polynomial),
  // cubic segments for height and moment. Interpolation error sits at
  // rounding level; integration hot paths avoid per-call quadrature.
  int tab_n_ = 0;
  double tab_h_ = 0.0;
  std::vector<double> tab_prof_, tab_hgt_, tab_mom_;

  void build_revolution_caches();
  void build_radial_tables();
  void prof_fast(double r, double& a, double& da) const;
  double cum_eval(const std::vector<double>& cum, double r, bool height_integrand) const;
  // h(r), h'(r)/r, and (h'' - h'/r)/r^2 analogue for the cap metric; cap
  // index 0 = north, 1 = south.
  void cap_h(int cap, double rr, double& h, double& w1, double& w2) const;
  MetricJet cap_metric(int cap, Vec2 q, bool second_order) const;
};

// Chart-aware density integration over the whole surface or a coordinate
// rectangle of one chart. The error estimate is a Richardson comparison of
// two panel counts. Integrating a clipped polar-chart region that touches
// the excluded caps without cap correction appends a warning.
struct Region {
  enum class Kind { full_surface, chart_rect } kind = Kind::full_surface;
  ChartId chart = ChartId::primary;
  Vec2 lo, hi;
  bool cap_correction = true;

  static Region full() { return {}; }
  static Region rect(ChartId c, Vec2 lo, Vec2 hi) {
    Region r;
    r.kind = Kind::chart_rect;
    r.chart = c;
    r.lo = lo;
    r.hi = hi;
    return r;
  }
};

struct IntegralResult {
  double value = 0.0;
  double error_estimate = 0.0;
  std::vector<std::string> warnings;
};

IntegralResult integrate_density(const SurfaceModel& surface,
                                 const std::function<double(const ChartPoint&)>& density,
                                 const Region& region, int panels = 32);

// Total curvature int K dmu; equals 4*pi for spheres of revolution and 0
// for tori by Gauss-Bonnet, which the tests pin down.
IntegralResult total_curvature(const SurfaceModel& surface, int panels = 48);

}  // namespace gyrolab::geom
