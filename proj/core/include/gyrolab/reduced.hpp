#pragma once
// Planar Hamiltonian reduction of strong-field magnetic flows. In the
// strong-field limit the guiding center of a gyrating orbit drifts along
// level sets of an autonomous Hamiltonian on the surface, with the metric
// area form as symplectic form. This module builds that Hamiltonian,
// traces its level circles, continues them into maximal orbit cylinders,
// computes period and area profiles, and classifies the twist (resonance)
// of each cylinder.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gyrolab/field.hpp"
#include "gyrolab/geometry.hpp"

namespace gyrolab::reduced {

using geom::ChartId;
using geom::ChartPoint;
using geom::SurfaceModel;

struct NearCriticalError : geom::DomainError {
  using DomainError::DomainError;
};
struct BudgetError : geom::DomainError {
  using DomainError::DomainError;
};
struct ModeError : geom::DomainError {
  using DomainError::DomainError;
};

enum class Mode { field, curvature, synthetic };

struct HamJet {
  double value = 0.0;
  Vec2 grad;   // chart partials
  Sym2 hess;
};

// The reduced Hamiltonian with gradient and Hessian, chart covariant.
// field mode: H = 1/(2 b^2) on {b != 0}; curvature mode: H = K, meaningful
// when b is constant; synthetic mode: H given directly by an expression,
// radial in r on surfaces of revolution, periodic in x,y on tori.
class ReducedSystem {
 public:
  // Dispatches on the field: constant b selects curvature mode, anything
  // else field mode. Throws on b identically zero and on flat surfaces in
  // curvature mode, where H would be constant.
  static ReducedSystem make(const SurfaceModel& surface, const field::FieldSpec& field);

  static ReducedSystem field_mode(const SurfaceModel& surface, const field::FieldSpec& field);
  static ReducedSystem curvature_mode(const SurfaceModel& surface,
                                      const field::FieldSpec& field);
  // Config-supplied analytic curvature for non-revolution surfaces.
  static ReducedSystem curvature_mode_analytic(const SurfaceModel& surface,
                                               const std::string& k_expr);
  static ReducedSystem synthetic(const SurfaceModel& surface, const std::string& expr);

  HamJet hamiltonian(const ChartPoint& p) const;
  double value(const ChartPoint& p) const;
  // X_H with the convention omega(X_H, .) = -dH, omega the metric area form.
  Vec2 hamiltonian_field(const ChartPoint& p) const;
  // |grad H| in the surface metric.
  double gradient_norm(const ChartPoint& p) const;

  const SurfaceModel& surface() const { return surface_; }
  const field::FieldSpec& field() const { return field_; }
  Mode mode() const { return mode_; }
  bool rotationally_symmetric() const;
  // Rescaled Hamiltonian factor*H, for covariance checks.
  ReducedSystem scaled(double factor) const;
  double scale() const { return scale_; }
  std::string describe() const;

 private:
  explicit ReducedSystem(const SurfaceModel& s) : surface_(s) {}
  SurfaceModel surface_;
  field::FieldSpec field_;
  Expr expr_;
  std::string expr_text_;
  Mode mode_ = Mode::field;
  double scale_ = 1.0;
};

struct TraceOptions {
  double rtol = 1e-12;
  double atol = 1e-14;
  double grad_floor = 1e-9;   // below this |grad H| the level counts as critical
  int max_steps = 200000;
  int samples = 256;          // uniform-in-time resampling of the circle
  double seed_tol = 1e-12;    // relative level residual after seed correction
};

struct LevelCircle {
  double c = 0.0;
  double T = 0.0;                  // first-return time of the X_H flow
  std::vector<ChartPoint> points;  // samples+1 entries, uniform in time, closed
  ChartPoint seed;                 // corrected on-level start point
  double closure_error = 0.0;      // metric distance end to start
  double level_drift = 0.0;        // max |H - c| along the circle
  double grad_min = 0.0;           // min |grad H| along the circle
  double extent = 0.0;             // max metric distance from the seed
  int component_tag = 0;           // sign of b at the seed in field mode
};

// Corrects the seed onto {H = c}, integrates X_H to the first return and
// resamples the circle uniformly in time. Throws NearCriticalError when the
// level passes too close to a critical point, BudgetError when no return is
// found within the step budget.
LevelCircle trace_level_circle(const ReducedSystem& rs, double c, ChartPoint seed,
                               const TraceOptions& opt = {});

enum class EndpointKind { critical_point, open_end, budget_exhausted, start };

struct EndpointDiagnosis {
  EndpointKind kind = EndpointKind::start;
  double c_end = 0.0;        // critical value, or last level reached
  ChartPoint location;       // polished critical point when kind == critical_point
  bool degenerate = false;   // |det Hess| < 1e-8 at the polished point
  std::string note;
};

struct ContinueBudget {
  int max_levels = 200;
  double stop_grad = 1e-5;   // continuation ends when min |grad H| drops below
  double c_limit = 1e9;      // hard bound on |c|, proper Hamiltonians are unbounded
};

struct OrbitCylinder {
  std::vector<double> c;           // increasing
  std::vector<double> T;
  std::vector<ChartPoint> seeds;   // one on-level point per sampled circle
  EndpointDiagnosis lower, upper;
  double c_minus() const { return lower.c_end; }
  double c_plus() const { return upper.c_end; }
  double span() const { return upper.c_end - lower.c_end; }
};

enum class Direction { forward, backward };

// Advances L0 along the normalized transversal field grad H / |grad H|^2
// (so the level advances linearly), re-tracing circles on an adaptive
// c-grid until a critical point is diagnosed or the budget runs out.
OrbitCylinder continue_cylinder(const ReducedSystem& rs, const LevelCircle& L0,
                                Direction direction, const ContinueBudget& budget = {},
                                const TraceOptions& topt = {});

// Both directions merged into one increasing-c cylinder.
OrbitCylinder extend_cylinder(const ReducedSystem& rs, const LevelCircle& L0,
                              const ContinueBudget& budget = {},
                              const TraceOptions& topt = {});

enum class Verdict { non_resonant, resonant_within_tolerance, undetermined };
const char* verdict_name(Verdict v);

struct ResonanceVerdict {
  Verdict classification = Verdict::undetermined;
  double dTdc = 0.0;
  double dTdc_err = 0.0;      // fit error bar on the slope
  double T0 = 0.0;            // fitted period at the scan center
  double window_lo = 0.0, window_hi = 0.0;
  double max_variation = 0.0; // max T spread over the window
  double tol = 0.0;
  std::string note;
};

// Fits T(c) over a window of 11 circles spanning 2% of the cylinder around
// c0 and applies the three-way twist classification.
ResonanceVerdict classify_resonance(const ReducedSystem& rs, const OrbitCylinder& cyl,
                                    double c0, double tol = 1e-6,
                                    const TraceOptions& topt = {});

struct ProfileRow {
  double c = 0.0;
  double T = 0.0;
  double A = 0.0;          // symplectic area relative to the first row
  double dTdc_fit = 0.0;   // local least-squares slope of T(c)
  Verdict verdict = Verdict::undetermined;
};

struct PeriodAreaProfile {
  std::vector<ProfileRow> rows;
  double max_dadc_mismatch = 0.0;  // relative |dA/dc - T| / T on interior rows
  std::vector<std::string> notes;
};

// Periods by first return, areas by a Stokes contour integral of a
// primitive of the area density. dA/dc = T is checked on interior rows.
PeriodAreaProfile period_area_profile(const ReducedSystem& rs, const OrbitCylinder& cyl,
                                      const std::vector<double>& grid,
                                      const TraceOptions& topt = {},
                                      double resonance_tol = 1e-6);

void write_profile_csv(std::ostream& os, const PeriodAreaProfile& profile);

enum class CriticalType { minimum, maximum, saddle, circle_extremum, degenerate };

struct CriticalPoint {
  ChartPoint location;
  double value = 0.0;
  CriticalType type = CriticalType::degenerate;
  double hess_det = 0.0;
  double hess_trace = 0.0;
  double grad_residual = 0.0;
};

// Grid screening of |grad H| with Newton polish. Rotationally symmetric
// systems are scanned radially (poles plus critical latitude circles);
// tori over the fundamental domain.
std::vector<CriticalPoint> critical_points(const ReducedSystem& rs);

struct BoundaryTarget {
  enum class Kind { field_zero_set, extremum_point, extremal_circle, saddle_box };
  Kind kind = Kind::extremum_point;
  ChartPoint point;         // hint for extremum / saddle, polished internally
  double level = 0.0;       // hint for the extremal circle
  double delta = 0.2;
  double eps = 0.1;

  static BoundaryTarget zero_set();
  static BoundaryTarget extremum(const ChartPoint& p);
  static BoundaryTarget circle(double level);
  static BoundaryTarget saddle(const ChartPoint& p, double delta, double eps);
};

struct BoundaryCircle {
  LevelCircle circle;
  ResonanceVerdict verdict;
  std::string branch;
};

struct BoundaryReport {
  std::vector<BoundaryCircle> circles;
  bool certificate_found = false;  // every approach branch produced a non-resonant circle
  std::string neighborhood;
  std::vector<std::string> notes;
};

// Walks levels toward the target on each approach branch and returns the
// first non-resonant circle found per branch. All-resonant branches are
// reported as "no certificate found" rather than thrown.
BoundaryReport locate_nonresonant_boundary(const ReducedSystem& rs,
                                           const BoundaryTarget& target,
                                           const TraceOptions& topt = {});

struct DichotomyReport {
  bool nonresonant_found = false;
  double witness_c = 0.0;
  ResonanceVerdict witness;
  bool sphere_two_critical_points = false;
  std::vector<CriticalPoint> criticals;
  std::string branch;  // "non-resonant circle" | "resonant sphere" | "inconclusive"
};

// Either some scanned cylinder carries a non-resonant circle, or every scan
// is resonant within tolerance and the surface is a sphere whose Hamiltonian
// has exactly two critical points. Exactly one branch is reported.
DichotomyReport dichotomy_report(const ReducedSystem& rs, int scan_levels = 9,
                                 double tol = 1e-6, const TraceOptions& topt = {});

}  // namespace gyrolab::reduced
