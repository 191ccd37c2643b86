#pragma once
// Poincare return maps of the full magnetic flow on the velocity-angle
// section, rotation-number estimation, periodic-orbit shooting, and the
// trapping and saddle-escape experiments.
//
// Section convention: a state is on the section when its velocity is
// aligned with the normalized first coordinate direction e1 (velocity
// angle zero in the orthonormal frame (e1, perp e1)). For b > 0 the
// velocity angle sweeps monotonically, so the section is crossed exactly
// once per gyration and the return map acts on chart positions inside a
// fixed region of one chart. Crossing direction follows the sweep of b.

#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "gyrolab/field.hpp"
#include "gyrolab/geometry.hpp"
#include "gyrolab/magflow.hpp"
#include "gyrolab/reduced.hpp"

namespace gyrolab::section {

using field::FieldSpec;
using flow::PhaseState;
using geom::ChartId;
using geom::ChartPoint;
using geom::SurfaceModel;

// Orientation of the guiding drift: gyration centers move along a positive
// multiple of the reduced Hamiltonian field X_H. A single constant so run
// manifests can record the convention; flipping it would swap the roles of
// the saddle strips and the sign of measured rotation numbers.
inline constexpr int kDriftOrientation = +1;

struct ReturnBudgetError : geom::DomainError {
  using geom::DomainError::DomainError;
};

// Orbit left the configured region (or its chart) before closing the
// return; carries the last state reached.
struct RegionExitError : geom::DomainError {
  PhaseState last;
  RegionExitError(const std::string& msg, const PhaseState& st)
      : geom::DomainError(msg), last(st) {}
};

// Axis-aligned box around a center in chart coordinates; half-widths may be
// infinite. Containment uses minimum-image differences on periodic axes.
struct ChartRegion {
  ChartId chart = ChartId::primary;
  Vec2 center;
  Vec2 halfwidth{std::numeric_limits<double>::infinity(),
                 std::numeric_limits<double>::infinity()};

  // Band in the guiding (first) coordinate, unbounded in the angular one.
  static ChartRegion band(double guide_center, double guide_halfwidth) {
    ChartRegion r;
    r.center = {guide_center, 0.0};
    r.halfwidth = {guide_halfwidth, std::numeric_limits<double>::infinity()};
    return r;
  }
  static ChartRegion box(ChartId chart, Vec2 center, Vec2 halfwidth) {
    return {chart, center, halfwidth};
  }
};

struct SectionOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  // accepted velocity-angle residual at a reported crossing
  double crossing_tol = 1e-10;
  double s_max = 0.5;
  std::int64_t max_steps_per_return = 40000;
};

struct SectionReturn {
  Vec2 q;
  double dt = 0.0;        // signed physical return time
  double residual = 0.0;  // velocity angle at the accepted crossing
};

class SectionMap {
 public:
  // Throws DomainError when s is outside (0, s_max] or the field changes
  // sign / vanishes on the region.
  SectionMap(const SurfaceModel& surface, const FieldSpec& field, double s,
             const ChartRegion& region, const SectionOptions& opt = {});

  // Next section crossing from x; direction -1 runs the flow backward.
  SectionReturn ret(const Vec2& x, int direction = +1) const;
  Vec2 apply(const Vec2& x) const { return ret(x, +1).q; }
  Vec2 apply_inverse(const Vec2& x) const { return ret(x, -1).q; }

  // Full-flow state of a section point: velocity s e1(x).
  PhaseState section_state(const Vec2& x) const;
  bool contains(const Vec2& x) const;
  // Minimum-image increment of the angular (second) coordinate.
  double angular_delta(double from, double to) const;
  double angular_period() const;
  // Invariant section density |b| * metric area density.
  double weight(const Vec2& x) const;

  const SurfaceModel& surface() const { return surface_; }
  const FieldSpec& field() const { return field_; }
  const ChartRegion& region() const { return region_; }
  const SectionOptions& options() const { return opt_; }
  double speed() const { return s_; }

 private:
  SurfaceModel surface_;  // owning copies: the map outlives most call sites
  FieldSpec field_;
  double s_;
  ChartRegion region_;
  SectionOptions opt_;
  double sweep_ = 1.0;      // sign of b on the region
  double min_abs_b_ = 0.0;  // probed floor, sizes the runaway slack
};

// Finite-difference Jacobian of the forward return map.
Mat2 return_jacobian(const SectionMap& map, const Vec2& x, double fd_step = 1e-7);
// det(J) corrected by the weight ratio; equals 1 for an exact evaluation.
double weighted_jacobian_det(const SectionMap& map, const Vec2& x,
                             double fd_step = 1e-6);

// ---------------------------------------------------------------------------
// Rotation numbers

struct SectionSample {
  int iter = 0;
  double guide = 0.0;       // first chart coordinate
  double angle_lift = 0.0;  // continuous lift of the second coordinate
};

struct RotationEstimate {
  double value = 0.0;  // radians of angular advance per return, signed
  int iterations = 0;  // requested
  int completed = 0;
  double error_estimate = 0.0;  // half-sample comparison of the average
  bool escaped = false;
  std::string note;
  std::vector<SectionSample> samples;
};

// Weighted Birkhoff average of the per-return angular increments with the
// exponential bump weight; superpolynomially accurate on Diophantine
// orbits. Throws DomainError for iterates < 100. An orbit leaving the map
// region yields a partial estimate with escaped set.
RotationEstimate rotation_number(const SectionMap& map, const Vec2& start,
                                 int iterates);

// header iter,r,theta_lift
void write_iterates_csv(std::ostream& os, const RotationEstimate& est);

// ---------------------------------------------------------------------------
// Periodic orbits

struct OrbitTarget {
  long p = 0;  // net angular turns over one closed orbit
  long q = 1;  // section returns; target rotation number 2 pi p / q
};

struct ShootingOptions {
  int max_targets = 6;        // auto-target budget
  int multi_starts = 32;      // start grid per target
  int max_newton = 30;
  double fd_step = 1e-7;
  double residual_tol = 1e-9;
  double dedup_tol = 1e-6;     // Hausdorff distance between section orbits
  int curve_samples = 2048;    // reconstruction resolution
  int probe_iterates = 400;    // rotation-number iterates for boundaries
  bool stop_after_first = true;  // stop the start grid after one success
};

struct PeriodicOrbit {
  bool found = false;
  double s = 0.0;
  long p = 0, q = 1;
  Vec2 section_point;
  double residual = 0.0;
  int newton_iterations = 0;
  double period = 0.0;         // physical period of the closed orbit
  double closure_error = 0.0;  // gap between the curve endpoints
  double curvature_residual = 0.0;
  long winding = 0;  // measured net angular turns of the reconstruction
  std::vector<ChartPoint> curve;
  std::string note;
};

struct OrbitSearch {
  double rho_lo = 0.0, rho_hi = 0.0;  // boundary rotation numbers
  std::vector<PeriodicOrbit> orbits;
  std::vector<std::string> notes;
};

// Multi-start damped Newton shooting on F(x) = map^q(x) - shift_p(x) for
// each target; empty targets enumerates the smallest-denominator reduced
// fractions strictly between the boundary rotation numbers. Targets outside
// the boundary interval are skipped with a note; failed searches produce a
// found = false entry.
OrbitSearch find_periodic_orbits(const SectionMap& map, double guide_lo,
                                 double guide_hi,
                                 const std::vector<OrbitTarget>& targets = {},
                                 const ShootingOptions& opt = {});

void write_orbits_json(std::ostream& os, const OrbitSearch& search);
// header index,chart,q1,q2 of one reconstructed curve
void write_orbit_curve_csv(std::ostream& os, const PeriodicOrbit& orbit);

// ---------------------------------------------------------------------------
// Trapping experiment

struct TrapOptions {
  double rtol = 1e-6;
  double atol = 1e-8;
  std::int64_t horizon_returns = 100000;  // per time direction
  int n_samples = 200;
  std::uint64_t seed = 1;
  bool both_directions = true;
  int jobs = 1;  // 0: hardware concurrency
};

struct TrapSample {
  int index = 0;
  double guide0 = 0.0, angle0 = 0.0, phase0 = 0.0;  // seeded start
  double max_excursion = 0.0;
  bool escaped = false;
  int escape_direction = 0;  // +1 forward, -1 backward, 0 none
  std::int64_t returns = 0;  // completed over both directions
};

struct TrapReport {
  double speed = 0.0;
  double inner_halfwidth = 0.0, outer_halfwidth = 0.0;
  double guide_center = 0.0;
  std::int64_t horizon_returns = 0;
  int n_samples = 0;
  std::uint64_t seed = 0;
  int escape_count = 0;
  double max_excursion = 0.0;
  double physical_time = 0.0;  // accumulated over all samples
  std::vector<TrapSample> samples;
  std::vector<std::string> notes;
};

// Integrates full-flow orbits seeded uniformly in the inner band around the
// level circle (positions and gyration phases), both time directions, and
// reports excursions from the circle plus escapes from the outer band.
// Excursions are distances in the reduced plane; for a rotationally
// symmetric circle this is the distance in the guiding coordinate. Escapes
// are data, not errors. The caller certifies non-resonance of the circle
// beforehand (see the resonance classifiers).
TrapReport trapping_experiment(const SurfaceModel& surface,
                               const FieldSpec& field, double s,
                               const reduced::LevelCircle& circle,
                               double inner_halfwidth, double outer_halfwidth,
                               const TrapOptions& opt = {});

void write_trap_json(std::ostream& os, const TrapReport& rep);

// ---------------------------------------------------------------------------
// Saddle escape experiment

struct SaddleOptions {
  double rtol = 1e-6;
  double atol = 1e-8;
  std::int64_t horizon_returns = 400000;
  int n_samples = 100;
  std::uint64_t seed = 1;
  // Integrate the ensemble backward in time; exits then swap strips.
  bool time_reversed = false;
  int jobs = 1;  // 0: hardware concurrency
};

struct SaddleSample {
  int index = 0;
  Vec2 start_ab;  // seed of the gyration center, box coordinates
  int exit_kind = 0;  // 0 none, 1 unstable strip, 2 stable strip, 3 elsewhere
  Vec2 exit_ab;
  std::int64_t returns = 0;
};

struct SaddleReport {
  double speed = 0.0;
  bool time_reversed = false;
  ChartPoint saddle;
  double level = 0.0;
  double delta = 0.0, eps = 0.0, start_halfwidth = 0.0;
  // Unit chart directions of the box axes in forward time.
  Vec2 axis_unstable, axis_stable;
  int exits_plus = 0;   // through the strips crossed by the unstable flow
  int exits_minus = 0;  // through the strips around the stable direction
  int violations = 0;   // exits outside both strips
  int non_exits = 0;    // horizon reached inside the box
  std::uint64_t seed = 0;
  std::vector<SaddleSample> samples;
  std::vector<std::string> notes;
};

// Tracks gyration centers started inside the |alpha|, |beta| <=
// start_halfwidth box in the separatrix frame of the saddle until they
// leave the delta box or the horizon runs out. Each exit is classified as
// through the unstable strips (|beta| <= eps), the stable strips
// (|alpha| <= eps), or elsewhere. Requires a non-degenerate saddle and
// eps < delta; start_halfwidth must fit inside delta.
SaddleReport saddle_escape_experiment(const SurfaceModel& surface,
                                      const FieldSpec& field, double s,
                                      const reduced::CriticalPoint& saddle,
                                      double delta, double eps,
                                      double start_halfwidth,
                                      const SaddleOptions& opt = {});

void write_saddle_json(std::ostream& os, const SaddleReport& rep);

}  // namespace gyrolab::section
