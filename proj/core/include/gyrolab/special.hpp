#pragma once
// Closed forms for rotationally symmetric systems: the leading-order
// rotation number per return, rational-speed sequences polished against the
// full flow, the area-normalized boundary-value compatibility test for the
// action primitive, curvature conditions for a Hamiltonian circle action,
// and the constant-period field construction.

#include <iosfwd>
#include <string>
#include <vector>

#include "gyrolab/field.hpp"
#include "gyrolab/geometry.hpp"

namespace gyrolab::special {

using field::FieldSpec;
using geom::ChartPoint;
using geom::SurfaceModel;

// A surface of revolution paired with a rotationally symmetric field.
// Scalar accessors work in the surface's own coordinates; the action
// primitive is pre-normalized to [-1, 1] and scale() carries the metric
// factor that brings the area to 4 pi.
class SymmetricSystem {
 public:
  static SymmetricSystem make(const SurfaceModel& surface, const FieldSpec& field);

  double R() const { return R_; }
  double scale() const { return scale_; }
  double profile(double r) const;     // a(r), positive away from the poles
  double profile_d1(double r) const;
  double field_value(double r) const; // b(r)
  double field_d1(double r) const;
  double action(double r) const;      // A(0) = -1, A(R) = +1, increasing
  const SurfaceModel& surface() const { return surface_; }
  const FieldSpec& field() const { return field_; }

 private:
  SymmetricSystem(const SurfaceModel& s, const FieldSpec& f);
  SurfaceModel surface_;
  FieldSpec field_;
  double R_ = 0.0;
  double scale_ = 1.0;
};

// Leading term -s^2 pi b'(r) / (a(r) b(r)^3) of the angular advance per
// section return. Sign calibrated once against the measured full flow.
double symmetric_rotation_number(const SymmetricSystem& sys, double r, double s);

struct SpeedEntry {
  long p = 0;
  long q = 1;
  double target = 0.0;            // 2 pi p / q
  double s_leading = 0.0;         // closed-form inversion of the leading term
  double s = 0.0;                 // after the full-flow polish
  double rho = 0.0;               // measured advance per return at s
  double closure_residual = -1.0; // metric gap after q returns, -1 = unchecked
  std::string note;
};

struct SpeedSearchOptions {
  int max_denominator = 100;
  bool polish = true;
  double polish_xtol = 1e-10;
  int measure_iterates = 150;
  bool check_closure = false;
  double band_halfwidth = 0.35;   // guide half-width of the section region
};

struct SpeedSequence {
  double r = 0.0;
  double kappa = 0.0;             // |rho| / s^2 at r
  std::vector<SpeedEntry> entries;
  std::vector<std::string> notes;
};

// Decreasing speeds s_1 > s_2 > ... with advance-per-return equal to
// 2 pi p / q for reduced fractions with q <= max_denominator.
SpeedSequence rational_speed_search(const SymmetricSystem& sys, double r, double s_max,
                                    int count, const SpeedSearchOptions& opt = {});
void write_speed_json(std::ostream& os, const SpeedSequence& seq);

struct ActionOdeRow {
  double c1 = 0.0;
  double conserved_mismatch = 0.0; // boundary gap of (A')^2 + c1 A^3/3 + A^2 - c1 A
  double ode_residual = 0.0;       // |A(R) - 1| + |A'(R)| from the shooting run
  double residual = 0.0;           // max of the two
  bool compatible = false;
  std::string note;
};

struct ActionOdeReport {
  double R = 0.0;
  double tol = 0.0;
  std::vector<ActionOdeRow> rows;
};

// Boundary compatibility of 2 A'' + c1 A^2 + 2 A - c1 = 0 with
// (A, A')(0) = (-1, 0) and (A, A')(R) = (1, 0) on area-normalized spheres;
// only c1 = 0 closes both ends.
ActionOdeReport revolution_action_ode_test(double R, const std::vector<double>& c1_grid,
                                           double tol = 1e-8);
void write_action_ode_csv(std::ostream& os, const ActionOdeReport& rep);
void write_action_ode_json(std::ostream& os, const ActionOdeReport& rep);

struct CurvatureSample {
  double K = 0.0;
  double weight = 0.0;  // quadrature area weight
};

struct CurvatureSet {
  std::vector<CurvatureSample> samples;
  double area = 0.0;
};

// Area-weighted curvature samples: Gauss-Legendre panels along the radius
// for revolution surfaces, a uniform midpoint grid for tori.
CurvatureSet curvature_quadrature(const SurfaceModel& surface);

struct ActionConditionReport {
  double area = 0.0;
  double k_min = 0.0;
  double k_max = 0.0;
  double mean_residual = 0.0;           // |(k_max + k_min)/2 - 4 pi / area|
  bool mean_pass = false;
  double distribution_deviation = 0.0;  // worst gap of the distribution identity
  double gauss_bonnet = 0.0;            // integral of K over the surface
  bool constant_curvature = false;
  std::string note;
};

// Necessary conditions on the curvature for the reduced flow to extend to a
// circle action: the extreme-mean identity and the distribution identity
// k = k_min + (k_max - k_min)/area * area({K <= k}) on a k-grid.
ActionConditionReport circle_action_conditions(const CurvatureSet& set, int k_grid = 33,
                                               double tol = 1e-9);
void write_action_conditions_json(std::ostream& os, const ActionConditionReport& rep);

// Field with 1/(2 b^2) affine in the normalized height, giving every
// reduced orbit the common period area/(2 alpha) (2 pi / alpha at area
// 4 pi). Requires alpha != 0 and beta > |alpha|.
FieldSpec build_resonant_field(const SurfaceModel& surface, double alpha, double beta);

}  // namespace gyrolab::special
