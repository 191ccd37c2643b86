#pragma once
// Magnetic field strength b as a scalar on the surface, with analytic
// gradient and Hessian in whichever chart a point is given. Built-in
// families cover the configurations used by the experiment suite:
//
//   constant       b = b0
//   radial         b = f(r) from an expression in the polar radius
//   height_affine  b = beta + alpha * z(r), z the embedding height
//   resonant       1/(2 b^2) = alpha * Z(r) + beta, Z the normalized
//                  area moment (equals z on the round sphere); the reduced
//                  flow then has the same period on every orbit circle
//   expression     b = f(x, y) on a flat torus
//
// Radial families evaluate in the cap charts through the radial chain
// rule, so trajectories crossing a pole see a smooth field.

#include <functional>
#include <string>

#include "gyrolab/expr.hpp"
#include "gyrolab/geometry.hpp"
#include "gyrolab/num.hpp"

namespace gyrolab::field {

using geom::ChartId;
using geom::ChartPoint;
using geom::SurfaceModel;

struct FieldEval {
  double b = 0.0;
  Vec2 grad;   // chart partials (d/dq1, d/dq2)
  Sym2 hess;
};

// Chart-covariant lift of a rotationally symmetric scalar given its radial
// jet (value and two derivatives at the primary-chart radius). Shared by the
// symmetric field families and by the reduced Hamiltonians.
using RadialJet = std::function<void(double r, double& f, double& df, double& ddf)>;
FieldEval lift_radial(const SurfaceModel& surface, const ChartPoint& p, const RadialJet& jet);

class FieldSpec {
 public:
  enum class Kind { constant, radial, height_affine, resonant, expression };

  FieldSpec() = default;
  static FieldSpec constant(double b0);
  static FieldSpec radial(const std::string& expr_text);
  static FieldSpec height_affine(double alpha, double beta);
  // Requires beta > |alpha| so that alpha Z + beta stays positive.
  static FieldSpec resonant(double alpha, double beta);
  static FieldSpec expression(const std::string& expr_text);

  Kind kind() const { return kind_; }
  bool is_constant() const { return kind_ == Kind::constant; }
  double constant_value() const { return b0_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  std::string describe() const;

  double value(const SurfaceModel& surface, const ChartPoint& p) const;
  FieldEval eval2(const SurfaceModel& surface, const ChartPoint& p) const;

  // Coarse probe of min |b| over the surface; a small value flags a zero
  // set that the reduced Hamiltonian must exclude.
  double min_abs(const SurfaceModel& surface) const;

 private:
  // b and two radial derivatives for the rotationally symmetric families.
  void radial_jet(const SurfaceModel& surface, double r, double& f, double& df,
                  double& ddf) const;
  FieldEval eval_radial_chart(const SurfaceModel& surface, const ChartPoint& p) const;

  Kind kind_ = Kind::constant;
  double b0_ = 1.0;
  double alpha_ = 0.0, beta_ = 1.0;
  Expr expr_;
  std::string text_;
};

}  // namespace gyrolab::field
