#include "gyrolab/magflow.hpp"

#include <algorithm>
#include <cmath>

namespace gyrolab::flow {

void FlowStepper::Rhs::operator()(double, const std::array<double, 4>& y,
                                  std::array<double, 4>& dy) const {
  ChartPoint p{chart, {y[0], y[1]}};
  geom::MetricFirst m = surface->metric_first(p);
  geom::Christoffel c = geom::christoffel_from(m);
  Vec2 v{y[2], y[3]};
  Vec2 acc = -1.0 * c.quad(v) + field->value(*surface, p) * m.perp(v);
  dy[0] = v.x;
  dy[1] = v.y;
  dy[2] = acc.x;
  dy[3] = acc.y;
}

FlowStepper::FlowStepper(const SurfaceModel& surface, const FieldSpec& field, double s,
                         const OdeOptions& opt)
    : surface_(surface),
      field_(field),
      s_(s),
      rhs_{&surface, &field, ChartId::primary},
      ode_(rhs_, opt) {}

void FlowStepper::start(const PhaseState& state0) {
  PhaseState st = state0;
  ChartId pref = surface_.preferred_chart(st.point());
  if (pref != st.chart) {
    Vec2 v = surface_.transfer_velocity(st.point(), st.v, pref);
    st.q = surface_.transfer(st.point(), pref).q;
    st.chart = pref;
    st.v = v;
  }
  rhs_.chart = st.chart;
  step_chart_ = st.chart;
  double n = surface_.metric_first(st.point()).norm(st.v);
  if (!(n > 0.0)) throw geom::DomainError("initial velocity must be nonzero");
  double lam = s_ / n;
  std::array<double, 4> y = {st.q.x, st.q.y, st.v.x * lam, st.v.y * lam};
  ode_.start(st.t, y, direction_);
  stats_ = FlowStats{};
  diagnostic_.clear();
  last_defect_ = 0.0;
}

void FlowStepper::set_direction(double dir) { direction_ = dir >= 0.0 ? 1.0 : -1.0; }

bool FlowStepper::done(double t_cap) const {
  return direction_ * (t_cap - ode_.t()) <= 0.0;
}

double FlowStepper::radial_step_cap() const {
  if (!surface_.is_revolution()) return std::numeric_limits<double>::infinity();
  if (rhs_.chart != ChartId::primary) return std::numeric_limits<double>::infinity();
  double r = ode_.y()[0];
  double r_min = std::min(r, surface_.R() - r);
  return std::max(surface_.switch_to_cap_radius(), r_min) / (2.0 * s_);
}

bool FlowStepper::advance(double t_cap) {
  step_chart_ = rhs_.chart;
  if (!ode_.advance(t_cap, radial_step_cap())) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "step size underflow at t=%.6g in chart %d near q=(%.6g, %.6g)",
                  ode_.t(), static_cast<int>(rhs_.chart), ode_.y()[0], ode_.y()[1]);
    diagnostic_ = buf;
    return false;
  }
  stats_.accepted = ode_.stats().accepted;
  stats_.rejected = ode_.stats().rejected;
  stats_.rhs_evals = ode_.stats().rhs_evals;
  stats_.max_local_error = ode_.stats().max_error;
  project_speed();
  maybe_switch_chart();
  return true;
}

double FlowStepper::project_speed() {
  const auto& y = ode_.y();
  ChartPoint p{rhs_.chart, {y[0], y[1]}};
  Vec2 v{y[2], y[3]};
  double n = surface_.metric_first(p).norm(v);
  last_defect_ = n - s_;
  double lam = s_ / n;
  stats_.max_step_speed_defect = std::max(stats_.max_step_speed_defect, std::abs(n - s_) / s_);
  stats_.renorm_cumulative += std::abs(1.0 - lam);
  // O(tol) rescale: the FSAL derivative is kept, the stale direction error
  // is far below the local error tolerance
  ode_.set_state({y[0], y[1], v.x * lam, v.y * lam}, false);
  return last_defect_;
}

void FlowStepper::maybe_switch_chart() {
  const auto& y = ode_.y();
  ChartPoint p{rhs_.chart, {y[0], y[1]}};
  ChartId target = surface_.preferred_chart(p);
  if (target == rhs_.chart) return;
  Vec2 v{y[2], y[3]};
  Vec2 vt = surface_.transfer_velocity(p, v, target);
  ChartPoint pt = surface_.transfer(p, target);
  rhs_.chart = target;
  ode_.set_state({pt.q.x, pt.q.y, vt.x, vt.y}, true);
  ++stats_.chart_switches;
}

PhaseState FlowStepper::current() const {
  const auto& y = ode_.y();
  return {ode_.t(), rhs_.chart, {y[0], y[1]}, {y[2], y[3]}};
}

PhaseState FlowStepper::previous() const {
  const auto& y = ode_.y_prev();
  return {ode_.t_prev(), step_chart_, {y[0], y[1]}, {y[2], y[3]}};
}

PhaseState FlowStepper::dense_state(double te) const {
  auto y = ode_.dense(te);
  return {te, step_chart_, {y[0], y[1]}, {y[2], y[3]}};
}

namespace {

TrajectorySample make_sample(const SurfaceModel& surface, const FieldSpec& field,
                             double s, const PhaseState& st, double speed_defect) {
  TrajectorySample out;
  out.t = st.t;
  out.chart = st.chart;
  out.q = st.q;
  out.v = st.v;
  out.b = field.value(surface, st.point());
  out.K = surface.gauss_curvature(st.point());
  out.speed_err = speed_defect;
  double n = s + speed_defect;
  out.kappa_residual = out.b / n - out.b / s;
  return out;
}

TrajectorySample make_sample_measured(const SurfaceModel& surface, const FieldSpec& field,
                                      double s, const PhaseState& st) {
  double n = surface.metric_first(st.point()).norm(st.v);
  return make_sample(surface, field, s, st, n - s);
}

}  // namespace

TrajectorySample FlowStepper::sample_here(double pre_projection_defect) const {
  return make_sample(surface_, field_, s_, current(), pre_projection_defect);
}

Trajectory integrate(const SurfaceModel& surface, const FieldSpec& field,
                     const PhaseState& state0, double s, double t_end,
                     const IntegrateOptions& opt) {
  OdeOptions ode;
  ode.rtol = opt.rtol;
  ode.atol = opt.atol;
  FlowStepper stepper(surface, field, s, ode);
  stepper.set_direction(t_end - state0.t);
  stepper.start(state0);

  Trajectory traj;
  traj.s = s;
  if (opt.record) traj.samples.push_back(stepper.sample_here(0.0));

  double next_grid = state0.t;
  double dir = t_end >= state0.t ? 1.0 : -1.0;
  if (opt.sample_dt > 0.0) next_grid += dir * opt.sample_dt;

  std::int64_t hard_cap = opt.max_steps;
  while (!stepper.done(t_end)) {
    if (!stepper.advance(t_end)) {
      traj.halted = true;
      traj.halt_reason = stepper.diagnostic();
      break;
    }
    if (stepper.stats().accepted >= hard_cap) {
      traj.halted = true;
      traj.halt_reason = "step budget exhausted";
      break;
    }
    if (!opt.record) continue;
    if (opt.sample_dt <= 0.0) {
      traj.samples.push_back(stepper.sample_here(stepper.last_defect()));
    } else {
      while (dir * (stepper.t() - next_grid) >= 0.0) {
        traj.samples.push_back(
            make_sample_measured(surface, field, s, stepper.dense_state(next_grid)));
        next_grid += dir * opt.sample_dt;
      }
    }
  }
  traj.final_state = stepper.current();
  traj.stats = stepper.stats();
  if (opt.record &&
      (traj.samples.empty() || traj.samples.back().t != traj.final_state.t))
    traj.samples.push_back(stepper.sample_here(stepper.last_defect()));
  return traj;
}

ResidualReport curvature_residual(const SurfaceModel& surface, const FieldSpec& field,
                                  const Trajectory& traj) {
  (void)surface;
  (void)field;
  if (traj.samples.size() < 3)
    throw geom::DomainError("curvature residual needs at least 3 samples");
  for (std::size_t i = 1; i < traj.samples.size(); ++i) {
    const auto& a = traj.samples[i - 1];
    const auto& b = traj.samples[i];
    if (a.chart == b.chart && (a.q - b.q).norm() == 0.0 && a.t != b.t)
      throw geom::DomainError("degenerate consecutive samples; resample the trajectory");
  }
  ResidualReport rep;
  for (std::size_t i = 0; i < traj.samples.size(); ++i) {
    double r = std::abs(traj.samples[i].kappa_residual);
    if (r > rep.max_residual) {
      rep.max_residual = r;
      rep.t_at_max = traj.samples[i].t;
      rep.index_at_max = i;
    }
  }
  return rep;
}

DriftReport adiabatic_drift(const SurfaceModel& surface, const FieldSpec& field,
                            const Trajectory& traj, DriftObservable obs) {
  (void)surface;
  (void)field;
  DriftReport rep;
  if (traj.samples.empty()) return rep;
  auto value = [&](const TrajectorySample& s) {
    return obs == DriftObservable::field_strength ? s.b : s.K;
  };
  double v0 = value(traj.samples.front());
  for (const auto& s : traj.samples)
    rep.max_drift = std::max(rep.max_drift, std::abs(value(s) - v0));
  double span = std::abs(traj.samples.back().t - traj.samples.front().t);
  rep.drift_per_time = span > 0.0 ? rep.max_drift / span : 0.0;
  return rep;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "t,chart,q1,q2,v1,v2,b,K,speed_err,kappa_residual\n";
  char line[320];
  for (const auto& s : traj.samples) {
    std::snprintf(line, sizeof(line),
                  "%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.6e,%.6e\n", s.t,
                  static_cast<int>(s.chart), s.q.x, s.q.y, s.v.x, s.v.y, s.b, s.K,
                  s.speed_err, s.kappa_residual);
    os << line;
  }
}

}  // namespace gyrolab::flow
