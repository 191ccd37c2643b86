// Return maps on the velocity-angle section plus the ensemble experiments
// built on top of them. Crossings are detected on a continuous lift of the
// velocity angle accumulated step by step; a chart switch invalidates the
// lift frame, so region maps refuse to follow orbits out of their chart.
// The ensemble experiments bypass the generic stepper where the metric
// allows it: at 1e5+ gyrations per orbit the chart bookkeeping and the
// jet-level field evaluation are pure overhead.

#include "gyrolab/section.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <utility>

#include "gyrolab/num.hpp"
#include "gyrolab/ode.hpp"

namespace gyrolab::section {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;
const double kInf = std::numeric_limits<double>::infinity();

double principal(double a) { return a - kTwoPi * std::round(a / kTwoPi); }

double min_image(double d, double period) {
  return period > 0.0 ? d - period * std::round(d / period) : d;
}

// period of a chart axis, 0 for a non-periodic axis
double axis_period(const SurfaceModel& surf, ChartId chart, int axis) {
  if (surf.is_revolution()) return chart == ChartId::primary && axis == 1 ? kTwoPi : 0.0;
  return axis == 0 ? surf.Lx() : surf.Ly();
}

// velocity angle against the orthonormal frame (e1 = d1/sqrt(E), perp e1)
double velocity_angle(const geom::MetricFirst& g, const Vec2& v) {
  return std::atan2(g.density() * v.y, g.E * v.x + g.F * v.y);
}

std::string fmt_num(double v) {
  if (!std::isfinite(v)) return "null";
  char b[40];
  std::snprintf(b, sizeof b, "%.17g", v);
  return b;
}

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char b[8];
          std::snprintf(b, sizeof b, "\\u%04x", c);
          out += b;
        } else {
          out += c;
        }
    }
  }
  return out;
}

// decorrelated per-sample stream seeds; plain seed+index offsets would make
// neighboring samples share a shifted SplitMix64 sequence
std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t key[2] = {seed, index};
  return fnv1a64(key, sizeof key);
}

}  // namespace

// ---------------------------------------------------------------------------
// SectionMap

SectionMap::SectionMap(const SurfaceModel& surface, const FieldSpec& field, double s,
                       const ChartRegion& region, const SectionOptions& opt)
    : surface_(surface), field_(field), s_(s), region_(region), opt_(opt) {
  if (!(s_ > 0.0) || !(s_ <= opt_.s_max))
    throw geom::DomainError("section map: speed must lie in (0, s_max]");
  if (!surface_.chart_exists(region_.chart))
    throw geom::DomainError("section map: region chart does not exist on this surface");

  // probe the field over the region; a monotone sweep needs a single sign
  double lo[2], hi[2];
  for (int i = 0; i < 2; ++i) {
    double c = i == 0 ? region_.center.x : region_.center.y;
    double hw = i == 0 ? region_.halfwidth.x : region_.halfwidth.y;
    if (std::isfinite(hw)) {
      lo[i] = c - hw;
      hi[i] = c + hw;
    } else if (!surface_.is_revolution()) {
      lo[i] = 0.0;
      hi[i] = i == 0 ? surface_.Lx() : surface_.Ly();
    } else if (region_.chart == ChartId::primary) {
      lo[i] = i == 0 ? surface_.switch_to_primary_radius() : 0.0;
      hi[i] = i == 0 ? surface_.R() - surface_.switch_to_primary_radius() : kTwoPi;
    } else {
      double d = 0.7 * surface_.cap_domain_radius();
      lo[i] = -d;
      hi[i] = d;
    }
  }
  if (surface_.is_revolution() && region_.chart == ChartId::primary) {
    lo[0] = std::max(lo[0], 0.0);
    hi[0] = std::min(hi[0], surface_.R());
  }
  bool pos = false, neg = false;
  double bmin = kInf;
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j) {
      Vec2 q{lo[0] + (hi[0] - lo[0]) * i / 8.0, lo[1] + (hi[1] - lo[1]) * j / 8.0};
      double b = field_.value(surface_, {region_.chart, surface_.wrap(region_.chart, q)});
      bmin = std::min(bmin, std::abs(b));
      if (b > 0.0) pos = true;
      if (b < 0.0) neg = true;
    }
  if ((pos && neg) || !(bmin > 1e-12))
    throw geom::DomainError("section map: field changes sign or vanishes on the region");
  sweep_ = pos ? 1.0 : -1.0;
  min_abs_b_ = bmin;
}

PhaseState SectionMap::section_state(const Vec2& x) const {
  PhaseState st;
  st.t = 0.0;
  st.chart = region_.chart;
  st.q = surface_.wrap(region_.chart, x);
  auto g = surface_.metric_first(st.point());
  st.v = {s_ / std::sqrt(g.E), 0.0};
  return st;
}

bool SectionMap::contains(const Vec2& x) const {
  double dx = min_image(x.x - region_.center.x, axis_period(surface_, region_.chart, 0));
  double dy = min_image(x.y - region_.center.y, axis_period(surface_, region_.chart, 1));
  return std::abs(dx) <= region_.halfwidth.x && std::abs(dy) <= region_.halfwidth.y;
}

double SectionMap::angular_period() const { return axis_period(surface_, region_.chart, 1); }

double SectionMap::angular_delta(double from, double to) const {
  return min_image(to - from, angular_period());
}

double SectionMap::weight(const Vec2& x) const {
  ChartPoint p{region_.chart, surface_.wrap(region_.chart, x)};
  return std::abs(field_.value(surface_, p)) * surface_.metric_first(p).density();
}

SectionReturn SectionMap::ret(const Vec2& x, int direction) const {
  if (!contains(surface_.wrap(region_.chart, x)))
    throw RegionExitError("section map: start point outside the region", section_state(x));

  OdeOptions oo;
  oo.rtol = opt_.rtol;
  oo.atol = opt_.atol;
  flow::FlowStepper fs(surface_, field_, s_, oo);
  const double dir = direction >= 0 ? 1.0 : -1.0;
  fs.set_direction(dir);
  fs.start(section_state(x));

  const double target = sweep_ * dir * kTwoPi;
  const double tsgn = target > 0.0 ? 1.0 : -1.0;
  const double t_far = dir * 1e18;
  const double slack = 4.0 * s_ / min_abs_b_;
  const double per0 = axis_period(surface_, region_.chart, 0);
  const double per1 = axis_period(surface_, region_.chart, 1);

  double lift = 0.0;
  double theta_prev = 0.0;  // exact on the section by construction
  for (std::int64_t step = 0; step < opt_.max_steps_per_return; ++step) {
    if (!fs.advance(t_far))
      throw geom::DomainError("section map: step size underflow (" + fs.diagnostic() + ")");
    // dense states stay in the chart of the step, so the angle increment is
    // frame-consistent even when the endpoint switched charts
    PhaseState end = fs.dense_state(fs.t());
    double theta_end = velocity_angle(surface_.metric_first(end.point()), end.v);
    double lift_end = lift + principal(theta_end - theta_prev);

    if ((lift_end - target) * tsgn >= 0.0) {
      const double t0 = fs.t_prev(), t1 = fs.t();
      auto angle_gap = [&](double tau) {
        PhaseState st = fs.dense_state(tau);
        double th = velocity_angle(surface_.metric_first(st.point()), st.v);
        return lift + principal(th - theta_prev) - target;
      };
      double tc = t1;
      if ((lift_end - target) * tsgn > 0.0) {
        double xtol = 1e-14 * (std::abs(t1) + 1.0);
        tc = brent_root(angle_gap, std::min(t0, t1), std::max(t0, t1), xtol);
      }
      PhaseState cs = fs.dense_state(tc);
      double residual = principal(velocity_angle(surface_.metric_first(cs.point()), cs.v));
      // one polish step: the angle sweeps at rate b to leading order
      double bloc = field_.value(surface_, cs.point());
      if (std::abs(residual) > 0.25 * opt_.crossing_tol && bloc != 0.0) {
        double t2 = std::clamp(tc - residual / bloc, std::min(t0, t1), std::max(t0, t1));
        PhaseState cs2 = fs.dense_state(t2);
        double res2 = principal(velocity_angle(surface_.metric_first(cs2.point()), cs2.v));
        if (std::abs(res2) < std::abs(residual)) {
          tc = t2;
          cs = cs2;
          residual = res2;
        }
      }
      if (std::abs(residual) > opt_.crossing_tol)
        throw geom::DomainError("section map: crossing refinement residual above tolerance");
      if (cs.chart != region_.chart)
        throw RegionExitError("section map: crossing in a foreign chart", cs);
      Vec2 qw = surface_.wrap(region_.chart, cs.q);
      if (!contains(qw))
        throw RegionExitError("section map: return landed outside the region",
                              PhaseState{tc, cs.chart, qw, cs.v});
      return {qw, tc, residual};
    }

    lift = lift_end;
    theta_prev = theta_end;
    PhaseState cur = fs.current();
    if (cur.chart != region_.chart)
      throw RegionExitError("section map: orbit left the region chart", cur);
    double dxr = std::abs(min_image(cur.q.x - region_.center.x, per0));
    double dyr = std::abs(min_image(cur.q.y - region_.center.y, per1));
    if (dxr > region_.halfwidth.x + slack || dyr > region_.halfwidth.y + slack)
      throw RegionExitError("section map: orbit ran away from the region", cur);
  }
  throw ReturnBudgetError("section map: no crossing within the step budget");
}

Mat2 return_jacobian(const SectionMap& map, const Vec2& x, double fd_step) {
  const double P = map.angular_period();
  const double h = fd_step;
  Vec2 f1p = map.apply({x.x + h, x.y});
  Vec2 f1m = map.apply({x.x - h, x.y});
  Vec2 f2p = map.apply({x.x, x.y + h});
  Vec2 f2m = map.apply({x.x, x.y - h});
  Mat2 J;
  J.a = (f1p.x - f1m.x) / (2.0 * h);
  J.b = (f2p.x - f2m.x) / (2.0 * h);
  J.c = min_image(f1p.y - f1m.y, P) / (2.0 * h);
  J.d = min_image(f2p.y - f2m.y, P) / (2.0 * h);
  return J;
}

double weighted_jacobian_det(const SectionMap& map, const Vec2& x, double fd_step) {
  Mat2 J = return_jacobian(map, x, fd_step);
  return std::abs(J.det()) * map.weight(map.apply(x)) / map.weight(x);
}

// ---------------------------------------------------------------------------
// Rotation numbers

RotationEstimate rotation_number(const SectionMap& map, const Vec2& start, int iterates) {
  if (iterates < 100)
    throw geom::DomainError("rotation number: needs at least 100 iterates");
  RotationEstimate est;
  est.iterations = iterates;
  est.samples.reserve(static_cast<std::size_t>(iterates) + 1);
  const double P = map.angular_period();
  const double unit = P > 0.0 ? kTwoPi / P : 1.0;  // advance in radians

  std::vector<double> incr;
  incr.reserve(static_cast<std::size_t>(iterates));
  Vec2 cur = start;
  double lift = start.y;
  est.samples.push_back({0, cur.x, lift});
  try {
    for (int k = 0; k < iterates; ++k) {
      Vec2 nxt = map.apply(cur);
      double d = map.angular_delta(cur.y, nxt.y);
      incr.push_back(d);
      lift += d;
      cur = nxt;
      est.samples.push_back({k + 1, cur.x, lift});
    }
  } catch (const RegionExitError& e) {
    est.escaped = true;
    est.note = "escaped after " + std::to_string(incr.size()) + " returns: " + e.what();
  }
  est.completed = static_cast<int>(incr.size());

  // weighted Birkhoff average with the exponential bump weight
  auto average = [&incr](int n) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < n; ++i) {
      double t = (i + 1.0) / (n + 1.0);
      double w = std::exp(-1.0 / (t * (1.0 - t)));
      num += w * incr[i];
      den += w;
    }
    return den > 0.0 ? num / den : 0.0;
  };
  if (est.completed >= 2) {
    double full = average(est.completed);
    double half = average(est.completed / 2);
    est.value = unit * full;
    est.error_estimate = unit * std::abs(full - half);
  }
  return est;
}

void write_iterates_csv(std::ostream& os, const RotationEstimate& est) {
  os << "iter,r,theta_lift\n";
  char line[128];
  for (const SectionSample& s : est.samples) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g\n", s.iter, s.guide, s.angle_lift);
    os << line;
  }
}

// ---------------------------------------------------------------------------
// Periodic orbits

namespace {

struct MapOrbitEval {
  Vec2 end;
  double lift = 0.0;  // accumulated angular increments, chart units
  double time = 0.0;
  std::vector<Vec2> pts;
};

MapOrbitEval iterate_returns(const SectionMap& map, const Vec2& x, long q, bool record) {
  MapOrbitEval ev;
  if (record) ev.pts.reserve(static_cast<std::size_t>(q));
  Vec2 cur = x;
  for (long k = 0; k < q; ++k) {
    if (record) ev.pts.push_back(cur);
    SectionReturn r = map.ret(cur, +1);
    ev.lift += map.angular_delta(cur.y, r.q.y);
    ev.time += r.dt;
    cur = r.q;
  }
  ev.end = cur;
  return ev;
}

double hausdorff(const std::vector<Vec2>& a, const std::vector<Vec2>& b, double P) {
  auto directed = [P](const std::vector<Vec2>& s, const std::vector<Vec2>& t) {
    double worst = 0.0;
    for (const Vec2& p : s) {
      double best = kInf;
      for (const Vec2& q : t) {
        double dx = p.x - q.x, dy = min_image(p.y - q.y, P);
        best = std::min(best, dx * dx + dy * dy);
      }
      worst = std::max(worst, best);
    }
    return std::sqrt(worst);
  };
  return std::max(directed(a, b), directed(b, a));
}

}  // namespace

OrbitSearch find_periodic_orbits(const SectionMap& map, double guide_lo, double guide_hi,
                                 const std::vector<OrbitTarget>& targets_in,
                                 const ShootingOptions& opt) {
  if (!(guide_hi > guide_lo))
    throw geom::DomainError("periodic orbit search: need guide_lo < guide_hi");
  OrbitSearch out;
  const double P = map.angular_period();
  const double band = guide_hi - guide_lo;
  const double lo = guide_lo + 0.02 * band, hi = guide_hi - 0.02 * band;
  const int prit = std::max(100, opt.probe_iterates);

  // rotation profile across the band; the boundary values bracket the
  // resonances reachable inside
  std::vector<double> pr, prho;
  const int n_probe = 5;
  for (int i = 0; i < n_probe; ++i) {
    double r = lo + (hi - lo) * i / (n_probe - 1.0);
    RotationEstimate est = rotation_number(map, {r, 0.0}, prit);
    if (est.escaped || est.completed < prit) {
      out.notes.push_back("rotation probe escaped at guide " + fmt_num(r));
      continue;
    }
    pr.push_back(r);
    prho.push_back(est.value);
  }
  if (pr.size() < 2) {
    out.notes.push_back("too few rotation probes survived, search aborted");
    return out;
  }
  out.rho_lo = prho.front();
  out.rho_hi = prho.back();
  const double fa = std::min(out.rho_lo, out.rho_hi) / kTwoPi;
  const double fb = std::max(out.rho_lo, out.rho_hi) / kTwoPi;

  PolyFit fit = polyfit(pr, prho, std::min<int>(3, static_cast<int>(pr.size()) - 1));
  auto rho_model = [&fit](double r) {
    double v = 0.0;
    for (std::size_t k = fit.coeff.size(); k-- > 0;) v = v * r + fit.coeff[k];
    return v;
  };

  std::vector<OrbitTarget> targets = targets_in;
  if (targets.empty()) {
    // smallest denominators first; reduced fractions strictly inside
    for (long q = 1; static_cast<int>(targets.size()) < opt.max_targets && q <= 20000000L; ++q) {
      long plo = static_cast<long>(std::floor(fa * q)) + 1;
      long phi = static_cast<long>(std::ceil(fb * q)) - 1;
      for (long p = plo; p <= phi && static_cast<int>(targets.size()) < opt.max_targets; ++p) {
        if (std::gcd(std::labs(p), q) != 1) continue;
        targets.push_back({p, q});
      }
    }
    if (targets.empty()) {
      out.notes.push_back("no reduced rotation fraction strictly inside the boundary interval");
      return out;
    }
  }

  std::vector<std::vector<Vec2>> seen_pts;  // section orbits of accepted entries
  std::vector<std::pair<long, long>> seen_pq;
  char msg[160];

  for (const OrbitTarget& tg : targets) {
    if (tg.q < 1) {
      out.notes.push_back("target with nonpositive denominator skipped");
      continue;
    }
    const double frac_t = static_cast<double>(tg.p) / static_cast<double>(tg.q);
    if (!(frac_t > fa && frac_t < fb)) {
      std::snprintf(msg, sizeof msg,
                    "target %ld/%ld outside the boundary rotation interval, skipped", tg.p, tg.q);
      out.notes.push_back(msg);
      continue;
    }
    const double rho_t = kTwoPi * frac_t;

    // first guess by inverting the fitted rotation profile
    std::vector<Vec2> starts;
    {
      double ra = pr.front(), rb = pr.back();
      double ga = rho_model(ra) - rho_t;
      const int cells = 64;
      for (int k = 0; k < cells; ++k) {
        double rc = ra + (rb - ra) * (k + 1) / cells;
        double gb = rho_model(rc) - rho_t;
        if (ga == 0.0 || ga * gb < 0.0) {
          double r0 = ra + (rb - ra) * k / cells;
          double rstar = ga == 0.0
                             ? r0
                             : brent_root([&](double r) { return rho_model(r) - rho_t; }, r0,
                                          rc, 1e-12 * (1.0 + std::abs(rb)));
          starts.push_back({rstar, 0.0});
          break;
        }
        ga = gb;
      }
    }
    for (int k = 0; static_cast<int>(starts.size()) < opt.multi_starts; ++k) {
      double fr = (((k * 7) % opt.multi_starts) + 0.5) / opt.multi_starts;
      double ph = P > 0.0 ? (k % 4) * 0.25 * P : 0.0;
      starts.push_back({lo + fr * (hi - lo), ph});
    }

    bool got = false;
    bool noted_fail = false;
    // every evaluation runs q full returns; the budget caps a target's cost
    int f_budget = 120;

    for (const Vec2& s0 : starts) {
      if (f_budget <= 0) {
        std::snprintf(msg, sizeof msg, "shooting budget exhausted for target %ld/%ld", tg.p,
                      tg.q);
        out.notes.push_back(msg);
        break;
      }
      try {
        Vec2 xx{std::clamp(s0.x, guide_lo, guide_hi), s0.y};
        auto eval_F = [&](const Vec2& at) {
          MapOrbitEval ev = iterate_returns(map, at, tg.q, false);
          --f_budget;
          return Vec2{ev.end.x - at.x, ev.lift - static_cast<double>(tg.p) * P};
        };

        int iters = 0;
        Vec2 F = eval_F(xx);
        double fn = std::max(std::abs(F.x), std::abs(F.y));
        int stall = 0;
        while (fn >= opt.residual_tol && iters < opt.max_newton && f_budget > 2) {
          ++iters;
          Vec2 F1 = eval_F({xx.x + opt.fd_step, xx.y});
          Vec2 F2 = eval_F({xx.x, xx.y + opt.fd_step});
          Mat2 J{(F1.x - F.x) / opt.fd_step, (F2.x - F.x) / opt.fd_step,
                 (F1.y - F.y) / opt.fd_step, (F2.y - F.y) / opt.fd_step};
          // ridge-damped least squares handles the rank-1 Jacobian of
          // rotationally symmetric twist maps
          Mat2 N{J.a * J.a + J.c * J.c, J.a * J.b + J.c * J.d, J.a * J.b + J.c * J.d,
                 J.b * J.b + J.d * J.d};
          double ridge = 1e-12 * (N.a + N.d) + 1e-300;
          N.a += ridge;
          N.d += ridge;
          Vec2 rhs{-(J.a * F.x + J.c * F.y), -(J.b * F.x + J.d * F.y)};
          Vec2 d = solve2(N, rhs);
          double cap = 0.2 * band;
          double dn = std::max(std::abs(d.x), std::abs(d.y));
          if (dn > cap) d = d * (cap / dn);
          bool accepted = false;
          for (double alpha = 1.0; alpha >= 1.0 / 16 && f_budget > 0; alpha *= 0.5) {
            Vec2 xn{std::clamp(xx.x + alpha * d.x, guide_lo, guide_hi), xx.y + alpha * d.y};
            Vec2 Fn = eval_F(xn);
            double fnn = std::max(std::abs(Fn.x), std::abs(Fn.y));
            if (fnn < fn * (1.0 - 0.25 * alpha) || fnn < opt.residual_tol) {
              stall = fnn > 0.5 * fn ? stall + 1 : 0;
              xx = xn;
              F = Fn;
              fn = fnn;
              accepted = true;
              break;
            }
          }
          if (!accepted || stall >= 3) break;
        }

        if (fn < opt.residual_tol) {
          MapOrbitEval full = iterate_returns(map, xx, tg.q, true);
          --f_budget;
          PeriodicOrbit po;
          po.found = true;
          po.s = map.speed();
          po.p = tg.p;
          po.q = tg.q;
          po.section_point = xx;
          po.residual = fn;
          po.newton_iterations = iters;
          po.period = full.time;

          flow::IntegrateOptions io;
          io.rtol = map.options().rtol;
          io.atol = map.options().atol;
          io.sample_dt = full.time / opt.curve_samples;
          io.record = true;
          flow::Trajectory tr = flow::integrate(map.surface(), map.field(),
                                                map.section_state(xx), map.speed(), full.time,
                                                io);
          if (tr.halted) po.note = "reconstruction halted: " + tr.halt_reason;
          po.curve.reserve(tr.samples.size());
          double wind = 0.0;
          for (std::size_t i = 0; i < tr.samples.size(); ++i) {
            po.curve.push_back({tr.samples[i].chart, tr.samples[i].q});
            if (i > 0 && tr.samples[i].chart == tr.samples[i - 1].chart)
              wind += min_image(tr.samples[i].q.y - tr.samples[i - 1].q.y, P);
          }
          if (!tr.samples.empty()) {
            if (tr.samples.back().chart == tr.final_state.chart)
              wind += min_image(tr.final_state.q.y - tr.samples.back().q.y, P);
            po.closure_error = map.surface().distance(
                ChartPoint(tr.samples.front().chart, tr.samples.front().q),
                tr.final_state.point());
          }
          po.winding = P > 0.0 ? std::lround(wind / P) : 0;
          po.curvature_residual =
              flow::curvature_residual(map.surface(), map.field(), tr).max_residual;

          bool dup = false;
          for (std::size_t i = 0; i < seen_pq.size(); ++i) {
            if (seen_pq[i] != std::make_pair(tg.p, tg.q)) continue;
            if (hausdorff(full.pts, seen_pts[i], P) < opt.dedup_tol) {
              dup = true;
              break;
            }
          }
          if (dup) {
            std::snprintf(msg, sizeof msg, "duplicate orbit for target %ld/%ld dropped", tg.p,
                          tg.q);
            out.notes.push_back(msg);
          } else {
            seen_pq.emplace_back(tg.p, tg.q);
            seen_pts.push_back(std::move(full.pts));
            out.orbits.push_back(std::move(po));
            got = true;
          }
          if (opt.stop_after_first) break;
        }
      } catch (const geom::DomainError& e) {
        if (!noted_fail) {
          std::snprintf(msg, sizeof msg, "shooting start for %ld/%ld failed: %s", tg.p, tg.q,
                        e.what());
          out.notes.push_back(msg);
          noted_fail = true;
        }
      }
    }

    if (!got) {
      PeriodicOrbit fail;
      fail.found = false;
      fail.s = map.speed();
      fail.p = tg.p;
      fail.q = tg.q;
      fail.note = "no start converged";
      out.orbits.push_back(std::move(fail));
    }
  }
  return out;
}

void write_orbits_json(std::ostream& os, const OrbitSearch& search) {
  os << "{\n  \"rho_lo\": " << fmt_num(search.rho_lo)
     << ",\n  \"rho_hi\": " << fmt_num(search.rho_hi) << ",\n  \"orbits\": [";
  for (std::size_t i = 0; i < search.orbits.size(); ++i) {
    const PeriodicOrbit& o = search.orbits[i];
    os << (i ? ",\n    {" : "\n    {") << "\"found\": " << (o.found ? "true" : "false")
       << ", \"p\": " << o.p << ", \"q\": " << o.q << ", \"s\": " << fmt_num(o.s)
       << ", \"section_point\": [" << fmt_num(o.section_point.x) << ", "
       << fmt_num(o.section_point.y) << "]"
       << ", \"residual\": " << fmt_num(o.residual)
       << ", \"newton_iterations\": " << o.newton_iterations
       << ", \"period\": " << fmt_num(o.period)
       << ", \"closure_error\": " << fmt_num(o.closure_error)
       << ", \"curvature_residual\": " << fmt_num(o.curvature_residual)
       << ", \"winding\": " << o.winding << ", \"curve_points\": " << o.curve.size()
       << ", \"note\": \"" << json_escape(o.note) << "\"}";
  }
  os << "\n  ],\n  \"notes\": [";
  for (std::size_t i = 0; i < search.notes.size(); ++i)
    os << (i ? ", " : "") << '"' << json_escape(search.notes[i]) << '"';
  os << "]\n}\n";
}

void write_orbit_curve_csv(std::ostream& os, const PeriodicOrbit& orbit) {
  os << "index,chart,q1,q2\n";
  char line[160];
  for (std::size_t i = 0; i < orbit.curve.size(); ++i) {
    std::snprintf(line, sizeof line, "%zu,%d,%.17g,%.17g\n", i,
                  static_cast<int>(orbit.curve[i].chart), orbit.curve[i].q.x,
                  orbit.curve[i].q.y);
    os << line;
  }
}

// ---------------------------------------------------------------------------
// Ensemble experiments

namespace {

// chart equation on a surface of revolution away from the caps, with the
// profile from the Hermite tables and the field as a plain radial value
struct RevRhs {
  const SurfaceModel* surf;
  const std::function<double(double)>* bfn;
  void operator()(double, const std::array<double, 4>& y, std::array<double, 4>& dy) const {
    double a, da;
    surf->radial_fast(y[0], a, da);
    const double b = (*bfn)(y[0]);
    const double vr = y[2], vf = y[3];
    dy[0] = vr;
    dy[1] = vf;
    dy[2] = a * da * vf * vf - b * a * vf;
    dy[3] = -2.0 * (da / a) * vr * vf + b * vr / a;
  }
};

// flat torus: no Christoffel terms, perp is the quarter turn
struct TorusRhs {
  const SurfaceModel* surf;
  const FieldSpec* field;
  void operator()(double, const std::array<double, 4>& y, std::array<double, 4>& dy) const {
    const double b = field->value(*surf, ChartPoint(ChartId::primary, {y[0], y[1]}));
    dy[0] = y[2];
    dy[1] = y[3];
    dy[2] = -b * y[3];
    dy[3] = b * y[2];
  }
};

// scalar b(r) without the derivative work of the generic jet path
std::function<double(double)> radial_value_fn(const SurfaceModel& surf, const FieldSpec& field) {
  switch (field.kind()) {
    case FieldSpec::Kind::constant: {
      const double b0 = field.constant_value();
      return [b0](double) { return b0; };
    }
    case FieldSpec::Kind::height_affine: {
      const double al = field.alpha(), be = field.beta();
      const SurfaceModel* sp = &surf;
      return [sp, al, be](double r) { return be + al * sp->height(r); };
    }
    case FieldSpec::Kind::resonant: {
      const double al = field.alpha(), be = field.beta();
      const SurfaceModel* sp = &surf;
      return [sp, al, be](double r) { return 1.0 / std::sqrt(2.0 * (al * sp->moment(r) + be)); };
    }
    default: {
      const SurfaceModel* sp = &surf;
      const FieldSpec* fp = &field;
      return [sp, fp](double r) { return fp->value(*sp, ChartPoint(r, 0.0)); };
    }
  }
}

bool metric_is_identity(const SurfaceModel& surf) {
  if (surf.is_revolution()) return false;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      auto g = surf.metric_first(ChartPoint(
          ChartId::primary, {surf.Lx() * (0.21 + 0.19 * i), surf.Ly() * (0.13 + 0.27 * j)}));
      if (g.E != 1.0 || g.F != 0.0 || g.G != 1.0) return false;
    }
  return true;
}

// distance to a closed polyline with minimum-image wrapping, windowed
// around the segment hit last time
struct PolyDist {
  std::vector<Vec2> pts;
  std::vector<Vec2> seg;
  std::vector<double> len2;
  double Px = 0.0, Py = 0.0;
  mutable std::size_t hint_ = 0;
  mutable std::uint64_t calls_ = 0;

  void build(const std::vector<ChartPoint>& points, double px, double py) {
    Px = px;
    Py = py;
    pts.reserve(points.size());
    for (const ChartPoint& p : points) pts.push_back(p.q);
    std::size_t n = pts.size() - 1;  // closed: last entry duplicates the first
    seg.resize(n);
    len2.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      seg[k] = {min_image(pts[k + 1].x - pts[k].x, Px), min_image(pts[k + 1].y - pts[k].y, Py)};
      len2[k] = std::max(seg[k].x * seg[k].x + seg[k].y * seg[k].y, 1e-300);
    }
  }

  double seg_dist2(std::size_t k, const Vec2& q) const {
    Vec2 d{min_image(q.x - pts[k].x, Px), min_image(q.y - pts[k].y, Py)};
    double t = std::clamp((d.x * seg[k].x + d.y * seg[k].y) / len2[k], 0.0, 1.0);
    double ex = d.x - t * seg[k].x, ey = d.y - t * seg[k].y;
    return ex * ex + ey * ey;
  }

  double operator()(const Vec2& q) const {
    std::size_t n = seg.size();
    double best = kInf;
    std::size_t bidx = hint_;
    if (++calls_ % 1024 == 0 || n <= 17) {
      for (std::size_t k = 0; k < n; ++k) {
        double d = seg_dist2(k, q);
        if (d < best) {
          best = d;
          bidx = k;
        }
      }
    } else {
      for (int w = -8; w <= 8; ++w) {
        std::size_t k = (hint_ + n + static_cast<std::size_t>(w + 8) - 8) % n;
        double d = seg_dist2(k, q);
        if (d < best) {
          best = d;
          bidx = k;
        }
      }
    }
    hint_ = bidx;
    return std::sqrt(best);
  }
};

struct StepHooks {
  std::function<double(const std::array<double, 4>&)> theta;
  std::function<double(const std::array<double, 4>&)> dist;
  std::function<void(std::array<double, 4>&)> project;
};

struct LegResult {
  double lift = 0.0;
  double time = 0.0;
  bool escaped = false;
  bool underflow = false;
};

template <class RHS>
LegResult run_trap_leg(RHS rhs, const OdeOptions& oo, const std::array<double, 4>& y0,
                       double direction, std::int64_t horizon, double outer,
                       const StepHooks& hooks, double& max_excursion) {
  Dopri5<4, RHS> ode(rhs, oo);
  ode.start(0.0, y0, direction);
  const double t_far = direction * 1e18;
  const double lift_cap = kTwoPi * static_cast<double>(horizon);
  double lift = 0.0;
  double th_prev = hooks.theta(y0);
  int since_proj = 0;
  LegResult leg;
  for (;;) {
    if (!ode.advance(t_far)) {
      leg.underflow = true;
      break;
    }
    const std::array<double, 4>& y = ode.y();
    double th = hooks.theta(y);
    lift += principal(th - th_prev);
    th_prev = th;
    double d = hooks.dist(y);
    if (d > max_excursion) max_excursion = d;
    if (d > outer) {
      leg.escaped = true;
      break;
    }
    if (std::abs(lift) >= lift_cap) break;
    if (++since_proj >= 32) {
      std::array<double, 4> yp = y;
      hooks.project(yp);
      ode.set_state(yp, true);
      since_proj = 0;
    }
  }
  leg.lift = lift;
  leg.time = std::abs(ode.t());
  return leg;
}

// FlowStepper fallback for metrics without a specialized right-hand side
LegResult run_trap_leg_generic(const SurfaceModel& surf, const FieldSpec& field, double s,
                               const OdeOptions& oo, const PhaseState& st0, double direction,
                               std::int64_t horizon, double outer,
                               const std::function<double(const PhaseState&)>& dist,
                               double& max_excursion, bool& chart_exit) {
  flow::FlowStepper fs(surf, field, s, oo);
  fs.set_direction(direction);
  fs.start(st0);
  const double t_far = direction * 1e18;
  const double lift_cap = kTwoPi * static_cast<double>(horizon);
  double lift = 0.0;
  double th_prev = velocity_angle(surf.metric_first(st0.point()), st0.v);
  LegResult leg;
  for (;;) {
    if (!fs.advance(t_far)) {
      leg.underflow = true;
      break;
    }
    PhaseState end = fs.dense_state(fs.t());
    double th = velocity_angle(surf.metric_first(end.point()), end.v);
    lift += principal(th - th_prev);
    PhaseState cur = fs.current();
    if (cur.chart != st0.chart) {
      chart_exit = true;
      leg.escaped = true;
      break;
    }
    th_prev = th;
    double d = dist(cur);
    if (d > max_excursion) max_excursion = d;
    if (d > outer) {
      leg.escaped = true;
      break;
    }
    if (std::abs(lift) >= lift_cap) break;
  }
  leg.lift = lift;
  leg.time = std::abs(fs.t());
  return leg;
}

std::int64_t returns_of(double lift) {
  return static_cast<std::int64_t>(std::abs(lift) / kTwoPi);
}

}  // namespace

TrapReport trapping_experiment(const SurfaceModel& surface, const FieldSpec& field, double s,
                               const reduced::LevelCircle& circle, double inner_halfwidth,
                               double outer_halfwidth, const TrapOptions& opt) {
  if (!(s > 0.0)) throw geom::DomainError("trapping: speed must be positive");
  if (!(inner_halfwidth > 0.0) || !(outer_halfwidth > inner_halfwidth))
    throw geom::DomainError("trapping: need 0 < inner < outer halfwidth");
  if (circle.points.size() < 3)
    throw geom::DomainError("trapping: level circle carries too few samples");
  for (const ChartPoint& p : circle.points)
    if (p.chart != ChartId::primary)
      throw geom::DomainError("trapping: level circle must lie in the primary chart");
  if (opt.n_samples < 0) throw geom::DomainError("trapping: negative sample count");

  TrapReport rep;
  rep.speed = s;
  rep.inner_halfwidth = inner_halfwidth;
  rep.outer_halfwidth = outer_halfwidth;
  rep.horizon_returns = opt.horizon_returns;
  rep.n_samples = opt.n_samples;
  rep.seed = opt.seed;

  const bool rev = surface.is_revolution();
  const bool flat = !rev && metric_is_identity(surface);
  const double Px = axis_period(surface, ChartId::primary, 0);
  const double Py = axis_period(surface, ChartId::primary, 1);

  const double r_level = circle.seed.q.x;
  rep.guide_center = r_level;
  bool symmetric = true;
  for (const ChartPoint& p : circle.points)
    symmetric = symmetric && std::abs(min_image(p.q.x - r_level, Px)) <
                                 1e-9 * (1.0 + std::abs(r_level));

  if (rev) {
    double margin = std::min(r_level, surface.R() - r_level);
    if (!(outer_halfwidth < margin))
      throw geom::DomainError("trapping: outer band reaches a pole");
  }

  OdeOptions oo;
  oo.rtol = opt.rtol;
  oo.atol = opt.atol;

  std::function<double(double)> bfn;
  if (rev) bfn = radial_value_fn(surface, field);
  const RevRhs rrhs{&surface, &bfn};
  const TorusRhs trhs{&surface, &field};

  PolyDist poly;
  if (!symmetric) poly.build(circle.points, Px, Py);

  rep.samples.assign(static_cast<std::size_t>(opt.n_samples), TrapSample{});
  std::vector<std::string> sample_notes(rep.samples.size());
  std::vector<double> sample_time(rep.samples.size(), 0.0);

  auto worker = [&](std::size_t i) {
    SplitMix64 rng(sample_seed(opt.seed, i));
    TrapSample& smp = rep.samples[i];
    smp.index = static_cast<int>(i);

    double off = rng.uniform(-inner_halfwidth, inner_halfwidth);
    double along = rng.uniform01();
    double chi = rng.uniform(0.0, kTwoPi);
    smp.phase0 = chi;

    Vec2 q0;
    if (symmetric) {
      q0 = {r_level + off, Py > 0.0 ? along * Py : 0.0};
      smp.guide0 = q0.x;
      smp.angle0 = q0.y;
    } else {
      std::size_t nseg = poly.seg.size();
      double u = along * static_cast<double>(nseg);
      std::size_t k = std::min(static_cast<std::size_t>(u), nseg - 1);
      double frac = u - static_cast<double>(k);
      Vec2 base{poly.pts[k].x + frac * poly.seg[k].x, poly.pts[k].y + frac * poly.seg[k].y};
      double ln = std::sqrt(poly.len2[k]);
      Vec2 nrm{-poly.seg[k].y / ln, poly.seg[k].x / ln};
      q0 = {base.x + off * nrm.x, base.y + off * nrm.y};
      smp.guide0 = off;
      smp.angle0 = along * circle.T;
    }

    double mex = 0.0;
    std::int64_t rets = 0;
    bool chart_exit = false;
    auto absorb = [&](const LegResult& leg, int dirlab) {
      rets += returns_of(leg.lift);
      sample_time[i] += leg.time;
      if (leg.underflow) sample_notes[i] = "step size underflow";
      if (leg.escaped && !smp.escaped) {
        smp.escaped = true;
        smp.escape_direction = dirlab;
      }
    };

    if (rev || flat) {
      std::array<double, 4> y0{};
      StepHooks hooks;
      if (rev) {
        double a, da;
        surface.radial_fast(q0.x, a, da);
        y0 = {q0.x, q0.y, s * std::cos(chi), s * std::sin(chi) / a};
        const SurfaceModel* sp = &surface;
        hooks.theta = [sp](const std::array<double, 4>& y) {
          double a2, da2;
          sp->radial_fast(y[0], a2, da2);
          return std::atan2(a2 * y[3], y[2]);
        };
        const double rmin = surface.switch_to_cap_radius();
        const double rmax = surface.R() - surface.switch_to_cap_radius();
        const double out_h = outer_halfwidth;
        if (symmetric) {
          const double rl = r_level;
          hooks.dist = [rl, rmin, rmax, out_h](const std::array<double, 4>& y) {
            double d = std::abs(y[0] - rl);
            if (y[0] < rmin || y[0] > rmax) d = std::max(d, 1.000001 * out_h);
            return d;
          };
        } else {
          hooks.dist = [local = poly, rmin, rmax, out_h](const std::array<double, 4>& y) mutable {
            double d = local({y[0], y[1]});
            if (y[0] < rmin || y[0] > rmax) d = std::max(d, 1.000001 * out_h);
            return d;
          };
        }
        hooks.project = [sp, s](std::array<double, 4>& y) {
          double a2, da2;
          sp->radial_fast(y[0], a2, da2);
          double c = s / std::sqrt(y[2] * y[2] + a2 * a2 * y[3] * y[3]);
          y[2] *= c;
          y[3] *= c;
        };
      } else {
        y0 = {q0.x, q0.y, s * std::cos(chi), s * std::sin(chi)};
        hooks.theta = [](const std::array<double, 4>& y) { return std::atan2(y[3], y[2]); };
        if (symmetric) {
          const double rl = r_level, px = Px;
          hooks.dist = [rl, px](const std::array<double, 4>& y) {
            return std::abs(min_image(y[0] - rl, px));
          };
        } else {
          hooks.dist = [local = poly](const std::array<double, 4>& y) mutable {
            return local({y[0], y[1]});
          };
        }
        hooks.project = [s](std::array<double, 4>& y) {
          double c = s / std::sqrt(y[2] * y[2] + y[3] * y[3]);
          y[2] *= c;
          y[3] *= c;
        };
      }
      if (rev) {
        absorb(run_trap_leg(rrhs, oo, y0, +1.0, opt.horizon_returns, outer_halfwidth, hooks,
                            mex),
               +1);
        if (opt.both_directions && !smp.escaped)
          absorb(run_trap_leg(rrhs, oo, y0, -1.0, opt.horizon_returns, outer_halfwidth, hooks,
                              mex),
                 -1);
      } else {
        absorb(run_trap_leg(trhs, oo, y0, +1.0, opt.horizon_returns, outer_halfwidth, hooks,
                            mex),
               +1);
        if (opt.both_directions && !smp.escaped)
          absorb(run_trap_leg(trhs, oo, y0, -1.0, opt.horizon_returns, outer_halfwidth, hooks,
                              mex),
                 -1);
      }
    } else {
      // conformal metric: generic stepper
      auto g = surface.metric_first(ChartPoint(ChartId::primary, q0));
      double se = std::sqrt(g.E), rho = g.density();
      Vec2 e1{1.0 / se, 0.0};
      Vec2 e2{-g.F / (se * rho), g.E / (se * rho)};
      PhaseState st0;
      st0.chart = ChartId::primary;
      st0.q = surface.wrap(ChartId::primary, q0);
      st0.v = {s * (std::cos(chi) * e1.x + std::sin(chi) * e2.x),
               s * (std::cos(chi) * e1.y + std::sin(chi) * e2.y)};
      std::function<double(const PhaseState&)> dist;
      if (symmetric) {
        const double rl = r_level, px = Px;
        dist = [rl, px](const PhaseState& st) { return std::abs(min_image(st.q.x - rl, px)); };
      } else {
        dist = [local = poly](const PhaseState& st) mutable { return local(st.q); };
      }
      absorb(run_trap_leg_generic(surface, field, s, oo, st0, +1.0, opt.horizon_returns,
                                  outer_halfwidth, dist, mex, chart_exit),
             +1);
      if (opt.both_directions && !smp.escaped)
        absorb(run_trap_leg_generic(surface, field, s, oo, st0, -1.0, opt.horizon_returns,
                                    outer_halfwidth, dist, mex, chart_exit),
               -1);
    }
    if (chart_exit) sample_notes[i] = "orbit left the start chart, counted as escape";
    smp.max_excursion = mex;
    smp.returns = rets;
  };

  parallel_for_indexed(resolve_jobs(opt.jobs), rep.samples.size(), worker);

  for (std::size_t i = 0; i < rep.samples.size(); ++i) {
    const TrapSample& smp = rep.samples[i];
    if (smp.escaped) ++rep.escape_count;
    rep.max_excursion = std::max(rep.max_excursion, smp.max_excursion);
    rep.physical_time += sample_time[i];
    if (!sample_notes[i].empty())
      rep.notes.push_back("sample " + std::to_string(i) + ": " + sample_notes[i]);
  }
  rep.notes.push_back(std::string("integrator: ") +
                      (rev ? "specialized revolution stepper"
                           : flat ? "specialized flat-torus stepper" : "generic chart stepper") +
                      ", rtol " + fmt_num(opt.rtol));
  return rep;
}

void write_trap_json(std::ostream& os, const TrapReport& rep) {
  os << "{\n";
  os << "  \"speed\": " << fmt_num(rep.speed) << ",\n";
  os << "  \"inner_halfwidth\": " << fmt_num(rep.inner_halfwidth) << ",\n";
  os << "  \"outer_halfwidth\": " << fmt_num(rep.outer_halfwidth) << ",\n";
  os << "  \"guide_center\": " << fmt_num(rep.guide_center) << ",\n";
  os << "  \"horizon_returns\": " << rep.horizon_returns << ",\n";
  os << "  \"n_samples\": " << rep.n_samples << ",\n";
  os << "  \"seed\": " << rep.seed << ",\n";
  os << "  \"drift_orientation\": " << kDriftOrientation << ",\n";
  os << "  \"escape_count\": " << rep.escape_count << ",\n";
  os << "  \"max_excursion\": " << fmt_num(rep.max_excursion) << ",\n";
  os << "  \"physical_time\": " << fmt_num(rep.physical_time) << ",\n";
  os << "  \"samples\": [";
  for (std::size_t i = 0; i < rep.samples.size(); ++i) {
    const TrapSample& s = rep.samples[i];
    os << (i ? ",\n    {" : "\n    {") << "\"index\": " << s.index
       << ", \"guide0\": " << fmt_num(s.guide0) << ", \"angle0\": " << fmt_num(s.angle0)
       << ", \"phase0\": " << fmt_num(s.phase0)
       << ", \"max_excursion\": " << fmt_num(s.max_excursion)
       << ", \"escaped\": " << (s.escaped ? "true" : "false")
       << ", \"escape_direction\": " << s.escape_direction << ", \"returns\": " << s.returns
       << "}";
  }
  os << "\n  ],\n  \"notes\": [";
  for (std::size_t i = 0; i < rep.notes.size(); ++i)
    os << (i ? ", " : "") << '"' << json_escape(rep.notes[i]) << '"';
  os << "]\n}\n";
}

// ---------------------------------------------------------------------------
// Saddle escape

namespace {

struct SaddleLegResult {
  int kind = 0;
  Vec2 exit_ab;
  double lift = 0.0;
  bool underflow = false;
};

template <class RHS>
SaddleLegResult run_saddle_leg(RHS rhs, const OdeOptions& oo, const std::array<double, 4>& y0,
                               double direction, std::int64_t horizon, double delta, double eps,
                               const StepHooks& hooks,
                               const std::function<Vec2(const std::array<double, 4>&)>& ab_of) {
  Dopri5<4, RHS> ode(rhs, oo);
  ode.start(0.0, y0, direction);
  const double t_far = direction * 1e18;
  const double lift_cap = kTwoPi * static_cast<double>(horizon);
  double lift = 0.0;
  double th_prev = hooks.theta(y0);
  int since_proj = 0;
  SaddleLegResult leg;
  for (;;) {
    if (!ode.advance(t_far)) {
      leg.underflow = true;
      break;
    }
    const std::array<double, 4>& y = ode.y();
    double th = hooks.theta(y);
    lift += principal(th - th_prev);
    th_prev = th;
    Vec2 ab = ab_of(y);
    if (std::max(std::abs(ab.x), std::abs(ab.y)) > delta) {
      leg.exit_ab = ab;
      if (std::abs(ab.x) >= delta && std::abs(ab.y) <= eps)
        leg.kind = 1;
      else if (std::abs(ab.y) >= delta && std::abs(ab.x) <= eps)
        leg.kind = 2;
      else
        leg.kind = 3;
      break;
    }
    if (std::abs(lift) >= lift_cap) break;
    if (++since_proj >= 32) {
      std::array<double, 4> yp = y;
      hooks.project(yp);
      ode.set_state(yp, true);
      since_proj = 0;
    }
  }
  leg.lift = lift;
  return leg;
}

SaddleLegResult run_saddle_leg_generic(
    const SurfaceModel& surf, const FieldSpec& field, double s, const OdeOptions& oo,
    const PhaseState& st0, double direction, std::int64_t horizon, double delta, double eps,
    const std::function<Vec2(const PhaseState&)>& ab_of, bool& chart_exit) {
  flow::FlowStepper fs(surf, field, s, oo);
  fs.set_direction(direction);
  fs.start(st0);
  const double t_far = direction * 1e18;
  const double lift_cap = kTwoPi * static_cast<double>(horizon);
  double lift = 0.0;
  double th_prev = velocity_angle(surf.metric_first(st0.point()), st0.v);
  SaddleLegResult leg;
  for (;;) {
    if (!fs.advance(t_far)) {
      leg.underflow = true;
      break;
    }
    PhaseState end = fs.dense_state(fs.t());
    double th = velocity_angle(surf.metric_first(end.point()), end.v);
    lift += principal(th - th_prev);
    PhaseState cur = fs.current();
    if (cur.chart != st0.chart) {
      chart_exit = true;
      leg.kind = 3;
      break;
    }
    th_prev = th;
    Vec2 ab = ab_of(cur);
    if (std::max(std::abs(ab.x), std::abs(ab.y)) > delta) {
      leg.exit_ab = ab;
      if (std::abs(ab.x) >= delta && std::abs(ab.y) <= eps)
        leg.kind = 1;
      else if (std::abs(ab.y) >= delta && std::abs(ab.x) <= eps)
        leg.kind = 2;
      else
        leg.kind = 3;
      break;
    }
    if (std::abs(lift) >= lift_cap) break;
  }
  leg.lift = lift;
  return leg;
}

}  // namespace

SaddleReport saddle_escape_experiment(const SurfaceModel& surface, const FieldSpec& field,
                                      double s, const reduced::CriticalPoint& saddle,
                                      double delta, double eps, double start_halfwidth,
                                      const SaddleOptions& opt) {
  if (!(s > 0.0)) throw geom::DomainError("saddle escape: speed must be positive");
  if (saddle.type != reduced::CriticalType::saddle)
    throw geom::DomainError("saddle escape: critical point is not a saddle");
  if (!(eps > 0.0) || !(eps < delta))
    throw geom::DomainError("saddle escape: need 0 < eps < delta");
  if (!(start_halfwidth > 0.0) || !(start_halfwidth <= delta))
    throw geom::DomainError("saddle escape: start box must fit inside the delta box");
  if (opt.n_samples < 0) throw geom::DomainError("saddle escape: negative sample count");

  reduced::ReducedSystem rs = reduced::ReducedSystem::make(surface, field);
  reduced::HamJet hj = rs.hamiltonian(saddle.location);
  const double rho0 = surface.metric_first(saddle.location).density();
  // linearized drift field at the critical point; the area-density gradient
  // drops out where grad H vanishes
  Mat2 A{-hj.hess.xy / rho0, -hj.hess.yy / rho0, hj.hess.xx / rho0, hj.hess.xy / rho0};
  const double disc = -A.det();
  if (!(disc > 0.0))
    throw geom::DomainError("saddle escape: linearization is not hyperbolic");
  const double lam = std::sqrt(disc);
  auto eigvec = [&A](double l) {
    Vec2 c1{A.b, l - A.a};
    Vec2 c2{l - A.d, A.c};
    Vec2 v = c1.norm() >= c2.norm() ? c1 : c2;
    return v * (1.0 / v.norm());
  };
  const Vec2 u = eigvec(lam);   // stretched directions in forward time
  const Vec2 w = eigvec(-lam);  // compressed

  SaddleReport rep;
  rep.speed = s;
  rep.time_reversed = opt.time_reversed;
  rep.saddle = saddle.location;
  rep.level = hj.value;
  rep.delta = delta;
  rep.eps = eps;
  rep.start_halfwidth = start_halfwidth;
  rep.axis_unstable = u;
  rep.axis_stable = w;
  rep.seed = opt.seed;

  const double detB = u.x * w.y - u.y * w.x;
  auto box_coords = [u, w, detB](const Vec2& d) {
    return Vec2{(w.y * d.x - w.x * d.y) / detB, (u.x * d.y - u.y * d.x) / detB};
  };

  const ChartId chart = saddle.location.chart;
  const Vec2 sq = saddle.location.q;
  const double Px = axis_period(surface, chart, 0);
  const double Py = axis_period(surface, chart, 1);
  const bool rev = surface.is_revolution();
  const bool flat = !rev && metric_is_identity(surface);
  const bool fused = (rev || flat) && chart == ChartId::primary;
  const double dir = opt.time_reversed ? -1.0 : 1.0;

  OdeOptions oo;
  oo.rtol = opt.rtol;
  oo.atol = opt.atol;

  std::function<double(double)> bfn;
  if (rev) bfn = radial_value_fn(surface, field);
  const RevRhs rrhs{&surface, &bfn};
  const TorusRhs trhs{&surface, &field};

  rep.samples.assign(static_cast<std::size_t>(opt.n_samples), SaddleSample{});
  std::vector<std::string> sample_notes(rep.samples.size());

  auto worker = [&](std::size_t i) {
    SplitMix64 rng(sample_seed(opt.seed, i));
    SaddleSample& smp = rep.samples[i];
    smp.index = static_cast<int>(i);
    double al = rng.uniform(-start_halfwidth, start_halfwidth);
    double be = rng.uniform(-start_halfwidth, start_halfwidth);
    double chi = rng.uniform(0.0, kTwoPi);
    smp.start_ab = {al, be};

    // place the phase point so its gyration center sits at the draw
    Vec2 gc{sq.x + al * u.x + be * w.x, sq.y + al * u.y + be * w.y};
    Vec2 q0 = gc, v0{s, 0.0};
    for (int it = 0; it < 4; ++it) {
      auto g = surface.metric_first(ChartPoint(chart, q0));
      double se = std::sqrt(g.E), rr = g.density();
      Vec2 e1{1.0 / se, 0.0};
      Vec2 e2{-g.F / (se * rr), g.E / (se * rr)};
      v0 = {s * (std::cos(chi) * e1.x + std::sin(chi) * e2.x),
            s * (std::cos(chi) * e1.y + std::sin(chi) * e2.y)};
      double b = field.value(surface, ChartPoint(chart, q0));
      Vec2 gp = g.perp(v0);
      q0 = {gc.x - gp.x / b, gc.y - gp.y / b};
    }

    SaddleLegResult leg;
    bool chart_exit = false;
    if (fused) {
      std::array<double, 4> y0{q0.x, q0.y, v0.x, v0.y};
      StepHooks hooks;
      auto ab_of = [&](const std::array<double, 4>& y) {
        Vec2 gp;
        double b;
        if (rev) {
          double a, da;
          surface.radial_fast(y[0], a, da);
          gp = {-a * y[3], y[2] / a};
          b = bfn(y[0]);
        } else {
          gp = {-y[3], y[2]};
          b = field.value(surface, ChartPoint(ChartId::primary, {y[0], y[1]}));
        }
        Vec2 c{y[0] + gp.x / b, y[1] + gp.y / b};
        return box_coords({min_image(c.x - sq.x, Px), min_image(c.y - sq.y, Py)});
      };
      if (rev) {
        const SurfaceModel* sp = &surface;
        hooks.theta = [sp](const std::array<double, 4>& y) {
          double a2, da2;
          sp->radial_fast(y[0], a2, da2);
          return std::atan2(a2 * y[3], y[2]);
        };
        hooks.project = [sp, s](std::array<double, 4>& y) {
          double a2, da2;
          sp->radial_fast(y[0], a2, da2);
          double c = s / std::sqrt(y[2] * y[2] + a2 * a2 * y[3] * y[3]);
          y[2] *= c;
          y[3] *= c;
        };
        leg = run_saddle_leg(rrhs, oo, y0, dir, opt.horizon_returns, delta, eps, hooks, ab_of);
      } else {
        hooks.theta = [](const std::array<double, 4>& y) { return std::atan2(y[3], y[2]); };
        hooks.project = [s](std::array<double, 4>& y) {
          double c = s / std::sqrt(y[2] * y[2] + y[3] * y[3]);
          y[2] *= c;
          y[3] *= c;
        };
        leg = run_saddle_leg(trhs, oo, y0, dir, opt.horizon_returns, delta, eps, hooks, ab_of);
      }
    } else {
      PhaseState st0;
      st0.chart = chart;
      st0.q = surface.wrap(chart, q0);
      st0.v = v0;
      auto ab_of = [&](const PhaseState& st) {
        auto g = surface.metric_first(st.point());
        double b = field.value(surface, st.point());
        Vec2 gp = g.perp(st.v);
        Vec2 c{st.q.x + gp.x / b, st.q.y + gp.y / b};
        return box_coords({min_image(c.x - sq.x, Px), min_image(c.y - sq.y, Py)});
      };
      leg = run_saddle_leg_generic(surface, field, s, oo, st0, dir, opt.horizon_returns, delta,
                                   eps, ab_of, chart_exit);
    }
    smp.exit_kind = leg.kind;
    smp.exit_ab = leg.exit_ab;
    smp.returns = returns_of(leg.lift);
    if (leg.underflow) sample_notes[i] = "step size underflow";
    if (chart_exit) sample_notes[i] = "orbit left the saddle chart";
  };

  parallel_for_indexed(resolve_jobs(opt.jobs), rep.samples.size(), worker);

  for (std::size_t i = 0; i < rep.samples.size(); ++i) {
    switch (rep.samples[i].exit_kind) {
      case 1: ++rep.exits_plus; break;
      case 2: ++rep.exits_minus; break;
      case 3: ++rep.violations; break;
      default: ++rep.non_exits; break;
    }
    if (!sample_notes[i].empty())
      rep.notes.push_back("sample " + std::to_string(i) + ": " + sample_notes[i]);
  }
  rep.notes.push_back(std::string("integrator: ") +
                      (fused ? (rev ? "specialized revolution stepper"
                                    : "specialized flat-torus stepper")
                             : "generic chart stepper") +
                      ", rtol " + fmt_num(opt.rtol));
  return rep;
}

void write_saddle_json(std::ostream& os, const SaddleReport& rep) {
  os << "{\n";
  os << "  \"speed\": " << fmt_num(rep.speed) << ",\n";
  os << "  \"time_reversed\": " << (rep.time_reversed ? "true" : "false") << ",\n";
  os << "  \"saddle_chart\": " << static_cast<int>(rep.saddle.chart) << ",\n";
  os << "  \"saddle_q\": [" << fmt_num(rep.saddle.q.x) << ", " << fmt_num(rep.saddle.q.y)
     << "],\n";
  os << "  \"level\": " << fmt_num(rep.level) << ",\n";
  os << "  \"delta\": " << fmt_num(rep.delta) << ",\n";
  os << "  \"eps\": " << fmt_num(rep.eps) << ",\n";
  os << "  \"start_halfwidth\": " << fmt_num(rep.start_halfwidth) << ",\n";
  os << "  \"axis_unstable\": [" << fmt_num(rep.axis_unstable.x) << ", "
     << fmt_num(rep.axis_unstable.y) << "],\n";
  os << "  \"axis_stable\": [" << fmt_num(rep.axis_stable.x) << ", "
     << fmt_num(rep.axis_stable.y) << "],\n";
  os << "  \"drift_orientation\": " << kDriftOrientation << ",\n";
  os << "  \"exits_plus\": " << rep.exits_plus << ",\n";
  os << "  \"exits_minus\": " << rep.exits_minus << ",\n";
  os << "  \"violations\": " << rep.violations << ",\n";
  os << "  \"non_exits\": " << rep.non_exits << ",\n";
  os << "  \"seed\": " << rep.seed << ",\n";
  os << "  \"samples\": [";
  for (std::size_t i = 0; i < rep.samples.size(); ++i) {
    const SaddleSample& s = rep.samples[i];
    os << (i ? ",\n    {" : "\n    {") << "\"index\": " << s.index << ", \"start_ab\": ["
       << fmt_num(s.start_ab.x) << ", " << fmt_num(s.start_ab.y) << "]"
       << ", \"exit_kind\": " << s.exit_kind << ", \"exit_ab\": [" << fmt_num(s.exit_ab.x)
       << ", " << fmt_num(s.exit_ab.y) << "]"
       << ", \"returns\": " << s.returns << "}";
  }
  os << "\n  ],\n  \"notes\": [";
  for (std::size_t i = 0; i < rep.notes.size(); ++i)
    os << (i ? ", " : "") << '"' << json_escape(rep.notes[i]) << '"';
  os << "]\n}\n";
}

}  // namespace gyrolab::section
