// Rotationally symmetric closed forms and their full-flow calibrations.
// Everything here reduces to scalar functions of the radius, which keeps
// the oracles independent of the chart machinery the flow modules use.

#include "gyrolab/special.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "gyrolab/num.hpp"
#include "gyrolab/ode.hpp"
#include "gyrolab/section.hpp"

namespace gyrolab::special {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

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
      default: out += c;
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// SymmetricSystem

SymmetricSystem::SymmetricSystem(const SurfaceModel& s, const FieldSpec& f)
    : surface_(s), field_(f) {}

SymmetricSystem SymmetricSystem::make(const SurfaceModel& surface, const FieldSpec& field) {
  if (!surface.is_revolution())
    throw geom::DomainError("symmetric system: needs a surface of revolution");
  if (field.kind() == FieldSpec::Kind::expression)
    throw geom::DomainError("symmetric system: planar expression fields are not symmetric");
  SymmetricSystem sys(surface, field);
  sys.R_ = surface.R();
  sys.scale_ = std::sqrt(4.0 * M_PI / surface.area());
  return sys;
}

double SymmetricSystem::profile(double r) const {
  double a, da;
  surface_.radial_fast(r, a, da);
  return a;
}

double SymmetricSystem::profile_d1(double r) const {
  double a, da;
  surface_.radial_fast(r, a, da);
  return da;
}

double SymmetricSystem::field_value(double r) const {
  return field_.value(surface_, ChartPoint(r, 0.0));
}

double SymmetricSystem::field_d1(double r) const {
  return field_.eval2(surface_, ChartPoint(r, 0.0)).grad.x;
}

double SymmetricSystem::action(double r) const { return -surface_.moment(r); }

double symmetric_rotation_number(const SymmetricSystem& sys, double r, double s) {
  if (!(r > 0.0) || !(r < sys.R()))
    throw geom::DomainError("symmetric rotation number: radius outside (0, R)");
  double b = sys.field_value(r);
  if (b == 0.0)
    throw geom::DomainError("symmetric rotation number: field vanishes at the radius");
  return -s * s * M_PI * sys.field_d1(r) / (sys.profile(r) * b * b * b);
}

// ---------------------------------------------------------------------------
// Rational speed sequences

SpeedSequence rational_speed_search(const SymmetricSystem& sys, double r, double s_max,
                                    int count, const SpeedSearchOptions& opt) {
  if (!(s_max > 0.0)) throw geom::DomainError("speed search: s_max must be positive");
  SpeedSequence out;
  out.r = r;
  double db = sys.field_d1(r);
  if (db == 0.0)
    throw geom::DomainError("speed search: field derivative vanishes, no advance to invert");
  double b = sys.field_value(r);
  out.kappa = M_PI * std::abs(db) / (sys.profile(r) * std::abs(b * b * b));
  if (count <= 0) return out;

  // reduced fractions below the leading-term ceiling, largest first
  const double f_max = out.kappa * s_max * s_max / kTwoPi;
  std::vector<std::pair<long, long>> fracs;
  for (long q = 1; q <= opt.max_denominator; ++q)
    for (long p = 1; static_cast<double>(p) / q <= f_max; ++p)
      if (std::gcd(p, q) == 1) fracs.emplace_back(p, q);
  std::sort(fracs.begin(), fracs.end(), [](auto& u, auto& v) {
    return static_cast<double>(u.first) * v.second > static_cast<double>(v.first) * u.second;
  });
  if (static_cast<int>(fracs.size()) < count) {
    char msg[128];
    std::snprintf(msg, sizeof msg,
                  "only %zu rationals with denominator <= %d fit below s_max", fracs.size(),
                  opt.max_denominator);
    out.notes.push_back(msg);
  }
  fracs.resize(std::min<std::size_t>(fracs.size(), static_cast<std::size_t>(count)));

  // one section map serves the whole sweep; the guide band just has to
  // clear the cap seams
  const SurfaceModel& surf = sys.surface();
  double edge = surf.switch_to_primary_radius();
  double hw = std::min({opt.band_halfwidth, r - edge, sys.R() - edge - r});
  if (!(hw > 0.0)) throw geom::DomainError("speed search: radius too close to a pole");
  section::ChartRegion reg;
  reg.chart = geom::ChartId::primary;
  reg.center = {r, M_PI};
  reg.halfwidth = {hw, std::numeric_limits<double>::infinity()};

  auto advance_at = [&](double s) {
    section::SectionMap map(surf, sys.field(), s, reg);
    section::SectionReturn sr = map.ret({r, 0.0}, +1);
    return map.angular_delta(0.0, sr.q.y);
  };

  for (auto [p, q] : fracs) {
    SpeedEntry e;
    e.p = p;
    e.q = q;
    e.target = kTwoPi * static_cast<double>(p) / static_cast<double>(q);
    e.s_leading = std::sqrt(e.target / out.kappa);
    e.s = e.s_leading;
    try {
      if (opt.polish) {
        // the symmetric map is a rigid rotation, so a single return is the
        // exact advance; bisect |advance(s)| onto the target
        auto gap = [&](double s) { return std::abs(advance_at(s)) - e.target; };
        double lo = 0.9 * e.s_leading, hi = 1.1 * e.s_leading;
        double glo = gap(lo), ghi = gap(hi);
        for (int grow = 0; glo * ghi > 0.0 && grow < 6; ++grow) {
          lo *= 0.85;
          hi *= 1.15;
          glo = gap(lo);
          ghi = gap(hi);
        }
        if (glo * ghi > 0.0) {
          e.note = "polish bracket not found, leading term kept";
        } else {
          e.s = brent_root(gap, lo, hi, opt.polish_xtol);
        }
      }
      section::SectionMap map(surf, sys.field(), e.s, reg);
      e.rho = section::rotation_number(map, {r, 0.0}, std::max(100, opt.measure_iterates)).value;
      if (opt.check_closure) {
        Vec2 x{r, 0.0};
        double t = 0.0;
        for (long k = 0; k < q; ++k) {
          section::SectionReturn sr = map.ret(x, +1);
          x = sr.q;
          t += sr.dt;
        }
        e.closure_residual =
            surf.distance(ChartPoint(r, 0.0), ChartPoint(geom::ChartId::primary, x));
        (void)t;
      }
    } catch (const geom::DomainError& ex) {
      e.note = std::string("polish failed: ") + ex.what();
    }
    out.entries.push_back(std::move(e));
  }
  return out;
}

void write_speed_json(std::ostream& os, const SpeedSequence& seq) {
  os << "{\n  \"r\": " << fmt_num(seq.r) << ",\n  \"kappa\": " << fmt_num(seq.kappa)
     << ",\n  \"entries\": [";
  for (std::size_t i = 0; i < seq.entries.size(); ++i) {
    const SpeedEntry& e = seq.entries[i];
    os << (i ? ",\n    {" : "\n    {") << "\"p\": " << e.p << ", \"q\": " << e.q
       << ", \"target\": " << fmt_num(e.target) << ", \"s_leading\": " << fmt_num(e.s_leading)
       << ", \"s\": " << fmt_num(e.s) << ", \"rho\": " << fmt_num(e.rho)
       << ", \"closure_residual\": " << fmt_num(e.closure_residual) << ", \"note\": \""
       << json_escape(e.note) << "\"}";
  }
  os << "\n  ],\n  \"notes\": [";
  for (std::size_t i = 0; i < seq.notes.size(); ++i)
    os << (i ? ", " : "") << '"' << json_escape(seq.notes[i]) << '"';
  os << "]\n}\n";
}

// ---------------------------------------------------------------------------
// Boundary-value compatibility of the action ODE

ActionOdeReport revolution_action_ode_test(double R, const std::vector<double>& c1_grid,
                                           double tol) {
  if (!(R > 0.0)) throw geom::DomainError("action ode test: R must be positive");
  ActionOdeReport rep;
  rep.R = R;
  rep.tol = tol;
  rep.rows.reserve(c1_grid.size());

  for (double c1 : c1_grid) {
    ActionOdeRow row;
    row.c1 = c1;

    // conserved quantity (A')^2 + c1 A^3 / 3 + A^2 - c1 A evaluated on the
    // two boundary data sets; the gap is the obstruction
    auto conserved = [c1](double A, double Ap) {
      return Ap * Ap + c1 * A * A * A / 3.0 + A * A - c1 * A;
    };
    row.conserved_mismatch = std::abs(conserved(-1.0, 0.0) - conserved(1.0, 0.0));

    auto rhs = [c1](double, const std::array<double, 2>& y, std::array<double, 2>& dy) {
      dy[0] = y[1];
      dy[1] = 0.5 * (c1 - 2.0 * y[0] - c1 * y[0] * y[0]);
    };
    OdeOptions oo;
    oo.rtol = 1e-12;
    oo.atol = 1e-14;
    Dopri5<2, decltype(rhs)> ode(rhs, oo);
    ode.start(0.0, {-1.0, 0.0}, 1.0);
    bool blew_up = false;
    while (ode.t() < R) {
      if (!ode.advance(R)) {
        row.note = "incompatible (step underflow)";
        blew_up = true;
        break;
      }
      if (std::abs(ode.y()[0]) > 1e3 || std::abs(ode.y()[1]) > 1e3) {
        row.note = "incompatible (blow-up)";
        blew_up = true;
        break;
      }
    }
    if (blew_up) {
      row.ode_residual = std::numeric_limits<double>::infinity();
    } else {
      row.ode_residual = std::abs(ode.y()[0] - 1.0) + std::abs(ode.y()[1]);
    }
    row.residual = std::max(row.conserved_mismatch, row.ode_residual);
    row.compatible = row.residual < tol;
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

void write_action_ode_csv(std::ostream& os, const ActionOdeReport& rep) {
  os << "c1,conserved_mismatch,ode_residual,residual\n";
  char line[200];
  for (const ActionOdeRow& r : rep.rows) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g\n", r.c1, r.conserved_mismatch,
                  r.ode_residual, r.residual);
    os << line;
  }
}

void write_action_ode_json(std::ostream& os, const ActionOdeReport& rep) {
  os << "{\n  \"R\": " << fmt_num(rep.R) << ",\n  \"tol\": " << fmt_num(rep.tol)
     << ",\n  \"rows\": [";
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const ActionOdeRow& r = rep.rows[i];
    os << (i ? ",\n    {" : "\n    {") << "\"c1\": " << fmt_num(r.c1)
       << ", \"conserved_mismatch\": " << fmt_num(r.conserved_mismatch)
       << ", \"ode_residual\": " << fmt_num(r.ode_residual)
       << ", \"residual\": " << fmt_num(r.residual)
       << ", \"compatible\": " << (r.compatible ? "true" : "false") << ", \"note\": \""
       << json_escape(r.note) << "\"}";
  }
  os << "\n  ]\n}\n";
}

// ---------------------------------------------------------------------------
// Circle-action conditions

CurvatureSet curvature_quadrature(const SurfaceModel& surface) {
  CurvatureSet set;
  if (surface.is_revolution()) {
    const int panels = 96, nodes = 12;
    const auto& gl = gauss_legendre(nodes);
    const double R = surface.R();
    set.samples.reserve(static_cast<std::size_t>(panels) * nodes);
    for (int p = 0; p < panels; ++p) {
      double a = R * p / panels, b = R * (p + 1) / panels;
      for (const auto& [x, w] : gl) {
        double r = 0.5 * (a + b) + 0.5 * (b - a) * x;
        double wr = 0.5 * (b - a) * w;
        double prof, dprof;
        surface.radial_fast(r, prof, dprof);
        double K = surface.gauss_curvature(ChartPoint(r, 0.0));
        set.samples.push_back({K, kTwoPi * prof * wr});
      }
    }
  } else {
    // midpoint sums on the periodic square converge spectrally
    const int n = 96;
    const double Lx = surface.Lx(), Ly = surface.Ly();
    const double cell = Lx * Ly / (n * n);
    set.samples.reserve(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        ChartPoint p{geom::ChartId::primary, {(i + 0.5) * Lx / n, (j + 0.5) * Ly / n}};
        set.samples.push_back(
            {surface.gauss_curvature(p), surface.metric_first(p).density() * cell});
      }
  }
  for (const CurvatureSample& s : set.samples) set.area += s.weight;
  return set;
}

ActionConditionReport circle_action_conditions(const CurvatureSet& set, int k_grid,
                                               double tol) {
  if (set.samples.empty() || !(set.area > 0.0))
    throw geom::DomainError("action conditions: empty curvature set");
  ActionConditionReport rep;
  rep.area = set.area;
  rep.k_min = std::numeric_limits<double>::infinity();
  rep.k_max = -rep.k_min;
  for (const CurvatureSample& s : set.samples) {
    rep.k_min = std::min(rep.k_min, s.K);
    rep.k_max = std::max(rep.k_max, s.K);
    rep.gauss_bonnet += s.K * s.weight;
  }
  rep.mean_residual = std::abs(0.5 * (rep.k_min + rep.k_max) - 4.0 * M_PI / set.area);
  rep.mean_pass = rep.mean_residual < tol;

  double span = rep.k_max - rep.k_min;
  if (span <= 1e-10 * std::max({1.0, std::abs(rep.k_min), std::abs(rep.k_max)})) {
    rep.constant_curvature = true;
    rep.note = "constant curvature: conditions trivially consistent, action constant";
    rep.distribution_deviation = 0.0;
    return rep;
  }

  // distribution identity on an interior grid, sublevel areas with ties
  // counted in full
  for (int j = 0; j < k_grid; ++j) {
    double k = rep.k_min + span * (j + 0.5) / k_grid;
    double below = 0.0;
    for (const CurvatureSample& s : set.samples)
      if (s.K <= k) below += s.weight;
    double dev = std::abs(k - (rep.k_min + span / set.area * below));
    rep.distribution_deviation = std::max(rep.distribution_deviation, dev);
  }
  return rep;
}

void write_action_conditions_json(std::ostream& os, const ActionConditionReport& rep) {
  os << "{\n  \"area\": " << fmt_num(rep.area) << ",\n  \"k_min\": " << fmt_num(rep.k_min)
     << ",\n  \"k_max\": " << fmt_num(rep.k_max)
     << ",\n  \"mean_residual\": " << fmt_num(rep.mean_residual)
     << ",\n  \"mean_pass\": " << (rep.mean_pass ? "true" : "false")
     << ",\n  \"distribution_deviation\": " << fmt_num(rep.distribution_deviation)
     << ",\n  \"gauss_bonnet\": " << fmt_num(rep.gauss_bonnet)
     << ",\n  \"constant_curvature\": " << (rep.constant_curvature ? "true" : "false")
     << ",\n  \"note\": \"" << json_escape(rep.note) << "\"\n}\n";
}

// ---------------------------------------------------------------------------
// Resonant construction

FieldSpec build_resonant_field(const SurfaceModel& surface, double alpha, double beta) {
  if (!surface.is_revolution())
    throw geom::DomainError("resonant field: needs a surface of revolution");
  if (alpha == 0.0)
    throw geom::DomainError(
        "resonant field: alpha = 0 gives a constant field (degenerate action)");
  if (!(beta > std::abs(alpha)))
    throw geom::DomainError("resonant field: beta must exceed |alpha| for positivity");
  return FieldSpec::resonant(alpha, beta);
}

}  // namespace gyrolab::special
