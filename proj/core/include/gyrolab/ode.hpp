#pragma once
// Adaptive Dormand-Prince 5(4) stepper with FSAL, quartic dense output and
// mixed absolute/relative error control. Templated on the right-hand side
// so the compiler can inline metric evaluation into the stage loop; all
// integration drivers in the library sit on top of this class.
//
// The stepper is directional: the sign of the step is fixed by start() and
// advance() never steps past the cap time it is given. Non-finite stage
// values are treated as an oversized local error, so trajectories that
// leave a chart's numeric domain shrink the step instead of aborting.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace gyrolab {

struct OdeOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double h_init = 0.0;            // 0: pick from the first derivative
  double h_max = std::numeric_limits<double>::infinity();
  double h_min = 1e-13;           // underflow guard, scaled by |t|+1
};

struct OdeStats {
  std::int64_t accepted = 0;
  std::int64_t rejected = 0;
  std::int64_t rhs_evals = 0;
  double max_error = 0.0;         // largest accepted scaled error
};

template <int N, class RHS>
class Dopri5 {
 public:
  using Y = std::array<double, N>;

  Dopri5(RHS rhs, OdeOptions opt) : rhs_(rhs), opt_(opt) {}

  void start(double t0, const Y& y0, double direction) {
    if (!(opt_.rtol >= 1e-14))
      throw std::invalid_argument("relative tolerance below attainable double precision");
    if (!(opt_.atol >= 0.0))
      throw std::invalid_argument("absolute tolerance must be nonnegative");
    t_ = tprev_ = t0;
    y_ = yprev_ = y0;
    dir_ = direction >= 0.0 ? 1.0 : -1.0;
    rhs_(t_, y_, k_[0]);
    ++stats_.rhs_evals;
    h_ = opt_.h_init > 0.0 ? opt_.h_init : initial_step();
    have_step_ = false;
  }

  double t() const { return t_; }
  double t_prev() const { return tprev_; }
  const Y& y() const { return y_; }
  const Y& y_prev() const { return yprev_; }
  double h_last() const { return hlast_; }
  OdeStats& stats() { return stats_; }
  const OdeStats& stats() const { return stats_; }
  double suggested_h() const { return h_; }
  void set_suggested_h(double h) { h_ = h; }

  // Replaces the current state (projection, chart transfer). The cached
  // derivative is recomputed only on request; a projection that moves the
  // state by O(tolerance) can keep the stale FSAL derivative.
  void set_state(const Y& y, bool recompute_derivative) {
    y_ = y;
    if (recompute_derivative) {
      rhs_(t_, y_, k_[0]);
      ++stats_.rhs_evals;
    }
  }

  // One accepted step, not crossing t_cap and not exceeding h_cap in
  // magnitude. Returns false on step-size underflow.
  bool advance(double t_cap, double h_cap = std::numeric_limits<double>::infinity()) {
    double h = std::min({h_, opt_.h_max, h_cap});
    for (;;) {
      double remaining = dir_ * (t_cap - t_);
      if (remaining <= 0.0) return true;  // nothing to do
      bool clipped = false;
      if (h >= remaining) {
        h = remaining;
        clipped = true;
      }
      if (h < opt_.h_min * (std::abs(t_) + 1.0)) return false;

      double err = attempt(h);
      if (err <= 1.0) {
        accept(h);
        stats_.max_error = std::max(stats_.max_error, err);
        double fac = err > 1e-12 ? 0.9 * std::pow(err, -0.2) : 5.0;
        fac = std::min(fac, rejected_last_ ? 1.0 : 5.0);
        double hnew = h * std::max(0.2, fac);
        if (!clipped || hnew > h_) h_ = std::min(hnew, opt_.h_max);
        rejected_last_ = false;
        return true;
      }
      ++stats_.rejected;
      rejected_last_ = true;
      double fac = std::isfinite(err) ? std::max(0.2, 0.9 * std::pow(err, -0.2)) : 0.2;
      h *= std::min(fac, 0.9);
    }
  }

  // Dense evaluation inside the last accepted step [t_prev, t].
  Y dense(double te) const {
    double theta = (te - tprev_) / (t_ - tprev_);
    double th1 = 1.0 - theta;
    Y out;
    for (int i = 0; i < N; ++i)
      out[i] = rc1_[i] + theta * (rc2_[i] + th1 * (rc3_[i] + theta * (rc4_[i] + th1 * rc5_[i])));
    return out;
  }

  // Pulls the state back to an interior time of the last step.
  void truncate_to(double te) {
    y_ = dense(te);
    t_ = te;
    rhs_(t_, y_, k_[0]);
    ++stats_.rhs_evals;
    have_step_ = false;
  }

 private:
  double initial_step() const {
    double dn = 0.0, yn = 0.0;
    for (int i = 0; i < N; ++i) {
      dn = std::max(dn, std::abs(k_[0][i]));
      yn = std::max(yn, std::abs(y_[i]));
    }
    double scale = std::max(yn, 1.0);
    double h = dn > 1e-12 ? 0.01 * scale / dn : 1e-4;
    return std::min(h, opt_.h_max);
  }

  // Stage evaluation; returns the scaled error norm (inf on non-finite).
  double attempt(double h) {
    const double hd = dir_ * h;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                            a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
    Y tmp;
    for (int i = 0; i < N; ++i) tmp[i] = y_[i] + hd * a21 * k_[0][i];
    rhs_(t_ + dir_ * h * 0.2, tmp, k_[1]);
    for (int i = 0; i < N; ++i) tmp[i] = y_[i] + hd * (a31 * k_[0][i] + a32 * k_[1][i]);
    rhs_(t_ + dir_ * h * 0.3, tmp, k_[2]);
    for (int i = 0; i < N; ++i)
      tmp[i] = y_[i] + hd * (a41 * k_[0][i] + a42 * k_[1][i] + a43 * k_[2][i]);
    rhs_(t_ + dir_ * h * 0.8, tmp, k_[3]);
    for (int i = 0; i < N; ++i)
      tmp[i] = y_[i] + hd * (a51 * k_[0][i] + a52 * k_[1][i] + a53 * k_[2][i] + a54 * k_[3][i]);
    rhs_(t_ + dir_ * h * (8.0 / 9), tmp, k_[4]);
    for (int i = 0; i < N; ++i)
      tmp[i] = y_[i] + hd * (a61 * k_[0][i] + a62 * k_[1][i] + a63 * k_[2][i] +
                             a64 * k_[3][i] + a65 * k_[4][i]);
    rhs_(t_ + dir_ * h, tmp, k_[5]);
    for (int i = 0; i < N; ++i)
      ynew_[i] = y_[i] + hd * (b1 * k_[0][i] + b3 * k_[2][i] + b4 * k_[3][i] +
                               b5 * k_[4][i] + b6 * k_[5][i]);
    rhs_(t_ + dir_ * h, ynew_, k_[6]);
    stats_.rhs_evals += 6;

    double err2 = 0.0;
    for (int i = 0; i < N; ++i) {
      double e = hd * (e1 * k_[0][i] + e3 * k_[2][i] + e4 * k_[3][i] + e5 * k_[4][i] +
                       e6 * k_[5][i] + e7 * k_[6][i]);
      double sc = opt_.atol + opt_.rtol * std::max(std::abs(y_[i]), std::abs(ynew_[i]));
      err2 += (e / sc) * (e / sc);
      if (!std::isfinite(ynew_[i])) return std::numeric_limits<double>::infinity();
    }
    double err = std::sqrt(err2 / N);
    return std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
  }

  void accept(double h) {
    static constexpr double d1 = -12715105075.0 / 11282082432.0,
                            d3 = 87487479700.0 / 32700410799.0,
                            d4 = -10690763975.0 / 1880347072.0,
                            d5 = 701980252875.0 / 199316789632.0,
                            d6 = -1453857185.0 / 822651844.0,
                            d7 = 69997945.0 / 29380423.0;
    const double hd = dir_ * h;
    for (int i = 0; i < N; ++i) {
      double ydiff = ynew_[i] - y_[i];
      double bspl = hd * k_[0][i] - ydiff;
      rc1_[i] = y_[i];
      rc2_[i] = ydiff;
      rc3_[i] = bspl;
      rc4_[i] = ydiff - hd * k_[6][i] - bspl;
      rc5_[i] = hd * (d1 * k_[0][i] + d3 * k_[2][i] + d4 * k_[3][i] + d5 * k_[4][i] +
                      d6 * k_[5][i] + d7 * k_[6][i]);
    }
    tprev_ = t_;
    yprev_ = y_;
    t_ += hd;
    y_ = ynew_;
    k_[0] = k_[6];  // FSAL
    hlast_ = h;
    ++stats_.accepted;
    have_step_ = true;
  }

  RHS rhs_;
  OdeOptions opt_;
  Y y_{}, yprev_{}, ynew_{};
  Y k_[7] = {};
  Y rc1_{}, rc2_{}, rc3_{}, rc4_{}, rc5_{};
  double t_ = 0.0, tprev_ = 0.0;
  double h_ = 1e-3, hlast_ = 0.0;
  double dir_ = 1.0;
  bool rejected_last_ = false;
  bool have_step_ = false;
  OdeStats stats_;
};

}  // namespace gyrolab
