#include "gyrolab/num.hpp"

#include <algorithm>
#include <map>
#include <mutex>

namespace gyrolab {

double brent_root(const std::function<double(double)>& f, double a, double b,
                  double xtol, int max_iter) {
  double fa = f(a), fb = f(b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if (fa * fb > 0.0) throw std::invalid_argument("brent_root: endpoints do not bracket a root");
  double c = a, fc = fa, d = b - a, e = d;
  for (int it = 0; it < max_iter; ++it) {
    if (std::abs(fc) < std::abs(fb)) {
      a = b; b = c; c = a;
      fa = fb; fb = fc; fc = fa;
    }
    double tol1 = 2.0 * 1e-16 * std::abs(b) + 0.5 * xtol;
    double xm = 0.5 * (c - b);
    if (std::abs(xm) <= tol1 || fb == 0.0) return b;
    if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
      double s = fb / fa, p, q;
      if (a == c) {
        p = 2.0 * xm * s;
        q = 1.0 - s;
      } else {
        double q0 = fa / fc, r = fb / fc;
        p = s * (2.0 * xm * q0 * (q0 - r) - (b - a) * (r - 1.0));
        q = (q0 - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q;
      p = std::abs(p);
      if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q), std::abs(e * q))) {
        e = d; d = p / q;
      } else {
        d = xm; e = d;
      }
    } else {
      d = xm; e = d;
    }
    a = b; fa = fb;
    b += (std::abs(d) > tol1) ? d : (xm > 0 ? tol1 : -tol1);
    fb = f(b);
    if ((fb > 0.0) == (fc > 0.0)) { c = a; fc = fa; d = b - a; e = d; }
  }
  return b;
}

const std::vector<std::pair<double, double>>& gauss_legendre(int n) {
  static std::map<int, std::vector<std::pair<double, double>>> cache;
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  // Newton iteration on Legendre polynomials, symmetric about zero.
  std::vector<std::pair<double, double>> nw(n);
  int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double w = 2.0 / ((1.0 - x * x) * pp * pp);
    nw[i] = {-x, w};
    nw[n - 1 - i] = {x, w};
  }
  auto [ins, ok] = cache.emplace(n, std::move(nw));
  (void)ok;
  return ins->second;
}

double gl_integrate(const std::function<double(double)>& f, double a, double b,
                    int npanel, int n) {
  const auto& nw = gauss_legendre(n);
  double total = 0.0;
  double h = (b - a) / npanel;
  for (int p = 0; p < npanel; ++p) {
    double lo = a + p * h;
    double mid = lo + 0.5 * h, half = 0.5 * h;
    double acc = 0.0;
    for (const auto& [xi, wi] : nw) acc += wi * f(mid + half * xi);
    total += acc * half;
  }
  return total;
}

QuadratureResult gl_integrate_est(const std::function<double(double)>& f, double a,
                                  double b, int npanel, int n) {
  double coarse = gl_integrate(f, a, b, npanel, n);
  double fine = gl_integrate(f, a, b, 2 * npanel, n);
  return {fine, std::abs(fine - coarse)};
}

std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = a.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (std::abs(a[piv][col]) < 1e-300) throw std::runtime_error("solve_dense: singular system");
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      double fac = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= fac * a[col][c];
      b[r] -= fac * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t c = i + 1; c < n; ++c) acc -= a[i][c] * x[c];
    x[i] = acc / a[i][i];
  }
  return x;
}

PolyFit polyfit(const std::vector<double>& x, const std::vector<double>& y, int degree) {
  const std::size_t npt = x.size();
  const int nc = degree + 1;
  if (npt < static_cast<std::size_t>(nc))
    throw std::invalid_argument("polyfit: fewer samples than coefficients");

  // Center and scale the abscissa for conditioning, then map back.
  double xm = 0.0, xs = 0.0;
  for (double v : x) xm += v;
  xm /= static_cast<double>(npt);
  for (double v : x) xs = std::max(xs, std::abs(v - xm));
  if (xs == 0.0) xs = 1.0;

  std::vector<std::vector<double>> ata(nc, std::vector<double>(nc, 0.0));
  std::vector<double> atb(nc, 0.0);
  std::vector<double> pw(nc);
  for (std::size_t i = 0; i < npt; ++i) {
    double u = (x[i] - xm) / xs;
    pw[0] = 1.0;
    for (int k = 1; k < nc; ++k) pw[k] = pw[k - 1] * u;
    for (int r = 0; r < nc; ++r) {
      atb[r] += pw[r] * y[i];
      for (int c = 0; c < nc; ++c) ata[r][c] += pw[r] * pw[c];
    }
  }
  auto ata_copy = ata;
  std::vector<double> cs = solve_dense(ata, atb);

  // Residual variance and per coefficient standard errors (in scaled basis).
  double ss = 0.0;
  for (std::size_t i = 0; i < npt; ++i) {
    double u = (x[i] - xm) / xs, fit = 0.0, p = 1.0;
    for (int k = 0; k < nc; ++k) { fit += cs[k] * p; p *= u; }
    double r = y[i] - fit;
    ss += r * r;
  }
  double dof = static_cast<double>(npt) - nc;
  double var = dof > 0 ? ss / dof : 0.0;

  std::vector<double> se(nc, 0.0);
  for (int k = 0; k < nc; ++k) {
    // k-th diagonal entry of (A^T A)^{-1} via unit solves.
    std::vector<double> e(nc, 0.0);
    e[k] = 1.0;
    std::vector<double> col = solve_dense(ata_copy, e);
    se[k] = std::sqrt(std::max(0.0, var * col[k]));
  }

  // Map coefficients of the scaled variable u = (x-xm)/xs back to powers of x.
  // c_k u^k = c_k / xs^k * (x - xm)^k; expand the binomials.
  std::vector<double> out(nc, 0.0), out_se(nc, 0.0);
  std::vector<std::vector<double>> binom(nc, std::vector<double>(nc, 0.0));
  for (int k = 0; k < nc; ++k) {
    binom[k][0] = 1.0;
    for (int j = 1; j <= k; ++j)
      binom[k][j] = binom[k - 1][j - 1] + (j <= k - 1 ? binom[k - 1][j] : 0.0);
  }
  for (int k = 0; k < nc; ++k) {
    double a_k = cs[k] / std::pow(xs, k);
    double s_k = se[k] / std::pow(xs, k);
    for (int j = 0; j <= k; ++j) {
      double w = binom[k][j] * std::pow(-xm, k - j);
      out[j] += a_k * w;
      out_se[j] += std::abs(s_k * w);  // conservative error propagation
    }
  }

  PolyFit fit;
  fit.coeff = std::move(out);
  fit.coeff_stderr = std::move(out_se);
  fit.rms_residual = npt > 0 ? std::sqrt(ss / static_cast<double>(npt)) : 0.0;
  return fit;
}

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

void parallel_for_indexed(int jobs, std::size_t n, const std::function<void(std::size_t)>& fn) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::size_t nthreads = std::min<std::size_t>(jobs, n);
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  std::exception_ptr first_error;
  std::mutex err_mtx;
  for (std::size_t t = 0; t < nthreads; ++t) {
    pool.emplace_back([&, t]() {
      try {
        for (std::size_t i = t; i < n; i += nthreads) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mtx);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace gyrolab
