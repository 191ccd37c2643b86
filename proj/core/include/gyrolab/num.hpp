#pragma once
// Small numerical helpers shared across the library: fixed-size chart
// algebra, bracketed root finding, Gauss-Legendre panel quadrature,
// polynomial least squares and deterministic sampling utilities.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gyrolab {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double c) const { return {x * c, y * c}; }
  Vec2 operator-() const { return {-x, -y}; }
  Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
};

inline Vec2 operator*(double c, const Vec2& v) { return v * c; }

// Symmetric 2x2 matrix, used for metric coefficients and Hessians.
struct Sym2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;

  Vec2 apply(const Vec2& v) const { return {xx * v.x + xy * v.y, xy * v.x + yy * v.y}; }
  double quad(const Vec2& v) const { return xx * v.x * v.x + 2.0 * xy * v.x * v.y + yy * v.y * v.y; }
  double det() const { return xx * yy - xy * xy; }
  double trace() const { return xx + yy; }
};

struct Mat2 {
  // Row major: [a b; c d].
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0;

  Vec2 apply(const Vec2& v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }
  double det() const { return a * d - b * c; }
  Mat2 mul(const Mat2& o) const {
    return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
  }
};

// Solves M x = rhs for a well conditioned 2x2 system.
inline Vec2 solve2(const Mat2& m, const Vec2& rhs) {
  double det = m.det();
  return {(rhs.x * m.d - rhs.y * m.b) / det, (m.a * rhs.y - m.c * rhs.x) / det};
}

// Eigen-decomposition of a symmetric 2x2 matrix; returns (eigenvalue, unit
// eigenvector) pairs ordered by descending eigenvalue.
inline std::array<std::pair<double, Vec2>, 2> sym2_eigen(const Sym2& s) {
  double half_tr = 0.5 * (s.xx + s.yy);
  double diff = 0.5 * (s.xx - s.yy);
  double disc = std::sqrt(diff * diff + s.xy * s.xy);
  double l1 = half_tr + disc, l2 = half_tr - disc;
  Vec2 v1;
  if (std::abs(s.xy) > 1e-300) {
    v1 = {l1 - s.yy, s.xy};
  } else {
    v1 = (s.xx >= s.yy) ? Vec2{1.0, 0.0} : Vec2{0.0, 1.0};
  }
  double n1 = v1.norm();
  v1 = {v1.x / n1, v1.y / n1};
  Vec2 v2{-v1.y, v1.x};
  return {{{l1, v1}, {l2, v2}}};
}

// Bracketed scalar root solve (Brent). Requires f(a) and f(b) of opposite
// sign; tolerance is on the argument.
double brent_root(const std::function<double(double)>& f, double a, double b,
                  double xtol, int max_iter = 200);

// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
// Computed once per n and cached.
const std::vector<std::pair<double, double>>& gauss_legendre(int n);

// Integrates f over [a, b] with npanel panels of the n-point rule.
double gl_integrate(const std::function<double(double)>& f, double a, double b,
                    int npanel, int n = 16);

// Composite Gauss-Legendre with a Richardson style error estimate obtained
// by comparing npanel against 2*npanel panels.
struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
};
QuadratureResult gl_integrate_est(const std::function<double(double)>& f, double a,
                                  double b, int npanel, int n = 16);

// Least squares polynomial fit of given degree to (x, y) samples. Returns
// coefficients c (lowest power first) of y = sum c_k x^k together with the
// standard error of each coefficient from the residual variance.
struct PolyFit {
  std::vector<double> coeff;
  std::vector<double> coeff_stderr;
  double rms_residual = 0.0;
};
PolyFit polyfit(const std::vector<double>& x, const std::vector<double>& y, int degree);

// Dense Gaussian elimination with partial pivoting for small systems.
std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b);

// Deterministic pseudo random sequence (SplitMix64). Used for seeding
// ensembles reproducibly regardless of platform or thread count.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

 private:
  std::uint64_t state_;
};

// FNV-1a 64 bit, used for config and payload checksums in run manifests.
std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64(const std::string& s);

// Runs fn(i) for i in [0, n) over the requested number of threads. Results
// must be written to per-index storage by the caller; the partition is
// deterministic so runs do not depend on scheduling.
void parallel_for_indexed(int jobs, std::size_t n, const std::function<void(std::size_t)>& fn);

inline int resolve_jobs(int jobs) {
  if (jobs > 0) return jobs;
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace gyrolab
