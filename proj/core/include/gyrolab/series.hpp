#pragma once
// Truncated Taylor arithmetic. Series<N> carries Taylor coefficients
// f^(k)(x0)/k! for k = 0..N of a univariate function and propagates them
// through arithmetic and elementary functions; Jet2 does the same for
// value, gradient and Hessian of a bivariate function. Both are used to
// evaluate closed-form expressions with exact derivatives.

#include <array>
#include <cmath>
#include <stdexcept>

namespace gyrolab {

template <int N>
struct Series {
  std::array<double, N + 1> c{};  // c[k] = f^(k)/k!

  static Series constant(double v) {
    Series s;
    s.c[0] = v;
    return s;
  }
  static Series variable(double v) {
    Series s;
    s.c[0] = v;
    if constexpr (N >= 1) s.c[1] = 1.0;
    return s;
  }

  double value() const { return c[0]; }
  // k-th derivative (not the raw Taylor coefficient).
  double deriv(int k) const {
    double f = 1.0;
    for (int j = 2; j <= k; ++j) f *= j;
    return c[k] * f;
  }

  Series operator-() const {
    Series r;
    for (int k = 0; k <= N; ++k) r.c[k] = -c[k];
    return r;
  }
  Series operator+(const Series& o) const {
    Series r;
    for (int k = 0; k <= N; ++k) r.c[k] = c[k] + o.c[k];
    return r;
  }
  Series operator-(const Series& o) const {
    Series r;
    for (int k = 0; k <= N; ++k) r.c[k] = c[k] - o.c[k];
    return r;
  }
  Series operator*(const Series& o) const {
    Series r;
    for (int k = 0; k <= N; ++k) {
      double acc = 0.0;
      for (int j = 0; j <= k; ++j) acc += c[j] * o.c[k - j];
      r.c[k] = acc;
    }
    return r;
  }
  Series operator/(const Series& o) const {
    if (o.c[0] == 0.0) throw std::domain_error("series division by zero value");
    Series q;
    for (int k = 0; k <= N; ++k) {
      double acc = c[k];
      for (int j = 0; j < k; ++j) acc -= q.c[j] * o.c[k - j];
      q.c[k] = acc / o.c[0];
    }
    return q;
  }
  Series operator+(double v) const {
    Series r = *this;
    r.c[0] += v;
    return r;
  }
  Series operator-(double v) const {
    Series r = *this;
    r.c[0] -= v;
    return r;
  }
  Series operator*(double v) const {
    Series r;
    for (int k = 0; k <= N; ++k) r.c[k] = c[k] * v;
    return r;
  }
};

template <int N>
Series<N> operator*(double v, const Series<N>& s) { return s * v; }
template <int N>
Series<N> operator+(double v, const Series<N>& s) { return s + v; }
template <int N>
Series<N> operator-(double v, const Series<N>& s) { return (-s) + v; }
template <int N>
Series<N> operator/(double v, const Series<N>& s) { return Series<N>::constant(v) / s; }

template <int N>
Series<N> sin(const Series<N>& u) {
  Series<N> s, c;
  s.c[0] = std::sin(u.c[0]);
  c.c[0] = std::cos(u.c[0]);
  for (int k = 1; k <= N; ++k) {
    double sa = 0.0, ca = 0.0;
    for (int j = 1; j <= k; ++j) {
      sa += j * u.c[j] * c.c[k - j];
      ca += j * u.c[j] * s.c[k - j];
    }
    s.c[k] = sa / k;
    c.c[k] = -ca / k;
  }
  return s;
}

template <int N>
Series<N> cos(const Series<N>& u) {
  Series<N> s, c;
  s.c[0] = std::sin(u.c[0]);
  c.c[0] = std::cos(u.c[0]);
  for (int k = 1; k <= N; ++k) {
    double sa = 0.0, ca = 0.0;
    for (int j = 1; j <= k; ++j) {
      sa += j * u.c[j] * c.c[k - j];
      ca += j * u.c[j] * s.c[k - j];
    }
    s.c[k] = sa / k;
    c.c[k] = -ca / k;
  }
  return c;
}

template <int N>
Series<N> exp(const Series<N>& u) {
  Series<N> e;
  e.c[0] = std::exp(u.c[0]);
  for (int k = 1; k <= N; ++k) {
    double acc = 0.0;
    for (int j = 1; j <= k; ++j) acc += j * u.c[j] * e.c[k - j];
    e.c[k] = acc / k;
  }
  return e;
}

template <int N>
Series<N> log(const Series<N>& u) {
  if (u.c[0] <= 0.0) throw std::domain_error("series log of non-positive value");
  Series<N> l;
  l.c[0] = std::log(u.c[0]);
  for (int k = 1; k <= N; ++k) {
    double acc = k * u.c[k];
    for (int j = 1; j < k; ++j) acc -= j * l.c[j] * u.c[k - j];
    l.c[k] = acc / (k * u.c[0]);
  }
  return l;
}

// u^alpha for real alpha; integer exponents fall back to repeated products
// so that u may pass through zero.
template <int N>
Series<N> pow(const Series<N>& u, double alpha) {
  double ri = std::round(alpha);
  if (ri == alpha && std::abs(alpha) <= 16.0) {
    int n = static_cast<int>(ri);
    if (n == 0) return Series<N>::constant(1.0);
    Series<N> acc = u;
    for (int i = 1; i < std::abs(n); ++i) acc = acc * u;
    if (n < 0) return Series<N>::constant(1.0) / acc;
    return acc;
  }
  if (u.c[0] <= 0.0) throw std::domain_error("series pow: non-integer power of non-positive value");
  Series<N> p;
  p.c[0] = std::pow(u.c[0], alpha);
  for (int k = 1; k <= N; ++k) {
    double acc = 0.0;
    for (int j = 1; j <= k; ++j) acc += (alpha * j - (k - j)) * u.c[j] * p.c[k - j];
    p.c[k] = acc / (k * u.c[0]);
  }
  return p;
}

template <int N>
Series<N> sqrt(const Series<N>& u) { return pow(u, 0.5); }

// Second order bivariate jet: value, gradient, Hessian.
struct Jet2 {
  double v = 0.0;
  double gx = 0.0, gy = 0.0;
  double hxx = 0.0, hxy = 0.0, hyy = 0.0;

  static Jet2 constant(double c) { return {c, 0, 0, 0, 0, 0}; }
  static Jet2 var_x(double c) { return {c, 1, 0, 0, 0, 0}; }
  static Jet2 var_y(double c) { return {c, 0, 1, 0, 0, 0}; }

  Jet2 operator-() const { return {-v, -gx, -gy, -hxx, -hxy, -hyy}; }
  Jet2 operator+(const Jet2& o) const {
    return {v + o.v, gx + o.gx, gy + o.gy, hxx + o.hxx, hxy + o.hxy, hyy + o.hyy};
  }
  Jet2 operator-(const Jet2& o) const {
    return {v - o.v, gx - o.gx, gy - o.gy, hxx - o.hxx, hxy - o.hxy, hyy - o.hyy};
  }
  Jet2 operator*(const Jet2& o) const {
    Jet2 r;
    r.v = v * o.v;
    r.gx = gx * o.v + v * o.gx;
    r.gy = gy * o.v + v * o.gy;
    r.hxx = hxx * o.v + 2.0 * gx * o.gx + v * o.hxx;
    r.hxy = hxy * o.v + gx * o.gy + gy * o.gx + v * o.hxy;
    r.hyy = hyy * o.v + 2.0 * gy * o.gy + v * o.hyy;
    return r;
  }
  Jet2 operator*(double c) const { return {v * c, gx * c, gy * c, hxx * c, hxy * c, hyy * c}; }
  Jet2 operator+(double c) const { Jet2 r = *this; r.v += c; return r; }
  Jet2 operator-(double c) const { Jet2 r = *this; r.v -= c; return r; }

  // Chain rule for f(u) with f', f'' supplied.
  Jet2 chain(double fv, double fp, double fpp) const {
    Jet2 r;
    r.v = fv;
    r.gx = fp * gx;
    r.gy = fp * gy;
    r.hxx = fpp * gx * gx + fp * hxx;
    r.hxy = fpp * gx * gy + fp * hxy;
    r.hyy = fpp * gy * gy + fp * hyy;
    return r;
  }
};

inline Jet2 operator*(double c, const Jet2& j) { return j * c; }
inline Jet2 operator+(double c, const Jet2& j) { return j + c; }
inline Jet2 operator-(double c, const Jet2& j) { return (-j) + c; }

inline Jet2 inverse(const Jet2& u) {
  if (u.v == 0.0) throw std::domain_error("jet division by zero value");
  double iv = 1.0 / u.v;
  return u.chain(iv, -iv * iv, 2.0 * iv * iv * iv);
}
inline Jet2 operator/(const Jet2& a, const Jet2& b) { return a * inverse(b); }
inline Jet2 operator/(double a, const Jet2& b) { return inverse(b) * a; }
inline Jet2 operator/(const Jet2& a, double b) { return a * (1.0 / b); }

inline Jet2 sin(const Jet2& u) { return u.chain(std::sin(u.v), std::cos(u.v), -std::sin(u.v)); }
inline Jet2 cos(const Jet2& u) { return u.chain(std::cos(u.v), -std::sin(u.v), -std::cos(u.v)); }
inline Jet2 exp(const Jet2& u) {
  double e = std::exp(u.v);
  return u.chain(e, e, e);
}
inline Jet2 log(const Jet2& u) {
  if (u.v <= 0.0) throw std::domain_error("jet log of non-positive value");
  return u.chain(std::log(u.v), 1.0 / u.v, -1.0 / (u.v * u.v));
}
inline Jet2 pow(const Jet2& u, double alpha) {
  double ri = std::round(alpha);
  if (ri == alpha && std::abs(alpha) <= 16.0) {
    int n = static_cast<int>(ri);
    if (n == 0) return Jet2::constant(1.0);
    Jet2 acc = u;
    for (int i = 1; i < std::abs(n); ++i) acc = acc * u;
    if (n < 0) return inverse(acc);
    return acc;
  }
  if (u.v <= 0.0) throw std::domain_error("jet pow: non-integer power of non-positive value");
  double f = std::pow(u.v, alpha);
  return u.chain(f, alpha * f / u.v, alpha * (alpha - 1.0) * f / (u.v * u.v));
}
inline Jet2 sqrt(const Jet2& u) { return pow(u, 0.5); }

// Default orders used across the library.
using Series6 = Series<6>;

}  // namespace gyrolab
