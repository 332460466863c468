#pragma once

// Forward-mode dual numbers carrying a fixed-size block of tangents.

#include <array>
#include <cmath>
#include <cstddef>

namespace rtel {

template <std::size_t N>
struct Dual {
  double value = 0.0;
  std::array<double, N> tangent{};

  Dual() = default;
  Dual(double v) : value(v) {}  // NOLINT: constants promote implicitly
  Dual(double v, const std::array<double, N>& t) : value(v), tangent(t) {}

  /// The k-th independent variable with value v.
  static Dual variable(double v, std::size_t k) {
    Dual d(v);
    d.tangent[k] = 1.0;
    return d;
  }

  Dual& operator+=(const Dual& o) {
    value += o.value;
    for (std::size_t k = 0; k < N; ++k) tangent[k] += o.tangent[k];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    value -= o.value;
    for (std::size_t k = 0; k < N; ++k) tangent[k] -= o.tangent[k];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (std::size_t k = 0; k < N; ++k) tangent[k] = tangent[k] * o.value + value * o.tangent[k];
    value *= o.value;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.value;
    for (std::size_t k = 0; k < N; ++k) tangent[k] = (tangent[k] - value * inv * o.tangent[k]) * inv;
    value *= inv;
    return *this;
  }
  Dual& operator*=(double s) {
    value *= s;
    for (auto& t : tangent) t *= s;
    return *this;
  }

  Dual operator-() const {
    Dual r = *this;
    r *= -1.0;
    return r;
  }
};

template <std::size_t N>
Dual<N> operator+(Dual<N> a, const Dual<N>& b) { return a += b; }
template <std::size_t N>
Dual<N> operator-(Dual<N> a, const Dual<N>& b) { return a -= b; }
template <std::size_t N>
Dual<N> operator*(Dual<N> a, const Dual<N>& b) { return a *= b; }
template <std::size_t N>
Dual<N> operator/(Dual<N> a, const Dual<N>& b) { return a /= b; }

template <std::size_t N>
Dual<N> operator+(Dual<N> a, double b) { a.value += b; return a; }
template <std::size_t N>
Dual<N> operator+(double a, Dual<N> b) { b.value += a; return b; }
template <std::size_t N>
Dual<N> operator-(Dual<N> a, double b) { a.value -= b; return a; }
template <std::size_t N>
Dual<N> operator-(double a, const Dual<N>& b) { return -b + a; }
template <std::size_t N>
Dual<N> operator*(Dual<N> a, double b) { return a *= b; }
template <std::size_t N>
Dual<N> operator*(double a, Dual<N> b) { return b *= a; }
template <std::size_t N>
Dual<N> operator/(Dual<N> a, double b) { return a *= 1.0 / b; }
template <std::size_t N>
Dual<N> operator/(double a, const Dual<N>& b) { return Dual<N>(a) / b; }

template <std::size_t N>
Dual<N> chain(const Dual<N>& x, double value, double derivative) {
  Dual<N> r(value);
  for (std::size_t k = 0; k < N; ++k) r.tangent[k] = derivative * x.tangent[k];
  return r;
}

template <std::size_t N>
Dual<N> exp(const Dual<N>& x) {
  const double e = std::exp(x.value);
  return chain(x, e, e);
}
template <std::size_t N>
Dual<N> log(const Dual<N>& x) { return chain(x, std::log(x.value), 1.0 / x.value); }
template <std::size_t N>
Dual<N> sqrt(const Dual<N>& x) {
  const double s = std::sqrt(x.value);
  return chain(x, s, 0.5 / s);
}
template <std::size_t N>
Dual<N> pow(const Dual<N>& x, double p) {
  return chain(x, std::pow(x.value, p), p * std::pow(x.value, p - 1.0));
}
/// Derivative sign(x) with sign(0) = +1.
template <std::size_t N>
Dual<N> abs(const Dual<N>& x) { return chain(x, std::abs(x.value), x.value < 0.0 ? -1.0 : 1.0); }

inline double value_of(double x) { return x; }
template <std::size_t N>
double value_of(const Dual<N>& x) { return x.value; }

}  // namespace rtel
