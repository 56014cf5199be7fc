#pragma once

// Forward-mode dual numbers with an N-component gradient.
//
// Nesting Dual<Dual<double, N>, M> gives mixed second derivatives; every
// operator in the library that differentiates lifts its scalar type by one
// level, so the outermost layer always belongs to the innermost caller and
// no perturbation confusion can arise.

#include <array>
#include <cmath>
#include <type_traits>

namespace geotomo {

template <class T, int N>
struct Dual;

template <class T>
struct is_dual : std::false_type {};
template <class T, int N>
struct is_dual<Dual<T, N>> : std::true_type {};
template <class T>
inline constexpr bool is_dual_v = is_dual<T>::value;

template <class T>
concept Scalar = std::is_same_v<T, double> || is_dual_v<T>;

/// Nesting level of a scalar type: 0 for double, 1 + inner for Dual.
template <class T>
struct dual_depth : std::integral_constant<int, 0> {};
template <class T, int N>
struct dual_depth<Dual<T, N>> : std::integral_constant<int, 1 + dual_depth<T>::value> {};
template <class T>
inline constexpr int dual_depth_v = dual_depth<T>::value;

// Operators that differentiate their argument lift the scalar type by one
// level. Recursion through derived fields is cut off at this depth so the
// template instantiation set stays finite.
#ifndef GEOTOMO_MAX_DUAL_DEPTH
#define GEOTOMO_MAX_DUAL_DEPTH 4
#endif
inline constexpr int max_dual_depth = GEOTOMO_MAX_DUAL_DEPTH;

template <class T, int N>
struct Dual {
  using value_type = T;
  static constexpr int size = N;

  T v{};
  std::array<T, N> d{};

  constexpr Dual() = default;
  constexpr Dual(double c) : v(c) {}  // NOLINT(google-explicit-constructor)
  constexpr Dual(const T& x)          // NOLINT(google-explicit-constructor)
    requires(!std::is_same_v<T, double>)
      : v(x) {}

  constexpr Dual& operator+=(const Dual& o) {
    v += o.v;
    for (int i = 0; i < N; ++i) d[i] += o.d[i];
    return *this;
  }
  constexpr Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (int i = 0; i < N; ++i) d[i] -= o.d[i];
    return *this;
  }
  constexpr Dual& operator*=(const Dual& o) {
    for (int i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
    v *= o.v;
    return *this;
  }
  constexpr Dual& operator/=(const Dual& o) { return *this = *this / o; }
  constexpr Dual& operator+=(double c) {
    v += c;
    return *this;
  }
  constexpr Dual& operator-=(double c) {
    v -= c;
    return *this;
  }
  constexpr Dual& operator*=(double c) {
    v *= c;
    for (auto& x : d) x *= c;
    return *this;
  }
  constexpr Dual& operator/=(double c) { return *this *= (1.0 / c); }
};

// Seed variable i of an N-dimensional input.
template <int N, class T>
constexpr Dual<T, N> make_variable(const T& value, int i) {
  Dual<T, N> r(value);
  r.d[i] = T(1.0);
  return r;
}

constexpr double value_of(double x) { return x; }
template <class T, int N>
constexpr double value_of(const Dual<T, N>& x) {
  return value_of(x.v);
}

template <class T, int N>
constexpr Dual<T, N> operator-(const Dual<T, N>& a) {
  Dual<T, N> r;
  r.v = -a.v;
  for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
  return r;
}
template <class T, int N>
constexpr Dual<T, N> operator+(Dual<T, N> a, const Dual<T, N>& b) {
  return a += b;
}
template <class T, int N>
constexpr Dual<T, N> operator-(Dual<T, N> a, const Dual<T, N>& b) {
  return a -= b;
}
template <class T, int N>
constexpr Dual<T, N> operator*(Dual<T, N> a, const Dual<T, N>& b) {
  return a *= b;
}
template <class T, int N>
constexpr Dual<T, N> operator/(const Dual<T, N>& a, const Dual<T, N>& b) {
  Dual<T, N> r;
  const T inv = T(1.0) / b.v;
  r.v = a.v * inv;
  for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) * inv;
  return r;
}

template <class T, int N>
constexpr Dual<T, N> operator+(Dual<T, N> a, double c) {
  return a += c;
}
template <class T, int N>
constexpr Dual<T, N> operator+(double c, Dual<T, N> a) {
  return a += c;
}
template <class T, int N>
constexpr Dual<T, N> operator-(Dual<T, N> a, double c) {
  return a -= c;
}
template <class T, int N>
constexpr Dual<T, N> operator-(double c, const Dual<T, N>& a) {
  Dual<T, N> r = -a;
  r.v += c;
  return r;
}
template <class T, int N>
constexpr Dual<T, N> operator*(Dual<T, N> a, double c) {
  return a *= c;
}
template <class T, int N>
constexpr Dual<T, N> operator*(double c, Dual<T, N> a) {
  return a *= c;
}
template <class T, int N>
constexpr Dual<T, N> operator/(Dual<T, N> a, double c) {
  return a /= c;
}
template <class T, int N>
constexpr Dual<T, N> operator/(double c, const Dual<T, N>& a) {
  return Dual<T, N>(c) / a;
}

// Mixed operations with the wrapped (inner) scalar type.
template <class T, int N>
  requires(!std::is_same_v<T, double>)
constexpr Dual<T, N> operator*(const Dual<T, N>& a, const T& c) {
  return a * Dual<T, N>(c);
}
template <class T, int N>
  requires(!std::is_same_v<T, double>)
constexpr Dual<T, N> operator*(const T& c, const Dual<T, N>& a) {
  return a * Dual<T, N>(c);
}
template <class T, int N>
  requires(!std::is_same_v<T, double>)
constexpr Dual<T, N> operator+(const Dual<T, N>& a, const T& c) {
  return a + Dual<T, N>(c);
}
template <class T, int N>
  requires(!std::is_same_v<T, double>)
constexpr Dual<T, N> operator-(const Dual<T, N>& a, const T& c) {
  return a - Dual<T, N>(c);
}

template <class T, int N>
constexpr bool operator<(const Dual<T, N>& a, const Dual<T, N>& b) {
  return value_of(a) < value_of(b);
}
template <class T, int N>
constexpr bool operator<(const Dual<T, N>& a, double b) {
  return value_of(a) < b;
}
template <class T, int N>
constexpr bool operator>(const Dual<T, N>& a, double b) {
  return value_of(a) > b;
}

// Chain rule helper: r = f(a) given f(a.v) and f'(a.v).
template <class T, int N>
constexpr Dual<T, N> chain(const Dual<T, N>& a, const T& fv, const T& dfv) {
  Dual<T, N> r;
  r.v = fv;
  for (int i = 0; i < N; ++i) r.d[i] = dfv * a.d[i];
  return r;
}

template <class T, int N>
Dual<T, N> sqrt(const Dual<T, N>& a) {
  using std::sqrt;
  const T s = sqrt(a.v);
  return chain(a, s, T(0.5) / s);
}
template <class T, int N>
Dual<T, N> exp(const Dual<T, N>& a) {
  using std::exp;
  const T e = exp(a.v);
  return chain(a, e, e);
}
template <class T, int N>
Dual<T, N> log(const Dual<T, N>& a) {
  using std::log;
  return chain(a, T(log(a.v)), T(1.0) / a.v);
}
template <class T, int N>
Dual<T, N> sin(const Dual<T, N>& a) {
  using std::cos;
  using std::sin;
  return chain(a, T(sin(a.v)), T(cos(a.v)));
}
template <class T, int N>
Dual<T, N> cos(const Dual<T, N>& a) {
  using std::cos;
  using std::sin;
  return chain(a, T(cos(a.v)), T(-sin(a.v)));
}
template <class T, int N>
Dual<T, N> abs(const Dual<T, N>& a) {
  return value_of(a) < 0.0 ? -a : a;
}
template <class T, int N>
Dual<T, N> pow(const Dual<T, N>& a, double c) {
  using std::pow;
  return chain(a, T(pow(a.v, c)), T(c * pow(a.v, c - 1.0)));
}

// Integer power by repeated squaring; valid for any sign of the base.
template <Scalar T>
T ipow(const T& base, int n) {
  if (n < 0) return T(1.0) / ipow(base, -n);
  T result(1.0);
  T b = base;
  while (n > 0) {
    if (n & 1) result = result * b;
    n >>= 1;
    if (n > 0) b = b * b;
  }
  return result;
}

}  // namespace geotomo
