#pragma once

// Fixed-size vectors and matrices over any Scalar. Dimensions are 2 or 3,
// so everything is written out directly.

#include <array>
#include <cmath>

#include "geotomo/dual.hpp"

namespace geotomo {

// Thin wrappers over std::array so that the dimension is an `int` template
// parameter and can be deduced alongside MetricChart<Dim>.
template <class T, int D>
struct Vec {
  std::array<T, D> c{};

  constexpr T& operator[](int i) { return c[i]; }
  constexpr const T& operator[](int i) const { return c[i]; }
  constexpr T* data() { return c.data(); }
  constexpr const T* data() const { return c.data(); }
  constexpr auto begin() { return c.begin(); }
  constexpr auto end() { return c.end(); }
  constexpr auto begin() const { return c.begin(); }
  constexpr auto end() const { return c.end(); }
  static constexpr int size() { return D; }
  friend constexpr bool operator==(const Vec&, const Vec&) = default;
};

template <class T, int D>
struct Mat {
  std::array<Vec<T, D>, D> rows{};

  constexpr Vec<T, D>& operator[](int i) { return rows[i]; }
  constexpr const Vec<T, D>& operator[](int i) const { return rows[i]; }
  constexpr auto begin() { return rows.begin(); }
  constexpr auto end() { return rows.end(); }
  constexpr auto begin() const { return rows.begin(); }
  constexpr auto end() const { return rows.end(); }
  friend constexpr bool operator==(const Mat&, const Mat&) = default;
};

template <class T, int D>
constexpr Mat<T, D> identity() {
  Mat<T, D> m{};
  for (int i = 0; i < D; ++i) m[i][i] = T(1.0);
  return m;
}

template <class T, int D>
T dot(const Vec<T, D>& a, const Vec<T, D>& b) {
  T s(0.0);
  for (int i = 0; i < D; ++i) s += a[i] * b[i];
  return s;
}

template <class T, int D>
Vec<T, D> mul(const Mat<T, D>& m, const Vec<T, D>& x) {
  Vec<T, D> r{};
  for (int i = 0; i < D; ++i) {
    T s(0.0);
    for (int j = 0; j < D; ++j) s += m[i][j] * x[j];
    r[i] = s;
  }
  return r;
}

template <class T, int D>
Vec<T, D> mul_transposed(const Mat<T, D>& m, const Vec<T, D>& x) {
  Vec<T, D> r{};
  for (int i = 0; i < D; ++i) {
    T s(0.0);
    for (int j = 0; j < D; ++j) s += m[j][i] * x[j];
    r[i] = s;
  }
  return r;
}

template <class T, int D>
Mat<T, D> mul(const Mat<T, D>& a, const Mat<T, D>& b) {
  Mat<T, D> r{};
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j) {
      T s(0.0);
      for (int k = 0; k < D; ++k) s += a[i][k] * b[k][j];
      r[i][j] = s;
    }
  return r;
}

template <class T, int D>
Mat<T, D> transpose(const Mat<T, D>& m) {
  Mat<T, D> r{};
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j) r[i][j] = m[j][i];
  return r;
}

/// g(a, b) = a^T g b.
template <class T, int D>
T inner(const Mat<T, D>& g, const Vec<T, D>& a, const Vec<T, D>& b) {
  return dot(a, mul(g, b));
}

template <class T, int D>
Vec<T, D> operator+(Vec<T, D> a, const Vec<T, D>& b) {
  for (int i = 0; i < D; ++i) a[i] += b[i];
  return a;
}
template <class T, int D>
Vec<T, D> operator-(Vec<T, D> a, const Vec<T, D>& b) {
  for (int i = 0; i < D; ++i) a[i] -= b[i];
  return a;
}
template <class T, int D>
Vec<T, D> operator*(const T& c, Vec<T, D> a)
  requires(!std::is_same_v<T, double>)
{
  for (auto& x : a) x = c * x;
  return a;
}
template <class T, int D>
Vec<T, D> operator*(double c, Vec<T, D> a) {
  for (auto& x : a) x = c * x;
  return a;
}
template <class T, int D>
Vec<T, D> operator-(Vec<T, D> a) {
  for (auto& x : a) x = -x;
  return a;
}

template <int D>
double norm(const Vec<double, D>& a) {
  return std::sqrt(dot(a, a));
}

template <class T, int D>
T determinant(const Mat<T, D>& m) {
  static_assert(D == 2 || D == 3);
  if constexpr (D == 2) {
    return m[0][0] * m[1][1] - m[0][1] * m[1][0];
  } else {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  }
}

template <class T, int D>
Mat<T, D> inverse(const Mat<T, D>& m) {
  static_assert(D == 2 || D == 3);
  const T inv_det = T(1.0) / determinant(m);
  Mat<T, D> r{};
  if constexpr (D == 2) {
    r[0][0] = m[1][1] * inv_det;
    r[0][1] = -m[0][1] * inv_det;
    r[1][0] = -m[1][0] * inv_det;
    r[1][1] = m[0][0] * inv_det;
  } else {
    r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det;
    r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det;
    r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det;
    r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det;
    r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det;
    r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det;
    r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det;
    r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det;
    r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det;
  }
  return r;
}

/// Lower-triangular L with m = L L^T. Returns false if a pivot is not positive.
template <class T, int D>
bool cholesky(const Mat<T, D>& m, Mat<T, D>& lower) {
  using std::sqrt;
  lower = Mat<T, D>{};
  for (int j = 0; j < D; ++j) {
    T s = m[j][j];
    for (int k = 0; k < j; ++k) s -= lower[j][k] * lower[j][k];
    if (!(value_of(s) > 0.0)) return false;
    lower[j][j] = sqrt(s);
    for (int i = j + 1; i < D; ++i) {
      T t = m[i][j];
      for (int k = 0; k < j; ++k) t -= lower[i][k] * lower[j][k];
      lower[i][j] = t / lower[j][j];
    }
  }
  return true;
}

template <class T, int D>
Mat<T, D> inverse_lower(const Mat<T, D>& lower) {
  Mat<T, D> r{};
  for (int i = 0; i < D; ++i) {
    r[i][i] = T(1.0) / lower[i][i];
    for (int j = 0; j < i; ++j) {
      T s(0.0);
      for (int k = j; k < i; ++k) s += lower[i][k] * r[k][j];
      r[i][j] = -s / lower[i][i];
    }
  }
  return r;
}

}  // namespace geotomo
