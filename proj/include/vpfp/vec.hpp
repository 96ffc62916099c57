#pragma once

#include <array>
#include <cmath>

namespace vpfp {

/// Spatial dimensions supported by the particle code.
inline constexpr int kMaxDim = 3;

/// Fixed-capacity spatial vector; only the first `dim` components are meaningful,
/// the rest are kept at zero.
using Vec = std::array<double, kMaxDim>;

inline double dot(const Vec& a, const Vec& b, int dim) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) s += a[k] * b[k];
  return s;
}

inline double norm2(const Vec& a, int dim) { return dot(a, a, dim); }

inline double norm(const Vec& a, int dim) { return std::sqrt(norm2(a, dim)); }

inline Vec scaled(const Vec& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }

inline Vec operator+(const Vec& a, const Vec& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }

inline Vec operator-(const Vec& a, const Vec& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

inline Vec operator-(const Vec& a) { return {-a[0], -a[1], -a[2]}; }

}  // namespace vpfp
