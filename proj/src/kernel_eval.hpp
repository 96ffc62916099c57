#pragma once

// Hot-path kernel evaluation shared by the public kernel functions and the force loops.
// Both routes go through coulomb_value so that the regularized families agree with the
// exact kernel bit-for-bit outside the cutoff.

#include <cmath>

#include "vpfp/kernels.hpp"
#include "vpfp/vec.hpp"

namespace vpfp::detail {

inline Vec coulomb_value(const Vec& x, double r2, double strength, int dim) {
  const double r = std::sqrt(r2);
  const double rd = dim == 1 ? r : (dim == 2 ? r2 : r2 * r);
  const double f = strength / rd;
  return {x[0] * f, x[1] * f, x[2] * f};
}

inline Vec lp_value(const Vec& x, int dim, double strength, double cutoff, double inner_scale) {
  const double r2 = norm2(x, dim);
  if (r2 > 0.0 && std::sqrt(r2) >= cutoff) return coulomb_value(x, r2, strength, dim);
  const double f = strength * inner_scale;
  return {x[0] * f, x[1] * f, x[2] * f};
}

inline Vec hlp_value(const Vec& x, double strength, double cutoff, const MollifierProfile& profile) {
  const double r2 = norm2(x, 3);
  if (r2 == 0.0) return {0.0, 0.0, 0.0};
  const Vec outer = coulomb_value(x, r2, strength, 3);
  const double s = std::sqrt(r2) / cutoff;
  if (s >= 1.0) return outer;
  return scaled(outer, profile.radial_mass(s));
}

}  // namespace vpfp::detail
