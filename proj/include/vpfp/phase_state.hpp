#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vpfp/vec.hpp"

namespace vpfp {

/// Positions and velocities of N particles in R^d, stored row-major (N x d).
struct PhaseState {
  double t = 0.0;
  std::size_t n = 0;
  int dim = 3;
  std::vector<double> x;
  std::vector<double> v;

  PhaseState() = default;
  PhaseState(std::size_t count, int d, double time = 0.0)
      : t(time), n(count), dim(d), x(count * d, 0.0), v(count * d, 0.0) {}

  std::span<double> pos(std::size_t i) { return {x.data() + i * dim, static_cast<std::size_t>(dim)}; }
  std::span<const double> pos(std::size_t i) const { return {x.data() + i * dim, static_cast<std::size_t>(dim)}; }
  std::span<double> vel(std::size_t i) { return {v.data() + i * dim, static_cast<std::size_t>(dim)}; }
  std::span<const double> vel(std::size_t i) const { return {v.data() + i * dim, static_cast<std::size_t>(dim)}; }

  Vec position(std::size_t i) const {
    Vec p{0.0, 0.0, 0.0};
    for (int k = 0; k < dim; ++k) p[k] = x[i * dim + k];
    return p;
  }
  Vec velocity(std::size_t i) const {
    Vec p{0.0, 0.0, 0.0};
    for (int k = 0; k < dim; ++k) p[k] = v[i * dim + k];
    return p;
  }

  bool operator==(const PhaseState&) const = default;
};

}  // namespace vpfp
