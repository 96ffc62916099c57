#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "vpfp/density.hpp"
#include "vpfp/dynamics.hpp"

namespace vpfp {

/// Phase-space density f(x, v) on a uniform n_x x n_v grid of cell centers; row-major with
/// v fastest. Values are densities, so the mass of a cell is f dx dv.
struct KineticGrid1D {
  double x_lo = -6.0, x_hi = 6.0;
  double v_lo = -6.0, v_hi = 6.0;
  std::size_t nx = 256, nv = 256;
  std::vector<double> f;
  double t = 0.0;

  double outflow = 0.0;  ///< mass that left the box, cumulative
  double clipped = 0.0;  ///< mass added by clipping negative values, cumulative

  double dx() const { return (x_hi - x_lo) / static_cast<double>(nx); }
  double dv() const { return (v_hi - v_lo) / static_cast<double>(nv); }
  double x(std::size_t i) const { return x_lo + (static_cast<double>(i) + 0.5) * dx(); }
  double v(std::size_t j) const { return v_lo + (static_cast<double>(j) + 0.5) * dv(); }
  double& at(std::size_t i, std::size_t j) { return f[i * nv + j]; }
  double at(std::size_t i, std::size_t j) const { return f[i * nv + j]; }

  /// Samples a density at cell centers and normalizes the result to unit mass.
  static KineticGrid1D from_density(double x_lo, double x_hi, double v_lo, double v_hi, std::size_t nx,
                                    std::size_t nv, const std::function<double(double, double)>& density);

  /// Cell masses as a two-axis DensityGrid (axis 0 = x, axis 1 = v).
  DensityGrid masses() const;
  void validate() const;
};

struct Vp1dOptions {
  double sigma = 0.0;
  int sign = +1;         ///< +1 repulsive
  double c1 = 0.5;       ///< kernel normalization, k(x) = sign c1 sign(x)
  bool self_field = true;  ///< false gives free transport (E = 0)
};

/// E(x_i) = sign c1 (F(x_i) - (M - F(x_i))) from cell masses, with F the midpoint CDF and M the total.
std::vector<double> field_solve_1d(std::span<const double> rho_mass, int sign, double c1);

/// Largest dt satisfying max|v| dt <= dx and max|E| dt <= dv for the current state.
double cfl_limit(const KineticGrid1D& grid, const Vp1dOptions& options);

/// Strang step: half x-advection, v-advection by E dt, exact discrete heat kernel in v with
/// variance 2 sigma dt, half x-advection. Advection is semi-Lagrangian with 4-point cubic
/// Lagrange interpolation and zero inflow. Throws ConfigError when dt breaks the CFL limit.
KineticGrid1D splitting_step(const KineticGrid1D& grid, double dt, const Vp1dOptions& options);

/// Advances to t_end with steps of at most dt (last step shortened).
KineticGrid1D solve_vp1d(KineticGrid1D grid, double dt, double t_end, const Vp1dOptions& options);

struct Moments1D {
  double mass = 0.0;
  double momentum = 0.0;
  double kinetic_energy = 0.0;  ///< (1/2) int v^2 f
  double v_variance = 0.0;
  std::vector<double> rho;  ///< spatial density on the x grid
};

Moments1D moments(const KineticGrid1D& grid);

/// Kinetic plus (1/2) int int W(x - y) rho rho with W(x) = -sign c1 |x|.
double total_energy(const KineticGrid1D& grid, const Vp1dOptions& options);

/// Field of a running PDE solve, for characteristics_vp in d = 1: the grid is advanced in
/// steps of dt whenever a later time is requested and E is interpolated linearly in x.
FieldFunction vp1d_field(KineticGrid1D initial, double dt, const Vp1dOptions& options);

}  // namespace vpfp
