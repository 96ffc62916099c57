#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "vpfp/phase_state.hpp"

namespace vpfp {

/// Up to 2d = 6 axes (phase space in three dimensions).
inline constexpr int kMaxAxes = 6;

/// Axis-aligned box split into a regular lattice of cells.
struct GridGeometry {
  int axes = 0;
  std::array<double, kMaxAxes> lower{};
  std::array<double, kMaxAxes> edge{};
  std::array<std::size_t, kMaxAxes> cells{};

  static GridGeometry from_box(std::span<const double> lower, std::span<const double> upper,
                               std::span<const std::size_t> cells);

  std::size_t size() const;
  double cell_volume() const;
  double upper(int axis) const { return lower[axis] + edge[axis] * static_cast<double>(cells[axis]); }
  double center(int axis, std::size_t index) const { return lower[axis] + (static_cast<double>(index) + 0.5) * edge[axis]; }
  /// Row-major stride of an axis (last axis fastest).
  std::size_t stride(int axis) const;
  bool same_as(const GridGeometry& other) const;
  /// Throws ConfigError when geometry is not strictly positive.
  void validate() const;
};

/// Nonnegative cell masses on a lattice. `clipped_mass` records probability mass that
/// fell outside the box when the grid was built from samples.
struct DensityGrid {
  GridGeometry geometry;
  std::vector<double> mass;
  double clipped_mass = 0.0;

  DensityGrid() = default;
  explicit DensityGrid(const GridGeometry& g) : geometry(g), mass(g.size(), 0.0) {}

  double total() const;
  /// Cell index of a point, or -1 when outside.
  std::ptrdiff_t locate(std::span<const double> point) const;
};

/// Normalized histogram of M points with `geometry.axes` coordinates each (row-major).
/// Every point carries mass 1/M; points outside the box go to clipped_mass.
/// Throws ConfigError when fewer than two cells per axis, DomainError when all points fall outside.
DensityGrid histogram(std::span<const double> points, const GridGeometry& geometry);

/// Separable truncated-Gaussian smoothing with standard deviation `bandwidth_cells` (in cells)
/// and stencil radius ceil(3 h). Mass lost at the boundary is restored by renormalization.
DensityGrid kde_smooth(const DensityGrid& grid, double bandwidth_cells);

/// Sums out every axis not listed in `keep` (ascending axis indices).
DensityGrid marginal(const DensityGrid& grid, std::span<const int> keep);

/// Cell masses of a density evaluated at cell centers times the cell volume, then
/// normalized to unit total.
DensityGrid grid_from_density(const GridGeometry& geometry, const std::function<double(std::span<const double>)>& f);

/// Flattened phase-space coordinates (x_1..x_d, v_1..v_d) per particle.
std::vector<double> phase_points(const PhaseState& state);

/// Bounding box of the rows of `points` (M x axes), padded by `pad` on every side.
std::pair<std::vector<double>, std::vector<double>> bounding_box(std::span<const double> points, int axes, double pad);

/// Cubic lattice with `cells` per axis covering [lower, upper] plus `pad_cells` empty
/// cells on every side; the edge is the largest span divided by (cells - 2 pad_cells),
/// optionally rounded up to the ladder e0 * 2^{k/16} so repeated boxes reuse the edge.
GridGeometry cubic_geometry(std::span<const double> lower, std::span<const double> upper, std::size_t cells,
                            std::size_t pad_cells, bool quantize_edge);

}  // namespace vpfp
