#include "vpfp/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "vpfp/errors.hpp"

namespace vpfp {

GridGeometry GridGeometry::from_box(std::span<const double> lower, std::span<const double> upper,
                                    std::span<const std::size_t> cells) {
  if (lower.size() != upper.size() || lower.size() != cells.size())
    throw ConfigError("grid box: lower, upper and cells must have the same length");
  if (lower.empty() || lower.size() > static_cast<std::size_t>(kMaxAxes))
    throw ConfigError("grid box: between 1 and 6 axes required");
  GridGeometry g;
  g.axes = static_cast<int>(lower.size());
  for (int a = 0; a < g.axes; ++a) {
    if (cells[a] == 0) throw ConfigError("grid box: zero cells on axis " + std::to_string(a));
    g.lower[a] = lower[a];
    g.cells[a] = cells[a];
    g.edge[a] = (upper[a] - lower[a]) / static_cast<double>(cells[a]);
  }
  g.validate();
  return g;
}

std::size_t GridGeometry::size() const {
  std::size_t n = 1;
  for (int a = 0; a < axes; ++a) n *= cells[a];
  return n;
}

double GridGeometry::cell_volume() const {
  double v = 1.0;
  for (int a = 0; a < axes; ++a) v *= edge[a];
  return v;
}

std::size_t GridGeometry::stride(int axis) const {
  std::size_t s = 1;
  for (int a = axes - 1; a > axis; --a) s *= cells[a];
  return s;
}

bool GridGeometry::same_as(const GridGeometry& other) const {
  if (axes != other.axes) return false;
  for (int a = 0; a < axes; ++a)
    if (lower[a] != other.lower[a] || edge[a] != other.edge[a] || cells[a] != other.cells[a]) return false;
  return true;
}

void GridGeometry::validate() const {
  if (axes < 1 || axes > kMaxAxes) throw ConfigError("grid must have between 1 and 6 axes");
  for (int a = 0; a < axes; ++a) {
    if (cells[a] == 0) throw ConfigError("grid axis " + std::to_string(a) + " has no cells");
    if (!(edge[a] > 0.0) || !std::isfinite(edge[a]) || !std::isfinite(lower[a]))
      throw ConfigError("grid axis " + std::to_string(a) + " has a non-positive or non-finite edge");
  }
}

double DensityGrid::total() const { return std::accumulate(mass.begin(), mass.end(), 0.0); }

std::ptrdiff_t DensityGrid::locate(std::span<const double> point) const {
  std::size_t index = 0;
  for (int a = 0; a < geometry.axes; ++a) {
    const double u = (point[a] - geometry.lower[a]) / geometry.edge[a];
    if (!(u >= 0.0)) return -1;
    const auto c = static_cast<std::size_t>(u);
    if (c >= geometry.cells[a]) return -1;
    index = index * geometry.cells[a] + c;
  }
  return static_cast<std::ptrdiff_t>(index);
}

DensityGrid histogram(std::span<const double> points, const GridGeometry& geometry) {
  geometry.validate();
  const int axes = geometry.axes;
  for (int a = 0; a < axes; ++a)
    if (geometry.cells[a] < 2) throw ConfigError("histogram needs at least 2 cells per axis");
  if (points.size() % axes != 0) throw ConfigError("histogram: point array is not a multiple of the axis count");
  const std::size_t m = points.size() / axes;
  if (m == 0) throw DomainError("histogram of an empty point set");

  DensityGrid grid(geometry);
  const double w = 1.0 / static_cast<double>(m);
  std::size_t outside = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::ptrdiff_t c = grid.locate(points.subspan(i * axes, axes));
    if (c < 0) {
      ++outside;
      continue;
    }
    grid.mass[c] += w;
  }
  if (outside == m) throw DomainError("histogram: every point lies outside the grid box");
  grid.clipped_mass = static_cast<double>(outside) * w;
  return grid;
}

namespace {

std::vector<double> gaussian_stencil(double h) {
  const int radius = static_cast<int>(std::ceil(3.0 * h));
  std::vector<double> w(2 * radius + 1);
  double sum = 0.0;
  for (int j = -radius; j <= radius; ++j) {
    w[j + radius] = std::exp(-0.5 * (j * j) / (h * h));
    sum += w[j + radius];
  }
  for (double& x : w) x /= sum;
  return w;
}

}  // namespace

DensityGrid kde_smooth(const DensityGrid& grid, double bandwidth_cells) {
  if (!(bandwidth_cells >= 0.0)) throw ConfigError("kde bandwidth must be >= 0");
  if (bandwidth_cells == 0.0) return grid;

  const std::vector<double> w = gaussian_stencil(bandwidth_cells);
  const int radius = static_cast<int>(w.size() / 2);
  const GridGeometry& g = grid.geometry;
  const double before = grid.total();

  std::vector<double> src = grid.mass;
  std::vector<double> dst(src.size());
  for (int a = 0; a < g.axes; ++a) {
    const std::size_t n = g.cells[a];
    const std::size_t stride = g.stride(a);
    const std::size_t outer = src.size() / (n * stride);
    std::fill(dst.begin(), dst.end(), 0.0);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t s = 0; s < stride; ++s) {
        const std::size_t base = o * n * stride + s;
        for (std::size_t i = 0; i < n; ++i) {
          const double m = src[base + i * stride];
          if (m == 0.0) continue;
          const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - radius);
          const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, static_cast<std::ptrdiff_t>(i) + radius);
          for (std::ptrdiff_t j = lo; j <= hi; ++j)
            dst[base + j * stride] += m * w[j - static_cast<std::ptrdiff_t>(i) + radius];
        }
      }
    }
    std::swap(src, dst);
  }

  DensityGrid out(g);
  out.clipped_mass = grid.clipped_mass;
  out.mass = std::move(src);
  const double after = out.total();
  if (after > 0.0 && after != before) {
    const double scale = before / after;
    for (double& x : out.mass) x *= scale;
  }
  return out;
}

DensityGrid marginal(const DensityGrid& grid, std::span<const int> keep) {
  const GridGeometry& g = grid.geometry;
  if (keep.empty()) throw ConfigError("marginal: keep at least one axis");
  for (std::size_t k = 0; k < keep.size(); ++k) {
    if (keep[k] < 0 || keep[k] >= g.axes) throw ConfigError("marginal: axis index out of range");
    if (k > 0 && keep[k] <= keep[k - 1]) throw ConfigError("marginal: axes must be strictly ascending");
  }

  GridGeometry mg;
  mg.axes = static_cast<int>(keep.size());
  for (int k = 0; k < mg.axes; ++k) {
    mg.lower[k] = g.lower[keep[k]];
    mg.edge[k] = g.edge[keep[k]];
    mg.cells[k] = g.cells[keep[k]];
  }
  DensityGrid out(mg);
  out.clipped_mass = grid.clipped_mass;

  std::array<std::size_t, kMaxAxes> idx{};
  for (std::size_t c = 0; c < grid.mass.size(); ++c) {
    std::size_t rem = c;
    for (int a = g.axes - 1; a >= 0; --a) {
      idx[a] = rem % g.cells[a];
      rem /= g.cells[a];
    }
    std::size_t target = 0;
    for (int k = 0; k < mg.axes; ++k) target = target * mg.cells[k] + idx[keep[k]];
    out.mass[target] += grid.mass[c];
  }
  return out;
}

DensityGrid grid_from_density(const GridGeometry& geometry,
                              const std::function<double(std::span<const double>)>& f) {
  geometry.validate();
  DensityGrid out(geometry);
  std::array<double, kMaxAxes> p{};
  double total = 0.0;
  for (std::size_t c = 0; c < out.mass.size(); ++c) {
    std::size_t rem = c;
    for (int a = geometry.axes - 1; a >= 0; --a) {
      p[a] = geometry.center(a, rem % geometry.cells[a]);
      rem /= geometry.cells[a];
    }
    const double value = f(std::span<const double>(p.data(), geometry.axes));
    if (value < 0.0) throw DomainError("grid_from_density: density is negative at a cell center");
    out.mass[c] = value * geometry.cell_volume();
    total += out.mass[c];
  }
  if (!(total > 0.0)) throw DomainError("grid_from_density: density vanishes on the grid");
  for (double& m : out.mass) m /= total;
  return out;
}

std::vector<double> phase_points(const PhaseState& state) {
  const int d = state.dim;
  std::vector<double> out(state.n * 2 * d);
  for (std::size_t i = 0; i < state.n; ++i) {
    for (int k = 0; k < d; ++k) {
      out[i * 2 * d + k] = state.x[i * d + k];
      out[i * 2 * d + d + k] = state.v[i * d + k];
    }
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> bounding_box(std::span<const double> points, int axes,
                                                                 double pad) {
  if (axes < 1 || points.size() % axes != 0 || points.empty())
    throw ConfigError("bounding_box: empty or ragged point array");
  std::vector<double> lo(axes, std::numeric_limits<double>::infinity());
  std::vector<double> hi(axes, -std::numeric_limits<double>::infinity());
  const std::size_t m = points.size() / axes;
  for (std::size_t i = 0; i < m; ++i) {
    for (int a = 0; a < axes; ++a) {
      const double x = points[i * axes + a];
      lo[a] = std::min(lo[a], x);
      hi[a] = std::max(hi[a], x);
    }
  }
  for (int a = 0; a < axes; ++a) {
    if (!std::isfinite(lo[a]) || !std::isfinite(hi[a])) throw DomainError("bounding_box: non-finite coordinate");
    lo[a] -= pad;
    hi[a] += pad;
  }
  return {lo, hi};
}

GridGeometry cubic_geometry(std::span<const double> lower, std::span<const double> upper, std::size_t cells,
                            std::size_t pad_cells, bool quantize_edge) {
  if (lower.size() != upper.size() || lower.empty() || lower.size() > static_cast<std::size_t>(kMaxAxes))
    throw ConfigError("cubic_geometry: bad box");
  if (cells <= 2 * pad_cells + 1) throw ConfigError("cubic_geometry: padding leaves no interior cells");
  double span = 0.0;
  for (std::size_t a = 0; a < lower.size(); ++a) span = std::max(span, upper[a] - lower[a]);
  double edge = span / static_cast<double>(cells - 2 * pad_cells);
  if (!(edge > 0.0)) edge = 1e-12;
  if (quantize_edge) {
    // ladder 2^{k/16}
    const double k = std::ceil(16.0 * std::log2(edge));
    edge = std::exp2(k / 16.0);
  }
  GridGeometry g;
  g.axes = static_cast<int>(lower.size());
  for (int a = 0; a < g.axes; ++a) {
    const double mid = 0.5 * (lower[a] + upper[a]);
    g.lower[a] = mid - 0.5 * edge * static_cast<double>(cells);
    g.edge[a] = edge;
    g.cells[a] = cells;
  }
  g.validate();
  return g;
}

}  // namespace vpfp
