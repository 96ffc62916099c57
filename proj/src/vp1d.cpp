#include "vpfp/vp1d.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>

#include "vpfp/errors.hpp"

namespace vpfp {

KineticGrid1D KineticGrid1D::from_density(double x_lo, double x_hi, double v_lo, double v_hi, std::size_t nx,
                                          std::size_t nv, const std::function<double(double, double)>& density) {
  KineticGrid1D g;
  g.x_lo = x_lo;
  g.x_hi = x_hi;
  g.v_lo = v_lo;
  g.v_hi = v_hi;
  g.nx = nx;
  g.nv = nv;
  g.f.assign(nx * nv, 0.0);
  g.validate();
  double mass = 0.0;
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < nv; ++j) {
      const double value = density(g.x(i), g.v(j));
      if (!(value >= 0.0)) throw DomainError("kinetic grid: density is negative or NaN");
      g.at(i, j) = value;
      mass += value;
    }
  }
  mass *= g.dx() * g.dv();
  if (!(mass > 0.0)) throw DomainError("kinetic grid: density vanishes on the grid");
  for (double& value : g.f) value /= mass;
  return g;
}

DensityGrid KineticGrid1D::masses() const {
  const std::array<double, 2> lo{x_lo, v_lo};
  const std::array<double, 2> hi{x_hi, v_hi};
  const std::array<std::size_t, 2> cells{nx, nv};
  DensityGrid out(GridGeometry::from_box(lo, hi, cells));
  const double w = dx() * dv();
  for (std::size_t c = 0; c < f.size(); ++c) out.mass[c] = f[c] * w;
  return out;
}

void KineticGrid1D::validate() const {
  if (nx < 4 || nv < 4) throw ConfigError("kinetic grid needs at least 4 cells per axis");
  if (!(x_hi > x_lo) || !(v_hi > v_lo)) throw ConfigError("kinetic grid ranges must be nonempty");
  if (f.size() != nx * nv) throw ConfigError("kinetic grid: f has the wrong size");
}

std::vector<double> field_solve_1d(std::span<const double> rho_mass, int sign, double c1) {
  const double total = std::accumulate(rho_mass.begin(), rho_mass.end(), 0.0);
  std::vector<double> e(rho_mass.size());
  double below = 0.0;
  for (std::size_t i = 0; i < rho_mass.size(); ++i) {
    const double cdf = below + 0.5 * rho_mass[i];
    e[i] = sign * c1 * (cdf - (total - cdf));
    below += rho_mass[i];
  }
  return e;
}

namespace {

std::vector<double> spatial_mass(const KineticGrid1D& g) {
  std::vector<double> rho(g.nx, 0.0);
  const double w = g.dx() * g.dv();
  for (std::size_t i = 0; i < g.nx; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < g.nv; ++j) s += g.at(i, j);
    rho[i] = s * w;
  }
  return rho;
}

std::vector<double> current_field(const KineticGrid1D& g, const Vp1dOptions& o) {
  if (!o.self_field) return std::vector<double>(g.nx, 0.0);
  return field_solve_1d(spatial_mass(g), o.sign, o.c1);
}

// out[i] = in(i - alpha) by 4-point Lagrange interpolation with zeros outside
void shift_line(const double* in, double* out, std::size_t n, std::ptrdiff_t stride, double alpha) {
  const double pos = -alpha;
  const double fl = std::floor(pos);
  const double t = pos - fl;
  const auto k = static_cast<std::ptrdiff_t>(fl);
  const double w[4] = {-t * (t - 1.0) * (t - 2.0) / 6.0, (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
                       -(t + 1.0) * t * (t - 2.0) / 2.0, (t + 1.0) * t * (t - 1.0) / 6.0};
  const auto len = static_cast<std::ptrdiff_t>(n);
  for (std::ptrdiff_t i = 0; i < len; ++i) {
    double s = 0.0;
    for (int q = 0; q < 4; ++q) {
      const std::ptrdiff_t src = i + k - 1 + q;
      if (src >= 0 && src < len) s += w[q] * in[src * stride];
    }
    out[i * stride] = s;
  }
}

double total_mass(const KineticGrid1D& g) {
  return std::accumulate(g.f.begin(), g.f.end(), 0.0) * g.dx() * g.dv();
}

void advect_x(KineticGrid1D& g, double dt) {
  std::vector<double> out(g.f.size());
  const double before = total_mass(g);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(g.nv); ++j)
    shift_line(g.f.data() + j, out.data() + j, g.nx, static_cast<std::ptrdiff_t>(g.nv), g.v(j) * dt / g.dx());
  g.f.swap(out);
  g.outflow += before - total_mass(g);
}

void advect_v(KineticGrid1D& g, const std::vector<double>& e, double dt) {
  std::vector<double> out(g.f.size());
  const double before = total_mass(g);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(g.nx); ++i)
    shift_line(g.f.data() + i * g.nv, out.data() + i * g.nv, g.nv, 1, e[i] * dt / g.dv());
  g.f.swap(out);
  g.outflow += before - total_mass(g);
}

// e^{-mu} I_j(mu): the lattice heat kernel, variance mu in cell units
std::vector<double> heat_weights(double mu) {
  std::vector<double> w;
  if (mu <= 500.0) {
    for (int j = 0;; ++j) {
      const double value = std::exp(-mu) * std::cyl_bessel_i(static_cast<double>(j), mu);
      if (j > mu && value < 1e-18) break;
      w.push_back(value);
    }
  } else {
    // I_j overflows; the sampled Gaussian has the same variance to O(1/mu)
    const int radius = static_cast<int>(std::ceil(10.0 * std::sqrt(mu)));
    for (int j = 0; j <= radius; ++j) w.push_back(std::exp(-0.5 * j * j / mu));
  }
  double sum = w[0];
  for (std::size_t j = 1; j < w.size(); ++j) sum += 2.0 * w[j];
  for (double& x : w) x /= sum;
  return w;
}

void diffuse_v(KineticGrid1D& g, double sigma, double dt) {
  if (sigma <= 0.0) return;
  const double mu = 2.0 * sigma * dt / (g.dv() * g.dv());
  const std::vector<double> w = heat_weights(mu);
  const auto radius = static_cast<std::ptrdiff_t>(w.size()) - 1;
  const auto nv = static_cast<std::ptrdiff_t>(g.nv);
  std::vector<double> out(g.f.size(), 0.0);
  const double before = total_mass(g);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(g.nx); ++i) {
    const double* in = g.f.data() + i * nv;
    double* o = out.data() + i * nv;
    for (std::ptrdiff_t j = 0; j < nv; ++j) {
      const double value = in[j];
      if (value == 0.0) continue;
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, j - radius);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(nv - 1, j + radius);
      for (std::ptrdiff_t q = lo; q <= hi; ++q) o[q] += value * w[static_cast<std::size_t>(std::abs(q - j))];
    }
  }
  g.f.swap(out);
  g.outflow += before - total_mass(g);
}

void clip_negative(KineticGrid1D& g) {
  double added = 0.0;
  for (double& x : g.f) {
    if (x < 0.0) {
      added -= x;
      x = 0.0;
    }
  }
  g.clipped += added * g.dx() * g.dv();
}

}  // namespace

double cfl_limit(const KineticGrid1D& grid, const Vp1dOptions& options) {
  const double vmax = std::max(std::abs(grid.v_lo + 0.5 * grid.dv()), std::abs(grid.v_hi - 0.5 * grid.dv()));
  double limit = grid.dx() / vmax;
  const std::vector<double> e = current_field(grid, options);
  double emax = 0.0;
  for (double x : e) emax = std::max(emax, std::abs(x));
  if (emax > 0.0) limit = std::min(limit, grid.dv() / emax);
  return limit;
}

KineticGrid1D splitting_step(const KineticGrid1D& grid, double dt, const Vp1dOptions& options) {
  grid.validate();
  if (!(dt > 0.0)) throw ConfigError("vp1d: dt must be positive");
  if (!(options.sigma >= 0.0)) throw ConfigError("vp1d: sigma must be >= 0");
  const double limit = cfl_limit(grid, options);
  if (dt > limit * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "vp1d: dt = " << dt << " violates the CFL limit; use dt <= " << limit;
    throw ConfigError(msg.str());
  }
  KineticGrid1D g = grid;
  advect_x(g, 0.5 * dt);
  const std::vector<double> e = current_field(g, options);
  double emax = 0.0;
  for (double x : e) emax = std::max(emax, std::abs(x));
  if (emax * dt > g.dv() * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "vp1d: field CFL violated at the half step; use dt <= " << g.dv() / emax;
    throw ConfigError(msg.str());
  }
  if (options.self_field) advect_v(g, e, dt);
  diffuse_v(g, options.sigma, dt);
  advect_x(g, 0.5 * dt);
  clip_negative(g);
  g.t = grid.t + dt;
  return g;
}

KineticGrid1D solve_vp1d(KineticGrid1D grid, double dt, double t_end, const Vp1dOptions& options) {
  if (!(dt > 0.0)) throw ConfigError("vp1d: dt must be positive");
  const double start = grid.t;
  const auto steps = static_cast<std::size_t>(std::ceil((t_end - start) / dt - 1e-9));
  for (std::size_t s = 0; s < steps; ++s) {
    const double h = (s + 1 == steps) ? t_end - (start + static_cast<double>(s) * dt) : dt;
    grid = splitting_step(grid, h, options);
  }
  if (steps > 0) grid.t = t_end;
  return grid;
}

Moments1D moments(const KineticGrid1D& grid) {
  Moments1D m;
  const double w = grid.dx() * grid.dv();
  m.rho.assign(grid.nx, 0.0);
  double second = 0.0;
  for (std::size_t i = 0; i < grid.nx; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < grid.nv; ++j) {
      const double fm = grid.at(i, j) * w;
      const double v = grid.v(j);
      row += grid.at(i, j);
      m.mass += fm;
      m.momentum += v * fm;
      second += v * v * fm;
    }
    m.rho[i] = row * grid.dv();
  }
  m.kinetic_energy = 0.5 * second;
  if (m.mass > 0.0) {
    const double mean = m.momentum / m.mass;
    m.v_variance = second / m.mass - mean * mean;
  }
  return m;
}

double total_energy(const KineticGrid1D& grid, const Vp1dOptions& options) {
  const Moments1D m = moments(grid);
  const std::vector<double> mass = spatial_mass(grid);
  double potential = 0.0;
  for (std::size_t i = 0; i < grid.nx; ++i)
    for (std::size_t j = 0; j < grid.nx; ++j)
      potential += -options.sign * options.c1 * std::abs(grid.x(i) - grid.x(j)) * mass[i] * mass[j];
  return m.kinetic_energy + 0.5 * potential;
}

FieldFunction vp1d_field(KineticGrid1D initial, double dt, const Vp1dOptions& options) {
  struct State {
    KineticGrid1D grid;
    std::vector<double> e;
    double e_time = -1.0;
  };
  auto state = std::make_shared<State>();
  state->grid = std::move(initial);
  return [state, dt, options](const PhaseState& particles, double t, std::span<double> accel) {
    if (particles.dim != 1) throw ConfigError("vp1d_field drives one-dimensional particles only");
    KineticGrid1D& g = state->grid;
    while (g.t < t - 1e-12) g = splitting_step(g, std::min(dt, t - g.t), options);
    if (state->e_time != g.t) {
      state->e = current_field(g, options);
      state->e_time = g.t;
    }
    const std::vector<double>& e = state->e;
    const double total = std::accumulate(g.f.begin(), g.f.end(), 0.0) * g.dx() * g.dv();
    for (std::size_t i = 0; i < particles.n; ++i) {
      const double x = particles.x[i];
      double value;
      if (x <= g.x_lo) {
        value = -options.sign * options.c1 * total;
      } else if (x >= g.x_hi) {
        value = options.sign * options.c1 * total;
      } else {
        const double u = (x - g.x_lo) / g.dx() - 0.5;
        if (u <= 0.0) {
          value = e.front();
        } else if (u >= static_cast<double>(g.nx - 1)) {
          value = e.back();
        } else {
          const auto k = static_cast<std::size_t>(u);
          const double frac = u - static_cast<double>(k);
          value = (1.0 - frac) * e[k] + frac * e[k + 1];
        }
      }
      accel[i] = options.self_field ? value : 0.0;
    }
  };
}

}  // namespace vpfp
