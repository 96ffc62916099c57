#include "vpfp/metrics.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>

#include "vpfp/dynamics.hpp"
#include "vpfp/errors.hpp"
#include "vpfp/rng.hpp"

namespace vpfp {

double coupling_deviation(const PhaseState& phi, const PhaseState& psi, double n) {
  if (phi.dim != psi.dim) throw ConfigError("coupling_deviation: dimension mismatch");
  if (psi.n < phi.n) throw ConfigError("coupling_deviation: psi has fewer particles than phi");
  if (!(n > 1.0)) throw ConfigError("coupling_deviation: n must exceed 1");
  const int d = phi.dim;
  double dx = 0.0;
  double dv = 0.0;
  for (std::size_t i = 0; i < phi.n; ++i) {
    double sx = 0.0;
    double sv = 0.0;
    for (int k = 0; k < d; ++k) {
      const double a = phi.x[i * d + k] - psi.x[i * d + k];
      const double b = phi.v[i * d + k] - psi.v[i * d + k];
      sx += a * a;
      sv += b * b;
    }
    dx = std::max(dx, sx);
    dv = std::max(dv, sv);
  }
  return std::sqrt(std::log(n)) * std::sqrt(dx) + std::sqrt(dv);
}

double exceedance_probability(std::span<const double> sup_deviations, double threshold) {
  if (sup_deviations.empty()) throw ConfigError("exceedance_probability needs at least one run");
  const auto above = std::count_if(sup_deviations.begin(), sup_deviations.end(), [&](double x) { return x > threshold; });
  return static_cast<double>(above) / static_cast<double>(sup_deviations.size());
}

// --- Wasserstein ------------------------------------------------------------------------

namespace {

double sq_dist(std::span<const double> a, std::size_t i, std::span<const double> b, std::size_t j, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) {
    const double t = a[i * d + k] - b[j * d + k];
    s += t * t;
  }
  return s;
}

std::size_t atom_count(std::span<const double> atoms, int dim, const char* what) {
  if (dim < 1) throw ConfigError(std::string(what) + ": dimension must be >= 1");
  if (atoms.size() % dim != 0) throw ConfigError(std::string(what) + ": ragged atom array");
  return atoms.size() / dim;
}

}  // namespace

std::vector<std::size_t> optimal_assignment(std::span<const double> mu, std::span<const double> nu, int dim) {
  const std::size_t n = atom_count(mu, dim, "optimal_assignment");
  if (atom_count(nu, dim, "optimal_assignment") != n)
    throw ConfigError("exact W2 needs equal atom counts; use wasserstein2_sliced for unequal sizes");
  if (n == 0) return {};
  if (n > kExactW2Max) throw ConfigError("exact W2 is capped at " + std::to_string(kExactW2Max) + " atoms");

  // shortest augmenting path with potentials (Hungarian method), 1-based
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = sq_dist(mu, i0 - 1, nu, j - 1, dim) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

double wasserstein2_exact(std::span<const double> mu, std::span<const double> nu, int dim) {
  const std::vector<std::size_t> a = optimal_assignment(mu, nu, dim);
  if (a.empty()) throw ConfigError("exact W2 of empty measures");
  double cost = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) cost += sq_dist(mu, i, nu, a[i], dim);
  return std::sqrt(cost / static_cast<double>(a.size()));
}

namespace {

// integral over t in (0, 1) of (F^{-1}(t) - G^{-1}(t))^2 for sorted samples
double w2_squared_1d(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return s / static_cast<double>(a.size());
  }
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double t = 0.0, s = 0.0;
  while (i < a.size() && j < b.size()) {
    const double ta = static_cast<double>(i + 1) / na;
    const double tb = static_cast<double>(j + 1) / nb;
    const double next = std::min(ta, tb);
    s += (next - t) * (a[i] - b[j]) * (a[i] - b[j]);
    t = next;
    if (ta <= next) ++i;
    if (tb <= next) ++j;
  }
  return s;
}

}  // namespace

SlicedW2 wasserstein2_sliced(std::span<const double> mu, std::span<const double> nu, int dim,
                             std::size_t projections, std::uint64_t seed) {
  const std::size_t n = atom_count(mu, dim, "wasserstein2_sliced");
  const std::size_t m = atom_count(nu, dim, "wasserstein2_sliced");
  if (projections < 1) throw ConfigError("sliced W2 needs at least one projection");
  if (n == 0 || m == 0) throw ConfigError("sliced W2 of an empty measure");

  std::vector<double> w(projections);
  std::vector<double> a(n), b(m);
  for (std::size_t p = 0; p < projections; ++p) {
    CounterRng rng({seed, StreamLabel::projections, p, 0});
    std::vector<double> th(dim);
    double n2 = 0.0;
    do {
      n2 = 0.0;
      for (int k = 0; k < dim; ++k) {
        th[k] = rng.normal();
        n2 += th[k] * th[k];
      }
    } while (n2 == 0.0);
    const double inv = 1.0 / std::sqrt(n2);
    for (int k = 0; k < dim; ++k) th[k] *= inv;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (int k = 0; k < dim; ++k) s += mu[i * dim + k] * th[k];
      a[i] = s;
    }
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (int k = 0; k < dim; ++k) s += nu[i * dim + k] * th[k];
      b[i] = s;
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    w[p] = w2_squared_1d(a, b);
  }
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(projections);
  double var = 0.0;
  for (double x : w) var += (x - mean) * (x - mean);
  var = projections > 1 ? var / static_cast<double>(projections - 1) : 0.0;
  SlicedW2 out;
  out.value = std::sqrt(mean);
  const double se_mean = std::sqrt(var / static_cast<double>(projections));
  out.std_error = out.value > 0.0 ? se_mean / (2.0 * out.value) : 0.0;
  out.corrected = out.value * std::sqrt(static_cast<double>(dim));
  return out;
}

// --- grid divergences ----------------------------------------------------------------------

namespace {

void check_same_geometry(const DensityGrid& p, const DensityGrid& q, const char* what) {
  if (!p.geometry.same_as(q.geometry) || p.mass.size() != q.mass.size())
    throw ConfigError(std::string(what) + ": grids have different geometry");
}

}  // namespace

double kl_divergence(const DensityGrid& p, const DensityGrid& q, double pseudo_count) {
  check_same_geometry(p, q, "kl_divergence");
  if (!(pseudo_count >= 0.0)) throw ConfigError("kl_divergence: pseudo-count must be >= 0");
  const double q_total = q.total();
  const double scale = q_total / (q_total + pseudo_count * static_cast<double>(q.mass.size()));
  double s = 0.0;
  for (std::size_t c = 0; c < p.mass.size(); ++c) {
    const double pc = p.mass[c];
    if (pc <= 0.0) continue;
    const double qc = (q.mass[c] + pseudo_count) * scale;
    if (qc <= 0.0) return std::numeric_limits<double>::infinity();
    s += pc * std::log(pc / qc);
  }
  return s;
}

double l1_distance(const DensityGrid& p, const DensityGrid& q) {
  check_same_geometry(p, q, "l1_distance");
  double s = 0.0;
  for (std::size_t c = 0; c < p.mass.size(); ++c) s += std::abs(p.mass[c] - q.mass[c]);
  return s;
}

double ckp_slack(double l1, double h_k, int k) {
  if (k < 1) throw ConfigError("ckp_slack: k must be >= 1");
  return 2.0 * k * h_k - l1 * l1;
}

// --- law of large numbers ------------------------------------------------------------------

namespace {

MeanFieldOptions lattice_options(const DensityGrid& rho) {
  const GridGeometry& g = rho.geometry;
  for (int a = 1; a < g.axes; ++a)
    if (g.cells[a] != g.cells[0] || g.edge[a] != g.edge[0])
      throw ConfigError("lln_fluctuation needs a cubic grid");
  MeanFieldOptions o;
  o.cells = g.cells[0];
  o.bandwidth_cells = 0.0;
  o.quantize_edge = false;
  return o;
}

double sup_difference(MeanFieldSolver& solver, const DensityGrid& rho, const std::vector<std::vector<double>>& truth,
                      std::span<const std::size_t> cells, std::size_t n_norm) {
  DensityGrid empirical(rho.geometry);
  const double w = 1.0 / static_cast<double>(n_norm);
  for (std::size_t c : cells) {
    if (c >= empirical.mass.size()) throw ConfigError("lln: sample cell out of range");
    empirical.mass[c] += w;
  }
  solver.set_density(empirical);
  const int d = rho.geometry.axes;
  double sup = 0.0;
  for (std::size_t c : cells) {
    double s = 0.0;
    for (int a = 0; a < d; ++a) {
      const double diff = solver.cell_field(a)[c] - truth[a][c];
      s += diff * diff;
    }
    sup = std::max(sup, std::sqrt(s));
  }
  return sup;
}

std::vector<std::vector<double>> true_field(MeanFieldSolver& solver, const DensityGrid& rho) {
  solver.set_density(rho);
  std::vector<std::vector<double>> out;
  for (int a = 0; a < rho.geometry.axes; ++a) {
    const auto f = solver.cell_field(a);
    out.emplace_back(f.begin(), f.end());
  }
  return out;
}

}  // namespace

double lln_sup(const DensityGrid& rho, const Kernel& kernel, std::span<const std::size_t> sample_cells) {
  if (sample_cells.empty()) throw ConfigError("lln_sup needs at least one sample");
  MeanFieldSolver solver(kernel, lattice_options(rho));
  const auto truth = true_field(solver, rho);
  return sup_difference(solver, rho, truth, sample_cells, sample_cells.size());
}

LlnResult lln_fluctuation(const DensityGrid& rho, KernelSpec spec, int m, std::size_t n, std::size_t repetitions,
                          std::uint64_t seed) {
  if (m < 1) throw ConfigError("lln_fluctuation: m must be >= 1");
  if (n < 1 || repetitions < 1) throw ConfigError("lln_fluctuation: n and repetitions must be >= 1");
  if (std::abs(rho.total() - 1.0) > 1e-9) throw ConfigError("lln_fluctuation: rho must be normalized");
  spec.n_particles = static_cast<std::int64_t>(std::max<std::size_t>(n, 2));
  const Kernel kernel(spec);
  MeanFieldSolver solver(kernel, lattice_options(rho));
  const auto truth = true_field(solver, rho);

  std::vector<double> cdf(rho.mass.size());
  std::partial_sum(rho.mass.begin(), rho.mass.end(), cdf.begin());
  const double total = cdf.back();

  LlnResult out;
  std::vector<std::size_t> cells(n);
  double acc = 0.0;
  for (std::size_t r = 0; r < repetitions; ++r) {
    CounterRng rng({seed, StreamLabel::lln, r, n});
    for (std::size_t i = 0; i < n; ++i) {
      const double u = rng.uniform() * total;
      const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      cells[i] = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
    }
    const double sup = sup_difference(solver, rho, truth, cells, n);
    out.sup_per_rep.push_back(sup);
    acc += std::pow(sup, 2 * m);
  }
  out.statistic = acc / static_cast<double>(repetitions);
  return out;
}

// --- rate fitting ---------------------------------------------------------------------------

RateFit fit_rate(std::span<const std::pair<double, double>> pairs) {
  std::set<double> distinct;
  for (const auto& [n, value] : pairs) {
    if (!(n > 0.0)) throw ConfigError("fit_rate: N must be positive");
    if (!(value > 0.0)) throw DomainError("fit_rate: values must be positive (got " + std::to_string(value) + ")");
    distinct.insert(n);
  }
  if (pairs.size() < 3 || distinct.size() < 3) throw ConfigError("fit_rate needs at least 3 distinct N");

  const double k = static_cast<double>(pairs.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [n, value] : pairs) {
    mx += std::log(n);
    my += std::log(value);
  }
  mx /= k;
  my /= k;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [n, value] : pairs) {
    const double x = std::log(n) - mx;
    const double y = std::log(value) - my;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  RateFit fit;
  fit.points = pairs.size();
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double ss_res = std::max(0.0, syy - fit.slope * sxy);
  fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  const double se = std::sqrt(ss_res / (k - 2.0) / sxx);
  const boost::math::students_t dist(k - 2.0);
  const double tq = boost::math::quantile(dist, 0.975);
  fit.slope_ci_low = fit.slope - tq * se;
  fit.slope_ci_high = fit.slope + tq * se;
  return fit;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ConfigError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace vpfp
