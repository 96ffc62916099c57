#include "vpfp/dynamics.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <list>
#include <mutex>
#include <stdexcept>
#include <string>

#include "kernel_eval.hpp"
#include "vpfp/errors.hpp"
#include "vpfp/metrics.hpp"
#include "vpfp/rng.hpp"

namespace vpfp {

std::string_view to_string(ForcePath path) { return path == ForcePath::direct ? "direct" : "cell_list"; }

ForcePath parse_force_path(std::string_view name) {
  if (name == "direct") return ForcePath::direct;
  if (name == "cell_list") return ForcePath::cell_list;
  throw ConfigError("unknown force path '" + std::string(name) + "' (expected direct or cell_list)");
}

std::size_t SdeParams::steps() const {
  const double ratio = t_end / dt;
  auto n = static_cast<std::size_t>(std::ceil(ratio));
  // a ratio that is an integer up to rounding should not create a sliver step
  if (n > 0 && std::abs(ratio - static_cast<double>(n - 1)) < 1e-9 * ratio) --n;
  return std::max<std::size_t>(n, 1);
}

double SdeParams::step_length(std::size_t k) const {
  const std::size_t n = steps();
  if (k + 1 < n) return dt;
  return t_end - static_cast<double>(n - 1) * dt;
}

void SdeParams::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be >= 0");
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  if (!(t_end > 0.0)) throw ConfigError("t_end must be > 0");
  if (dt > t_end) throw ConfigError("dt must not exceed t_end");
}

double default_time_step(const Kernel& kernel) {
  const double sup = kernel.sup_norm();
  if (!std::isfinite(sup) || sup <= 0.0) return 1e-2;
  return std::min(1e-2, 0.1 / sup);
}

// --- noise -------------------------------------------------------------------------

Vec brownian_increment(std::uint64_t seed, std::size_t i, std::size_t step, int dim, double dt) {
  CounterRng rng({seed, StreamLabel::noise, i, step});
  const double s = std::sqrt(dt);
  Vec out{0.0, 0.0, 0.0};
  for (int k = 0; k < dim; ++k) out[k] = s * rng.normal();
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

void NoiseSource::draw(std::size_t step, std::size_t begin, std::size_t end, double dt, std::span<double> out) {
  const auto d = static_cast<std::size_t>(dim_);
  if (out.size() < (end - begin) * d) throw std::length_error("NoiseSource::draw: output too small");
  const auto count = static_cast<std::ptrdiff_t>(end - begin);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < count; ++r) {
    const std::size_t i = begin + static_cast<std::size_t>(r);
    const Vec b = brownian_increment(seed_, i, step, dim_, dt);
    for (std::size_t k = 0; k < d; ++k) out[r * d + k] = b[k];
  }
  for (std::size_t i = begin; i < end; ++i)
    checksum_ += splitmix64(seed_ ^ splitmix64(i ^ splitmix64(step)));
  draws_ += end - begin;
}

// --- pairwise forces -----------------------------------------------------------------

namespace {

struct LpEval {
  int dim;
  double strength, cutoff, inner;
  Vec operator()(const Vec& x) const { return detail::lp_value(x, dim, strength, cutoff, inner); }
};

struct HlpEval {
  double strength, cutoff;
  const MollifierProfile* profile;
  Vec operator()(const Vec& x) const { return detail::hlp_value(x, strength, cutoff, *profile); }
};

struct ExactEval {
  int dim;
  double strength;
  Vec operator()(const Vec& x) const {
    const double r2 = norm2(x, dim);
    if (r2 == 0.0) return {0.0, 0.0, 0.0};
    return detail::coulomb_value(x, r2, strength, dim);
  }
};

template <class F>
void with_evaluator(const Kernel& kernel, F&& body) {
  const KernelSpec& s = kernel.spec();
  switch (s.family) {
    case KernelFamily::lp:
      body(LpEval{s.dim, s.strength(), kernel.cutoff(),
                  std::pow(static_cast<double>(s.n_particles), s.dim * s.delta)});
      return;
    case KernelFamily::hlp:
      body(HlpEval{s.strength(), kernel.cutoff(), &kernel.profile()});
      return;
    case KernelFamily::exact:
      body(ExactEval{s.dim, s.strength()});
      return;
  }
}

template <int D, class Eval>
void direct_sum(const PhaseState& state, const Eval& eval, std::vector<double>& out) {
  const auto n = static_cast<std::ptrdiff_t>(state.n);
  const double* x = state.x.data();
  const double inv = 1.0 / static_cast<double>(n - 1);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double acc[D] = {};
    const double* xi = x + i * D;
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      if (j == i) continue;
      Vec dx{0.0, 0.0, 0.0};
      for (int k = 0; k < D; ++k) dx[k] = xi[k] - x[j * D + k];
      const Vec f = eval(dx);
      for (int k = 0; k < D; ++k) acc[k] += f[k];
    }
    for (int k = 0; k < D; ++k) out[i * D + k] = acc[k] * inv;
  }
}

struct CellList {
  int dim = 0;
  double edge = 0.0;
  std::array<double, 3> lower{};
  std::array<std::int64_t, 3> count{1, 1, 1};
  // occupied cells, in lexicographic cell order
  std::vector<std::array<std::int64_t, 3>> coords;
  std::vector<std::size_t> begin;  // size coords.size() + 1, ranges into `order`
  std::vector<std::size_t> order;  // particle indices sorted by cell
  std::vector<std::size_t> cell_of;  // occupied-cell slot per particle
  std::vector<double> sorted_x;
};

CellList build_cells(const PhaseState& state, double min_edge) {
  CellList cl;
  const int d = state.dim;
  cl.dim = d;
  auto [lo, hi] = bounding_box(state.x, d, 0.0);
  double span = 0.0;
  for (int a = 0; a < d; ++a) span = std::max(span, hi[a] - lo[a]);
  cl.edge = std::max(min_edge, span / 64.0);
  if (!(cl.edge > 0.0)) cl.edge = 1.0;
  for (int a = 0; a < d; ++a) {
    cl.lower[a] = lo[a];
    cl.count[a] = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor((hi[a] - lo[a]) / cl.edge)) + 1);
  }
  const std::size_t n = state.n;
  std::vector<std::int64_t> linear(n);
  std::vector<std::array<std::int64_t, 3>> cc(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::int64_t lin = 0;
    for (int a = 0; a < d; ++a) {
      auto c = static_cast<std::int64_t>(std::floor((state.x[i * d + a] - cl.lower[a]) / cl.edge));
      c = std::clamp<std::int64_t>(c, 0, cl.count[a] - 1);
      cc[i][a] = c;
      lin = lin * cl.count[a] + c;
    }
    linear[i] = lin;
  }
  cl.order.resize(n);
  for (std::size_t i = 0; i < n; ++i) cl.order[i] = i;
  std::stable_sort(cl.order.begin(), cl.order.end(),
                   [&](std::size_t a, std::size_t b) { return linear[a] < linear[b]; });
  cl.cell_of.resize(n);
  cl.sorted_x.resize(n * d);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = cl.order[r];
    if (r == 0 || linear[i] != linear[cl.order[r - 1]]) {
      cl.coords.push_back(cc[i]);
      cl.begin.push_back(r);
    }
    cl.cell_of[i] = cl.coords.size() - 1;
    for (int a = 0; a < d; ++a) cl.sorted_x[r * d + a] = state.x[i * d + a];
  }
  cl.begin.push_back(n);
  return cl;
}

template <int D, class Eval>
void cell_sum(const PhaseState& state, const Kernel& kernel, const Eval& eval, std::vector<double>& out) {
  const CellList cl = build_cells(state, kernel.cutoff());
  const auto n = static_cast<std::ptrdiff_t>(state.n);
  const double inv = 1.0 / static_cast<double>(n - 1);
  const double strength = kernel.spec().strength();
  const ExactEval far_eval{D, strength};
  const std::size_t cells = cl.coords.size();

  // d = 1: a far cell lies entirely on one side, so its exact contribution is strength * count
  std::vector<std::size_t> prefix;
  if constexpr (D == 1) {
    prefix.assign(cells + 1, 0);
    for (std::size_t c = 0; c < cells; ++c) prefix[c + 1] = cl.begin[c + 1];
  }

#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double* xi = state.x.data() + i * D;
    const auto& ci = cl.coords[cl.cell_of[i]];
    double near[D] = {};
    double far[D] = {};
    if constexpr (D == 1) {
      const std::size_t slot = cl.cell_of[i];
      std::size_t first = slot, last = slot;
      while (first > 0 && cl.coords[first - 1][0] >= ci[0] - 1) --first;
      while (last + 1 < cells && cl.coords[last + 1][0] <= ci[0] + 1) ++last;
      for (std::size_t r = cl.begin[first]; r < cl.begin[last + 1]; ++r) {
        if (cl.order[r] == static_cast<std::size_t>(i)) continue;
        const Vec f = eval(Vec{xi[0] - cl.sorted_x[r], 0.0, 0.0});
        near[0] += f[0];
      }
      const double left = static_cast<double>(prefix[first]);
      const double right = static_cast<double>(prefix[cells] - prefix[last + 1]);
      far[0] = strength * (left - right);
    } else {
      for (std::size_t c = 0; c < cells; ++c) {
        const auto& cj = cl.coords[c];
        bool adjacent = true;
        for (int a = 0; a < D; ++a) adjacent = adjacent && std::abs(cj[a] - ci[a]) <= 1;
        if (adjacent) {
          for (std::size_t r = cl.begin[c]; r < cl.begin[c + 1]; ++r) {
            if (cl.order[r] == static_cast<std::size_t>(i)) continue;
            Vec dx{0.0, 0.0, 0.0};
            for (int k = 0; k < D; ++k) dx[k] = xi[k] - cl.sorted_x[r * D + k];
            const Vec f = eval(dx);
            for (int k = 0; k < D; ++k) near[k] += f[k];
          }
        } else {
          for (std::size_t r = cl.begin[c]; r < cl.begin[c + 1]; ++r) {
            Vec dx{0.0, 0.0, 0.0};
            for (int k = 0; k < D; ++k) dx[k] = xi[k] - cl.sorted_x[r * D + k];
            const Vec f = far_eval(dx);
            for (int k = 0; k < D; ++k) far[k] += f[k];
          }
        }
      }
    }
    for (int k = 0; k < D; ++k) out[i * D + k] = (near[k] + far[k]) * inv;
  }
}

template <int D>
void dispatch_pairwise(const PhaseState& state, const Kernel& kernel, ForcePath path, std::vector<double>& out) {
  with_evaluator(kernel, [&](const auto& eval) {
    if (path == ForcePath::direct)
      direct_sum<D>(state, eval, out);
    else
      cell_sum<D>(state, kernel, eval, out);
  });
}

}  // namespace

std::vector<double> pairwise_force(const PhaseState& state, const Kernel& kernel, ForcePath path) {
  if (state.n < 2) throw ConfigError("pairwise_force needs at least 2 particles");
  if (state.dim != kernel.spec().dim) throw ConfigError("pairwise_force: state and kernel dimensions differ");
  if (path == ForcePath::cell_list && kernel.spec().family == KernelFamily::exact)
    throw ConfigError("cell_list path requires a regularized kernel");
  std::vector<double> out(state.n * state.dim, 0.0);
  switch (state.dim) {
    case 1:
      dispatch_pairwise<1>(state, kernel, path, out);
      break;
    case 2:
      dispatch_pairwise<2>(state, kernel, path, out);
      break;
    case 3:
      dispatch_pairwise<3>(state, kernel, path, out);
      break;
    default:
      throw ConfigError("unsupported dimension");
  }
  return out;
}

// --- mean field ------------------------------------------------------------------------

namespace {

Vec quadrature_at(const Vec& p, const DensityGrid& rho, const Kernel& kernel) {
  const GridGeometry& g = rho.geometry;
  const int d = g.axes;
  Vec acc{0.0, 0.0, 0.0};
  with_evaluator(kernel, [&](const auto& eval) {
    std::array<std::size_t, 3> idx{};
    for (std::size_t c = 0; c < rho.mass.size(); ++c) {
      const double m = rho.mass[c];
      if (m != 0.0) {
        Vec dx{0.0, 0.0, 0.0};
        for (int a = 0; a < d; ++a) dx[a] = p[a] - g.center(a, idx[a]);
        const Vec f = eval(dx);
        for (int a = 0; a < d; ++a) acc[a] += f[a] * m;
      }
      for (int a = d - 1; a >= 0; --a) {
        if (++idx[a] < g.cells[a]) break;
        idx[a] = 0;
      }
    }
  });
  return acc;
}

void check_inside_doubled_box(const Vec& p, const GridGeometry& g) {
  for (int a = 0; a < g.axes; ++a) {
    const double width = g.upper(a) - g.lower[a];
    const double mid = 0.5 * (g.upper(a) + g.lower[a]);
    if (!(std::abs(p[a] - mid) <= width))
      throw DomainError("meanfield_force: query point outside the doubled density box on axis " + std::to_string(a));
  }
}

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

std::vector<double> meanfield_force(std::span<const double> points, const DensityGrid& rho, const Kernel& kernel) {
  const int d = kernel.spec().dim;
  if (rho.geometry.axes != d) throw ConfigError("meanfield_force: density grid and kernel dimensions differ");
  if (points.size() % d != 0) throw ConfigError("meanfield_force: ragged point array");
  const std::size_t m = points.size() / d;
  std::vector<double> out(points.size(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    Vec p{0.0, 0.0, 0.0};
    for (int a = 0; a < d; ++a) p[a] = points[i * d + a];
    check_inside_doubled_box(p, rho.geometry);
  }
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    Vec p{0.0, 0.0, 0.0};
    for (int a = 0; a < d; ++a) p[a] = points[i * d + a];
    const Vec f = quadrature_at(p, rho, kernel);
    for (int a = 0; a < d; ++a) out[i * d + a] = f[a];
  }
  return out;
}

struct MeanFieldSolver::Impl {
  int dim = 0;
  std::size_t n = 0;
  std::array<int, 3> padded{1, 1, 1};
  std::size_t real_size = 0;
  std::size_t complex_size = 0;
  double* real_buf = nullptr;
  fftw_complex* cplx_buf = nullptr;
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
  std::vector<std::complex<double>> density_hat;

  struct Entry {
    double edge;
    std::vector<std::vector<std::complex<double>>> hat;
  };
  std::list<Entry> cache;  // most recently used first
  static constexpr std::size_t kCacheSize = 3;

  Impl(int d, std::size_t cells) : dim(d), n(cells) {
    real_size = 1;
    for (int a = 0; a < d; ++a) {
      padded[a] = static_cast<int>(2 * cells);
      real_size *= 2 * cells;
    }
    complex_size = real_size / (2 * cells) * (cells + 1);
    real_buf = fftw_alloc_real(real_size);
    cplx_buf = fftw_alloc_complex(complex_size);
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    forward = fftw_plan_dft_r2c(d, padded.data(), real_buf, cplx_buf, FFTW_ESTIMATE);
    backward = fftw_plan_dft_c2r(d, padded.data(), cplx_buf, real_buf, FFTW_ESTIMATE);
  }

  ~Impl() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
    fftw_free(real_buf);
    fftw_free(cplx_buf);
  }

  std::vector<std::complex<double>> transform_real() {
    fftw_execute(forward);
    std::vector<std::complex<double>> out(complex_size);
    for (std::size_t c = 0; c < complex_size; ++c) out[c] = {cplx_buf[c][0], cplx_buf[c][1]};
    return out;
  }

  // periodic table of k at lattice offsets, one transform per component
  const Entry& kernel_hat(double edge, const Kernel& kernel, std::size_t& computed) {
    for (auto it = cache.begin(); it != cache.end(); ++it) {
      if (it->edge == edge) {
        cache.splice(cache.begin(), cache, it);
        return cache.front();
      }
    }
    Entry entry{edge, {}};
    const auto p = static_cast<std::ptrdiff_t>(2 * n);
    const auto half = static_cast<std::ptrdiff_t>(n);
    std::vector<Vec> table(real_size);
    with_evaluator(kernel, [&](const auto& eval) {
      std::array<std::ptrdiff_t, 3> idx{};
      for (std::size_t c = 0; c < real_size; ++c) {
        Vec x{0.0, 0.0, 0.0};
        bool wrapped = false;
        for (int a = 0; a < dim; ++a) {
          std::ptrdiff_t off = idx[a];
          if (off == half) wrapped = true;
          if (off > half) off -= p;
          x[a] = static_cast<double>(off) * edge;
        }
        table[c] = wrapped ? Vec{0.0, 0.0, 0.0} : eval(x);
        for (int a = dim - 1; a >= 0; --a) {
          if (++idx[a] < p) break;
          idx[a] = 0;
        }
      }
    });
    for (int comp = 0; comp < dim; ++comp) {
      for (std::size_t c = 0; c < real_size; ++c) real_buf[c] = table[c][comp];
      entry.hat.push_back(transform_real());
    }
    ++computed;
    cache.push_front(std::move(entry));
    if (cache.size() > kCacheSize) cache.pop_back();
    return cache.front();
  }
};

MeanFieldSolver::MeanFieldSolver(const Kernel& kernel, MeanFieldOptions options)
    : kernel_(kernel), options_(options) {
  if (options_.cells < 4) throw ConfigError("mean-field grid needs at least 4 cells per axis");
  if (!(options_.bandwidth_cells >= 0.0)) throw ConfigError("mean-field bandwidth must be >= 0");
  impl_ = std::make_unique<Impl>(kernel.spec().dim, options_.cells);
}

MeanFieldSolver::~MeanFieldSolver() = default;

void MeanFieldSolver::refresh(std::span<const double> source, std::span<const double> cover) {
  const int d = kernel_.spec().dim;
  auto [lo, hi] = bounding_box(source, d, 0.0);
  if (!cover.empty()) {
    auto [clo, chi] = bounding_box(cover, d, 0.0);
    for (int a = 0; a < d; ++a) {
      lo[a] = std::min(lo[a], clo[a]);
      hi[a] = std::max(hi[a], chi[a]);
    }
  }
  const auto pad = static_cast<std::size_t>(std::ceil(3.0 * options_.bandwidth_cells)) + 1;
  const GridGeometry g = cubic_geometry(lo, hi, options_.cells, pad, options_.quantize_edge);
  density_ = kde_smooth(histogram(source, g), options_.bandwidth_cells);
  compute_field();
}

void MeanFieldSolver::set_density(const DensityGrid& rho) {
  const GridGeometry& g = rho.geometry;
  if (g.axes != kernel_.spec().dim) throw ConfigError("set_density: dimension mismatch");
  for (int a = 0; a < g.axes; ++a)
    if (g.cells[a] != options_.cells || g.edge[a] != g.edge[0])
      throw ConfigError("set_density: grid must be cubic with the solver's cell count");
  density_ = rho;
  compute_field();
}

void MeanFieldSolver::compute_field() {
  Impl& im = *impl_;
  const GridGeometry& g = density_.geometry;
  const int d = g.axes;
  const std::size_t n = im.n;
  const std::size_t cells = g.size();

  // zero-padded density
  std::fill(im.real_buf, im.real_buf + im.real_size, 0.0);
  {
    std::array<std::size_t, 3> idx{};
    for (std::size_t c = 0; c < cells; ++c) {
      std::size_t pos = 0;
      for (int a = 0; a < d; ++a) pos = pos * (2 * n) + idx[a];
      im.real_buf[pos] = density_.mass[c];
      for (int a = d - 1; a >= 0; --a) {
        if (++idx[a] < n) break;
        idx[a] = 0;
      }
    }
  }
  im.density_hat = im.transform_real();
  const auto& khat = im.kernel_hat(g.edge[0], kernel_, kernel_transforms_);

  const double scale = 1.0 / static_cast<double>(im.real_size);
  field_.assign(d, std::vector<double>(cells));
  for (int comp = 0; comp < d; ++comp) {
    for (std::size_t c = 0; c < im.complex_size; ++c) {
      const std::complex<double> z = im.density_hat[c] * khat.hat[comp][c];
      im.cplx_buf[c][0] = z.real();
      im.cplx_buf[c][1] = z.imag();
    }
    fftw_execute(im.backward);
    std::array<std::size_t, 3> idx{};
    for (std::size_t c = 0; c < cells; ++c) {
      std::size_t pos = 0;
      for (int a = 0; a < d; ++a) pos = pos * (2 * n) + idx[a];
      field_[comp][c] = im.real_buf[pos] * scale;
      for (int a = d - 1; a >= 0; --a) {
        if (++idx[a] < n) break;
        idx[a] = 0;
      }
    }
  }
}

std::span<const double> MeanFieldSolver::cell_field(int axis) const {
  if (field_.empty()) throw std::logic_error("MeanFieldSolver: no density set");
  return field_.at(axis);
}

std::vector<double> MeanFieldSolver::evaluate(std::span<const double> points) const {
  if (field_.empty()) throw std::logic_error("MeanFieldSolver: no density set");
  const GridGeometry& g = density_.geometry;
  const int d = g.axes;
  const std::size_t m = points.size() / d;
  const auto n = static_cast<std::ptrdiff_t>(options_.cells);
  std::vector<double> out(points.size(), 0.0);
  bool outside_box = false;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    std::array<std::ptrdiff_t, 3> base{};
    std::array<double, 3> frac{};
    bool inside = true;
    for (int a = 0; a < d; ++a) {
      const double u = (points[i * d + a] - g.lower[a]) / g.edge[a] - 0.5;
      const double f = std::floor(u);
      if (!(f >= 0.0 && f <= static_cast<double>(n - 2))) {
        inside = false;
        break;
      }
      base[a] = static_cast<std::ptrdiff_t>(f);
      frac[a] = u - f;
    }
    if (!inside) {
      Vec p{0.0, 0.0, 0.0};
      for (int a = 0; a < d; ++a) p[a] = points[i * d + a];
      bool ok = true;
      for (int a = 0; a < d; ++a) {
        const double width = g.upper(a) - g.lower[a];
        if (!(std::abs(p[a] - 0.5 * (g.upper(a) + g.lower[a])) <= width)) ok = false;
      }
      if (!ok) {
#pragma omp atomic write
        outside_box = true;
        continue;
      }
      const Vec f = quadrature_at(p, density_, kernel_);
      for (int a = 0; a < d; ++a) out[i * d + a] = f[a];
      continue;
    }
    const int corners = 1 << d;
    for (int corner = 0; corner < corners; ++corner) {
      double w = 1.0;
      std::size_t cell = 0;
      for (int a = 0; a < d; ++a) {
        const int bit = (corner >> a) & 1;
        w *= bit ? frac[a] : 1.0 - frac[a];
        cell = cell * static_cast<std::size_t>(n) + static_cast<std::size_t>(base[a] + bit);
      }
      for (int a = 0; a < d; ++a) out[i * d + a] += w * field_[a][cell];
    }
  }
  if (outside_box) throw DomainError("MeanFieldSolver: query point outside the doubled density box");
  return out;
}

// --- integrator ---------------------------------------------------------------------------

PhaseState em_step(const PhaseState& state, std::span<const double> forces, const SdeParams& params,
                   std::span<const double> increments, std::size_t step) {
  const std::size_t len = state.n * state.dim;
  if (forces.size() != len) throw ConfigError("em_step: force array shape mismatch");
  const bool noisy = params.sigma > 0.0;
  if (noisy && increments.size() != len) throw ConfigError("em_step: increment array shape mismatch");
  const double h = params.step_length(step);
  const double amp = std::sqrt(2.0 * params.sigma);
  PhaseState out(state.n, state.dim, state.t + h);
  for (std::size_t c = 0; c < len; ++c) {
    out.x[c] = state.x[c] + state.v[c] * h;
    out.v[c] = state.v[c] + forces[c] * h + (noisy ? amp * increments[c] : 0.0);
  }
  for (std::size_t c = 0; c < len; ++c) {
    if (!std::isfinite(out.x[c]) || !std::isfinite(out.v[c])) {
      const std::size_t i = c / state.dim;
      double a2 = 0.0;
      for (int k = 0; k < state.dim; ++k) a2 += forces[i * state.dim + k] * forces[i * state.dim + k];
      throw BlowUpError(step, i, std::sqrt(a2));
    }
  }
  return out;
}

std::vector<double> default_output_times(double t_end) {
  return {0.0, 0.25 * t_end, 0.5 * t_end, 0.75 * t_end, t_end};
}

namespace {

// k dt rather than a running sum, so checkpoint times print exactly
double time_after(const SdeParams& sde, std::size_t s) {
  return s + 1 == sde.steps() ? sde.t_end : static_cast<double>(s + 1) * sde.dt;
}

// first step whose time reaches each requested output time
std::vector<std::size_t> output_steps_for(const SdeParams& sde, const std::vector<double>& times) {
  const std::size_t steps = sde.steps();
  std::vector<double> t(steps + 1, 0.0);
  for (std::size_t s = 0; s < steps; ++s) t[s + 1] = time_after(sde, s);
  std::vector<std::size_t> out;
  const double tol = 1e-9 * std::max(1.0, sde.t_end);
  for (double tau : times) {
    if (tau < 0.0 || tau > sde.t_end + tol) throw ConfigError("output time outside [0, t_end]");
    std::size_t s = 0;
    while (s < steps && t[s] < tau - tol) ++s;
    out.push_back(s);
  }
  return out;
}

PhaseState head(const PhaseState& state, std::size_t n) {
  PhaseState out(n, state.dim, state.t);
  std::copy_n(state.x.begin(), n * state.dim, out.x.begin());
  std::copy_n(state.v.begin(), n * state.dim, out.v.begin());
  return out;
}

double max_abs(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  for (double x : b) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

double CoupledRun::sup_deviation() const {
  double m = 0.0;
  for (const auto& r : deviations) m = std::max(m, r.deviation);
  return m;
}

CoupledRun run_coupled(const CoupledConfig& config) {
  const std::size_t n = config.n;
  if (n < 2) throw ConfigError("run_coupled needs n >= 2");
  const std::size_t m = config.mean_field_copies == 0 ? n : config.mean_field_copies;
  if (m < n) throw ConfigError("mean_field_copies must be >= n");
  if (config.refresh_every < 1) throw ConfigError("refresh_every must be >= 1");
  config.sde.validate();
  KernelSpec spec = config.kernel;
  spec.n_particles = static_cast<std::int64_t>(n);
  const Kernel kernel(spec);
  const int d = spec.dim;
  if (config.initial.dim != d) throw ConfigError("initial density and kernel dimensions differ");
  const SdeParams& sde = config.sde;

  const InitialDensity f0(config.initial);
  PhaseState phi = f0.sample(n, sde.seed);
  PhaseState psi = f0.sample(m, sde.seed);

  MeanFieldSolver solver(kernel, config.mean_field);
  NoiseSource phi_noise(sde.seed, d), psi_noise(sde.seed, d), extra_noise(sde.seed, d);

  const std::vector<double> times = config.output_times.empty() ? default_output_times(sde.t_end) : config.output_times;
  const std::vector<std::size_t> out_steps = output_steps_for(sde, times);
  const std::size_t steps = sde.steps();

  CoupledRun run;
  run.n = n;
  run.delta = spec.delta;
  run.sigma = sde.sigma;
  run.family = spec.family;
  run.seed = sde.seed;
  run.dt = sde.dt;
  run.deviations.reserve(steps + 1);

  std::vector<double> inc_phi(n * d), inc_psi(m * d);
  double running = 0.0;
  const double log_n = static_cast<double>(n);
  auto record = [&](std::size_t s) {
    const double dev = coupling_deviation(phi, psi, log_n);
    running = std::max(running, dev);
    run.deviations.push_back({s, phi.t, dev});
    for (std::size_t k = 0; k < out_steps.size(); ++k) {
      if (out_steps[k] != s) continue;
      run.output_times.push_back(phi.t);
      run.output_steps.push_back(s);
      run.phi.push_back(phi);
      run.psi.push_back(head(psi, n));
      run.running_sup.push_back(running);
      run.box_halfwidth.push_back(max_abs(phi.x, psi.x));
    }
  };

  for (std::size_t s = 0; s < steps; ++s) {
    record(s);
    if (s % config.refresh_every == 0) {
      solver.refresh(psi.x, phi.x);
      run.max_clipped_mass = std::max(run.max_clipped_mass, solver.density().clipped_mass);
    }
    const std::vector<double> a_psi = solver.evaluate(psi.x);
    const std::vector<double> a_phi =
        config.identical_dynamics ? solver.evaluate(phi.x) : pairwise_force(phi, kernel, sde.force_path);
    const double h = sde.step_length(s);
    if (sde.sigma > 0.0) {
      phi_noise.draw(s, 0, n, h, inc_phi);
      psi_noise.draw(s, 0, n, h, inc_psi);
      if (m > n) extra_noise.draw(s, n, m, h, std::span<double>(inc_psi).subspan(n * d));
    }
    phi = em_step(phi, a_phi, sde, inc_phi, s);
    psi = em_step(psi, a_psi, sde, inc_psi, s);
    phi.t = psi.t = time_after(sde, s);
  }
  record(steps);

  run.phi_noise_checksum = phi_noise.checksum();
  run.psi_noise_checksum = psi_noise.checksum();
  if (run.phi_noise_checksum != run.psi_noise_checksum)
    throw std::logic_error("coupling violated: Phi and Psi consumed different noise keys");
  run.clipped_flag = run.max_clipped_mass > 1e-6;
  return run;
}

std::vector<PhaseState> run_particles(const CoupledConfig& config) {
  const std::size_t n = config.n;
  if (n < 2) throw ConfigError("run_particles needs n >= 2");
  config.sde.validate();
  KernelSpec spec = config.kernel;
  spec.n_particles = static_cast<std::int64_t>(n);
  const Kernel kernel(spec);
  const int d = spec.dim;
  if (config.initial.dim != d) throw ConfigError("initial density and kernel dimensions differ");
  const SdeParams& sde = config.sde;

  PhaseState phi = InitialDensity(config.initial).sample(n, sde.seed);
  NoiseSource noise(sde.seed, d);
  const std::vector<double> times = config.output_times.empty() ? default_output_times(sde.t_end) : config.output_times;
  const std::vector<std::size_t> out_steps = output_steps_for(sde, times);
  const std::size_t steps = sde.steps();
  std::vector<PhaseState> out;
  auto record = [&](std::size_t s) {
    for (std::size_t k : out_steps)
      if (k == s) out.push_back(phi);
  };
  std::vector<double> inc(n * d);
  for (std::size_t s = 0; s < steps; ++s) {
    record(s);
    const std::vector<double> a = pairwise_force(phi, kernel, sde.force_path);
    const double h = sde.step_length(s);
    if (sde.sigma > 0.0) noise.draw(s, 0, n, h, inc);
    phi = em_step(phi, a, sde, inc, s);
    phi.t = time_after(sde, s);
  }
  record(steps);
  return out;
}

std::vector<PhaseState> characteristics_vp(const PhaseState& initial, const FieldFunction& field, double dt,
                                           double t_end, std::vector<double> output_times) {
  SdeParams sde;
  sde.dt = dt;
  sde.t_end = t_end;
  sde.validate();
  if (output_times.empty()) output_times = default_output_times(t_end);
  const std::vector<std::size_t> out_steps = output_steps_for(sde, output_times);
  const std::size_t steps = sde.steps();
  PhaseState state = initial;
  std::vector<PhaseState> out;
  std::vector<double> accel(state.n * state.dim);
  auto record = [&](std::size_t s) {
    for (std::size_t k : out_steps)
      if (k == s) out.push_back(state);
  };
  for (std::size_t s = 0; s < steps; ++s) {
    record(s);
    std::fill(accel.begin(), accel.end(), 0.0);
    field(state, state.t, accel);
    state = em_step(state, accel, sde, {}, s);
    state.t = initial.t + time_after(sde, s);
  }
  record(steps);
  return out;
}

}  // namespace vpfp
