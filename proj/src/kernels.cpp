#include "vpfp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "kernel_eval.hpp"
#include "vpfp/errors.hpp"
#include "vpfp/rng.hpp"

namespace vpfp {

namespace {

// C(d) / c_d for the lp family, calibrated by sample_lipschitz_ratio (10^7 pairs,
// seed 20240611) and multiplied by 1.5. Observed maxima: d=1 1.12495, d=2 4.48876,
// d=3 11.99070.
constexpr double kLipschitzRatio[kMaxDim + 1] = {0.0, 1.6875, 6.7332, 17.9861};

void check_dim(int dim) {
  if (dim < 1 || dim > kMaxDim) throw ConfigError("dimension must be 1, 2 or 3, got " + std::to_string(dim));
}

}  // namespace

std::string_view to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::exact:
      return "exact";
    case KernelFamily::lp:
      return "lp";
    case KernelFamily::hlp:
      return "hlp";
  }
  return "unknown";
}

KernelFamily parse_kernel_family(std::string_view name) {
  if (name == "exact") return KernelFamily::exact;
  if (name == "lp") return KernelFamily::lp;
  if (name == "hlp") return KernelFamily::hlp;
  throw ConfigError("unknown kernel family '" + std::string(name) + "' (expected exact, lp or hlp)");
}

double unit_sphere_area(int dim) {
  if (dim < 1) throw ConfigError("dimension must be >= 1");
  if (dim == 1) return 2.0;
  if (dim == 2) return 2.0 * std::numbers::pi;
  if (dim == 3) return 4.0 * std::numbers::pi;
  // 2 pi^{d/2} / Gamma(d/2)
  return 2.0 * std::pow(std::numbers::pi, 0.5 * dim) / std::tgamma(0.5 * dim);
}

KernelSpec KernelSpec::make(int dim, KernelFamily family, double delta, std::int64_t n_particles, int sign) {
  check_dim(dim);
  KernelSpec spec;
  spec.sign = sign;
  spec.dim = dim;
  spec.c_d = 1.0 / unit_sphere_area(dim);
  spec.family = family;
  spec.delta = delta;
  spec.n_particles = n_particles;
  spec.validate();
  return spec;
}

double KernelSpec::cutoff() const { return std::pow(static_cast<double>(n_particles), -delta); }

void KernelSpec::validate() const {
  check_dim(dim);
  if (sign != 1 && sign != -1) throw ConfigError("kernel sign must be +1 or -1");
  if (!(c_d > 0.0)) throw ConfigError("kernel normalization c_d must be positive");
  if (family != KernelFamily::exact) {
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("kernel delta must lie in (0, 1)");
    if (n_particles < 2) throw ConfigError("kernel n_particles must be >= 2");
  }
  if (family == KernelFamily::hlp && dim != 3) throw ConfigError("hlp kernel is only defined for d = 3");
}

// --- mollifier -------------------------------------------------------------------

MollifierProfile::MollifierProfile(int dim, double norm, bool radial, const Vec& axes)
    : dim_(dim), norm_(norm), mass_scale_(unit_sphere_area(dim) * norm), radial_(radial), axes_(axes) {}

MollifierProfile MollifierProfile::bump(int dim) {
  check_dim(dim);
  // integral_0^1 r^{d-1} (1 - r^2)^3 dr = B(d/2, 4) / 2
  const double radial_integral = 0.5 * std::beta(0.5 * dim, 4.0);
  return MollifierProfile(dim, 1.0 / (unit_sphere_area(dim) * radial_integral), true, {1.0, 1.0, 1.0});
}

MollifierProfile MollifierProfile::ellipsoidal_bump(int dim, const Vec& semi_axes) {
  MollifierProfile base = bump(dim);
  double volume_factor = 1.0;
  bool radial = true;
  for (int k = 0; k < dim; ++k) {
    if (!(semi_axes[k] > 0.0 && semi_axes[k] <= 1.0))
      throw ConfigError("ellipsoidal mollifier semi-axes must lie in (0, 1]");
    volume_factor *= semi_axes[k];
    if (semi_axes[k] != semi_axes[0]) radial = false;
  }
  if (radial && semi_axes[0] != 1.0) radial = false;  // a shrunken ball is not the unit-support profile
  Vec axes{1.0, 1.0, 1.0};
  for (int k = 0; k < dim; ++k) axes[k] = semi_axes[k];
  return MollifierProfile(dim, base.norm_ / volume_factor, radial, axes);
}

double MollifierProfile::radial_value(double r) const {
  if (r >= 1.0) return 0.0;
  const double u = 1.0 - r * r;
  return norm_ * u * u * u;
}

double MollifierProfile::value(const Vec& x) const {
  double r2 = 0.0;
  for (int k = 0; k < dim_; ++k) {
    const double y = x[k] / axes_[k];
    r2 += y * y;
  }
  if (r2 >= 1.0) return 0.0;
  const double u = 1.0 - r2;
  return norm_ * u * u * u;
}

double MollifierProfile::radial_mass(double r) const {
  if (!radial_) throw ConfigError("radial mass requested for a non-radial mollifier");
  if (r <= 0.0) return 0.0;
  if (r >= 1.0) return 1.0;
  // |S^{d-1}| c_psi * sum_k C(3,k) (-1)^k r^{d+2k} / (d+2k)
  const double d = dim_;
  const double r2 = r * r;
  const double rd = dim_ == 1 ? r : (dim_ == 2 ? r2 : r2 * r);
  const double poly = 1.0 / d - 3.0 * r2 / (d + 2.0) + 3.0 * r2 * r2 / (d + 4.0) - r2 * r2 * r2 / (d + 6.0);
  return std::min(1.0, mass_scale_ * rd * poly);
}

// --- kernels ---------------------------------------------------------------------

Vec coulomb_kernel(const Vec& x, const KernelSpec& spec) {
  const double r2 = norm2(x, spec.dim);
  if (r2 == 0.0) throw DomainError("exact Coulomb kernel is singular at x = 0");
  return detail::coulomb_value(x, r2, spec.strength(), spec.dim);
}

Vec kernel_lp(const Vec& x, const KernelSpec& spec) {
  const double r2 = norm2(x, spec.dim);
  const double cutoff = spec.cutoff();
  if (r2 > 0.0 && std::sqrt(r2) >= cutoff) return detail::coulomb_value(x, r2, spec.strength(), spec.dim);
  const double scale = spec.strength() * std::pow(static_cast<double>(spec.n_particles), spec.dim * spec.delta);
  return {x[0] * scale, x[1] * scale, x[2] * scale};
}

Vec kernel_hlp(const Vec& x, const KernelSpec& spec, const MollifierProfile& profile) {
  if (spec.dim != 3) throw ConfigError("hlp kernel is only defined for d = 3");
  if (!profile.is_radial()) throw ConfigError("hlp kernel requires a radial mollifier (shell-theorem reduction)");
  const double r2 = norm2(x, spec.dim);
  if (r2 == 0.0) return {0.0, 0.0, 0.0};
  const Vec outer = detail::coulomb_value(x, r2, spec.strength(), spec.dim);
  const double s = std::sqrt(r2) / spec.cutoff();
  if (s >= 1.0) return outer;
  return scaled(outer, profile.radial_mass(s));
}

double lipschitz_constant(const KernelSpec& spec) {
  check_dim(spec.dim);
  return kLipschitzRatio[spec.dim] * spec.c_d;
}

double lipschitz_majorant(const Vec& x, const KernelSpec& spec) {
  if (spec.family != KernelFamily::lp) throw ConfigError("lipschitz majorant is defined for the lp family");
  const double r = norm(x, spec.dim);
  if (r == 0.0) return 0.0;
  const double c = lipschitz_constant(spec);
  const double cutoff = spec.cutoff();
  if (r >= cutoff) return c / std::pow(r, spec.dim);
  return c * std::pow(static_cast<double>(spec.n_particles), spec.dim * spec.delta);
}

double lp_kernel_sup(const KernelSpec& spec) {
  return spec.c_d * std::pow(static_cast<double>(spec.n_particles), (spec.dim - 1) * spec.delta);
}

namespace {

// max over s in (0, 1] of m(s) / s^2 (golden-section refine of a coarse scan)
double hlp_profile_peak(const MollifierProfile& profile) {
  auto g = [&](double s) { return profile.radial_mass(s) / (s * s); };
  double best_s = 1.0;
  double best = g(1.0);
  for (int i = 1; i < 1000; ++i) {
    const double s = i / 1000.0;
    if (g(s) > best) {
      best = g(s);
      best_s = s;
    }
  }
  double lo = std::max(1e-6, best_s - 1e-3);
  double hi = std::min(1.0, best_s + 1e-3);
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 80; ++it) {
    const double a = hi - phi * (hi - lo);
    const double b = lo + phi * (hi - lo);
    if (g(a) > g(b))
      hi = b;
    else
      lo = a;
  }
  return std::max(best, g(0.5 * (lo + hi)));
}

}  // namespace

double hlp_kernel_sup(const KernelSpec& spec, const MollifierProfile& profile) {
  const double cutoff = spec.cutoff();
  return spec.c_d * hlp_profile_peak(profile) / (cutoff * cutoff);
}

double sample_lipschitz_ratio(const KernelSpec& spec, std::size_t samples, std::uint64_t seed) {
  if (spec.family != KernelFamily::lp) throw ConfigError("lipschitz calibration is defined for the lp family");
  const int d = spec.dim;
  const double cutoff = spec.cutoff();
  const double inner = std::pow(cutoff, -static_cast<double>(d));
  CounterRng rng({seed, StreamLabel::calibration, 0, 0});

  auto random_direction = [&]() {
    Vec u{0.0, 0.0, 0.0};
    if (d == 1) {
      u[0] = rng.uniform() < 0.5 ? -1.0 : 1.0;
      return u;
    }
    double n2 = 0.0;
    do {
      for (int k = 0; k < d; ++k) u[k] = rng.normal();
      n2 = norm2(u, d);
    } while (n2 == 0.0);
    return scaled(u, 1.0 / std::sqrt(n2));
  };

  double worst = 0.0;
  for (std::size_t n = 0; n < samples; ++n) {
    // |x| / cutoff: half log-uniform on [1e-3, 20], half uniform on [0, 5]
    const double a = (n % 2 == 0) ? std::exp(std::log(1e-3) + rng.uniform() * std::log(2e4)) : 5.0 * rng.uniform();
    const Vec dir = random_direction();
    const Vec x = scaled(dir, a * cutoff);
    // xi: uniform in the ball of radius 2 cutoff, or pointed towards the origin
    Vec xi_dir = random_direction();
    if (n % 3 == 0) xi_dir = -dir;
    const double xi_len = 2.0 * cutoff * std::pow(rng.uniform(), 1.0 / d);
    const Vec xi = scaled(xi_dir, xi_len);
    const double r = norm(x, d);
    if (r == 0.0 || xi_len == 0.0) continue;
    const Vec diff = kernel_lp(x, spec) - kernel_lp(x + xi, spec);
    const double shape = r >= cutoff ? 1.0 / std::pow(r, d) : inner;
    worst = std::max(worst, norm(diff, d) / (xi_len * shape));
  }
  return worst;
}

// --- bound evaluator ---------------------------------------------------------------

Kernel::Kernel(const KernelSpec& spec)
    : spec_(spec), profile_(MollifierProfile::bump(spec.dim)), strength_(spec.strength()) {
  spec_.validate();
  if (spec.family == KernelFamily::exact) {
    cutoff_ = 0.0;
    inner_scale_ = 0.0;
  } else {
    cutoff_ = spec.cutoff();
    inner_scale_ = std::pow(static_cast<double>(spec.n_particles), spec.dim * spec.delta);
  }
  cutoff2_ = cutoff_ * cutoff_;
}

Vec Kernel::operator()(const Vec& x) const {
  switch (spec_.family) {
    case KernelFamily::exact:
      return coulomb_kernel(x, spec_);
    case KernelFamily::lp:
      return detail::lp_value(x, spec_.dim, strength_, cutoff_, inner_scale_);
    case KernelFamily::hlp:
      return detail::hlp_value(x, strength_, cutoff_, profile_);
  }
  return {0.0, 0.0, 0.0};
}

Vec Kernel::far_field(const Vec& x) const {
  return detail::coulomb_value(x, norm2(x, spec_.dim), strength_, spec_.dim);
}

double Kernel::sup_norm() const {
  switch (spec_.family) {
    case KernelFamily::exact:
      return std::numeric_limits<double>::infinity();
    case KernelFamily::lp:
      return lp_kernel_sup(spec_);
    case KernelFamily::hlp:
      return hlp_kernel_sup(spec_, profile_);
  }
  return 0.0;
}

}  // namespace vpfp
