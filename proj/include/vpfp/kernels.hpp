#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "vpfp/vec.hpp"

namespace vpfp {

enum class KernelFamily { exact, lp, hlp };

std::string_view to_string(KernelFamily family);
KernelFamily parse_kernel_family(std::string_view name);

/// Surface area |S^{d-1}| of the unit sphere in R^d (|S^0| = 2).
double unit_sphere_area(int dim);

/// Interaction kernel k(x) = sign * c_d * x / |x|^d and its N-dependent regularizations.
struct KernelSpec {
  int sign = +1;  ///< +1 repulsive, -1 attractive
  int dim = 3;
  double c_d = 0.0;  ///< normalization; see make()
  KernelFamily family = KernelFamily::lp;
  double delta = 0.25;               ///< cutoff exponent, cutoff radius N^{-delta}
  std::int64_t n_particles = 2;      ///< the N entering N^{-delta}

  /// Spec with the Poisson normalization c_d = 1 / |S^{d-1}|, i.e. k = -sign grad W, -Laplace W = delta_0.
  static KernelSpec make(int dim, KernelFamily family, double delta, std::int64_t n_particles, int sign = +1);

  double cutoff() const;
  double strength() const { return sign * c_d; }

  /// Throws ConfigError on an inconsistent spec.
  void validate() const;
};

/// Mollifier psi used by the hlp family. The default profile is the radial C^2 bump
/// psi(x) = c_psi (1 - |x|^2)^3 on the unit ball. An ellipsoidal variant exists to
/// represent non-radial input, which the hlp kernel rejects.
class MollifierProfile {
 public:
  static MollifierProfile bump(int dim);
  static MollifierProfile ellipsoidal_bump(int dim, const Vec& semi_axes);

  int dim() const { return dim_; }
  bool is_radial() const { return radial_; }
  /// c_psi for the radial bump (already including the 1/prod(axes) factor for the ellipsoid).
  double normalization() const { return norm_; }

  double value(const Vec& x) const;
  /// Radial profile psi(r) for radial profiles.
  double radial_value(double r) const;
  /// m(r) = integral of psi over the ball of radius r. Requires a radial profile.
  double radial_mass(double r) const;

 private:
  MollifierProfile(int dim, double norm, bool radial, const Vec& axes);

  int dim_;
  double norm_;
  double mass_scale_;  // |S^{d-1}| c_psi
  bool radial_;
  Vec axes_;
};

/// k(x) = sign c_d x / |x|^d. Throws DomainError at x = 0.
Vec coulomb_kernel(const Vec& x, const KernelSpec& spec);

/// Piecewise-linear regularization: exact outside N^{-delta}, sign c_d x N^{d delta} inside.
Vec kernel_lp(const Vec& x, const KernelSpec& spec);

/// Mollified kernel k * psi_delta^N evaluated via the shell theorem; d = 3 only.
Vec kernel_hlp(const Vec& x, const KernelSpec& spec, const MollifierProfile& profile);

/// l^N(x) from the kernel-difference lemma, with the stored constant C(d).
double lipschitz_majorant(const Vec& x, const KernelSpec& spec);

/// Stored C(d) for the lp family (scales with c_d, independent of N and delta).
double lipschitz_constant(const KernelSpec& spec);

/// sup |k^N| for the lp family: c_d N^{(d-1) delta}.
double lp_kernel_sup(const KernelSpec& spec);

/// sup |k^N| for the hlp family, c_d N^{2 delta} * max_s m(s)/s^2.
double hlp_kernel_sup(const KernelSpec& spec, const MollifierProfile& profile);

/// Largest observed |k^N(x) - k^N(x + xi)| / (|xi| * shape(x)) over `samples` random pairs
/// with |xi| < 2 N^{-delta}, where shape is l^N / C(d). Used to calibrate C(d).
double sample_lipschitz_ratio(const KernelSpec& spec, std::size_t samples, std::uint64_t seed);

/// Evaluator bound to one spec; dispatches on the family and caches the cutoff constants.
class Kernel {
 public:
  explicit Kernel(const KernelSpec& spec);

  const KernelSpec& spec() const { return spec_; }
  const MollifierProfile& profile() const { return profile_; }

  /// Regularized families return 0 at the origin; the exact family throws there.
  Vec operator()(const Vec& x) const;

  /// Exact Coulomb value for |x| known to be at least the cutoff (no branch).
  Vec far_field(const Vec& x) const;

  double cutoff() const { return cutoff_; }
  /// Upper bound on |k^N| (infinity for the exact family).
  double sup_norm() const;

 private:
  KernelSpec spec_;
  MollifierProfile profile_;
  double strength_;
  double cutoff_;
  double cutoff2_;
  double inner_scale_;  // N^{d delta}
};

}  // namespace vpfp
