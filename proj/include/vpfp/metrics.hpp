#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "vpfp/density.hpp"
#include "vpfp/kernels.hpp"
#include "vpfp/phase_state.hpp"

namespace vpfp {

/// sqrt(log n) max_i |x_i - xbar_i| + max_i |v_i - vbar_i| with the Euclidean norm per
/// particle, over the first phi.n particles of both states. `n` only enters the log factor.
double coupling_deviation(const PhaseState& phi, const PhaseState& psi, double n);

/// Fraction of sup-deviations strictly above the threshold.
double exceedance_probability(std::span<const double> sup_deviations, double threshold);

/// Largest atom count accepted by wasserstein2_exact.
inline constexpr std::size_t kExactW2Max = 4096;

/// Exact W2 between two equal-weight atom sets of equal size (n x dim, row-major),
/// by a shortest-augmenting-path assignment solve.
double wasserstein2_exact(std::span<const double> mu, std::span<const double> nu, int dim);

/// Minimal-cost permutation for the squared Euclidean cost; assignment[i] = j.
std::vector<std::size_t> optimal_assignment(std::span<const double> mu, std::span<const double> nu, int dim);

struct SlicedW2 {
  double value = 0.0;      ///< sqrt(mean over directions of W2_1d^2)
  double std_error = 0.0;  ///< standard error of `value` (delta method)
  double corrected = 0.0;  ///< value * sqrt(dim), matches W2 for isotropic displacements
};

/// Sliced W2 over `projections` random unit directions drawn from (seed, projections).
/// Unequal atom counts are compared through their quantile functions.
SlicedW2 wasserstein2_sliced(std::span<const double> mu, std::span<const double> nu, int dim,
                             std::size_t projections, std::uint64_t seed);

/// Pseudo-count added to every cell of the second argument of kl_divergence.
inline constexpr double kKlPseudoCount = 1e-12;

/// sum_c p_c log(p_c / q_c) over cells with p_c > 0, after padding q by `pseudo_count` per
/// cell and renormalizing it to its original total.
double kl_divergence(const DensityGrid& p, const DensityGrid& q, double pseudo_count = kKlPseudoCount);

double l1_distance(const DensityGrid& p, const DensityGrid& q);

/// 2 k h_k - l1^2; nonnegative whenever the Pinsker bound holds.
double ckp_slack(double l1, double h_k, int k);

struct LlnResult {
  double statistic = 0.0;            ///< mean over repetitions of sup^{2m}
  std::vector<double> sup_per_rep;   ///< sup_i |k^N * rho_N(Y_i) - k^N * rho(Y_i)|
};

/// Samples N atoms at cell centers from the law `rho` (cubic grid) and compares the
/// empirical field (1/N) sum_{j != i} k^N(Y_i - Y_j) with k^N * rho at the samples.
/// The kernel spec's n_particles is set to n.
LlnResult lln_fluctuation(const DensityGrid& rho, KernelSpec spec, int m, std::size_t n, std::size_t repetitions,
                          std::uint64_t seed);

/// sup over the given sample cells of the same difference, for one fixed ensemble.
double lln_sup(const DensityGrid& rho, const Kernel& kernel, std::span<const std::size_t> sample_cells);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double slope_ci_low = 0.0;  ///< 95% Student-t interval
  double slope_ci_high = 0.0;
  std::size_t points = 0;
};

/// Least squares of log(value) on log(N). Needs at least 3 distinct N and positive values.
RateFit fit_rate(std::span<const std::pair<double, double>> pairs);

/// Linear-interpolation quantile (type 7) of an unsorted sample.
double quantile(std::vector<double> values, double q);

}  // namespace vpfp
