#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "vpfp/density.hpp"
#include "vpfp/initial_data.hpp"
#include "vpfp/kernels.hpp"
#include "vpfp/phase_state.hpp"

namespace vpfp {

enum class ForcePath { direct, cell_list };

std::string_view to_string(ForcePath path);
ForcePath parse_force_path(std::string_view name);

struct SdeParams {
  double sigma = 0.0;  ///< diffusion strength sigma_N
  double dt = 1e-2;
  double t_end = 1.0;
  std::uint64_t seed = 0;
  ForcePath force_path = ForcePath::direct;

  /// ceil(t_end / dt); the last step is shortened to land on t_end.
  std::size_t steps() const;
  /// Length of step k (0-based).
  double step_length(std::size_t k) const;
  void validate() const;
};

/// Default dt = min(1e-2, 0.1 / sup|k^N|).
double default_time_step(const Kernel& kernel);

/// N(0, dt I_d) increment for particle i at step `step`, keyed by (seed, noise, i, step).
Vec brownian_increment(std::uint64_t seed, std::size_t i, std::size_t step, int dim, double dt);

/// Draws increments for a consumer and keeps a checksum of the keys it consumed, so that
/// two consumers can prove they saw the same (particle, step) sequence.
class NoiseSource {
 public:
  NoiseSource(std::uint64_t seed, int dim) : seed_(seed), dim_(dim) {}

  /// Fills out[(i - begin) * d + k] for particles begin <= i < end.
  void draw(std::size_t step, std::size_t begin, std::size_t end, double dt, std::span<double> out);

  std::uint64_t checksum() const { return checksum_; }
  std::uint64_t draws() const { return draws_; }

 private:
  std::uint64_t seed_;
  int dim_;
  std::uint64_t checksum_ = 0;
  std::uint64_t draws_ = 0;
};

/// a_i = 1/(N-1) sum_{j != i} k^N(x_i - x_j), N x d row-major. The direct path sums j in
/// index order; the cell-list path uses the regularized kernel on neighbouring cells and
/// the exact kernel elsewhere.
std::vector<double> pairwise_force(const PhaseState& state, const Kernel& kernel, ForcePath path = ForcePath::direct);

/// Midpoint-rule quadrature of sum_c k(p - y_c) rho_c at each query point (M x d).
/// Throws DomainError for a query outside the grid box enlarged twofold about its center.
std::vector<double> meanfield_force(std::span<const double> points, const DensityGrid& rho, const Kernel& kernel);

struct MeanFieldOptions {
  std::size_t cells = 32;        ///< cells per axis of the position grid
  double bandwidth_cells = 1.0;  ///< kde_smooth bandwidth
  bool quantize_edge = true;     ///< round the cell edge to 2^{k/16} so kernel transforms are reused
};

/// Self-consistent mean-field closure: histogram + smoothing of an ensemble, the field at
/// cell centers by zero-padded FFT convolution, and multilinear interpolation to particles.
/// Points outside the lattice of cell centers fall back to direct quadrature.
class MeanFieldSolver {
 public:
  MeanFieldSolver(const Kernel& kernel, MeanFieldOptions options = {});
  ~MeanFieldSolver();
  MeanFieldSolver(const MeanFieldSolver&) = delete;
  MeanFieldSolver& operator=(const MeanFieldSolver&) = delete;

  /// Rebuilds the density from `source` (M x d) on a cubic grid covering `source` and `cover`.
  void refresh(std::span<const double> source, std::span<const double> cover = {});

  /// Uses a prescribed density instead of an ensemble (geometry must be cubic with `cells` per axis).
  void set_density(const DensityGrid& rho);

  const DensityGrid& density() const { return density_; }
  /// Field component `axis` at cell centers.
  std::span<const double> cell_field(int axis) const;

  /// Field at each point (M x d).
  std::vector<double> evaluate(std::span<const double> points) const;

  std::size_t transforms_computed() const { return kernel_transforms_; }

 private:
  struct Impl;
  void compute_field();

  Kernel kernel_;
  MeanFieldOptions options_;
  DensityGrid density_;
  std::vector<std::vector<double>> field_;
  std::unique_ptr<Impl> impl_;
  std::size_t kernel_transforms_ = 0;
};

/// x' = x + v dt, v' = v + a dt + sqrt(2 sigma) dB, with dt = params.step_length(step).
/// Throws BlowUpError on a non-finite result.
PhaseState em_step(const PhaseState& state, std::span<const double> forces, const SdeParams& params,
                   std::span<const double> increments, std::size_t step);

struct CoupledConfig {
  std::size_t n = 256;
  KernelSpec kernel;  ///< n_particles is overwritten with n
  InitialDensitySpec initial;
  SdeParams sde;
  std::size_t mean_field_copies = 0;  ///< M; 0 means M = N
  std::size_t refresh_every = 1;
  MeanFieldOptions mean_field;
  std::vector<double> output_times;  ///< empty means {0, T/4, T/2, 3T/4, T}
  /// Drive Phi by the same mean-field force as Psi (coupling identity check).
  bool identical_dynamics = false;
};

struct DeviationRecord {
  std::size_t step;
  double t;
  double deviation;
};

struct CoupledRun {
  std::size_t n = 0;
  double delta = 0.0;
  double sigma = 0.0;
  KernelFamily family = KernelFamily::lp;
  std::uint64_t seed = 0;
  double dt = 0.0;

  std::vector<DeviationRecord> deviations;  ///< one per step, including t = 0
  std::vector<double> output_times;         ///< actual times of the snapshots
  std::vector<std::size_t> output_steps;
  std::vector<PhaseState> phi;  ///< snapshots at output times
  std::vector<PhaseState> psi;  ///< first N mean-field copies at output times
  std::vector<double> running_sup;  ///< running sup-deviation at output times
  std::vector<double> box_halfwidth;  ///< max |x| component of the union, at output times

  std::uint64_t phi_noise_checksum = 0;
  std::uint64_t psi_noise_checksum = 0;
  double max_clipped_mass = 0.0;
  bool clipped_flag = false;  ///< grid clipped more than 1e-6 of the ensemble mass

  double sup_deviation() const;
};

/// Evolves the interacting system and its mean-field copies from shared initial data and
/// shared Brownian increments, recording the coupling deviation at every step.
CoupledRun run_coupled(const CoupledConfig& config);

/// Interacting system alone; returns states at `output_times` (default as in CoupledConfig).
std::vector<PhaseState> run_particles(const CoupledConfig& config);

/// Acceleration at state positions at time t; writes N x d values.
using FieldFunction = std::function<void(const PhaseState& state, double t, std::span<double> accel)>;

/// Noiseless characteristics dx = v dt, dv = E(x, t) dt by explicit Euler; returns states at
/// the requested times (default {0, T/4, T/2, 3T/4, T}).
std::vector<PhaseState> characteristics_vp(const PhaseState& initial, const FieldFunction& field, double dt,
                                           double t_end, std::vector<double> output_times = {});

/// The five default checkpoints {0, T/4, T/2, 3T/4, T}.
std::vector<double> default_output_times(double t_end);

}  // namespace vpfp
