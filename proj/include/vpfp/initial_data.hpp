#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "vpfp/phase_state.hpp"
#include "vpfp/vec.hpp"

namespace vpfp {

enum class InitialKind {
  /// Gaussian positions, Gaussian velocities smoothly truncated to |v| < Q_v.
  gauss_x_truncgauss_v,
  /// (1 + |x/s_x|^2)^{-alpha} (1 + |v/s_v|^2)^{-beta}, normalized.
  polynomial_decay,
};

std::string_view to_string(InitialKind kind);
InitialKind parse_initial_kind(std::string_view name);

struct InitialDensitySpec {
  InitialKind kind = InitialKind::gauss_x_truncgauss_v;
  int dim = 3;
  double s_x = 1.0;
  double s_v = 1.0;
  double q_v = 4.0;    ///< velocity support bound (gauss_x_truncgauss_v)
  double alpha = 4.0;  ///< position decay exponent (polynomial_decay)
  double beta = 4.0;   ///< velocity decay exponent (polynomial_decay)
  double m0 = 4.0;     ///< velocity moment exponent; metadata checked against the decay

  void validate() const;
};

/// Normalized initial density f_0 with closed-form or quadrature normalization.
class InitialDensity {
 public:
  explicit InitialDensity(const InitialDensitySpec& spec);

  const InitialDensitySpec& spec() const { return spec_; }

  double operator()(const Vec& x, const Vec& v) const;

  /// Position marginal rho_0(x) and velocity marginal.
  double position_marginal(const Vec& x) const;
  double velocity_marginal(const Vec& v) const;

  /// grad_{x,v} log f_0; returns (grad_x, grad_v). Only finite inside the support.
  std::pair<Vec, Vec> grad_log(const Vec& x, const Vec& v) const;

  /// Particle i is drawn from the stream (seed, initial, index_offset + i).
  PhaseState sample(std::size_t n, std::uint64_t seed, std::uint64_t index_offset = 0) const;

  /// Maximum rejection attempts per velocity draw before SamplingError.
  static constexpr int kRetryBudget = 10000;

 private:
  InitialDensitySpec spec_;
  double x_norm_ = 1.0;
  double v_norm_ = 1.0;
};

PhaseState sample_initial(const InitialDensitySpec& spec, std::size_t n, std::uint64_t seed);

double density_eval(const InitialDensitySpec& spec, const Vec& x, const Vec& v);

}  // namespace vpfp
