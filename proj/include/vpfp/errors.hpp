#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vpfp {

/// Evaluation outside a function's domain (e.g. the exact kernel at the origin).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Rejection sampler ran out of its retry budget.
class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite state produced by the integrator.
class BlowUpError : public std::runtime_error {
 public:
  BlowUpError(std::size_t step, std::size_t particle, double accel_norm)
      : std::runtime_error("integrator blow-up at step " + std::to_string(step) + ", particle " +
                           std::to_string(particle) + ", |a| = " + std::to_string(accel_norm)),
        step_(step),
        particle_(particle),
        accel_norm_(accel_norm) {}

  std::size_t step() const noexcept { return step_; }
  std::size_t particle() const noexcept { return particle_; }
  double accel_norm() const noexcept { return accel_norm_; }

 private:
  std::size_t step_;
  std::size_t particle_;
  double accel_norm_;
};

}  // namespace vpfp
