#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vpfp/dynamics.hpp"
#include "vpfp/errors.hpp"
#include "vpfp/initial_data.hpp"
#include "vpfp/kernels.hpp"

namespace vpfp {

/// Which theorem's hypotheses the config is checked against; `free` checks only well-formedness.
enum class TheoremMode { free, thm1, thm2, thm3 };

std::string_view to_string(TheoremMode mode);
TheoremMode parse_theorem_mode(std::string_view name);

enum class Metric { deviation, sup_deviation, exceedance, w2, h1, l1, ckp, pde_l1 };

std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view name);

/// Every violation found while parsing, one message each, prefixed by the JSON pointer of
/// the offending field.
class ConfigViolations : public ConfigError {
 public:
  explicit ConfigViolations(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  std::vector<std::string> violations_;
};

struct PhaseGridOptions {
  std::size_t cells = 12;  ///< per phase-space axis
  double bandwidth_cells = 1.0;
};

struct ExperimentConfig {
  TheoremMode mode = TheoremMode::free;
  int dim = 3;
  std::vector<std::size_t> n{256};
  double delta = 0.25;
  std::vector<double> sigma{0.5};
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  KernelFamily family = KernelFamily::lp;
  int sign = +1;
  InitialDensitySpec initial;
  std::optional<double> dt;  ///< empty: default_time_step per N
  double t_end = 1.0;
  std::vector<double> output_times;  ///< empty: {0, T/4, T/2, 3T/4, T}
  std::vector<std::uint64_t> seeds{1};
  std::vector<Metric> metrics{Metric::deviation, Metric::sup_deviation, Metric::exceedance};
  std::optional<double> threshold_exponent;  ///< empty: lambda2 in thm2 mode, delta otherwise
  ForcePath force_path = ForcePath::direct;
  std::size_t mean_field_copies = 0;
  std::size_t refresh_every = 1;
  MeanFieldOptions mean_field;
  PhaseGridOptions phase_grid;
  bool snapshots = false;
  std::string out = "results";
  int threads = 0;  ///< 0: runtime default

  /// Exceedance threshold N^{-exponent}.
  double threshold(std::size_t n_particles) const;
  double effective_threshold_exponent() const;
  KernelSpec kernel_spec(std::size_t n_particles) const;
};

/// Parses and validates; throws ConfigViolations listing every problem.
ExperimentConfig parse_config(std::string_view json_text);

/// Applies "dotted.path=json_value" overrides to the JSON text before parsing; a value that
/// is not valid JSON is taken as a string.
std::string apply_overrides(std::string_view json_text, const std::vector<std::string>& overrides);

/// Canonical JSON form (all fields, defaults filled in).
std::string to_json(const ExperimentConfig& config);

/// Thread count after the VPFP_THREADS override; 0 means runtime default.
int resolve_threads(int configured);

}  // namespace vpfp
