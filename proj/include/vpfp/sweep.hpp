#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vpfp/config.hpp"
#include "vpfp/density.hpp"
#include "vpfp/phase_state.hpp"

namespace vpfp {

inline constexpr int kCsvSchemaVersion = 1;
/// CKP audit tolerance absorbing histogram-estimator bias.
inline constexpr double kCkpTolerance = 0.05;

/// One CSV row. A failed cell has status "failed", no time, step or values, and the
/// diagnostic in `note`.
struct SweepRow {
  std::size_t n = 0;
  double delta = 0.0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> t;
  std::optional<std::size_t> step;
  std::string status = "ok";
  std::vector<std::optional<double>> values;  ///< one per metric column
  std::string note;
};

struct SweepTable {
  std::vector<Metric> metrics;
  std::vector<SweepRow> rows;
};

/// Header: schema_version,N,delta,sigma,seed,t,step,status,<metrics>,note.
std::string csv_header(const std::vector<Metric>& metrics);
std::string format_row(const SweepRow& row);
std::string to_csv(const SweepTable& table);

class CsvError : public std::runtime_error {
 public:
  CsvError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

SweepTable parse_csv(const std::string& text);
SweepTable read_csv(const std::string& path);

/// Phase-space histograms of two ensembles on a shared box (cells per axis), smoothed.
std::pair<DensityGrid, DensityGrid> phase_histograms(const PhaseState& p, const PhaseState& q,
                                                     const PhaseGridOptions& options);

/// Runs every (N, sigma, seed) cell in that order, appending rows to <out>/sweep.csv by
/// atomic rewrite after each cell, and finally writes <out>/summary.json and <out>/config.json.
SweepTable run_sweep(const ExperimentConfig& config);

/// Aggregates one or more tables into the JSON summary text.
std::string summarize(const std::vector<SweepTable>& tables);
/// Reads CSV files and summarizes them.
std::string report(const std::vector<std::string>& csv_paths);

/// Writes `contents` to path via a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& contents);

/// Shortest round-trip decimal form.
std::string format_number(double value);

}  // namespace vpfp
