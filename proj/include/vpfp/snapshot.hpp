#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "vpfp/density.hpp"
#include "vpfp/phase_state.hpp"
#include "vpfp/vp1d.hpp"

namespace vpfp {

/// Layout (little-endian): "VPFP", u32 version, u8 kind, u32 d, u64 counts (N for a phase
/// state, one per axis for grids), f64 time, f64 payload, u32 CRC-32 of the payload bytes.
inline constexpr std::uint32_t kSnapshotVersion = 1;

enum class SnapshotKind : std::uint8_t { phase_state = 0, density_grid = 1, kinetic_grid = 2 };

class SnapshotError : public std::runtime_error {
 public:
  enum class Code { bad_magic, unsupported_version, unknown_kind, crc_mismatch, io };

  SnapshotError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

using Snapshot = std::variant<PhaseState, DensityGrid, KineticGrid1D>;

std::vector<std::uint8_t> encode_snapshot(const Snapshot& snapshot);
Snapshot decode_snapshot(std::span<const std::uint8_t> bytes);

/// Writes to a temporary file next to `path` and renames it into place.
void write_snapshot(const std::string& path, const Snapshot& snapshot);
Snapshot read_snapshot(const std::string& path);

}  // namespace vpfp
