#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace vpfp {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al., Random123).
PhiloxCounter philox4x32(PhiloxCounter counter, PhiloxKey key);

/// Stream purposes. Distinct labels never share random numbers for the same seed.
enum class StreamLabel : std::uint32_t {
  initial = 1,
  noise = 2,
  projections = 3,
  lln = 4,
  calibration = 5,
  test = 6,
};

/// Identifies one independent random stream: (seed, label, index, step).
struct StreamKey {
  std::uint64_t seed = 0;
  StreamLabel label = StreamLabel::test;
  std::uint64_t index = 0;
  std::uint64_t step = 0;
};

/// Maps 64 random bits to a double in the open interval (0, 1).
inline double to_open_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

/// Uniform random bit generator over a counter-based stream. Every key yields the
/// same sequence on every platform, independent of how many other streams exist.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(StreamKey key);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform double in (0, 1).
  double uniform() { return to_open_unit((*this)()); }

  /// Standard normal via Box-Muller; caches the second variate.
  double normal();

 private:
  void refill();

  PhiloxKey key_{};
  std::uint32_t label_ = 0;
  std::uint32_t index_ = 0;
  std::uint64_t step_ = 0;
  std::uint32_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace vpfp
