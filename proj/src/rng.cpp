#include "vpfp/rng.hpp"

#include <cmath>
#include <numbers>

namespace vpfp {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline PhiloxCounter philox_round(const PhiloxCounter& c, const PhiloxKey& k) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
  return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
          static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
}

}  // namespace

PhiloxCounter philox4x32(PhiloxCounter counter, PhiloxKey key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    counter = philox_round(counter, key);
  }
  return counter;
}

CounterRng::CounterRng(StreamKey key)
    : key_{static_cast<std::uint32_t>(key.seed), static_cast<std::uint32_t>(key.seed >> 32)},
      label_(static_cast<std::uint32_t>(key.label)),
      index_(static_cast<std::uint32_t>(key.index)),
      step_(key.step) {}

void CounterRng::refill() {
  // Counter layout: word 0 = label (high byte) | block (low 24 bits), word 1 = index,
  // words 2-3 = step.
  const PhiloxCounter ctr{(label_ << 24) | (block_ & 0x00FFFFFFu), index_,
                          static_cast<std::uint32_t>(step_), static_cast<std::uint32_t>(step_ >> 32)};
  const PhiloxCounter out = philox4x32(ctr, key_);
  buffer_[0] = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
  buffer_[1] = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
  buffered_ = 2;
  ++block_;
}

CounterRng::result_type CounterRng::operator()() {
  if (buffered_ == 0) refill();
  return buffer_[2 - buffered_--];
}

double CounterRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

}  // namespace vpfp
