#include "ebpolicy/rng.hpp"

#include <cmath>
#include <numbers>

namespace ebpolicy {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

CounterRng::CounterRng(std::uint64_t seed, Stream stream, std::uint64_t a, std::uint64_t b)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      // Word 0 is the block counter (2^32 blocks per address); b and the
      // stream tag share word 1, a fills words 2 and 3.
      ctr_{0u, static_cast<std::uint32_t>(b) ^ (static_cast<std::uint32_t>(stream) << 24),
           static_cast<std::uint32_t>(a),
           static_cast<std::uint32_t>(a >> 32) ^ static_cast<std::uint32_t>(b >> 32) ^
               (static_cast<std::uint32_t>(stream) << 16)} {}

void CounterRng::refill() {
  block_ = philox4x32_10(ctr_, key_);
  ++ctr_[0];
  used_ = 0;
}

std::uint32_t CounterRng::next_u32() {
  if (used_ >= 4) refill();
  return block_[used_++];
}

double CounterRng::uniform() {
  const std::uint64_t hi = next_u32() >> 5;  // 27 bits
  const std::uint64_t lo = next_u32() >> 6;  // 26 bits
  const std::uint64_t bits = (hi << 26) | lo;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(t);
  have_spare_ = true;
  return r * std::cos(t);
}

double CounterRng::exponential() { return -std::log(uniform()); }

}  // namespace ebpolicy
