#pragma once

#include <array>
#include <cstdint>

namespace ebpolicy {

/// Philox4x32-10 block function (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key);

/// Domain tags keep independent uses of one master seed apart.
enum class Stream : std::uint32_t {
  coupling = 1,
  dgp_prior = 2,
  dgp_noise = 3,
  dgp_sigma = 4,
  restart = 5,
  test = 99,
};

/// Counter-based generator addressed by (seed, stream, a, b).
///
/// Every (seed, stream, a, b) tuple names an independent sequence, so draws
/// for replication a and policy b never depend on the order in which other
/// replications or policies are evaluated.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, Stream stream, std::uint64_t a, std::uint64_t b = 0);

  std::uint32_t next_u32();
  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform();
  double normal();
  double exponential();

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> ctr_;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ebpolicy
