#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace uqdepth {

/// Deterministic counter-free random stream (splitmix64).
///
/// Sample-level work (augmentation draws, toy-data synthesis) goes through
/// this generator instead of <random> distributions so that a (seed, stream)
/// pair yields the same values on every platform and standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  /// Independent stream derived from (seed, stream index). Streams with
  /// different indices are decorrelated, so per-sample work is order-free.
  static Rng for_stream(uint64_t seed, uint64_t stream);

  uint64_t next_u64();

  /// Uniform in [0, 1).
  double uniform();

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform integer in {0, ..., n-1}; n must be positive.
  int uniform_int(int n);

 private:
  uint64_t state_;
};

/// splitmix64 finalizer, usable as a standalone 64-bit mixer.
uint64_t mix64(uint64_t x);

/// 64-bit FNV-1a of the bytes, as a 16-char lowercase hex string.
std::string fnv1a_hex(std::string_view bytes);

/// Worker-thread cap: UQDEPTH_THREADS when set and positive, else fallback.
int thread_cap_from_env(int fallback);

}  // namespace uqdepth
