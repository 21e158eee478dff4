#include "uqdepth/common.hpp"

#include <cstdlib>
#include <stdexcept>

namespace uqdepth {

uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Rng Rng::for_stream(uint64_t seed, uint64_t stream) {
  return Rng(mix64(mix64(seed) ^ mix64(stream + 0x6A09E667F3BCC909ull)));
}

uint64_t Rng::next_u64() {
  state_ += 0x9E3779B97F4A7C15ull;
  uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  // 53 mantissa bits -> exactly representable double in [0, 1)
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int Rng::uniform_int(int n) {
  if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
  return static_cast<int>(uniform() * n);
}

std::string fnv1a_hex(std::string_view bytes) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

int thread_cap_from_env(int fallback) {
  const char* env = std::getenv("UQDEPTH_THREADS");
  if (env == nullptr) return fallback;
  char* end = nullptr;
  long v = std::strtol(env, &end, 10);
  if (end == env || v <= 0) return fallback;
  return static_cast<int>(v);
}

}  // namespace uqdepth
