// Shared plumbing: error type, counter-based RNG, small helpers.
#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace tauflow {

enum class ErrorCode {
  InvalidArgument,
  Shape,
  Numeric,
  Io,
  Format,
  Config,
  Internal,
};

const char* error_code_name(ErrorCode c);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

// Counter-based PRNG built on splitmix64. Stateless draws keyed by
// (seed, stream, counter) make every consumer order-independent, which is
// what keeps training runs reproducible regardless of call interleaving.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
public:
  Rng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}

  uint64_t next_u64() {
    uint64_t mixed = splitmix64(seed_ ^ splitmix64(stream_ * 0x9e3779b97f4a7c15ULL + 0x85ebca6bULL));
    return splitmix64(mixed + counter_++);
  }

  // uniform in [0, 1)
  double next_double() {
    return (next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform in [lo, hi)
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // standard normal, Box-Muller
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  uint64_t next_below(uint64_t n) {
    return n == 0 ? 0 : next_u64() % n;
  }

  uint64_t counter() const { return counter_; }
  void set_counter(uint64_t c) { counter_ = c; }

private:
  uint64_t seed_;
  uint64_t stream_;
  uint64_t counter_ = 0;
};

std::string format_double(double v, int precision = 6);

}  // namespace tauflow
