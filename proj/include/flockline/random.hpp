#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace flockline {

// One generator per replica. Every draw is one 64-bit word from the engine, so
// the number of words consumed per operation is part of the reproducibility
// contract: holding time (1), particle selection (1), jump size (0 or 1).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  // 53-bit integer in [0, 2^53).
  std::uint64_t bits53() { return bits() >> 11; }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(bits53()) * 0x1.0p-53; }

  // Uniform on the open interval (0, 1).
  double open_uniform() { return (static_cast<double>(bits() >> 12) + 0.5) * 0x1.0p-52; }

  double exponential(double rate) { return -std::log(open_uniform()) / rate; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// seed_i = base ^ splitmix64(i). Stream tags keep the initial-condition draws
// of a replica apart from its dynamics draws.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

enum class Stream : std::uint64_t {
  Dynamics = 0,
  Initial = 0x696e6974ULL,
  Auxiliary = 0x61757869ULL,
};

inline std::uint64_t stream_seed(std::uint64_t replica_seed, Stream s) {
  return s == Stream::Dynamics ? replica_seed : derive_seed(replica_seed, static_cast<std::uint64_t>(s));
}

}  // namespace flockline
