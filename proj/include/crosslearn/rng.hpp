#pragma once

#include <cstdint>
#include <random>

namespace crosslearn {

/// Seeded random stream. Identical (seed, stream id) pairs replay identical
/// draw sequences; distinct stream ids give independent sequences.
///
/// A stream has a single owner. Copying duplicates the state, so the copy
/// replays the same future draws as the original.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    std::uniform_int_distribution<std::uint64_t> dist(0, n - 1);
    return dist(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  static std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream_id),
                      static_cast<std::uint32_t>(stream_id >> 32)};
    return std::mt19937_64(seq);
  }

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
};

// splitmix64 finalizer; used for counter-based draws that environments
// evaluate lazily at (round, arm, context) without storing a tensor.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr double counter_uniform(std::uint64_t key, std::uint64_t a, std::uint64_t b,
                                 std::uint64_t c) {
  std::uint64_t h = mix64(key ^ mix64(a ^ mix64(b ^ mix64(c))));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace crosslearn
