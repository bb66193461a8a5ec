#pragma once

/*
 * Counter-based pseudo-random numbers.
 *
 * Every stream is a pure function of (key, counter), so any draw can be
 * produced at any time by any thread without shared state. Simulation code
 * derives one key per (seed, replication, purpose) and indexes draws by
 * position; results are therefore identical no matter how work is scheduled.
 */

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace didkit {

class CounterRng {
 public:
  CounterRng() = default;
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  // Mixes a list of words (seed, replication index, purpose tag, ...) into a
  // stream key. Order matters.
  static CounterRng keyed(std::initializer_list<std::uint64_t> words) {
    std::uint64_t k = 0x6a09e667f3bcc908ull;
    for (std::uint64_t w : words) k = mix(k + 0x9e3779b97f4a7c15ull + w);
    return CounterRng(k);
  }

  // A child stream, independent of this one for distinct words.
  CounterRng derive(std::uint64_t word) const {
    return CounterRng(mix(key_ + 0x9e3779b97f4a7c15ull + word));
  }

  std::uint64_t key() const { return key_; }

  // Random access: the i-th 64-bit word of the stream.
  std::uint64_t word_at(std::uint64_t i) const {
    return mix(key_ ^ (0x9e3779b97f4a7c15ull * (i + 1)));
  }

  // The i-th uniform draw on [0, 1).
  double uniform_at(std::uint64_t i) const {
    return static_cast<double>(word_at(i) >> 11) * 0x1.0p-53;
  }

  // The i-th standard normal draw. Uses Box-Muller on words (2i, 2i+1); the
  // first uniform is shifted into (0, 1] so the log never sees zero.
  double normal_at(std::uint64_t i) const {
    const double u1 =
        (static_cast<double>(word_at(2 * i) >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform_at(2 * i + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // Sequential interface over the same stream.
  std::uint64_t next_word() { return word_at(counter_++); }
  double next_uniform() {
    return static_cast<double>(next_word() >> 11) * 0x1.0p-53;
  }

  // Uniform integer on [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
    std::uint64_t x;
    do {
      x = next_word();
    } while (x >= limit);
    return x % n;
  }

 private:
  // splitmix64 finalizer; full-period bijection on 64-bit words.
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

// Seed used whenever the caller does not supply one. Fixed so that repeated
// runs are reproducible; never derived from the clock.
inline constexpr std::uint64_t kDefaultSeed = 42;

}  // namespace didkit
