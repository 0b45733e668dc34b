#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace multipivot {

  // Deterministic stream on top of std::mt19937_64. Values are derived from the
  // raw engine output rather than <random> distributions, whose algorithms are
  // implementation-defined, so streams can be replayed outside this library.
  class RandomStream {
  public:
    explicit RandomStream(std::uint64_t seed)
      : _engine(seed) {
    }

    // Uniform in [0, 1) from the top 53 bits.
    double uniform() {
      return static_cast<double>(_engine() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
      const auto v = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
      return v < n ? v : n - 1;
    }

  private:
    std::mt19937_64 _engine;
  };

  // splitmix64 finalizer.
  constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
    return mix64(seed ^ mix64(value));
  }

  constexpr std::uint64_t hash_string(std::uint64_t seed, std::string_view s) {
    // FNV-1a, then mixed with the seed.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return hash_combine(seed, h);
  }

}
