#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace trace {

// Seeded random source. Independent purposes draw from independent streams
// obtained with derive(), so adding draws to one stream never shifts another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }

  Rng derive(std::string_view purpose, std::uint64_t index = 0) const {
    std::uint64_t h = 1469598103934665603ull;
    for (char ch : purpose) h = (h ^ static_cast<unsigned char>(ch)) * 1099511628211ull;
    return Rng(mix(seed_ ^ mix(h + index)));
  }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Inclusive bounds.
  long uniform_int(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace trace
