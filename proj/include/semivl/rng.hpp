#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace semivl {

/// Fixed labels for the independent random streams derived from one run seed.
enum class Stream : std::uint32_t {
  kGenerate = 1,
  kSplit = 2,
  kInit = 3,
  kNoise = 4,
  kShuffle = 5,
  kTestGenerate = 6,
};

/// Seeded engine for one labeled stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, Stream stream, std::uint64_t salt = 0);

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return normal_(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace semivl
