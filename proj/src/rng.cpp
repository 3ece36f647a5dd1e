#include "semivl/rng.hpp"

namespace semivl {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, Stream stream, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(salt),
                    static_cast<std::uint32_t>(salt >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

Rng::Rng(std::uint64_t seed, Stream stream, std::uint64_t salt) : engine_(mix_seed(seed, stream, salt)) {}

}  // namespace semivl
