#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace wcmtl {

// Seeded random source with explicit draw accounting.
//
// Only the raw 64-bit engine output is taken from the standard library; the
// derived draws (uniform reals, bounded integers, normals, categorical) are
// computed here so sequences are identical across standard library vendors.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next() { return engine_(); }

  /// Uniform real in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  /// Standard normal via Box-Muller; consumes two uniforms.
  double normal();

  /// Inverse-CDF draw from nonnegative weights (need not be normalized).
  /// Consumes exactly one uniform.
  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
};

// Stream ids keep the independently seedable consumers apart.
namespace streams {
inline constexpr std::uint64_t kSampler = 0x5a11;
inline constexpr std::uint64_t kTrainer = 0x7a13;
inline constexpr std::uint64_t kData = 0xda7a;
inline constexpr std::uint64_t kSuite = 0x5017e;
inline constexpr std::uint64_t kModel = 0x30de1;
inline constexpr std::uint64_t kTransfer = 0x7f3a;
}  // namespace streams

}  // namespace wcmtl
