#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace zorank {

/// Counter-based random source built on Philox4x32-10.
///
/// The generator is fully described by a 64-bit key (the seed), a 64-bit
/// stream id and a 64-bit block counter. Each block yields four 32-bit
/// words. Two generators with the same (seed, stream) produce identical
/// sequences; different stream ids give statistically independent
/// sequences, which is how parallel work is kept reproducible:
///
///   Rng base(seed);            // stream 0
///   Rng worker = base.split(i) // independent child stream i
///
/// split() derives the child key from (key, stream) through splitmix64 and
/// uses the child index as the child's stream id, so children of children
/// never collide with their siblings.
///
/// Standard normals use the Box-Muller transform on two 53-bit
/// uniforms; the second variate of each pair is cached.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  std::uint64_t seed() const { return key_; }
  std::uint64_t stream() const { return stream_; }

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  /// Uniform on the open interval (0, 1), 53 bits of resolution.
  double uniform();

  double normal();
  void fill_normal(std::span<double> out);
  std::vector<double> normal_vector(std::size_t dim);

  Rng split(std::uint64_t child) const;

  /// Position of the generator: blocks consumed, words left in the current
  /// block and the cached normal. Two generators compare equal iff they
  /// will produce the same future output.
  bool operator==(const Rng& other) const;

private:
  void refill();

  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  unsigned used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace zorank
