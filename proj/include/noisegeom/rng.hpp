#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace noisegeom {

/// Philox4x32-10 block function. Exposed for known-answer testing.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

/// Counter-based random stream keyed by (seed, stream id).
///
/// Two streams with the same (seed, stream id) produce identical draws no
/// matter which thread owns them or when they run. Satisfies
/// UniformRandomBitGenerator so it can feed <random> distributions, but the
/// library's own samplers (uniform, normal, index) are implemented here so
/// draws do not depend on the standard library vendor.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  /// Independent child stream; the mapping (parent, index) -> child is fixed.
  RngStream substream(std::uint64_t index) const;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Standard normal (Box-Muller, second variate cached).
  double normal();
  /// Uniform integer in [0, n). Requires n > 0.
  std::uint64_t index(std::uint64_t n);

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace noisegeom
