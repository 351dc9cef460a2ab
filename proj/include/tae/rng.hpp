#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace tae {

/// Mixes a seed with a stream name and optional indices into an independent
/// seed. All randomness in a run flows from one user seed through this.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t a = 0,
                          std::uint64_t b = 0);

/// Deterministic generator whose draws do not depend on the standard
/// library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::string_view stream, std::uint64_t a = 0, std::uint64_t b = 0)
      : engine_(derive_seed(seed, stream, a, b)) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();

  template <typename Seq>
  void shuffle(Seq& seq) {
    for (std::size_t i = seq.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(seq[i - 1], seq[j]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// 64-bit FNV-1a over bytes; used for content digests.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace tae
