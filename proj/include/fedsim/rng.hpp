#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace fedsim {

// xoshiro256** seeded through splitmix64. Only integer arithmetic feeds the
// raw stream, so a seed yields the same sequence on every platform.
// Gaussian draws use the Marsaglia polar method on top of uniform().
class SeededRng {
 public:
  static constexpr std::string_view algorithm_id = "xoshiro256**+splitmix64/polar-normal";

  explicit SeededRng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);
  double normal();

  template <class T>
  void shuffle(std::span<T> items) {
    // Fisher-Yates; std::shuffle's draw sequence is implementation-defined.
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Stable 64-bit seed derived from (base, tag, index); used for per-client,
// per-round and per-center streams.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index = 0);

// FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                      std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace fedsim
