#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace editmark {

// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);

// FNV-1a over the bytes of `text`.
std::uint64_t fnv1a64(std::string_view text);

// Seed for a named sub-stream of `seed`. Distinct tags give unrelated streams.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index);

// Portable random source. The engine is std::mt19937_64, whose output sequence
// is fixed by the C++ standard; the conversions below are implemented here
// because the standard distributions are implementation-defined.
//
//   uniform()  : top 53 bits of one draw, scaled to [0, 1)
//   normal()   : Box-Muller on two uniforms, second value cached
//   below(b)   : rejection sampling on the raw 64-bit draw, result in [0, b)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform();
  double normal();
  std::uint64_t below(std::uint64_t bound);
  // Inclusive range [lo, hi].
  std::int64_t in_range(std::int64_t lo, std::int64_t hi);

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace editmark
