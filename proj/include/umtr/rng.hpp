#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace umtr {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Stream tags keep the random streams of different operations disjoint.
enum class StreamTag : std::uint64_t {
  kMaskerPermutation = 1,
  kGenerateOrder = 2,
  kGenerateFeature = 3,
  kImputeOrder = 4,
  kImputeFeature = 5,
  kDataset = 6,
};

/// Counter-based generator: the output at position `i` is a pure function of
/// (key, i). Keys are derived from a seed plus a tuple of stream coordinates,
/// so a stream depends only on *which* (row, feature, ...) it serves and never
/// on scheduling.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static CounterRng for_stream(std::uint64_t seed, StreamTag tag,
                               std::initializer_list<std::uint64_t> coords) noexcept {
    std::uint64_t key = detail::mix64(seed + detail::kGolden);
    key = detail::mix64(key ^ (static_cast<std::uint64_t>(tag) * detail::kGolden));
    for (std::uint64_t c : coords) {
      key = detail::mix64(key + detail::kGolden + c * 0xD1B54A32D192ED03ULL);
    }
    return CounterRng(key);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    ++counter_;
    return detail::mix64(detail::mix64(key_ + counter_ * detail::kGolden) ^ key_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n); n > 0. Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t r;
    do {
      r = (*this)();
    } while (r >= limit);
    return r % n;
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t position() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace umtr
