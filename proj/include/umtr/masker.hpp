#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "umtr/dataset.hpp"
#include "umtr/discretizer.hpp"
#include "umtr/error.hpp"
#include "umtr/gbdt.hpp"
#include "umtr/rng.hpp"

namespace umtr {

/// How one feature's values map to classifier classes and back.
struct FeatureCoder {
  enum class Kind : std::uint8_t { kBinned = 0, kCategorical = 1, kConstant = 2 };

  Kind kind = Kind::kConstant;
  BinSpec bins;                   // kBinned
  std::uint32_t cardinality = 0;  // kCategorical
  double constant = 0.0;          // kConstant

  static FeatureCoder binned(BinSpec spec) { return {Kind::kBinned, std::move(spec), 0, 0.0}; }
  static FeatureCoder categorical(std::uint32_t card) { return {Kind::kCategorical, {}, card, 0.0}; }
  static FeatureCoder constant_value(double v) { return {Kind::kConstant, {}, 0, v}; }

  std::uint32_t n_classes() const noexcept {
    switch (kind) {
      case Kind::kBinned:
        return static_cast<std::uint32_t>(bins.n_bins());
      case Kind::kCategorical:
        return cardinality;
      case Kind::kConstant:
        break;
    }
    return 1;
  }

  /// Class of an observed value.
  std::uint32_t encode(double v) const {
    switch (kind) {
      case Kind::kBinned:
        return static_cast<std::uint32_t>(transform(bins, v));
      case Kind::kCategorical:
        return static_cast<std::uint32_t>(v);
      case Kind::kConstant:
        break;
    }
    return 0;
  }

  /// Value realised from a sampled class.
  double decode(std::uint32_t cls, CounterRng& rng) const {
    switch (kind) {
      case Kind::kBinned:
        return sample_within_bin(bins, cls, rng);
      case Kind::kCategorical:
        if (cls >= cardinality) throw IndexError("category out of range");
        return static_cast<double>(cls);
      case Kind::kConstant:
        break;
    }
    return constant;
  }

  friend bool operator==(const FeatureCoder&, const FeatureCoder&) = default;
};

/// K random feature orders per sample, derived on demand from the seed.
class MaskingPlan {
 public:
  MaskingPlan(std::size_t n_features, std::uint32_t k_dup, std::uint64_t seed)
      : n_features_(n_features), k_dup_(k_dup), seed_(seed) {
    if (k_dup < 1) throw ArgumentError("duplication factor must be >= 1");
  }

  std::uint32_t k_dup() const noexcept { return k_dup_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// Fisher-Yates shuffle of 0..D-1 for (sample, replicate).
  std::vector<std::uint32_t> permutation(std::size_t sample, std::uint32_t replicate) const {
    std::vector<std::uint32_t> perm(n_features_);
    std::iota(perm.begin(), perm.end(), 0u);
    auto rng = CounterRng::for_stream(seed_, StreamTag::kMaskerPermutation, {sample, replicate});
    for (std::size_t i = n_features_; i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.below(i));
      std::swap(perm[i - 1], perm[j]);
    }
    return perm;
  }

 private:
  std::size_t n_features_;
  std::uint32_t k_dup_;
  std::uint64_t seed_;
};

/// Conditioning rows and labels for the classifier of one target feature.
struct FeatureTrainingSet {
  std::size_t target_feature = 0;
  gbdt::FeatureMatrix x;
  std::vector<std::uint32_t> y;

  /// True when the feature had no observed values; callers fall back to the
  /// marginal for it.
  bool empty() const noexcept { return y.empty(); }
};

/// For every sample and each of K random orders, walks the order and emits one
/// row per observed feature f: the features before f in the order keep their
/// values, f and everything after it are masked (NaN), and the label is f's
/// class. Unobserved input cells stay masked everywhere and are never labels,
/// so the total row count is K times the number of observed cells.
inline std::vector<FeatureTrainingSet> build_training_sets(const TabularDataset& data,
                                                           const std::vector<FeatureCoder>& coders,
                                                           std::uint32_t k_dup,
                                                           std::uint64_t seed) {
  const std::size_t n = data.n_rows(), d = data.n_features();
  if (coders.size() != d) throw ArgumentError("one coder per feature required");
  const MaskingPlan plan(d, k_dup, seed);

  std::vector<FeatureTrainingSet> sets(d);
  for (std::size_t j = 0; j < d; ++j) {
    sets[j].target_feature = j;
    sets[j].x = gbdt::FeatureMatrix(0, d);
    std::size_t observed = 0;
    for (auto o : data.observed_column(j)) observed += o;
    sets[j].x.reserve_rows(observed * k_dup);
    sets[j].y.reserve(observed * k_dup);
  }

  std::vector<double> row(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint32_t r = 0; r < k_dup; ++r) {
      const auto perm = plan.permutation(i, r);
      std::fill(row.begin(), row.end(), kMissing);
      for (std::uint32_t f : perm) {
        if (data.observed(i, f)) {
          sets[f].x.push_row(row);
          sets[f].y.push_back(coders[f].encode(data.value(i, f)));
        }
        row[f] = data.value(i, f);
      }
    }
  }
  return sets;
}

}  // namespace umtr
