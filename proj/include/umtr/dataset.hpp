#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "umtr/error.hpp"
#include "umtr/rng.hpp"

namespace umtr {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) noexcept { return std::isnan(v); }

/// Continuous columns are quantized before modelling; categorical columns
/// carry integer codes in [0, cardinality) and are modelled directly.
struct FeatureKind {
  enum class Tag : std::uint8_t { kContinuous = 0, kCategorical = 1 };

  Tag tag = Tag::kContinuous;
  std::uint32_t cardinality = 0;

  static FeatureKind continuous() noexcept { return {}; }
  static FeatureKind categorical(std::uint32_t n) {
    if (n < 2) throw ArgumentError("categorical cardinality must be >= 2");
    return {Tag::kCategorical, n};
  }

  bool is_categorical() const noexcept { return tag == Tag::kCategorical; }
  bool is_continuous() const noexcept { return tag == Tag::kContinuous; }

  friend bool operator==(const FeatureKind&, const FeatureKind&) = default;
};

struct Feature {
  std::string name;
  FeatureKind kind;
  /// Label dictionary for categorical columns (code -> label). May be empty,
  /// in which case codes print as integers.
  std::vector<std::string> labels;

  friend bool operator==(const Feature&, const Feature&) = default;
};

using Schema = std::vector<Feature>;

/// Schemas are compatible when names and kinds agree; labels are cosmetic.
inline bool schemas_compatible(const Schema& a, const Schema& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (a[j].name != b[j].name || a[j].kind != b[j].kind) return false;
  }
  return true;
}

/// Column-major table of reals with a per-cell observed flag. Unobserved
/// cells always hold NaN. Immutable once constructed.
class TabularDataset {
 public:
  TabularDataset() = default;

  TabularDataset(Schema schema, std::size_t n_rows, std::vector<double> values,
                 std::vector<std::uint8_t> observed)
      : schema_(std::move(schema)),
        n_rows_(n_rows),
        values_(std::move(values)),
        observed_(std::move(observed)) {
    const std::size_t cells = n_rows_ * schema_.size();
    if (values_.size() != cells || observed_.size() != cells) {
      throw ArgumentError("dataset storage does not match n_rows x n_features");
    }
    for (std::size_t j = 0; j < schema_.size(); ++j) {
      const FeatureKind kind = schema_[j].kind;
      if (kind.is_categorical() && kind.cardinality < 2) {
        throw ArgumentError("categorical cardinality must be >= 2 (column '" +
                            schema_[j].name + "')");
      }
      for (std::size_t i = 0; i < n_rows_; ++i) {
        const std::size_t c = j * n_rows_ + i;
        if (!observed_[c]) {
          values_[c] = kMissing;
          continue;
        }
        observed_[c] = 1;
        const double v = values_[c];
        if (!std::isfinite(v)) {
          throw ArgumentError("observed cell (" + std::to_string(i) + ", " +
                              std::to_string(j) + ") is not finite");
        }
        if (kind.is_categorical() &&
            (v != std::floor(v) || v < 0 || v >= kind.cardinality)) {
          throw ArgumentError("categorical cell (" + std::to_string(i) + ", " +
                              std::to_string(j) + ") is not a valid code");
        }
      }
    }
  }

  /// Fully observed dataset from column vectors.
  static TabularDataset from_columns(Schema schema,
                                     const std::vector<std::vector<double>>& columns) {
    if (columns.size() != schema.size()) {
      throw ArgumentError("column count does not match schema");
    }
    const std::size_t n = columns.empty() ? 0 : columns.front().size();
    std::vector<double> values;
    values.reserve(n * columns.size());
    for (const auto& col : columns) {
      if (col.size() != n) throw ArgumentError("ragged columns");
      values.insert(values.end(), col.begin(), col.end());
    }
    std::vector<std::uint8_t> observed(values.size());
    for (std::size_t c = 0; c < values.size(); ++c) observed[c] = !is_missing(values[c]);
    return TabularDataset(std::move(schema), n, std::move(values), std::move(observed));
  }

  std::size_t n_rows() const noexcept { return n_rows_; }
  std::size_t n_features() const noexcept { return schema_.size(); }
  const Schema& schema() const noexcept { return schema_; }
  const Feature& feature(std::size_t j) const { return schema_.at(j); }

  double value(std::size_t i, std::size_t j) const noexcept { return values_[j * n_rows_ + i]; }
  bool observed(std::size_t i, std::size_t j) const noexcept {
    return observed_[j * n_rows_ + i] != 0;
  }

  std::span<const double> column(std::size_t j) const {
    return std::span<const double>(values_).subspan(j * n_rows_, n_rows_);
  }
  std::span<const std::uint8_t> observed_column(std::size_t j) const {
    return std::span<const std::uint8_t>(observed_).subspan(j * n_rows_, n_rows_);
  }

  /// Column-major storage, for building modified copies.
  const std::vector<double>& values() const noexcept { return values_; }
  const std::vector<std::uint8_t>& observed_mask() const noexcept { return observed_; }

  std::size_t count_observed() const noexcept {
    std::size_t n = 0;
    for (auto o : observed_) n += o;
    return n;
  }

  bool fully_observed() const noexcept { return count_observed() == observed_.size(); }

  /// Row i as a D-vector, NaN for unobserved cells.
  std::vector<double> row(std::size_t i) const {
    std::vector<double> r(n_features());
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = value(i, j);
    return r;
  }

  /// Rows of `this` followed by rows of `other`; schemas must agree.
  TabularDataset concat(const TabularDataset& other) const {
    if (!schemas_compatible(schema_, other.schema_)) {
      throw SchemaMismatchError("cannot concatenate datasets with different schemas");
    }
    const std::size_t n = n_rows_ + other.n_rows_;
    std::vector<double> values;
    std::vector<std::uint8_t> observed;
    values.reserve(n * n_features());
    observed.reserve(n * n_features());
    for (std::size_t j = 0; j < n_features(); ++j) {
      auto a = column(j), b = other.column(j);
      auto oa = observed_column(j), ob = other.observed_column(j);
      values.insert(values.end(), a.begin(), a.end());
      values.insert(values.end(), b.begin(), b.end());
      observed.insert(observed.end(), oa.begin(), oa.end());
      observed.insert(observed.end(), ob.begin(), ob.end());
    }
    return TabularDataset(schema_, n, std::move(values), std::move(observed));
  }

  /// Copy with every cell of column j unobserved.
  TabularDataset with_column_masked(std::size_t j) const {
    if (j >= n_features()) throw IndexError("column index out of range");
    std::vector<std::uint8_t> observed = observed_;
    std::fill_n(observed.begin() + static_cast<std::ptrdiff_t>(j * n_rows_), n_rows_, 0);
    return TabularDataset(schema_, n_rows_, values_, std::move(observed));
  }

  friend bool operator==(const TabularDataset& a, const TabularDataset& b) {
    if (a.schema_ != b.schema_ || a.n_rows_ != b.n_rows_ || a.observed_ != b.observed_) {
      return false;
    }
    for (std::size_t c = 0; c < a.values_.size(); ++c) {
      if (!a.observed_[c]) continue;
      if (std::bit_cast<std::uint64_t>(a.values_[c]) != std::bit_cast<std::uint64_t>(b.values_[c])) {
        return false;
      }
    }
    return true;
  }

 private:
  Schema schema_;
  std::size_t n_rows_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> observed_;
};

// ---------------------------------------------------------------------------
// Two Moons

/// Upper moon: unit half-circle centred at the origin, angles [0, pi].
/// Lower moon: unit half-circle centred at (1, 0.5), angles [pi, 2 pi], i.e.
/// (1 - cos t, 0.5 - sin t) for t in [0, pi].
struct MoonsGeometry {
  static constexpr double kUpperCx = 0.0, kUpperCy = 0.0;
  static constexpr double kLowerCx = 1.0, kLowerCy = 0.5;
  static constexpr double kRadius = 1.0;
};

/// n points, the first n/2 on the upper moon (evenly spaced in angle), the
/// rest on the lower moon, plus isotropic N(0, noise^2) jitter.
inline TabularDataset two_moons(std::size_t n, double noise, std::uint64_t seed) {
  if (n < 2) throw ArgumentError("two_moons needs n >= 2");
  if (!(noise >= 0) || !std::isfinite(noise)) throw ArgumentError("noise must be >= 0");
  const std::size_t n_upper = n / 2;
  const std::size_t n_lower = n - n_upper;
  std::vector<double> xs, ys;
  xs.reserve(n);
  ys.reserve(n);
  auto angle = [](std::size_t k, std::size_t count) {
    return count == 1 ? 0.0
                      : std::numbers::pi * static_cast<double>(k) / static_cast<double>(count - 1);
  };
  for (std::size_t k = 0; k < n_upper; ++k) {
    const double t = angle(k, n_upper);
    xs.push_back(std::cos(t));
    ys.push_back(std::sin(t));
  }
  for (std::size_t k = 0; k < n_lower; ++k) {
    const double t = angle(k, n_lower);
    xs.push_back(1.0 - std::cos(t));
    ys.push_back(0.5 - std::sin(t));
  }
  if (noise > 0) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> jitter(0.0, noise);
    for (std::size_t i = 0; i < n; ++i) {
      xs[i] += jitter(gen);
      ys[i] += jitter(gen);
    }
  }
  Schema schema{{"x", FeatureKind::continuous(), {}}, {"y", FeatureKind::continuous(), {}}};
  return TabularDataset::from_columns(std::move(schema), {xs, ys});
}

// ---------------------------------------------------------------------------
// MCAR masking

/// Each row is selected with probability row_prob; within a selected row each
/// observed, non-protected cell is hidden with probability cell_prob.
inline TabularDataset apply_mcar(const TabularDataset& data, double row_prob, double cell_prob,
                                 const std::set<std::size_t>& protected_cols,
                                 std::uint64_t seed) {
  if (!(row_prob >= 0 && row_prob <= 1) || !(cell_prob >= 0 && cell_prob <= 1)) {
    throw ArgumentError("masking probabilities must lie in [0, 1]");
  }
  for (std::size_t c : protected_cols) {
    if (c >= data.n_features()) {
      throw IndexError("protected column " + std::to_string(c) + " out of range");
    }
  }
  const std::size_t n = data.n_rows();
  std::vector<std::uint8_t> observed = data.observed_mask();
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = CounterRng::for_stream(seed, StreamTag::kDataset, {i});
    if (!(rng.uniform() < row_prob)) continue;
    for (std::size_t j = 0; j < data.n_features(); ++j) {
      const bool hide = rng.uniform() < cell_prob;
      if (hide && !protected_cols.contains(j)) observed[j * n + i] = 0;
    }
  }
  return TabularDataset(data.schema(), n, data.values(), std::move(observed));
}

}  // namespace umtr
