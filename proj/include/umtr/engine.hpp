#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "umtr/dataset.hpp"
#include "umtr/discretizer.hpp"
#include "umtr/error.hpp"
#include "umtr/gbdt.hpp"
#include "umtr/masker.hpp"
#include "umtr/parallel.hpp"
#include "umtr/rng.hpp"

namespace umtr {

struct EngineConfig {
  std::uint32_t n_bins = 20;
  double top_p = 0.9;
  std::uint32_t k_dup = 50;
  /// Bandwidth multiplier for the kernel-density binning.
  double alpha = kDefaultBinAlpha;
  gbdt::BoosterParams tree;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(top_p > 0 && top_p <= 1)) throw ArgumentError("top_p must lie in (0, 1]");
    if (n_bins < 1) throw ArgumentError("n_bins must be >= 1");
    if (k_dup < 1) throw ArgumentError("k_dup must be >= 1");
    if (!(alpha >= 0) || !std::isfinite(alpha)) throw ArgumentError("alpha must be >= 0");
    if (!(tree.learning_rate > 0) || !(tree.lambda >= 0) || !(tree.min_child_weight >= 0)) {
      throw ArgumentError("invalid tree parameters");
    }
  }

  friend bool operator==(const EngineConfig&, const EngineConfig&) = default;
};

/// One classifier per feature, each predicting that feature's class (bin or
/// category) from a partially masked row.
struct UnmaskingModel {
  EngineConfig config;
  Schema schema;
  std::vector<FeatureCoder> coders;
  std::vector<gbdt::BoostedClassifier> classifiers;
  /// Empirical class frequencies of each feature's observed training values.
  std::vector<std::vector<double>> marginals;
  std::vector<std::pair<double, double>> train_ranges;

  std::size_t n_features() const noexcept { return schema.size(); }

  friend bool operator==(const UnmaskingModel&, const UnmaskingModel&) = default;
};

// ---------------------------------------------------------------------------
// Nucleus sampling

/// Classes in the top-p nucleus, most probable first. Equal probabilities are
/// ordered by ascending class index before the cut.
inline std::vector<std::size_t> nucleus_set(std::span<const double> probs, double top_p) {
  if (probs.empty()) throw ArgumentError("empty probability vector");
  if (!(top_p > 0 && top_p <= 1)) throw ArgumentError("top_p must lie in (0, 1]");
  double total = 0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0) throw ArgumentError("probabilities must be finite and >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw ArgumentError("probabilities must sum to 1");
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  if (top_p >= 1.0) return order;
  double cum = 0;
  std::size_t keep = 0;
  while (keep < order.size()) {
    cum += probs[order[keep++]];
    if (cum >= top_p - 1e-12) break;
  }
  order.resize(keep);
  return order;
}

/// Draws a class from the renormalised nucleus.
inline std::size_t nucleus_sample(std::span<const double> probs, double top_p, CounterRng& rng) {
  const auto nucleus = nucleus_set(probs, top_p);
  double mass = 0;
  for (std::size_t c : nucleus) mass += probs[c];
  const double u = rng.uniform() * mass;
  double cum = 0;
  std::size_t last_positive = nucleus.front();
  for (std::size_t c : nucleus) {
    if (probs[c] <= 0) continue;
    last_positive = c;
    cum += probs[c];
    if (u < cum) return c;
  }
  return last_positive;
}

// ---------------------------------------------------------------------------
// Fitting

namespace engine_detail {

inline FeatureCoder make_coder(const Feature& feature, std::span<const double> observed,
                               const EngineConfig& config) {
  if (feature.kind.is_categorical()) return FeatureCoder::categorical(feature.kind.cardinality);
  try {
    return FeatureCoder::binned(fit_bins(observed, config.n_bins, config.alpha));
  } catch (const DegenerateColumnError&) {
    return FeatureCoder::constant_value(observed.front());
  }
}

/// Class probabilities for feature f given the current partial row.
inline void class_probabilities(const UnmaskingModel& model, std::size_t f,
                                std::span<const double> row, std::vector<double>& probs) {
  const auto& clf = model.classifiers[f];
  probs.resize(clf.n_classes());
  if (clf.degenerate_class()) {
    const auto& m = model.marginals[f];
    std::copy(m.begin(), m.end(), probs.begin());
    return;
  }
  clf.predict_proba(row, probs);
}

inline std::vector<std::uint32_t> shuffled(std::size_t n, CounterRng& rng) {
  std::vector<std::uint32_t> v(n);
  std::iota(v.begin(), v.end(), 0u);
  for (std::size_t i = n; i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  return v;
}

}  // namespace engine_detail

/// Fits the binning, builds the masked training sets and trains the D
/// per-feature classifiers (concurrently, `threads` = 0 means automatic).
/// The result does not depend on the thread count.
inline UnmaskingModel fit(const TabularDataset& data, const EngineConfig& config,
                          unsigned threads = 0) {
  config.validate();
  if (data.n_rows() < 2) throw FitError("fit needs at least two rows");
  const std::size_t d = data.n_features();
  if (d == 0) throw FitError("dataset has no features");

  UnmaskingModel model;
  model.config = config;
  model.schema = data.schema();
  std::vector<double> observed;
  for (std::size_t j = 0; j < d; ++j) {
    observed.clear();
    auto col = data.column(j);
    auto obs = data.observed_column(j);
    for (std::size_t i = 0; i < data.n_rows(); ++i) {
      if (obs[i]) observed.push_back(col[i]);
    }
    if (observed.empty()) {
      throw FitError("feature '" + data.feature(j).name + "' has no observed values");
    }
    FeatureCoder coder = engine_detail::make_coder(data.feature(j), observed, config);
    std::vector<double> marginal(coder.n_classes(), 0.0);
    for (double v : observed) marginal[coder.encode(v)] += 1.0;
    for (double& m : marginal) m /= static_cast<double>(observed.size());
    const auto [lo, hi] = std::minmax_element(observed.begin(), observed.end());
    model.train_ranges.emplace_back(*lo, *hi);
    model.marginals.push_back(std::move(marginal));
    model.coders.push_back(std::move(coder));
  }

  const auto sets = build_training_sets(data, model.coders, config.k_dup, config.seed);
  model.classifiers.resize(d);
  parallel_for(d, threads, [&](std::size_t j) {
    const FeatureCoder& coder = model.coders[j];
    if (coder.kind == FeatureCoder::Kind::kConstant) {
      model.classifiers[j] = gbdt::BoostedClassifier(1, static_cast<std::uint32_t>(d), {0.0}, {},
                                                     config.tree.learning_rate,
                                                     config.tree.max_depth, 0u);
      return;
    }
    model.classifiers[j] = gbdt::fit(sets[j].x, sets[j].y, coder.n_classes(), config.tree);
  });
  return model;
}

// ---------------------------------------------------------------------------
// Inference

/// n synthetic rows. Each row starts fully masked and its features are
/// unmasked one by one in a random order: predict, nucleus-sample a class,
/// then realise a value inside the chosen bin.
inline TabularDataset generate(const UnmaskingModel& model, std::size_t n, std::uint64_t seed,
                               unsigned threads = 0) {
  if (n < 1) throw ArgumentError("generate needs n >= 1");
  const std::size_t d = model.n_features();
  std::vector<double> values(n * d);
  parallel_for(n, threads, [&](std::size_t i) {
    std::vector<double> row(d, kMissing);
    std::vector<double> probs;
    auto order_rng = CounterRng::for_stream(seed, StreamTag::kGenerateOrder, {i});
    for (std::uint32_t f : engine_detail::shuffled(d, order_rng)) {
      auto rng = CounterRng::for_stream(seed, StreamTag::kGenerateFeature, {i, f});
      engine_detail::class_probabilities(model, f, row, probs);
      const auto cls = nucleus_sample(probs, model.config.top_p, rng);
      row[f] = model.coders[f].decode(static_cast<std::uint32_t>(cls), rng);
    }
    for (std::size_t j = 0; j < d; ++j) values[j * n + i] = row[j];
  });
  return TabularDataset(model.schema, n, std::move(values), std::vector<std::uint8_t>(n * d, 1));
}

/// m completions of `data`. Observed cells are copied untouched; missing
/// cells are filled in a random order, each conditioned on the observed and
/// already-filled cells of its row. Completion k uses stream index k.
inline std::vector<TabularDataset> impute(const UnmaskingModel& model, const TabularDataset& data,
                                          std::size_t m, std::uint64_t seed,
                                          unsigned threads = 0) {
  if (m < 1) throw ArgumentError("impute needs m >= 1");
  if (!schemas_compatible(model.schema, data.schema())) {
    throw SchemaMismatchError("dataset schema does not match the model schema");
  }
  const std::size_t n = data.n_rows(), d = data.n_features();
  std::vector<std::vector<double>> outputs(m, data.values());
  parallel_for(m * n, threads, [&](std::size_t task) {
    const std::size_t k = task / n, i = task % n;
    std::vector<double> row = data.row(i);
    std::vector<std::uint32_t> missing;
    for (std::uint32_t j = 0; j < d; ++j) {
      if (!data.observed(i, j)) missing.push_back(j);
    }
    if (missing.empty()) return;
    auto order_rng = CounterRng::for_stream(seed, StreamTag::kImputeOrder, {k, i});
    std::vector<double> probs;
    for (std::uint32_t pos : engine_detail::shuffled(missing.size(), order_rng)) {
      const std::uint32_t f = missing[pos];
      auto rng = CounterRng::for_stream(seed, StreamTag::kImputeFeature, {k, i, f});
      engine_detail::class_probabilities(model, f, row, probs);
      const auto cls = nucleus_sample(probs, model.config.top_p, rng);
      row[f] = model.coders[f].decode(static_cast<std::uint32_t>(cls), rng);
      outputs[k][f * n + i] = row[f];
    }
  });
  std::vector<TabularDataset> result;
  result.reserve(m);
  for (auto& values : outputs) {
    result.emplace_back(data.schema(), n, std::move(values), std::vector<std::uint8_t>(n * d, 1));
  }
  return result;
}

}  // namespace umtr
