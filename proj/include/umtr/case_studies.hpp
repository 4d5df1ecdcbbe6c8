#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "umtr/dataset.hpp"
#include "umtr/engine.hpp"
#include "umtr/error.hpp"
#include "umtr/metrics.hpp"

namespace umtr {

/// Failure inside a named protocol stage (load, mask, fit, impute, ...).
class CaseStudyError : public Error {
 public:
  CaseStudyError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct CaseStudyOptions {
  std::uint64_t seed = 0;
  unsigned threads = 0;
  EngineConfig config{};
  std::size_t imputations = 10;
};

namespace case_detail {

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const CaseStudyError&) {
    throw;
  } catch (const std::exception& e) {
    throw CaseStudyError(name, e.what());
  }
}

inline std::size_t column_named(const TabularDataset& data, const std::string& name) {
  for (std::size_t j = 0; j < data.n_features(); ++j) {
    if (data.feature(j).name == name) return j;
  }
  throw ArgumentError("dataset has no column '" + name + "'");
}

}  // namespace case_detail

// ---------------------------------------------------------------------------
// Two Moons: 200 noisy training points; a copy with every y hidden is appended
// and the model imputes those y values.

inline constexpr std::size_t kMoonsTrainSize = 200;
inline constexpr double kMoonsNoise = 0.1;
inline constexpr double kMoonsNearThreshold = 0.25;

struct MoonsCaseStudy {
  TabularDataset truth;       // 200 training points
  TabularDataset incomplete;  // truth followed by truth with y masked
  TabularDataset complete;    // truth followed by truth
  TabularDataset test;        // fresh draw for the test-set distance
  UnmaskingModel model;
  std::vector<TabularDataset> imputations;
  TabularDataset generated;
  ImputationReport report;

  /// Imputed points (pooled over imputations) within kMoonsNearThreshold of a moon.
  double imputed_near_fraction = 0.0;
  /// Imputed points with x in [0, 1], split by nearest moon.
  std::size_t overlap_count = 0;
  double overlap_upper_fraction = 0.0;
  double overlap_lower_fraction = 0.0;

  double generated_near_fraction = 0.0;
  double generated_w_train = 0.0;
};

inline MoonsCaseStudy run_moons_case_study(const CaseStudyOptions& opt) {
  using case_detail::stage;
  MoonsCaseStudy cs;
  stage("data", [&] {
    cs.truth = two_moons(kMoonsTrainSize, kMoonsNoise, opt.seed);
    cs.test = two_moons(kMoonsTrainSize, kMoonsNoise, opt.seed + 1000003);
    cs.complete = cs.truth.concat(cs.truth);
  });
  stage("mask", [&] { cs.incomplete = cs.truth.concat(cs.truth.with_column_masked(1)); });
  stage("fit", [&] {
    EngineConfig cfg = opt.config;
    cfg.seed = opt.seed;
    cs.model = fit(cs.incomplete, cfg, opt.threads);
  });
  stage("impute", [&] {
    cs.imputations = impute(cs.model, cs.incomplete, opt.imputations, opt.seed + 1, opt.threads);
  });
  stage("generate", [&] {
    cs.generated = generate(cs.model, kMoonsTrainSize, opt.seed + 2, opt.threads);
  });
  stage("metrics", [&] {
    cs.report = imputation_report(cs.complete, cs.incomplete, cs.imputations, cs.truth, cs.test);
    std::size_t near = 0, total = 0, upper = 0;
    for (const auto& imp : cs.imputations) {
      for (std::size_t i = kMoonsTrainSize; i < imp.n_rows(); ++i) {
        const double x = imp.value(i, 0), y = imp.value(i, 1);
        ++total;
        if (moons_manifold_distance(x, y) <= kMoonsNearThreshold) ++near;
        if (x >= 0.0 && x <= 1.0) {
          ++cs.overlap_count;
          if (nearest_moon(x, y) == 0) ++upper;
        }
      }
    }
    cs.imputed_near_fraction = static_cast<double>(near) / static_cast<double>(total);
    if (cs.overlap_count) {
      cs.overlap_upper_fraction = static_cast<double>(upper) / static_cast<double>(cs.overlap_count);
      cs.overlap_lower_fraction = 1.0 - cs.overlap_upper_fraction;
    }
    std::size_t gen_near = 0;
    for (std::size_t i = 0; i < cs.generated.n_rows(); ++i) {
      if (moons_manifold_distance(cs.generated.value(i, 0), cs.generated.value(i, 1)) <=
          kMoonsNearThreshold) {
        ++gen_near;
      }
    }
    cs.generated_near_fraction =
        static_cast<double>(gen_near) / static_cast<double>(cs.generated.n_rows());
    cs.generated_w_train = dataset_wasserstein(cs.generated, cs.truth);
  });
  return cs;
}

// ---------------------------------------------------------------------------
// Iris: half the rows are chosen for missingness; within them each
// non-species value is hidden with probability one half.

inline constexpr double kIrisRowProb = 0.5;
inline constexpr double kIrisCellProb = 0.5;

struct SpeciesDistance {
  std::string species;
  std::size_t imputed_cells = 0;
  double w1 = 0.0;  // imputed petal lengths vs the species' true petal lengths
};

struct IrisCaseStudy {
  TabularDataset truth;
  TabularDataset incomplete;
  UnmaskingModel model;
  std::vector<TabularDataset> imputations;
  TabularDataset generated;
  ImputationReport report;
  double petal_length_avg_mae = 0.0;
  std::vector<SpeciesDistance> petal_length_by_species;
  double generated_w_train = 0.0;
};

/// Per species, W1 between the petal-length values placed into masked cells
/// (pooled over imputations) and the true petal lengths of that species.
inline std::vector<SpeciesDistance> species_petal_w1(const TabularDataset& truth,
                                                     const TabularDataset& incomplete,
                                                     const std::vector<TabularDataset>& imputations,
                                                     std::size_t species_col,
                                                     std::size_t petal_col) {
  const Feature& species = truth.feature(species_col);
  std::vector<SpeciesDistance> out;
  for (std::uint32_t s = 0; s < species.kind.cardinality; ++s) {
    std::vector<double> reference, imputed;
    for (std::size_t i = 0; i < truth.n_rows(); ++i) {
      if (truth.value(i, species_col) != s) continue;
      reference.push_back(truth.value(i, petal_col));
      if (incomplete.observed(i, petal_col)) continue;
      for (const auto& imp : imputations) imputed.push_back(imp.value(i, petal_col));
    }
    SpeciesDistance sd;
    sd.species = s < species.labels.size() ? species.labels[s] : std::to_string(s);
    sd.imputed_cells = imputations.empty() ? 0 : imputed.size() / imputations.size();
    sd.w1 = imputed.empty() || reference.empty() ? 0.0 : wasserstein_1d(imputed, reference);
    out.push_back(std::move(sd));
  }
  return out;
}

inline IrisCaseStudy run_iris_case_study(const TabularDataset& iris, const CaseStudyOptions& opt) {
  using case_detail::stage;
  IrisCaseStudy cs;
  std::size_t species_col = 0, petal_col = 0;
  stage("data", [&] {
    cs.truth = iris;
    species_col = case_detail::column_named(iris, "species");
    petal_col = case_detail::column_named(iris, "petal_length");
    if (!iris.fully_observed()) throw ArgumentError("ground-truth Iris data has missing cells");
  });
  stage("mask", [&] {
    cs.incomplete = apply_mcar(cs.truth, kIrisRowProb, kIrisCellProb, {species_col}, opt.seed);
  });
  stage("fit", [&] {
    EngineConfig cfg = opt.config;
    cfg.seed = opt.seed;
    cs.model = fit(cs.incomplete, cfg, opt.threads);
  });
  stage("impute", [&] {
    cs.imputations = impute(cs.model, cs.incomplete, opt.imputations, opt.seed + 1, opt.threads);
  });
  stage("generate", [&] {
    cs.generated = generate(cs.model, cs.truth.n_rows(), opt.seed + 2, opt.threads);
  });
  stage("metrics", [&] {
    // rows that lost at least one value serve as the test reference
    std::vector<double> values;
    std::vector<std::uint8_t> observed;
    std::vector<std::size_t> affected;
    for (std::size_t i = 0; i < cs.truth.n_rows(); ++i) {
      for (std::size_t j = 0; j < cs.truth.n_features(); ++j) {
        if (!cs.incomplete.observed(i, j)) {
          affected.push_back(i);
          break;
        }
      }
    }
    for (std::size_t j = 0; j < cs.truth.n_features(); ++j) {
      for (std::size_t i : affected) values.push_back(cs.truth.value(i, j));
    }
    observed.assign(values.size(), 1);
    const TabularDataset affected_truth(cs.truth.schema(), affected.size(), std::move(values),
                                        std::move(observed));
    cs.report = imputation_report(cs.truth, cs.incomplete, cs.imputations, cs.truth, affected_truth);
    cs.petal_length_avg_mae = cs.report.per_feature[petal_col].avg_mae;
    cs.petal_length_by_species =
        species_petal_w1(cs.truth, cs.incomplete, cs.imputations, species_col, petal_col);
    cs.generated_w_train = dataset_wasserstein(cs.generated, cs.truth);
  });
  return cs;
}

}  // namespace umtr
