#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "umtr/csv.hpp"
#include "umtr/dataset.hpp"
#include "umtr/error.hpp"

namespace umtr {

namespace metrics_detail {

inline void check_shapes(const TabularDataset& a, const TabularDataset& b) {
  if (a.n_rows() != b.n_rows() || !schemas_compatible(a.schema(), b.schema())) {
    throw ArgumentError("datasets differ in shape or schema");
  }
}

inline double cell_error(const Feature& f, double imputed, double truth) {
  if (f.kind.is_categorical()) return imputed == truth ? 0.0 : 1.0;
  return std::abs(imputed - truth);
}

}  // namespace metrics_detail

struct MaeScores {
  double min_mae = 0.0;
  double avg_mae = 0.0;
  std::vector<double> per_imputation;
  /// Mean over imputations of the per-feature MAE; NaN for features with no
  /// missing cells.
  std::vector<double> per_feature;
};

/// MAE against ground truth over the cells unobserved in `incomplete`.
/// Categorical cells count as 0/1 disagreement.
inline MaeScores mae_scores(const TabularDataset& truth,
                            const std::vector<TabularDataset>& imputations,
                            const TabularDataset& incomplete) {
  if (imputations.empty()) throw ArgumentError("need at least one imputation");
  metrics_detail::check_shapes(truth, incomplete);
  const std::size_t n = truth.n_rows(), d = truth.n_features();
  std::vector<std::size_t> missing_per_feature(d, 0);
  std::size_t missing = 0;
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) missing_per_feature[j] += !incomplete.observed(i, j);
    missing += missing_per_feature[j];
  }
  if (missing == 0) throw MetricError("MAE undefined: no masked cells");

  MaeScores s;
  s.per_feature.assign(d, 0.0);
  for (const auto& imp : imputations) {
    metrics_detail::check_shapes(truth, imp);
    double total = 0;
    for (std::size_t j = 0; j < d; ++j) {
      double feature_total = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (incomplete.observed(i, j)) continue;
        feature_total += metrics_detail::cell_error(truth.feature(j), imp.value(i, j), truth.value(i, j));
      }
      total += feature_total;
      if (missing_per_feature[j]) {
        s.per_feature[j] += feature_total / static_cast<double>(missing_per_feature[j]);
      }
    }
    s.per_imputation.push_back(total / static_cast<double>(missing));
  }
  for (std::size_t j = 0; j < d; ++j) {
    s.per_feature[j] = missing_per_feature[j]
                           ? s.per_feature[j] / static_cast<double>(imputations.size())
                           : std::numeric_limits<double>::quiet_NaN();
  }
  s.min_mae = *std::min_element(s.per_imputation.begin(), s.per_imputation.end());
  double sum = 0;
  for (double v : s.per_imputation) sum += v;
  s.avg_mae = sum / static_cast<double>(s.per_imputation.size());
  return s;
}

/// Exact 1-D Wasserstein-1 distance between two empirical distributions,
/// i.e. the integral of |F_a - F_b| over the merged support.
inline double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ArgumentError("wasserstein_1d needs nonempty samples");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size()), nb = static_cast<double>(sb.size());
  std::size_t ia = 0, ib = 0;
  double prev = std::min(sa.front(), sb.front());
  double total = 0;
  while (ia < sa.size() || ib < sb.size()) {
    const double next = ib >= sb.size() || (ia < sa.size() && sa[ia] <= sb[ib]) ? sa[ia] : sb[ib];
    const double fa = static_cast<double>(ia) / na;
    const double fb = static_cast<double>(ib) / nb;
    total += std::abs(fa - fb) * (next - prev);
    while (ia < sa.size() && sa[ia] == next) ++ia;
    while (ib < sb.size() && sb[ib] == next) ++ib;
    prev = next;
  }
  return total;
}

/// Mean over features of the 1-D W1 between the observed cells of each
/// column, after min-max scaling both columns by their joint range.
inline std::vector<double> per_feature_wasserstein(const TabularDataset& a,
                                                   const TabularDataset& b) {
  if (!schemas_compatible(a.schema(), b.schema())) throw ArgumentError("schema mismatch");
  std::vector<double> out;
  for (std::size_t j = 0; j < a.n_features(); ++j) {
    std::vector<double> ca, cb;
    for (std::size_t i = 0; i < a.n_rows(); ++i) {
      if (a.observed(i, j)) ca.push_back(a.value(i, j));
    }
    for (std::size_t i = 0; i < b.n_rows(); ++i) {
      if (b.observed(i, j)) cb.push_back(b.value(i, j));
    }
    if (ca.empty() || cb.empty()) throw MetricError("column without observed values");
    const auto [alo, ahi] = std::minmax_element(ca.begin(), ca.end());
    const auto [blo, bhi] = std::minmax_element(cb.begin(), cb.end());
    const double lo = std::min(*alo, *blo), hi = std::max(*ahi, *bhi);
    if (hi == lo) {
      out.push_back(0.0);
      continue;
    }
    for (double& v : ca) v = (v - lo) / (hi - lo);
    for (double& v : cb) v = (v - lo) / (hi - lo);
    out.push_back(wasserstein_1d(ca, cb));
  }
  return out;
}

inline double dataset_wasserstein(const TabularDataset& a, const TabularDataset& b) {
  const auto w = per_feature_wasserstein(a, b);
  double s = 0;
  for (double v : w) s += v;
  return w.empty() ? 0.0 : s / static_cast<double>(w.size());
}

/// Spread of the m imputations: per originally-missing cell, the mean absolute
/// deviation around the median (continuous) or the rate of disagreement with
/// the mode (categorical, ties to the lowest code), averaged over cells.
inline double mad_diversity(const std::vector<TabularDataset>& imputations,
                            const TabularDataset& incomplete) {
  if (imputations.size() < 2) throw ArgumentError("MAD diversity needs m >= 2");
  for (const auto& imp : imputations) metrics_detail::check_shapes(incomplete, imp);
  const std::size_t n = incomplete.n_rows(), d = incomplete.n_features();
  const double m = static_cast<double>(imputations.size());
  std::vector<double> vals(imputations.size());
  double total = 0;
  std::size_t cells = 0;
  for (std::size_t j = 0; j < d; ++j) {
    const bool categorical = incomplete.feature(j).kind.is_categorical();
    for (std::size_t i = 0; i < n; ++i) {
      if (incomplete.observed(i, j)) continue;
      for (std::size_t k = 0; k < imputations.size(); ++k) vals[k] = imputations[k].value(i, j);
      std::sort(vals.begin(), vals.end());
      if (categorical) {
        std::size_t best = 0;
        for (std::size_t a = 0; a < vals.size();) {
          std::size_t b = a;
          while (b < vals.size() && vals[b] == vals[a]) ++b;
          best = std::max(best, b - a);
          a = b;
        }
        total += 1.0 - static_cast<double>(best) / m;
      } else {
        const std::size_t h = vals.size() / 2;
        const double median = vals.size() % 2 ? vals[h] : 0.5 * (vals[h - 1] + vals[h]);
        double dev = 0;
        for (double v : vals) dev += std::abs(v - median);
        total += dev / m;
      }
      ++cells;
    }
  }
  if (cells == 0) throw MetricError("MAD undefined: no masked cells");
  return total / static_cast<double>(cells);
}

// ---------------------------------------------------------------------------
// Two Moons manifold

namespace moons_detail {

/// Distance to one arc: the projection onto the circle when it lands on the
/// arc, otherwise the nearer arc endpoint.
inline double arc_distance(double x, double y, bool upper) {
  const double cx = upper ? MoonsGeometry::kUpperCx : MoonsGeometry::kLowerCx;
  const double cy = upper ? MoonsGeometry::kUpperCy : MoonsGeometry::kLowerCy;
  const double r = MoonsGeometry::kRadius;
  const double vx = x - cx, vy = y - cy;
  const bool on_arc_side = upper ? vy >= 0 : vy <= 0;
  if (on_arc_side) return std::abs(std::hypot(vx, vy) - r);
  return std::min(std::hypot(vx - r, vy), std::hypot(vx + r, vy));
}

}  // namespace moons_detail

/// Distance from (x, y) to the nearer of the two moon arcs (see MoonsGeometry).
inline double moons_manifold_distance(double x, double y) {
  return std::min(moons_detail::arc_distance(x, y, true), moons_detail::arc_distance(x, y, false));
}

inline std::vector<double> moons_manifold_distance(std::span<const std::array<double, 2>> points) {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1])) throw ArgumentError("non-finite point");
    out.push_back(moons_manifold_distance(p[0], p[1]));
  }
  return out;
}

/// 0 for the upper moon, 1 for the lower one, whichever arc is nearer.
inline int nearest_moon(double x, double y) {
  return moons_detail::arc_distance(x, y, true) <= moons_detail::arc_distance(x, y, false) ? 0 : 1;
}

// ---------------------------------------------------------------------------
// Reports

struct FeatureReport {
  std::string name;
  double avg_mae = 0.0;
  double w_train = 0.0;
  double w_test = 0.0;
};

struct ImputationReport {
  double min_mae = 0.0;
  double avg_mae = 0.0;
  double w_train = 0.0;
  double w_test = 0.0;
  double mad = 0.0;
  std::vector<FeatureReport> per_feature;
};

/// W distances are averaged over the m imputations.
inline ImputationReport imputation_report(const TabularDataset& truth,
                                          const TabularDataset& incomplete,
                                          const std::vector<TabularDataset>& imputations,
                                          const TabularDataset& train_reference,
                                          const TabularDataset& test_reference) {
  const auto mae = mae_scores(truth, imputations, incomplete);
  ImputationReport r;
  r.min_mae = mae.min_mae;
  r.avg_mae = mae.avg_mae;
  r.mad = imputations.size() >= 2 ? mad_diversity(imputations, incomplete) : 0.0;
  const std::size_t d = truth.n_features();
  std::vector<double> wtr(d, 0.0), wte(d, 0.0);
  for (const auto& imp : imputations) {
    const auto a = per_feature_wasserstein(imp, train_reference);
    const auto b = per_feature_wasserstein(imp, test_reference);
    for (std::size_t j = 0; j < d; ++j) {
      wtr[j] += a[j] / static_cast<double>(imputations.size());
      wte[j] += b[j] / static_cast<double>(imputations.size());
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    r.per_feature.push_back({truth.feature(j).name, mae.per_feature[j], wtr[j], wte[j]});
    r.w_train += wtr[j] / static_cast<double>(d);
    r.w_test += wte[j] / static_cast<double>(d);
  }
  return r;
}

/// Flat `key=value` lines.
inline std::string format_report(const ImputationReport& r,
                                 const std::map<std::string, std::string>& extra = {}) {
  std::ostringstream out;
  auto num = [](double v) { return std::isnan(v) ? std::string("nan") : csv_detail::format_number(v); };
  out << "min_mae=" << num(r.min_mae) << "\n"
      << "avg_mae=" << num(r.avg_mae) << "\n"
      << "w_train=" << num(r.w_train) << "\n"
      << "w_test=" << num(r.w_test) << "\n"
      << "mad=" << num(r.mad) << "\n";
  for (const auto& f : r.per_feature) {
    out << "feature." << f.name << ".avg_mae=" << num(f.avg_mae) << "\n"
        << "feature." << f.name << ".w_train=" << num(f.w_train) << "\n"
        << "feature." << f.name << ".w_test=" << num(f.w_test) << "\n";
  }
  for (const auto& [k, v] : extra) out << k << "=" << v << "\n";
  return out.str();
}

inline std::string report_csv_header() { return "suite,scope,min_mae,avg_mae,w_train,w_test,mad\n"; }

/// One `overall` row plus one row per feature (MAD/min MAE blank there).
inline std::string format_report_csv_rows(const std::string& suite, const ImputationReport& r) {
  auto num = [](double v) { return std::isnan(v) ? std::string() : csv_detail::format_number(v); };
  std::string out = suite + ",overall," + num(r.min_mae) + "," + num(r.avg_mae) + "," +
                    num(r.w_train) + "," + num(r.w_test) + "," + num(r.mad) + "\n";
  for (const auto& f : r.per_feature) {
    out += suite + "," + csv_detail::quote_if_needed(f.name) + ",," + num(f.avg_mae) + "," +
           num(f.w_train) + "," + num(f.w_test) + ",\n";
  }
  return out;
}

}  // namespace umtr
