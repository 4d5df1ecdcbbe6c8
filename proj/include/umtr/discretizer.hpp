#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "umtr/error.hpp"
#include "umtr/rng.hpp"

namespace umtr {

/// Fitted binning of one continuous feature: B ordered bins whose edges span
/// exactly [observed min, observed max].
struct BinSpec {
  std::vector<double> edges;  // strictly increasing, size B + 1
  double alpha = 1.0;

  std::size_t n_bins() const noexcept { return edges.empty() ? 0 : edges.size() - 1; }
  double lo() const noexcept { return edges.front(); }
  double hi() const noexcept { return edges.back(); }

  friend bool operator==(const BinSpec&, const BinSpec&) = default;
};

inline constexpr double kDefaultBinAlpha = 1.0;

namespace kdi_detail {

// Gaussian tails beyond this many bandwidths are taken as exactly 0 or 1.
inline constexpr double kTailCutoff = 8.5;

inline double quantile_sorted(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Silverman's rule of thumb, 0.9 min(sd, IQR/1.34) n^(-1/5); falls back to
/// the standard deviation when the IQR vanishes.
inline double silverman_bandwidth(std::span<const double> sorted) {
  const double n = static_cast<double>(sorted.size());
  double mean = 0;
  for (double v : sorted) mean += v;
  mean /= n;
  double ss = 0;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1));
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  const double spread = iqr > 0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(n, -0.2);
}

/// Mean of Gaussian CDFs centred on the (sorted) data points, bandwidth h.
/// At h == 0 this is the mid-step empirical CDF.
class SmoothedCdf {
 public:
  SmoothedCdf(std::span<const double> sorted, double bandwidth)
      : sorted_(sorted), h_(bandwidth) {}

  double operator()(double x) const {
    const double n = static_cast<double>(sorted_.size());
    if (h_ <= 0) {
      const auto lo = std::lower_bound(sorted_.begin(), sorted_.end(), x);
      const auto hi = std::upper_bound(lo, sorted_.end(), x);
      return (static_cast<double>(lo - sorted_.begin()) + 0.5 * static_cast<double>(hi - lo)) / n;
    }
    const double reach = kTailCutoff * h_;
    const auto first = std::lower_bound(sorted_.begin(), sorted_.end(), x - reach);
    const auto last = std::upper_bound(first, sorted_.end(), x + reach);
    double total = static_cast<double>(first - sorted_.begin());
    for (auto it = first; it != last; ++it) {
      total += 0.5 * std::erfc(-(x - *it) / (h_ * std::numbers::sqrt2));
    }
    return total / n;
  }

 private:
  std::span<const double> sorted_;
  double h_;
};

}  // namespace kdi_detail

/// Kernel-density-integral binning. The Gaussian-smoothed empirical CDF
/// (boundary-reflected) is rescaled to run from 0 at the column minimum to 1
/// at the maximum and interior edge k is placed where it reaches k/B. Small
/// alpha approaches equal-count bins, large alpha equal-width bins.
inline BinSpec fit_bins(std::span<const double> column, std::size_t n_bins,
                        double alpha = kDefaultBinAlpha) {
  if (n_bins < 1) throw ArgumentError("n_bins must be >= 1");
  if (!(alpha >= 0) || !std::isfinite(alpha)) throw ArgumentError("alpha must be >= 0");
  std::vector<double> sorted(column.begin(), column.end());
  for (double v : sorted) {
    if (!std::isfinite(v)) throw ArgumentError("fit_bins requires finite values");
  }
  std::sort(sorted.begin(), sorted.end());
  std::size_t n_distinct = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i == 0 || sorted[i] != sorted[i - 1]) ++n_distinct;
  }
  if (n_distinct < 2) throw DegenerateColumnError("column has fewer than two distinct values");

  const std::size_t bins = std::min(n_bins, n_distinct);
  const double lo = sorted.front();
  const double hi = sorted.back();
  const double range = hi - lo;
  const double h = alpha * kdi_detail::silverman_bandwidth(sorted);
  // mirror images about lo and hi fall outside [lo, hi], keeping the support sorted
  std::vector<double> support;
  support.reserve(3 * sorted.size());
  for (auto it = sorted.rbegin(); it != sorted.rend(); ++it) support.push_back(2 * lo - *it);
  support.insert(support.end(), sorted.begin(), sorted.end());
  for (auto it = sorted.rbegin(); it != sorted.rend(); ++it) support.push_back(2 * hi - *it);
  const kdi_detail::SmoothedCdf cdf(support, h);
  const double f_lo = cdf(lo);
  const double f_span = cdf(hi) - f_lo;

  BinSpec spec;
  spec.alpha = alpha;
  spec.edges.push_back(lo);
  const double tol = 1e-10 * range;
  for (std::size_t k = 1; k < bins; ++k) {
    const double target = static_cast<double>(k) / static_cast<double>(bins);
    double a = lo, b = hi;
    for (int iter = 0; iter < 200 && b - a > tol; ++iter) {
      const double mid = 0.5 * (a + b);
      if ((cdf(mid) - f_lo) / f_span < target) {
        a = mid;
      } else {
        b = mid;
      }
    }
    const double edge = 0.5 * (a + b);
    // ties can produce coincident edges; those bins collapse
    if (edge > spec.edges.back() && edge < hi) spec.edges.push_back(edge);
  }
  spec.edges.push_back(hi);
  return spec;
}

/// Bin index k with edges[k] <= x < edges[k+1]; out-of-range inputs clamp to
/// the first or last bin.
inline std::size_t transform(const BinSpec& spec, double x) {
  if (std::isnan(x)) throw ArgumentError("transform of NaN");
  const auto it = std::upper_bound(spec.edges.begin(), spec.edges.end(), x);
  const auto pos = static_cast<std::ptrdiff_t>(it - spec.edges.begin()) - 1;
  return static_cast<std::size_t>(
      std::clamp<std::ptrdiff_t>(pos, 0, static_cast<std::ptrdiff_t>(spec.n_bins()) - 1));
}

/// Uniform draw from [edges[k], edges[k+1]).
inline double sample_within_bin(const BinSpec& spec, std::size_t k, CounterRng& rng) {
  if (k >= spec.n_bins()) throw IndexError("bin index " + std::to_string(k) + " out of range");
  const double a = spec.edges[k];
  const double b = spec.edges[k + 1];
  const double v = a + rng.uniform() * (b - a);
  return v < b ? v : std::nextafter(b, a);
}

}  // namespace umtr
