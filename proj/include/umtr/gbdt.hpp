#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "umtr/binary_io.hpp"
#include "umtr/error.hpp"

namespace umtr::gbdt {

struct BoosterParams {
  std::uint32_t rounds = 100;
  double learning_rate = 0.3;
  std::uint32_t max_depth = 6;
  double min_child_weight = 1.0;
  double lambda = 1.0;
  std::uint32_t n_hist_bins = 256;
  /// Use every distinct value as a split candidate instead of the quantile
  /// sketch. Meant for small-n checks against the histogram path.
  bool exact_splits = false;

  friend bool operator==(const BoosterParams&, const BoosterParams&) = default;
};

/// Dense row-major matrix; NaN marks a missing entry.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols,
                double fill = std::numeric_limits<double>::quiet_NaN())
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw ArgumentError("matrix data size mismatch");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }
  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * cols_, cols_);
  }

  void reserve_rows(std::size_t n) { data_.reserve(n * cols_); }
  void push_row(std::span<const double> r) {
    if (r.size() != cols_) throw ArgumentError("row width mismatch");
    data_.insert(data_.end(), r.begin(), r.end());
    ++rows_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Pre-order node. The left child of an internal node sits at index + 1; the
/// right child at `right`. Missing inputs follow `default_left`.
struct TreeNode {
  std::uint32_t feature = 0;
  double threshold = 0.0;
  bool default_left = true;
  bool is_leaf = true;
  double leaf_value = 0.0;
  std::uint32_t right = 0;

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class Tree {
 public:
  Tree() : nodes_{TreeNode{}} {}
  explicit Tree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.empty()) throw ArgumentError("tree needs at least one node");
  }

  /// Leaf contribution for input x (x <= threshold goes left).
  double predict(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf) {
      const TreeNode& n = nodes_[i];
      const double v = x[n.feature];
      const bool left = std::isnan(v) ? n.default_left : v <= n.threshold;
      i = left ? i + 1 : n.right;
    }
    return nodes_[i].leaf_value;
  }

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  std::size_t depth() const {
    std::size_t best = 0;
    depth_from(0, 0, best);
    return best;
  }

  friend bool operator==(const Tree&, const Tree&) = default;

 private:
  void depth_from(std::size_t i, std::size_t d, std::size_t& best) const {
    best = std::max(best, d);
    if (nodes_[i].is_leaf) return;
    depth_from(i + 1, d + 1, best);
    depth_from(nodes_[i].right, d + 1, best);
  }

  std::vector<TreeNode> nodes_;
};

inline void softmax_inplace(std::span<double> scores) {
  const double m = *std::max_element(scores.begin(), scores.end());
  double z = 0;
  for (double& s : scores) {
    s = std::exp(s - m);
    z += s;
  }
  for (double& s : scores) s /= z;
}

/// Multiclass ensemble: `rounds` boosting rounds of one tree per class, stored
/// round-major (tree for round r, class c at r * n_classes + c).
class BoostedClassifier {
 public:
  BoostedClassifier() = default;

  BoostedClassifier(std::uint32_t n_classes, std::uint32_t n_features,
                    std::vector<double> base_score, std::vector<Tree> trees,
                    double learning_rate = 0.3, std::uint32_t max_depth = 6,
                    std::optional<std::uint32_t> degenerate_class = std::nullopt)
      : n_classes_(n_classes),
        n_features_(n_features),
        learning_rate_(learning_rate),
        max_depth_(max_depth),
        base_score_(std::move(base_score)),
        trees_(std::move(trees)),
        degenerate_class_(degenerate_class) {
    if (n_classes_ < 1) throw ArgumentError("classifier needs at least one class");
    if (base_score_.size() != n_classes_) throw ArgumentError("base score size mismatch");
    if (trees_.size() % n_classes_ != 0) throw ArgumentError("tree count not a multiple of C");
    if (degenerate_class_ && *degenerate_class_ >= n_classes_) {
      throw ArgumentError("degenerate class out of range");
    }
    for (const Tree& t : trees_) {
      for (const TreeNode& n : t.nodes()) {
        if (!n.is_leaf && (n.feature >= n_features_ || n.right >= t.nodes().size() ||
                            n.right <= static_cast<std::size_t>(&n - t.nodes().data()) + 1)) {
          throw ArgumentError("tree node references invalid feature or child");
        }
      }
    }
  }

  std::uint32_t n_classes() const noexcept { return n_classes_; }
  std::uint32_t n_features() const noexcept { return n_features_; }
  std::uint32_t rounds() const noexcept {
    return static_cast<std::uint32_t>(trees_.size() / n_classes_);
  }
  double learning_rate() const noexcept { return learning_rate_; }
  std::uint32_t max_depth() const noexcept { return max_depth_; }
  const std::vector<double>& base_score() const noexcept { return base_score_; }
  const std::vector<Tree>& trees() const noexcept { return trees_; }
  const Tree& tree(std::size_t round, std::size_t cls) const {
    return trees_.at(round * n_classes_ + cls);
  }
  /// Set when training saw a single class; predictions are then one-hot.
  std::optional<std::uint32_t> degenerate_class() const noexcept { return degenerate_class_; }

  /// Raw (pre-softmax) scores.
  void predict_margin(std::span<const double> x, std::span<double> out) const {
    if (x.size() != n_features_) {
      throw ArgumentError("input width " + std::to_string(x.size()) + " != trained width " +
                          std::to_string(n_features_));
    }
    std::copy(base_score_.begin(), base_score_.end(), out.begin());
    for (std::size_t t = 0; t < trees_.size(); ++t) out[t % n_classes_] += trees_[t].predict(x);
  }

  void predict_proba(std::span<const double> x, std::span<double> out) const {
    if (out.size() != n_classes_) throw ArgumentError("output size mismatch");
    if (degenerate_class_) {
      if (x.size() != n_features_) throw ArgumentError("input width mismatch");
      std::fill(out.begin(), out.end(), 0.0);
      out[*degenerate_class_] = 1.0;
      return;
    }
    predict_margin(x, out);
    softmax_inplace(out);
  }

  std::vector<double> predict_proba(std::span<const double> x) const {
    std::vector<double> p(n_classes_);
    predict_proba(x, p);
    return p;
  }

  friend bool operator==(const BoostedClassifier&, const BoostedClassifier&) = default;

 private:
  std::uint32_t n_classes_ = 1;
  std::uint32_t n_features_ = 0;
  double learning_rate_ = 0.3;
  std::uint32_t max_depth_ = 6;
  std::vector<double> base_score_{0.0};
  std::vector<Tree> trees_;
  std::optional<std::uint32_t> degenerate_class_;
};

inline constexpr double kHessianFloor = 1e-16;

struct GradHess {
  std::vector<double> grad;
  std::vector<double> hess;
};

/// Gradient and diagonal Hessian of -log softmax(scores)[label].
inline GradHess softmax_grad_hess(std::span<const double> scores, std::size_t label) {
  if (label >= scores.size()) throw ArgumentError("label out of range");
  GradHess gh{std::vector<double>(scores.begin(), scores.end()), std::vector<double>(scores.size())};
  softmax_inplace(gh.grad);
  for (std::size_t c = 0; c < scores.size(); ++c) {
    const double p = gh.grad[c];
    gh.hess[c] = std::max(p * (1.0 - p), kHessianFloor);
    if (c == label) gh.grad[c] = p - 1.0;
  }
  return gh;
}

/// Mean training log-loss recorded after every round (entry 0 = base score).
struct FitTrace {
  std::vector<double> log_loss;
};

namespace detail {

inline constexpr std::uint32_t kMissingBin = std::numeric_limits<std::uint32_t>::max();
inline constexpr double kMinSplitGain = 1e-12;

/// Split candidates per feature: cut[b] is the upper edge of bin b, so value v
/// belongs to the first bin with v <= cut[b].
struct HistogramCuts {
  std::vector<std::vector<double>> cuts;
  std::vector<std::uint32_t> bins;  // column-major n x d bin ids
};

inline HistogramCuts build_cuts(const FeatureMatrix& x, const BoosterParams& params) {
  const std::size_t n = x.rows(), d = x.cols();
  HistogramCuts hc;
  hc.cuts.resize(d);
  hc.bins.assign(n * d, kMissingBin);
  std::vector<double> finite;
  finite.reserve(n);
  for (std::size_t j = 0; j < d; ++j) {
    finite.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const double v = x(i, j);
      if (!std::isnan(v)) finite.push_back(v);
    }
    if (finite.empty()) continue;
    std::sort(finite.begin(), finite.end());
    std::vector<double> distinct = finite;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<double>& cuts = hc.cuts[j];
    if (params.exact_splits || distinct.size() <= params.n_hist_bins) {
      cuts = std::move(distinct);
    } else {
      const std::size_t m = finite.size();
      const std::size_t nb = params.n_hist_bins;
      for (std::size_t k = 1; k <= nb; ++k) {
        const std::size_t pos = (k * m + nb - 1) / nb - 1;
        const double v = finite[std::min(pos, m - 1)];
        if (cuts.empty() || v > cuts.back()) cuts.push_back(v);
      }
      if (cuts.back() < finite.back()) cuts.push_back(finite.back());
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double v = x(i, j);
      if (std::isnan(v)) continue;
      hc.bins[j * n + i] =
          static_cast<std::uint32_t>(std::lower_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
    }
  }
  return hc;
}

struct SplitCandidate {
  bool valid = false;
  double gain = 0.0;
  std::uint32_t feature = 0;
  std::uint32_t bin = 0;
  bool default_left = true;
};

/// Depth-wise greedy grower for one class's tree.
class TreeGrower {
 public:
  TreeGrower(const HistogramCuts& cuts, std::size_t n_rows, const BoosterParams& params,
             std::span<const double> grad, std::span<const double> hess)
      : cuts_(cuts), n_(n_rows), params_(params), grad_(grad), hess_(hess) {}

  /// Grows a tree over all rows; writes each row's leaf value into `delta`.
  Tree grow(std::span<double> delta) {
    rows_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) rows_[i] = static_cast<std::uint32_t>(i);
    nodes_.clear();
    delta_ = delta;
    build(0, n_, 0);
    return Tree(std::move(nodes_));
  }

 private:
  double score(double g, double h) const { return g * g / (h + params_.lambda); }

  std::uint32_t build(std::size_t begin, std::size_t end, std::uint32_t depth) {
    double g = 0, h = 0;
    for (std::size_t k = begin; k < end; ++k) {
      g += grad_[rows_[k]];
      h += hess_[rows_[k]];
    }
    const auto self = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    SplitCandidate best;
    if (depth < params_.max_depth && end - begin >= 2) best = find_split(begin, end, g, h);
    if (!best.valid) {
      const double value = -g / (h + params_.lambda) * params_.learning_rate;
      nodes_[self].leaf_value = value;
      for (std::size_t k = begin; k < end; ++k) delta_[rows_[k]] = value;
      return self;
    }
    const std::uint32_t* bins = cuts_.bins.data() + static_cast<std::size_t>(best.feature) * n_;
    const auto mid = std::stable_partition(
        rows_.begin() + static_cast<std::ptrdiff_t>(begin),
        rows_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::uint32_t r) {
          const std::uint32_t b = bins[r];
          return b == kMissingBin ? best.default_left : b <= best.bin;
        });
    const auto split = static_cast<std::size_t>(mid - rows_.begin());
    TreeNode node;
    node.is_leaf = false;
    node.feature = best.feature;
    node.threshold = cuts_.cuts[best.feature][best.bin];
    node.default_left = best.default_left;
    build(begin, split, depth + 1);
    node.right = build(split, end, depth + 1);
    nodes_[self] = node;
    return self;
  }

  SplitCandidate find_split(std::size_t begin, std::size_t end, double g, double h) {
    SplitCandidate best;
    const double parent = score(g, h);
    const double mcw = params_.min_child_weight;
    for (std::size_t f = 0; f < cuts_.cuts.size(); ++f) {
      const std::size_t nb = cuts_.cuts[f].size();
      if (nb < 2) continue;
      hist_g_.assign(nb, 0.0);
      hist_h_.assign(nb, 0.0);
      const std::uint32_t* bins = cuts_.bins.data() + f * n_;
      for (std::size_t k = begin; k < end; ++k) {
        const std::uint32_t r = rows_[k];
        const std::uint32_t b = bins[r];
        if (b == kMissingBin) continue;
        hist_g_[b] += grad_[r];
        hist_h_[b] += hess_[r];
      }
      double fin_g = 0, fin_h = 0;
      for (std::size_t b = 0; b < nb; ++b) {
        fin_g += hist_g_[b];
        fin_h += hist_h_[b];
      }
      const double miss_g = g - fin_g;
      const double miss_h = std::max(h - fin_h, 0.0);
      const bool has_missing = miss_h > 0;
      double gl = 0, hl = 0;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        gl += hist_g_[b];
        hl += hist_h_[b];
        // missing -> right first, then missing -> left; strict improvement
        // keeps the lowest feature, then the lowest threshold, on ties
        for (int option = 0; option < (has_missing ? 2 : 1); ++option) {
          const double lg = option == 0 ? gl : gl + miss_g;
          const double lh = option == 0 ? hl : hl + miss_h;
          const double rg = g - lg;
          const double rh = h - lh;
          if (lh < mcw || rh < mcw) continue;
          const double gain = 0.5 * (score(lg, lh) + score(rg, rh) - parent);
          if (gain > kMinSplitGain && (!best.valid || gain > best.gain)) {
            best.valid = true;
            best.gain = gain;
            best.feature = static_cast<std::uint32_t>(f);
            best.bin = static_cast<std::uint32_t>(b);
            best.default_left = has_missing ? option == 1 : lh >= rh;
          }
        }
      }
    }
    return best;
  }

  const HistogramCuts& cuts_;
  std::size_t n_;
  const BoosterParams& params_;
  std::span<const double> grad_;
  std::span<const double> hess_;
  std::span<double> delta_;
  std::vector<std::uint32_t> rows_;
  std::vector<TreeNode> nodes_;
  std::vector<double> hist_g_, hist_h_;
};

inline double mean_log_loss(std::span<const double> scores, std::span<const std::uint32_t> y,
                            std::size_t n_classes) {
  double total = 0;
  std::vector<double> p(n_classes);
  for (std::size_t i = 0; i < y.size(); ++i) {
    std::copy_n(scores.begin() + static_cast<std::ptrdiff_t>(i * n_classes), n_classes, p.begin());
    softmax_inplace(p);
    total -= std::log(std::max(p[y[i]], 1e-300));
  }
  return total / static_cast<double>(y.size());
}

}  // namespace detail

/// Second-order gradient boosting with the softmax objective. Classes that
/// never occur in `y` are allowed; their prior is floored at 1e-12. When `y`
/// holds a single class the result is a degenerate one-hot model.
inline BoostedClassifier fit(const FeatureMatrix& x, std::span<const std::uint32_t> y,
                             std::uint32_t n_classes, const BoosterParams& params = {},
                             FitTrace* trace = nullptr) {
  const std::size_t n = x.rows();
  if (n == 0 || x.cols() == 0) throw ArgumentError("empty training matrix");
  if (y.size() != n) throw ArgumentError("label count does not match row count");
  if (params.learning_rate <= 0 || params.lambda < 0 || params.min_child_weight < 0) {
    throw ArgumentError("invalid booster parameters");
  }
  if (n_classes == 0) n_classes = *std::max_element(y.begin(), y.end()) + 1;
  std::vector<std::size_t> counts(n_classes, 0);
  for (std::uint32_t label : y) {
    if (label >= n_classes) throw ArgumentError("label " + std::to_string(label) + " >= n_classes");
    ++counts[label];
  }
  const auto d = static_cast<std::uint32_t>(x.cols());
  const auto present = static_cast<std::size_t>(
      std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }));
  if (present == 1) {
    const auto cls = static_cast<std::uint32_t>(
        std::find_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) -
        counts.begin());
    std::vector<double> base(n_classes, std::log(1e-12));
    base[cls] = 0.0;
    if (trace) trace->log_loss.assign(1, 0.0);
    return BoostedClassifier(n_classes, d, std::move(base), {}, params.learning_rate,
                             params.max_depth, cls);
  }

  std::vector<double> base(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    const double freq = static_cast<double>(counts[c]) / static_cast<double>(n);
    base[c] = std::log(std::max(freq, 1e-12));
  }

  const detail::HistogramCuts cuts = detail::build_cuts(x, params);
  std::vector<double> scores(n * n_classes);
  for (std::size_t i = 0; i < n; ++i) std::copy(base.begin(), base.end(), scores.begin() + static_cast<std::ptrdiff_t>(i * n_classes));
  if (trace) trace->log_loss = {detail::mean_log_loss(scores, y, n_classes)};

  // per-class gradient planes, class-major
  std::vector<double> grad(n * n_classes), hess(n * n_classes), delta(n * n_classes);
  std::vector<double> p(n_classes);
  std::vector<Tree> trees;
  trees.reserve(static_cast<std::size_t>(params.rounds) * n_classes);
  for (std::uint32_t round = 0; round < params.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(scores.begin() + static_cast<std::ptrdiff_t>(i * n_classes), n_classes, p.begin());
      softmax_inplace(p);
      for (std::size_t c = 0; c < n_classes; ++c) {
        grad[c * n + i] = c == y[i] ? p[c] - 1.0 : p[c];
        hess[c * n + i] = std::max(p[c] * (1.0 - p[c]), kHessianFloor);
      }
    }
    for (std::size_t c = 0; c < n_classes; ++c) {
      detail::TreeGrower grower(cuts, n, params, std::span(grad).subspan(c * n, n),
                                std::span(hess).subspan(c * n, n));
      trees.push_back(grower.grow(std::span(delta).subspan(c * n, n)));
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < n_classes; ++c) scores[i * n_classes + c] += delta[c * n + i];
    }
    if (trace) trace->log_loss.push_back(detail::mean_log_loss(scores, y, n_classes));
  }
  return BoostedClassifier(n_classes, d, std::move(base), std::move(trees), params.learning_rate,
                           params.max_depth);
}

// ---------------------------------------------------------------------------
// Serialization: flat pre-order node records per tree.

inline void write_tree(ByteWriter& w, const Tree& tree) {
  w.u32(static_cast<std::uint32_t>(tree.nodes().size()));
  for (const TreeNode& n : tree.nodes()) {
    w.u32(n.is_leaf ? 0 : n.feature);
    w.f64(n.is_leaf ? 0.0 : n.threshold);
    w.u8(n.default_left ? 1 : 0);
    w.u8(n.is_leaf ? 1 : 0);
    w.f64(n.is_leaf ? n.leaf_value : 0.0);
  }
}

namespace detail {

// Returns the index one past the subtree rooted at i, filling in `right`.
inline std::size_t link_preorder(std::vector<TreeNode>& nodes, std::size_t i, std::size_t depth) {
  if (i >= nodes.size()) throw ModelFormatError("tree encoding ends inside a subtree");
  if (depth > 256) throw ModelFormatError("tree too deep");
  if (nodes[i].is_leaf) return i + 1;
  const std::size_t right = link_preorder(nodes, i + 1, depth + 1);
  nodes[i].right = static_cast<std::uint32_t>(right);
  return link_preorder(nodes, right, depth + 1);
}

}  // namespace detail

inline Tree read_tree(ByteReader& r) {
  const std::uint32_t count = r.count(22);
  if (count == 0) throw ModelFormatError("empty tree");
  std::vector<TreeNode> nodes(count);
  for (TreeNode& n : nodes) {
    n.feature = r.u32();
    n.threshold = r.f64();
    n.default_left = r.u8() != 0;
    n.is_leaf = r.u8() != 0;
    n.leaf_value = r.f64();
    if (n.is_leaf) {
      n.feature = 0;
      n.threshold = 0.0;
    }
  }
  if (detail::link_preorder(nodes, 0, 0) != nodes.size()) {
    throw ModelFormatError("tree encoding has trailing nodes");
  }
  return Tree(std::move(nodes));
}

inline void write_classifier(ByteWriter& w, const BoostedClassifier& m) {
  w.u32(m.n_classes());
  w.u32(m.n_features());
  w.f64(m.learning_rate());
  w.u32(m.max_depth());
  w.u8(m.degenerate_class() ? 1 : 0);
  w.u32(m.degenerate_class().value_or(0));
  for (double b : m.base_score()) w.f64(b);
  w.u32(static_cast<std::uint32_t>(m.trees().size()));
  for (const Tree& t : m.trees()) write_tree(w, t);
}

inline BoostedClassifier read_classifier(ByteReader& r) {
  const std::uint32_t n_classes = r.u32();
  const std::uint32_t n_features = r.u32();
  const double lr = r.f64();
  const std::uint32_t max_depth = r.u32();
  const bool degenerate = r.u8() != 0;
  const std::uint32_t degenerate_class = r.u32();
  if (n_classes == 0 || static_cast<std::size_t>(n_classes) * 8 > r.remaining()) {
    throw ModelFormatError("invalid class count");
  }
  std::vector<double> base(n_classes);
  for (double& b : base) b = r.f64();
  const std::uint32_t n_trees = r.count(4);
  std::vector<Tree> trees;
  trees.reserve(n_trees);
  for (std::uint32_t t = 0; t < n_trees; ++t) trees.push_back(read_tree(r));
  try {
    return BoostedClassifier(n_classes, n_features, std::move(base), std::move(trees), lr,
                             max_depth,
                             degenerate ? std::optional<std::uint32_t>(degenerate_class)
                                        : std::nullopt);
  } catch (const ArgumentError& e) {
    throw ModelFormatError(std::string("invalid classifier block: ") + e.what());
  }
}

}  // namespace umtr::gbdt
