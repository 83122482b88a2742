#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wfr/dataset.hpp"
#include "wfr/rng.hpp"

namespace wfr {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ClassCounts = std::array<std::uint32_t, kNumClasses>;

template <typename Count>
double gini_impurity(const std::array<Count, kNumClasses>& counts) {
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  if (total <= 0.0) throw std::invalid_argument("gini_impurity: all class counts are zero");
  double sum_sq = 0.0;
  for (auto c : counts) {
    const double p = static_cast<double>(c) / total;
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

struct TreeParams {
  std::optional<std::size_t> max_depth;  // root has depth 0
  std::size_t min_samples_split = 2;
  // Features the tree may split on; empty means all.
  std::vector<std::size_t> allowed_features;

  void validate() const {
    if (min_samples_split < 2) throw std::invalid_argument("min_samples_split must be >= 2");
  }
};

// Flat preorder node. Internal nodes route `x[feature] <= threshold` left.
// Leaves carry either class counts (classification trees) or a score
// (regression trees used by boosting).
struct TreeNode {
  static constexpr std::int32_t kLeaf = -1;

  std::int32_t feature = kLeaf;
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  ClassCounts counts{};
  double value = 0.0;

  bool is_leaf() const noexcept { return feature == kLeaf; }
};

class Tree {
 public:
  Tree() = default;
  Tree(std::vector<TreeNode> nodes, std::size_t n_features)
      : nodes_(std::move(nodes)), n_features_(n_features) {}

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  std::size_t n_features() const noexcept { return n_features_; }

  const TreeNode& leaf(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
      const auto& n = nodes_[i];
      i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes_[i];
  }

  ClassLabel predict(std::span<const double> x) const {
    return class_from_index(argmax_lowest(leaf(x).counts));
  }

  double score(std::span<const double> x) const { return leaf(x).value; }

  std::size_t depth() const { return nodes_.empty() ? 0 : depth_from(0); }

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }

  // Sorted list of features tested by internal nodes.
  std::vector<std::size_t> used_features() const {
    std::vector<std::size_t> out;
    for (const auto& n : nodes_)
      if (!n.is_leaf()) out.push_back(static_cast<std::size_t>(n.feature));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  std::size_t depth_from(std::size_t i) const {
    const auto& n = nodes_[i];
    if (n.is_leaf()) return 0;
    return 1 + std::max(depth_from(n.left), depth_from(n.right));
  }

  std::vector<TreeNode> nodes_;
  std::size_t n_features_ = 0;
};

struct Split {
  std::size_t feature = 0;
  double threshold = 0.0;
  double decrease = 0.0;
};

namespace detail {

// Midpoint between consecutive distinct sorted values; falls back to the
// lower value if rounding lands on the upper one, so lo <= t < hi.
inline double split_threshold(double lo, double hi) {
  double t = lo / 2.0 + hi / 2.0;
  if (t >= hi || !std::isfinite(t)) t = lo;
  return t;
}

// Per-feature sample orderings (ascending value, ties by sample id),
// computed once per training matrix and copied into each tree build.
class PresortedColumns {
 public:
  PresortedColumns(const Matrix& x) : values_(x), order_(static_cast<std::size_t>(x.cols())) {
    const auto n = static_cast<std::uint32_t>(x.rows());
    for (std::size_t f = 0; f < order_.size(); ++f) {
      auto& ord = order_[f];
      ord.resize(n);
      std::iota(ord.begin(), ord.end(), 0u);
      const double* col = values_.col(static_cast<Eigen::Index>(f)).data();
      std::stable_sort(ord.begin(), ord.end(),
                       [col](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
    }
  }

  const Eigen::MatrixXd& values() const noexcept { return values_; }
  const std::vector<std::vector<std::uint32_t>>& order() const noexcept { return order_; }
  std::size_t rows() const noexcept { return static_cast<std::size_t>(values_.rows()); }
  std::size_t cols() const noexcept { return order_.size(); }

 private:
  Eigen::MatrixXd values_;  // column-major copy for fast column scans
  std::vector<std::vector<std::uint32_t>> order_;
};

struct GiniCriterion {
  using Stats = ClassCounts;
  std::span<const std::uint8_t> labels;

  Stats empty() const { return {}; }
  void add(Stats& s, std::uint32_t id) const { ++s[labels[id]]; }
  static Stats minus(const Stats& a, const Stats& b) {
    Stats out;
    for (std::size_t k = 0; k < kNumClasses; ++k) out[k] = a[k] - b[k];
    return out;
  }
  static std::uint32_t count(const Stats& s) { return std::accumulate(s.begin(), s.end(), 0u); }
  static bool terminal(const Stats& s) {
    return std::count_if(s.begin(), s.end(), [](auto c) { return c > 0; }) <= 1;
  }
  static double impurity(const Stats& s) { return gini_impurity(s); }
  static double decrease(const Stats& parent, const Stats& left, const Stats& right) {
    const double n = count(parent);
    const double nl = count(left);
    const double nr = count(right);
    return impurity(parent) - (nl / n) * impurity(left) - (nr / n) * impurity(right);
  }
  void fill_leaf(TreeNode& node, const Stats& s, std::span<const std::uint32_t>) const {
    node.counts = s;
  }
};

struct SquaredErrorStats {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::uint32_t n = 0;
};

// Least-squares regression on real targets; leaf values come from a
// caller-supplied estimator over the leaf's sample ids.
template <typename LeafValue>
struct SquaredErrorCriterion {
  using Stats = SquaredErrorStats;
  std::span<const double> targets;
  LeafValue leaf_value;

  Stats empty() const { return {}; }
  void add(Stats& s, std::uint32_t id) const {
    const double t = targets[id];
    s.sum += t;
    s.sum_sq += t * t;
    ++s.n;
  }
  static Stats minus(const Stats& a, const Stats& b) { return {a.sum - b.sum, a.sum_sq - b.sum_sq, a.n - b.n}; }
  static std::uint32_t count(const Stats& s) { return s.n; }
  static bool terminal(const Stats& s) {
    const double mean = s.sum / s.n;
    return s.sum_sq / s.n - mean * mean <= std::numeric_limits<double>::epsilon();
  }
  // Reduction in sum of squared errors, per parent sample.
  static double decrease(const Stats& parent, const Stats& left, const Stats& right) {
    return (left.sum * left.sum / left.n + right.sum * right.sum / right.n -
            parent.sum * parent.sum / parent.n) /
           parent.n;
  }
  void fill_leaf(TreeNode& node, const Stats&, std::span<const std::uint32_t> ids) const {
    node.value = leaf_value(ids);
  }
};

// Optional per-node feature subsampling (random forests): features are
// visited in a fresh random order at every node until `m` features that are
// not constant within the node have been evaluated.
struct FeatureSampler {
  std::size_t m = 0;
  Rng* rng = nullptr;
};

template <typename Criterion>
class TreeBuilder {
 public:
  TreeBuilder(const PresortedColumns& columns, const Criterion& criterion, const TreeParams& params,
              std::optional<FeatureSampler> sampler = std::nullopt)
      : columns_(columns),
        criterion_(criterion),
        params_(params),
        sampler_(sampler),
        order_(columns.order()),
        goes_left_(columns.rows(), 0),
        scratch_(columns.rows()) {
    params_.validate();
    features_ = params_.allowed_features;
    if (features_.empty()) {
      features_.resize(columns.cols());
      std::iota(features_.begin(), features_.end(), std::size_t{0});
    }
    for (auto f : features_)
      if (f >= columns.cols()) throw std::invalid_argument("allowed feature index out of range");
    std::sort(features_.begin(), features_.end());
    features_.erase(std::unique(features_.begin(), features_.end()), features_.end());
  }

  Tree build() {
    if (columns_.rows() == 0) throw TrainingError("empty training set");
    nodes_.clear();
    grow(0, static_cast<std::uint32_t>(columns_.rows()), 0);
    return Tree(std::move(nodes_), columns_.cols());
  }

  // Best split of the whole training set, without building anything.
  std::optional<Split> root_split() {
    const auto stats = node_stats(0, static_cast<std::uint32_t>(columns_.rows()));
    if (Criterion::terminal(stats)) return std::nullopt;
    auto best = find_split(0, static_cast<std::uint32_t>(columns_.rows()), stats);
    if (!best) return std::nullopt;
    return best->split;
  }

 private:
  struct Candidate {
    Split split;
    std::uint32_t left_size = 0;
  };

  typename Criterion::Stats node_stats(std::uint32_t begin, std::uint32_t end) const {
    auto s = criterion_.empty();
    const auto& ord = order_[features_.front()];
    for (auto i = begin; i < end; ++i) criterion_.add(s, ord[i]);
    return s;
  }

  // Scans one feature's sorted segment; returns false when the feature is
  // constant within the node.
  bool scan_feature(std::size_t f, std::uint32_t begin, std::uint32_t end,
                    const typename Criterion::Stats& parent, std::optional<Candidate>& best) const {
    const auto& ord = order_[f];
    const double* col = columns_.values().col(static_cast<Eigen::Index>(f)).data();
    if (col[ord[begin]] == col[ord[end - 1]]) return false;
    auto left = criterion_.empty();
    for (auto i = begin; i + 1 < end; ++i) {
      criterion_.add(left, ord[i]);
      const double lo = col[ord[i]];
      const double hi = col[ord[i + 1]];
      if (lo == hi) continue;
      const auto right = Criterion::minus(parent, left);
      const double dec = Criterion::decrease(parent, left, right);
      if (!best || dec > best->split.decrease ||
          (dec == best->split.decrease && f < best->split.feature)) {
        best = Candidate{{f, split_threshold(lo, hi), dec}, i + 1 - begin};
      }
    }
    return true;
  }

  std::optional<Candidate> find_split(std::uint32_t begin, std::uint32_t end,
                                      const typename Criterion::Stats& parent) {
    std::optional<Candidate> best;
    if (!sampler_) {
      for (auto f : features_) scan_feature(f, begin, end, parent, best);
      return best;
    }
    visit_.assign(features_.begin(), features_.end());
    sampler_->rng->shuffle(std::span<std::size_t>(visit_));
    std::size_t evaluated = 0;
    for (auto f : visit_) {
      if (evaluated >= sampler_->m) break;
      if (scan_feature(f, begin, end, parent, best)) ++evaluated;
    }
    return best;
  }

  std::uint32_t grow(std::uint32_t begin, std::uint32_t end, std::size_t depth) {
    const auto index = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    const auto stats = node_stats(begin, end);
    const bool stop = Criterion::terminal(stats) || end - begin < params_.min_samples_split ||
                      (params_.max_depth && depth >= *params_.max_depth);
    std::optional<Candidate> best;
    if (!stop) best = find_split(begin, end, stats);
    if (!best) {
      const auto& ord = order_[features_.front()];
      criterion_.fill_leaf(nodes_[index], stats,
                           std::span<const std::uint32_t>(ord.data() + begin, end - begin));
      return index;
    }
    const auto mid = begin + best->left_size;
    partition(best->split.feature, begin, mid, end);
    nodes_[index].feature = static_cast<std::int32_t>(best->split.feature);
    nodes_[index].threshold = best->split.threshold;
    const auto l = grow(begin, mid, depth + 1);
    const auto r = grow(mid, end, depth + 1);
    nodes_[index].left = l;
    nodes_[index].right = r;
    return index;
  }

  // Stable partition of every feature's segment so the first `mid - begin`
  // entries are the samples routed left by the chosen feature.
  void partition(std::size_t split_feature, std::uint32_t begin, std::uint32_t mid, std::uint32_t end) {
    const auto& chosen = order_[split_feature];
    for (auto i = begin; i < end; ++i) goes_left_[chosen[i]] = i < mid;
    for (auto f : features_) {
      if (f == split_feature) continue;
      auto& ord = order_[f];
      std::uint32_t l = begin;
      std::uint32_t r = 0;
      for (auto i = begin; i < end; ++i) {
        const auto id = ord[i];
        if (goes_left_[id]) ord[l++] = id;
        else scratch_[r++] = id;
      }
      std::copy(scratch_.begin(), scratch_.begin() + r, ord.begin() + l);
    }
  }

  const PresortedColumns& columns_;
  const Criterion& criterion_;
  TreeParams params_;
  std::optional<FeatureSampler> sampler_;
  std::vector<std::size_t> features_;
  std::vector<std::size_t> visit_;
  std::vector<std::vector<std::uint32_t>> order_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<std::uint32_t> scratch_;
  std::vector<TreeNode> nodes_;
};

inline std::vector<std::uint8_t> label_codes(std::span<const ClassLabel> labels) {
  std::vector<std::uint8_t> out(labels.size());
  std::transform(labels.begin(), labels.end(), out.begin(),
                 [](ClassLabel c) { return static_cast<std::uint8_t>(c); });
  return out;
}

}  // namespace detail

// Best Gini split over `candidate_features`. Ties go to the lowest feature
// index, then the lowest threshold. Splits with zero decrease are legal
// (needed for XOR-like layouts); nothing is returned when the labels are
// already pure or every candidate feature is constant.
inline std::optional<Split> best_split(const Matrix& features, std::span<const ClassLabel> labels,
                                       std::span<const std::size_t> candidate_features) {
  if (features.rows() < 2 || candidate_features.empty()) return std::nullopt;
  const detail::PresortedColumns columns(features);
  const auto codes = detail::label_codes(labels);
  const detail::GiniCriterion crit{codes};
  TreeParams params;
  params.allowed_features.assign(candidate_features.begin(), candidate_features.end());
  detail::TreeBuilder builder(columns, crit, params);
  return builder.root_split();
}

// CART classification tree (Gini). `seed` is accepted for interface
// symmetry with the ensembles; a single tree is deterministic without it.
inline Tree fit_decision_tree(const Matrix& features, std::span<const ClassLabel> labels,
                              const TreeParams& params = {}, std::uint64_t seed = 0) {
  (void)seed;
  if (features.rows() == 0) throw TrainingError("empty training set");
  const detail::PresortedColumns columns(features);
  const auto codes = detail::label_codes(labels);
  const detail::GiniCriterion crit{codes};
  return detail::TreeBuilder(columns, crit, params).build();
}

inline Tree fit_decision_tree(const Dataset& train, const TreeParams& params = {}, std::uint64_t seed = 0) {
  return fit_decision_tree(train.features(), train.labels(), params, seed);
}

inline std::vector<ClassLabel> predict_all(const Tree& tree, const Matrix& x) {
  std::vector<ClassLabel> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    out[static_cast<std::size_t>(r)] =
        tree.predict(std::span<const double>(x.data() + r * x.cols(), static_cast<std::size_t>(x.cols())));
  return out;
}

inline std::string format_real(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline std::vector<std::string> default_feature_names(std::size_t n) {
  std::vector<std::string> names(n);
  for (std::size_t i = 0; i < n; ++i) names[i] = "X_" + std::to_string(i);
  return names;
}

// Graphviz digraph of a classification tree. Node ids are preorder
// positions; the left edge is the `<=` branch.
inline std::string export_tree_text(const Tree& tree, std::span<const std::string> feature_names = {}) {
  std::vector<std::string> fallback;
  if (feature_names.empty()) {
    fallback = default_feature_names(tree.n_features());
    feature_names = fallback;
  }
  std::ostringstream out;
  out << "digraph Tree {\n";
  out << "node [shape=box, style=\"rounded\", fontname=\"helvetica\"] ;\n";
  const auto& nodes = tree.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    std::string counts = "[";
    for (std::size_t k = 0; k < kNumClasses; ++k)
      counts += (k ? ", " : "") + std::to_string(n.counts[k]);
    counts += "]";
    out << i << " [label=\"";
    if (n.is_leaf()) {
      out << "class = " << class_name(class_from_index(argmax_lowest(n.counts))) << "\\nvalue = " << counts;
    } else {
      out << feature_names[static_cast<std::size_t>(n.feature)] << " ≤ " << format_real(n.threshold);
    }
    out << "\"] ;\n";
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (n.is_leaf()) continue;
    out << i << " -> " << n.left << " [label=\"True\"] ;\n";
    out << i << " -> " << n.right << " [label=\"False\"] ;\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace wfr
