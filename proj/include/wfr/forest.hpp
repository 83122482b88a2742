#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "wfr/parallel.hpp"
#include "wfr/tree.hpp"

namespace wfr {

struct ForestParams {
  std::size_t n_trees = 100;
  // Features tried per split; unset means ceil(sqrt(d)).
  std::optional<std::size_t> max_features;
  bool bootstrap = true;
  TreeParams tree;
};

struct ForestModel {
  std::vector<Tree> trees;
  std::vector<std::uint64_t> tree_seeds;
  std::size_t max_features = 0;

  ClassLabel predict(std::span<const double> x) const {
    std::array<std::size_t, kNumClasses> votes{};
    for (const auto& t : trees) ++votes[class_index(t.predict(x))];
    return class_from_index(argmax_lowest(votes));
  }
};

inline std::size_t default_max_features(std::size_t d) {
  return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
}

// Bagged CART ensemble with per-split feature subsampling and majority vote.
// Tree seeds are derived from `seed` before any tree is grown, so the
// result does not depend on `jobs`.
inline ForestModel fit_random_forest(const Matrix& features, std::span<const ClassLabel> labels,
                                     const ForestParams& params, std::uint64_t seed, std::size_t jobs = 1) {
  if (params.n_trees == 0) throw std::invalid_argument("n_trees must be >= 1");
  if (features.rows() == 0) throw TrainingError("empty training set");
  const auto n = static_cast<std::size_t>(features.rows());
  const auto d = static_cast<std::size_t>(features.cols());
  const std::size_t m = params.max_features.value_or(default_max_features(d));
  if (m < 1 || m > d) throw std::invalid_argument("max_features must be in 1..d");

  ForestModel model;
  model.max_features = m;
  model.trees.resize(params.n_trees);
  model.tree_seeds.resize(params.n_trees);
  for (std::size_t t = 0; t < params.n_trees; ++t) model.tree_seeds[t] = derive_seed(seed, t);

  std::optional<detail::PresortedColumns> shared;
  std::vector<std::uint8_t> shared_codes;
  if (!params.bootstrap) {
    shared.emplace(features);
    shared_codes = detail::label_codes(labels);
  }

  parallel_for(params.n_trees, jobs, [&](std::size_t t) {
    Rng rng(model.tree_seeds[t]);
    const detail::FeatureSampler sampler{m, &rng};
    if (!params.bootstrap) {
      const detail::GiniCriterion crit{shared_codes};
      model.trees[t] = detail::TreeBuilder(*shared, crit, params.tree, sampler).build();
      return;
    }
    Matrix xb(features.rows(), features.cols());
    std::vector<std::uint8_t> yb(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto src = static_cast<Eigen::Index>(rng.below(n));
      xb.row(static_cast<Eigen::Index>(i)) = features.row(src);
      yb[i] = static_cast<std::uint8_t>(labels[static_cast<std::size_t>(src)]);
    }
    const detail::PresortedColumns columns(xb);
    const detail::GiniCriterion crit{yb};
    model.trees[t] = detail::TreeBuilder(columns, crit, params.tree, sampler).build();
  });
  return model;
}

inline ForestModel fit_random_forest(const Dataset& train, const ForestParams& params, std::uint64_t seed,
                                     std::size_t jobs = 1) {
  return fit_random_forest(train.features(), train.labels(), params, seed, jobs);
}

}  // namespace wfr
