#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "wfr/tree.hpp"

namespace wfr {

struct BoostParams {
  std::size_t stages = 100;
  double learning_rate = 0.1;
  std::size_t max_depth = 3;
};

using ClassScores = std::array<double, kNumClasses>;
using ClassProbabilities = std::array<double, kNumClasses>;

inline ClassProbabilities softmax4(const ClassScores& f) {
  const double top = *std::max_element(f.begin(), f.end());
  ClassProbabilities p;
  double sum = 0.0;
  for (std::size_t k = 0; k < kNumClasses; ++k) sum += p[k] = std::exp(f[k] - top);
  for (auto& v : p) v /= sum;
  return p;
}

// One regression tree per class per stage on softmax pseudo-residuals.
struct BoostModel {
  ClassScores initial{};
  std::vector<std::array<Tree, kNumClasses>> stages;
  double learning_rate = 0.1;

  ClassScores decision(std::span<const double> x) const {
    ClassScores f = initial;
    for (const auto& stage : stages)
      for (std::size_t k = 0; k < kNumClasses; ++k) f[k] += learning_rate * stage[k].score(x);
    return f;
  }

  ClassProbabilities predict_proba(std::span<const double> x) const { return softmax4(decision(x)); }

  ClassLabel predict(std::span<const double> x) const {
    return class_from_index(argmax_lowest(predict_proba(x)));
  }
};

// Mean multinomial deviance (negative log-likelihood) of the model scores.
inline double multinomial_deviance(const BoostModel& model, const Matrix& x, std::span<const ClassLabel> y) {
  double total = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto p = model.predict_proba({x.data() + r * x.cols(), static_cast<std::size_t>(x.cols())});
    total -= std::log(std::max(p[class_index(y[static_cast<std::size_t>(r)])], 1e-300));
  }
  return total / static_cast<double>(x.rows());
}

// Multiclass gradient boosting with the multinomial deviance. Scores start
// at the log class priors; each stage fits, per class, a depth-limited
// least-squares tree to (one-hot - probability) and replaces its leaf values
// by the one-step Newton estimate
//   (K-1)/K * sum(r) / sum(|r| (1 - |r|)).
// `seed` is unused: without row subsampling the fit is deterministic.
inline BoostModel fit_gradient_boost(const Matrix& features, std::span<const ClassLabel> labels,
                                     const BoostParams& params = {}, std::uint64_t seed = 0) {
  (void)seed;
  if (!(params.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (features.rows() == 0) throw TrainingError("empty training set");
  const auto n = static_cast<std::size_t>(features.rows());

  BoostModel model;
  model.learning_rate = params.learning_rate;
  std::array<std::size_t, kNumClasses> counts{};
  for (auto l : labels) ++counts[class_index(l)];
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    const double prior = static_cast<double>(counts[k]) / static_cast<double>(n);
    model.initial[k] = std::log(std::max(prior, std::numeric_limits<double>::min()));
  }

  std::vector<ClassScores> scores(n, model.initial);
  std::vector<ClassProbabilities> probs(n);
  std::vector<double> residual(n);
  const detail::PresortedColumns columns(features);
  TreeParams tree_params;
  tree_params.max_depth = params.max_depth;
  constexpr double kScale = static_cast<double>(kNumClasses - 1) / static_cast<double>(kNumClasses);

  auto newton_leaf = [&residual](std::span<const std::uint32_t> ids) {
    double num = 0.0;
    double den = 0.0;
    for (auto id : ids) {
      const double r = residual[id];
      num += r;
      den += std::abs(r) * (1.0 - std::abs(r));
    }
    if (den < 1e-150) return 0.0;
    return kScale * num / den;
  };
  using Criterion = detail::SquaredErrorCriterion<decltype(newton_leaf)>;

  model.stages.reserve(params.stages);
  for (std::size_t m = 0; m < params.stages; ++m) {
    for (std::size_t i = 0; i < n; ++i) probs[i] = softmax4(scores[i]);
    auto& stage = model.stages.emplace_back();
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      for (std::size_t i = 0; i < n; ++i)
        residual[i] = (class_index(labels[i]) == k ? 1.0 : 0.0) - probs[i][k];
      const Criterion crit{residual, newton_leaf};
      stage[k] = detail::TreeBuilder(columns, crit, tree_params).build();
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::span<const double> row(features.data() + i * static_cast<std::size_t>(features.cols()),
                                        static_cast<std::size_t>(features.cols()));
      for (std::size_t k = 0; k < kNumClasses; ++k)
        scores[i][k] += params.learning_rate * stage[k].score(row);
    }
  }
  return model;
}

inline BoostModel fit_gradient_boost(const Dataset& train, const BoostParams& params = {},
                                     std::uint64_t seed = 0) {
  return fit_gradient_boost(train.features(), train.labels(), params, seed);
}

}  // namespace wfr
