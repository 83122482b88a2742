#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "wfr/dataset.hpp"

namespace wfr {

inline constexpr std::size_t kDefaultNeighbours = 5;

// Exact brute-force k-nearest-neighbour vote under the Euclidean metric.
// Distance ties go to the lower training row, vote ties to the lower class.
struct KNNModel {
  Matrix train;
  std::vector<ClassLabel> labels;
  std::size_t k = kDefaultNeighbours;

  std::vector<std::size_t> neighbours(std::span<const double> query) const {
    const auto n = static_cast<std::size_t>(train.rows());
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = train.data() + i * query.size();
      double s = 0.0;
      for (std::size_t j = 0; j < query.size(); ++j) {
        const double diff = row[j] - query[j];
        s += diff * diff;
      }
      dist[i] = {s, i};
    }
    const auto kth = dist.begin() + static_cast<std::ptrdiff_t>(k);
    std::partial_sort(dist.begin(), kth, dist.end());
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = dist[i].second;
    return out;
  }

  ClassLabel predict(std::span<const double> query) const {
    std::array<std::size_t, kNumClasses> votes{};
    for (auto i : neighbours(query)) ++votes[class_index(labels[i])];
    return class_from_index(argmax_lowest(votes));
  }
};

inline KNNModel fit_knn(const Matrix& x, std::span<const ClassLabel> y, std::size_t k = kDefaultNeighbours) {
  if (k < 1 || k > static_cast<std::size_t>(x.rows()))
    throw std::invalid_argument("k must be in 1..n_train");
  return KNNModel{x, std::vector<ClassLabel>(y.begin(), y.end()), k};
}

inline KNNModel fit_knn(const Dataset& train, std::size_t k = kDefaultNeighbours) {
  return fit_knn(train.features(), train.labels(), k);
}

inline ClassLabel predict_knn(const KNNModel& model, std::span<const double> query) {
  return model.predict(query);
}

}  // namespace wfr
