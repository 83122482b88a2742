#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>

#include "wfr/dataset.hpp"
#include "wfr/tree.hpp"

namespace wfr {

struct GNBModel {
  std::array<double, kNumClasses> priors{};
  std::array<Vector, kNumClasses> means;
  std::array<Vector, kNumClasses> variances;  // smoothing included
  double smoothing = 0.0;

  std::array<double, kNumClasses> log_posterior(std::span<const double> x) const {
    std::array<double, kNumClasses> out;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      double s = std::log(priors[k]);
      for (std::size_t j = 0; j < x.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const double var = variances[k](jj);
        const double diff = x[j] - means[k](jj);
        s -= 0.5 * std::log(2.0 * std::numbers::pi * var) + diff * diff / (2.0 * var);
      }
      out[k] = s;
    }
    return out;
  }

  ClassLabel predict(std::span<const double> x) const {
    return class_from_index(argmax_lowest(log_posterior(x)));
  }
};

inline constexpr double kGnbSmoothing = 1e-9;

// Per-class Gaussian fit with population variances; every variance gets
// kGnbSmoothing times the largest feature variance of the whole set.
inline GNBModel fit_gnb(const Matrix& x, std::span<const ClassLabel> y) {
  const auto n = x.rows();
  const auto d = x.cols();
  std::array<std::size_t, kNumClasses> counts{};
  for (auto l : y) ++counts[class_index(l)];
  for (std::size_t k = 0; k < kNumClasses; ++k)
    if (counts[k] == 0)
      throw TrainingError("GNB: class " + std::string(class_name(class_from_index(k))) +
                          " absent from training data");

  double max_var = 0.0;
  for (Eigen::Index c = 0; c < d; ++c) {
    const double mu = x.col(c).mean();
    max_var = std::max(max_var, (x.col(c).array() - mu).square().mean());
  }

  GNBModel m;
  m.smoothing = kGnbSmoothing * max_var;
  if (!(m.smoothing > 0.0)) m.smoothing = kGnbSmoothing;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    m.means[k] = Vector::Zero(d);
    m.variances[k] = Vector::Zero(d);
    m.priors[k] = static_cast<double>(counts[k]) / static_cast<double>(n);
  }
  for (Eigen::Index r = 0; r < n; ++r) m.means[class_index(y[static_cast<std::size_t>(r)])] += x.row(r).transpose();
  for (std::size_t k = 0; k < kNumClasses; ++k) m.means[k] /= static_cast<double>(counts[k]);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto k = class_index(y[static_cast<std::size_t>(r)]);
    m.variances[k].array() += (x.row(r).transpose() - m.means[k]).array().square();
  }
  for (std::size_t k = 0; k < kNumClasses; ++k)
    m.variances[k] = (m.variances[k].array() / static_cast<double>(counts[k]) + m.smoothing).matrix();
  return m;
}

inline GNBModel fit_gnb(const Dataset& train) { return fit_gnb(train.features(), train.labels()); }

}  // namespace wfr
