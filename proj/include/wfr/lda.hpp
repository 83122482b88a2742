#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "wfr/dataset.hpp"
#include "wfr/tree.hpp"

namespace wfr {

// Linear discriminant analysis with a shared (pooled) covariance.
// delta_k(x) = x' S^-1 mu_k - 1/2 mu_k' S^-1 mu_k + log pi_k, stored as
// coefficients S^-1 mu_k and intercepts.
struct LDAModel {
  std::array<Vector, kNumClasses> means;
  Matrix covariance;  // pooled, ridge already added
  std::array<double, kNumClasses> priors{};
  std::array<Vector, kNumClasses> coef;
  std::array<double, kNumClasses> intercept{};

  // Builds the discriminants from means/covariance/priors.
  static LDAModel from_parameters(std::array<Vector, kNumClasses> means, Matrix covariance,
                                  std::array<double, kNumClasses> priors) {
    LDAModel m;
    m.means = std::move(means);
    m.covariance = std::move(covariance);
    m.priors = priors;
    const Eigen::LLT<Eigen::MatrixXd> llt(m.covariance);
    if (llt.info() != Eigen::Success) throw TrainingError("LDA covariance factorization failed");
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      if (m.priors[k] <= 0.0) {
        m.coef[k] = Vector::Zero(m.covariance.cols());
        m.intercept[k] = -std::numeric_limits<double>::infinity();
        continue;
      }
      m.coef[k] = llt.solve(m.means[k]);
      m.intercept[k] = -0.5 * m.means[k].dot(m.coef[k]) + std::log(m.priors[k]);
    }
    return m;
  }

  std::array<double, kNumClasses> discriminants(std::span<const double> x) const {
    const Eigen::Map<const Vector> v(x.data(), static_cast<Eigen::Index>(x.size()));
    std::array<double, kNumClasses> out;
    for (std::size_t k = 0; k < kNumClasses; ++k) out[k] = coef[k].dot(v) + intercept[k];
    return out;
  }

  ClassLabel predict(std::span<const double> x) const {
    return class_from_index(argmax_lowest(discriminants(x)));
  }
};

inline constexpr double kLdaRidge = 1e-8;

inline LDAModel fit_lda(const Matrix& x, std::span<const ClassLabel> y) {
  const auto n = x.rows();
  const auto d = x.cols();
  std::array<std::size_t, kNumClasses> counts{};
  for (auto l : y) ++counts[class_index(l)];
  for (std::size_t k = 0; k < kNumClasses; ++k)
    if (counts[k] < 2)
      throw TrainingError("LDA needs at least 2 rows of every class; " +
                          std::string(class_name(class_from_index(k))) + " has " +
                          std::to_string(counts[k]));

  std::array<Vector, kNumClasses> means;
  for (auto& m : means) m = Vector::Zero(d);
  for (Eigen::Index r = 0; r < n; ++r) means[class_index(y[static_cast<std::size_t>(r)])] += x.row(r).transpose();
  for (std::size_t k = 0; k < kNumClasses; ++k) means[k] /= static_cast<double>(counts[k]);

  Matrix cov = Matrix::Zero(d, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Vector c = x.row(r).transpose() - means[class_index(y[static_cast<std::size_t>(r)])];
    cov.noalias() += c * c.transpose();
  }
  cov /= static_cast<double>(n - static_cast<Eigen::Index>(kNumClasses));
  const double ridge = kLdaRidge * cov.trace() / static_cast<double>(d);
  cov.diagonal().array() += ridge;

  std::array<double, kNumClasses> priors{};
  for (std::size_t k = 0; k < kNumClasses; ++k)
    priors[k] = static_cast<double>(counts[k]) / static_cast<double>(n);
  return LDAModel::from_parameters(std::move(means), std::move(cov), priors);
}

inline LDAModel fit_lda(const Dataset& train) { return fit_lda(train.features(), train.labels()); }

}  // namespace wfr
