#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "wfr/dataset.hpp"
#include "wfr/rng.hpp"
#include "wfr/tree.hpp"

namespace wfr {

// Lazily evaluated RBF Gram matrix, K(x, z) = exp(-gamma |x - z|^2). Rows
// are cached on first use; the cache is shared by every binary problem
// solved over the same training rows.
class RbfKernelMatrix {
 public:
  RbfKernelMatrix(const Matrix& x, double gamma)
      : x_(x), gamma_(gamma), rows_(static_cast<std::size_t>(x.rows())) {}

  std::size_t size() const noexcept { return rows_.size(); }
  double gamma() const noexcept { return gamma_; }
  double diag(std::size_t) const noexcept { return 1.0; }

  std::span<const double> row(std::size_t i) {
    auto& r = rows_[i];
    if (r.empty()) {
      const auto n = size();
      const auto d = static_cast<std::size_t>(x_.cols());
      r.resize(n);
      const double* xi = x_.data() + i * d;
      for (std::size_t j = 0; j < n; ++j) {
        const double* xj = x_.data() + j * d;
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double diff = xi[c] - xj[c];
          s += diff * diff;
        }
        r[j] = std::exp(-gamma_ * s);
      }
    }
    return r;
  }

 private:
  const Matrix& x_;
  double gamma_;
  std::vector<std::vector<double>> rows_;
};

// Fully materialized Gram matrix (tests, small problems).
class DenseKernelMatrix {
 public:
  explicit DenseKernelMatrix(Matrix k) : k_(std::move(k)) {}
  std::size_t size() const noexcept { return static_cast<std::size_t>(k_.rows()); }
  double diag(std::size_t i) const noexcept {
    return k_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
  }
  std::span<const double> row(std::size_t i) const noexcept {
    return {k_.data() + i * size(), size()};
  }

 private:
  Matrix k_;
};

struct SmoOptions {
  double C = 1.0;
  double tolerance = 1e-3;
  // Unset means max(10^7, 100 n) working-set updates.
  std::optional<std::size_t> max_iterations;
  std::uint64_t seed = 0;
};

struct SmoResult {
  std::vector<double> alpha;
  double bias = 0.0;  // f(x) = sum_i alpha_i y_i K(x_i, x) + bias
  bool converged = false;
  std::size_t iterations = 0;
};

// Sequential minimal optimization of the soft-margin dual
//   min 1/2 a'Qa - 1'a,  Q_ij = y_i y_j K_ij,  0 <= a_i <= C,  y'a = 0,
// selecting each pair as the maximal violator plus the second-order best
// partner. Stops when the violation gap drops below `tolerance`, which
// bounds every KKT residual by the same amount. The seed fixes the scan
// order and therefore how ties between equally violating indices resolve.
template <typename Kernel>
SmoResult smo_solve(std::span<const std::int8_t> y, Kernel& kernel, const SmoOptions& opt = {}) {
  const std::size_t n = y.size();
  if (kernel.size() != n) throw std::invalid_argument("smo_solve: kernel/label size mismatch");
  const bool has_pos = std::find(y.begin(), y.end(), std::int8_t{1}) != y.end();
  const bool has_neg = std::find(y.begin(), y.end(), std::int8_t{-1}) != y.end();
  if (!has_pos || !has_neg) throw TrainingError("smo_solve needs at least one example of each sign");
  if (!(opt.C > 0.0)) throw std::invalid_argument("smo_solve: C must be > 0");

  constexpr double kTau = 1e-12;
  const double C = opt.C;
  const std::size_t budget = opt.max_iterations.value_or(std::max<std::size_t>(10'000'000, 100 * n));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(opt.seed);
  rng.shuffle(std::span<std::size_t>(order));

  SmoResult res;
  res.alpha.assign(n, 0.0);
  auto& alpha = res.alpha;
  std::vector<double> grad(n, -1.0);
  auto yv = [&](std::size_t t) { return static_cast<double>(y[t]); };
  auto at_upper = [&](std::size_t t) { return alpha[t] >= C; };
  auto at_lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

  while (res.iterations < budget) {
    // i: maximal violator in I_up.
    double gmax = -std::numeric_limits<double>::infinity();
    std::optional<std::size_t> i;
    for (auto t : order) {
      if (y[t] == 1) {
        if (!at_upper(t) && -grad[t] >= gmax) gmax = -grad[t], i = t;
      } else {
        if (!at_lower(t) && grad[t] >= gmax) gmax = grad[t], i = t;
      }
    }
    double gmax2 = -std::numeric_limits<double>::infinity();
    std::optional<std::size_t> j;
    if (i) {
      const auto ki = kernel.row(*i);
      const double kii = kernel.diag(*i);
      double best = std::numeric_limits<double>::infinity();
      for (auto t : order) {
        const double qit = yv(*i) * yv(t) * ki[t];
        if (y[t] == 1) {
          if (at_lower(t)) continue;
          const double diff = gmax + grad[t];
          gmax2 = std::max(gmax2, grad[t]);
          if (diff > 0) {
            double quad = kii + kernel.diag(t) - 2.0 * yv(*i) * qit;
            const double obj = -(diff * diff) / (quad > 0 ? quad : kTau);
            if (obj <= best) best = obj, j = t;
          }
        } else {
          if (at_upper(t)) continue;
          const double diff = gmax - grad[t];
          gmax2 = std::max(gmax2, -grad[t]);
          if (diff > 0) {
            double quad = kii + kernel.diag(t) + 2.0 * yv(*i) * qit;
            const double obj = -(diff * diff) / (quad > 0 ? quad : kTau);
            if (obj <= best) best = obj, j = t;
          }
        }
      }
    }
    if (!i || !j || gmax + gmax2 < opt.tolerance) {
      res.converged = true;
      break;
    }
    ++res.iterations;

    const std::size_t a = *i;
    const std::size_t b = *j;
    const auto ka = kernel.row(a);
    const auto kb = kernel.row(b);
    const double qab = yv(a) * yv(b) * ka[b];
    const double old_a = alpha[a];
    const double old_b = alpha[b];
    if (y[a] != y[b]) {
      double quad = kernel.diag(a) + kernel.diag(b) + 2.0 * qab;
      if (quad <= 0) quad = kTau;
      const double delta = (-grad[a] - grad[b]) / quad;
      const double diff = alpha[a] - alpha[b];
      alpha[a] += delta;
      alpha[b] += delta;
      if (diff > 0) {
        if (alpha[b] < 0) alpha[b] = 0, alpha[a] = diff;
      } else {
        if (alpha[a] < 0) alpha[a] = 0, alpha[b] = -diff;
      }
      if (diff > 0) {
        if (alpha[a] > C) alpha[a] = C, alpha[b] = C - diff;
      } else {
        if (alpha[b] > C) alpha[b] = C, alpha[a] = C + diff;
      }
    } else {
      double quad = kernel.diag(a) + kernel.diag(b) - 2.0 * qab;
      if (quad <= 0) quad = kTau;
      const double delta = (grad[a] - grad[b]) / quad;
      const double sum = alpha[a] + alpha[b];
      alpha[a] -= delta;
      alpha[b] += delta;
      if (sum > C) {
        if (alpha[a] > C) alpha[a] = C, alpha[b] = sum - C;
      } else {
        if (alpha[b] < 0) alpha[b] = 0, alpha[a] = sum;
      }
      if (sum > C) {
        if (alpha[b] > C) alpha[b] = C, alpha[a] = sum - C;
      } else {
        if (alpha[a] < 0) alpha[a] = 0, alpha[b] = sum;
      }
    }
    const double da = alpha[a] - old_a;
    const double db = alpha[b] - old_b;
    for (std::size_t t = 0; t < n; ++t)
      grad[t] += yv(t) * (yv(a) * ka[t] * da + yv(b) * kb[t] * db);
  }

  // Offset: mean of y_i G_i over free vectors, else the middle of the
  // feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = yv(t) * grad[t];
    if (at_upper(t)) {
      if (y[t] == -1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (at_lower(t)) {
      if (y[t] == 1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
  res.bias = -rho;
  return res;
}

struct SvmParams {
  double C = 1.0;
  // Unset means 1 / (d * mean per-feature variance of the training rows).
  std::optional<double> gamma;
  double tolerance = 1e-3;
};

struct BinarySvm {
  Matrix support_vectors;
  Vector coef;  // alpha_i * y_i
  double bias = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
};

struct SVMModel {
  std::array<BinarySvm, kNumClasses> machines;
  double gamma = 1.0;
  double C = 1.0;

  bool converged() const {
    return std::all_of(machines.begin(), machines.end(), [](const BinarySvm& m) { return m.converged; });
  }

  std::array<double, kNumClasses> decision(std::span<const double> x) const {
    std::array<double, kNumClasses> out;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      const auto& m = machines[k];
      double f = m.bias;
      const auto d = static_cast<std::size_t>(m.support_vectors.cols());
      for (Eigen::Index s = 0; s < m.support_vectors.rows(); ++s) {
        const double* sv = m.support_vectors.data() + static_cast<std::size_t>(s) * d;
        double dist = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double diff = sv[c] - x[c];
          dist += diff * diff;
        }
        f += m.coef(s) * std::exp(-gamma * dist);
      }
      out[k] = f;
    }
    return out;
  }

  ClassLabel predict(std::span<const double> x) const {
    return class_from_index(argmax_lowest(decision(x)));
  }
};

inline double scale_gamma(const Matrix& x) {
  double mean_var = 0.0;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mu = x.col(c).mean();
    mean_var += (x.col(c).array() - mu).square().mean();
  }
  mean_var /= static_cast<double>(x.cols());
  return mean_var > 0.0 ? 1.0 / (static_cast<double>(x.cols()) * mean_var) : 1.0;
}

// One-vs-rest RBF SVM. Non-convergence is reported through
// BinarySvm::converged, never thrown.
inline SVMModel fit_svm(const Matrix& x, std::span<const ClassLabel> labels, const SvmParams& params = {},
                        std::uint64_t seed = 0) {
  std::array<std::size_t, kNumClasses> counts{};
  for (auto l : labels) ++counts[class_index(l)];
  for (std::size_t k = 0; k < kNumClasses; ++k)
    if (counts[k] == 0)
      throw TrainingError("SVM: class " + std::string(class_name(class_from_index(k))) +
                          " absent from training data");
  SVMModel model;
  model.C = params.C;
  model.gamma = params.gamma.value_or(scale_gamma(x));
  RbfKernelMatrix kernel(x, model.gamma);
  std::vector<std::int8_t> y(labels.size());
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    for (std::size_t i = 0; i < labels.size(); ++i) y[i] = class_index(labels[i]) == k ? 1 : -1;
    SmoOptions opt;
    opt.C = params.C;
    opt.tolerance = params.tolerance;
    opt.seed = derive_seed(seed, k);
    const auto sol = smo_solve(std::span<const std::int8_t>(y), kernel, opt);
    auto& m = model.machines[k];
    std::vector<std::size_t> sv;
    for (std::size_t i = 0; i < sol.alpha.size(); ++i)
      if (sol.alpha[i] > 0.0) sv.push_back(i);
    m.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
    m.coef.resize(static_cast<Eigen::Index>(sv.size()));
    for (std::size_t s = 0; s < sv.size(); ++s) {
      m.support_vectors.row(static_cast<Eigen::Index>(s)) = x.row(static_cast<Eigen::Index>(sv[s]));
      m.coef(static_cast<Eigen::Index>(s)) = sol.alpha[sv[s]] * y[sv[s]];
    }
    m.bias = sol.bias;
    m.converged = sol.converged;
    m.iterations = sol.iterations;
  }
  return model;
}

inline SVMModel fit_svm(const Dataset& train, const SvmParams& params = {}, std::uint64_t seed = 0) {
  return fit_svm(train.features(), train.labels(), params, seed);
}

}  // namespace wfr
