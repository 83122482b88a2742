#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "support/synthetic.hpp"
#include "support/toy.hpp"
#include "wfr/evaluation.hpp"
#include "wfr/svm.hpp"

namespace {

using namespace wfr::testing;
using wfr::Matrix;

Matrix rbf(const Matrix& x, double gamma) {
  Matrix k(x.rows(), x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.rows(); ++j) k(i, j) = std::exp(-gamma * (x.row(i) - x.row(j)).squaredNorm());
  return k;
}

std::vector<double> decisions(const Matrix& k, std::span<const std::int8_t> y, const wfr::SmoResult& r) {
  std::vector<double> f(y.size(), r.bias);
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      f[i] += r.alpha[j] * y[j] * k(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
  return f;
}

// Random two-class toy: KKT residuals, equality constraint and box.
void check_kkt(std::uint64_t seed, double C) {
  wfr::Rng rng(seed);
  const std::size_t n = 40;
  Matrix x(n, 2);
  std::vector<std::int8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(-2, 2);
    x(i, 1) = rng.uniform(-2, 2);
    y[i] = x(i, 0) * x(i, 0) + 0.5 * x(i, 1) + 0.3 * rng.uniform(-1, 1) > 1.0 ? 1 : -1;
  }
  const Matrix k = rbf(x, 0.7);
  wfr::DenseKernelMatrix km(k);
  wfr::SmoOptions opt;
  opt.C = C;
  const auto r = wfr::smo_solve(std::span<const std::int8_t>(y), km, opt);
  ASSERT_TRUE(r.converged);
  const auto f = decisions(k, y, r);
  double eq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    eq += r.alpha[i] * y[i];
    ASSERT_GE(r.alpha[i], 0.0);
    ASSERT_LE(r.alpha[i], C);
    const double m = y[i] * f[i];
    if (r.alpha[i] == 0.0) EXPECT_GE(m, 1.0 - 1e-3) << i;
    else if (r.alpha[i] == C) EXPECT_LE(m, 1.0 + 1e-3) << i;
    else EXPECT_NEAR(m, 1.0, 1e-3) << i;
  }
  EXPECT_LE(std::abs(eq), 1e-6);
}

TEST(Smo, KktResidualsWithinTolerance) {
  for (std::uint64_t s = 1; s <= 6; ++s) {
    check_kkt(s, 1.0);
    check_kkt(s, 10.0);
    check_kkt(s, 0.1);
  }
}

TEST(Smo, TwoPointHandSolution) {
  // Linear kernel, x = +1 / -1: the dual gives alpha = 2 / |x1 - x2|^2 = 0.5,
  // w = 1, b = 0.
  Matrix k(2, 2);
  k << 1, -1, -1, 1;
  wfr::DenseKernelMatrix km(k);
  const std::vector<std::int8_t> y{1, -1};
  wfr::SmoOptions opt;
  opt.C = 100.0;
  const auto r = wfr::smo_solve(std::span<const std::int8_t>(y), km, opt);
  ASSERT_TRUE(r.converged);
  EXPECT_NEAR(r.alpha[0], 0.5, 1e-12);
  EXPECT_NEAR(r.alpha[1], 0.5, 1e-12);
  EXPECT_NEAR(r.bias, 0.0, 1e-12);
  const auto f = decisions(k, y, r);
  EXPECT_NEAR(f[0], 1.0, 1e-12);
  EXPECT_NEAR(f[1], -1.0, 1e-12);
}

TEST(Smo, FlippedLabelsNegateDecision) {
  const auto b = blobs(8, 2, 0.8, 3);
  const Matrix k = rbf(b.x, 0.5);
  std::vector<std::int8_t> y(b.y.size()), flipped(b.y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = wfr::class_index(b.y[i]) < 2 ? 1 : -1;
    flipped[i] = static_cast<std::int8_t>(-y[i]);
  }
  wfr::DenseKernelMatrix k1(k), k2(k);
  const auto r1 = wfr::smo_solve(std::span<const std::int8_t>(y), k1);
  const auto r2 = wfr::smo_solve(std::span<const std::int8_t>(flipped), k2);
  const auto f1 = decisions(k, y, r1);
  const auto f2 = decisions(k, flipped, r2);
  // Both runs stop at the 1e-3 KKT tolerance but may visit pairs in a
  // different order, so agreement is only up to that tolerance.
  for (std::size_t i = 0; i < y.size(); ++i) {
    EXPECT_NEAR(r1.alpha[i], r2.alpha[i], 1e-2);
    EXPECT_NEAR(f1[i], -f2[i], 1e-2);
  }
  EXPECT_NEAR(r1.bias, -r2.bias, 1e-2);
}

TEST(Smo, BudgetExhaustionFlagsUnconverged) {
  const auto b = blobs(20, 2, 1.5, 9);
  const Matrix k = rbf(b.x, 1.0);
  std::vector<std::int8_t> y(b.y.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = wfr::class_index(b.y[i]) == 0 ? 1 : -1;
  wfr::DenseKernelMatrix km(k);
  wfr::SmoOptions opt;
  opt.max_iterations = 1;
  const auto r = wfr::smo_solve(std::span<const std::int8_t>(y), km, opt);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 1u);
}

TEST(Smo, NeedsBothSigns) {
  Matrix k = Matrix::Identity(2, 2);
  wfr::DenseKernelMatrix km(k);
  const std::vector<std::int8_t> y{1, 1};
  EXPECT_THROW(wfr::smo_solve(std::span<const std::int8_t>(y), km), wfr::TrainingError);
}

TEST(Rbf, SymmetricUnitDiagonal) {
  const auto b = blobs(5, 3, 1.0, 2);
  wfr::RbfKernelMatrix k(b.x, 0.3);
  for (std::size_t i = 0; i < k.size(); ++i) {
    EXPECT_DOUBLE_EQ(k.row(i)[i], 1.0);
    for (std::size_t j = 0; j < k.size(); ++j) EXPECT_DOUBLE_EQ(k.row(i)[j], k.row(j)[i]);
  }
}

TEST(Svm, ScaleGamma) {
  const Matrix x = rows({{0, 0}, {2, 4}});
  // Population variances 1 and 4: gamma = 1 / (2 * 2.5).
  EXPECT_DOUBLE_EQ(wfr::scale_gamma(x), 0.2);
}

TEST(Svm, SeparatesBlobsAndRecoversTrainingPoints) {
  const auto b = blobs(15, 2, 0.3, 4);
  wfr::SvmParams p;
  p.C = 1000.0;
  const auto m = wfr::fit_svm(b.x, b.y, p, 1);
  EXPECT_TRUE(m.converged());
  EXPECT_EQ(wfr::predict_rows(m, b.x), b.y);
  for (const auto& machine : m.machines) {
    EXPECT_GE(machine.support_vectors.rows(), 1);
    for (Eigen::Index s = 0; s < machine.coef.size(); ++s) EXPECT_LE(std::abs(machine.coef(s)), p.C);
  }
}

TEST(Svm, SmallGammaStillSeparatesLinearSet) {
  const Matrix x = rows({{-2, -2}, {2, -2}, {-2, 2}, {2, 2}, {-2.5, -2}, {2.5, -2}, {-2.5, 2}, {2.5, 2}});
  const std::vector<wfr::ClassLabel> y{A, B, C, D, A, B, C, D};
  for (double gamma : {0.5, 1e-3}) {
    wfr::SvmParams p;
    p.gamma = gamma;
    p.C = 1e6;
    const auto m = wfr::fit_svm(x, y, p, 0);
    EXPECT_EQ(wfr::predict_rows(m, x), y) << "gamma " << gamma;
  }
}

TEST(Svm, LearnsSyntheticController) {
  const auto f = make_files(800, 12);
  const auto split = wfr::shuffle_split(f.two, 4);
  const auto train = f.two.subset(split.train_indices);
  const auto test = f.two.subset(split.test_indices);
  const auto m = wfr::fit_svm(train, {}, 0);
  EXPECT_TRUE(m.converged());
  EXPECT_GE(wfr::accuracy(wfr::predict_rows(m, test.features()), test.labels()), 0.85);
}

TEST(Svm, DeterministicAndNeedsAllClasses) {
  const auto b = blobs(10, 2, 0.8, 1);
  const auto m1 = wfr::fit_svm(b.x, b.y, {}, 3);
  const auto m2 = wfr::fit_svm(b.x, b.y, {}, 3);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(m1.machines[k].bias, m2.machines[k].bias);
    EXPECT_TRUE(m1.machines[k].coef == m2.machines[k].coef);
  }
  EXPECT_THROW(wfr::fit_svm(rows({{0}, {1}}), std::vector<wfr::ClassLabel>{A, B}), wfr::TrainingError);
}

}  // namespace
