#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "support/synthetic.hpp"
#include "support/toy.hpp"
#include "wfr/neural.hpp"

namespace {

using namespace wfr::nn;
using namespace wfr::testing;
using wfr::Matrix;
using wfr::Vector;

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

TEST(Softmax, UniformForEqualLogits) {
  const auto p = softmax(vec({3, 3, 3, 3}));
  for (Eigen::Index k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(p(k), 0.25);
}

TEST(Softmax, MatchesDirectFormula) {
  const auto p = softmax(vec({1, 2, 3, 4}));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0) + std::exp(4.0);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(p(k), std::exp(k + 1.0) / z, 1e-15);
}

TEST(Softmax, SumAndShiftInvariance) {
  wfr::Rng rng(4);
  for (int t = 0; t < 1000; ++t) {
    Vector l(4);
    for (int k = 0; k < 4; ++k) l(k) = rng.uniform(-50, 50);
    const auto p = softmax(l);
    ASSERT_NEAR(p.sum(), 1.0, 1e-12);
    ASSERT_GT(p.minCoeff(), 0.0);
    const auto q = softmax(Vector(l.array() + rng.uniform(-1000, 1000)));
    for (int k = 0; k < 4; ++k) ASSERT_NEAR(p(k), q(k), 1e-12);
  }
}

TEST(CrossEntropy, KnownValues) {
  EXPECT_DOUBLE_EQ(cross_entropy(std::vector<double>{1, 0, 0, 0}, 0), 0.0);
  EXPECT_NEAR(cross_entropy(std::vector<double>{.25, .25, .25, .25}, 2), std::log(4.0), 1e-15);
  EXPECT_NEAR(cross_entropy(std::vector<double>{.7, .3, 0, 0}, 1), 1.2039728043259361, 1e-15);
  EXPECT_NEAR(cross_entropy(std::vector<double>{1, 0, 0, 0}, 3), -std::log(1e-12), 1e-9);
}

TEST(SharedLayer, ZeroInputGivesBiases) {
  SharedInputLayer l{vec({1, 2, 3}), vec({-1, 0.5, 7}), Activation::Identity};
  const auto out = forward_shared(l, std::vector<double>{0, 0, 0});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(out(i, j), l.b(i));
}

TEST(SharedLayer, UnitWeightsCopyInput) {
  SharedInputLayer l{Vector::Ones(24), Vector::Zero(24), Activation::Identity};
  std::vector<double> x(24);
  std::iota(x.begin(), x.end(), -3.0);
  const auto out = forward_shared(l, x);
  ASSERT_EQ(out.rows(), 24);
  ASSERT_EQ(out.cols(), 24);
  for (int i = 0; i < 24; ++i)
    for (int j = 0; j < 24; ++j) EXPECT_EQ(out(i, j), x[j]);
}

TEST(SharedLayer, RandomMatchesFormulaAndBatchFlatten) {
  wfr::Rng rng(8);
  SharedInputLayer l{Vector(5), Vector(5), Activation::ReLU};
  for (int i = 0; i < 5; ++i) l.w(i) = rng.uniform(-2, 2), l.b(i) = rng.uniform(-1, 1);
  std::vector<double> x(5);
  for (auto& v : x) v = rng.uniform(-3, 3);
  const auto out = forward_shared(l, x);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) EXPECT_NEAR(out(i, j), std::max(0.0, l.w(i) * x[j] + l.b(i)), 1e-12);
  NetworkModel m;
  m.layers = {l};
  Batch xb(1, 5);
  for (int j = 0; j < 5; ++j) xb(0, j) = x[j];
  const auto pass = forward(m, xb, Mode::Infer);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) EXPECT_EQ(pass.logits(0, i * 5 + j), out(i, j));
  EXPECT_THROW(forward_shared(l, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST(BatchNorm, ConstantColumnBecomesBeta) {
  auto s = BatchNormState::identity(2);
  s.gamma = vec({2.0, 3.0});
  s.beta = vec({0.5, -1.0});
  Batch x(4, 2);
  x << 1, 7, 1, 8, 1, 9, 1, 10;
  const auto out = batch_norm_forward(s, x, Mode::Train);
  for (int r = 0; r < 4; ++r) EXPECT_DOUBLE_EQ(out(r, 0), 0.5);
}

TEST(BatchNorm, TrainStatistics) {
  wfr::Rng rng(2);
  auto s = BatchNormState::identity(3);
  s.gamma = vec({1.5, -0.7, 3.0});
  s.beta = vec({0.2, 1.0, -4.0});
  Batch x(64, 3);
  for (Eigen::Index r = 0; r < 64; ++r)
    for (Eigen::Index c = 0; c < 3; ++c) x(r, c) = rng.uniform(-10, 10) * (c + 1);
  const auto out = batch_norm_forward(s, x, Mode::Train);
  for (Eigen::Index c = 0; c < 3; ++c) {
    const double mean = out.col(c).mean();
    const double sd = std::sqrt((out.col(c).array() - mean).square().mean());
    EXPECT_NEAR(mean, s.beta(c), 1e-6);
    EXPECT_NEAR(sd, std::abs(s.gamma(c)), 1e-3);
    const double batch_mean = x.col(c).mean();
    EXPECT_NEAR(s.running_mean(c), 0.01 * batch_mean, 1e-12);
  }
}

TEST(BatchNorm, InferModeUsesRunningStatsOnly) {
  auto s = BatchNormState::identity(1);
  s.running_mean = vec({2.0});
  s.running_var = vec({4.0});
  Batch x(1, 1);
  x << 6.0;
  const auto a = batch_norm_forward(s, x, Mode::Infer);
  const auto b = batch_norm_forward(s, x, Mode::Infer);
  EXPECT_EQ(a(0, 0), b(0, 0));
  EXPECT_NEAR(a(0, 0), 4.0 / std::sqrt(4.0 + 1e-5), 1e-12);
  EXPECT_EQ(s.running_mean(0), 2.0);
  EXPECT_THROW(batch_norm_forward(s, x, Mode::Train), std::invalid_argument);
}

TEST(Dropout, IdentityCases) {
  const Batch x = Batch::Constant(10, 10, 2.5);
  EXPECT_TRUE(dropout_apply(0.0, Mode::Train, x, 1) == x);
  EXPECT_TRUE(dropout_apply(0.5, Mode::Infer, x, 1) == x);
  EXPECT_THROW(dropout_apply(1.0, Mode::Train, x, 1), std::invalid_argument);
}

TEST(Dropout, InvertedScalingPreservesMean) {
  const Batch x = Batch::Ones(1000, 1000);
  const auto out = dropout_apply(0.1, Mode::Train, x, 123);
  EXPECT_NEAR(out.mean(), 1.0, 0.01);
  const double zeros = static_cast<double>((out.array() == 0.0).count()) / 1e6;
  EXPECT_NEAR(zeros, 0.1, 0.002);
  EXPECT_TRUE(((out.array() == 0.0) || (out.array() - 1.0 / 0.9).abs() < 1e-15).all());
}

TEST(Adadelta, ZeroGradientOnlyDecays) {
  NetworkModel m = build_preset(Preset::FNN1, 2, 1);
  auto st = AdadeltaState::for_model(m);
  for (auto& v : st.sq_grad) std::fill(v.begin(), v.end(), 1.0);
  const auto deltas = adadelta_step(st, zero_gradients(m));
  for (const auto& d : deltas)
    for (double v : d) EXPECT_EQ(v, 0.0);
  EXPECT_DOUBLE_EQ(st.sq_grad[0][0], 0.95);
}

TEST(Adadelta, FirstStepClosedForm) {
  AdadeltaState st;
  st.sq_grad = {{0.0, 0.0, 0.0}};
  st.sq_delta = {{0.0, 0.0, 0.0}};
  const std::vector<double> g{0.3, -2.0, 1e-4};
  const auto d = adadelta_step(st, {g});
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double expect = -(std::sqrt(1e-6) / std::sqrt(0.05 * g[i] * g[i] + 1e-6)) * g[i];
    EXPECT_NEAR(d[0][i], expect, 1e-15);
    EXPECT_LT(d[0][i] * g[i], 0.0);
    EXPECT_NEAR(st.sq_delta[0][i], 0.05 * expect * expect, 1e-18);
  }
  EXPECT_THROW(adadelta_step(st, {g, g}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checks

double loss_at(NetworkModel m, const Batch& x, std::span<const wfr::ClassLabel> y, Mode mode, std::uint64_t seed) {
  wfr::Rng rng(seed);
  const auto pass = forward(m, x, mode, &rng);
  return mean_cross_entropy(pass.probabilities, y);
}

void gradient_check(NetworkModel model, const Batch& x, const std::vector<wfr::ClassLabel>& y, Mode mode,
                    const std::string& what) {
  const std::uint64_t seed = 31;
  auto work = model;
  wfr::Rng rng(seed);
  const auto pass = forward(work, x, mode, &rng, true);
  const auto grads = backward(work, pass, y, mode);
  auto params = parameters(model);
  std::size_t checked = 0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double h = 1e-4;
      const double orig = params[p][i];
      params[p][i] = orig + h;
      const double up = loss_at(model, x, y, mode, seed);
      params[p][i] = orig - h;
      const double down = loss_at(model, x, y, mode, seed);
      params[p][i] = orig;
      const double fd = (up - down) / (2 * h);
      const double g = grads[p][i];
      const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-4});
      ASSERT_LE(rel, 1e-4) << what << ": param block " << p << " index " << i << " analytic " << g << " fd " << fd;
      ++checked;
    }
  }
  EXPECT_EQ(checked, model.parameter_count());
}

Batch random_batch(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  wfr::Rng rng(seed);
  Batch x(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) x(r, c) = rng.uniform(-1.5, 1.5);
  return x;
}

void randomize(NetworkModel& m, std::uint64_t seed) {
  wfr::Rng rng(seed);
  for (auto s : parameters(m))
    for (auto& v : s) v = rng.uniform(-1, 1);
}

const std::vector<wfr::ClassLabel> kThree{wfr::ClassLabel::MoveForward, wfr::ClassLabel::SharpRightTurn,
                                          wfr::ClassLabel::SlightLeftTurn};

TEST(GradientCheck, DenseWithActivationField) {
  wfr::Rng rng(1);
  NetworkModel m;
  auto d1 = make_dense(3, 5, rng);
  d1.act = Activation::ReLU;
  m.layers = {d1, make_dense(5, 4, rng)};
  randomize(m, 2);
  gradient_check(m, random_batch(3, 3, 3), kThree, Mode::Train, "dense");
}

TEST(GradientCheck, SharedInputLayerBothActivations) {
  for (auto act : {Activation::Identity, Activation::ReLU}) {
    wfr::Rng rng(4);
    NetworkModel m;
    SharedInputLayer s{Vector(4), Vector(4), act};
    m.layers = {s, make_dense(16, 4, rng)};
    randomize(m, 5);
    gradient_check(m, random_batch(3, 4, 6), kThree, Mode::Train, "shared");
  }
}

TEST(GradientCheck, BatchNormTrainAndInfer) {
  wfr::Rng rng(7);
  NetworkModel m;
  auto bn = BatchNormState::identity(5);
  bn.running_mean = vec({0.1, -0.2, 0.3, 0.0, 0.5});
  bn.running_var = vec({1.5, 0.7, 2.0, 1.0, 0.3});
  m.layers = {make_dense(3, 5, rng), bn, ReLULayer{}, make_dense(5, 4, rng)};
  randomize(m, 8);
  gradient_check(m, random_batch(3, 3, 9), kThree, Mode::Train, "batchnorm train");
  gradient_check(m, random_batch(3, 3, 9), kThree, Mode::Infer, "batchnorm infer");
}

TEST(GradientCheck, DropoutWithFixedMask) {
  wfr::Rng rng(10);
  NetworkModel m;
  m.layers = {make_dense(3, 6, rng), ReLULayer{}, DropoutLayer{0.3}, make_dense(6, 4, rng)};
  randomize(m, 11);
  gradient_check(m, random_batch(3, 3, 12), kThree, Mode::Train, "dropout");
}

TEST(GradientCheck, AllPresets) {
  for (auto p : {Preset::FNN1, Preset::DFNN3, Preset::DFNN_WS}) {
    for (std::size_t w : {2u, 4u}) {
      auto m = build_preset(p, w, 13);
      randomize(m, 14);
      gradient_check(m, random_batch(3, static_cast<Eigen::Index>(w), 15), kThree, Mode::Train,
                     std::string(preset_name(p)) + "/" + std::to_string(w));
    }
  }
}

TEST(Backprop, ZeroWeightsGiveUniformOutputAndClosedFormBias) {
  auto m = build_preset(Preset::FNN1, 2, 1);
  for (auto s : parameters(m)) std::fill(s.begin(), s.end(), 0.0);
  const Batch x = random_batch(3, 2, 2);
  double loss = 0;
  const auto g = backprop(m, x, kThree, 0, &loss);
  EXPECT_NEAR(loss, std::log(4.0), 1e-15);
  // Output bias is the last parameter block: mean(p - y) = 0.25 - count_k / 3.
  const auto& gb = g.back();
  const std::array<double, 4> counts{1, 0, 1, 1};
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(gb[k], 0.25 - counts[k] / 3.0, 1e-15);
}

TEST(Backprop, DuplicatedBatchLeavesGradientUnchanged) {
  auto m = build_preset(Preset::DFNN_WS, 4, 3);
  for (auto& l : m.layers)
    if (auto* d = std::get_if<DropoutLayer>(&l)) d->rate = 0.0;
  const Batch x = random_batch(3, 4, 4);
  Batch xx(6, 4);
  xx << x, x;
  std::vector<wfr::ClassLabel> yy = kThree;
  yy.insert(yy.end(), kThree.begin(), kThree.end());
  auto m1 = m, m2 = m;
  const auto g1 = backprop(m1, x, kThree);
  const auto g2 = backprop(m2, xx, yy);
  for (std::size_t p = 0; p < g1.size(); ++p)
    for (std::size_t i = 0; i < g1[p].size(); ++i) EXPECT_NEAR(g1[p][i], g2[p][i], 1e-12);
  EXPECT_THROW(backprop(m1, Batch(0, 4), {}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Presets and training

TEST(Presets, Shapes) {
  const auto ws = build_preset(Preset::DFNN_WS, 24, 1);
  const auto& shared = std::get<SharedInputLayer>(ws.layers[0]);
  EXPECT_EQ(shared.w.size() + shared.b.size(), 48);
  const DenseLayer* first = nullptr;
  std::vector<Eigen::Index> dense_out;
  for (const auto& l : ws.layers)
    if (const auto* d = std::get_if<DenseLayer>(&l)) {
      if (!first) first = d;
      dense_out.push_back(d->W.rows());
    }
  ASSERT_NE(first, nullptr);
  EXPECT_EQ(first->W.cols(), 576);
  EXPECT_EQ(dense_out, (std::vector<Eigen::Index>{16, 8, 4, 4}));

  const auto fnn = build_preset(Preset::FNN1, 2, 1);
  const auto& h = std::get<DenseLayer>(fnn.layers[0]);
  const auto& o = std::get<DenseLayer>(fnn.layers[2]);
  EXPECT_EQ(h.W.cols(), 2);
  EXPECT_EQ(h.W.rows(), 16);
  EXPECT_EQ(o.W.rows(), 4);
  EXPECT_EQ(fnn.parameter_count(), 2u * 16 + 16 + 16 * 4 + 4);

  const auto d3 = build_preset(Preset::DFNN3, 24, 1);
  std::vector<Eigen::Index> sizes;
  for (const auto& l : d3.layers)
    if (const auto* d = std::get_if<DenseLayer>(&l)) sizes.push_back(d->W.rows());
  EXPECT_EQ(sizes, (std::vector<Eigen::Index>{16, 8, 4, 4}));

  EXPECT_THROW(build_preset("GRU", 24), std::invalid_argument);
  EXPECT_THROW(build_preset(Preset::FNN1, 3), std::invalid_argument);
  EXPECT_EQ(build_preset("DFNN_WS", 4).preset, "DFNN_WS");
}

TEST(Presets, OutputsAreProbabilities) {
  wfr::Rng rng(6);
  for (auto p : {Preset::FNN1, Preset::DFNN3, Preset::DFNN_WS}) {
    auto m = build_preset(p, 24, 2);
    Matrix x(50, 24);
    for (Eigen::Index r = 0; r < 50; ++r)
      for (Eigen::Index c = 0; c < 24; ++c) x(r, c) = rng.uniform(-3, 3);
    const auto pr = predict_proba(m, x);
    for (Eigen::Index r = 0; r < 50; ++r) {
      ASSERT_NEAR(pr.row(r).sum(), 1.0, 1e-9);
      ASSERT_GT(pr.row(r).minCoeff(), 0.0);
      ASSERT_LT(pr.row(r).maxCoeff(), 1.0);
    }
    EXPECT_TRUE(predict_proba(m, x) == pr);
  }
}

TEST(Training, LossNonIncreasingFirstFiveSteps) {
  const auto b = blobs(8, 2, 0.3, 5);
  auto m = build_preset(Preset::FNN1, 2, 7);
  auto opt = AdadeltaState::for_model(m);
  const Batch x = b.x;
  double prev = INFINITY;
  for (int step = 0; step < 5; ++step) {
    double loss = 0;
    const auto g = backprop(m, x, b.y, 0, &loss);
    EXPECT_LE(loss, prev) << "step " << step;
    prev = loss;
    apply_deltas(m, adadelta_step(opt, g));
  }
}

TEST(Training, MemorizesTenSamples) {
  const auto f = make_files(10, 3);
  const auto s = wfr::standardize(f.full.features(), f.full.features());
  for (auto p : {Preset::FNN1, Preset::DFNN3, Preset::DFNN_WS}) {
    TrainConfig cfg;
    cfg.dropout = 0.0;
    cfg.epochs = 200;
    cfg.seed = 1;
    const auto m0 = build_preset(p, 24, 2);
    auto m = train_network(m0, s.train, f.full.labels(), cfg);
    EXPECT_EQ(predict_all(m, s.train), f.full.labels()) << preset_name(p);
  }
}

TEST(Training, DeterministicAndLogsEpochs) {
  const auto f = make_files(70, 4);
  const auto s = wfr::standardize(f.four.features(), f.four.features());
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 9;
  std::ostringstream log;
  auto a = train_network(build_preset(Preset::DFNN_WS, 4, 1), s.train, f.four.labels(), cfg, &log);
  auto b = train_network(build_preset(Preset::DFNN_WS, 4, 1), s.train, f.four.labels(), cfg);
  auto pa = parameters(a);
  auto pb = parameters(b);
  for (std::size_t p = 0; p < pa.size(); ++p)
    for (std::size_t i = 0; i < pa[p].size(); ++i) ASSERT_EQ(pa[p][i], pb[p][i]);
  const auto text = log.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_EQ(text.rfind("epoch 1 loss ", 0), 0u);
  EXPECT_NE(text.find("accuracy"), std::string::npos);
}

TEST(Training, TrailingSingleRowBatchIsMerged) {
  // 33 rows at batch 32 would leave a batch of one for batch norm.
  const auto f = make_files(33, 5);
  const auto s = wfr::standardize(f.four.features(), f.four.features());
  TrainConfig cfg;
  cfg.epochs = 2;
  EXPECT_NO_THROW(train_network(build_preset(Preset::DFNN_WS, 4, 1), s.train, f.four.labels(), cfg));
  EXPECT_THROW(train_network(build_preset(Preset::FNN1, 4, 1), Matrix(0, 4), {}, cfg), wfr::TrainingError);
  cfg.dropout = 1.0;
  EXPECT_THROW(train_network(build_preset(Preset::FNN1, 4, 1), s.train, f.four.labels(), cfg), std::invalid_argument);
}

TEST(Training, LearnsSyntheticController) {
  const auto f = make_files(600, 6);
  const auto split = wfr::shuffle_split(f.two, 1);
  const auto train = f.two.subset(split.train_indices);
  const auto test = f.two.subset(split.test_indices);
  const auto s = wfr::standardize(train.features(), test.features());
  TrainConfig cfg;
  cfg.epochs = 60;
  auto m = train_network(build_preset(Preset::FNN1, 2, 3), s.train, train.labels(), cfg);
  const auto pred = predict_all(m, s.other);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == test.labels()[i];
  EXPECT_GE(static_cast<double>(hits) / pred.size(), 0.8);
}

}  // namespace
