#include <gtest/gtest.h>

#include <limits>
#include <sstream>

#include "support/synthetic.hpp"
#include "support/toy.hpp"
#include "wfr/evaluation.hpp"
#include "wfr/serialize.hpp"

namespace {

using namespace wfr::testing;

template <typename Model>
std::string text_of(const Model& m) {
  std::ostringstream out;
  wfr::io::save(out, m);
  return out.str();
}

// save -> load -> save is a fixed point and predictions are unchanged.
template <typename Model>
void round_trip(const Model& m, const wfr::Matrix& queries) {
  const auto first = text_of(m);
  std::istringstream in(first);
  auto back = wfr::io::load<Model>(in);
  EXPECT_EQ(text_of(back), first);
  auto orig = m;
  if constexpr (std::is_same_v<Model, wfr::nn::NetworkModel>) {
    EXPECT_TRUE(wfr::nn::predict_proba(orig, queries) == wfr::nn::predict_proba(back, queries));
  } else {
    EXPECT_EQ(wfr::predict_rows(orig, queries), wfr::predict_rows(back, queries));
  }
}

class Serialize : public ::testing::Test {
 protected:
  wfr::testing::SyntheticFiles f = make_files(200, 3);
  wfr::Matrix q = make_files(50, 99).four.features();
};

TEST_F(Serialize, Tree) { round_trip(wfr::fit_decision_tree(f.four), q); }

TEST_F(Serialize, Forest) {
  wfr::ForestParams p;
  p.n_trees = 5;
  round_trip(wfr::fit_random_forest(f.four, p, 0xfedcba9876543210ULL), q);
}

TEST_F(Serialize, Boost) {
  wfr::BoostParams p;
  p.stages = 5;
  round_trip(wfr::fit_gradient_boost(f.four, p), q);
}

TEST_F(Serialize, StatModels) {
  round_trip(wfr::fit_lda(f.four), q);
  round_trip(wfr::fit_gnb(f.four), q);
  round_trip(wfr::fit_knn(f.four), q);
  round_trip(wfr::fit_svm(f.four), q);
}

TEST_F(Serialize, Networks) {
  for (auto p : {wfr::nn::Preset::FNN1, wfr::nn::Preset::DFNN3, wfr::nn::Preset::DFNN_WS}) {
    const auto s = wfr::standardize(f.four.features(), q);
    wfr::nn::TrainConfig cfg;
    cfg.epochs = 2;
    auto m = wfr::nn::train_network(wfr::nn::build_preset(p, 4, 1), s.train, f.four.labels(), cfg);
    round_trip(m, s.other);
  }
}

TEST(SerializeErrors, RejectsBadInput) {
  const auto t = wfr::fit_decision_tree(rows({{1}, {2}}), std::vector<wfr::ClassLabel>{A, B});
  const auto good = text_of(t);
  auto fails = [](const std::string& text) {
    std::istringstream in(text);
    EXPECT_THROW(wfr::io::load<wfr::Tree>(in), wfr::io::FormatError) << text;
  };
  fails("");
  fails("not-a-model 1 decision_tree\n");
  fails("wfr-model 2 decision_tree\n");
  fails("wfr-model 1 lda\n");
  fails(good.substr(0, good.size() / 2));
  std::string bad_end = good;
  bad_end.replace(bad_end.rfind("end"), 3, "xyz");
  fails(bad_end);
}

TEST(SerializeErrors, HexRealsRoundTripExactly) {
  for (double v : {0.0, -0.0, 1.0 / 3.0, -2.5e-300, 1e308, std::nextafter(1.0, 2.0), -std::numeric_limits<double>::infinity()}) {
    std::ostringstream out;
    wfr::io::Writer w(out);
    w.real(v).newline();
    std::istringstream in(out.str());
    wfr::io::Reader r(in);
    const double back = r.real();
    EXPECT_EQ(std::signbit(back), std::signbit(v));
    EXPECT_TRUE(back == v) << out.str();
  }
}

}  // namespace
