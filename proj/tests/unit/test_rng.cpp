#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "wfr/parallel.hpp"
#include "wfr/rng.hpp"

namespace {

TEST(Rng, Splitmix64MatchesReference) {
  EXPECT_EQ(wfr::splitmix64(0), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(wfr::derive_seed(42, 3), 1265094156158224713ULL);
}

// Reference values from an independent xoshiro256** implementation.
TEST(Rng, XoshiroStreamMatchesReference) {
  wfr::Rng rng(42);
  EXPECT_EQ(rng(), 1546998764402558742ULL);
  EXPECT_EQ(rng(), 6990951692964543102ULL);
  EXPECT_EQ(rng(), 12544586762248559009ULL);
}

TEST(Rng, UniformInUnitInterval) {
  wfr::Rng rng(7);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.01);
}

TEST(Rng, BelowIsRoughlyUniform) {
  wfr::Rng rng(1);
  std::vector<int> counts(7);
  for (int i = 0; i < 70000; ++i) ++counts[rng.below(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(Rng, ShuffleIsPermutation) {
  wfr::Rng rng(3);
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  rng.shuffle(std::span<int>(v));
  EXPECT_FALSE(std::is_sorted(v.begin(), v.end()));
  std::sort(v.begin(), v.end());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(v[i], i);
}

TEST(Parallel, VisitsEveryIndexOnce) {
  std::vector<int> hits(1000);
  wfr::parallel_for(hits.size(), 8, [&](std::size_t i) { ++hits[i]; });
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(Parallel, RethrowsFirstFailure) {
  EXPECT_THROW(wfr::parallel_for(50, 4,
                                 [](std::size_t i) {
                                   if (i % 10 == 3) throw std::runtime_error("boom");
                                 }),
               std::runtime_error);
}

}  // namespace
