#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "podmix/random.hpp"

using podmix::SplitMix64;

TEST(SplitMix64, MatchesReferenceSequence) {
  SplitMix64 rng(1234567);
  EXPECT_EQ(rng.next(), 6457827717110365317ull);
  EXPECT_EQ(rng.next(), 3203168211198807973ull);
  EXPECT_EQ(rng.next(), 9817491932198370423ull);
}

TEST(SplitMix64, UniformStaysInsideOpenInterval) {
  SplitMix64 rng(1);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double g = rng.uniform(0.01, 1.0);
    ASSERT_GT(g, 0.01);
    ASSERT_LT(g, 1.0);
  }
}

TEST(SplitMix64, BelowIsRoughlyUniform) {
  SplitMix64 rng(99);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[rng.below(7)];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 7.0) * (c - n / 7.0) / (n / 7.0);
  EXPECT_LT(chi2, 22.5);  // 6 dof, p ~ 0.001
}

TEST(SplitMix64, ShuffleIsAPermutation) {
  SplitMix64 rng(5);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  rng.shuffle(w);
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(StreamSeeds, DistinctPerIndexAndStable) {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < 1000; ++i) seeds.insert(podmix::derive_stream_seed(42, i));
  EXPECT_EQ(seeds.size(), 1000u);
  EXPECT_EQ(podmix::derive_stream_seed(42, 3), podmix::derive_stream_seed(42, 3));
  EXPECT_NE(podmix::derive_stream_seed(42, 3), podmix::derive_stream_seed(43, 3));
}
