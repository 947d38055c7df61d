#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "dpse/rng.hpp"

using dpse::Rng;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, StreamsDiffer) {
  Rng a(42, 0), b(42, 1), c(43, 0);
  int same_b = 0, same_c = 0;
  for (int i = 0; i < 64; ++i) {
    const auto x = a.next_u64();
    same_b += x == b.next_u64();
    same_c += x == c.next_u64();
  }
  EXPECT_EQ(same_b, 0);
  EXPECT_EQ(same_c, 0);
}

TEST(Rng, SplitIsDeterministicAndDistinct) {
  Rng parent(7);
  Rng a = parent.split(3), b = parent.split(3), c = parent.split(4);
  EXPECT_TRUE(a == b);
  EXPECT_NE(a.next_u64(), c.next_u64());
}

TEST(Rng, UniformPassesKolmogorovSmirnov) {
  Rng rng(2024);
  const int n = 20000;
  std::vector<double> u(n);
  for (auto& x : u) {
    x = rng.uniform();
    ASSERT_GE(x, 0.0);
    ASSERT_LT(x, 1.0);
  }
  std::sort(u.begin(), u.end());
  double d = 0.0;
  for (int i = 0; i < n; ++i) d = std::max({d, (i + 1.0) / n - u[i], u[i] - static_cast<double>(i) / n});
  EXPECT_LT(d, 1.63 / std::sqrt(n));  // 1% critical value
}

TEST(Rng, NormalMoments) {
  Rng rng(11);
  const int n = 100000;
  double s = 0, s2 = 0, s4 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.015);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
  EXPECT_NEAR(s4 / n, 3.0, 0.1);
}

TEST(Rng, BelowIsUnbiased) {
  Rng rng(5);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[rng.below(7)];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 7.0) * (c - n / 7.0) / (n / 7.0);
  EXPECT_LT(chi2, 16.81);  // chi2(6) at 1%
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng rng(9);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  rng.shuffle(std::span<int>(v));
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_FALSE(std::is_sorted(v.begin(), v.end()));
}

TEST(Rng, Mix64Avalanche) {
  int flipped = 0;
  for (std::uint64_t i = 0; i < 64; ++i) flipped += std::popcount(dpse::mix64(1) ^ dpse::mix64(1 ^ (1ull << i)));
  EXPECT_NEAR(flipped / 64.0, 32.0, 4.0);
}
