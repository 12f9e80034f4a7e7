#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "idf/random.hpp"

namespace {

TEST(Philox, MatchesPublishedKnownAnswer) {
  // Random123 known-answer vector for Philox4x32-10, zero counter and key.
  const auto out = idf::Philox4x32::encrypt({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x6627e8d5u);
  EXPECT_EQ(out[1], 0xe169c58du);
  EXPECT_EQ(out[2], 0xbc57ac4cu);
  EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, SameSeedSameStream) {
  idf::Philox4x32 a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a(), vb = b(), vc = c();
    EXPECT_EQ(va, vb);
    differs = differs || va != vc;
  }
  EXPECT_TRUE(differs);
}

TEST(Philox, UniformStaysInsideOpenInterval) {
  idf::Philox4x32 rng(7);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000.0, 0.5, 0.005);
}

TEST(DeriveSeed, DependsOnEveryPartAndOrder) {
  const auto base = idf::derive_seed(1, "station", 24, "fit");
  EXPECT_EQ(base, idf::derive_seed(1, "station", 24, "fit"));
  EXPECT_NE(base, idf::derive_seed(2, "station", 24, "fit"));
  EXPECT_NE(base, idf::derive_seed(1, "station", 12, "fit"));
  EXPECT_NE(idf::derive_seed(1, "ab", "c"), idf::derive_seed(1, "a", "bc"));
}

TEST(Variates, BetaMomentsMatchShape) {
  idf::Philox4x32 rng(11);
  for (double a : {0.5, 1.0, 3.0}) {
    double m = 0.0, m2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double w = idf::beta_variate(rng, a, a);
      m += w;
      m2 += w * w;
    }
    m /= n;
    const double var = m2 / n - m * m;
    EXPECT_NEAR(m, 0.5, 0.005);
    EXPECT_NEAR(var, 1.0 / (4.0 * (2.0 * a + 1.0)), 0.003) << "shape " << a;
  }
}

TEST(Variates, GammaMeanEqualsShape) {
  idf::Philox4x32 rng(5);
  for (double k : {0.3, 2.5}) {
    double m = 0.0;
    for (int i = 0; i < 100000; ++i) m += idf::gamma_variate(rng, k);
    EXPECT_NEAR(m / 100000.0, k, 0.03 * k + 0.01);
  }
}

}  // namespace
