#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

namespace mecache {
namespace {

using testing::flat_scenario;

TEST(ValidateScenario, FieldDefaultsAreValid) {
  GenConfig c;  // K=20, Np=5, N=30, tau=0.1, w=(0.1, 0.9)
  c.seed = 11;
  const auto r = validate_scenario(generate_scenario(c));
  EXPECT_TRUE(r.ok()) << r.to_string();
}

TEST(ValidateScenario, RejectsNpNotBelowN) {
  GenConfig c;
  c.seed = 11;
  auto s = generate_scenario(c);
  s.params.Np = 30;
  s.params.N = 30;
  const auto r = validate_scenario(s);
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(r.mentions("N_p < N"));
}

TEST(ValidateScenario, RejectsWeightsNotSummingToOne) {
  GenConfig c;
  c.seed = 11;
  auto s = generate_scenario(c);
  s.params.w0 = 0.5;
  s.params.w1 = 0.9;
  const auto r = validate_scenario(s);
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(r.mentions("w0+w1=1"));
}

TEST(ValidateScenario, ReportsFieldPaths) {
  auto s = flat_scenario(2, 2, 1, 3, {{0, 1, 0}, {1, 1, 5}}, {1000, -2}, 10);
  s.channels.h2[1][2] = 0.0;
  const auto r = validate_scenario(s);
  ASSERT_FALSE(r.ok());
  EXPECT_TRUE(r.mentions("library.D"));
  EXPECT_TRUE(r.mentions("channels.h2[1]"));
  EXPECT_TRUE(r.mentions("arrivals.s[1][2]"));
}

TEST(SelectOffloadWd, PicksNearest) {
  std::vector<double> d(20);
  for (int k = 0; k < 20; ++k) d[k] = 500.0 + 500.0 * k / 19.0;
  EXPECT_EQ(select_offload_wd(d), 0);
  EXPECT_EQ(select_offload_wd(std::vector<double>{700.0}), 0);
  EXPECT_EQ(select_offload_wd(std::vector<double>{800, 200, 500}), 1);
}

TEST(SelectOffloadWd, TiesGoToLowestIndex) {
  EXPECT_EQ(select_offload_wd(std::vector<double>{300, 200, 200}), 1);
}

TEST(SelectOffloadWd, RejectsBadInput) {
  EXPECT_THROW(select_offload_wd(std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(select_offload_wd(std::vector<double>{1.0, 0.0}),
               std::invalid_argument);
}

TEST(SelectOffloadWd, InvariantUnderRescaling) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1.0, 1000.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> d(7), e(7);
    const double scale = u(rng) / 10.0;
    for (int k = 0; k < 7; ++k) {
      d[k] = u(rng);
      e[k] = d[k] * scale;
    }
    EXPECT_EQ(select_offload_wd(d), select_offload_wd(e));
  }
}

TEST(BuildCts, CollapsesDuplicates) {
  const std::vector<int> seq{0, 2, 0};
  EXPECT_EQ(build_cts(seq, 2), (std::vector<int>{0, 2}));
  EXPECT_EQ(build_cts(seq, 0), (std::vector<int>{0}));
  EXPECT_THROW(build_cts(seq, 3), std::out_of_range);
  EXPECT_THROW(build_cts(seq, -1), std::out_of_range);
}

TEST(BuildCts, PrefixesAreNested) {
  const std::vector<int> seq{1, 1, 3};
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) {
      const auto a = build_cts(seq, i);
      const auto b = build_cts(seq, j);
      EXPECT_TRUE(std::includes(b.begin(), b.end(), a.begin(), a.end()));
    }
}

TEST(BuildCts, SizeBoundedBySlotAndLibrary) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int L = 1 + static_cast<int>(rng() % 6);
    std::vector<int> seq(12);
    for (int& t : seq) t = static_cast<int>(rng() % L);
    for (int n = 0; n < 12; ++n)
      EXPECT_LE(build_cts(seq, n).size(),
                static_cast<std::size_t>(std::min(n + 1, L)));
  }
}

TEST(ArrivedBits, HandExamples) {
  const auto s = flat_scenario(1, 2, 1, 3, {{0, 1, 0}}, {1000, 2000}, 0);
  EXPECT_DOUBLE_EQ(
      arrived_bits(s, 0, 2, CachePlacement::from_bits(std::vector<int>{0, 0})),
      3000.0);
  EXPECT_DOUBLE_EQ(
      arrived_bits(s, 0, 2, CachePlacement::from_bits(std::vector<int>{1, 0})),
      2000.0);
  EXPECT_DOUBLE_EQ(
      arrived_bits(s, 0, 0, CachePlacement::from_bits(std::vector<int>{0, 0})),
      1000.0);
  const auto all = CachePlacement::from_bits(std::vector<int>{1, 1});
  for (int n = 0; n < 3; ++n) EXPECT_EQ(arrived_bits(s, 0, n, all), 0.0);
  EXPECT_THROW(arrived_bits(s, 0, 2, CachePlacement(2)), std::invalid_argument);
}

TEST(ArrivedBits, MonotoneInSlotAndCaching) {
  const auto s = testing::small_scenario(21, 3, 6, 2, 8, 1e4);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = testing::placement_from_mask(6, rng() % 64);
    for (int k = 0; k < 3; ++k)
      for (int n = 0; n < 8; ++n) {
        const double b = arrived_bits(s, k, n, p);
        if (n + 1 < 8) EXPECT_LE(b, arrived_bits(s, k, n + 1, p));
        for (int l = 0; l < 6; ++l) {
          if (p[l] == CacheState::One) continue;
          auto q = p;
          q.set(l, CacheState::One);
          EXPECT_LE(arrived_bits(s, k, n, q), b);
        }
      }
  }
}

TEST(CachePlacement, SetsAndBitmap) {
  CachePlacement p(4);
  p.set(0, CacheState::One);
  p.set(2, CacheState::Zero);
  EXPECT_EQ(p.bitmap(), "1*0*");
  EXPECT_EQ(p.fixed_one(), std::vector<int>{0});
  EXPECT_EQ(p.fixed_zero(), std::vector<int>{2});
  EXPECT_EQ(p.free_set(), (std::vector<int>{1, 3}));
  EXPECT_EQ(p.depth(), 2);
  EXPECT_DOUBLE_EQ(p.cached_bits(std::vector<double>{5, 6, 7, 8}), 5.0);
}

}  // namespace
}  // namespace mecache
