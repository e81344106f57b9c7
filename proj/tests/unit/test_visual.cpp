#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "fusionkit/error.hpp"
#include "fusionkit/visual.hpp"
#include "test_util.hpp"

using namespace fusionkit;
using testutil::TempDir;
using testutil::write_file;

TEST(Maxpool, ThousandRampGivesWindowEnds) {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i + 1);
  const auto out = maxpool_reduce(v);
  ASSERT_EQ(out.size(), 100u);
  for (std::size_t j = 0; j < 100; ++j) EXPECT_EQ(out[j], 10.0 * static_cast<double>(j + 1));
}

TEST(Maxpool, SingleWindowAndShortInput) {
  const std::vector<double> v{3, -1, 7, 2, 0, 0, 1, 6, 5, 4};
  EXPECT_EQ(maxpool_reduce(v), std::vector<double>{7});
  const std::vector<double> shorter{1, 2, 3};
  EXPECT_THROW(maxpool_reduce(shorter), InvalidArgument);
  EXPECT_THROW(maxpool_reduce(std::vector<double>{}), InvalidArgument);
}

TEST(Maxpool, TrailingPartialWindowDropped) {
  std::vector<double> v(25, 1.0);
  v[24] = 99.0;
  const auto out = maxpool_reduce(v);
  EXPECT_EQ(out, (std::vector<double>{1.0, 1.0}));
}

TEST(Maxpool, NegativeValuesKeepTheirMaximum) {
  std::vector<double> v(10);
  for (std::size_t i = 0; i < 10; ++i) v[i] = -static_cast<double>(i) - 1.0;
  EXPECT_EQ(maxpool_reduce(v), std::vector<double>{-1.0});
}

TEST(Maxpool, InvariantToPermutationInsideWindows) {
  Rng rng(1);
  std::vector<double> v(1000);
  for (double& x : v) x = rng.normal();
  const auto base = maxpool_reduce(v);
  for (std::size_t w = 0; w < 100; ++w) {
    std::span<double> window(v.data() + 10 * w, 10);
    rng.shuffle(window);
  }
  EXPECT_EQ(maxpool_reduce(v), base);
  // Lowering any non-maximal entry leaves the output alone.
  for (std::size_t w = 0; w < 100; ++w) {
    auto* begin = v.data() + 10 * w;
    auto* top = std::max_element(begin, begin + 10);
    for (auto* p = begin; p != begin + 10; ++p)
      if (p != top) *p -= 5.0;
  }
  EXPECT_EQ(maxpool_reduce(v), base);
}

TEST(Maxpool, DominatesSubWindowMaxima) {
  Rng rng(2);
  std::vector<double> v(200);
  for (double& x : v) x = rng.normal();
  const auto out = maxpool_reduce(v);
  for (std::size_t j = 0; j < out.size(); ++j) {
    const std::size_t a = rng.uniform_index(10), b = a + 1 + rng.uniform_index(10 - a);
    const double sub = *std::max_element(v.begin() + 10 * j + a, v.begin() + 10 * j + b);
    EXPECT_GE(out[j], sub);
  }
}

TEST(Features, LoadReduceSerializeRoundTrip) {
  TempDir dir;
  Rng rng(3);
  std::vector<FeatureRecord> records;
  for (int i = 0; i < 6; ++i) {
    FeatureRecord r{"img" + std::to_string(i), "u" + std::to_string(i % 2), i < 2 ? ImageKind::profile : ImageKind::posted,
                    std::vector<double>(1000)};
    for (double& v : r.vector) v = rng.normal() * std::pow(10.0, rng.normal() * 3);
    records.push_back(r);
  }
  write_features(dir / "f.tsv", records);
  const auto loaded = load_features(dir / "f.tsv");
  EXPECT_EQ(loaded, records);
  const auto reduced = reduce_by_user(loaded, ImageKind::posted);
  ASSERT_EQ(reduced.size(), 2u);
  EXPECT_EQ(reduced.at("u0").size(), 2u);
  EXPECT_EQ(reduced.at("u0")[0], maxpool_reduce(records[2].vector));
  std::vector<FeatureRecord> rec2;
  for (const auto& [user, vs] : reduced)
    for (std::size_t k = 0; k < vs.size(); ++k) rec2.push_back({user + "-" + std::to_string(k), user, ImageKind::posted, vs[k]});
  write_features(dir / "r.tsv", rec2);
  EXPECT_EQ(load_features(dir / "r.tsv", 100), rec2);
}

TEST(Features, MalformedRecordNamesTheLine) {
  TempDir dir;
  write_file(dir / "f.tsv", "a\tu\tposted\t1 2 3\nb\tu\tposted\t1 2\n");
  try {
    load_features(dir / "f.tsv", 3);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  write_file(dir / "k.tsv", "a\tu\tbanner\t1 2 3\n");
  EXPECT_THROW(load_features(dir / "k.tsv", 3), ParseError);
  write_file(dir / "n.tsv", "a\tu\tposted\t1 inf 3\n");
  EXPECT_THROW(load_features(dir / "n.tsv", 3), ParseError);
  write_file(dir / "t.tsv", "a u posted 1 2 3\n");
  EXPECT_THROW(load_features(dir / "t.tsv", 3), ParseError);
}

TEST(Pairing, SingleRecordUnderBothPolicies) {
  const std::vector<std::vector<double>> one{{1.0, 2.0}};
  EXPECT_EQ(*user_visual_feature(one, PairingPolicy::mean, 0), one[0]);
  EXPECT_EQ(*user_visual_feature(one, PairingPolicy::random_one, 0), one[0]);
  EXPECT_FALSE(user_visual_feature({}, PairingPolicy::mean, 0).has_value());
}

TEST(Pairing, MeanMatchesDirectAverage) {
  const std::vector<std::vector<double>> two{{1.0, 4.0, -2.0}, {3.0, 0.0, 5.0}};
  EXPECT_EQ(*user_visual_feature(two, PairingPolicy::mean, 0), (std::vector<double>{2.0, 2.0, 1.5}));
}

TEST(Pairing, RandomOneIsReproducibleAndPicksARecord) {
  std::vector<std::vector<double>> many;
  for (int i = 0; i < 9; ++i) many.push_back({static_cast<double>(i)});
  std::set<double> seen;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto a = *user_visual_feature(many, PairingPolicy::random_one, seed);
    EXPECT_EQ(a, *user_visual_feature(many, PairingPolicy::random_one, seed));
    seen.insert(a[0]);
  }
  EXPECT_GT(seen.size(), 4u);
  EXPECT_EQ(parse_pairing_policy("random-one"), PairingPolicy::random_one);
  EXPECT_THROW(parse_pairing_policy("all"), InvalidArgument);
}
