#include <cmath>

#include <gtest/gtest.h>

#include "fusionkit/cluster.hpp"
#include "fusionkit/error.hpp"
#include "test_util.hpp"

using namespace fusionkit;

namespace {

std::vector<std::vector<double>> blobs(Rng& rng, const std::vector<std::vector<double>>& centers, std::size_t each,
                                       double sd) {
  std::vector<std::vector<double>> out;
  for (const auto& c : centers)
    for (std::size_t i = 0; i < each; ++i) {
      std::vector<double> p = c;
      for (double& v : p) v += sd * rng.normal();
      out.push_back(p);
    }
  return out;
}

KMeansConfig cfg_k(std::size_t k, std::size_t restarts = 10, std::uint64_t seed = 1) {
  KMeansConfig c;
  c.k = k;
  c.restarts = restarts;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(KMeans, TwoObviousBlobs) {
  Rng rng(1);
  const auto pts = blobs(rng, {{0, 0}, {10, 10}}, 20, 0.5);
  const ClusterModel m = kmeans(pts, cfg_k(2));
  for (std::size_t i = 1; i < 20; ++i) EXPECT_EQ(m.assignment[i], m.assignment[0]);
  for (std::size_t i = 21; i < 40; ++i) EXPECT_EQ(m.assignment[i], m.assignment[20]);
  EXPECT_NE(m.assignment[0], m.assignment[20]);
}

TEST(KMeans, KOneGivesTheMean) {
  Rng rng(2);
  const auto pts = blobs(rng, {{1, -2, 3}}, 30, 1.0);
  const ClusterModel m = kmeans(pts, cfg_k(1));
  for (std::size_t d = 0; d < 3; ++d) {
    long double s = 0;
    for (const auto& p : pts) s += p[d];
    EXPECT_NEAR(m.centroids[0][d], static_cast<double>(s / 30), 1e-12);
  }
}

TEST(KMeans, InvalidArguments) {
  const std::vector<std::vector<double>> pts{{0.0}, {1.0}};
  EXPECT_THROW(kmeans(pts, cfg_k(3)), InvalidArgument);
  EXPECT_THROW(kmeans(pts, cfg_k(0)), InvalidArgument);
  EXPECT_THROW(kmeans({}, cfg_k(1)), InvalidArgument);
  const std::vector<std::vector<double>> ragged{{0.0}, {1.0, 2.0}};
  EXPECT_THROW(kmeans(ragged, cfg_k(1)), ShapeError);
}

TEST(KMeans, AssignmentIsNearestCentroidAndInertiaRecomputes) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pts = blobs(rng, {{0, 0}, {3, 0}, {0, 3}}, 15, 1.0);
    const ClusterModel m = kmeans(pts, cfg_k(3, 5, trial));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double own = squared_distance(pts[i], m.centroids[m.assignment[i]]);
      for (const auto& c : m.centroids) EXPECT_LE(own, squared_distance(pts[i], c) + 1e-12);
    }
    EXPECT_NEAR(m.inertia, compute_inertia(pts, m.centroids, m.assignment), 1e-9);
  }
}

TEST(KMeans, LloydNeverIncreasesInertia) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pts = blobs(rng, {{0, 0}, {2, 0}, {1, 2}, {4, 4}}, 12, 1.2);
    for (bool pp : {true, false}) {
      KMeansConfig c = cfg_k(4, 3, trial);
      c.plus_plus = pp;
      const ClusterModel m = kmeans(pts, c);
      ASSERT_FALSE(m.inertia_trace.empty());
      for (std::size_t s = 1; s < m.inertia_trace.size(); ++s)
        EXPECT_LE(m.inertia_trace[s], m.inertia_trace[s - 1] + 1e-9);
    }
  }
}

TEST(KMeans, BestOfTwentyMatchesExhaustiveTwoPartition) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::vector<double>> pts(8, std::vector<double>(2));
    for (auto& p : pts)
      for (double& v : p) v = rng.normal();
    const ClusterModel m = kmeans(pts, cfg_k(2, 20, trial));
    EXPECT_NEAR(m.inertia, oracle::best_two_partition_inertia(pts), 1e-9);
  }
}

TEST(KMeans, DeterministicGivenSeed) {
  Rng rng(6);
  const auto pts = blobs(rng, {{0, 0}, {2, 2}}, 25, 1.0);
  const ClusterModel a = kmeans(pts, cfg_k(3, 4, 9)), b = kmeans(pts, cfg_k(3, 4, 9));
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(a.centroids, b.centroids);
}

TEST(Silhouette, MatchesDefinitionOracle) {
  Rng rng(7);
  for (std::size_t n : {5u, 40u, 200u}) {
    const auto pts = blobs(rng, {{0, 0, 0}, {2, 1, 0}, {0, 3, 1}}, n / 3 + 1, 1.0);
    std::vector<std::size_t> assign(pts.size());
    for (auto& a : assign) a = rng.uniform_index(3);
    assign[0] = 0;
    assign[1] = 1;
    const SilhouetteResult got = silhouette(pts, assign);
    const oracle::Vec want = oracle::silhouette(pts, assign);
    double mean = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      EXPECT_NEAR(got.per_point[i], want[i], 1e-12);
      mean += want[i];
    }
    EXPECT_NEAR(got.mean, mean / static_cast<double>(pts.size()), 1e-12);
    EXPECT_GE(got.mean, -1.0);
    EXPECT_LE(got.mean, 1.0);
  }
}

TEST(Silhouette, SingletonsAndDuplicates) {
  const std::vector<std::vector<double>> pts{{0.0}, {0.1}, {5.0}};
  const std::vector<std::size_t> assign{0, 0, 1};
  const SilhouetteResult s = silhouette(pts, assign);
  EXPECT_EQ(s.per_point[2], 0.0);
  EXPECT_THROW(silhouette(pts, std::vector<std::size_t>{0, 0, 0}), InvalidArgument);

  Rng rng(8);
  auto many = blobs(rng, {{0, 0}, {3, 3}}, 10, 1.0);
  std::vector<std::size_t> a(20);
  for (std::size_t i = 0; i < 20; ++i) a[i] = i < 10 ? 0 : 1;
  const double base = silhouette(many, a).mean;
  // Doubling every point keeps the class structure; the mean silhouette moves only because
  // each point now has a zero-distance twin, so compare against the oracle on the doubled set.
  auto doubled = many;
  doubled.insert(doubled.end(), many.begin(), many.end());
  std::vector<std::size_t> a2 = a;
  a2.insert(a2.end(), a.begin(), a.end());
  const oracle::Vec want = oracle::silhouette(doubled, a2);
  double mean = 0;
  for (double v : want) mean += v;
  EXPECT_NEAR(silhouette(doubled, a2).mean, mean / 40.0, 1e-12);
  EXPECT_TRUE(std::isfinite(base));
}

TEST(SelectK, PicksThePlantedNumberOfBlobs) {
  Rng rng(9);
  const auto pts = blobs(rng, {{0, 0}, {8, 0}, {0, 8}}, 20, 0.6);
  const KSelection s = select_k(pts, 2, 6, cfg_k(2, 5));
  EXPECT_EQ(s.k, 3u);
  EXPECT_EQ(s.table.size(), 5u);
  EXPECT_EQ(s.model.k, 3u);
}

TEST(SelectK, IdenticalPointsGiveKMinWithZeroScore) {
  const std::vector<std::vector<double>> pts(12, std::vector<double>{1.0, 2.0});
  const KSelection s = select_k(pts, 2, 5, cfg_k(2, 3));
  EXPECT_EQ(s.k, 2u);
  EXPECT_EQ(s.score, 0.0);
}

TEST(SelectK, RejectsBadRange) {
  const std::vector<std::vector<double>> pts(5, std::vector<double>{0.0});
  EXPECT_THROW(select_k(pts, 1, 3, cfg_k(2)), InvalidArgument);
  EXPECT_THROW(select_k(pts, 3, 2, cfg_k(2)), InvalidArgument);
  EXPECT_THROW(select_k(pts, 2, 6, cfg_k(2)), InvalidArgument);
}

TEST(Merge, RelabelsAndRecounts) {
  const std::vector<std::size_t> a{0, 1, 2, 3, 3, 1, 0, 4};
  const std::map<std::size_t, std::size_t> map{{0, 0}, {1, 0}, {2, 1}, {3, 1}, {4, 2}};
  const MergeResult r = merge_clusters(a, map);
  EXPECT_EQ(r.assignment, (std::vector<std::size_t>{0, 0, 1, 1, 1, 0, 0, 2}));
  EXPECT_EQ(r.sizes.at(0), 4u);
  EXPECT_EQ(r.sizes.at(1), 3u);
  EXPECT_EQ(r.sizes.at(2), 1u);
  std::size_t total = 0;
  for (const auto& [id, n] : r.sizes) total += n;
  EXPECT_EQ(total, a.size());
  EXPECT_THROW(merge_clusters(a, {{0, 0}}), InvalidArgument);
}

TEST(ScoreTest, MatchesOracleOnRandomTuples) {
  Rng rng(10);
  for (int i = 0; i < 100; ++i) {
    const std::size_t n1 = 1 + rng.uniform_index(500), n2 = 1 + rng.uniform_index(500);
    const std::size_t x1 = rng.uniform_index(n1 + 1), x2 = rng.uniform_index(n2 + 1);
    const ScoreTestResult r = score_test(n1, x1, n2, x2);
    const double z = oracle::score_z(n1, x1, n2, x2);
    EXPECT_NEAR(r.z, z, 1e-9);
    EXPECT_NEAR(r.p, oracle::two_sided_p(z), 1e-9);
  }
}

TEST(ScoreTest, AntisymmetryAndEqualProportions) {
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    const std::size_t n1 = 1 + rng.uniform_index(200), n2 = 1 + rng.uniform_index(200);
    const std::size_t x1 = rng.uniform_index(n1 + 1), x2 = rng.uniform_index(n2 + 1);
    const ScoreTestResult a = score_test(n1, x1, n2, x2), b = score_test(n2, x2, n1, x1);
    EXPECT_EQ(a.z, -b.z);
    EXPECT_EQ(a.p, b.p);
    if (x1 * n2 != x2 * n1) EXPECT_EQ(a.z > 0, x1 * n2 > x2 * n1);
  }
  EXPECT_EQ(score_test(40, 10, 80, 20).z, 0.0);
  EXPECT_EQ(score_test(40, 10, 80, 20).p, 1.0);
  EXPECT_EQ(score_test(10, 0, 20, 0).p, 1.0);
  EXPECT_EQ(score_test(10, 10, 20, 20).z, 0.0);
  EXPECT_THROW(score_test(0, 0, 5, 1), InvalidArgument);
  EXPECT_THROW(score_test(5, 6, 5, 1), InvalidArgument);
}

TEST(ScoreTest, KnownValue) {
  // 30/100 vs 50/100: pooled 0.4, se = sqrt(0.4*0.6*0.02), z = -0.2/se.
  const ScoreTestResult r = score_test(100, 30, 100, 50);
  EXPECT_NEAR(r.z, -0.2 / std::sqrt(0.0048), 1e-12);
  EXPECT_NEAR(r.p, 0.0038924171227984212, 1e-9);
  EXPECT_NEAR(normal_cdf(0.0), 0.5, 1e-16);
  EXPECT_NEAR(normal_cdf(1.959963984540054), 0.975, 1e-12);
}

TEST(GroupDistribution, HandCountedFixture) {
  const std::vector<std::size_t> assign{0, 0, 1, 1, 2, 2};
  const std::vector<Label> groups{Label::A, Label::A, Label::A, Label::B, Label::B, Label::B};
  const GroupDistribution d = group_distribution(assign, groups);
  EXPECT_EQ(d.cluster_ids, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(d.group_a, (std::vector<double>{2.0 / 3, 1.0 / 3, 0.0}));
  EXPECT_EQ(d.group_b, (std::vector<double>{0.0, 1.0 / 3, 2.0 / 3}));

  std::vector<std::size_t> a2 = assign;
  a2.insert(a2.end(), assign.begin(), assign.end());
  std::vector<Label> g2 = groups;
  g2.insert(g2.end(), groups.begin(), groups.end());
  const GroupDistribution doubled = group_distribution(a2, g2);
  EXPECT_EQ(doubled.group_a, d.group_a);
  EXPECT_EQ(doubled.group_b, d.group_b);
}

TEST(Report, CountsSumAndFlagsFollowTheTest) {
  Rng rng(12);
  std::vector<std::size_t> assign;
  std::vector<Label> groups;
  for (int i = 0; i < 300; ++i) {
    const bool is_a = i % 2 == 0;
    groups.push_back(is_a ? Label::A : Label::B);
    // Cluster 0 favors A, cluster 1 favors B, cluster 2 is even.
    const double u = rng.uniform();
    std::size_t c = u < 0.33 ? 2 : (u < 0.66 ? (is_a ? 0 : 1) : (is_a ? 0 : 1));
    if (rng.uniform() < 0.2) c = 1 - (c == 2 ? 1 : c);
    assign.push_back(c);
  }
  const ClusterReport r = build_report(assign, groups);
  std::size_t total = 0;
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.count_a + row.count_b, row.size);
    total += row.size;
    const ScoreTestResult t = score_test(r.total_a, row.count_a, r.total_b, row.count_b);
    EXPECT_EQ(row.test.z, t.z);
    EXPECT_EQ(row.significant, t.p < 0.05 ? (t.z > 0 ? "A" : "B") : "none");
  }
  EXPECT_EQ(total, assign.size());
  EXPECT_EQ(r.rows[0].significant, "A");
  EXPECT_EQ(r.rows[1].significant, "B");
  const std::string csv = r.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "cluster_id,size,count_A,count_B,z,p,significant");
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), r.rows.size() + 1);
}
