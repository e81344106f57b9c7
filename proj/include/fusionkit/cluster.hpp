#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fusionkit/text.hpp"

namespace fusionkit {

using Points = std::span<const std::vector<double>>;

struct KMeansConfig {
  std::size_t k = 2;
  std::size_t restarts = 10;
  std::size_t max_iter = 300;
  std::uint64_t seed = 0;
  /// k-means++ seeding; false picks k distinct points uniformly.
  bool plus_plus = true;
};

struct ClusterModel {
  std::size_t k = 0;
  std::vector<std::vector<double>> centroids;
  std::vector<std::size_t> assignment;
  double inertia = 0.0;
  std::size_t iterations = 0;
  std::size_t restart = 0;  ///< index of the winning restart
  /// Inertia after each centroid update of the winning restart.
  std::vector<double> inertia_trace;
};

/// Lloyd's algorithm from `restarts` seeded initializations; keeps the lowest
/// inertia (earliest restart on ties). Iterates until the assignment is a
/// fixpoint or max_iter. A cluster that empties out is re-seeded with the
/// point farthest from its centroid.
ClusterModel kmeans(Points points, const KMeansConfig& cfg);

double compute_inertia(Points points, std::span<const std::vector<double>> centroids,
                       std::span<const std::size_t> assignment);

struct SilhouetteResult {
  double mean = 0.0;
  std::vector<double> per_point;
};

/// s(i) = (b - a) / max(a, b) with Euclidean distances; points in singleton
/// clusters, and points with a = b = 0, score 0. Needs at least two clusters.
SilhouetteResult silhouette(Points points, std::span<const std::size_t> assignment);

struct KSelection {
  std::size_t k = 0;
  double score = 0.0;
  std::vector<std::pair<std::size_t, double>> table;  ///< (k, mean silhouette)
  ClusterModel model;                                 ///< model at the chosen k
};

/// Scans k in [k_min, k_max] and keeps the highest mean silhouette, smaller k on ties.
KSelection select_k(Points points, std::size_t k_min, std::size_t k_max, const KMeansConfig& base);

struct MergeResult {
  std::vector<std::size_t> assignment;
  std::map<std::size_t, std::size_t> sizes;  ///< new id -> size
};

/// Relabels every cluster through merge_map (old id -> new id). Every old id must be mapped.
MergeResult merge_clusters(std::span<const std::size_t> assignment, const std::map<std::size_t, std::size_t>& merge_map);

struct ScoreTestResult {
  double z = 0.0;
  double p = 1.0;
};

/// Pooled two-proportion score test of x1/n1 against x2/n2 with a two-sided
/// normal p-value. A pooled proportion of exactly 0 or 1 gives z = 0, p = 1.
ScoreTestResult score_test(std::size_t n1, std::size_t x1, std::size_t n2, std::size_t x2);

double normal_cdf(double z);

struct GroupDistribution {
  std::vector<std::size_t> cluster_ids;  ///< ascending
  std::vector<double> group_a;           ///< share of A's points in each cluster
  std::vector<double> group_b;
};

GroupDistribution group_distribution(std::span<const std::size_t> assignment, std::span<const Label> groups);

struct ClusterRow {
  std::size_t cluster_id = 0;
  std::size_t size = 0;
  std::size_t count_a = 0;
  std::size_t count_b = 0;
  ScoreTestResult test;
  std::string significant;  ///< "A", "B" or "none"
};

struct ClusterReport {
  std::vector<ClusterRow> rows;
  std::size_t total_a = 0;
  std::size_t total_b = 0;
  double alpha = 0.05;

  std::string to_csv() const;
};

/// Per-cluster group counts and a score test of each cluster's share of group A vs group B.
ClusterReport build_report(std::span<const std::size_t> assignment, std::span<const Label> groups,
                           double alpha = 0.05);

}  // namespace fusionkit
