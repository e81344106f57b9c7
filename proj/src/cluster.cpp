#include "fusionkit/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "fusionkit/error.hpp"
#include "fusionkit/matrix.hpp"
#include "fusionkit/rng.hpp"

namespace fusionkit {

namespace {

void check_points(Points points) {
  if (points.empty()) throw InvalidArgument("cluster: no points");
  const std::size_t dim = points[0].size();
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != dim) {
      throw ShapeError(fmt::format("cluster: point {} has {} values, expected {}", i, points[i].size(), dim));
    }
    for (double v : points[i])
      if (!std::isfinite(v)) throw InvalidArgument(fmt::format("cluster: point {} is not finite", i));
  }
}

std::size_t nearest(std::span<const double> x, const std::vector<std::vector<double>>& centroids, double* dist) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(x, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

std::vector<std::vector<double>> init_plus_plus(Points points, std::size_t k, Rng& rng) {
  const std::size_t n = points.size();
  std::vector<std::vector<double>> centroids;
  centroids.push_back(points[static_cast<std::size_t>(rng.uniform_index(n))]);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
      total += d2[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.uniform_index(n));
    }
    centroids.push_back(points[pick]);
  }
  return centroids;
}

std::vector<std::vector<double>> init_random(Points points, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(points.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<std::vector<double>> centroids;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t j = c + static_cast<std::size_t>(rng.uniform_index(idx.size() - c));
    std::swap(idx[c], idx[j]);
    centroids.push_back(points[idx[c]]);
  }
  return centroids;
}

std::vector<std::vector<double>> means(Points points, std::span<const std::size_t> assignment, std::size_t k) {
  const std::size_t dim = points[0].size();
  std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& s = sums[assignment[i]];
    for (std::size_t d = 0; d < dim; ++d) s[d] += points[i][d];
    ++counts[assignment[i]];
  }
  for (std::size_t c = 0; c < k; ++c)
    for (double& v : sums[c]) v /= static_cast<double>(counts[c]);
  return sums;
}

// Moves the point farthest from its centroid into each empty cluster.
void fill_empty(Points points, const std::vector<std::vector<double>>& centroids, std::vector<std::size_t>& assignment,
                std::size_t k) {
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t a : assignment) ++counts[a];
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0) continue;
    std::size_t far = points.size();
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (counts[assignment[i]] < 2) continue;
      const double d = squared_distance(points[i], centroids[assignment[i]]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    --counts[assignment[far]];
    assignment[far] = c;
    ++counts[c];
  }
}

ClusterModel lloyd(Points points, std::size_t k, std::size_t max_iter, Rng& rng, bool plus_plus) {
  ClusterModel m;
  m.k = k;
  m.centroids = plus_plus ? init_plus_plus(points, k, rng) : init_random(points, k, rng);
  m.assignment.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) m.assignment[i] = nearest(points[i], m.centroids, nullptr);

  std::vector<std::size_t> next(points.size());
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    fill_empty(points, m.centroids, m.assignment, k);
    m.centroids = means(points, m.assignment, k);
    m.inertia_trace.push_back(compute_inertia(points, m.centroids, m.assignment));
    ++m.iterations;
    for (std::size_t i = 0; i < points.size(); ++i) next[i] = nearest(points[i], m.centroids, nullptr);
    if (next == m.assignment) break;
    m.assignment.swap(next);
  }
  m.inertia = compute_inertia(points, m.centroids, m.assignment);
  return m;
}

}  // namespace

double compute_inertia(Points points, std::span<const std::vector<double>> centroids,
                       std::span<const std::size_t> assignment) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) total += squared_distance(points[i], centroids[assignment[i]]);
  return total;
}

ClusterModel kmeans(Points points, const KMeansConfig& cfg) {
  if (cfg.k == 0) throw InvalidArgument("kmeans: k must be positive");
  if (cfg.k > points.size()) {
    throw InvalidArgument(fmt::format("kmeans: k = {} exceeds the number of points {}", cfg.k, points.size()));
  }
  check_points(points);
  if (cfg.restarts == 0) throw InvalidArgument("kmeans: restarts must be positive");
  ClusterModel best;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    Rng rng(derive_seed(cfg.seed, r));
    ClusterModel m = lloyd(points, cfg.k, std::max<std::size_t>(cfg.max_iter, 1), rng, cfg.plus_plus);
    m.restart = r;
    if (r == 0 || m.inertia < best.inertia) best = std::move(m);
  }
  return best;
}

SilhouetteResult silhouette(Points points, std::span<const std::size_t> assignment) {
  if (points.size() != assignment.size()) throw ShapeError("silhouette: point and assignment counts differ");
  std::map<std::size_t, std::size_t> sizes;
  for (std::size_t a : assignment) ++sizes[a];
  if (sizes.size() < 2) throw InvalidArgument("silhouette: need at least two non-empty clusters");

  std::map<std::size_t, std::size_t> slot;
  for (const auto& [id, sz] : sizes) slot.emplace(id, slot.size());
  const std::size_t n = points.size();
  SilhouetteResult out;
  out.per_point.assign(n, 0.0);
  std::vector<double> dist_sum(sizes.size());
  std::vector<std::size_t> count(sizes.size(), 0);
  for (const auto& [id, sz] : sizes) count[slot[id]] = sz;

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t own = slot[assignment[i]];
    if (count[own] == 1) continue;
    std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      dist_sum[slot[assignment[j]]] += std::sqrt(squared_distance(points[i], points[j]));
    }
    const double a = dist_sum[own] / static_cast<double>(count[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < dist_sum.size(); ++c)
      if (c != own) b = std::min(b, dist_sum[c] / static_cast<double>(count[c]));
    const double denom = std::max(a, b);
    out.per_point[i] = denom > 0.0 ? (b - a) / denom : 0.0;
  }
  double total = 0.0;
  for (double s : out.per_point) total += s;
  out.mean = total / static_cast<double>(n);
  return out;
}

KSelection select_k(Points points, std::size_t k_min, std::size_t k_max, const KMeansConfig& base) {
  if (k_min < 2 || k_min > k_max || k_max > points.size()) {
    throw InvalidArgument(fmt::format("select_k: need 2 <= k_min <= k_max <= n (got {}, {}, n = {})", k_min, k_max,
                                      points.size()));
  }
  KSelection sel;
  for (std::size_t k = k_min; k <= k_max; ++k) {
    KMeansConfig cfg = base;
    cfg.k = k;
    cfg.seed = derive_seed(base.seed, k);
    ClusterModel m = kmeans(points, cfg);
    // Coincident points can leave every point in one cluster; that clustering scores 0.
    const std::set<std::size_t> used(m.assignment.begin(), m.assignment.end());
    const double score = used.size() < 2 ? 0.0 : silhouette(points, m.assignment).mean;
    sel.table.emplace_back(k, score);
    if (sel.table.size() == 1 || score > sel.score) {
      sel.k = k;
      sel.score = score;
      sel.model = std::move(m);
    }
  }
  return sel;
}

MergeResult merge_clusters(std::span<const std::size_t> assignment, const std::map<std::size_t, std::size_t>& merge_map) {
  MergeResult out;
  out.assignment.reserve(assignment.size());
  for (std::size_t a : assignment) {
    const auto it = merge_map.find(a);
    if (it == merge_map.end()) throw InvalidArgument(fmt::format("merge_clusters: cluster {} is not mapped", a));
    out.assignment.push_back(it->second);
    ++out.sizes[it->second];
  }
  return out;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

ScoreTestResult score_test(std::size_t n1, std::size_t x1, std::size_t n2, std::size_t x2) {
  if (n1 == 0 || n2 == 0) throw InvalidArgument("score_test: group sizes must be positive");
  if (x1 > n1 || x2 > n2) throw InvalidArgument("score_test: counts exceed group sizes");
  const double dn1 = static_cast<double>(n1), dn2 = static_cast<double>(n2);
  const double p1 = static_cast<double>(x1) / dn1;
  const double p2 = static_cast<double>(x2) / dn2;
  const double pooled = static_cast<double>(x1 + x2) / static_cast<double>(n1 + n2);
  if (pooled <= 0.0 || pooled >= 1.0) return {0.0, 1.0};
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / dn1 + 1.0 / dn2));
  const double z = (p1 - p2) / se;
  return {z, std::erfc(std::abs(z) / std::sqrt(2.0))};
}

GroupDistribution group_distribution(std::span<const std::size_t> assignment, std::span<const Label> groups) {
  if (assignment.size() != groups.size()) throw ShapeError("group_distribution: every point needs a group label");
  std::map<std::size_t, std::array<std::size_t, 2>> counts;
  std::array<std::size_t, 2> totals{};
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const auto g = static_cast<std::size_t>(label_index(groups[i]));
    ++counts[assignment[i]][g];
    ++totals[g];
  }
  if (totals[0] == 0 || totals[1] == 0) throw InvalidArgument("group_distribution: a group has no points");
  GroupDistribution out;
  for (const auto& [id, c] : counts) {
    out.cluster_ids.push_back(id);
    out.group_a.push_back(static_cast<double>(c[0]) / static_cast<double>(totals[0]));
    out.group_b.push_back(static_cast<double>(c[1]) / static_cast<double>(totals[1]));
  }
  return out;
}

ClusterReport build_report(std::span<const std::size_t> assignment, std::span<const Label> groups, double alpha) {
  if (assignment.size() != groups.size()) throw ShapeError("build_report: every point needs a group label");
  std::map<std::size_t, std::array<std::size_t, 2>> counts;
  ClusterReport report;
  report.alpha = alpha;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const auto g = static_cast<std::size_t>(label_index(groups[i]));
    ++counts[assignment[i]][g];
    (g == 0 ? report.total_a : report.total_b) += 1;
  }
  if (report.total_a == 0 || report.total_b == 0) throw InvalidArgument("build_report: a group has no points");
  for (const auto& [id, c] : counts) {
    ClusterRow row;
    row.cluster_id = id;
    row.count_a = c[0];
    row.count_b = c[1];
    row.size = c[0] + c[1];
    row.test = score_test(report.total_a, c[0], report.total_b, c[1]);
    row.significant = row.test.p < alpha ? (row.test.z > 0.0 ? "A" : "B") : "none";
    report.rows.push_back(row);
  }
  return report;
}

std::string ClusterReport::to_csv() const {
  std::string out = "cluster_id,size,count_A,count_B,z,p,significant\n";
  for (const auto& r : rows) {
    fmt::format_to(std::back_inserter(out), "{},{},{},{},{},{},{}\n", r.cluster_id, r.size, r.count_a, r.count_b,
                   r.test.z, r.test.p, r.significant);
  }
  return out;
}

}  // namespace fusionkit
