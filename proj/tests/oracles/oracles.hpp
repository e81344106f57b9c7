#pragma once

// Reference implementations used only by tests. Each one is written directly
// from the mathematical definition, shares no code with the library, and
// favors clarity (and long double where it helps) over speed.

#include <cstddef>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<std::vector<double>>;  // row-major, Mat[r][c]

Mat matmul(const Mat& a, const Mat& b);

/// softmax in long double without max subtraction tricks beyond what is needed.
Vec softmax(const Vec& z);

struct LstmWeights {
  // Gate weights H x (D + H) acting on [x; h], biases of length H.
  Mat wf, wi, wo, wg;
  Vec bf, bi, bo, bg;
  Mat wc;  // C x H
  Vec bc;
};

/// Scalar-loop LSTM recurrence. x is D x T (x[d][t]). Returns h[t][j] for t = 0..T-1.
Mat lstm_hidden(const LstmWeights& w, const Mat& x);
Vec lstm_pool(const Mat& hidden, bool mean);

/// Exact maximum of the soft-margin RBF dual by enumerating every face of the
/// box (each alpha at 0, at C, or free) and solving the equality-constrained
/// stationarity system on the free set. Exponential in n; meant for n <= 8.
struct DualOptimum {
  double objective = 0.0;
  Vec alpha;
};
DualOptimum svm_dual_exact(const Mat& x, const std::vector<int>& y, double c, double gamma);

/// Dual objective sum(a) - 1/2 sum_ij a_i a_j y_i y_j K_ij in long double.
double svm_dual_objective(const Mat& x, const std::vector<int>& y, const Vec& alpha, double gamma);

/// Coarse feasible-grid maximum: every alpha_1..alpha_{n-1} on a uniform grid
/// of `steps` + 1 points in [0, C], alpha_n solved from the equality and kept
/// if it lies in the box. A lower bound on the true optimum.
double svm_dual_grid(const Mat& x, const std::vector<int>& y, double c, double gamma, std::size_t steps);

/// Minimum within-cluster sum of squares over every split into two non-empty groups.
double best_two_partition_inertia(const Mat& points);

/// Direct O(n^2) silhouette; singleton clusters score 0, as do points with a = b = 0.
Vec silhouette(const Mat& points, const std::vector<std::size_t>& assignment);

/// Pooled two-proportion z from an integer-arithmetic rearrangement of the statistic.
double score_z(long long n1, long long x1, long long n2, long long x2);

/// Two-sided normal tail 2 * (1 - Phi(|z|)) by composite Simpson integration of the density.
double two_sided_p(double z);

}  // namespace oracle
