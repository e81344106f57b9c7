#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fusionkit/matrix.hpp"

namespace fusionkit {

class Container;

double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma);

struct SvmConfig {
  double c = 1.0;
  /// Unset means 1 / feature_dim.
  std::optional<double> gamma;
  double tol = 1e-3;
  std::size_t max_passes = 1000;
  /// Per-dimension z-scoring from the training data, applied before the kernel.
  bool standardize = true;
  /// Record the dual objective after every successful pair update.
  bool record_objective = false;

  void validate() const;
};

/// Per-dimension affine map x -> (x - mean) / scale.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(std::span<const std::vector<double>> x);
  static Standardizer identity(std::size_t dim);
  std::vector<double> apply(std::span<const double> x) const;
};

struct SvmModel {
  double c = 1.0;
  double gamma = 1.0;
  double tol = 1e-3;
  Matrix support_vectors;           ///< n_sv x dim, standardized space
  std::vector<double> coefficients; ///< alpha_i * y_i
  double bias = 0.0;
  Standardizer standardizer;

  std::size_t dim() const noexcept { return standardizer.mean.size(); }
};

struct SvmPrediction {
  int label = 1;  ///< +1 or -1; a decision value of exactly 0 maps to +1
  double decision = 0.0;
};

struct SvmTrainResult {
  SvmModel model;
  std::vector<double> alpha;  ///< one per training point
  double dual_objective = 0.0;
  std::size_t passes = 0;
  std::size_t updates = 0;
  std::vector<double> objective_trace;
  /// Largest KKT violation over the training points, from exact decision values:
  /// 1 - y f at alpha = 0, |y f - 1| when free, y f - 1 at alpha = C, floored at 0.
  /// KKT holds within tol iff this is at most tol.
  double kkt_violation = 0.0;
  bool converged = false;  ///< every KKT condition holds within tol
};

/// Platt's sequential minimal optimization for the soft-margin RBF dual
///   max_a  sum_i a_i - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
///   s.t.   0 <= a_i <= C,  sum_i a_i y_i = 0.
/// Second-index choice follows Platt's heuristic with randomized scan
/// starting points drawn from a generator seeded by `seed`. Labels are +1/-1.
SvmTrainResult train_smo(std::span<const std::vector<double>> x, std::span<const int> y, const SvmConfig& cfg,
                         std::uint64_t seed);

SvmPrediction predict(const SvmModel& model, std::span<const double> x);
std::vector<SvmPrediction> predict_batch(const SvmModel& model, std::span<const std::vector<double>> x);

/// Dual objective of an arbitrary alpha on (already standardized) data.
double svm_dual_objective(std::span<const std::vector<double>> x, std::span<const int> y,
                          std::span<const double> alpha, double gamma);

Container to_container(const SvmModel& model);
SvmModel svm_from_container(const Container& c);

}  // namespace fusionkit
