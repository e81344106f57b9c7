#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace fusionkit {

struct GradCheckResult {
  /// max_i |g_analytic_i - g_fd_i| / max(|g_analytic_i|, |g_fd_i|, 1e-8)
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Compares an analytic gradient against central differences at `point`.
/// Throws NumericError if f is non-finite anywhere it is evaluated.
GradCheckResult grad_check(const ScalarFunction& f, std::span<const double> analytic_grad,
                           std::span<const double> point, double epsilon = 1e-5);

}  // namespace fusionkit
