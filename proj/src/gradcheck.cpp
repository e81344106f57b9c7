#include "fusionkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "fusionkit/error.hpp"

namespace fusionkit {

GradCheckResult grad_check(const ScalarFunction& f, std::span<const double> analytic_grad,
                           std::span<const double> point, double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidArgument("grad_check: epsilon must be positive");
  if (analytic_grad.size() != point.size()) {
    throw ShapeError(fmt::format("grad_check: gradient has {} entries, point has {}", analytic_grad.size(),
                                 point.size()));
  }

  std::vector<double> x(point.begin(), point.end());
  auto eval = [&](std::size_t coord, double value) {
    const double v = f(x);
    if (!std::isfinite(v)) {
      throw NumericError(fmt::format("grad_check: f is not finite at coordinate {} = {}", coord, value));
    }
    return v;
  };

  GradCheckResult result;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double original = x[i];
    x[i] = original + epsilon;
    const double plus = eval(i, x[i]);
    x[i] = original - epsilon;
    const double minus = eval(i, x[i]);
    x[i] = original;

    const double numeric = (plus - minus) / (2.0 * epsilon);
    const double analytic = analytic_grad[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic - numeric) / denom;
    if (i == 0 || rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_index = i;
      result.worst_analytic = analytic;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

}  // namespace fusionkit
