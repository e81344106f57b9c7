#include "fusionkit/svm.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "fusionkit/container.hpp"
#include "fusionkit/error.hpp"
#include "fusionkit/rng.hpp"

namespace fusionkit {

namespace {

// Full Gram matrix is cached up to this many points (8000^2 doubles = 512 MB).
constexpr std::size_t kKernelCacheLimit = 8000;

class SmoSolver {
 public:
  SmoSolver(std::vector<std::vector<double>> x, std::span<const int> y, double c, double gamma, double tol,
            std::uint64_t seed, bool record)
      : x_(std::move(x)), y_(y.begin(), y.end()), n_(x_.size()), c_(c), gamma_(gamma), tol_(tol), rng_(seed),
        record_(record), alpha_(n_, 0.0), error_(n_) {
    if (n_ <= kKernelCacheLimit) {
      gram_.resize(n_ * n_);
      for (std::size_t i = 0; i < n_; ++i) {
        gram_[i * n_ + i] = 1.0;
        for (std::size_t j = i + 1; j < n_; ++j) {
          const double k = rbf_kernel(x_[i], x_[j], gamma_);
          gram_[i * n_ + j] = k;
          gram_[j * n_ + i] = k;
        }
      }
    }
    // f(x) = 0 initially, so E_i = -y_i.
    for (std::size_t i = 0; i < n_; ++i) error_[i] = -static_cast<double>(y_[i]);
  }

  void solve(std::size_t max_passes) {
    // A bias left by the update rule can be stale when no alpha is free; re-fit it
    // and resume until the KKT conditions hold under the refreshed bias.
    for (int round = 0; round < 3; ++round) {
      sweep(max_passes);
      refresh_bias();
      converged_ = !any_violation();
      if (converged_ || passes_ >= max_passes) break;
    }
    // The verdict uses exact decision values, not the incrementally updated cache.
    recompute_errors();
    converged_ = !any_violation();
    if (!converged_) {
      polish(max_passes * n_);
      refresh_bias();
      recompute_errors();
      converged_ = !any_violation();
    }
  }

  void recompute_errors() {
    for (std::size_t i = 0; i < n_; ++i) {
      double f = bias_;
      for (std::size_t j = 0; j < n_; ++j)
        if (alpha_[j] > 0.0) f += alpha_[j] * y_[j] * kernel(j, i);
      error_[i] = f - y_[i];
    }
  }

  // Platt's heuristics can stall with violations left on noisy data. Finish with
  // maximal violating pairs: stop once the largest bias implied by an index free to
  // move up is within tol of the smallest implied by one free to move down, which
  // makes every KKT condition hold within tol for a bias between them.
  void polish(std::size_t max_steps) {
    for (std::size_t step = 0; step < max_steps; ++step) {
      std::size_t up = n_, low = n_;
      double v_up = -HUGE_VAL, v_low = HUGE_VAL;
      for (std::size_t i = 0; i < n_; ++i) {
        const double v = -error_[i];  // implied bias minus the current one
        const bool pos = y_[i] > 0;
        if ((pos ? alpha_[i] < c_ : alpha_[i] > 0.0) && v > v_up) {
          v_up = v;
          up = i;
        }
        if ((pos ? alpha_[i] > 0.0 : alpha_[i] < c_) && v < v_low) {
          v_low = v;
          low = i;
        }
      }
      if (up == n_ || low == n_ || v_up - v_low <= tol_) return;
      if (!take_step(up, low)) return;
    }
  }

  void sweep(std::size_t max_passes) {
    bool examine_all = true;
    std::size_t changed = 0;
    while ((changed > 0 || examine_all) && passes_ < max_passes) {
      ++passes_;
      changed = 0;
      if (examine_all) {
        for (std::size_t i = 0; i < n_; ++i) changed += examine(i);
      } else {
        for (std::size_t i = 0; i < n_; ++i)
          if (non_bound(i)) changed += examine(i);
      }
      if (examine_all) {
        examine_all = false;
      } else if (changed == 0) {
        examine_all = true;
      }
    }
  }

  SvmTrainResult result(Standardizer standardizer) && {
    SvmTrainResult out;
    out.model.c = c_;
    out.model.gamma = gamma_;
    out.model.tol = tol_;
    out.model.bias = bias_;
    std::vector<std::size_t> sv;
    for (std::size_t i = 0; i < n_; ++i)
      if (alpha_[i] > 0.0) sv.push_back(i);
    const std::size_t dim = n_ == 0 ? 0 : x_[0].size();
    out.model.support_vectors = Matrix(sv.size(), dim);
    for (std::size_t k = 0; k < sv.size(); ++k) {
      std::copy(x_[sv[k]].begin(), x_[sv[k]].end(), out.model.support_vectors.row(k).begin());
      out.model.coefficients.push_back(alpha_[sv[k]] * y_[sv[k]]);
    }
    out.model.standardizer = std::move(standardizer);
    out.dual_objective = svm_dual_objective(x_, y_, alpha_, gamma_);
    out.kkt_violation = kkt_violation();
    out.converged = converged_;
    out.alpha = std::move(alpha_);
    out.passes = passes_;
    out.updates = updates_;
    out.objective_trace = std::move(trace_);
    return out;
  }

 private:
  double kernel(std::size_t i, std::size_t j) const {
    if (!gram_.empty()) return gram_[i * n_ + j];
    return i == j ? 1.0 : rbf_kernel(x_[i], x_[j], gamma_);
  }

  bool non_bound(std::size_t i) const { return alpha_[i] > 0.0 && alpha_[i] < c_; }

  bool violates(std::size_t i) const {
    const double r = error_[i] * y_[i];
    return (r < -tol_ && alpha_[i] < c_) || (r > tol_ && alpha_[i] > 0.0);
  }

  // Reads the error cache, which solve() leaves exact.
  double kkt_violation() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double yf = y_[i] * (error_[i] + y_[i]);
      const double v = alpha_[i] == 0.0 ? 1.0 - yf : alpha_[i] == c_ ? yf - 1.0 : std::abs(yf - 1.0);
      worst = std::max(worst, v);
    }
    return worst;
  }

  bool any_violation() const {
    for (std::size_t i = 0; i < n_; ++i)
      if (violates(i)) return true;
    return false;
  }

  // Mean over free vectors of the bias each implies; with none free, the midpoint of
  // the interval of biases consistent with every bound vector's KKT condition.
  void refresh_bias() {
    double free_sum = 0.0, lo = -HUGE_VAL, hi = HUGE_VAL;
    std::size_t free_count = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double y = y_[i];
      const double g = error_[i] + y - bias_;  // f_i without bias
      const double implied = y - g;
      if (non_bound(i)) {
        free_sum += implied;
        ++free_count;
      } else if ((alpha_[i] == 0.0) == (y > 0)) {
        lo = std::max(lo, implied);
      } else {
        hi = std::min(hi, implied);
      }
    }
    double b;
    if (free_count > 0) {
      b = free_sum / static_cast<double>(free_count);
    } else if (std::isfinite(lo) && std::isfinite(hi)) {
      b = 0.5 * (lo + hi);
    } else {
      b = std::isfinite(lo) ? lo : std::isfinite(hi) ? hi : bias_;
    }
    const double db = b - bias_;
    for (double& e : error_) e += db;
    bias_ = b;
  }

  // Dual objective from the error cache: sum_i a_i y_i (f_i - b) = sum_i a_i y_i (E_i + y_i - b).
  double objective_from_errors() const {
    double lin = 0.0, quad = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      lin += alpha_[i];
      quad += alpha_[i] * y_[i] * (error_[i] + y_[i] - bias_);
    }
    return lin - 0.5 * quad;
  }

  bool take_step(std::size_t i1, std::size_t i2) {
    if (i1 == i2) return false;
    const double a1 = alpha_[i1], a2 = alpha_[i2];
    const double y1 = y_[i1], y2 = y_[i2];
    const double e1 = error_[i1], e2 = error_[i2];
    const double s = y1 * y2;

    double lo, hi;
    if (y1 != y2) {
      lo = std::max(0.0, a2 - a1);
      hi = std::min(c_, c_ + a2 - a1);
    } else {
      lo = std::max(0.0, a1 + a2 - c_);
      hi = std::min(c_, a1 + a2);
    }
    if (hi - lo <= 0.0) return false;

    const double k11 = kernel(i1, i1), k12 = kernel(i1, i2), k22 = kernel(i2, i2);
    const double eta = k11 + k22 - 2.0 * k12;
    // Along the constraint line a2 -> a2 + t the objective changes by slope * t - eta/2 * t^2.
    const double slope = y2 * (e1 - e2);

    double a2_new;
    if (eta > 1e-12) {
      a2_new = std::clamp(a2 + slope / eta, lo, hi);
    } else {
      auto gain = [&](double t) { return slope * (t - a2) - 0.5 * eta * (t - a2) * (t - a2); };
      const double g_lo = gain(lo), g_hi = gain(hi);
      if (g_lo > g_hi + 1e-12) {
        a2_new = lo;
      } else if (g_hi > g_lo + 1e-12) {
        a2_new = hi;
      } else {
        a2_new = a2;
      }
    }
    if (std::abs(a2_new - a2) < kStepEps * (a2_new + a2 + kStepEps)) return false;

    double a1_new = a1 + s * (a2 - a2_new);
    const double snap = 1e-12 * c_;
    auto snap_bounds = [&](double a) {
      if (a < snap) return 0.0;
      if (a > c_ - snap) return c_;
      return a;
    };
    a1_new = snap_bounds(a1_new);
    a2_new = snap_bounds(a2_new);

    const double d1 = y1 * (a1_new - a1);
    const double d2 = y2 * (a2_new - a2);
    const double b1 = bias_ - e1 - d1 * k11 - d2 * k12;
    const double b2 = bias_ - e2 - d1 * k12 - d2 * k22;
    double b_new;
    if (a1_new > 0.0 && a1_new < c_) {
      b_new = b1;
    } else if (a2_new > 0.0 && a2_new < c_) {
      b_new = b2;
    } else {
      b_new = 0.5 * (b1 + b2);
    }
    const double db = b_new - bias_;

    for (std::size_t k = 0; k < n_; ++k) error_[k] += d1 * kernel(i1, k) + d2 * kernel(i2, k) + db;
    alpha_[i1] = a1_new;
    alpha_[i2] = a2_new;
    bias_ = b_new;
    ++updates_;
    if (record_) trace_.push_back(objective_from_errors());
    return true;
  }

  std::size_t examine(std::size_t i2) {
    if (!violates(i2)) return 0;

    std::size_t nb_count = 0;
    std::size_t best = n_;
    double best_gap = -1.0;
    for (std::size_t i = 0; i < n_; ++i) {
      if (!non_bound(i)) continue;
      ++nb_count;
      const double gap = std::abs(error_[i] - error_[i2]);
      if (gap > best_gap) {
        best_gap = gap;
        best = i;
      }
    }
    if (nb_count > 1 && take_step(best, i2)) return 1;

    std::size_t start = static_cast<std::size_t>(rng_.uniform_index(n_));
    for (std::size_t k = 0; k < n_; ++k) {
      const std::size_t i1 = (start + k) % n_;
      if (non_bound(i1) && take_step(i1, i2)) return 1;
    }
    start = static_cast<std::size_t>(rng_.uniform_index(n_));
    for (std::size_t k = 0; k < n_; ++k) {
      const std::size_t i1 = (start + k) % n_;
      if (take_step(i1, i2)) return 1;
    }
    return 0;
  }

  static constexpr double kStepEps = 1e-12;

  std::vector<std::vector<double>> x_;
  std::vector<int> y_;
  std::size_t n_;
  double c_, gamma_, tol_;
  Rng rng_;
  bool record_;
  std::vector<double> gram_;
  std::vector<double> alpha_;
  std::vector<double> error_;
  double bias_ = 0.0;
  std::size_t passes_ = 0;
  std::size_t updates_ = 0;
  bool converged_ = false;
  std::vector<double> trace_;
};

}  // namespace

double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma) {
  if (x.size() != y.size()) throw ShapeError(fmt::format("rbf_kernel: lengths {} and {}", x.size(), y.size()));
  return std::exp(-gamma * squared_distance(x, y));
}

void SvmConfig::validate() const {
  if (!(c > 0.0)) throw InvalidArgument("svm: C must be positive");
  if (gamma && !(*gamma > 0.0)) throw InvalidArgument("svm: gamma must be positive");
  if (!(tol > 0.0)) throw InvalidArgument("svm: tol must be positive");
}

Standardizer Standardizer::fit(std::span<const std::vector<double>> x) {
  const std::size_t dim = x.empty() ? 0 : x[0].size();
  Standardizer s{std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
  const double n = static_cast<double>(x.size());
  for (const auto& row : x)
    for (std::size_t d = 0; d < dim; ++d) s.mean[d] += row[d];
  for (double& m : s.mean) m /= n;
  for (const auto& row : x)
    for (std::size_t d = 0; d < dim; ++d) s.scale[d] += (row[d] - s.mean[d]) * (row[d] - s.mean[d]);
  for (double& v : s.scale) {
    v = std::sqrt(v / n);
    if (v < 1e-12) v = 1.0;
  }
  return s;
}

Standardizer Standardizer::identity(std::size_t dim) {
  return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

std::vector<double> Standardizer::apply(std::span<const double> x) const {
  if (x.size() != mean.size()) {
    throw ShapeError(fmt::format("svm: input has {} features, model expects {}", x.size(), mean.size()));
  }
  std::vector<double> out(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) out[d] = (x[d] - mean[d]) / scale[d];
  return out;
}

SvmTrainResult train_smo(std::span<const std::vector<double>> x, std::span<const int> y, const SvmConfig& cfg,
                         std::uint64_t seed) {
  cfg.validate();
  if (x.size() != y.size()) throw ShapeError("train_smo: feature and label counts differ");
  if (x.size() < 2) throw InvalidArgument("train_smo: need at least two points");
  const std::size_t dim = x[0].size();
  if (dim == 0) throw InvalidArgument("train_smo: zero-dimensional features");
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != dim) throw ShapeError(fmt::format("train_smo: point {} has {} features, expected {}", i,
                                                         x[i].size(), dim));
    if (y[i] == 1) {
      pos = true;
    } else if (y[i] == -1) {
      neg = true;
    } else {
      throw InvalidArgument(fmt::format("train_smo: label {} is not +1 or -1", y[i]));
    }
  }
  if (!pos || !neg) throw InvalidArgument("train_smo: training data must contain both classes");

  Standardizer standardizer = cfg.standardize ? Standardizer::fit(x) : Standardizer::identity(dim);
  std::vector<std::vector<double>> z;
  z.reserve(x.size());
  for (const auto& row : x) z.push_back(standardizer.apply(row));

  const double gamma = cfg.gamma.value_or(1.0 / static_cast<double>(dim));
  SmoSolver solver(std::move(z), y, cfg.c, gamma, cfg.tol, seed, cfg.record_objective);
  solver.solve(cfg.max_passes);
  return std::move(solver).result(std::move(standardizer));
}

SvmPrediction predict(const SvmModel& model, std::span<const double> x) {
  const std::vector<double> z = model.standardizer.apply(x);
  double f = model.bias;
  for (std::size_t k = 0; k < model.coefficients.size(); ++k)
    f += model.coefficients[k] * rbf_kernel(model.support_vectors.row(k), z, model.gamma);
  return {f >= 0.0 ? 1 : -1, f};
}

std::vector<SvmPrediction> predict_batch(const SvmModel& model, std::span<const std::vector<double>> x) {
  std::vector<SvmPrediction> out;
  out.reserve(x.size());
  for (const auto& row : x) out.push_back(predict(model, row));
  return out;
}

double svm_dual_objective(std::span<const std::vector<double>> x, std::span<const int> y,
                          std::span<const double> alpha, double gamma) {
  double lin = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lin += alpha[i];
    if (alpha[i] == 0.0) continue;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (alpha[j] == 0.0) continue;
      quad += alpha[i] * alpha[j] * y[i] * y[j] * rbf_kernel(x[i], x[j], gamma);
    }
  }
  return lin - 0.5 * quad;
}

Container to_container(const SvmModel& model) {
  Container c("svm");
  c.set("c", model.c);
  c.set("gamma", model.gamma);
  c.set("tol", model.tol);
  c.set("bias", model.bias);
  c.add_tensor("support_vectors", model.support_vectors);
  c.add_tensor("coefficients", Matrix::column(model.coefficients));
  c.add_tensor("mean", Matrix(1, model.dim(), model.standardizer.mean));
  c.add_tensor("scale", Matrix(1, model.dim(), model.standardizer.scale));
  return c;
}

SvmModel svm_from_container(const Container& c) {
  c.expect_kind("svm");
  SvmModel m;
  m.c = c.get_double("c");
  m.gamma = c.get_double("gamma");
  m.tol = c.get_double("tol");
  m.bias = c.get_double("bias");
  m.support_vectors = c.tensor("support_vectors");
  const Matrix& coef = c.tensor("coefficients");
  m.coefficients.assign(coef.values().begin(), coef.values().end());
  const Matrix& mean = c.tensor("mean");
  const Matrix& scale = c.tensor("scale");
  m.standardizer.mean.assign(mean.values().begin(), mean.values().end());
  m.standardizer.scale.assign(scale.values().begin(), scale.values().end());
  if (m.coefficients.size() != m.support_vectors.rows() ||
      (m.support_vectors.rows() > 0 && m.support_vectors.cols() != m.dim()) || mean.size() != scale.size()) {
    throw ShapeError("svm container: inconsistent tensor shapes");
  }
  return m;
}

}  // namespace fusionkit
