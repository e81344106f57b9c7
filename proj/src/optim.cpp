#include "fusionkit/optim.hpp"

#include <cmath>

#include <fmt/format.h>

#include "fusionkit/error.hpp"

namespace fusionkit {

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw InvalidArgument(fmt::format("unknown optimizer '{}'", s));
}

std::string_view optimizer_name(OptimizerKind k) noexcept { return k == OptimizerKind::adam ? "adam" : "sgd"; }

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("train: learning rate must be positive");
  if (!(clip_norm > 0.0)) throw InvalidArgument("train: clip norm must be positive");
  if (batch_size == 0) throw InvalidArgument("train: batch size must be positive");
  if (epochs == 0) throw InvalidArgument("train: epochs must be positive");
}

double clip_global_norm(const std::vector<Matrix*>& grads, double max_norm) {
  double sq = 0.0;
  for (const Matrix* g : grads)
    for (double v : g->values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (Matrix* g : grads)
      for (double& v : g->values()) v *= s;
  }
  return norm;
}

Optimizer::Optimizer(const TrainConfig& cfg, const std::vector<Matrix*>& params)
    : kind_(cfg.optimizer), lr_(cfg.learning_rate) {
  if (kind_ == OptimizerKind::adam) {
    for (const Matrix* p : params) {
      m_.emplace_back(p->rows(), p->cols());
      v_.emplace_back(p->rows(), p->cols());
    }
  }
}

void Optimizer::step(const std::vector<Matrix*>& params, const std::vector<Matrix*>& grads) {
  if (kind_ == OptimizerKind::sgd) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto p = params[k]->values();
      auto g = grads[k]->values();
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr_ * g[i];
    }
    return;
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k]->values();
    auto g = grads[k]->values();
    auto m = m_[k].values();
    auto v = v_[k].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

std::vector<double> flatten(const std::vector<const Matrix*>& tensors) {
  std::vector<double> out;
  for (const Matrix* t : tensors) out.insert(out.end(), t->values().begin(), t->values().end());
  return out;
}

void unflatten(std::span<const double> flat, const std::vector<Matrix*>& tensors) {
  std::size_t offset = 0;
  for (Matrix* t : tensors) {
    auto dst = t->values();
    if (offset + dst.size() > flat.size()) throw ShapeError("unflatten: flat vector too short");
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(offset),
              flat.begin() + static_cast<std::ptrdiff_t>(offset + dst.size()), dst.begin());
    offset += dst.size();
  }
  if (offset != flat.size()) throw ShapeError("unflatten: flat vector too long");
}

}  // namespace fusionkit
