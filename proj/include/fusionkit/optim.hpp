#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "fusionkit/matrix.hpp"

namespace fusionkit {

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer(std::string_view s);
std::string_view optimizer_name(OptimizerKind k) noexcept;

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  /// Stop after this many epochs without a validation-accuracy improvement.
  std::size_t patience = 3;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  bool early_stopped = false;
};

/// Scales the gradients so their joint L2 norm is at most max_norm. Returns the norm before clipping.
double clip_global_norm(const std::vector<Matrix*>& grads, double max_norm);

/// Stateful first-order optimizer over a fixed list of parameter tensors.
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const std::vector<Matrix*>& params);

  void step(const std::vector<Matrix*>& params, const std::vector<Matrix*>& grads);

 private:
  OptimizerKind kind_;
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::size_t t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

std::vector<double> flatten(const std::vector<const Matrix*>& tensors);
void unflatten(std::span<const double> flat, const std::vector<Matrix*>& tensors);

}  // namespace fusionkit
