#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "fusionkit/lstm.hpp"
#include "fusionkit/visual.hpp"

namespace fusionkit {

/// Joint text + visual classifier:
///   p = softmax(W_text X_text + W_visual X_visual + bias)
/// where X_text is the pooled LSTM output. The LSTM's own classifier head is
/// carried along but unused.
struct FusionModel {
  LstmModel lstm;
  Matrix w_text;    ///< classes x H
  Matrix w_visual;  ///< classes x V
  Matrix bias;      ///< classes x 1
  /// Keeps w_visual out of the trainable set (text-only ablation).
  bool visual_frozen = false;

  static FusionModel zeros(const LstmConfig& lcfg, std::size_t visual_dim);
  static FusionModel initialize(const LstmConfig& lcfg, std::size_t visual_dim, Rng& rng);

  std::size_t visual_dim() const noexcept { return w_visual.cols(); }

  /// LSTM gate tensors followed by w_text, w_visual (unless frozen) and bias.
  std::vector<Matrix*> trainable_parameters();
  std::vector<const Matrix*> trainable_parameters() const;
  bool all_finite() const;
  friend bool operator==(const FusionModel&, const FusionModel&) = default;
};

std::vector<double> fusion_forward(std::span<const double> x_text, std::span<const double> x_visual,
                                   const FusionModel& model);

struct FusionExample {
  std::shared_ptr<const SequenceMatrix> sequence;
  std::vector<double> visual;  ///< pairing used for evaluation
  Label label = Label::A;
  /// Optional pool of the user's reduced picture features for per-epoch re-pairing.
  std::shared_ptr<const std::vector<std::vector<double>>> visual_pool;
};

std::vector<double> fusion_classify(const FusionExample& ex, const FusionModel& model);

/// Mean cross-entropy; grad (if non-null) is overwritten with dLoss/dParams over trainable_parameters().
double fusion_loss(const FusionModel& model, std::span<const FusionExample> batch, FusionModel* grad = nullptr);

struct FusionOptions {
  /// random_one re-draws each training example's picture from its pool every epoch;
  /// mean uses the pool mean. Examples without a pool keep their fixed visual vector.
  PairingPolicy train_pairing = PairingPolicy::random_one;
  bool freeze_visual = false;
  std::optional<LstmModel> warm_start;
};

struct FusionTrainResult {
  FusionModel model;
  TrainLog log;
};

FusionTrainResult train_fusion(std::span<const FusionExample> train, std::span<const FusionExample> validation,
                               const TrainConfig& cfg, const LstmConfig& lcfg, const FusionOptions& options = {});

struct Evaluation {
  double accuracy = 0.0;
  std::size_t total = 0;
  /// confusion[true][predicted], index 0 = A, 1 = B.
  std::array<std::array<std::size_t, 2>, 2> confusion{};
};

Evaluation evaluate_predictions(std::span<const Label> truth, std::span<const Label> predicted);
Evaluation evaluate(const FusionModel& model, std::span<const FusionExample> data);
Evaluation evaluate(const LstmModel& model, std::span<const LabeledSequence> data);

Container to_container(const FusionModel& model);
FusionModel fusion_from_container(const Container& c);

}  // namespace fusionkit
