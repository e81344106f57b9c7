#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fusionkit/matrix.hpp"
#include "fusionkit/optim.hpp"
#include "fusionkit/rng.hpp"
#include "fusionkit/text.hpp"

namespace fusionkit {

class Container;

enum class Pooling { last, mean };

Pooling parse_pooling(std::string_view s);
std::string_view pooling_name(Pooling p) noexcept;

struct LstmConfig {
  std::size_t input_dim = 25;
  std::size_t hidden_dim = 100;
  Pooling pooling = Pooling::mean;
  std::size_t timesteps = 150;
  std::size_t num_classes = 2;

  void validate() const;
  friend bool operator==(const LstmConfig&, const LstmConfig&) = default;
};

/// Single-layer LSTM with a softmax classifier head.
///
/// Gate weights act on the concatenation [x_t; h_{t-1}] and have shape
/// H x (D + H); biases are H x 1 columns. Cell update:
///   f, i, o = sigmoid(W [x; h] + b),  g = tanh(W_g [x; h] + b_g)
///   c_t = f * c_{t-1} + i * g,        h_t = o * tanh(c_t)
/// with h_0 = c_0 = 0.
struct LstmModel {
  LstmConfig config;
  Matrix w_forget, w_input, w_output, w_cell;
  Matrix b_forget, b_input, b_output, b_cell;
  Matrix w_class;  ///< num_classes x H
  Matrix b_class;  ///< num_classes x 1

  /// All parameters zero.
  static LstmModel zeros(const LstmConfig& cfg);
  /// Weights uniform(-1/sqrt(H), 1/sqrt(H)); biases zero except the forget bias, which is 1.
  static LstmModel initialize(const LstmConfig& cfg, Rng& rng);

  /// In the order of parameter_names().
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::vector<Matrix*> trainable_parameters() { return parameters(); }
  static const std::vector<std::string>& parameter_names();

  bool all_finite() const;
  friend bool operator==(const LstmModel&, const LstmModel&) = default;
};

struct LstmOutput {
  Matrix hidden;                ///< H x T, column t is h_{t+1}
  std::vector<double> pooled;   ///< X_text
};

LstmOutput lstm_forward(const SequenceMatrix& m, const LstmModel& model);

/// softmax(W_c X_text + b_c).
std::vector<double> classify(const SequenceMatrix& m, const LstmModel& model);

/// Activations kept for backpropagation through time.
struct LstmTape {
  std::size_t steps = 0;
  Matrix inputs;  ///< T x (D + H): [x_t; h_{t-1}]
  Matrix forget, input, output, cell_candidate, cell, cell_tanh;  ///< T x H
  std::vector<double> pooled;
};

LstmTape lstm_forward_tape(const SequenceMatrix& m, const LstmModel& model);

/// Accumulates into `grad` the gate-parameter gradients implied by dLoss/dX_text.
/// The classifier-head entries of `grad` are not touched.
void lstm_backward(const LstmTape& tape, const LstmModel& model, std::span<const double> d_pooled,
                   LstmModel& grad);

struct LabeledSequence {
  std::shared_ptr<const SequenceMatrix> sequence;
  Label label = Label::A;
};

/// Mean cross-entropy over the batch. When grad is non-null it is overwritten with dLoss/dParams.
double lstm_loss(const LstmModel& model, std::span<const LabeledSequence> batch, LstmModel* grad = nullptr);

double lstm_accuracy(const LstmModel& model, std::span<const LabeledSequence> data);

struct LstmTrainResult {
  LstmModel model;
  TrainLog log;
};

/// Minibatch BPTT against cross-entropy. Returns the checkpoint with the best
/// validation accuracy (earliest epoch on ties).
LstmTrainResult train_lstm(std::span<const LabeledSequence> train, std::span<const LabeledSequence> validation,
                           const TrainConfig& cfg, const LstmConfig& lcfg);

Container to_container(const LstmModel& model);
LstmModel lstm_from_container(const Container& c);

/// Throws InvalidArgument unless both labels occur.
void require_both_classes(std::span<const Label> labels, std::string_view what);

}  // namespace fusionkit
