#include "fusionkit/fusion.hpp"

#include <cmath>

#include <fmt/format.h>

#include "fusionkit/container.hpp"
#include "fusionkit/error.hpp"
#include "train_loop.hpp"

namespace fusionkit {

namespace {

Label argmax_label(std::span<const double> p) { return p[1] > p[0] ? Label::B : Label::A; }

void logits_into(const FusionModel& model, std::span<const double> x_text, std::span<const double> x_visual,
                 std::span<double> logits) {
  std::copy(model.bias.values().begin(), model.bias.values().end(), logits.begin());
  matvec_accumulate(model.w_text, x_text, logits);
  matvec_accumulate(model.w_visual, x_visual, logits);
}

// Shared by fusion_loss and training; `pick` chooses the visual vector per example.
template <typename Pick>
double loss_impl(const FusionModel& model, std::span<const FusionExample> batch, FusionModel* grad, Pick&& pick) {
  if (batch.empty()) throw InvalidArgument("fusion_loss: empty batch");
  const std::size_t classes = model.bias.rows();
  if (grad != nullptr) {
    for (Matrix* p : grad->lstm.parameters()) p->fill(0.0);
    grad->w_text.fill(0.0);
    grad->w_visual.fill(0.0);
    grad->bias.fill(0.0);
  }
  std::vector<double> logits(classes), d_pooled(model.lstm.config.hidden_dim);
  double total = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto& ex = batch[k];
    const std::span<const double> visual = pick(k, ex);
    if (visual.size() != model.visual_dim()) {
      throw ShapeError(fmt::format("fusion: visual feature has {} values, model expects {}", visual.size(),
                                   model.visual_dim()));
    }
    const LstmTape tape = lstm_forward_tape(*ex.sequence, model.lstm);
    logits_into(model, tape.pooled, visual, logits);
    softmax(logits, logits);
    const auto y = static_cast<std::size_t>(label_index(ex.label));
    total -= std::log(std::max(logits[y], 1e-300));
    if (grad == nullptr) continue;
    logits[y] -= 1.0;
    rank1_update(grad->w_text, 1.0, logits, tape.pooled);
    rank1_update(grad->w_visual, 1.0, logits, visual);
    for (std::size_t c = 0; c < classes; ++c) grad->bias(c, 0) += logits[c];
    std::fill(d_pooled.begin(), d_pooled.end(), 0.0);
    matvec_transpose_accumulate(model.w_text, logits, d_pooled);
    lstm_backward(tape, model.lstm, d_pooled, grad->lstm);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  if (grad != nullptr)
    for (Matrix* p : grad->trainable_parameters())
      for (double& v : p->values()) v *= inv;
  return total * inv;
}

}  // namespace

FusionModel FusionModel::zeros(const LstmConfig& lcfg, std::size_t visual_dim) {
  if (visual_dim == 0) throw InvalidArgument("fusion: visual dim must be positive");
  FusionModel m;
  m.lstm = LstmModel::zeros(lcfg);
  m.w_text = Matrix(lcfg.num_classes, lcfg.hidden_dim);
  m.w_visual = Matrix(lcfg.num_classes, visual_dim);
  m.bias = Matrix(lcfg.num_classes, 1);
  return m;
}

FusionModel FusionModel::initialize(const LstmConfig& lcfg, std::size_t visual_dim, Rng& rng) {
  FusionModel m = zeros(lcfg, visual_dim);
  m.lstm = LstmModel::initialize(lcfg, rng);
  m.lstm.w_class.fill(0.0);
  const double kt = 1.0 / std::sqrt(static_cast<double>(lcfg.hidden_dim));
  const double kv = 1.0 / std::sqrt(static_cast<double>(visual_dim));
  for (double& v : m.w_text.values()) v = rng.uniform(-kt, kt);
  for (double& v : m.w_visual.values()) v = rng.uniform(-kv, kv);
  return m;
}

std::vector<Matrix*> FusionModel::trainable_parameters() {
  std::vector<Matrix*> out = lstm.parameters();
  out.resize(8);  // gate weights and biases; the LSTM head is inactive
  out.push_back(&w_text);
  if (!visual_frozen) out.push_back(&w_visual);
  out.push_back(&bias);
  return out;
}

std::vector<const Matrix*> FusionModel::trainable_parameters() const {
  std::vector<const Matrix*> out = lstm.parameters();
  out.resize(8);
  out.push_back(&w_text);
  if (!visual_frozen) out.push_back(&w_visual);
  out.push_back(&bias);
  return out;
}

bool FusionModel::all_finite() const {
  return lstm.all_finite() && w_text.all_finite() && w_visual.all_finite() && bias.all_finite();
}

std::vector<double> fusion_forward(std::span<const double> x_text, std::span<const double> x_visual,
                                   const FusionModel& model) {
  if (x_text.size() != model.w_text.cols() || x_visual.size() != model.w_visual.cols()) {
    throw ShapeError(fmt::format("fusion_forward: got text {} / visual {}, model expects {} / {}", x_text.size(),
                                 x_visual.size(), model.w_text.cols(), model.w_visual.cols()));
  }
  std::vector<double> logits(model.bias.rows());
  logits_into(model, x_text, x_visual, logits);
  return softmax(logits);
}

std::vector<double> fusion_classify(const FusionExample& ex, const FusionModel& model) {
  const LstmOutput out = lstm_forward(*ex.sequence, model.lstm);
  return fusion_forward(out.pooled, ex.visual, model);
}

double fusion_loss(const FusionModel& model, std::span<const FusionExample> batch, FusionModel* grad) {
  return loss_impl(model, batch, grad,
                   [](std::size_t, const FusionExample& ex) { return std::span<const double>(ex.visual); });
}

FusionTrainResult train_fusion(std::span<const FusionExample> train, std::span<const FusionExample> validation,
                               const TrainConfig& cfg, const LstmConfig& lcfg, const FusionOptions& options) {
  cfg.validate();
  lcfg.validate();
  if (validation.empty()) throw InvalidArgument("train_fusion: validation set is empty");
  if (train.empty()) throw InvalidArgument("train_fusion: training set is empty");
  std::vector<Label> labels;
  for (const auto& ex : train) labels.push_back(ex.label);
  require_both_classes(labels, "train_fusion");

  const std::size_t visual_dim = train[0].visual.size();
  Rng init_rng(derive_seed(cfg.seed, "fusion-init"));
  FusionModel model = FusionModel::initialize(lcfg, visual_dim, init_rng);
  if (options.warm_start) {
    if (options.warm_start->config != lcfg) throw InvalidArgument("train_fusion: warm-start LSTM config differs");
    auto dst = model.lstm.parameters();
    auto src = options.warm_start->parameters();
    for (std::size_t k = 0; k < 8; ++k) *dst[k] = *src[k];
  }
  if (options.freeze_visual) {
    model.visual_frozen = true;
    model.w_visual.fill(0.0);
  }

  // Per-example mean of the picture pool, computed once.
  std::vector<std::vector<double>> pool_means;
  if (options.train_pairing == PairingPolicy::mean) {
    pool_means.reserve(train.size());
    for (const auto& ex : train) {
      if (ex.visual_pool && !ex.visual_pool->empty()) {
        pool_means.push_back(*user_visual_feature(*ex.visual_pool, PairingPolicy::mean, 0));
      } else {
        pool_means.push_back(ex.visual);
      }
    }
  }

  const std::uint64_t pairing_seed = derive_seed(cfg.seed, "visual-pairing");
  std::vector<FusionExample> batch_buf;
  std::vector<std::size_t> batch_index;
  auto loss_grad = [&](const FusionModel& m, std::span<const std::size_t> idx, std::size_t epoch,
                       FusionModel& grad) {
    batch_buf.clear();
    batch_index.assign(idx.begin(), idx.end());
    for (std::size_t k : idx) batch_buf.push_back(train[k]);
    auto pick = [&](std::size_t pos, const FusionExample& ex) -> std::span<const double> {
      const std::size_t k = batch_index[pos];
      if (options.train_pairing == PairingPolicy::mean) return pool_means[k];
      if (!ex.visual_pool || ex.visual_pool->empty()) return ex.visual;
      Rng rng(derive_seed(pairing_seed, epoch * train.size() + k));
      return (*ex.visual_pool)[static_cast<std::size_t>(rng.uniform_index(ex.visual_pool->size()))];
    };
    return loss_impl(m, batch_buf, &grad, pick);
  };
  auto val_acc = [&](const FusionModel& m) { return evaluate(m, validation).accuracy; };
  TrainLog log = detail::run_training(model, train.size(), cfg, loss_grad, val_acc);
  return {std::move(model), std::move(log)};
}

Evaluation evaluate_predictions(std::span<const Label> truth, std::span<const Label> predicted) {
  if (truth.empty()) throw InvalidArgument("evaluate: empty dataset");
  if (truth.size() != predicted.size()) throw ShapeError("evaluate: truth and prediction counts differ");
  Evaluation e;
  e.total = truth.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++e.confusion[static_cast<std::size_t>(label_index(truth[i]))][static_cast<std::size_t>(label_index(predicted[i]))];
    if (truth[i] == predicted[i]) ++correct;
  }
  e.accuracy = static_cast<double>(correct) / static_cast<double>(e.total);
  return e;
}

Evaluation evaluate(const FusionModel& model, std::span<const FusionExample> data) {
  std::vector<Label> truth, predicted;
  for (const auto& ex : data) {
    truth.push_back(ex.label);
    predicted.push_back(argmax_label(fusion_classify(ex, model)));
  }
  return evaluate_predictions(truth, predicted);
}

Evaluation evaluate(const LstmModel& model, std::span<const LabeledSequence> data) {
  std::vector<Label> truth, predicted;
  for (const auto& ex : data) {
    truth.push_back(ex.label);
    predicted.push_back(argmax_label(classify(*ex.sequence, model)));
  }
  return evaluate_predictions(truth, predicted);
}

Container to_container(const FusionModel& model) {
  Container c("fusion");
  c.set("visual_dim", model.visual_dim());
  c.set("visual_frozen", std::string(model.visual_frozen ? "1" : "0"));
  c.add_tensor("w_text", model.w_text);
  c.add_tensor("w_visual", model.w_visual);
  c.add_tensor("bias", model.bias);
  c.add_child(to_container(model.lstm));
  return c;
}

FusionModel fusion_from_container(const Container& c) {
  c.expect_kind("fusion");
  FusionModel m;
  m.lstm = lstm_from_container(c.child("lstm"));
  m.w_text = c.tensor("w_text");
  m.w_visual = c.tensor("w_visual");
  m.bias = c.tensor("bias");
  m.visual_frozen = c.get("visual_frozen") == "1";
  const auto classes = m.lstm.config.num_classes;
  if (m.w_text.rows() != classes || m.w_text.cols() != m.lstm.config.hidden_dim || m.w_visual.rows() != classes ||
      m.w_visual.cols() != c.get_size("visual_dim") || m.bias.rows() != classes || m.bias.cols() != 1) {
    throw ShapeError("fusion container: inconsistent tensor shapes");
  }
  return m;
}

}  // namespace fusionkit
