#include "fusionkit/lstm.hpp"

#include <cmath>

#include <fmt/format.h>

#include "fusionkit/container.hpp"
#include "fusionkit/error.hpp"
#include "train_loop.hpp"

namespace fusionkit {

namespace {

void check_input(const SequenceMatrix& m, const LstmConfig& cfg) {
  if (m.dim() != cfg.input_dim || m.timesteps() == 0) {
    throw ShapeError(fmt::format("lstm: input {} does not match input_dim {}", m.values.shape_string(),
                                 cfg.input_dim));
  }
}

void gate_preactivation(const Matrix& w, const Matrix& b, std::span<const double> z, std::span<double> out) {
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = b(r, 0) + dot(w.row(r), z);
}

}  // namespace

Pooling parse_pooling(std::string_view s) {
  if (s == "last") return Pooling::last;
  if (s == "mean") return Pooling::mean;
  throw InvalidArgument(fmt::format("unknown pooling '{}' (expected last or mean)", s));
}

std::string_view pooling_name(Pooling p) noexcept { return p == Pooling::last ? "last" : "mean"; }

void LstmConfig::validate() const {
  if (input_dim == 0 || hidden_dim == 0 || timesteps == 0 || num_classes < 2) {
    throw InvalidArgument(fmt::format("lstm config: dims must be positive (D={}, H={}, T={}, classes={})",
                                      input_dim, hidden_dim, timesteps, num_classes));
  }
}

LstmModel LstmModel::zeros(const LstmConfig& cfg) {
  cfg.validate();
  const std::size_t h = cfg.hidden_dim;
  const std::size_t zdim = cfg.input_dim + h;
  LstmModel m;
  m.config = cfg;
  for (Matrix* w : {&m.w_forget, &m.w_input, &m.w_output, &m.w_cell}) *w = Matrix(h, zdim);
  for (Matrix* b : {&m.b_forget, &m.b_input, &m.b_output, &m.b_cell}) *b = Matrix(h, 1);
  m.w_class = Matrix(cfg.num_classes, h);
  m.b_class = Matrix(cfg.num_classes, 1);
  return m;
}

LstmModel LstmModel::initialize(const LstmConfig& cfg, Rng& rng) {
  LstmModel m = zeros(cfg);
  const double k = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
  for (Matrix* w : {&m.w_forget, &m.w_input, &m.w_output, &m.w_cell, &m.w_class})
    for (double& v : w->values()) v = rng.uniform(-k, k);
  m.b_forget.fill(1.0);
  return m;
}

std::vector<Matrix*> LstmModel::parameters() {
  return {&w_forget, &w_input, &w_output, &w_cell, &b_forget, &b_input, &b_output, &b_cell, &w_class, &b_class};
}

std::vector<const Matrix*> LstmModel::parameters() const {
  return {&w_forget, &w_input, &w_output, &w_cell, &b_forget, &b_input, &b_output, &b_cell, &w_class, &b_class};
}

const std::vector<std::string>& LstmModel::parameter_names() {
  static const std::vector<std::string> names{"w_forget", "w_input",  "w_output", "w_cell",  "b_forget",
                                              "b_input",  "b_output", "b_cell",   "w_class", "b_class"};
  return names;
}

bool LstmModel::all_finite() const {
  for (const Matrix* p : parameters())
    if (!p->all_finite()) return false;
  return true;
}

LstmTape lstm_forward_tape(const SequenceMatrix& m, const LstmModel& model) {
  const auto& cfg = model.config;
  check_input(m, cfg);
  const std::size_t d = cfg.input_dim;
  const std::size_t h = cfg.hidden_dim;
  const std::size_t steps = m.timesteps();

  LstmTape tape;
  tape.steps = steps;
  tape.inputs = Matrix(steps, d + h);
  for (Matrix* t : {&tape.forget, &tape.input, &tape.output, &tape.cell_candidate, &tape.cell, &tape.cell_tanh})
    *t = Matrix(steps, h);
  tape.pooled.assign(h, 0.0);

  for (std::size_t t = 0; t < steps; ++t) {
    auto z = tape.inputs.row(t);
    for (std::size_t r = 0; r < d; ++r) z[r] = m.values(r, t);
    if (t > 0) {
      const auto prev_c = tape.cell_tanh.row(t - 1);
      const auto prev_o = tape.output.row(t - 1);
      for (std::size_t r = 0; r < h; ++r) z[d + r] = prev_o[r] * prev_c[r];
    }
    auto f = tape.forget.row(t);
    auto i = tape.input.row(t);
    auto o = tape.output.row(t);
    auto g = tape.cell_candidate.row(t);
    gate_preactivation(model.w_forget, model.b_forget, z, f);
    gate_preactivation(model.w_input, model.b_input, z, i);
    gate_preactivation(model.w_output, model.b_output, z, o);
    gate_preactivation(model.w_cell, model.b_cell, z, g);
    auto c = tape.cell.row(t);
    auto tc = tape.cell_tanh.row(t);
    for (std::size_t r = 0; r < h; ++r) {
      f[r] = sigmoid(f[r]);
      i[r] = sigmoid(i[r]);
      o[r] = sigmoid(o[r]);
      g[r] = std::tanh(g[r]);
      const double c_prev = t > 0 ? tape.cell(t - 1, r) : 0.0;
      c[r] = f[r] * c_prev + i[r] * g[r];
      tc[r] = std::tanh(c[r]);
    }
  }

  if (cfg.pooling == Pooling::last) {
    for (std::size_t r = 0; r < h; ++r) tape.pooled[r] = tape.output(steps - 1, r) * tape.cell_tanh(steps - 1, r);
  } else {
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t r = 0; r < h; ++r) tape.pooled[r] += tape.output(t, r) * tape.cell_tanh(t, r);
    for (double& v : tape.pooled) v /= static_cast<double>(steps);
  }
  return tape;
}

LstmOutput lstm_forward(const SequenceMatrix& m, const LstmModel& model) {
  LstmTape tape = lstm_forward_tape(m, model);
  const std::size_t h = model.config.hidden_dim;
  LstmOutput out{Matrix(h, tape.steps), std::move(tape.pooled)};
  for (std::size_t t = 0; t < tape.steps; ++t)
    for (std::size_t r = 0; r < h; ++r) out.hidden(r, t) = tape.output(t, r) * tape.cell_tanh(t, r);
  return out;
}

std::vector<double> classify(const SequenceMatrix& m, const LstmModel& model) {
  const LstmTape tape = lstm_forward_tape(m, model);
  std::vector<double> logits(model.b_class.values().begin(), model.b_class.values().end());
  matvec_accumulate(model.w_class, tape.pooled, logits);
  return softmax(logits);
}

void lstm_backward(const LstmTape& tape, const LstmModel& model, std::span<const double> d_pooled,
                   LstmModel& grad) {
  const std::size_t d = model.config.input_dim;
  const std::size_t h = model.config.hidden_dim;
  const std::size_t steps = tape.steps;
  const bool mean = model.config.pooling == Pooling::mean;
  const double inv_steps = 1.0 / static_cast<double>(steps);

  std::vector<double> dh(h), dc_next(h, 0.0), dh_next(h, 0.0);
  std::vector<double> dzf(h), dzi(h), dzo(h), dzg(h), dz(d + h);

  for (std::size_t t = steps; t-- > 0;) {
    for (std::size_t r = 0; r < h; ++r) {
      double pooled_part = 0.0;
      if (mean) {
        pooled_part = d_pooled[r] * inv_steps;
      } else if (t == steps - 1) {
        pooled_part = d_pooled[r];
      }
      dh[r] = dh_next[r] + pooled_part;
    }
    for (std::size_t r = 0; r < h; ++r) {
      const double f = tape.forget(t, r);
      const double i = tape.input(t, r);
      const double o = tape.output(t, r);
      const double g = tape.cell_candidate(t, r);
      const double tc = tape.cell_tanh(t, r);
      const double c_prev = t > 0 ? tape.cell(t - 1, r) : 0.0;
      const double d_o = dh[r] * tc;
      const double dc = dh[r] * o * (1.0 - tc * tc) + dc_next[r];
      dzf[r] = dc * c_prev * f * (1.0 - f);
      dzi[r] = dc * g * i * (1.0 - i);
      dzg[r] = dc * i * (1.0 - g * g);
      dzo[r] = d_o * o * (1.0 - o);
      dc_next[r] = dc * f;
    }
    const auto z = tape.inputs.row(t);
    rank1_update(grad.w_forget, 1.0, dzf, z);
    rank1_update(grad.w_input, 1.0, dzi, z);
    rank1_update(grad.w_output, 1.0, dzo, z);
    rank1_update(grad.w_cell, 1.0, dzg, z);
    for (std::size_t r = 0; r < h; ++r) {
      grad.b_forget(r, 0) += dzf[r];
      grad.b_input(r, 0) += dzi[r];
      grad.b_output(r, 0) += dzo[r];
      grad.b_cell(r, 0) += dzg[r];
    }
    if (t == 0) break;
    std::fill(dz.begin(), dz.end(), 0.0);
    matvec_transpose_accumulate(model.w_forget, dzf, dz);
    matvec_transpose_accumulate(model.w_input, dzi, dz);
    matvec_transpose_accumulate(model.w_output, dzo, dz);
    matvec_transpose_accumulate(model.w_cell, dzg, dz);
    std::copy(dz.begin() + static_cast<std::ptrdiff_t>(d), dz.end(), dh_next.begin());
  }
}

double lstm_loss(const LstmModel& model, std::span<const LabeledSequence> batch, LstmModel* grad) {
  if (batch.empty()) throw InvalidArgument("lstm_loss: empty batch");
  if (grad != nullptr) {
    if (grad->config != model.config) *grad = LstmModel::zeros(model.config);
    for (Matrix* p : grad->parameters()) p->fill(0.0);
  }
  const std::size_t classes = model.config.num_classes;
  std::vector<double> logits(classes), d_pooled(model.config.hidden_dim);
  double total = 0.0;
  for (const auto& ex : batch) {
    const LstmTape tape = lstm_forward_tape(*ex.sequence, model);
    std::copy(model.b_class.values().begin(), model.b_class.values().end(), logits.begin());
    matvec_accumulate(model.w_class, tape.pooled, logits);
    softmax(logits, logits);
    const auto y = static_cast<std::size_t>(label_index(ex.label));
    total -= std::log(std::max(logits[y], 1e-300));
    if (grad == nullptr) continue;
    logits[y] -= 1.0;  // dLoss/dlogits
    rank1_update(grad->w_class, 1.0, logits, tape.pooled);
    for (std::size_t k = 0; k < classes; ++k) grad->b_class(k, 0) += logits[k];
    std::fill(d_pooled.begin(), d_pooled.end(), 0.0);
    matvec_transpose_accumulate(model.w_class, logits, d_pooled);
    lstm_backward(tape, model, d_pooled, *grad);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  if (grad != nullptr)
    for (Matrix* p : grad->parameters())
      for (double& v : p->values()) v *= inv;
  return total * inv;
}

double lstm_accuracy(const LstmModel& model, std::span<const LabeledSequence> data) {
  if (data.empty()) throw InvalidArgument("lstm_accuracy: empty dataset");
  std::size_t correct = 0;
  for (const auto& ex : data) {
    const auto p = classify(*ex.sequence, model);
    const int predicted = p[1] > p[0] ? 1 : 0;
    if (predicted == label_index(ex.label)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

void require_both_classes(std::span<const Label> labels, std::string_view what) {
  bool seen_a = false, seen_b = false;
  for (Label l : labels) (l == Label::A ? seen_a : seen_b) = true;
  if (!seen_a || !seen_b) throw InvalidArgument(fmt::format("{}: training data must contain both classes", what));
}

LstmTrainResult train_lstm(std::span<const LabeledSequence> train, std::span<const LabeledSequence> validation,
                           const TrainConfig& cfg, const LstmConfig& lcfg) {
  cfg.validate();
  lcfg.validate();
  if (validation.empty()) throw InvalidArgument("train_lstm: validation set is empty");
  std::vector<Label> labels;
  for (const auto& ex : train) labels.push_back(ex.label);
  require_both_classes(labels, "train_lstm");

  Rng init_rng(derive_seed(cfg.seed, "lstm-init"));
  LstmModel model = LstmModel::initialize(lcfg, init_rng);
  std::vector<LabeledSequence> batch_buf;
  auto loss_grad = [&](const LstmModel& m, std::span<const std::size_t> idx, std::size_t, LstmModel& grad) {
    batch_buf.clear();
    for (std::size_t k : idx) batch_buf.push_back(train[k]);
    return lstm_loss(m, batch_buf, &grad);
  };
  auto val_acc = [&](const LstmModel& m) { return lstm_accuracy(m, validation); };
  TrainLog log = detail::run_training(model, train.size(), cfg, loss_grad, val_acc);
  return {std::move(model), std::move(log)};
}

Container to_container(const LstmModel& model) {
  Container c("lstm");
  c.set("input_dim", model.config.input_dim);
  c.set("hidden_dim", model.config.hidden_dim);
  c.set("pooling", std::string(pooling_name(model.config.pooling)));
  c.set("timesteps", model.config.timesteps);
  c.set("num_classes", model.config.num_classes);
  const auto params = model.parameters();
  const auto& names = LstmModel::parameter_names();
  for (std::size_t k = 0; k < params.size(); ++k) c.add_tensor(names[k], *params[k]);
  return c;
}

LstmModel lstm_from_container(const Container& c) {
  c.expect_kind("lstm");
  LstmConfig cfg;
  cfg.input_dim = c.get_size("input_dim");
  cfg.hidden_dim = c.get_size("hidden_dim");
  cfg.pooling = parse_pooling(c.get("pooling"));
  cfg.timesteps = c.get_size("timesteps");
  cfg.num_classes = c.get_size("num_classes");
  LstmModel model = LstmModel::zeros(cfg);
  const auto params = model.parameters();
  const auto& names = LstmModel::parameter_names();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Matrix& t = c.tensor(names[k]);
    if (t.rows() != params[k]->rows() || t.cols() != params[k]->cols()) {
      throw ShapeError(fmt::format("lstm container: tensor {} is {}, expected {}", names[k], t.shape_string(),
                                   params[k]->shape_string()));
    }
    *params[k] = t;
  }
  return model;
}

}  // namespace fusionkit
