#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "fusionkit/error.hpp"
#include "fusionkit/optim.hpp"
#include "fusionkit/rng.hpp"

namespace fusionkit::detail {

/// Shuffled minibatch loop with best-validation checkpointing and early stopping.
///
/// LossGrad: double(const Model&, std::span<const std::size_t> batch, std::size_t epoch, Model& grad)
///           returns the batch-mean loss and overwrites grad.
/// ValAcc:   double(const Model&)
template <typename Model, typename LossGrad, typename ValAcc>
TrainLog run_training(Model& model, std::size_t n_train, const TrainConfig& cfg, LossGrad&& loss_grad,
                      ValAcc&& val_accuracy) {
  Rng order_rng(derive_seed(cfg.seed, "minibatch-order"));
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});

  Model grad = model;
  Optimizer opt(cfg, model.trainable_parameters());

  TrainLog log;
  Model best = model;
  double best_acc = -1.0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
      const std::size_t stop = std::min(n_train, start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      const double loss = loss_grad(model, batch, epoch, grad);
      if (!std::isfinite(loss)) throw NumericError(fmt::format("training diverged at epoch {}", epoch));
      loss_sum += loss * static_cast<double>(batch.size());
      auto grads = grad.trainable_parameters();
      clip_global_norm(grads, cfg.clip_norm);
      opt.step(model.trainable_parameters(), grads);
    }
    if (!model.all_finite()) throw NumericError(fmt::format("training diverged at epoch {}", epoch));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n_train);
    rec.val_accuracy = val_accuracy(model);
    log.epochs.push_back(rec);

    if (rec.val_accuracy > best_acc) {
      best_acc = rec.val_accuracy;
      best = model;
      log.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      log.early_stopped = epoch < cfg.epochs;
      break;
    }
  }
  log.best_val_accuracy = best_acc;
  model = std::move(best);
  return log;
}

}  // namespace fusionkit::detail
