#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "nilm/adam.hpp"
#include "nilm/model.hpp"
#include "nilm/windowing.hpp"

namespace nilm {

struct TrainConfig {
  std::size_t max_epochs = 50;
  std::size_t batch_size = 1000;
  std::size_t min_epochs_before_stop = 5;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  bool shuffle = true;
  float learning_rate = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

inline void validate(const TrainConfig& c) {
  if (c.batch_size < 1) throw SpecError("train: batch_size must be >= 1");
  if (c.patience < 1) throw SpecError("train: patience must be >= 1");
  if (c.max_epochs < c.min_epochs_before_stop)
    throw SpecError("train: max_epochs must be >= min_epochs_before_stop");
}

// Epochs are 1-based; best_epoch is the earliest epoch achieving the
// minimum validation loss seen before stopping.
struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t stopped_epoch = 0;
  std::size_t best_epoch = 0;
};

// Stop once the validation loss has not improved (strictly) for `patience`
// consecutive epochs, provided at least `min_epochs` epochs have run.
class EarlyStopping {
public:
  EarlyStopping(std::size_t patience, std::size_t min_epochs)
      : patience_(patience), min_epochs_(min_epochs) {}

  // Feed the validation loss of the next epoch. Returns true if this epoch
  // improved on the best seen so far.
  bool observe(double val_loss) {
    ++epoch_;
    if (val_loss < best_loss_) {
      best_loss_ = val_loss;
      best_epoch_ = epoch_;
      stale_epochs_ = 0;
      return true;
    }
    ++stale_epochs_;
    return false;
  }

  bool should_stop() const {
    return stale_epochs_ >= patience_ && epoch_ >= min_epochs_;
  }

  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

private:
  std::size_t patience_;
  std::size_t min_epochs_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t stale_epochs_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct TrainResult {
  Seq2PointModel model;
  TrainHistory history;
};

// MSE of the model over a batch, in normalized units.
inline double evaluate_loss(const Seq2PointModel& model,
                            const WindowBatch& batch) {
  if (batch.size() == 0) throw DataError("evaluate_loss: empty batch");
  const auto preds = predict_windows(model, batch.inputs);
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d =
        static_cast<double>(preds[i]) - static_cast<double>(batch.targets[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(preds.size());
}

// Training loop with an injectable validation metric: epochs of Adam over
// seeded shuffled mini-batches, early stopping on the validation loss, and
// restoration of the best epoch's parameters. The per-epoch training loss is
// the mean squared error accumulated over that epoch's mini-batches.
inline TrainResult train_with_validation(
    Seq2PointModel model, const WindowBatch& train_batch,
    const TrainConfig& config,
    const std::function<double(const Seq2PointModel&, std::size_t)>& val_fn) {
  validate(config);
  if (train_batch.size() == 0) throw DataError("train: empty training data");
  if (train_batch.window_length() != model.window_length)
    throw ShapeError("train: batch window length does not match model");

  TrainResult result;
  result.model = std::move(model);
  if (config.max_epochs == 0) return result;

  auto adam = AdamState<float>::for_params(
      result.model.params, config.learning_rate, config.beta1, config.beta2,
      config.epsilon);
  EarlyStopping stopper(config.patience, config.min_epochs_before_stop);

  const std::size_t n = train_batch.size();
  const std::size_t W = result.model.window_length;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  ParamSet<float> best_params = result.model.params;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (config.shuffle) {
      // Per-epoch shuffle stream, distinct from the init substreams.
      constexpr std::uint64_t kShuffleStream = 0x10000;
      Rng rng(substream_seed(config.seed, kShuffleStream + epoch));
      deterministic_shuffle(order, rng);
    }

    // Per-window squared errors keyed by original index, so the recorded
    // epoch loss does not depend on the shuffle order.
    std::vector<double> sq_error(n, 0.0);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(start + config.batch_size, n);
      const std::size_t bs = end - start;
      Tensor<float> inputs({bs, W});
      std::vector<float> targets(bs);
      for (std::size_t i = 0; i < bs; ++i) {
        const std::size_t src = order[start + i];
        std::copy(train_batch.inputs.data.begin() + src * W,
                  train_batch.inputs.data.begin() + (src + 1) * W,
                  inputs.data.begin() + i * W);
        targets[i] = train_batch.targets[src];
      }
      auto grad = compute_gradients<float>(result.model.specs,
                                           result.model.params, inputs,
                                           targets);
      adam_step(result.model.params, grad.gradients, adam);
      for (std::size_t i = 0; i < bs; ++i) {
        const double d = static_cast<double>(grad.predictions[i]) -
                         static_cast<double>(targets[i]);
        sq_error[order[start + i]] = d * d;
      }
    }

    double epoch_sq_sum = 0.0;
    for (double v : sq_error) epoch_sq_sum += v;
    result.history.train_loss.push_back(epoch_sq_sum /
                                        static_cast<double>(n));
    const double val = val_fn(result.model, epoch);
    result.history.val_loss.push_back(val);
    result.history.stopped_epoch = epoch;

    if (stopper.observe(val)) best_params = result.model.params;
    if (stopper.should_stop()) break;
  }

  result.history.best_epoch = stopper.best_epoch();
  result.model.params = std::move(best_params);
  return result;
}

// Standard training: validation loss is the full-split MSE in normalized
// units, matching the training objective.
inline TrainResult train(Seq2PointModel model, const WindowBatch& train_batch,
                         const WindowBatch& val_batch,
                         const TrainConfig& config) {
  if (val_batch.size() == 0) throw DataError("train: empty validation data");
  return train_with_validation(
      std::move(model), train_batch, config,
      [&val_batch](const Seq2PointModel& m, std::size_t) {
        return evaluate_loss(m, val_batch);
      });
}

}  // namespace nilm
