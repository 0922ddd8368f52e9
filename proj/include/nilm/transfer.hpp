#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "nilm/checkpoint.hpp"
#include "nilm/training.hpp"

namespace nilm {

// Which layers a freeze operation targets.
struct FreezeSelector {
  enum class Kind { none, conv_stack, all, named };
  Kind kind = Kind::none;
  std::vector<std::string> names;

  static FreezeSelector none() { return {}; }
  static FreezeSelector conv_stack() { return {Kind::conv_stack, {}}; }
  static FreezeSelector all() { return {Kind::all, {}}; }
  static FreezeSelector named(std::vector<std::string> names) {
    return {Kind::named, std::move(names)};
  }
};

// Mark the selected layers non-trainable; everything else is untouched.
// Frozen parameters are bit-stable under any amount of subsequent training.
inline Seq2PointModel freeze(Seq2PointModel model,
                             const FreezeSelector& selector) {
  switch (selector.kind) {
    case FreezeSelector::Kind::none:
      return model;
    case FreezeSelector::Kind::conv_stack:
      for (auto& s : model.specs)
        if (s.kind == LayerKind::conv1d) s.trainable = false;
      return model;
    case FreezeSelector::Kind::all:
      for (auto& s : model.specs) s.trainable = false;
      return model;
    case FreezeSelector::Kind::named: {
      const auto names = layer_names(model.specs);
      for (const auto& want : selector.names) {
        const auto it = std::find(names.begin(), names.end(), want);
        if (it == names.end())
          throw SelectorError("no layer named \"" + want + "\"");
        model.specs[static_cast<std::size_t>(it - names.begin())].trainable =
            false;
      }
      return model;
    }
  }
  throw SelectorError("unknown selector kind");
}

inline Seq2PointModel unfreeze_all(Seq2PointModel model) {
  for (auto& s : model.specs) s.trainable = true;
  return model;
}

// Appliance transfer learning: keep the source model's conv stack (frozen,
// bit-identical), re-initialize the dense head from the seed, and train only
// the head on the target appliance's data.
inline TrainResult atl_transfer(const Seq2PointModel& source,
                                const std::string& target_appliance,
                                const NormalizationParams& target_norm,
                                const WindowBatch& train_batch,
                                const WindowBatch& val_batch,
                                const TrainConfig& config) {
  if (train_batch.window_length() != source.window_length)
    throw PlanError("atl: target window length " +
                    std::to_string(train_batch.window_length()) +
                    " does not match source checkpoint (" +
                    std::to_string(source.window_length) + ")");

  Seq2PointModel model = source;
  model.appliance = target_appliance;
  model.appliance_norm = target_norm;
  model = freeze(std::move(model), FreezeSelector::conv_stack());

  const auto shapes =
      propagate_shapes(model.specs, model.window_length, 1);
  for (std::size_t i = 0; i < model.specs.size(); ++i) {
    if (model.specs[i].kind != LayerKind::dense) continue;
    model.specs[i].trainable = true;
    model.params[i] =
        init_layer<float>(model.specs[i], shapes[i], config.seed, i);
  }
  return train(std::move(model), train_batch, val_batch, config);
}

// Cross-domain transfer, direct application: run the source model on target
// mains unchanged.
inline PowerSeries ctl_apply(const Seq2PointModel& source,
                             const PowerSeries& target_mains) {
  if (target_mains.period_s != source.period_s)
    throw PlanError("ctl: target period " +
                    std::to_string(target_mains.period_s) +
                    "s does not match checkpoint period " +
                    std::to_string(source.period_s) + "s");
  return predict(source, target_mains);
}

// The leading `fraction` of the target training split, chronological across
// segments, measured in samples.
inline std::vector<AlignedPair> cut_fraction(
    const std::vector<AlignedPair>& pairs, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw PlanError("fine-tune subset fraction must be in (0, 1]");
  std::size_t total = 0;
  for (const auto& p : pairs) total += p.mains.size();
  std::size_t keep = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(total)));
  std::vector<AlignedPair> out;
  for (const auto& p : pairs) {
    if (keep == 0) break;
    const std::size_t n = std::min(keep, p.mains.size());
    AlignedPair cut;
    cut.mains.channel = p.mains.channel;
    cut.mains.period_s = p.mains.period_s;
    cut.appliance.channel = p.appliance.channel;
    cut.appliance.period_s = p.appliance.period_s;
    cut.mains.timestamps.assign(p.mains.timestamps.begin(),
                                p.mains.timestamps.begin() + n);
    cut.mains.values.assign(p.mains.values.begin(), p.mains.values.begin() + n);
    cut.appliance.timestamps.assign(p.appliance.timestamps.begin(),
                                    p.appliance.timestamps.begin() + n);
    cut.appliance.values.assign(p.appliance.values.begin(),
                                p.appliance.values.begin() + n);
    out.push_back(std::move(cut));
    keep -= n;
  }
  return out;
}

// Cross-domain transfer with fine tuning: freeze the conv stack, keep the
// source dense head as the starting point (no re-initialization), and train
// on the leading `fraction` of the target training data. The last fifth of
// the subset's windows serve as the validation split for early stopping.
inline TrainResult ctl_finetune(const Seq2PointModel& source,
                                const std::vector<AlignedPair>& target_pairs,
                                double fraction, const TrainConfig& config) {
  if (target_pairs.empty())
    throw DataError("ctl fine-tune: no target data");
  const auto subset = cut_fraction(target_pairs, fraction);

  std::vector<WindowBatch> parts;
  for (const auto& pair : subset)
    parts.push_back(make_training_pairs(pair, source.window_length,
                                        source.mains_norm,
                                        source.appliance_norm));
  WindowBatch all = merge_batches(std::move(parts));

  const std::size_t n = all.size();
  const std::size_t n_val = n >= 5 ? n / 5 : 0;
  const std::size_t n_train = n - n_val;
  const std::size_t W = all.window_length();

  auto slice = [&](std::size_t begin, std::size_t end) {
    WindowBatch b;
    b.inputs = Tensor<float>({end - begin, W});
    std::copy(all.inputs.data.begin() + begin * W,
              all.inputs.data.begin() + end * W, b.inputs.data.begin());
    b.targets.assign(all.targets.begin() + begin, all.targets.begin() + end);
    return b;
  };
  const WindowBatch train_part = slice(0, n_train);

  Seq2PointModel model = freeze(source, FreezeSelector::conv_stack());
  if (n_val == 0) {
    // Subset too small to carve a validation split: stop on training loss.
    return train_with_validation(
        std::move(model), train_part, config,
        [&train_part](const Seq2PointModel& m, std::size_t) {
          return evaluate_loss(m, train_part);
        });
  }
  const WindowBatch val_part = slice(n_train, n);
  return train(std::move(model), train_part, val_part, config);
}

}  // namespace nilm
