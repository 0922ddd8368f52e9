// Command-line front end for the NILM toolkit: training, prediction,
// evaluation, transfer learning, feature extraction, and synthetic data
// generation. See README.md for the file formats.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nilm/nilm.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kDefaultArch =
    "conv:30x10,conv:30x8,conv:40x6,conv:50x5,conv:50x5,dense:1024";

// "conv:FxK,...,dense:U,..." describes the hidden layers; ReLU follows each
// entry and the final dense:1 output layer is appended automatically.
std::vector<nilm::LayerSpec> parse_arch(const std::string& arch) {
  std::vector<nilm::LayerSpec> specs;
  std::size_t pos = 0;
  while (pos < arch.size()) {
    std::size_t comma = arch.find(',', pos);
    if (comma == std::string::npos) comma = arch.size();
    const std::string entry = arch.substr(pos, comma - pos);
    pos = comma + 1;
    unsigned long a = 0, b = 0;
    if (std::sscanf(entry.c_str(), "conv:%lux%lu", &a, &b) == 2) {
      specs.push_back(nilm::LayerSpec::conv1d(a, b));
      specs.push_back(nilm::LayerSpec::relu());
    } else if (std::sscanf(entry.c_str(), "dense:%lu", &a) == 1) {
      specs.push_back(nilm::LayerSpec::dense(a));
      specs.push_back(nilm::LayerSpec::relu());
    } else {
      throw nilm::SpecError("cannot parse architecture entry \"" + entry +
                            "\" (want conv:FxK or dense:U)");
    }
  }
  if (specs.empty()) throw nilm::SpecError("empty architecture string");
  specs.push_back(nilm::LayerSpec::dense(1));
  return specs;
}

struct CommonTrainFlags {
  std::uint64_t seed = 0;
  std::size_t window = 599;
  std::size_t batch_size = 1000;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::size_t min_epochs = 5;
  double learning_rate = 1e-3;

  nilm::TrainConfig to_config() const {
    nilm::TrainConfig c;
    c.seed = seed;
    c.batch_size = batch_size;
    c.max_epochs = max_epochs;
    c.patience = patience;
    c.min_epochs_before_stop = min_epochs;
    c.learning_rate = static_cast<float>(learning_rate);
    return c;
  }
};

void add_train_flags(CLI::App* cmd, CommonTrainFlags& f) {
  cmd->add_option("--seed", f.seed, "RNG seed");
  cmd->add_option("--batch-size", f.batch_size, "Mini-batch size");
  cmd->add_option("--max-epochs", f.max_epochs, "Maximum training epochs");
  cmd->add_option("--patience", f.patience, "Early-stopping patience");
  cmd->add_option("--min-epochs", f.min_epochs,
                  "Minimum epochs before early stopping");
  cmd->add_option("--learning-rate", f.learning_rate, "Adam learning rate");
}

nilm::DatasetConfig load_config_with_overrides(const std::string& path,
                                               const CLI::App* cmd,
                                               std::int64_t period,
                                               std::int64_t max_gap) {
  auto config = nilm::load_dataset_config(path);
  if (cmd->count("--period")) config.period_s = period;
  if (cmd->count("--max-gap")) config.max_gap_s = max_gap;
  if (config.max_gap_s <= config.period_s)
    throw nilm::LayoutError("max gap must exceed the sampling period");
  return config;
}

const nilm::DatasetSplit& split_for(const nilm::DatasetConfig& config,
                                    const std::string& appliance) {
  const auto it = config.splits.find(appliance);
  if (it == config.splits.end())
    throw nilm::LayoutError("dataset config has no split for appliance \"" +
                            appliance + "\"");
  return it->second;
}

nilm::Provenance train_provenance(const char* tool,
                                  const CommonTrainFlags& flags,
                                  const nilm::TrainHistory& history) {
  nilm::Provenance p;
  p["tool"] = tool;
  p["seed"] = std::to_string(flags.seed);
  p["best_epoch"] = std::to_string(history.best_epoch);
  p["stopped_epoch"] = std::to_string(history.stopped_epoch);
  return p;
}

// Parse a plain two-column (timestamp, watts) CSV, resample to the model's
// grid, and split on gaps.
std::vector<nilm::PowerSeries> load_mains_segments(
    const std::string& path, const nilm::Seq2PointModel& model,
    std::int64_t max_gap, const std::string& ts_format) {
  nilm::ChannelLayout layout;
  layout.timestamp.index = 0;
  layout.channels = {{"mains", nilm::ColumnRef{"", 1}}};
  layout.ts_format = ts_format == "datetime"
                         ? nilm::TimestampFormat::datetime
                         : nilm::TimestampFormat::unix_seconds;
  std::ifstream in(path);
  if (!in) throw nilm::DataError("cannot open mains file " + path);
  const auto parsed = nilm::parse_channel_file(in, layout);
  const auto resampled = nilm::resample(parsed.series[0], model.period_s, max_gap);
  return nilm::split_on_gaps(resampled, max_gap);
}

nilm::SyntheticConfig load_synth_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw nilm::LayoutError("cannot open synth config " + path);
  nlohmann::json j;
  try {
    in >> j;
    nilm::SyntheticConfig config;
    config.period_s = j.value("period_s", std::int64_t{8});
    config.length = j.at("length").get<std::size_t>();
    config.noise_sigma_watts = j.value("noise_sigma_watts", 0.0);
    config.seed = j.value("seed", std::uint64_t{0});
    config.start_timestamp = j.value("start_timestamp", std::int64_t{0});
    for (const auto& aj : j.at("appliances")) {
      nilm::ApplianceSpec spec;
      spec.name = aj.at("name").get<std::string>();
      spec.duty_cycle = aj.at("duty_cycle").get<double>();
      for (const auto& pj : aj.at("phases"))
        spec.phases.push_back({pj.at("power_watts").get<double>(),
                               pj.at("mean_duration_s").get<double>()});
      config.appliances.push_back(std::move(spec));
    }
    return config;
  } catch (const nlohmann::json::exception& e) {
    throw nilm::LayoutError("synth config " + path + ": " + e.what());
  }
}

// Evaluate one model on its test split; returns per-segment results.
nilm::ApplianceEval evaluate_model(const nilm::Seq2PointModel& model,
                                   const nilm::DatasetConfig& config,
                                   const std::string& appliance,
                                   const std::vector<std::string>& houses) {
  if (model.period_s != config.period_s)
    throw nilm::PlanError("checkpoint period " +
                          std::to_string(model.period_s) +
                          "s does not match dataset period " +
                          std::to_string(config.period_s) + "s");
  nilm::ApplianceEval eval;
  eval.name = appliance;
  const auto pairs = nilm::load_split_pairs(config, appliance, houses);
  for (const auto& pair : pairs) {
    const auto pred = nilm::predict(model, pair.mains);
    nilm::EvalSegment seg;
    seg.timestamps = pair.mains.timestamps;
    seg.pred = pred.values;
    seg.truth = pair.appliance.values;
    eval.segments.push_back(std::move(seg));
  }
  return eval;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Appliance-level energy disaggregation toolkit"};
  app.require_subcommand(1);

  // Shared option storage.
  std::string data_path, norm_path, out_path, checkpoint_path, input_path;
  std::string appliance, arch = kDefaultArch, history_path;
  std::string report_path, share_path, predictions_path;
  std::string ts_format = "unix";
  std::int64_t period = 8, max_gap = 3600;
  CommonTrainFlags flags;
  double subset_fraction = 0.1;
  bool finetune = false;
  std::size_t feat_start = 0, feat_count = 16;
  std::vector<std::string> checkpoints;

  auto* train_cmd =
      app.add_subcommand("train", "Train a model for one appliance");
  train_cmd->add_option("--data", data_path, "Dataset config JSON")
      ->required();
  train_cmd->add_option("--appliance", appliance, "Target appliance")
      ->required();
  train_cmd->add_option("--out", out_path, "Output checkpoint directory")
      ->required();
  train_cmd->add_option("--window", flags.window, "Input window length");
  train_cmd->add_option("--arch", arch, "Hidden layers (conv:FxK,dense:U)");
  train_cmd->add_option("--period", period, "Sampling period in seconds");
  train_cmd->add_option("--max-gap", max_gap, "Gap-split threshold (s)");
  train_cmd->add_option("--norm-config", norm_path,
                        "Normalization constants JSON");
  train_cmd->add_option("--history", history_path, "Training history CSV");
  add_train_flags(train_cmd, flags);

  auto* predict_cmd =
      app.add_subcommand("predict", "Predict appliance power from mains");
  predict_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint dir")
      ->required();
  predict_cmd->add_option("--input", input_path, "Mains CSV (timestamp,watts)")
      ->required();
  predict_cmd->add_option("--out", out_path, "Predictions CSV")->required();
  predict_cmd->add_option("--max-gap", max_gap, "Gap-split threshold (s)");
  predict_cmd->add_option("--timestamp-format", ts_format,
                          "unix or datetime");

  auto* eval_cmd = app.add_subcommand(
      "evaluate", "Evaluate checkpoints on their test splits");
  eval_cmd->add_option("--data", data_path, "Dataset config JSON")->required();
  eval_cmd
      ->add_option("--checkpoint", checkpoints,
                   "Checkpoint directory (repeatable)")
      ->required();
  eval_cmd->add_option("--out", out_path, "Report CSV")->required();
  eval_cmd->add_option("--energy-share", share_path, "Energy share CSV");
  eval_cmd->add_option("--period", period, "Sampling period in seconds");
  eval_cmd->add_option("--max-gap", max_gap, "Gap-split threshold (s)");

  auto* transfer_cmd =
      app.add_subcommand("transfer", "Transfer-learning workflows");
  transfer_cmd->require_subcommand(1);

  auto* atl_cmd = transfer_cmd->add_subcommand(
      "atl", "Reuse a trained conv stack for a new appliance");
  atl_cmd->add_option("--source", checkpoint_path, "Source checkpoint")
      ->required();
  atl_cmd->add_option("--data", data_path, "Dataset config JSON")->required();
  atl_cmd->add_option("--appliance", appliance, "Target appliance")
      ->required();
  atl_cmd->add_option("--out", out_path, "Output checkpoint directory")
      ->required();
  atl_cmd->add_option("--period", period, "Sampling period in seconds");
  atl_cmd->add_option("--max-gap", max_gap, "Gap-split threshold (s)");
  atl_cmd->add_option("--norm-config", norm_path,
                      "Normalization constants JSON");
  atl_cmd->add_option("--history", history_path, "Training history CSV");
  add_train_flags(atl_cmd, flags);

  auto* ctl_cmd = transfer_cmd->add_subcommand(
      "ctl", "Apply or fine-tune a model in a new domain");
  ctl_cmd->add_option("--source", checkpoint_path, "Source checkpoint")
      ->required();
  ctl_cmd->add_option("--data", data_path, "Dataset config JSON")->required();
  ctl_cmd->add_option("--appliance", appliance,
                      "Target appliance (defaults to the source's)");
  ctl_cmd->add_flag("--finetune", finetune,
                    "Fine-tune the dense head on a target subset");
  ctl_cmd->add_option("--subset-fraction", subset_fraction,
                      "Leading fraction of the target training split");
  ctl_cmd->add_option("--out", out_path,
                      "Output checkpoint directory (with --finetune)");
  ctl_cmd->add_option("--report", report_path, "Metrics report CSV");
  ctl_cmd->add_option("--predictions", predictions_path, "Predictions CSV");
  ctl_cmd->add_option("--period", period, "Sampling period in seconds");
  ctl_cmd->add_option("--max-gap", max_gap, "Gap-split threshold (s)");
  ctl_cmd->add_option("--history", history_path, "Training history CSV");
  add_train_flags(ctl_cmd, flags);

  auto* features_cmd = app.add_subcommand(
      "features", "Dump last-conv-layer activations for a window range");
  features_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint dir")
      ->required();
  features_cmd
      ->add_option("--input", input_path, "Mains CSV (timestamp,watts)")
      ->required();
  features_cmd->add_option("--out", out_path, "Activations CSV")->required();
  features_cmd->add_option("--start", feat_start, "First window index");
  features_cmd->add_option("--count", feat_count, "Number of windows");
  features_cmd->add_option("--max-gap", max_gap, "Gap-split threshold (s)");
  features_cmd->add_option("--timestamp-format", ts_format,
                           "unix or datetime");

  auto* synth_cmd = app.add_subcommand(
      "synth", "Generate a synthetic household (additive model)");
  synth_cmd->add_option("--config", data_path, "Synth config JSON")
      ->required();
  synth_cmd->add_option("--out", out_path, "Output CSV")->required();
  auto* synth_seed =
      synth_cmd->add_option("--seed", flags.seed, "Override config seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const auto config =
          load_config_with_overrides(data_path, train_cmd, period, max_gap);
      const auto norms = nilm::load_norm_table(norm_path);
      const auto mains_norm = nilm::norm_for(norms, "aggregate");
      const auto appl_norm = nilm::norm_for(norms, appliance);
      const auto& split = split_for(config, appliance);

      const auto train_batch = nilm::batch_from_pairs(
          nilm::load_split_pairs(config, appliance, split.train), flags.window,
          mains_norm, appl_norm);
      const auto val_batch = nilm::batch_from_pairs(
          nilm::load_split_pairs(config, appliance, split.validation),
          flags.window, mains_norm, appl_norm);

      auto model =
          nilm::build_model(flags.window, mains_norm, appl_norm, appliance,
                            parse_arch(arch), flags.seed, config.period_s);
      auto result = nilm::train(std::move(model), train_batch, val_batch,
                                flags.to_config());
      nilm::save_checkpoint(result.model, out_path,
                            train_provenance("train", flags, result.history));
      if (!history_path.empty())
        nilm::write_history_csv(history_path, result.history);
      std::cout << "trained " << appliance << ": stopped at epoch "
                << result.history.stopped_epoch << ", best epoch "
                << result.history.best_epoch << "\n";
    } else if (*predict_cmd) {
      const auto model = nilm::load_checkpoint(checkpoint_path);
      const auto segments =
          load_mains_segments(input_path, model, max_gap, ts_format);
      nilm::PowerSeries out;
      out.period_s = model.period_s;
      out.channel = model.appliance;
      for (const auto& seg : segments) {
        const auto pred = nilm::predict(model, seg);
        out.timestamps.insert(out.timestamps.end(), pred.timestamps.begin(),
                              pred.timestamps.end());
        out.values.insert(out.values.end(), pred.values.begin(),
                          pred.values.end());
      }
      nilm::write_predictions_csv(out_path, out);
    } else if (*eval_cmd) {
      const auto config =
          load_config_with_overrides(data_path, eval_cmd, period, max_gap);
      std::vector<nilm::ApplianceEval> evals;
      for (const auto& ck : checkpoints) {
        const auto model = nilm::load_checkpoint(ck);
        const auto& split = split_for(config, model.appliance);
        evals.push_back(
            evaluate_model(model, config, model.appliance, split.test));
      }
      const auto report = nilm::compute_report(evals, config.period_s);
      nilm::write_report_csv(out_path, report);
      if (!share_path.empty())
        nilm::write_energy_share_csv(share_path,
                                     nilm::energy_share(evals, config.period_s));
    } else if (*atl_cmd) {
      const auto source = nilm::load_checkpoint(checkpoint_path);
      const auto config =
          load_config_with_overrides(data_path, atl_cmd, period, max_gap);
      const auto norms = nilm::load_norm_table(norm_path);
      const auto target_norm = nilm::norm_for(norms, appliance);
      const auto& split = split_for(config, appliance);
      if (source.period_s != config.period_s)
        throw nilm::PlanError("source checkpoint period does not match data");

      const auto train_batch = nilm::batch_from_pairs(
          nilm::load_split_pairs(config, appliance, split.train),
          source.window_length, source.mains_norm, target_norm);
      const auto val_batch = nilm::batch_from_pairs(
          nilm::load_split_pairs(config, appliance, split.validation),
          source.window_length, source.mains_norm, target_norm);

      auto result = nilm::atl_transfer(source, appliance, target_norm,
                                       train_batch, val_batch,
                                       flags.to_config());
      nilm::save_checkpoint(result.model, out_path,
                            train_provenance("transfer-atl", flags,
                                             result.history));
      if (!history_path.empty())
        nilm::write_history_csv(history_path, result.history);
      std::cout << "atl " << appliance << ": stopped at epoch "
                << result.history.stopped_epoch << ", best epoch "
                << result.history.best_epoch << "\n";
    } else if (*ctl_cmd) {
      const auto source = nilm::load_checkpoint(checkpoint_path);
      const auto config =
          load_config_with_overrides(data_path, ctl_cmd, period, max_gap);
      if (appliance.empty()) appliance = source.appliance;
      const auto& split = split_for(config, appliance);
      if (source.period_s != config.period_s)
        throw nilm::PlanError("source checkpoint period does not match data");

      nilm::Seq2PointModel model = source;
      if (finetune) {
        const auto pairs =
            nilm::load_split_pairs(config, appliance, split.train);
        auto result =
            nilm::ctl_finetune(source, pairs, subset_fraction, flags.to_config());
        model = std::move(result.model);
        if (!out_path.empty())
          nilm::save_checkpoint(model, out_path,
                                train_provenance("transfer-ctl", flags,
                                                 result.history));
        if (!history_path.empty())
          nilm::write_history_csv(history_path, result.history);
        std::cout << "ctl fine-tune " << appliance << ": stopped at epoch "
                  << result.history.stopped_epoch << ", best epoch "
                  << result.history.best_epoch << "\n";
      }
      if (!report_path.empty() || !predictions_path.empty()) {
        const auto eval =
            evaluate_model(model, config, appliance, split.test);
        if (!report_path.empty()) {
          const auto report = nilm::compute_report({eval}, config.period_s);
          nilm::write_report_csv(report_path, report);
        }
        if (!predictions_path.empty()) {
          nilm::PowerSeries out;
          out.period_s = model.period_s;
          out.channel = model.appliance;
          for (const auto& seg : eval.segments) {
            out.timestamps.insert(out.timestamps.end(), seg.timestamps.begin(),
                                  seg.timestamps.end());
            out.values.insert(out.values.end(), seg.pred.begin(),
                              seg.pred.end());
          }
          nilm::write_predictions_csv(predictions_path, out);
        }
      }
    } else if (*features_cmd) {
      const auto model = nilm::load_checkpoint(checkpoint_path);
      const auto segments =
          load_mains_segments(input_path, model, max_gap, ts_format);
      std::vector<float> normalized;
      for (const auto& seg : segments) {
        const auto n = nilm::normalize_f(seg, model.mains_norm);
        normalized.insert(normalized.end(), n.begin(), n.end());
      }
      if (normalized.empty()) throw nilm::DataError("no mains samples");
      const auto windows =
          nilm::pad_and_window(normalized, model.window_length);
      if (feat_start >= windows.extent(0))
        throw nilm::DataError("window range starts past the data");
      const std::size_t end =
          std::min(feat_start + feat_count, windows.extent(0));
      nilm::Tensor<float> slice({end - feat_start, model.window_length});
      std::copy(windows.data.begin() + feat_start * model.window_length,
                windows.data.begin() + end * model.window_length,
                slice.data.begin());
      const auto features = nilm::extract_features(model, slice);
      nilm::write_features_csv(out_path, features, feat_start);
    } else if (*synth_cmd) {
      auto config = load_synth_config(data_path);
      if (synth_seed->count()) config.seed = flags.seed;
      const auto household = nilm::synthesize_household(config);
      nilm::write_household_csv(out_path, household);
    }
  } catch (const nilm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return nilm::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
