#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cgtgait/complexity.hpp"
#include "cgtgait/network.hpp"
#include "cgtgait/synthetic.hpp"
#include "json.hpp"

namespace cgt {

/// Either a JSONL file or the synthetic generator.
struct DataSource {
  std::string path;  // empty: synthetic
  std::array<std::size_t, kClasses> class_counts = {120, 120, 120, 120};
  std::uint64_t seed = 0;
  std::string generator_config;  // optional JSON file with preset overrides

  bool synthetic() const { return path.empty(); }
  std::vector<SkeletonSequence> load() const;
  nlohmann::json to_json() const;
  static DataSource from_json(const nlohmann::json& j);
};

struct TrainConfig {
  std::size_t epochs = 80;
  std::size_t batch_size = 32;
  double momentum = 0.9;
  double initial_lr = 0.01;
  double lr_decay = 0.1;
  std::size_t decay_every = 30;  // 0 disables the step schedule
  /// Global L2 gradient-norm clip applied before the momentum update (0: off).
  double grad_clip = 0.0;
  std::uint64_t seed = 0;
  double split_ratio = 0.9;
  bool augment = true;
  /// Fit the model's input standardisation on the training split.
  bool normalize_inputs = true;
  /// Train and evaluate on the whole dataset without augmentation.
  bool overfit = false;
  ModelConfig model;
  DataSource data;

  double lr_at(std::size_t epoch) const;
  /// Throws std::invalid_argument when batch_size < 2 or the split ratio is
  /// outside (0, 1).
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig from_file(const std::filesystem::path& path);
};

struct Split {
  std::vector<std::size_t> train, test;
};

/// Per class: shuffle that class's indices with `seed`, then put
/// round(ratio * n_c) into train (at least one sample on each side when
/// n_c >= 2). Both lists are sorted.
Split stratified_split(std::span<const SkeletonSequence> data, double ratio, std::uint64_t seed);

struct EvalReport {
  std::size_t samples = 0;
  double accuracy = 0.0;
  std::array<double, kClasses> class_accuracy{};
  std::array<double, kClasses> class_f1{};
  std::array<std::size_t, kClasses> class_counts{};
  std::array<std::array<std::size_t, kClasses>, kClasses> confusion{};  // [truth][prediction]
  double macro_f1 = 0.0;
  std::vector<std::string> warnings;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;

  nlohmann::json to_json() const;
  std::string to_text() const;
  std::string confusion_csv() const;
};

/// Metrics from labels and predictions alone. A class without test samples
/// has accuracy 0 and F1 0 and produces a warning.
EvalReport score_predictions(std::span<const int> labels, std::span<const int> predictions);

/// Runs the model on already-resampled sequences, no augmentation.
EvalReport evaluate(const CGTGait& model, std::span<const SkeletonSequence> sequences,
                    std::size_t batch_size = 32);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0, ce = 0.0, mse = 0.0, fr = 0.0;  // means over training batches
  double train_accuracy = 0.0;
  double grad_norm = 0.0;  // mean pre-clip gradient norm
  double test_accuracy = 0.0;
  double seconds = 0.0;
  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_accuracy = 0.0;
  EvalReport best_report;  // on the test split, from the best checkpoint
  std::size_t steps = 0;
  std::unique_ptr<CGTGait> best_model;
};

struct TrainOptions {
  /// When set, writes best.ckpt, log.jsonl and report.{json,txt,csv} here.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const EpochLog&)> on_epoch;
  /// Checked after each epoch; returning true ends training there.
  std::function<bool(const EpochLog&)> stop_when;
  /// Stop after this many optimizer steps (0: no limit).
  std::size_t max_steps = 0;
};

/// Throws std::invalid_argument for an empty dataset or fewer than two
/// classes in the training split.
TrainResult train(const TrainConfig& config, std::span<const SkeletonSequence> data,
                  const TrainOptions& options = {});
TrainResult train(const TrainConfig& config, const TrainOptions& options = {});

enum class AblationAxis { kCgtOrder, kFusionParts, kBcsfPosition, kBlockCount, kHeads };
AblationAxis parse_ablation_axis(std::string_view name);
std::string_view to_string(AblationAxis axis);

struct AblationVariant {
  std::string name;
  ModelConfig model;
};
std::vector<AblationVariant> ablation_variants(const ModelConfig& base, AblationAxis axis);

struct AblationRow {
  std::string name;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  double seconds = 0.0;
};

struct AblationReport {
  AblationAxis axis = AblationAxis::kCgtOrder;
  std::size_t epochs = 0;
  std::vector<AblationRow> rows;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Trains every variant of `axis` with the config's schedule cut to
/// `epochs` epochs.
AblationReport ablate(const TrainConfig& config, AblationAxis axis, std::size_t epochs = 10);

}  // namespace cgt
