#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "resnetcrowd/dataset.hpp"
#include "resnetcrowd/folds.hpp"
#include "resnetcrowd/losses.hpp"
#include "resnetcrowd/model.hpp"
#include "resnetcrowd/optimizer.hpp"

namespace resnetcrowd {

struct TrainConfig {
  std::size_t epochs = 500;
  std::size_t batch_size = 40;
  TaskMask mask;
  AdaGradConfig optimizer;
  /// Append a mirrored copy of every training sample before the first epoch.
  bool augment = true;
  std::uint64_t seed = 0;
  /// Write a checkpoint every this many epochs (0 disables); a final one is
  /// always written when checkpoint_dir is set.
  std::size_t checkpoint_every = 50;
  std::filesystem::path checkpoint_dir;

  /// Short schedule used by the automated tests.
  static TrainConfig desk_scale();

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

nlohmann::json mask_to_json(const TaskMask& mask);
TaskMask mask_from_json(const nlohmann::json& j);

/// Sample-weighted mean of each loss term over one epoch. Masked tasks are
/// left empty.
struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::optional<double> behaviour;
  std::optional<double> density;
  std::optional<double> count_reg;
  std::optional<double> count_heatmap;
  double total = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Non-finite value during training. Parameters are left as they were after
/// the last successful step.
class TrainingError : public NumericError {
 public:
  TrainingError(std::size_t epoch, std::size_t batch, const std::string& cause,
                std::filesystem::path last_good_checkpoint);
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }
  const std::filesystem::path& last_good_checkpoint() const { return last_good_; }

 private:
  std::size_t epoch_, batch_;
  std::filesystem::path last_good_;
};

/// Parameters updated by a run with `mask`: the backbone plus the heads of
/// enabled tasks. Heads of disabled tasks are never touched, so weight decay
/// cannot move them either.
std::vector<Parameter> trainable_parameters(const ResnetCrowdModel& model, const TaskMask& mask);

/// Loss terms of one batch under `mask` (disabled parts left undefined).
LossParts compute_losses(const ForwardOutput& out, std::span<const PreparedSample> samples,
                         std::span<const std::size_t> indices, const TaskMask& mask);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch training with a seeded shuffle each epoch; the last partial
/// batch is kept.
TrainHistory train(ResnetCrowdModel& model, std::span<const PreparedSample> samples, const TrainConfig& config,
                   const EpochCallback& on_epoch = {});

/// The five canonical runs: four single-task baselines and the full model.
struct AblationRun {
  std::string name;
  TaskMask mask;
};
const std::vector<AblationRun>& canonical_runs();

struct RunArtifacts {
  AblationRun run;
  std::vector<ResnetCrowdModel> fold_models;
  std::vector<TrainHistory> histories;
};

/// Trains every run on every fold (held-out fold excluded from training).
/// Each model starts from `model_config` with the same seed, so runs differ
/// only by their task mask. When `out_dir` is non-empty, checkpoints and
/// histories are written to out_dir/<run>/fold_<k>/.
std::vector<RunArtifacts> run_ablation_suite(std::span<const PreparedSample> samples, const Folds& folds,
                                             const ResnetCrowdConfig& model_config, const TrainConfig& base,
                                             const std::filesystem::path& out_dir,
                                             std::span<const AblationRun> runs = {},
                                             const std::function<void(const std::string&)>& log = {});

}  // namespace resnetcrowd
