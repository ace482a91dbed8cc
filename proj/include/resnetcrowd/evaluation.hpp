#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "resnetcrowd/dataset.hpp"
#include "resnetcrowd/folds.hpp"
#include "resnetcrowd/losses.hpp"
#include "resnetcrowd/metrics.hpp"
#include "resnetcrowd/model.hpp"

namespace resnetcrowd {

/// Every network output for one sample, next to its ground truth.
struct SamplePrediction {
  std::string id;
  double true_count = 0.0;
  int true_level = 1;
  BehaviourLabel truth;
  double count_reg = 0.0;
  /// Integral of the predicted heatmap.
  double count_heatmap = 0.0;
  double fight = 0.0;
  double mob = 0.0;
  std::vector<float> density;  // probabilities for levels 1..5
  int level = 1;
};

/// Eval-mode forward over `samples` in batches.
std::vector<SamplePrediction> predict(ResnetCrowdModel& model, std::span<const PreparedSample> samples,
                                      std::size_t batch_size = 16);

struct CountingSummary {
  double mae = 0.0;
  double rmse = 0.0;
  std::optional<double> low, medium, high;  // banded MAE
};

/// Metrics for one evaluation set. Tasks the run did not train are absent.
/// A behaviour AUC is also absent when the set holds only one class for
/// that concept.
struct FoldMetrics {
  std::optional<double> fight_auc;
  std::optional<double> mob_auc;
  std::optional<double> mauc;
  std::optional<double> density_accuracy;
  std::optional<CountingSummary> count_reg;
  std::optional<CountingSummary> count_heatmap;
};

FoldMetrics compute_metrics(std::span<const SamplePrediction> predictions, const TaskMask& mask);

struct MetricsReport {
  std::string run;
  TaskMask mask;
  std::vector<FoldMetrics> folds;
  /// Unweighted mean over the folds where each metric is defined.
  FoldMetrics mean;

  nlohmann::json to_json() const;
};

/// Evaluates fold model k on held-out fold k. `predictions_out`, when set,
/// receives the per-sample outputs of every fold.
MetricsReport cross_validate(const std::string& run, const TaskMask& mask, std::span<ResnetCrowdModel> fold_models,
                             std::span<const PreparedSample> samples, const Folds& folds,
                             std::vector<std::vector<SamplePrediction>>* predictions_out = nullptr);

/// Run label used in the summary tables.
std::string display_name(const std::string& run);

/// Overall comparison: mAUC, density accuracy, regression MAE, heatmap MAE.
std::string format_overall_table(std::span<const MetricsReport> reports);
/// Counting MAE split into low / medium / high congestion.
std::string format_banded_table(std::span<const MetricsReport> reports);

nlohmann::json reports_to_json(std::span<const MetricsReport> reports);

void write_predictions_csv(const std::filesystem::path& path,
                           std::span<const std::vector<SamplePrediction>> per_fold);

}  // namespace resnetcrowd
