#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "resnetcrowd/gmm.hpp"
#include "resnetcrowd/image.hpp"
#include "resnetcrowd/model.hpp"

namespace resnetcrowd {

/// Resizes a frame to the model input and standardises it (CHW).
std::vector<float> prepare_frame(const Image& frame, const ResnetCrowdConfig& config);

/// Pooled backbone features (eval mode), one vector per frame.
FeatureMatrix extract_features(ResnetCrowdModel& model, std::span<const std::vector<float>> frames,
                               std::size_t batch_size = 16);

/// Negative log-likelihood under the mixture; larger is more anomalous.
double anomaly_score(const GaussianMixture& gmm, std::span<const double> feature);

/// ROC AUC with anomalous frames as the positive class.
double evaluate_anomaly(std::span<const double> scores, std::span<const bool> anomalous);

struct AnomalyResult {
  GmmFit fit;
  std::vector<double> scores;
  std::optional<double> auc;  // when both classes are present
};

/// Fits on the frames marked normal (all frames when `anomalous` is empty)
/// and scores every frame.
AnomalyResult run_anomaly(const FeatureMatrix& features, std::span<const bool> anomalous, const GmmOptions& options);

/// frame_index,score[,label]
void write_scores_csv(const std::filesystem::path& path, std::span<const double> scores,
                      std::span<const bool> anomalous);

}  // namespace resnetcrowd
