#include "resnetcrowd/anomaly.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>

#include "resnetcrowd/metrics.hpp"

namespace resnetcrowd {

std::vector<float> prepare_frame(const Image& frame, const ResnetCrowdConfig& config) {
  const Image resized = resize_bilinear(frame, config.input_width, config.input_height);
  std::vector<float> out(3 * config.input_width * config.input_height);
  standardize_into(resized.pixels, resized.width, resized.height, config, out);
  return out;
}

FeatureMatrix extract_features(ResnetCrowdModel& model, std::span<const std::vector<float>> frames,
                               std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("extract_features: batch_size must be positive");
  const auto& cfg = model.config();
  const std::size_t per = 3 * cfg.input_width * cfg.input_height;
  FeatureMatrix out;
  out.reserve(frames.size());
  for (std::size_t start = 0; start < frames.size(); start += batch_size) {
    const std::size_t end = std::min(frames.size(), start + batch_size);
    std::vector<float> data;
    data.reserve((end - start) * per);
    for (std::size_t i = start; i < end; ++i) {
      if (frames[i].size() != per) throw ShapeError("extract_features: frame prepared for another resolution");
      data.insert(data.end(), frames[i].begin(), frames[i].end());
    }
    const Tensor batch = Tensor::from_data({end - start, 3, cfg.input_height, cfg.input_width}, std::move(data));
    const ForwardOutput f = model.forward(batch, Mode::kEval);
    const std::size_t c = f.features.dim(1);
    for (std::size_t i = 0; i < end - start; ++i) {
      const auto row = f.features.data().subspan(i * c, c);
      out.emplace_back(row.begin(), row.end());
    }
  }
  return out;
}

double anomaly_score(const GaussianMixture& gmm, std::span<const double> feature) {
  return -gmm.log_density(feature);
}

double evaluate_anomaly(std::span<const double> scores, std::span<const bool> anomalous) {
  return roc_auc(scores, anomalous);
}

AnomalyResult run_anomaly(const FeatureMatrix& features, std::span<const bool> anomalous, const GmmOptions& options) {
  if (!anomalous.empty() && anomalous.size() != features.size()) {
    throw std::invalid_argument("run_anomaly: labels and features differ in length");
  }
  FeatureMatrix normal;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (anomalous.empty() || !anomalous[i]) normal.push_back(features[i]);
  }
  AnomalyResult result;
  result.fit = fit_gmm(normal, options);
  for (const auto& f : features) result.scores.push_back(anomaly_score(result.fit.model, f));
  if (!anomalous.empty()) {
    const auto positives = std::count(anomalous.begin(), anomalous.end(), true);
    if (positives > 0 && positives < static_cast<long>(anomalous.size())) {
      result.auc = evaluate_anomaly(result.scores, anomalous);
    }
  }
  return result;
}

void write_scores_csv(const std::filesystem::path& path, std::span<const double> scores,
                      std::span<const bool> anomalous) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << (anomalous.empty() ? "frame_index,score\n" : "frame_index,score,label\n");
  char buf[32];
  for (std::size_t i = 0; i < scores.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.12g", scores[i]);
    out << i << ',' << buf;
    if (!anomalous.empty()) out << ',' << int(anomalous[i]);
    out << '\n';
  }
}

}  // namespace resnetcrowd
