#include "resnetcrowd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace resnetcrowd {

double roc_auc(std::span<const double> scores, std::span<const bool> labels) {
  if (scores.size() != labels.size()) throw MetricError("roc_auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  for (double s : scores) {
    if (!std::isfinite(s)) throw MetricError("roc_auc: non-finite score");
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw MetricError("roc_auc: needs at least one positive and one negative");

  // Twice the area in units of (1/P) x (1/N) is an integer, so accumulate
  // it exactly and divide once.
  unsigned long long twice_area = 0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t tp_step = 0, fp_step = 0;
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] ? tp_step : fp_step)++;
    twice_area += static_cast<unsigned long long>(fp_step) * (2 * tp + tp_step);
    tp += tp_step;
    fp += fp_step;
  }
  return static_cast<double>(twice_area) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

double mean_auc(std::span<const double> aucs) {
  if (aucs.empty()) throw MetricError("mean_auc: no concepts");
  return std::accumulate(aucs.begin(), aucs.end(), 0.0) / static_cast<double>(aucs.size());
}

CountBand count_band(double true_count) {
  if (true_count <= 50.0) return CountBand::kLow;
  if (true_count <= 150.0) return CountBand::kMedium;
  return CountBand::kHigh;
}

std::optional<double> BandStats::mae() const {
  if (n == 0) return std::nullopt;
  return abs_error_sum / static_cast<double>(n);
}

CountingMetrics counting_metrics(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size()) throw MetricError("counting_metrics: length mismatch");
  if (truth.empty()) throw MetricError("counting_metrics: no samples");
  CountingMetrics m;
  m.n = truth.size();
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double err = std::abs(predicted[i] - truth[i]);
    abs_sum += err;
    sq_sum += err * err;
    BandStats& band = count_band(truth[i]) == CountBand::kLow      ? m.low
                      : count_band(truth[i]) == CountBand::kMedium ? m.medium
                                                                   : m.high;
    ++band.n;
    band.abs_error_sum += err;
  }
  m.mae = abs_sum / static_cast<double>(m.n);
  m.rmse = std::sqrt(sq_sum / static_cast<double>(m.n));
  return m;
}

double density_accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw MetricError("density_accuracy: length mismatch");
  if (truth.empty()) throw MetricError("density_accuracy: no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

int argmax_level(std::span<const float> probabilities) {
  if (probabilities.empty()) throw MetricError("argmax_level: empty distribution");
  return static_cast<int>(std::max_element(probabilities.begin(), probabilities.end()) - probabilities.begin()) + 1;
}

}  // namespace resnetcrowd
