#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>

namespace resnetcrowd {

/// Raised when a metric is undefined for its input (e.g. AUC of one class).
class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Area under the ROC curve by a threshold sweep over the distinct scores
/// with trapezoidal integration. Tied scores form one step, which makes the
/// result equal P(s+ > s-) + P(s+ == s-) / 2.
double roc_auc(std::span<const double> scores, std::span<const bool> labels);

double mean_auc(std::span<const double> aucs);

/// Bands by true count: low [0,50], medium (50,150], high (150,inf).
/// Boundary counts go to the lower band.
enum class CountBand { kLow, kMedium, kHigh };
CountBand count_band(double true_count);

struct BandStats {
  std::size_t n = 0;
  double abs_error_sum = 0.0;
  std::optional<double> mae() const;
};

struct CountingMetrics {
  std::size_t n = 0;
  double mae = 0.0;
  /// Root of the mean squared error, reported under the "MSE" heading used
  /// by the crowd-counting literature.
  double rmse = 0.0;
  BandStats low, medium, high;
};

CountingMetrics counting_metrics(std::span<const double> predicted, std::span<const double> truth);

/// Fraction of exact level matches.
double density_accuracy(std::span<const int> predicted, std::span<const int> truth);

/// 1-based index of the largest probability; the first wins ties.
int argmax_level(std::span<const float> probabilities);

}  // namespace resnetcrowd
