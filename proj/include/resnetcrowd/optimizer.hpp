#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "resnetcrowd/model.hpp"

namespace resnetcrowd {

struct AdaGradConfig {
  double learning_rate = 0.01;
  double epsilon = 1e-8;
  /// L2 coefficient added to the gradient of decaying parameters.
  double weight_decay = 1e-4;

  nlohmann::json to_json() const;
  static AdaGradConfig from_json(const nlohmann::json& j);
};

/// AdaGrad with additive L2 regularisation:
///   g' = g + lambda * w        (weights only)
///   acc += g'^2
///   w  -= lr * g' / (sqrt(acc) + eps)
/// Accumulators are created lazily per parameter name.
class AdaGrad {
 public:
  explicit AdaGrad(AdaGradConfig config = {});

  const AdaGradConfig& config() const { return config_; }
  std::size_t steps_taken() const { return steps_; }

  /// Parameters without a gradient buffer are treated as having a zero
  /// gradient. Throws NumericError, before touching any parameter, if a
  /// gradient is non-finite.
  void step(std::span<const Parameter> params);

  const std::vector<float>* accumulator(const std::string& name) const;

  void save(const std::filesystem::path& dir) const;
  static AdaGrad load(const std::filesystem::path& dir);

 private:
  AdaGradConfig config_;
  std::map<std::string, std::vector<float>> accumulators_;
  std::vector<std::string> order_;  // first-seen order, for serialisation
  std::size_t steps_ = 0;
};

void zero_grads(std::span<const Parameter> params);

}  // namespace resnetcrowd
