#include "resnetcrowd/losses.hpp"

#include "resnetcrowd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace resnetcrowd {

const char* to_string(Task task) {
  switch (task) {
    case Task::kBehaviour: return "behaviour";
    case Task::kDensity: return "density";
    case Task::kCountReg: return "count_reg";
    case Task::kCountHeatmap: return "count_heatmap";
  }
  return "unknown";
}

TaskMask TaskMask::only(Task task) {
  TaskMask m = none();
  switch (task) {
    case Task::kBehaviour: m.behaviour = true; break;
    case Task::kDensity: m.density = true; break;
    case Task::kCountReg: m.count_reg = true; break;
    case Task::kCountHeatmap: m.count_heatmap = true; break;
  }
  return m;
}

bool TaskMask::enabled(Task task) const {
  switch (task) {
    case Task::kBehaviour: return behaviour;
    case Task::kDensity: return density;
    case Task::kCountReg: return count_reg;
    case Task::kCountHeatmap: return count_heatmap;
  }
  return false;
}

std::size_t TaskMask::active_count() const {
  return static_cast<std::size_t>(behaviour) + density + count_reg + count_heatmap;
}

namespace {

double clamp_probability(double p) { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); }

bool is_clamped(double p) { return p < kProbabilityClamp || p > 1.0 - kProbabilityClamp; }

// Shared by the behaviour and heatmap terms.
Tensor mean_binary_cross_entropy(const Tensor& pred, std::vector<float> target, const char* op) {
  if (target.size() != pred.numel()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(target.size()) + " targets for prediction " +
                     shape_to_string(pred.shape()));
  }
  for (float t : target) {
    if (!(t >= 0.0f && t <= 1.0f)) throw std::invalid_argument(std::string(op) + ": targets must lie in [0,1]");
  }
  const auto p = pred.data();
  const double count = static_cast<double>(target.size());
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double q = clamp_probability(p[i]);
    total += target[i] * std::log(q) + (1.0 - target[i]) * std::log(1.0 - q);
  }
  auto backward = [pred, target = std::move(target), count](std::span<const float>, std::span<const float> dy,
                                                            std::span<const std::span<float>> grad_in) {
    const auto p = pred.data();
    const double g = dy[0] / count;
    for (std::size_t i = 0; i < target.size(); ++i) {
      if (is_clamped(p[i])) continue;
      const double q = p[i];
      grad_in[0][i] += static_cast<float>(-g * (target[i] / q - (1.0 - target[i]) / (1.0 - q)));
    }
  };
  return Tensor::make_result({1}, {static_cast<float>(-total / count)}, {pred}, std::move(backward), op);
}

}  // namespace

Tensor behaviour_loss(const Tensor& pred, std::span<const BehaviourLabel> targets) {
  if (pred.rank() != 2 || pred.dim(1) != 2 || pred.dim(0) != targets.size()) {
    throw ShapeError("behaviour_loss: prediction " + shape_to_string(pred.shape()) + " for " +
                     std::to_string(targets.size()) + " label pairs");
  }
  std::vector<float> flat;
  flat.reserve(targets.size() * 2);
  for (const auto& t : targets) {
    flat.push_back(t.fight ? 1.0f : 0.0f);
    flat.push_back(t.mob ? 1.0f : 0.0f);
  }
  return mean_binary_cross_entropy(pred, std::move(flat), "behaviour_loss");
}

Tensor density_loss(const Tensor& pred, std::span<const float> onehot) {
  if (pred.rank() != 2 || onehot.size() != pred.numel()) {
    throw ShapeError("density_loss: prediction " + shape_to_string(pred.shape()) + " for " +
                     std::to_string(onehot.size()) + " target values");
  }
  const std::size_t rows = pred.dim(0), classes = pred.dim(1);
  std::vector<std::size_t> hot(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t ones = 0;
    for (std::size_t k = 0; k < classes; ++k) {
      const float v = onehot[r * classes + k];
      if (v == 1.0f) {
        ++ones;
        hot[r] = k;
      } else if (v != 0.0f) {
        ones = 2;
      }
    }
    if (ones != 1) throw std::invalid_argument("density_loss: row " + std::to_string(r) + " is not one-hot");
  }
  const auto p = pred.data();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) total += std::log(clamp_probability(p[r * classes + hot[r]]));
  auto backward = [pred, hot = std::move(hot), classes](std::span<const float>, std::span<const float> dy,
                                                        std::span<const std::span<float>> grad_in) {
    const auto p = pred.data();
    const double g = dy[0] / static_cast<double>(hot.size());
    for (std::size_t r = 0; r < hot.size(); ++r) {
      const std::size_t i = r * classes + hot[r];
      if (is_clamped(p[i])) continue;
      grad_in[0][i] += static_cast<float>(-g / p[i]);
    }
  };
  return Tensor::make_result({1}, {static_cast<float>(-total / static_cast<double>(rows))}, {pred},
                             std::move(backward), "density_loss");
}

Tensor density_loss_levels(const Tensor& pred, std::span<const int> levels) {
  if (pred.rank() != 2) throw ShapeError("density_loss: prediction must be [N,K]");
  const std::size_t classes = pred.dim(1);
  std::vector<float> onehot(levels.size() * classes, 0.0f);
  for (std::size_t r = 0; r < levels.size(); ++r) {
    if (levels[r] < 1 || static_cast<std::size_t>(levels[r]) > classes) {
      throw std::invalid_argument("density_loss: level " + std::to_string(levels[r]) + " out of range");
    }
    onehot[r * classes + static_cast<std::size_t>(levels[r] - 1)] = 1.0f;
  }
  return density_loss(pred, onehot);
}

Tensor count_reg_loss(const Tensor& pred, std::span<const float> counts) {
  if (pred.rank() != 2 || pred.dim(1) != 1 || pred.dim(0) != counts.size()) {
    throw ShapeError("count_reg_loss: prediction " + shape_to_string(pred.shape()) + " for " +
                     std::to_string(counts.size()) + " counts");
  }
  std::vector<float> target(counts.begin(), counts.end());
  const auto p = pred.data();
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = static_cast<double>(target[i]) - p[i];
    total += d * d;
  }
  const double n = static_cast<double>(target.size());
  auto backward = [pred, target = std::move(target), n](std::span<const float>, std::span<const float> dy,
                                                        std::span<const std::span<float>> grad_in) {
    const auto p = pred.data();
    for (std::size_t i = 0; i < target.size(); ++i) {
      grad_in[0][i] += static_cast<float>(dy[0] * 2.0 * (static_cast<double>(p[i]) - target[i]) / n);
    }
  };
  return Tensor::make_result({1}, {static_cast<float>(total / n)}, {pred}, std::move(backward), "count_reg_loss");
}

Tensor heatmap_loss(const Tensor& pred, std::span<const float> target) {
  return mean_binary_cross_entropy(pred, std::vector<float>(target.begin(), target.end()), "heatmap_loss");
}

const Tensor& LossParts::get(Task task) const {
  switch (task) {
    case Task::kBehaviour: return behaviour;
    case Task::kDensity: return density;
    case Task::kCountReg: return count_reg;
    case Task::kCountHeatmap: return count_heatmap;
  }
  throw std::logic_error("unknown task");
}

Tensor total_loss(const LossParts& parts, const TaskMask& mask) {
  if (mask.active_count() == 0) throw std::invalid_argument("total_loss: every task is masked out");
  Tensor total;
  for (Task task : kAllTasks) {
    if (!mask.enabled(task)) continue;
    const Tensor& part = parts.get(task);
    if (!part.defined()) {
      throw std::invalid_argument(std::string("total_loss: enabled task '") + to_string(task) + "' has no loss");
    }
    total = total.defined() ? add(total, part) : part;
  }
  return total;
}

}  // namespace resnetcrowd
