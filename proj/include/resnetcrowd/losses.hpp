#pragma once

#include <array>
#include <span>
#include <string>

#include "resnetcrowd/tensor.hpp"

namespace resnetcrowd {

/// Probabilities are clamped to [kProbabilityClamp, 1 - kProbabilityClamp]
/// before every logarithm; clamped entries receive zero gradient.
inline constexpr double kProbabilityClamp = 1e-7;

enum class Task { kBehaviour, kDensity, kCountReg, kCountHeatmap };
inline constexpr std::array<Task, 4> kAllTasks{Task::kBehaviour, Task::kDensity, Task::kCountReg,
                                               Task::kCountHeatmap};
const char* to_string(Task task);

struct TaskMask {
  bool behaviour = true;
  bool density = true;
  bool count_reg = true;
  bool count_heatmap = true;

  static TaskMask all() { return {}; }
  static TaskMask none() { return {false, false, false, false}; }
  static TaskMask only(Task task);

  bool enabled(Task task) const;
  std::size_t active_count() const;
  bool operator==(const TaskMask&) const = default;
};

struct BehaviourLabel {
  bool fight = false;
  bool mob = false;
};

/// Mean binary cross entropy over all N*2 concept slots. pred: [N,2].
Tensor behaviour_loss(const Tensor& pred, std::span<const BehaviourLabel> targets);

/// Categorical cross entropy averaged over the batch. pred: [N,K], targets
/// are one-hot rows (N*K values, exactly one 1 per row).
Tensor density_loss(const Tensor& pred, std::span<const float> onehot);
/// Convenience overload taking density levels 1..K.
Tensor density_loss_levels(const Tensor& pred, std::span<const int> levels);

/// Mean squared error. pred: [N,1].
Tensor count_reg_loss(const Tensor& pred, std::span<const float> counts);

/// Per-pixel binary cross entropy averaged over every pixel of the batch.
/// Soft targets in [0,1] are allowed. target has pred.numel() values.
Tensor heatmap_loss(const Tensor& pred, std::span<const float> target);

struct LossParts {
  Tensor behaviour;
  Tensor density;
  Tensor count_reg;
  Tensor count_heatmap;

  const Tensor& get(Task task) const;
};

/// Unweighted sum of the enabled parts. Disabled parts are left out of the
/// graph entirely, so they contribute neither value nor gradient.
Tensor total_loss(const LossParts& parts, const TaskMask& mask);

}  // namespace resnetcrowd
