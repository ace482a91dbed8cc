#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "resnetcrowd/tensor.hpp"

namespace resnetcrowd {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct GradCheckOptions {
  double epsilon = 1e-3;
  double tolerance = 1e-3;
  /// Coordinates probed per tensor; 0 probes every element.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
  /// Keep the central-difference window free of relu kinks: when the
  /// +-epsilon window flips the sign of any relu input, the step is halved
  /// (down to min_epsilon) and the coordinate is skipped if no kink-free
  /// window exists. Replacement coordinates are drawn until max_coordinates
  /// clean ones are checked.
  bool skip_relu_kinks = false;
  double min_epsilon = 1e-4;
};

struct GradCheckEntry {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::size_t coordinates_skipped = 0;  // kink crossings
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Compares reverse-mode gradients of `build_loss` against central
/// differences for every tensor in `inputs`.
///
/// The error for one tensor is max_i |analytic_i - numeric_i| divided by the
/// largest gradient magnitude seen in that tensor (either route), so tiny
/// individual entries do not dominate. Differences are taken in double
/// precision over the float perturbation that was actually applied.
GradCheckReport finite_diff_check(const std::function<Tensor()>& build_loss, const std::vector<NamedTensor>& inputs,
                                  const GradCheckOptions& options = {});

}  // namespace resnetcrowd
