#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resnetcrowd/gradcheck.hpp"

namespace resnetcrowd {

struct GradCheckCase {
  std::string name;
  GradCheckReport report;
  double seconds = 0.0;
};

struct GradCheckSuiteOptions {
  std::uint64_t seed = 0;
  double layer_tolerance = 1e-3;
  double model_tolerance = 1e-2;
  /// Coordinates probed per tensor in the full-model case.
  std::size_t model_coordinates = 24;
  double model_epsilon = 1e-2;
  std::size_t model_width = 4;
  std::size_t model_height = 2;
  bool include_model = true;
};

/// Every differentiable op in isolation (against a fixed random projection
/// of its output), each loss, and the full network with the summed loss at
/// 16x8 input.
std::vector<GradCheckCase> run_gradcheck_suite(const GradCheckSuiteOptions& options = {});

}  // namespace resnetcrowd
