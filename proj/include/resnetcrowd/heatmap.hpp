#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace resnetcrowd {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

enum class KernelMethod { kGeometryAdaptive, kFixed };

struct HeatmapOptions {
  KernelMethod method = KernelMethod::kGeometryAdaptive;
  /// Neighbours averaged for the adaptive width.
  std::size_t k = 3;
  double beta = 0.3;
  /// Width (target-grid pixels) for the fixed method and for scenes with
  /// fewer than k + 1 heads.
  double fixed_sigma = 4.0;
  /// Lower bound on the adaptive width; coincident heads would otherwise
  /// produce a zero-width kernel.
  double min_sigma = 0.5;
  /// Kernels are cut off at this many standard deviations.
  double truncate = 3.0;
};

/// Ground-truth density map on the target grid. `values` are clamped to
/// [0,1]; `integral` is the sum before clamping.
struct Heatmap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> values;
  double integral = 0.0;
};

/// Renders one unit-mass discrete Gaussian per head. Head coordinates are in
/// source pixels and are mapped to the target grid by pixel centres. Mass
/// falling outside the grid is lost, so the integral can undershoot the head
/// count for heads near the border.
Heatmap generate_heatmap(std::span<const Point> heads, std::size_t source_width, std::size_t source_height,
                         std::size_t target_width, std::size_t target_height, const HeatmapOptions& options = {});

/// Per-head kernel widths (target-grid pixels) used by generate_heatmap.
std::vector<double> kernel_sigmas(std::span<const Point> target_heads, const HeatmapOptions& options);

Heatmap flip_heatmap(const Heatmap& heatmap);

}  // namespace resnetcrowd
