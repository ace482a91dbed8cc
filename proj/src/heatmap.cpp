#include "resnetcrowd/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace resnetcrowd {

namespace {

// Normalised 1-D Gaussian taps over [centre - radius, centre + radius].
void gaussian_taps(double mean, double sigma, long radius, long& first, std::vector<double>& taps) {
  const long centre = std::lround(mean);
  first = centre - radius;
  taps.resize(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (long i = 0; i < static_cast<long>(taps.size()); ++i) {
    const double d = static_cast<double>(first + i) - mean;
    taps[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += taps[static_cast<std::size_t>(i)];
  }
  for (auto& t : taps) t /= total;
}

}  // namespace

std::vector<double> kernel_sigmas(std::span<const Point> heads, const HeatmapOptions& options) {
  std::vector<double> sigmas(heads.size(), options.fixed_sigma);
  if (options.method == KernelMethod::kFixed || heads.size() < options.k + 1 || options.k == 0) return sigmas;

  std::vector<double> dists(heads.size());
  for (std::size_t i = 0; i < heads.size(); ++i) {
    for (std::size_t j = 0; j < heads.size(); ++j) {
      dists[j] = std::hypot(heads[i].x - heads[j].x, heads[i].y - heads[j].y);
    }
    dists[i] = std::numeric_limits<double>::infinity();
    std::partial_sort(dists.begin(), dists.begin() + static_cast<long>(options.k), dists.end());
    double mean = 0.0;
    for (std::size_t n = 0; n < options.k; ++n) mean += dists[n];
    mean /= static_cast<double>(options.k);
    sigmas[i] = std::max(options.beta * mean, options.min_sigma);
  }
  return sigmas;
}

Heatmap generate_heatmap(std::span<const Point> heads, std::size_t source_width, std::size_t source_height,
                         std::size_t target_width, std::size_t target_height, const HeatmapOptions& options) {
  if (source_width == 0 || source_height == 0 || target_width == 0 || target_height == 0) {
    throw std::invalid_argument("generate_heatmap: empty resolution");
  }
  const double sx = static_cast<double>(target_width) / static_cast<double>(source_width);
  const double sy = static_cast<double>(target_height) / static_cast<double>(source_height);
  std::vector<Point> mapped;
  mapped.reserve(heads.size());
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const auto& h = heads[i];
    if (!(h.x >= 0.0 && h.y >= 0.0 && h.x < static_cast<double>(source_width) &&
          h.y < static_cast<double>(source_height))) {
      throw std::invalid_argument("generate_heatmap: head " + std::to_string(i) + " lies outside the source image");
    }
    mapped.push_back({(h.x + 0.5) * sx - 0.5, (h.y + 0.5) * sy - 0.5});
  }

  const auto sigmas = kernel_sigmas(mapped, options);
  std::vector<double> grid(target_width * target_height, 0.0);
  std::vector<double> taps_x, taps_y;
  for (std::size_t i = 0; i < mapped.size(); ++i) {
    const long radius = std::max(1L, static_cast<long>(std::ceil(options.truncate * sigmas[i])));
    long x0 = 0, y0 = 0;
    gaussian_taps(mapped[i].x, sigmas[i], radius, x0, taps_x);
    gaussian_taps(mapped[i].y, sigmas[i], radius, y0, taps_y);
    // Kernels cut by the border are rescaled so every head keeps unit mass.
    auto inside = [](const std::vector<double>& taps, long first, std::size_t extent) {
      double s = 0.0;
      for (std::size_t k = 0; k < taps.size(); ++k) {
        const long at = first + static_cast<long>(k);
        if (at >= 0 && at < static_cast<long>(extent)) s += taps[k];
      }
      return s;
    };
    const double visible = inside(taps_x, x0, target_width) * inside(taps_y, y0, target_height);
    if (visible <= 0.0) continue;
    const double gain = 1.0 / visible;
    for (std::size_t a = 0; a < taps_y.size(); ++a) {
      const long y = y0 + static_cast<long>(a);
      if (y < 0 || y >= static_cast<long>(target_height)) continue;
      double* row = grid.data() + static_cast<std::size_t>(y) * target_width;
      for (std::size_t b = 0; b < taps_x.size(); ++b) {
        const long x = x0 + static_cast<long>(b);
        if (x < 0 || x >= static_cast<long>(target_width)) continue;
        row[x] += gain * taps_y[a] * taps_x[b];
      }
    }
  }

  Heatmap map;
  map.width = target_width;
  map.height = target_height;
  map.values.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    map.integral += grid[i];
    map.values[i] = static_cast<float>(std::clamp(grid[i], 0.0, 1.0));
  }
  return map;
}

Heatmap flip_heatmap(const Heatmap& heatmap) {
  Heatmap out = heatmap;
  for (std::size_t y = 0; y < heatmap.height; ++y) {
    const float* src = heatmap.values.data() + y * heatmap.width;
    float* dst = out.values.data() + y * heatmap.width;
    std::reverse_copy(src, src + heatmap.width, dst);
  }
  return out;
}

}  // namespace resnetcrowd
