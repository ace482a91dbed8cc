#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "resnetcrowd/heatmap.hpp"
#include "resnetcrowd/image.hpp"
#include "resnetcrowd/losses.hpp"
#include "resnetcrowd/manifest.hpp"
#include "resnetcrowd/model.hpp"

namespace resnetcrowd {

/// An image with its annotations and ground-truth heatmap, at source scale.
struct AnnotatedImage {
  Image image;
  CrowdSample annotations;
  Heatmap heatmap;
};

/// Mirrors image, heads (x -> W-1-x) and heatmap; labels are untouched.
AnnotatedImage augment_hflip(const AnnotatedImage& sample);

/// A sample ready for the network: standardised CHW pixels at the model input
/// resolution plus every training target.
struct PreparedSample {
  std::string id;
  std::vector<float> image;    // 3 * input_height * input_width
  std::vector<float> heatmap;  // heatmap_height * heatmap_width, in [0,1]
  double heatmap_integral = 0.0;
  float count = 0.0f;
  int density_level = 1;
  BehaviourLabel behaviour;
};

/// Resizes to the model input, standardises, and renders the heatmap target
/// directly on the model's heatmap grid.
PreparedSample prepare_sample(const CrowdSample& sample, const Image& source, std::size_t source_width,
                              std::size_t source_height, const ResnetCrowdConfig& config,
                              const HeatmapOptions& heatmap_options);

/// Loads and prepares every sample of `manifest` (images resolved relative
/// to `base_dir`).
std::vector<PreparedSample> prepare_dataset(const DatasetManifest& manifest, const std::filesystem::path& base_dir,
                                            const ResnetCrowdConfig& config, const HeatmapOptions& heatmap_options);

/// Horizontal mirror of a prepared sample.
PreparedSample flip_prepared(const PreparedSample& sample, const ResnetCrowdConfig& config);

/// Stacks the images of `samples[indices]` into an [N,3,H,W] tensor.
Tensor batch_images(std::span<const PreparedSample> samples, std::span<const std::size_t> indices,
                    const ResnetCrowdConfig& config);

/// Gathers a subset by index.
std::vector<PreparedSample> select(std::span<const PreparedSample> samples, std::span<const std::size_t> indices);

}  // namespace resnetcrowd
