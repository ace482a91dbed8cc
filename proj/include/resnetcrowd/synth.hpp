#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "resnetcrowd/image.hpp"
#include "resnetcrowd/manifest.hpp"

namespace resnetcrowd {

/// Parameters of the synthetic crowd-scene generator.
///
/// Each scene is a noisy background with one rendered person (body ellipse
/// plus head disk) per annotated head, placed in a few loose groups away from
/// the image border. Violent scenes additionally carry high-contrast markers
/// over a subset of the people: a red/white checkerboard when Fight is set,
/// yellow/black diagonal stripes when Mob is set.
struct SynthSpec {
  std::size_t num_images = 100;
  /// Relative frequency of density levels 1..5; normalised internally.
  std::array<double, 5> density_mix{0.2, 0.2, 0.2, 0.2, 0.2};
  double violent_fraction = 0.5;
  std::uint64_t seed = 0;
  std::size_t width = 640;
  std::size_t height = 360;
  /// Upper bound on the count of level-5 scenes.
  std::size_t max_count = 300;
};

/// Annotations for every scene (image names images/img_NNNN.png).
std::vector<CrowdSample> synth_plan(const SynthSpec& spec);

/// Renders the scene with index `index` of the plan.
Image synth_render(const SynthSpec& spec, const CrowdSample& sample, std::size_t index);

/// Writes images/ and manifest.json under `out_dir` and returns the manifest.
DatasetManifest synth_generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace resnetcrowd
