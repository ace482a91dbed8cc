#pragma once

#include <vector>

#include "resnetcrowd/dataset.hpp"
#include "resnetcrowd/synth.hpp"

namespace test {

/// Synthetic scenes rendered and prepared in memory for a small model.
inline std::vector<resnetcrowd::PreparedSample> tiny_dataset(std::size_t n, std::uint64_t seed,
                                                             const resnetcrowd::ResnetCrowdConfig& config,
                                                             std::array<double, 5> mix = {0.2, 0.2, 0.2, 0.2, 0.2}) {
  resnetcrowd::SynthSpec spec;
  spec.num_images = n;
  spec.seed = seed;
  spec.width = 2 * config.input_width;
  spec.height = 2 * config.input_height;
  spec.density_mix = mix;
  const auto plan = resnetcrowd::synth_plan(spec);
  std::vector<resnetcrowd::PreparedSample> out;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    out.push_back(resnetcrowd::prepare_sample(plan[i], resnetcrowd::synth_render(spec, plan[i], i), spec.width,
                                              spec.height, config, {}));
  }
  return out;
}

}  // namespace test
