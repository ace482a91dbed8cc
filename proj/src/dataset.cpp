#include "resnetcrowd/dataset.hpp"

#include <algorithm>
#include <stdexcept>

namespace resnetcrowd {

AnnotatedImage augment_hflip(const AnnotatedImage& sample) {
  AnnotatedImage out;
  out.image = flip_horizontal(sample.image);
  out.annotations = sample.annotations;
  const double last = static_cast<double>(sample.image.width) - 1.0;
  for (auto& h : out.annotations.heads) h.x = last - h.x;
  out.heatmap = flip_heatmap(sample.heatmap);
  return out;
}

PreparedSample prepare_sample(const CrowdSample& sample, const Image& source, std::size_t source_width,
                              std::size_t source_height, const ResnetCrowdConfig& config,
                              const HeatmapOptions& heatmap_options) {
  if (source.width != source_width || source.height != source_height) {
    throw std::invalid_argument("image " + sample.image + " is " + std::to_string(source.width) + "x" +
                                std::to_string(source.height) + ", manifest declares " +
                                std::to_string(source_width) + "x" + std::to_string(source_height));
  }
  PreparedSample out;
  out.id = sample.image;
  const Image resized = resize_bilinear(source, config.input_width, config.input_height);
  out.image.resize(3 * config.input_width * config.input_height);
  standardize_into(resized.pixels, resized.width, resized.height, config, out.image);

  const Heatmap map = generate_heatmap(sample.heads, source_width, source_height, config.heatmap_width,
                                       config.heatmap_height, heatmap_options);
  out.heatmap = map.values;
  out.heatmap_integral = map.integral;
  out.count = static_cast<float>(sample.count());
  out.density_level = sample.density_level();
  out.behaviour = {sample.fight, sample.mob};
  return out;
}

std::vector<PreparedSample> prepare_dataset(const DatasetManifest& manifest, const std::filesystem::path& base_dir,
                                            const ResnetCrowdConfig& config, const HeatmapOptions& heatmap_options) {
  std::vector<PreparedSample> out;
  out.reserve(manifest.samples.size());
  for (const auto& s : manifest.samples) {
    const Image img = load_png(base_dir / s.image);
    out.push_back(prepare_sample(s, img, manifest.width, manifest.height, config, heatmap_options));
  }
  return out;
}

PreparedSample flip_prepared(const PreparedSample& sample, const ResnetCrowdConfig& config) {
  PreparedSample out = sample;
  const std::size_t w = config.input_width, h = config.input_height;
  for (std::size_t row = 0; row < 3 * h; ++row) {
    std::reverse(out.image.begin() + static_cast<long>(row * w), out.image.begin() + static_cast<long>((row + 1) * w));
  }
  const std::size_t hw = config.heatmap_width;
  for (std::size_t row = 0; row < config.heatmap_height; ++row) {
    std::reverse(out.heatmap.begin() + static_cast<long>(row * hw),
                 out.heatmap.begin() + static_cast<long>((row + 1) * hw));
  }
  out.id = sample.id + "#flip";
  return out;
}

Tensor batch_images(std::span<const PreparedSample> samples, std::span<const std::size_t> indices,
                    const ResnetCrowdConfig& config) {
  const std::size_t per = 3 * config.input_width * config.input_height;
  std::vector<float> data(indices.size() * per);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& img = samples[indices[i]].image;
    if (img.size() != per) throw ShapeError("batch_images: sample prepared for a different input resolution");
    std::copy(img.begin(), img.end(), data.begin() + static_cast<long>(i * per));
  }
  return Tensor::from_data({indices.size(), 3, config.input_height, config.input_width}, std::move(data));
}

std::vector<PreparedSample> select(std::span<const PreparedSample> samples, std::span<const std::size_t> indices) {
  std::vector<PreparedSample> out;
  out.reserve(indices.size());
  for (auto i : indices) {
    if (i >= samples.size()) throw std::out_of_range("select: index out of range");
    out.push_back(samples[i]);
  }
  return out;
}

}  // namespace resnetcrowd
