#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace resnetcrowd {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Interleaved RGB image with channel values in [0,1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> pixels;  // height * width * 3

  Image() = default;
  Image(std::size_t w, std::size_t h, float fill = 0.0f) : width(w), height(h), pixels(w * h * 3, fill) {}

  float& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  float at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
  bool operator==(const Image&) const = default;
};

/// Reads any PNG and converts it to 8-bit RGB.
Image load_png(const std::filesystem::path& path);
/// Writes 8-bit RGB, rounding each channel to the nearest level.
void save_png(const Image& image, const std::filesystem::path& path);

/// Writes a single-channel map as a grayscale PNG scaled so the maximum maps
/// to 255, or through a jet colour map when `jet` is set.
void save_heatmap_png(std::span<const float> values, std::size_t width, std::size_t height,
                      const std::filesystem::path& path, bool jet = false);

/// Bilinear resampling with pixel-centre alignment. Returns an exact copy
/// when the size is unchanged.
Image resize_bilinear(const Image& image, std::size_t width, std::size_t height);

Image flip_horizontal(const Image& image);

}  // namespace resnetcrowd
