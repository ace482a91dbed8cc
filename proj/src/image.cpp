#include "resnetcrowd/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

namespace resnetcrowd {

namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void write_rgb8(const std::vector<std::uint8_t>& bytes, std::size_t width, std::size_t height,
                const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(width);
  png.height = static_cast<png_uint_32>(height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw ImageError("cannot write " + path.string() + ": " + png.message);
  }
}

}  // namespace

Image load_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw ImageError("cannot read " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&png);
    throw ImageError("cannot decode " + path.string() + ": " + png.message);
  }
  Image image(png.width, png.height);
  for (std::size_t i = 0; i < bytes.size(); ++i) image.pixels[i] = static_cast<float>(bytes[i]) / 255.0f;
  return image;
}

void save_png(const Image& image, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), bytes.begin(), to_byte);
  write_rgb8(bytes, image.width, image.height, path);
}

void save_heatmap_png(std::span<const float> values, std::size_t width, std::size_t height,
                      const std::filesystem::path& path, bool jet) {
  if (values.size() != width * height) throw ImageError("heatmap size does not match its dimensions");
  const float peak = values.empty() ? 0.0f : *std::max_element(values.begin(), values.end());
  const float norm = peak > 0.0f ? 1.0f / peak : 0.0f;
  std::vector<std::uint8_t> bytes(width * height * 3);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float v = std::clamp(values[i] * norm, 0.0f, 1.0f);
    if (jet) {
      bytes[i * 3 + 0] = to_byte(1.5f - std::abs(4.0f * v - 3.0f));
      bytes[i * 3 + 1] = to_byte(1.5f - std::abs(4.0f * v - 2.0f));
      bytes[i * 3 + 2] = to_byte(1.5f - std::abs(4.0f * v - 1.0f));
    } else {
      bytes[i * 3 + 0] = bytes[i * 3 + 1] = bytes[i * 3 + 2] = to_byte(v);
    }
  }
  write_rgb8(bytes, width, height, path);
}

Image resize_bilinear(const Image& image, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0 || image.width == 0 || image.height == 0) {
    throw ImageError("resize: empty source or target");
  }
  if (width == image.width && height == image.height) return image;

  struct Tap {
    std::size_t lo, hi;
    float frac;
  };
  auto taps = [](std::size_t src, std::size_t dst) {
    std::vector<Tap> out(dst);
    const double ratio = static_cast<double>(src) / static_cast<double>(dst);
    for (std::size_t i = 0; i < dst; ++i) {
      const double s = std::clamp((static_cast<double>(i) + 0.5) * ratio - 0.5, 0.0, static_cast<double>(src - 1));
      const auto lo = static_cast<std::size_t>(std::floor(s));
      out[i] = {lo, std::min(lo + 1, src - 1), static_cast<float>(s - static_cast<double>(lo))};
    }
    return out;
  };
  const auto xs = taps(image.width, width);
  const auto ys = taps(image.height, height);

  Image out(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    const auto& ty = ys[y];
    for (std::size_t x = 0; x < width; ++x) {
      const auto& tx = xs[x];
      for (std::size_t c = 0; c < 3; ++c) {
        const float a = image.at(tx.lo, ty.lo, c), b = image.at(tx.hi, ty.lo, c);
        const float d = image.at(tx.lo, ty.hi, c), e = image.at(tx.hi, ty.hi, c);
        const float top = a + tx.frac * (b - a);
        const float bottom = d + tx.frac * (e - d);
        out.at(x, y, c) = top + ty.frac * (bottom - top);
      }
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out(image.width, image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.at(image.width - 1 - x, y, c) = image.at(x, y, c);
    }
  }
  return out;
}

}  // namespace resnetcrowd
