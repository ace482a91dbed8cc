#include "resnetcrowd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>

#include "resnetcrowd/density.hpp"

namespace resnetcrowd {

namespace {

constexpr double kHeadRadius = 4.0;
constexpr double kMinSpacing = 9.0;

std::mt19937_64 scene_rng(std::uint64_t seed, std::size_t index, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

// Largest-remainder apportionment of `total` items over `weights`.
std::vector<std::size_t> apportion(const std::array<double, 5>& weights, std::size_t total) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(sum > 0.0)) throw std::invalid_argument("synth: density_mix must have positive mass");
  std::vector<std::size_t> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0) throw std::invalid_argument("synth: density_mix entries must be non-negative");
    const double exact = weights[i] / sum * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(-(exact - std::floor(exact)), i);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t r = 0; assigned < total; ++r, ++assigned) ++counts[remainders[r].second];
  return counts;
}

std::vector<Point> place_heads(std::size_t count, const SynthSpec& spec, std::mt19937_64& rng) {
  const double w = static_cast<double>(spec.width), h = static_cast<double>(spec.height);
  const double x_lo = 0.08 * w, x_hi = w - 1.0 - 0.08 * w;
  const double y_lo = 0.12 * h, y_hi = h - 1.0 - 0.12 * h;
  std::uniform_real_distribution<double> ux(x_lo, x_hi), uy(y_lo, y_hi);

  const std::size_t groups = 1 + std::min<std::size_t>(count / 40, 3) + rng() % 2;
  std::vector<Point> centres(groups);
  for (auto& c : centres) c = {ux(rng), uy(rng)};
  const double spread = std::max(20.0, 7.0 * std::sqrt(static_cast<double>(count) / static_cast<double>(groups)));
  std::normal_distribution<double> jitter(0.0, spread);

  std::vector<Point> heads;
  heads.reserve(count);
  double spacing = kMinSpacing;
  std::size_t failures = 0;
  while (heads.size() < count) {
    const auto& c = centres[rng() % groups];
    Point p{c.x + jitter(rng), c.y + jitter(rng) * 0.6};
    bool ok = p.x >= x_lo && p.x <= x_hi && p.y >= y_lo && p.y <= y_hi;
    for (std::size_t i = 0; ok && i < heads.size(); ++i) {
      ok = std::hypot(heads[i].x - p.x, heads[i].y - p.y) >= spacing;
    }
    if (ok) {
      heads.push_back({std::round(p.x * 4.0) / 4.0, std::round(p.y * 4.0) / 4.0});
      failures = 0;
    } else if (++failures > 200) {
      spacing *= 0.9;  // crowded group: let people overlap a little more
      failures = 0;
    }
  }
  return heads;
}

void fill_disk(Image& img, double cx, double cy, double r, const std::array<float, 3>& colour) {
  const long x0 = std::max(0L, static_cast<long>(std::floor(cx - r)));
  const long x1 = std::min(static_cast<long>(img.width) - 1, static_cast<long>(std::ceil(cx + r)));
  const long y0 = std::max(0L, static_cast<long>(std::floor(cy - r)));
  const long y1 = std::min(static_cast<long>(img.height) - 1, static_cast<long>(std::ceil(cy + r)));
  for (long y = y0; y <= y1; ++y) {
    for (long x = x0; x <= x1; ++x) {
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) > r * r) continue;
      for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = colour[c];
    }
  }
}

void fill_ellipse(Image& img, double cx, double cy, double rx, double ry, const std::array<float, 3>& colour) {
  const long x0 = std::max(0L, static_cast<long>(std::floor(cx - rx)));
  const long x1 = std::min(static_cast<long>(img.width) - 1, static_cast<long>(std::ceil(cx + rx)));
  const long y0 = std::max(0L, static_cast<long>(std::floor(cy - ry)));
  const long y1 = std::min(static_cast<long>(img.height) - 1, static_cast<long>(std::ceil(cy + ry)));
  for (long y = y0; y <= y1; ++y) {
    for (long x = x0; x <= x1; ++x) {
      const double dx = (x - cx) / rx, dy = (y - cy) / ry;
      if (dx * dx + dy * dy > 1.0) continue;
      for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = colour[c];
    }
  }
}

enum class Marker { kFight, kMob };

void draw_marker(Image& img, double cx, double cy, Marker kind) {
  constexpr long kHalf = 7;
  for (long dy = -kHalf; dy <= kHalf; ++dy) {
    for (long dx = -kHalf; dx <= kHalf; ++dx) {
      const long x = std::lround(cx) + dx, y = std::lround(cy) + dy;
      if (x < 0 || y < 0 || x >= static_cast<long>(img.width) || y >= static_cast<long>(img.height)) continue;
      std::array<float, 3> colour;
      if (kind == Marker::kFight) {
        const bool light = ((dx + kHalf) / 3 + (dy + kHalf) / 3) % 2 == 0;
        colour = light ? std::array<float, 3>{1.0f, 1.0f, 1.0f} : std::array<float, 3>{0.9f, 0.05f, 0.05f};
      } else {
        const bool light = ((dx + dy + 2 * kHalf) / 3) % 2 == 0;
        colour = light ? std::array<float, 3>{1.0f, 0.9f, 0.0f} : std::array<float, 3>{0.0f, 0.0f, 0.0f};
      }
      for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = colour[c];
    }
  }
}

}  // namespace

std::vector<CrowdSample> synth_plan(const SynthSpec& spec) {
  if (spec.num_images == 0) throw std::invalid_argument("synth: num_images must be positive");
  if (!(spec.violent_fraction >= 0.0 && spec.violent_fraction <= 1.0)) {
    throw std::invalid_argument("synth: violent_fraction must lie in [0,1]");
  }
  if (spec.max_count < 201) throw std::invalid_argument("synth: max_count must reach density level 5 (>= 201)");
  if (spec.width < 64 || spec.height < 36) throw std::invalid_argument("synth: resolution too small");

  std::mt19937_64 rng(spec.seed);
  const auto per_level = apportion(spec.density_mix, spec.num_images);
  std::vector<int> levels;
  for (std::size_t l = 0; l < per_level.size(); ++l) levels.insert(levels.end(), per_level[l], static_cast<int>(l + 1));
  std::shuffle(levels.begin(), levels.end(), rng);

  const auto violent_total =
      static_cast<std::size_t>(std::llround(spec.violent_fraction * static_cast<double>(spec.num_images)));
  std::vector<bool> violent(spec.num_images, false);
  std::fill(violent.begin(), violent.begin() + static_cast<long>(violent_total), true);
  std::shuffle(violent.begin(), violent.end(), rng);

  std::vector<CrowdSample> plan(spec.num_images);
  for (std::size_t i = 0; i < spec.num_images; ++i) {
    auto local = scene_rng(spec.seed, i, 1);
    const auto& band = kDensityBands[static_cast<std::size_t>(levels[i] - 1)];
    std::int64_t lo = band.min_count;
    const std::int64_t hi = band.max_count < 0 ? static_cast<std::int64_t>(spec.max_count) : band.max_count;
    if (violent[i]) lo = std::max<std::int64_t>(lo, 2);  // a fight needs someone to take part
    const auto count = static_cast<std::size_t>(std::uniform_int_distribution<std::int64_t>(lo, hi)(local));

    CrowdSample& s = plan[i];
    char name[32];
    std::snprintf(name, sizeof(name), "images/img_%04zu.png", i);
    s.image = name;
    s.heads = place_heads(count, spec, local);
    if (violent[i]) {
      switch (local() % 3) {
        case 0: s.fight = true; break;
        case 1: s.mob = true; break;
        default: s.fight = s.mob = true; break;
      }
    }
  }
  return plan;
}

Image synth_render(const SynthSpec& spec, const CrowdSample& sample, std::size_t index) {
  auto rng = scene_rng(spec.seed, index, 2);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  Image img(spec.width, spec.height);

  // Background: vertical two-tone gradient, a few dull blocks, pixel noise.
  std::array<float, 3> top{}, bottom{};
  for (std::size_t c = 0; c < 3; ++c) {
    top[c] = 0.45f + 0.35f * unit(rng);
    bottom[c] = 0.30f + 0.30f * unit(rng);
  }
  for (std::size_t y = 0; y < img.height; ++y) {
    const float t = static_cast<float>(y) / static_cast<float>(img.height - 1);
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = top[c] + t * (bottom[c] - top[c]);
    }
  }
  const std::size_t blocks = 2 + rng() % 4;
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t bw = img.width / 20 + rng() % (img.width / 5), bh = img.height / 18 + rng() % (img.height / 4);
    const std::size_t bx = rng() % (img.width - bw), by = rng() % (img.height - bh);
    const float shade = 0.25f + 0.5f * unit(rng);
    for (std::size_t y = by; y < by + bh; ++y) {
      for (std::size_t x = bx; x < bx + bw; ++x) {
        for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = 0.5f * img.at(x, y, c) + 0.5f * shade;
      }
    }
  }
  for (auto& v : img.pixels) v = std::clamp(v + 0.08f * (unit(rng) - 0.5f), 0.0f, 1.0f);

  // People, back to front.
  std::vector<std::size_t> order(sample.heads.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sample.heads[a].y < sample.heads[b].y; });
  static constexpr std::array<std::array<float, 3>, 4> kSkin{
      {{0.96f, 0.80f, 0.69f}, {0.87f, 0.67f, 0.52f}, {0.62f, 0.44f, 0.32f}, {0.40f, 0.27f, 0.20f}}};
  for (auto i : order) {
    const auto& h = sample.heads[i];
    std::array<float, 3> clothes{0.1f + 0.7f * unit(rng), 0.1f + 0.7f * unit(rng), 0.1f + 0.7f * unit(rng)};
    fill_ellipse(img, h.x, h.y + 2.6 * kHeadRadius, 1.4 * kHeadRadius, 2.2 * kHeadRadius, clothes);
    fill_disk(img, h.x, h.y, kHeadRadius, kSkin[rng() % kSkin.size()]);
    fill_disk(img, h.x, h.y - 0.5 * kHeadRadius, 0.6 * kHeadRadius, {0.08f, 0.06f, 0.05f});
  }

  if (sample.violent() && !sample.heads.empty()) {
    std::vector<std::size_t> pick(sample.heads.size());
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    std::shuffle(pick.begin(), pick.end(), rng);
    const std::size_t floor_marks = sample.fight && sample.mob ? 2 : 1;
    const std::size_t marked =
        std::min(sample.heads.size(), std::max(floor_marks, (sample.heads.size() + 2) / 3));
    for (std::size_t m = 0; m < marked; ++m) {
      const auto& h = sample.heads[pick[m]];
      const double cy = h.y + 2.2 * kHeadRadius;
      if (sample.fight && sample.mob) {
        draw_marker(img, h.x, cy, m % 2 == 0 ? Marker::kFight : Marker::kMob);
      } else {
        draw_marker(img, h.x, cy, sample.fight ? Marker::kFight : Marker::kMob);
      }
    }
  }
  return img;
}

DatasetManifest synth_generate(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  DatasetManifest manifest;
  manifest.width = spec.width;
  manifest.height = spec.height;
  manifest.provenance = "synthetic";
  manifest.samples = synth_plan(spec);
  std::filesystem::create_directories(out_dir / "images");
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    save_png(synth_render(spec, manifest.samples[i], i), out_dir / manifest.samples[i].image);
  }
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace resnetcrowd
