#pragma once

#include <array>
#include <cstdint>

namespace resnetcrowd {

struct DensityBand {
  int level;
  std::int64_t min_count;
  std::int64_t max_count;  // inclusive; -1 means unbounded
};

/// Crowd-count bins for the five density levels.
inline constexpr std::array<DensityBand, 5> kDensityBands{{
    {1, 0, 20},
    {2, 21, 50},
    {3, 51, 100},
    {4, 101, 200},
    {5, 201, -1},
}};

/// Maps a person count to its density level 1..5. Throws on negative counts.
int density_level_from_count(std::int64_t count);

}  // namespace resnetcrowd
