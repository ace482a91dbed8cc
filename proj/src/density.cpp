#include "resnetcrowd/density.hpp"

#include <stdexcept>
#include <string>

namespace resnetcrowd {

int density_level_from_count(std::int64_t count) {
  if (count < 0) throw std::invalid_argument("density level: negative count " + std::to_string(count));
  for (const auto& band : kDensityBands) {
    if (band.max_count < 0 || count <= band.max_count) return band.level;
  }
  return kDensityBands.back().level;
}

}  // namespace resnetcrowd
