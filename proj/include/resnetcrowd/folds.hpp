#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "resnetcrowd/manifest.hpp"

namespace resnetcrowd {

struct StratumKey {
  bool violent = false;
  int density_level = 1;
};

using Folds = std::vector<std::vector<std::size_t>>;

/// Partitions sample indices into k folds, balancing density levels (each
/// fold receives floor or ceil of its share of every level) and, within that,
/// the violent / non-violent split. Constraint violations that the data make
/// unavoidable are reported through `warnings`.
Folds stratified_folds(std::span<const StratumKey> keys, std::size_t k, std::uint64_t seed,
                       std::vector<std::string>* warnings = nullptr);
Folds stratified_folds(const DatasetManifest& manifest, std::size_t k, std::uint64_t seed,
                       std::vector<std::string>* warnings = nullptr);

/// All indices outside fold `held_out`, ascending.
std::vector<std::size_t> training_indices(const Folds& folds, std::size_t held_out);

}  // namespace resnetcrowd
