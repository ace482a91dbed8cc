#include "resnetcrowd/folds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace resnetcrowd {

Folds stratified_folds(std::span<const StratumKey> keys, std::size_t k, std::uint64_t seed,
                       std::vector<std::string>* warnings) {
  if (k < 2) throw std::invalid_argument("stratified_folds: k must be at least 2");
  if (keys.size() < k) {
    throw std::invalid_argument("stratified_folds: " + std::to_string(keys.size()) + " samples cannot fill " +
                                std::to_string(k) + " folds");
  }
  auto warn = [&](const std::string& m) {
    if (warnings) warnings->push_back(m);
  };

  std::mt19937_64 rng(seed);
  Folds folds(k);
  std::vector<std::size_t> fold_violent(k, 0);

  for (int level = 1; level <= 5; ++level) {
    std::vector<std::size_t> violent, calm;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (keys[i].density_level != level) continue;
      (keys[i].violent ? violent : calm).push_back(i);
    }
    const std::size_t n = violent.size() + calm.size();
    if (n == 0) continue;
    if (n < k) warn("density level " + std::to_string(level) + " has fewer samples than folds");
    std::shuffle(violent.begin(), violent.end(), rng);
    std::shuffle(calm.begin(), calm.end(), rng);

    // Every fold takes floor(n/k); the remainder goes to the currently
    // smallest folds.
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return folds[a].size() < folds[b].size(); });
    std::vector<std::size_t> capacity(k, n / k);
    for (std::size_t r = 0; r < n % k; ++r) ++capacity[order[r]];

    for (auto idx : violent) {
      std::size_t best = k;
      for (std::size_t f = 0; f < k; ++f) {
        if (capacity[f] == 0) continue;
        if (best == k || fold_violent[f] < fold_violent[best] ||
            (fold_violent[f] == fold_violent[best] && capacity[f] > capacity[best])) {
          best = f;
        }
      }
      folds[best].push_back(idx);
      ++fold_violent[best];
      --capacity[best];
    }
    std::size_t next = 0;
    for (std::size_t f = 0; f < k; ++f) {
      for (; capacity[f] > 0; --capacity[f]) folds[f].push_back(calm[next++]);
    }
  }

  const double violent_total = static_cast<double>(
      std::count_if(keys.begin(), keys.end(), [](const StratumKey& s) { return s.violent; }));
  for (std::size_t f = 0; f < k; ++f) {
    const double expected = violent_total * static_cast<double>(folds[f].size()) / static_cast<double>(keys.size());
    if (std::abs(static_cast<double>(fold_violent[f]) - expected) > 1.0) {
      warn("fold " + std::to_string(f) + " has " + std::to_string(fold_violent[f]) +
           " violent samples, proportional share is " + std::to_string(expected));
    }
    std::sort(folds[f].begin(), folds[f].end());
  }
  return folds;
}

Folds stratified_folds(const DatasetManifest& manifest, std::size_t k, std::uint64_t seed,
                       std::vector<std::string>* warnings) {
  std::vector<StratumKey> keys;
  keys.reserve(manifest.samples.size());
  for (const auto& s : manifest.samples) keys.push_back({s.violent(), s.density_level()});
  return stratified_folds(keys, k, seed, warnings);
}

std::vector<std::size_t> training_indices(const Folds& folds, std::size_t held_out) {
  if (held_out >= folds.size()) throw std::out_of_range("training_indices: no such fold");
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (f != held_out) out.insert(out.end(), folds[f].begin(), folds[f].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace resnetcrowd
