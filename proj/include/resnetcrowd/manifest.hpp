#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "resnetcrowd/heatmap.hpp"

namespace resnetcrowd {

/// One annotated image. Count and density level are always derived from the
/// head list.
struct CrowdSample {
  std::string image;  // relative to the manifest directory
  std::vector<Point> heads;
  bool fight = false;
  bool mob = false;

  std::size_t count() const { return heads.size(); }
  int density_level() const;
  bool violent() const { return fight || mob; }
  bool operator==(const CrowdSample&) const = default;
};

struct DatasetManifest {
  int version = 1;
  std::size_t width = 0;   // source resolution shared by every sample
  std::size_t height = 0;
  std::string provenance = "external";  // "synthetic" or "external"
  std::vector<CrowdSample> samples;

  bool operator==(const DatasetManifest&) const = default;
};

/// Schema violation, located by record index (-1 for top-level fields).
class ManifestError : public std::runtime_error {
 public:
  ManifestError(long record, std::string field, const std::string& message);
  long record() const { return record_; }
  const std::string& field() const { return field_; }

 private:
  long record_;
  std::string field_;
};

struct ManifestLoadOptions {
  /// Require every image file to exist next to the manifest.
  bool check_images = true;
};

/// Parses a manifest. Unknown fields are skipped and reported in `warnings`.
/// Optional `count` / `density_level` fields, when present, must agree with
/// the head list.
DatasetManifest load_manifest(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr,
                              const ManifestLoadOptions& options = {});
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace resnetcrowd
