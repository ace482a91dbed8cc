#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "resnetcrowd/model.hpp"

namespace resnetcrowd {

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { kIo, kMalformed, kBadMagic, kVersionMismatch, kTruncated, kShapeMismatch, kChecksumMismatch };

  CheckpointError(Kind kind, const std::string& message);
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

const char* to_string(CheckpointError::Kind kind);

inline constexpr int kCheckpointVersion = 1;

/// One named tensor of a manifest + blob archive.
struct ArchiveEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
  bool trainable = false;
};

struct Archive {
  nlohmann::json header;  // free-form section stored under "header"
  std::vector<ArchiveEntry> entries;
};

/// Writes `<dir>/<stem>.json` (ordered tensor manifest with offsets, byte
/// lengths and the CRC32 of the blob) and `<dir>/<stem>.bin` (little-endian
/// float32 values concatenated in manifest order).
void write_archive(const std::filesystem::path& manifest_path, const std::filesystem::path& blob_path,
                   const std::string& format, const Archive& archive);
Archive read_archive(const std::filesystem::path& manifest_path, const std::filesystem::path& blob_path,
                     const std::string& format);

/// Checkpoint directory: manifest.json + weights.bin. Parameters first, then
/// batch-norm running statistics, all in ResnetCrowdModel order.
void save_checkpoint(ResnetCrowdModel& model, const std::filesystem::path& dir);
ResnetCrowdModel load_checkpoint(const std::filesystem::path& dir);

/// Sum of the element counts of the trainable entries in a checkpoint
/// manifest, computed from the JSON alone.
std::size_t manifest_parameter_count(const std::filesystem::path& dir);

}  // namespace resnetcrowd
