#include "resnetcrowd/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace resnetcrowd {

namespace fs = std::filesystem;
using nlohmann::json;

CheckpointError::CheckpointError(Kind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

const char* to_string(CheckpointError::Kind kind) {
  switch (kind) {
    case CheckpointError::Kind::kIo: return "io error";
    case CheckpointError::Kind::kMalformed: return "malformed manifest";
    case CheckpointError::Kind::kBadMagic: return "bad magic";
    case CheckpointError::Kind::kVersionMismatch: return "version mismatch";
    case CheckpointError::Kind::kTruncated: return "truncated blob";
    case CheckpointError::Kind::kShapeMismatch: return "shape mismatch";
    case CheckpointError::Kind::kChecksumMismatch: return "checksum mismatch";
  }
  return "unknown";
}

namespace {

using Kind = CheckpointError::Kind;

void append_le(std::string& out, float value) {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

float read_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

std::uint32_t crc_of(const std::string& bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(Kind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(Kind::kIo, "short write to " + path.string());
}

}  // namespace

void write_archive(const fs::path& manifest_path, const fs::path& blob_path, const std::string& format,
                   const Archive& archive) {
  std::string blob;
  json tensors = json::array();
  for (const auto& e : archive.entries) {
    if (shape_numel(e.shape) != e.values.size()) {
      throw CheckpointError(Kind::kShapeMismatch, "entry '" + e.name + "' has " + std::to_string(e.values.size()) +
                                                      " values for shape " + shape_to_string(e.shape));
    }
    const std::size_t offset = blob.size();
    for (float v : e.values) append_le(blob, v);
    tensors.push_back({{"name", e.name},
                       {"shape", e.shape},
                       {"offset", offset},
                       {"byte_length", blob.size() - offset},
                       {"trainable", e.trainable}});
  }
  json manifest = {{"format", format},
                   {"version", kCheckpointVersion},
                   {"blob", blob_path.filename().string()},
                   {"blob_bytes", blob.size()},
                   {"crc32", crc_of(blob)},
                   {"header", archive.header},
                   {"tensors", tensors}};
  write_file(blob_path, blob);
  write_file(manifest_path, manifest.dump(2) + "\n");
}

Archive read_archive(const fs::path& manifest_path, const fs::path& blob_path, const std::string& format) {
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::kMalformed, manifest_path.string() + ": " + e.what());
  }

  Archive archive;
  std::uint32_t expected_crc = 0;
  std::size_t running = 0;
  try {
    if (!manifest.is_object() || manifest.value("format", std::string()) != format) {
      throw CheckpointError(Kind::kBadMagic, "expected format '" + format + "' in " + manifest_path.string());
    }
    const int version = manifest.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError(Kind::kVersionMismatch, "file version " + std::to_string(version) + ", reader supports " +
                                                        std::to_string(kCheckpointVersion));
    }
    expected_crc = manifest.at("crc32").get<std::uint32_t>();
    archive.header = manifest.at("header");
    for (const auto& t : manifest.at("tensors")) {
      ArchiveEntry e;
      e.name = t.at("name").get<std::string>();
      e.shape = t.at("shape").get<Shape>();
      e.trainable = t.at("trainable").get<bool>();
      const auto offset = t.at("offset").get<std::size_t>();
      const auto length = t.at("byte_length").get<std::size_t>();
      for (auto d : e.shape) {
        if (d == 0) throw CheckpointError(Kind::kShapeMismatch, "entry '" + e.name + "' has a zero dimension");
      }
      if (offset != running || length != shape_numel(e.shape) * 4) {
        throw CheckpointError(Kind::kShapeMismatch, "entry '" + e.name + "' offset/length disagree with shape " +
                                                        shape_to_string(e.shape));
      }
      running += length;
      archive.entries.push_back(std::move(e));
    }
    if (manifest.at("blob_bytes").get<std::size_t>() != running) {
      throw CheckpointError(Kind::kShapeMismatch, "blob_bytes disagrees with the tensor list");
    }
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::kMalformed, manifest_path.string() + ": " + e.what());
  }

  const std::string blob = read_file(blob_path);
  if (blob.size() < running) {
    throw CheckpointError(Kind::kTruncated, blob_path.string() + " holds " + std::to_string(blob.size()) +
                                               " bytes, manifest needs " + std::to_string(running));
  }
  if (blob.size() > running) {
    throw CheckpointError(Kind::kShapeMismatch, blob_path.string() + " has trailing bytes beyond the manifest");
  }
  if (crc_of(blob) != expected_crc) throw CheckpointError(Kind::kChecksumMismatch, blob_path.string());

  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  std::size_t offset = 0;
  for (auto& e : archive.entries) {
    e.values.resize(shape_numel(e.shape));
    for (auto& v : e.values) {
      v = read_le(bytes + offset);
      offset += 4;
    }
  }
  return archive;
}

void save_checkpoint(ResnetCrowdModel& model, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CheckpointError(Kind::kIo, "cannot create " + dir.string() + ": " + ec.message());

  Archive archive;
  archive.header = {{"config", model.config().to_json()}, {"parameter_count", model.parameter_count()}};
  for (const auto& p : model.parameters()) {
    archive.entries.push_back({p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}, true});
  }
  for (const auto& b : model.buffers()) {
    archive.entries.push_back({b.name, {b.values->size()}, *b.values, false});
  }
  write_archive(dir / "manifest.json", dir / "weights.bin", "resnetcrowd-checkpoint", archive);
}

ResnetCrowdModel load_checkpoint(const fs::path& dir) {
  Archive archive = read_archive(dir / "manifest.json", dir / "weights.bin", "resnetcrowd-checkpoint");
  ResnetCrowdConfig config;
  try {
    config = ResnetCrowdConfig::from_json(archive.header.at("config"));
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::kMalformed, std::string("config echo: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(Kind::kShapeMismatch, std::string("config echo: ") + e.what());
  }

  ResnetCrowdModel model(config);
  auto params = model.parameters();
  auto buffers = model.buffers();
  if (archive.entries.size() != params.size() + buffers.size()) {
    throw CheckpointError(Kind::kShapeMismatch, "manifest lists " + std::to_string(archive.entries.size()) +
                                                    " tensors, model has " +
                                                    std::to_string(params.size() + buffers.size()));
  }
  std::size_t i = 0;
  for (auto& p : params) {
    const auto& e = archive.entries[i++];
    if (e.name != p.name || e.shape != p.tensor.shape() || !e.trainable) {
      throw CheckpointError(Kind::kShapeMismatch, "expected " + p.name + shape_to_string(p.tensor.shape()) +
                                                      ", manifest has " + e.name + shape_to_string(e.shape));
    }
    std::copy(e.values.begin(), e.values.end(), p.tensor.mutable_data().begin());
  }
  for (auto& b : buffers) {
    const auto& e = archive.entries[i++];
    if (e.name != b.name || e.shape != Shape{b.values->size()} || e.trainable) {
      throw CheckpointError(Kind::kShapeMismatch, "expected buffer " + b.name + ", manifest has " + e.name);
    }
    *b.values = e.values;
  }
  return model;
}

std::size_t manifest_parameter_count(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
    std::size_t total = 0;
    for (const auto& t : manifest.at("tensors")) {
      if (!t.at("trainable").get<bool>()) continue;
      std::size_t n = 1;
      for (const auto& d : t.at("shape")) n *= d.get<std::size_t>();
      total += n;
    }
    return total;
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::kMalformed, e.what());
  }
}

}  // namespace resnetcrowd
