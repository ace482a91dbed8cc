#include "resnetcrowd/manifest.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "resnetcrowd/density.hpp"

namespace resnetcrowd {

using nlohmann::json;

int CrowdSample::density_level() const { return density_level_from_count(static_cast<std::int64_t>(count())); }

ManifestError::ManifestError(long record, std::string field, const std::string& message)
    : std::runtime_error((record >= 0 ? "manifest record " + std::to_string(record) : std::string("manifest")) +
                         ", field '" + field + "': " + message),
      record_(record),
      field_(std::move(field)) {}

namespace {

template <typename T>
T field_as(const json& obj, const char* key, long record) {
  if (!obj.contains(key)) throw ManifestError(record, key, "missing");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ManifestError(record, key, e.what());
  }
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path, std::vector<std::string>* warnings,
                              const ManifestLoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw ManifestError(-1, "<file>", "cannot open " + path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::exception& e) {
    throw ManifestError(-1, "<file>", e.what());
  }
  if (!root.is_object()) throw ManifestError(-1, "<root>", "expected an object");
  auto warn = [&](const std::string& message) {
    if (warnings) warnings->push_back(message);
  };

  static const std::set<std::string> top_keys{"version", "resolution", "provenance", "samples"};
  static const std::set<std::string> sample_keys{"image", "heads", "fight", "mob", "count", "density_level"};
  for (const auto& [key, value] : root.items()) {
    if (!top_keys.count(key)) warn("ignoring unknown top-level field '" + key + "'");
  }

  DatasetManifest m;
  m.version = field_as<int>(root, "version", -1);
  if (m.version != 1) throw ManifestError(-1, "version", "unsupported version " + std::to_string(m.version));
  const json resolution = field_as<json>(root, "resolution", -1);
  m.width = field_as<std::size_t>(resolution, "w", -1);
  m.height = field_as<std::size_t>(resolution, "h", -1);
  if (m.width == 0 || m.height == 0) throw ManifestError(-1, "resolution", "must be positive");
  m.provenance = field_as<std::string>(root, "provenance", -1);
  if (m.provenance != "synthetic" && m.provenance != "external") {
    throw ManifestError(-1, "provenance", "expected 'synthetic' or 'external'");
  }

  const json samples = field_as<json>(root, "samples", -1);
  if (!samples.is_array()) throw ManifestError(-1, "samples", "expected an array");
  std::set<std::string> seen;
  const auto base = path.parent_path();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const long rec = static_cast<long>(i);
    const json& s = samples[i];
    if (!s.is_object()) throw ManifestError(rec, "<record>", "expected an object");
    for (const auto& [key, value] : s.items()) {
      if (!sample_keys.count(key)) warn("record " + std::to_string(i) + ": ignoring unknown field '" + key + "'");
    }
    CrowdSample sample;
    sample.image = field_as<std::string>(s, "image", rec);
    if (sample.image.empty()) throw ManifestError(rec, "image", "empty path");
    if (!seen.insert(sample.image).second) throw ManifestError(rec, "image", "duplicate path " + sample.image);
    if (options.check_images && !std::filesystem::exists(base / sample.image)) {
      throw ManifestError(rec, "image", "file not found: " + (base / sample.image).string());
    }
    const json heads = field_as<json>(s, "heads", rec);
    if (!heads.is_array()) throw ManifestError(rec, "heads", "expected an array of [x,y] pairs");
    for (const auto& h : heads) {
      if (!h.is_array() || h.size() != 2 || !h[0].is_number() || !h[1].is_number()) {
        throw ManifestError(rec, "heads", "expected [x,y] pairs");
      }
      Point p{h[0].get<double>(), h[1].get<double>()};
      if (!(p.x >= 0 && p.y >= 0 && p.x < static_cast<double>(m.width) && p.y < static_cast<double>(m.height))) {
        throw ManifestError(rec, "heads", "head outside the declared resolution");
      }
      sample.heads.push_back(p);
    }
    sample.fight = field_as<bool>(s, "fight", rec);
    sample.mob = field_as<bool>(s, "mob", rec);
    if (s.contains("count") && field_as<std::size_t>(s, "count", rec) != sample.count()) {
      throw ManifestError(rec, "count", "does not match the number of heads (" + std::to_string(sample.count()) + ")");
    }
    if (s.contains("density_level") && field_as<int>(s, "density_level", rec) != sample.density_level()) {
      throw ManifestError(rec, "density_level", "does not match the head count");
    }
    m.samples.push_back(std::move(sample));
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  json samples = json::array();
  for (const auto& s : manifest.samples) {
    json heads = json::array();
    for (const auto& h : s.heads) heads.push_back({h.x, h.y});
    samples.push_back({{"image", s.image}, {"heads", heads}, {"fight", s.fight}, {"mob", s.mob}});
  }
  json root = {{"version", manifest.version},
               {"resolution", {{"w", manifest.width}, {"h", manifest.height}}},
               {"provenance", manifest.provenance},
               {"samples", samples}};
  std::ofstream out(path);
  if (!out) throw ManifestError(-1, "<file>", "cannot write " + path.string());
  out << root.dump(1) << '\n';
}

}  // namespace resnetcrowd
