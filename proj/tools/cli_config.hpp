#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "resnetcrowd/gmm.hpp"
#include "resnetcrowd/heatmap.hpp"
#include "resnetcrowd/model.hpp"
#include "resnetcrowd/synth.hpp"
#include "resnetcrowd/training.hpp"

namespace resnetcrowd::cli {

/// Bad command line or configuration (exit code 1).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KeySpec {
  std::string key;
  nlohmann::json default_value;
  std::string help;
};

/// Every recognised configuration key with its default.
const std::vector<KeySpec>& config_keys();

/// Lines for --help: "key = default  help".
std::string describe_keys();

/// Flat key -> value map. Precedence, lowest first: built-in defaults, the
/// preset named by `preset`, the config file, then --set overrides.
class RunConfig {
 public:
  RunConfig();

  /// Accepts nested objects ({"train": {"epochs": 5}}) or dotted keys.
  void merge_file(const std::filesystem::path& path);
  void merge_json(const nlohmann::json& j, const std::string& prefix = "");
  /// key=value; the value is parsed as JSON, falling back to a string.
  void set_override(const std::string& assignment);
  /// Applies the reduced-scale values for `preset` ("standard" or "desk").
  void apply_preset(const std::string& preset);

  const nlohmann::json& get(const std::string& key) const;
  const nlohmann::json& values() const { return values_; }
  std::string hash() const;

  ResnetCrowdConfig model_config() const;
  HeatmapOptions heatmap_options() const;
  TrainConfig train_config() const;
  SynthSpec synth_spec() const;
  GmmOptions gmm_options() const;
  std::size_t folds() const;
  std::string train_mode() const;

 private:
  void set(const std::string& key, const nlohmann::json& value);
  nlohmann::json values_;
};

TaskMask parse_tasks(const std::string& spec);

}  // namespace resnetcrowd::cli
