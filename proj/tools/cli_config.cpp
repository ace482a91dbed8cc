#include "cli_config.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace resnetcrowd::cli {

using nlohmann::json;

const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> keys{
      {"preset", "standard", "standard (320x180, 500 epochs, batch 40) or desk (20 synthetic scenes, 160x90, 30 epochs, batch 8, lr 0.03)"},
      {"model.input_width", 320, "network input width; heatmaps are half this"},
      {"model.input_height", 180, "network input height"},
      {"model.seed", 0, "weight initialisation seed"},
      {"heatmap.method", "adaptive", "adaptive (k-nearest-neighbour widths) or fixed"},
      {"heatmap.k", 3, "neighbours averaged for adaptive widths"},
      {"heatmap.beta", 0.3, "adaptive width = beta * mean neighbour distance"},
      {"heatmap.fixed_sigma", 4.0, "width in heatmap pixels for the fixed method and sparse scenes"},
      {"heatmap.min_sigma", 0.5, "lower bound on adaptive widths"},
      {"train.mode", "ablation", "ablation (5 runs x k folds), multi_task (k folds) or full (all data, no folds)"},
      {"train.folds", 5, "cross-validation folds"},
      {"train.fold_seed", 0, "fold assignment seed"},
      {"train.epochs", 500, "epochs per fold"},
      {"train.batch_size", 40, "mini-batch size (>= 2)"},
      {"train.tasks", "all", "tasks for multi_task/full modes: all or a comma list of behaviour,density,count_reg,count_heatmap"},
      {"train.learning_rate", 0.01, "AdaGrad learning rate"},
      {"train.epsilon", 1e-8, "AdaGrad epsilon"},
      {"train.weight_decay", 1e-4, "L2 coefficient on conv/linear weights"},
      {"train.augment", true, "add horizontally mirrored copies of the training set"},
      {"train.seed", 0, "shuffle seed"},
      {"train.checkpoint_every", 50, "epochs between intermediate checkpoints (0: final only)"},
      {"synth.num_images", 100, "scenes to generate"},
      {"synth.density_mix", json::array({0.2, 0.2, 0.2, 0.2, 0.2}), "relative frequency of density levels 1..5"},
      {"synth.violent_fraction", 0.5, "fraction of scenes labelled Fight and/or Mob"},
      {"synth.seed", 0, "generator seed"},
      {"synth.width", 640, "rendered width"},
      {"synth.height", 360, "rendered height"},
      {"synth.max_count", 300, "largest head count of a level-5 scene"},
      {"anomaly.components", 2, "mixture components"},
      {"anomaly.seed", 0, "EM seeding seed"},
      {"anomaly.tolerance", 1e-6, "EM stops when the mean log-likelihood gains less than this"},
      {"anomaly.max_iterations", 200, "EM iteration cap"},
      {"anomaly.variance_floor", 1e-6, "minimum per-dimension variance"},
  };
  return keys;
}

std::string describe_keys() {
  std::ostringstream out;
  out << "Configuration keys (set in a JSON --config file or with --set key=value):\n";
  for (const auto& k : config_keys()) {
    out << "  " << k.key << " = " << k.default_value.dump() << "\n      " << k.help << '\n';
  }
  return out.str();
}

RunConfig::RunConfig() : values_(json::object()) {
  for (const auto& k : config_keys()) values_[k.key] = k.default_value;
}

void RunConfig::set(const std::string& key, const json& value) {
  const auto it = std::find_if(config_keys().begin(), config_keys().end(), [&](const KeySpec& k) { return k.key == key; });
  if (it == config_keys().end()) throw UsageError("unknown configuration key '" + key + "'");
  const json& def = it->default_value;
  const bool numeric_ok = def.is_number() && value.is_number() && !(def.is_number_integer() && value.is_number_float());
  if (def.type() != value.type() && !numeric_ok) {
    throw UsageError("configuration key '" + key + "' expects " + std::string(def.type_name()) + ", got " +
                     value.dump());
  }
  if (def.is_number_integer() && value.is_number_integer() && value.get<long long>() < 0) {
    throw UsageError("configuration key '" + key + "' must be non-negative");
  }
  if (key == "preset") apply_preset(value.get<std::string>());
  values_[key] = value;
}

void RunConfig::merge_json(const json& j, const std::string& prefix) {
  if (!j.is_object()) throw UsageError("configuration must be a JSON object");
  // The preset goes first so explicit keys in the same file win over it.
  if (prefix.empty() && j.contains("preset")) set("preset", j.at("preset"));
  for (const auto& [key, value] : j.items()) {
    const std::string full = prefix.empty() ? key : prefix + "." + key;
    if (full == "preset") continue;
    if (value.is_object()) {
      merge_json(value, full);
    } else {
      set(full, value);
    }
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config file " + path.string() + ": " + e.what());
  }
  merge_json(j);
}

void RunConfig::set_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  set(key, value);
}

void RunConfig::apply_preset(const std::string& preset) {
  if (preset == "standard") {
    for (const auto& k : config_keys()) {
      if (k.key.rfind("model.input", 0) == 0 || k.key.rfind("train.", 0) == 0 || k.key == "synth.num_images") {
        values_[k.key] = k.default_value;
      }
    }
  } else if (preset == "desk") {
    const auto desk = ResnetCrowdConfig::desk_scale();
    const auto train = TrainConfig::desk_scale();
    values_["model.input_width"] = desk.input_width;
    values_["model.input_height"] = desk.input_height;
    values_["train.epochs"] = train.epochs;
    values_["train.batch_size"] = train.batch_size;
    values_["train.learning_rate"] = train.optimizer.learning_rate;
    values_["train.checkpoint_every"] = train.checkpoint_every;
    values_["synth.num_images"] = 20;
  } else {
    throw UsageError("unknown preset '" + preset + "' (expected standard or desk)");
  }
}

const json& RunConfig::get(const std::string& key) const {
  if (!values_.contains(key)) throw UsageError("unknown configuration key '" + key + "'");
  return values_.at(key);
}

std::string RunConfig::hash() const {
  const std::string canonical = values_.dump();
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(canonical.data()), static_cast<uInt>(canonical.size()));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

ResnetCrowdConfig RunConfig::model_config() const {
  auto c = ResnetCrowdConfig::with_input(get("model.input_width").get<std::size_t>(),
                                         get("model.input_height").get<std::size_t>());
  c.seed = get("model.seed").get<std::uint64_t>();
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return c;
}

HeatmapOptions RunConfig::heatmap_options() const {
  HeatmapOptions h;
  const auto method = get("heatmap.method").get<std::string>();
  if (method == "adaptive") {
    h.method = KernelMethod::kGeometryAdaptive;
  } else if (method == "fixed") {
    h.method = KernelMethod::kFixed;
  } else {
    throw UsageError("heatmap.method must be adaptive or fixed");
  }
  h.k = get("heatmap.k").get<std::size_t>();
  h.beta = get("heatmap.beta").get<double>();
  h.fixed_sigma = get("heatmap.fixed_sigma").get<double>();
  h.min_sigma = get("heatmap.min_sigma").get<double>();
  if (!(h.fixed_sigma > 0.0 && h.min_sigma > 0.0 && h.beta > 0.0)) throw UsageError("heatmap widths must be positive");
  return h;
}

TaskMask parse_tasks(const std::string& spec) {
  if (spec == "all") return TaskMask::all();
  TaskMask m = TaskMask::none();
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "behaviour") {
      m.behaviour = true;
    } else if (item == "density") {
      m.density = true;
    } else if (item == "count_reg") {
      m.count_reg = true;
    } else if (item == "count_heatmap") {
      m.count_heatmap = true;
    } else {
      throw UsageError("unknown task '" + item + "' in train.tasks");
    }
  }
  if (m.active_count() == 0) throw UsageError("train.tasks selects no task");
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = get("train.epochs").get<std::size_t>();
  t.batch_size = get("train.batch_size").get<std::size_t>();
  t.mask = parse_tasks(get("train.tasks").get<std::string>());
  t.optimizer.learning_rate = get("train.learning_rate").get<double>();
  t.optimizer.epsilon = get("train.epsilon").get<double>();
  t.optimizer.weight_decay = get("train.weight_decay").get<double>();
  t.augment = get("train.augment").get<bool>();
  t.seed = get("train.seed").get<std::uint64_t>();
  t.checkpoint_every = get("train.checkpoint_every").get<std::size_t>();
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return t;
}

SynthSpec RunConfig::synth_spec() const {
  SynthSpec s;
  s.num_images = get("synth.num_images").get<std::size_t>();
  const auto mix = get("synth.density_mix");
  if (!mix.is_array() || mix.size() != 5) throw UsageError("synth.density_mix needs five numbers");
  for (std::size_t i = 0; i < 5; ++i) {
    if (!mix[i].is_number()) throw UsageError("synth.density_mix needs five numbers");
    s.density_mix[i] = mix[i].get<double>();
  }
  s.violent_fraction = get("synth.violent_fraction").get<double>();
  s.seed = get("synth.seed").get<std::uint64_t>();
  s.width = get("synth.width").get<std::size_t>();
  s.height = get("synth.height").get<std::size_t>();
  s.max_count = get("synth.max_count").get<std::size_t>();
  return s;
}

GmmOptions RunConfig::gmm_options() const {
  GmmOptions g;
  g.components = get("anomaly.components").get<std::size_t>();
  g.seed = get("anomaly.seed").get<std::uint64_t>();
  g.tolerance = get("anomaly.tolerance").get<double>();
  g.max_iterations = get("anomaly.max_iterations").get<std::size_t>();
  g.variance_floor = get("anomaly.variance_floor").get<double>();
  if (g.components == 0) throw UsageError("anomaly.components must be positive");
  if (!(g.variance_floor > 0.0)) throw UsageError("anomaly.variance_floor must be positive");
  return g;
}

std::size_t RunConfig::folds() const {
  const auto k = get("train.folds").get<std::size_t>();
  if (k < 2) throw UsageError("train.folds must be at least 2");
  return k;
}

std::string RunConfig::train_mode() const {
  const auto mode = get("train.mode").get<std::string>();
  if (mode != "ablation" && mode != "multi_task" && mode != "full") {
    throw UsageError("train.mode must be ablation, multi_task or full");
  }
  return mode;
}

}  // namespace resnetcrowd::cli
