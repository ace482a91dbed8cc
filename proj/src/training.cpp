#include "resnetcrowd/training.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "resnetcrowd/checkpoint.hpp"

namespace resnetcrowd {

using nlohmann::json;

TrainConfig TrainConfig::desk_scale() {
  TrainConfig c;
  c.epochs = 30;
  c.batch_size = 8;
  c.optimizer.learning_rate = 0.03;
  c.checkpoint_every = 0;
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (batch_size < 2) throw std::invalid_argument("train: batch_size must be >= 2 (batch normalisation)");
  if (mask.active_count() == 0) throw std::invalid_argument("train: at least one task must be enabled");
  if (!(optimizer.learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be positive");
  if (!(optimizer.epsilon > 0.0)) throw std::invalid_argument("train: epsilon must be positive");
  if (!(optimizer.weight_decay >= 0.0)) throw std::invalid_argument("train: weight_decay must be non-negative");
}

json mask_to_json(const TaskMask& mask) {
  return {{"behaviour", mask.behaviour},
          {"density", mask.density},
          {"count_reg", mask.count_reg},
          {"count_heatmap", mask.count_heatmap}};
}

TaskMask mask_from_json(const json& j) {
  TaskMask m;
  m.behaviour = j.at("behaviour").get<bool>();
  m.density = j.at("density").get<bool>();
  m.count_reg = j.at("count_reg").get<bool>();
  m.count_heatmap = j.at("count_heatmap").get<bool>();
  return m;
}

json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"mask", mask_to_json(mask)},
          {"optimizer", optimizer.to_json()},
          {"augment", augment},
          {"seed", seed},
          {"checkpoint_every", checkpoint_every}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.mask = mask_from_json(j.at("mask"));
  c.optimizer = AdaGradConfig::from_json(j.at("optimizer"));
  c.augment = j.at("augment").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.checkpoint_every = j.at("checkpoint_every").get<std::size_t>();
  return c;
}

namespace {

std::string format_loss(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", *v);
  return buf;
}

}  // namespace

std::string TrainHistory::to_csv() const {
  std::ostringstream out;
  out << "epoch,loss_behave,loss_density,loss_count_reg,loss_heatmap,loss_total\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << format_loss(e.behaviour) << ',' << format_loss(e.density) << ','
        << format_loss(e.count_reg) << ',' << format_loss(e.count_heatmap) << ',' << format_loss(e.total) << '\n';
  }
  return out.str();
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_csv();
}

TrainingError::TrainingError(std::size_t epoch, std::size_t batch, const std::string& cause,
                             std::filesystem::path last_good_checkpoint)
    : NumericError("non-finite value at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ": " +
                   cause +
                   (last_good_checkpoint.empty() ? std::string()
                                                 : "; last good checkpoint: " + last_good_checkpoint.string())),
      epoch_(epoch),
      batch_(batch),
      last_good_(std::move(last_good_checkpoint)) {}

std::vector<Parameter> trainable_parameters(const ResnetCrowdModel& model, const TaskMask& mask) {
  std::vector<Parameter> out;
  for (auto& p : model.parameters()) {
    bool active = false;
    switch (p.group) {
      case ParamGroup::kBackbone: active = true; break;
      case ParamGroup::kHeatmap: active = mask.count_heatmap; break;
      case ParamGroup::kCountReg: active = mask.count_reg; break;
      case ParamGroup::kBehaviour: active = mask.behaviour; break;
      case ParamGroup::kDensity: active = mask.density; break;
    }
    if (active) out.push_back(std::move(p));
  }
  return out;
}

LossParts compute_losses(const ForwardOutput& out, std::span<const PreparedSample> samples,
                         std::span<const std::size_t> indices, const TaskMask& mask) {
  LossParts parts;
  if (mask.behaviour) {
    std::vector<BehaviourLabel> labels;
    for (auto i : indices) labels.push_back(samples[i].behaviour);
    parts.behaviour = behaviour_loss(out.behaviour, labels);
  }
  if (mask.density) {
    std::vector<int> levels;
    for (auto i : indices) levels.push_back(samples[i].density_level);
    parts.density = density_loss_levels(out.density, levels);
  }
  if (mask.count_reg) {
    std::vector<float> counts;
    for (auto i : indices) counts.push_back(samples[i].count);
    parts.count_reg = count_reg_loss(out.count, counts);
  }
  if (mask.count_heatmap) {
    std::vector<float> target;
    target.reserve(out.heatmap.numel());
    for (auto i : indices) target.insert(target.end(), samples[i].heatmap.begin(), samples[i].heatmap.end());
    parts.count_heatmap = heatmap_loss(out.heatmap, target);
  }
  return parts;
}

namespace {

void save_training_state(ResnetCrowdModel& model, const AdaGrad& opt, const std::filesystem::path& dir) {
  save_checkpoint(model, dir);
  opt.save(dir);
}

}  // namespace

TrainHistory train(ResnetCrowdModel& model, std::span<const PreparedSample> samples, const TrainConfig& config,
                   const EpochCallback& on_epoch) {
  config.validate();
  if (samples.size() < 2) throw std::invalid_argument("train: need at least two samples");

  std::vector<PreparedSample> augmented;
  std::span<const PreparedSample> data = samples;
  if (config.augment) {
    augmented.assign(samples.begin(), samples.end());
    for (const auto& s : samples) augmented.push_back(flip_prepared(s, model.config()));
    data = augmented;
  }

  const auto params = trainable_parameters(model, config.mask);
  AdaGrad opt(config.optimizer);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  std::filesystem::path last_good;
  TrainHistory history;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::array<double, 4> part_sums{};
    double total_sum = 0.0;

    // A trailing batch of one cannot be normalised, so it joins the previous one.
    std::vector<std::size_t> bounds;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) bounds.push_back(start);
    if (bounds.size() > 1 && order.size() - bounds.back() == 1) bounds.pop_back();
    bounds.push_back(order.size());

    for (std::size_t batch = 0; batch + 1 < bounds.size(); ++batch) {
      const std::size_t start = bounds[batch], end = bounds[batch + 1];
      const std::span<const std::size_t> idx(order.data() + start, end - start);

      // Keep BN statistics so a failed step leaves the model untouched.
      std::vector<std::vector<float>> saved_stats;
      for (const auto& b : model.buffers()) saved_stats.push_back(*b.values);
      try {
        zero_grads(params);
        const ForwardOutput out = model.forward(batch_images(data, idx, model.config()), Mode::kTrain);
        const LossParts parts = compute_losses(out, data, idx, config.mask);
        const Tensor loss = total_loss(parts, config.mask);
        loss.backward();
        opt.step(params);

        const double n = static_cast<double>(idx.size());
        for (std::size_t t = 0; t < kAllTasks.size(); ++t) {
          if (config.mask.enabled(kAllTasks[t])) part_sums[t] += n * parts.get(kAllTasks[t]).item();
        }
        total_sum += n * loss.item();
      } catch (const NumericError& e) {
        auto buffers = model.buffers();
        for (std::size_t b = 0; b < buffers.size(); ++b) *buffers[b].values = saved_stats[b];
        zero_grads(params);
        std::filesystem::path dump;
        if (!config.checkpoint_dir.empty()) {
          dump = config.checkpoint_dir / "last_good";
          save_training_state(model, opt, dump);
        }
        throw TrainingError(epoch, batch + 1, e.what(), dump);
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    const double n = static_cast<double>(data.size());
    std::array<std::optional<double>*, 4> slots{&rec.behaviour, &rec.density, &rec.count_reg, &rec.count_heatmap};
    for (std::size_t t = 0; t < kAllTasks.size(); ++t) {
      if (config.mask.enabled(kAllTasks[t])) *slots[t] = part_sums[t] / n;
    }
    rec.total = total_sum / n;
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (!config.checkpoint_dir.empty() && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 &&
        epoch != config.epochs) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04zu", epoch);
      save_training_state(model, opt, config.checkpoint_dir / name);
      last_good = config.checkpoint_dir / name;
    }
  }
  zero_grads(params);
  if (!config.checkpoint_dir.empty()) {
    save_training_state(model, opt, config.checkpoint_dir / "final");
    history.write_csv(config.checkpoint_dir / "history.csv");
  }
  return history;
}

const std::vector<AblationRun>& canonical_runs() {
  static const std::vector<AblationRun> runs{
      {"single_behaviour", TaskMask::only(Task::kBehaviour)},
      {"single_density", TaskMask::only(Task::kDensity)},
      {"single_count_reg", TaskMask::only(Task::kCountReg)},
      {"single_count_heatmap", TaskMask::only(Task::kCountHeatmap)},
      {"multi_task", TaskMask::all()},
  };
  return runs;
}

std::vector<RunArtifacts> run_ablation_suite(std::span<const PreparedSample> samples, const Folds& folds,
                                             const ResnetCrowdConfig& model_config, const TrainConfig& base,
                                             const std::filesystem::path& out_dir, std::span<const AblationRun> runs,
                                             const std::function<void(const std::string&)>& log) {
  if (runs.empty()) runs = canonical_runs();
  if (folds.size() < 2) throw std::invalid_argument("ablation: need at least two folds");
  std::vector<RunArtifacts> results;
  for (const auto& run : runs) {
    RunArtifacts art;
    art.run = run;
    for (std::size_t k = 0; k < folds.size(); ++k) {
      if (log) log(run.name + ": fold " + std::to_string(k + 1) + "/" + std::to_string(folds.size()));
      const auto train_idx = training_indices(folds, k);
      const auto train_set = select(samples, train_idx);
      TrainConfig cfg = base;
      cfg.mask = run.mask;
      cfg.checkpoint_dir = out_dir.empty() ? std::filesystem::path()
                                           : out_dir / run.name / ("fold_" + std::to_string(k + 1));
      if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);
      ResnetCrowdModel model(model_config);
      art.histories.push_back(train(model, train_set, cfg));
      art.fold_models.push_back(std::move(model));
    }
    results.push_back(std::move(art));
  }
  return results;
}

}  // namespace resnetcrowd
