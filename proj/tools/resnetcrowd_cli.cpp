#include <CLI11.hpp>
#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "cli_config.hpp"
#include "resnetcrowd/anomaly.hpp"
#include "resnetcrowd/checkpoint.hpp"
#include "resnetcrowd/dataset.hpp"
#include "resnetcrowd/evaluation.hpp"
#include "resnetcrowd/folds.hpp"
#include "resnetcrowd/gradcheck_suite.hpp"
#include "resnetcrowd/manifest.hpp"
#include "resnetcrowd/synth.hpp"
#include "resnetcrowd/training.hpp"
#include "resnetcrowd/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace resnetcrowd;
using cli::RunConfig;
using cli::UsageError;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// A data or numeric failure detected by the command itself.
struct CommandFailure : std::runtime_error {
  CommandFailure(int code, const std::string& message) : std::runtime_error(message), code(code) {}
  int code;
};

struct CommonOptions {
  std::string config_file;
  std::string preset;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_file, "JSON configuration file");
  cmd->add_option("--preset", o.preset, "standard or desk; applied before the config file");
  cmd->add_option("--set", o.overrides, "key=value override, applied after the config file (repeatable)");
  cmd->add_option("--out", o.out, "output directory")->required();
}

RunConfig build_config(const CommonOptions& o) {
  RunConfig cfg;
  if (!o.preset.empty()) cfg.set_override("preset=\"" + o.preset + "\"");
  if (!o.config_file.empty()) cfg.merge_file(o.config_file);
  for (const auto& s : o.overrides) cfg.set_override(s);
  return cfg;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw CommandFailure(kData, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CommandFailure(kData, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw CommandFailure(kData, path.string() + ": " + e.what());
  }
}

void write_metadata(const fs::path& out, const std::string& command, const RunConfig& cfg,
                    const ResnetCrowdModel* model) {
  json meta = {
      {"command", command},
      {"seeds",
       {{"model", cfg.get("model.seed")},
        {"train", cfg.get("train.seed")},
        {"folds", cfg.get("train.fold_seed")},
        {"synth", cfg.get("synth.seed")},
        {"anomaly", cfg.get("anomaly.seed")}}},
      {"config", cfg.values()},
      {"config_hash", cfg.hash()},
      {"versions",
       {{"resnetcrowd", kVersion},
        {"compiler", __VERSION__},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
  };
  if (model) {
    const auto derived = model->parameter_count();
    meta["parameter_count"] = {
        {"derived", derived},
        {"reported", kReportedParameterCount},
        {"difference", static_cast<long long>(kReportedParameterCount) - static_cast<long long>(derived)},
        {"note",
         "derived count sums the layers as built (bias-free 7x7 stem and four 3x3 convolutions with batch-norm "
         "scale and shift, 1x1 heatmap convolution, three linear heads); the reported figure for the published "
         "network cannot be reproduced from its described layers"}};
  }
  write_json(out / "run_metadata.json", meta);
}

void log(const std::string& line) { std::cerr << line << std::endl; }

std::vector<PreparedSample> load_prepared(const fs::path& manifest_path, const RunConfig& cfg,
                                          DatasetManifest* manifest_out) {
  std::vector<std::string> warnings;
  DatasetManifest manifest = load_manifest(manifest_path, &warnings);
  for (const auto& w : warnings) log("warning: " + w);
  log("preparing " + std::to_string(manifest.samples.size()) + " samples");
  auto samples = prepare_dataset(manifest, manifest_path.parent_path(), cfg.model_config(), cfg.heatmap_options());
  if (manifest_out) *manifest_out = std::move(manifest);
  return samples;
}

int cmd_gen_synth(const CommonOptions& o) {
  const RunConfig cfg = build_config(o);
  const fs::path out(o.out);
  fs::create_directories(out);
  const auto spec = cfg.synth_spec();
  const auto manifest = synth_generate(spec, out);
  std::size_t violent = 0;
  for (const auto& s : manifest.samples) violent += s.violent();
  write_metadata(out, "gen-synth", cfg, nullptr);
  std::cout << "wrote " << manifest.samples.size() << " scenes (" << violent << " violent) to "
            << (out / "manifest.json").string() << '\n';
  return kOk;
}

json folds_to_json(const Folds& folds) {
  json j = json::array();
  for (const auto& f : folds) j.push_back(f);
  return j;
}

int cmd_train(const CommonOptions& o, const std::string& manifest_path) {
  const RunConfig cfg = build_config(o);
  const fs::path out(o.out);
  fs::create_directories(out);
  const auto model_cfg = cfg.model_config();
  const auto train_cfg = cfg.train_config();
  const auto mode = cfg.train_mode();

  DatasetManifest manifest;
  const auto samples = load_prepared(manifest_path, cfg, &manifest);
  const ResnetCrowdModel probe(model_cfg);
  write_metadata(out, "train", cfg, &probe);
  json run_info = {{"manifest", fs::absolute(manifest_path).lexically_normal().string()},
                   {"mode", mode},
                   {"config", cfg.values()}};

  const auto t0 = std::chrono::steady_clock::now();
  if (mode == "full") {
    TrainConfig tc = train_cfg;
    tc.checkpoint_dir = out / "model";
    fs::create_directories(tc.checkpoint_dir);
    ResnetCrowdModel model(model_cfg);
    train(model, samples, tc, [](const EpochRecord& r) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "epoch %zu total %.6g", r.epoch, r.total);
      log(buf);
    });
    run_info["runs"] = json::array();
    write_json(out / "run.json", run_info);
    std::cout << "final checkpoint: " << (tc.checkpoint_dir / "final").string() << '\n';
    return kOk;
  }

  std::vector<std::string> warnings;
  const auto folds = stratified_folds(manifest, cfg.folds(), cfg.get("train.fold_seed").get<std::uint64_t>(), &warnings);
  for (const auto& w : warnings) log("warning: " + w);
  run_info["folds"] = folds_to_json(folds);

  std::vector<AblationRun> runs;
  if (mode == "ablation") {
    runs = canonical_runs();
  } else {
    runs.push_back({train_cfg.mask == TaskMask::all() ? "multi_task" : "selected_tasks", train_cfg.mask});
  }
  json names = json::array();
  for (const auto& r : runs) names.push_back({{"name", r.name}, {"mask", mask_to_json(r.mask)}});
  run_info["runs"] = names;
  write_json(out / "run.json", run_info);

  run_ablation_suite(samples, folds, model_cfg, train_cfg, out / "runs", runs, log);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "trained " << runs.size() << " run(s) x " << folds.size() << " folds in " << static_cast<long>(secs)
            << " s; checkpoints under " << (out / "runs").string() << '\n';
  return kOk;
}

int cmd_eval(const CommonOptions& o, const std::string& run_dir, const std::string& manifest_override) {
  const fs::path run(run_dir);
  const json info = read_json(run / "run.json");
  RunConfig cfg;
  cfg.merge_json(info.at("config"));
  // Flags given to eval still apply (e.g. heatmap options are fixed by the run).
  for (const auto& s : o.overrides) cfg.set_override(s);
  if (!info.contains("folds")) throw UsageError("run " + run.string() + " was trained without folds");
  const fs::path manifest_path = manifest_override.empty() ? fs::path(info.at("manifest").get<std::string>())
                                                           : fs::path(manifest_override);
  const fs::path out(o.out);
  fs::create_directories(out);

  Folds folds;
  for (const auto& f : info.at("folds")) folds.push_back(f.get<std::vector<std::size_t>>());
  const auto samples = load_prepared(manifest_path, cfg, nullptr);

  std::vector<MetricsReport> reports;
  for (const auto& r : info.at("runs")) {
    const auto name = r.at("name").get<std::string>();
    const TaskMask mask = mask_from_json(r.at("mask"));
    std::vector<ResnetCrowdModel> models;
    for (std::size_t k = 0; k < folds.size(); ++k) {
      models.push_back(load_checkpoint(run / "runs" / name / ("fold_" + std::to_string(k + 1)) / "final"));
    }
    std::vector<std::vector<SamplePrediction>> preds;
    reports.push_back(cross_validate(name, mask, models, samples, folds, &preds));
    write_predictions_csv(out / ("predictions_" + name + ".csv"), preds);
  }
  const std::string overall = format_overall_table(reports);
  const std::string banded = format_banded_table(reports);
  write_json(out / "report.json", reports_to_json(reports));
  {
    std::ofstream t(out / "tables.txt");
    t << overall << '\n' << banded;
  }
  write_metadata(out, "eval", cfg, nullptr);
  std::cout << overall << '\n' << banded;
  return kOk;
}

int cmd_infer(const CommonOptions& o, const std::string& checkpoint, const std::string& image_path, bool heatmap,
              bool jet) {
  const RunConfig cfg = build_config(o);
  const fs::path out(o.out);
  fs::create_directories(out);
  ResnetCrowdModel model = load_checkpoint(checkpoint);
  const auto& mc = model.config();
  const Image img = load_png(image_path);
  const std::vector<std::vector<float>> frames{prepare_frame(img, mc)};
  const Tensor batch = Tensor::from_data({1, 3, mc.input_height, mc.input_width}, frames[0]);
  const ForwardOutput f = model.forward(batch, Mode::kEval);

  double integral = 0.0;
  for (float v : f.heatmap.data()) integral += v;
  const auto density = f.density.data();
  json result = {{"image", image_path},
                 {"count", {{"regression", f.count.item()}, {"heatmap", integral}}},
                 {"density", {{"level", argmax_level(density)},
                              {"probabilities", std::vector<float>(density.begin(), density.end())}}},
                 {"behaviour", {{"fight", f.behaviour.at(0)}, {"mob", f.behaviour.at(1)}}}};
  if (heatmap) {
    const fs::path png = out / "heatmap.png";
    save_heatmap_png(f.heatmap.data(), mc.heatmap_width, mc.heatmap_height, png, jet);
    result["heatmap_png"] = png.string();
  }
  write_json(out / "prediction.json", result);
  write_metadata(out, "infer", cfg, &model);
  std::cout << result.dump(2) << '\n';
  return kOk;
}

std::map<std::string, bool> read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CommandFailure(kData, "cannot read labels " + path.string());
  std::map<std::string, bool> labels;
  std::string line;
  std::getline(in, line);  // header: frame,anomalous
  for (std::size_t row = 2; std::getline(in, line); ++row) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw CommandFailure(kData, path.string() + ":" + std::to_string(row) + ": expected frame,anomalous");
    const std::string value = line.substr(comma + 1);
    if (value != "0" && value != "1") throw CommandFailure(kData, path.string() + ":" + std::to_string(row) + ": label must be 0 or 1");
    labels[line.substr(0, comma)] = value == "1";
  }
  return labels;
}

int cmd_anomaly(const CommonOptions& o, const std::string& checkpoint, const std::string& frames_dir,
                const std::string& labels_path) {
  const RunConfig cfg = build_config(o);
  const fs::path out(o.out);
  fs::create_directories(out);
  ResnetCrowdModel model = load_checkpoint(checkpoint);

  std::vector<fs::path> files;
  if (!fs::is_directory(frames_dir)) throw CommandFailure(kData, "not a directory: " + frames_dir);
  for (const auto& e : fs::directory_iterator(frames_dir)) {
    if (e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw CommandFailure(kData, "no PNG frames in " + frames_dir);

  std::vector<std::vector<float>> frames;
  for (const auto& f : files) frames.push_back(prepare_frame(load_png(f), model.config()));
  const FeatureMatrix features = extract_features(model, frames);

  std::unique_ptr<bool[]> flags;
  std::span<const bool> anomalous;
  if (!labels_path.empty()) {
    const auto labels = read_labels(labels_path);
    flags.reset(new bool[files.size()]);
    for (std::size_t i = 0; i < files.size(); ++i) {
      const auto it = labels.find(files[i].filename().string());
      if (it == labels.end()) throw CommandFailure(kData, "no label for frame " + files[i].filename().string());
      flags[i] = it->second;
    }
    anomalous = std::span<const bool>(flags.get(), files.size());
  }

  const AnomalyResult result = run_anomaly(features, anomalous, cfg.gmm_options());
  write_scores_csv(out / "scores.csv", result.scores, anomalous);
  json summary = {{"frames", files.size()},
                  {"components", result.fit.model.components()},
                  {"em_iterations", result.fit.iterations},
                  {"converged", result.fit.converged},
                  {"reseeds", result.fit.reseeds},
                  {"log_likelihood", result.fit.log_likelihood},
                  {"auc", result.auc ? json(*result.auc) : json(nullptr)}};
  write_json(out / "anomaly.json", summary);
  write_metadata(out, "anomaly", cfg, &model);
  std::cout << "scored " << files.size() << " frames";
  if (result.auc) std::cout << ", AUC " << *result.auc;
  std::cout << '\n';
  return kOk;
}

int cmd_check_grads(const CommonOptions& o, float corrupt_factor, bool skip_model) {
  const RunConfig cfg = build_config(o);
  const fs::path out(o.out);
  fs::create_directories(out);
  testing_hooks::set_conv_weight_grad_scale(corrupt_factor);
  GradCheckSuiteOptions opt;
  opt.seed = cfg.get("model.seed").get<std::uint64_t>();
  opt.include_model = !skip_model;
  const auto cases = run_gradcheck_suite(opt);
  testing_hooks::set_conv_weight_grad_scale(1.0f);

  bool ok = true;
  json j = json::array();
  for (const auto& c : cases) {
    ok = ok && c.report.passed;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-40s max rel err %.3e (tol %.0e)  %s", c.name.c_str(),
                  c.report.max_relative_error, c.report.tolerance, c.report.passed ? "ok" : "FAILED");
    std::cout << buf << '\n';
    json entries = json::array();
    for (const auto& e : c.report.entries) {
      entries.push_back({{"tensor", e.name}, {"max_relative_error", e.max_relative_error}, {"coordinates", e.coordinates_checked}});
    }
    j.push_back({{"case", c.name},
                 {"max_relative_error", c.report.max_relative_error},
                 {"tolerance", c.report.tolerance},
                 {"passed", c.report.passed},
                 {"tensors", entries}});
  }
  write_json(out / "gradcheck.json", j);
  write_metadata(out, "check-grads", cfg, nullptr);
  if (!ok) throw CommandFailure(kNumeric, "gradient check failed");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ResnetCrowd: multi-task crowd counting, density and violent-behaviour network"};
  app.footer("\n" + cli::describe_keys() +
             "\nPrecedence: defaults < --preset < --config file (its own \"preset\" first) < --set.\n"
             "Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.");
  app.require_subcommand(1);

  CommonOptions common;
  std::string manifest, run_dir, checkpoint, image, frames, labels;
  bool heatmap = false, jet = false, skip_model = false;
  float corrupt = 1.0f;

  auto* gen = app.add_subcommand("gen-synth", "render a synthetic annotated dataset");
  add_common(gen, common);
  auto* tr = app.add_subcommand("train", "train with cross-validation (ablation suite by default)");
  add_common(tr, common);
  tr->add_option("--manifest", manifest, "dataset manifest")->required();
  auto* ev = app.add_subcommand("eval", "evaluate a trained run on its held-out folds");
  add_common(ev, common);
  ev->add_option("--run", run_dir, "output directory of a train command")->required();
  ev->add_option("--manifest", manifest, "dataset manifest (defaults to the one used for training)");
  auto* inf = app.add_subcommand("infer", "run one image through a checkpoint");
  add_common(inf, common);
  inf->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  inf->add_option("--image", image, "PNG image")->required();
  inf->add_flag("--heatmap", heatmap, "write the predicted heatmap as PNG");
  inf->add_flag("--jet", jet, "colour the heatmap PNG with a jet map instead of grayscale");
  auto* an = app.add_subcommand("anomaly", "GMM outlier scoring of pooled features");
  add_common(an, common);
  an->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  an->add_option("--frames", frames, "directory of PNG frames (processed in name order)")->required();
  an->add_option("--labels", labels, "CSV frame,anomalous (0/1); the mixture is fitted on frames labelled 0");
  auto* cg = app.add_subcommand("check-grads", "finite-difference gradient checks");
  add_common(cg, common);
  cg->add_flag("--skip-model", skip_model, "check individual layers only");
  cg->add_option("--corrupt-conv-grad", corrupt, "scale conv weight gradients (negative control)")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen_synth(common);
    if (*tr) return cmd_train(common, manifest);
    if (*ev) return cmd_eval(common, run_dir, manifest);
    if (*inf) return cmd_infer(common, checkpoint, image, heatmap, jet);
    if (*an) return cmd_anomaly(common, checkpoint, frames, labels);
    if (*cg) return cmd_check_grads(common, corrupt, skip_model);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const CommandFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const json::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
