// Acceptance checks. Each criterion prints one PASS/FAIL line.
//   acceptance [--criterion N] [--work DIR] [--cli PATH]

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "resnetcrowd/anomaly.hpp"
#include "resnetcrowd/checkpoint.hpp"
#include "resnetcrowd/dataset.hpp"
#include "resnetcrowd/density.hpp"
#include "resnetcrowd/evaluation.hpp"
#include "resnetcrowd/gmm.hpp"
#include "resnetcrowd/gradcheck_suite.hpp"
#include "resnetcrowd/heatmap.hpp"
#include "resnetcrowd/losses.hpp"
#include "resnetcrowd/metrics.hpp"
#include "resnetcrowd/optimizer.hpp"
#include "resnetcrowd/synth.hpp"
#include "resnetcrowd/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace resnetcrowd;

namespace {

// Pinned thresholds.
constexpr double kLayerGradTolerance = 1e-3;
constexpr double kModelGradTolerance = 1e-2;
constexpr double kGradBudgetSeconds = 5 * 60;
constexpr std::size_t kDerivedParameterCount = 158089;
constexpr double kLossTolerance = 1e-6;
constexpr double kOptimizerTolerance = 1e-7;
constexpr double kHeatmapMassTolerance = 0.02;
constexpr double kAucTolerance = 1e-9;
constexpr double kLossReduction = 0.90;
constexpr double kDensityChance = 0.2;
constexpr double kLearningBudgetSeconds = 30 * 60;
constexpr double kAnomalyAuc = 0.9;
constexpr double kShuffledBand = 0.1;

struct Context {
  fs::path work;
  fs::path cli;
};

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects failed sub-checks; the first few are reported.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (failures_.size() < 4) failures_.push_back(what);
    ++failed_;
  }
  Outcome outcome(const std::string& summary) const {
    if (failed_ == 0) return {true, summary};
    std::string d = summary + "; " + std::to_string(failed_) + " failed check(s):";
    for (const auto& f : failures_) d += " [" + f + "]";
    return {false, d};
  }

 private:
  std::vector<std::string> failures_;
  std::size_t failed_ = 0;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path fresh_dir(const Context& ctx, const std::string& name) {
  const fs::path dir = ctx.work / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

/// Runs the command-line tool; output goes to `log`.
int run_cli(const Context& ctx, const std::string& args, const fs::path& log) {
  if (ctx.cli.empty() || !fs::exists(ctx.cli)) throw std::runtime_error("command-line tool not found: " + ctx.cli.string());
  const std::string cmd = quote(ctx.cli) + " " + args + " >>" + quote(log) + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void require_cli(const Context& ctx, const std::string& args, const fs::path& log) {
  const int code = run_cli(ctx, args, log);
  if (code != 0) throw std::runtime_error("command failed with exit " + std::to_string(code) + ", see " + log.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return json::parse(in);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Scenes rendered at twice the model input and prepared in memory.
std::vector<PreparedSample> synthetic_samples(std::size_t n, std::uint64_t seed, const ResnetCrowdConfig& config) {
  SynthSpec spec;
  spec.num_images = n;
  spec.seed = seed;
  spec.width = 2 * config.input_width;
  spec.height = 2 * config.input_height;
  const auto plan = synth_plan(spec);
  std::vector<PreparedSample> out;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    out.push_back(prepare_sample(plan[i], synth_render(spec, plan[i], i), spec.width, spec.height, config, {}));
  }
  return out;
}

bool same_bits(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

// 1. Finite-difference gradients.
Outcome gradients(const Context&) {
  Checks c;
  GradCheckSuiteOptions opt;
  opt.model_coordinates = 0;  // every parameter
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = run_gradcheck_suite(opt);
  const double secs = seconds_since(t0);
  double worst_layer = 0.0, model_err = -1.0;
  std::size_t layers = 0, checked = 0, skipped = 0;
  for (const auto& k : cases) {
    if (k.name.rfind("full model", 0) == 0) {
      model_err = k.report.max_relative_error;
      for (const auto& e : k.report.entries) {
        checked += e.coordinates_checked;
        skipped += e.coordinates_skipped;
      }
      c.expect(k.report.max_relative_error < kModelGradTolerance, k.name + " " + fmt("%.3e", model_err));
    } else {
      ++layers;
      worst_layer = std::max(worst_layer, k.report.max_relative_error);
      c.expect(k.report.max_relative_error < kLayerGradTolerance,
               k.name + " " + fmt("%.3e", k.report.max_relative_error));
    }
  }
  c.expect(layers >= 12, "too few layer cases");
  c.expect(model_err >= 0.0, "no full-model case");
  c.expect(checked + skipped == kDerivedParameterCount, "model case did not visit every parameter");
  c.expect(secs < kGradBudgetSeconds, "runtime " + fmt("%.0f s", secs));
  return c.outcome(std::to_string(layers) + " layer cases max " + fmt("%.2e", worst_layer) + ", full model " +
                   fmt("%.2e", model_err) + " over " + std::to_string(checked) + " coordinates (" +
                   std::to_string(skipped) + " kink-skipped), " + fmt("%.0f s", secs));
}

// 2. Architecture and parameter count.
Outcome architecture(const Context& ctx) {
  Checks c;
  const fs::path dir = fresh_dir(ctx, "architecture");
  ResnetCrowdModel model(ResnetCrowdConfig{});
  std::mt19937_64 rng(2);
  std::normal_distribution<float> d;
  std::vector<float> pixels(3 * 180 * 320);
  for (auto& v : pixels) v = d(rng);
  const auto out = model.forward(Tensor::from_data({1, 3, 180, 320}, pixels), Mode::kEval);
  c.expect(out.heatmap.shape() == Shape{1, 1, 90, 160}, "heatmap shape " + shape_to_string(out.heatmap.shape()));
  c.expect(out.count.shape() == Shape{1, 1}, "count shape");
  c.expect(out.behaviour.shape() == Shape{1, 2}, "behaviour shape");
  c.expect(out.density.shape() == Shape{1, 5}, "density shape");

  std::size_t convs = 0;
  for (const auto& p : model.parameters()) convs += p.group == ParamGroup::kBackbone && p.tensor.rank() == 4;
  c.expect(convs == 5, std::to_string(convs) + " backbone convolutions");

  // Layer arithmetic: bias-free convolutions with batch-norm scale and shift, then the heads.
  const std::size_t ch = 64;
  const std::size_t arithmetic = (3 * ch * 7 * 7 + 2 * ch) + 4 * (ch * ch * 3 * 3 + 2 * ch) + (ch + 1) +
                                 (ch + 1) + 2 * (ch + 1) + 5 * (ch + 1);
  c.expect(arithmetic == kDerivedParameterCount, "layer arithmetic " + std::to_string(arithmetic));
  c.expect(model.parameter_count() == arithmetic, "parameter_count " + std::to_string(model.parameter_count()));

  const fs::path ckpt = dir / "checkpoint";
  save_checkpoint(model, ckpt);
  std::size_t walked = 0;
  const json manifest = read_json(ckpt / "manifest.json");
  for (const auto& t : manifest.at("tensors")) {
    if (!t.at("trainable").get<bool>()) continue;
    std::size_t n = 1;
    for (const auto& s : t.at("shape")) n *= s.get<std::size_t>();
    walked += n;
  }
  c.expect(walked == model.parameter_count(), "manifest walk " + std::to_string(walked));

  // The deviation from the published figure is recorded in run metadata.
  const fs::path log = dir / "cli.log";
  require_cli(ctx, "gen-synth --set synth.num_images=2 --out " + quote(dir / "data"), log);
  fs::path image;
  for (const auto& e : fs::directory_iterator(dir / "data" / "images")) {
    if (image.empty() || e.path() < image) image = e.path();
  }
  require_cli(ctx, "infer --checkpoint " + quote(ckpt) + " --image " + quote(image) + " --out " + quote(dir / "infer"),
              log);
  const json meta = read_json(dir / "infer" / "run_metadata.json").at("parameter_count");
  c.expect(meta.at("derived").get<std::size_t>() == walked, "metadata derived count");
  c.expect(meta.at("reported").get<std::size_t>() == 180934, "metadata reported count");
  c.expect(meta.at("difference").get<long long>() == 180934 - static_cast<long long>(walked), "metadata difference");
  c.expect(!meta.at("note").get<std::string>().empty(), "metadata note");
  return c.outcome("320x180 -> 160x90 heatmap, 5 convolutions, " + std::to_string(walked) +
                   " parameters by arithmetic and manifest walk, reported 180934 documented");
}

// 3. Loss oracles.
double oracle_bce(std::span<const float> p, std::span<const float> t) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::min(std::max(static_cast<double>(p[i]), 1e-7), 1.0 - 1e-7);
    s -= t[i] * std::log(q) + (1.0 - t[i]) * std::log(1.0 - q);
  }
  return s / static_cast<double>(p.size());
}

double oracle_density(std::span<const float> p, std::span<const int> levels) {
  double s = 0.0;
  for (std::size_t r = 0; r < levels.size(); ++r) {
    for (int k = 1; k <= 5; ++k) {
      const double y = k == levels[r] ? 1.0 : 0.0;
      const double q = std::min(std::max(static_cast<double>(p[r * 5 + (k - 1)]), 1e-7), 1.0 - 1e-7);
      s -= y * std::log(q);
    }
  }
  return s / static_cast<double>(levels.size());
}

double oracle_count(std::span<const float> p, std::span<const float> c) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (static_cast<double>(p[i]) - c[i]) * (static_cast<double>(p[i]) - c[i]);
  return s / static_cast<double>(p.size());
}

double rel_err(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-12); }

Outcome loss_oracles(const Context&) {
  Checks c;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  std::size_t masks_checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 6, h = 1 + rng() % 6, w = 1 + rng() % 8;
    auto prob = [&] {
      const double r = u(rng);
      // Some probabilities land in the clamped region.
      if (r < 0.03) return 0.0f;
      if (r < 0.06) return 1.0f;
      return static_cast<float>(u(rng));
    };
    std::vector<float> beh(n * 2), dens(n * 5), cnt(n), hm(n * h * w), hm_t(n * h * w), beh_t(n * 2), counts(n);
    std::vector<BehaviourLabel> labels(n);
    std::vector<int> levels(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = {rng() % 2 == 1, rng() % 2 == 1};
      beh_t[2 * i] = labels[i].fight;
      beh_t[2 * i + 1] = labels[i].mob;
      beh[2 * i] = prob();
      beh[2 * i + 1] = prob();
      levels[i] = 1 + static_cast<int>(rng() % 5);
      double logits[5], z = 0.0;
      for (double& l : logits) z += (l = std::exp(6.0 * (u(rng) - 0.5)));
      for (int k = 0; k < 5; ++k) dens[i * 5 + k] = static_cast<float>(logits[k] / z);
      counts[i] = static_cast<float>(rng() % 301);
      cnt[i] = static_cast<float>(400.0 * u(rng));
    }
    for (std::size_t i = 0; i < hm.size(); ++i) {
      hm[i] = prob();
      hm_t[i] = u(rng) < 0.5 ? 0.0f : static_cast<float>(u(rng));
    }
    auto tb = Tensor::from_data({n, 2}, beh, true);
    auto td = Tensor::from_data({n, 5}, dens, true);
    auto tc = Tensor::from_data({n, 1}, cnt, true);
    auto th = Tensor::from_data({n, 1, h, w}, hm, true);
    LossParts parts{behaviour_loss(tb, labels), density_loss_levels(td, levels), count_reg_loss(tc, counts),
                    heatmap_loss(th, hm_t)};
    const double errs[4] = {rel_err(parts.behaviour.item(), oracle_bce(beh, beh_t)),
                            rel_err(parts.density.item(), oracle_density(dens, levels)),
                            rel_err(parts.count_reg.item(), oracle_count(cnt, counts)),
                            rel_err(parts.count_heatmap.item(), oracle_bce(hm, hm_t))};
    for (int k = 0; k < 4; ++k) {
      worst = std::max(worst, errs[k]);
      c.expect(errs[k] <= kLossTolerance, "trial " + std::to_string(trial) + " loss " + std::to_string(k + 1) + " " +
                                              fmt("%.2e", errs[k]));
    }

    // Additivity: every mask's total is the plain sum of its parts.
    for (unsigned bits = 1; bits < 16; ++bits) {
      const TaskMask mask{(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0, (bits & 8) != 0};
      float expected = 0.0f;
      bool first = true;
      for (Task t : kAllTasks) {
        if (!mask.enabled(t)) continue;
        expected = first ? parts.get(t).item() : expected + parts.get(t).item();
        first = false;
      }
      c.expect(total_loss(parts, mask).item() == expected, "additivity mask " + std::to_string(bits));
      ++masks_checked;
    }
    // Gradients add the same way: each prediction sees only its own term.
    total_loss(parts, TaskMask::all()).backward();
    std::vector<Tensor> preds{tb, td, tc, th};
    std::vector<std::vector<float>> combined;
    for (const auto& p : preds) combined.emplace_back(p.grad().begin(), p.grad().end());
    for (std::size_t k = 0; k < 4; ++k) {
      for (auto& p : preds) p.zero_grad();
      parts.get(kAllTasks[k]).backward();
      c.expect(same_bits(preds[k].grad(), combined[k]), "gradient additivity for loss " + std::to_string(k + 1));
    }
  }
  return c.outcome("1000 instances, max rel err " + fmt("%.2e", worst) + "; " + std::to_string(masks_checked) +
                   " mask totals and all gradients additive exactly");
}

// 4. AdaGrad against a hand-rolled trajectory on f(w) = a/2 (w - b)^2.
Outcome optimizer_oracle(const Context&) {
  Checks c;
  const double a = 2.0, b = 0.5, lr = 0.1, eps = 1e-8, decay = 1e-4;
  AdaGradConfig cfg;
  cfg.learning_rate = lr;
  cfg.epsilon = eps;
  cfg.weight_decay = decay;
  AdaGrad opt(cfg);
  auto t = Tensor::from_data({1}, {3.0f}, true);
  const std::vector<Parameter> params{{"w", t, ParamGroup::kBackbone, ParamKind::kWeight}};
  auto gradient = [&](float w) { return static_cast<float>(a * (static_cast<double>(w) - b)); };

  // Reference keeps the parameter and accumulator in single precision, as stored.
  float w_ref = 3.0f, acc_ref = 0.0f;
  double w_exact = 3.0, acc_exact = 0.0;
  double worst = 0.0, drift = 0.0;
  for (int step = 0; step < 100; ++step) {
    t.zero_grad();
    t.mutable_grad()[0] = gradient(t.at(0));
    opt.step(params);

    const double g = static_cast<double>(gradient(w_ref)) + decay * w_ref;
    acc_ref = static_cast<float>(acc_ref + g * g);
    w_ref = static_cast<float>(w_ref - lr * g / (std::sqrt(static_cast<double>(acc_ref)) + eps));

    const double ge = a * (w_exact - b) + decay * w_exact;
    acc_exact += ge * ge;
    w_exact -= lr * ge / (std::sqrt(acc_exact) + eps);

    const double err = std::abs(t.at(0) - w_ref) / std::max(1.0, std::abs(static_cast<double>(w_ref)));
    worst = std::max(worst, err);
    drift = std::max(drift, std::abs(t.at(0) - w_exact));
    c.expect(err <= kOptimizerTolerance, "step " + std::to_string(step + 1) + " " + fmt("%.2e", err));
  }
  c.expect(std::abs(t.at(0) - b) < std::abs(3.0 - b), "no progress towards the minimum");
  return c.outcome("100 steps, max deviation " + fmt("%.1e", worst) + " (float-storage reference), " +
                   fmt("%.1e", drift) + " from an all-double reference, final w " + fmt("%.6f", t.at(0)));
}

// 5. Density levels, heatmap mass and flipping.
int table_level(long count) {
  static const long rows[5][3] = {{1, 0, 20}, {2, 21, 50}, {3, 51, 100}, {4, 101, 200}, {5, 201, -1}};
  for (const auto& r : rows) {
    if (count >= r[1] && (r[2] < 0 || count <= r[2])) return static_cast<int>(r[0]);
  }
  return -1;
}

Outcome data_rules(const Context&) {
  Checks c;
  for (long n = 0; n <= 300; ++n) {
    c.expect(density_level_from_count(n) == table_level(n), "level of " + std::to_string(n));
  }

  SynthSpec spec;
  spec.num_images = 100;
  spec.seed = 5;
  const auto plan = synth_plan(spec);
  double worst = 0.0;
  std::size_t heads = 0;
  for (const auto& s : plan) {
    const auto map = generate_heatmap(s.heads, spec.width, spec.height, 160, 90);
    const double n = static_cast<double>(s.count());
    heads += s.count();
    if (n == 0) {
      c.expect(map.integral == 0.0, "empty scene has mass");
      continue;
    }
    const double e = std::abs(map.integral - n) / n;
    worst = std::max(worst, e);
    c.expect(e <= kHeatmapMassTolerance, "integral " + fmt("%.3f", map.integral) + " for " + std::to_string(s.count()));
  }

  const auto config = ResnetCrowdConfig::desk_scale();
  for (std::size_t i = 0; i < 10; ++i) {
    AnnotatedImage s;
    s.image = synth_render(spec, plan[i], i);
    s.annotations = plan[i];
    s.heatmap = generate_heatmap(plan[i].heads, spec.width, spec.height, 160, 90);
    const auto once = augment_hflip(s);
    const auto twice = augment_hflip(once);
    c.expect(once.annotations.count() == s.annotations.count(), "flip changes count");
    c.expect(once.annotations.density_level() == s.annotations.density_level(), "flip changes level");
    c.expect(once.annotations.fight == s.annotations.fight && once.annotations.mob == s.annotations.mob,
             "flip changes behaviour");
    c.expect(std::abs(once.heatmap.integral - s.heatmap.integral) <= 1e-9 * std::max(1.0, s.heatmap.integral),
             "flip changes heatmap mass");
    c.expect(twice.image == s.image, "double flip image");
    c.expect(twice.heatmap.values == s.heatmap.values, "double flip heatmap");
    bool heads_back = twice.annotations.heads.size() == s.annotations.heads.size();
    for (std::size_t k = 0; heads_back && k < s.annotations.heads.size(); ++k) {
      heads_back = std::abs(twice.annotations.heads[k].x - s.annotations.heads[k].x) < 1e-9 &&
                   twice.annotations.heads[k].y == s.annotations.heads[k].y;
    }
    c.expect(heads_back, "double flip heads");

    const auto prepared = prepare_sample(plan[i], s.image, spec.width, spec.height, config, {});
    const auto back = flip_prepared(flip_prepared(prepared, config), config);
    c.expect(back.image == prepared.image && back.heatmap == prepared.heatmap && back.count == prepared.count &&
                 back.density_level == prepared.density_level && back.behaviour.fight == prepared.behaviour.fight &&
                 back.behaviour.mob == prepared.behaviour.mob,
             "double flip of prepared sample");
  }
  return c.outcome("levels match the table on 0..300; 100 scenes (" + std::to_string(heads) +
                   " heads) integrate within " + fmt("%.3f%%", 100.0 * worst) + "; flip is an involution on 10 scenes");
}

// 6. Metric oracles.
double pair_auc(std::span<const double> scores, std::span<const bool> labels) {
  double good = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      good += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
    }
  }
  return good / pairs;
}

int band_of(double count) { return count <= 50 ? 0 : count <= 150 ? 1 : 2; }

Outcome metric_oracles(const Context&) {
  Checks c;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng() % 200;
    const bool coarse = trial % 2 == 0;
    std::vector<double> scores(n);
    std::unique_ptr<bool[]> labels(new bool[n]);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = coarse ? static_cast<double>(rng() % 9) / 9.0 : u(rng);
      labels[i] = u(rng) < 0.3 + 0.4 * (trial % 3) / 2.0;
    }
    labels[rng() % n] = true;
    std::size_t neg = rng() % n;
    while (labels[neg] && n > 1) {
      labels[neg] = false;
      neg = (neg + 1) % n;
    }
    bool any_pos = false, any_neg = false;
    for (std::size_t i = 0; i < n; ++i) (labels[i] ? any_pos : any_neg) = true;
    if (!any_pos || !any_neg) labels[0] = !labels[1];
    const std::span<const bool> l(labels.get(), n);
    const double e = std::abs(roc_auc(scores, l) - pair_auc(scores, l));
    worst = std::max(worst, e);
    c.expect(e <= kAucTolerance, "auc trial " + std::to_string(trial) + " " + fmt("%.2e", e));
  }

  // Integer counts and predictions keep every sum exact.
  double recombination = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 80;
    std::vector<double> truth(n), pred(n);
    double total = 0.0;
    double band_sum[3] = {0, 0, 0};
    std::size_t band_n[3] = {0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<double>(rng() % 320);
      pred[i] = trial % 2 ? truth[i] + static_cast<double>(static_cast<int>(rng() % 81) - 40)
                          : truth[i] + 80.0 * (u(rng) - 0.5);
      const double err = std::abs(pred[i] - truth[i]);
      total += err;
      band_sum[band_of(truth[i])] += err;
      ++band_n[band_of(truth[i])];
    }
    const auto m = counting_metrics(pred, truth);
    const BandStats* bands[3] = {&m.low, &m.medium, &m.high};
    double weighted = 0.0, sums = 0.0;
    for (int k = 0; k < 3; ++k) {
      c.expect(bands[k]->n == band_n[k], "band size");
      c.expect(bands[k]->mae().has_value() == (band_n[k] > 0), "empty band");
      if (bands[k]->n) weighted += static_cast<double>(bands[k]->n) * *bands[k]->mae();
      sums += bands[k]->abs_error_sum;
    }
    const bool integral = trial % 2 == 1;
    if (integral) {
      c.expect(sums == total, "band sums do not add up exactly");
      c.expect(m.mae == total / static_cast<double>(n), "overall mae");
    }
    const double gap = std::abs(weighted - static_cast<double>(n) * m.mae) / std::max(1.0, total);
    recombination = std::max(recombination, gap);
    c.expect(gap <= 1e-12, "recombination gap " + fmt("%.2e", gap));
  }
  return c.outcome("1000 auc sets, max gap " + fmt("%.1e", worst) + "; 200 banded sets recombine (exact on integer "
                   "errors, max relative gap " + fmt("%.1e", recombination) + ")");
}

// 7. Learning smoke test.
Outcome learning(const Context& ctx) {
  Checks c;
  const fs::path dir = fresh_dir(ctx, "learning");
  SynthSpec spec;
  spec.num_images = 20;
  spec.seed = 7;
  const auto train_manifest = synth_generate(spec, dir / "train");
  spec.seed = 99;
  const auto held_manifest = synth_generate(spec, dir / "held_out");
  const auto config = ResnetCrowdConfig::desk_scale();
  const auto train_set = prepare_dataset(train_manifest, dir / "train", config, {});
  const auto held_set = prepare_dataset(held_manifest, dir / "held_out", config, {});

  ResnetCrowdModel model(config);
  TrainConfig tc = TrainConfig::desk_scale();
  tc.epochs = 300;
  tc.augment = false;
  const auto t0 = std::chrono::steady_clock::now();
  const auto history = train(model, train_set, tc);
  const double secs = seconds_since(t0);
  history.write_csv(dir / "history.csv");

  const double first = history.epochs.front().total, last = history.epochs.back().total;
  double best = first;
  for (const auto& e : history.epochs) best = std::min(best, e.total);
  const double reduction = 1.0 - last / first;
  const auto held = compute_metrics(predict(model, held_set), TaskMask::all());
  const double accuracy = held.density_accuracy.value_or(0.0);
  c.expect(history.epochs.size() == 300, "epochs run");
  c.expect(reduction >= kLossReduction, "final loss reduction " + fmt("%.3f", reduction));
  c.expect(accuracy > kDensityChance, "held-out density accuracy " + fmt("%.3f", accuracy));
  c.expect(secs < kLearningBudgetSeconds, "runtime " + fmt("%.0f s", secs));
  return c.outcome("loss " + fmt("%.1f", first) + " -> " + fmt("%.1f", last) + " (" + fmt("%.2f%%", 100 * reduction) +
                   " reduction, best epoch " + fmt("%.1f", best) + "), held-out density accuracy " +
                   fmt("%.2f", accuracy) + ", " + fmt("%.0f s", secs));
}

// 8. Ablation harness through the command-line tool.
std::vector<std::vector<std::string>> table_rows(const std::string& table) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(table);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find('|') == std::string::npos) continue;
    std::vector<std::string> cells;
    std::istringstream cols(line);
    std::string cell;
    while (std::getline(cols, cell, '|')) {
      const auto b = cell.find_first_not_of(' '), e = cell.find_last_not_of(' ');
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    rows.push_back(cells);
  }
  return rows;
}

Outcome ablation(const Context& ctx) {
  Checks c;
  const fs::path dir = fresh_dir(ctx, "ablation");
  const fs::path log = dir / "cli.log";
  const auto t0 = std::chrono::steady_clock::now();
  require_cli(ctx, "gen-synth --preset desk --out " + quote(dir / "data"), log);
  require_cli(ctx, "train --preset desk --set train.augment=false --manifest " + quote(dir / "data" / "manifest.json") +
                       " --out " + quote(dir / "run"),
              log);
  require_cli(ctx, "eval --run " + quote(dir / "run") + " --out " + quote(dir / "eval"), log);
  const double secs = seconds_since(t0);

  const std::string tables = read_file(dir / "eval" / "tables.txt");
  const auto split = tables.find("\n\n");
  c.expect(split != std::string::npos, "two tables");
  const auto overall = table_rows(tables.substr(0, split));
  const auto banded = table_rows(split == std::string::npos ? "" : tables.substr(split));

  // Row label -> which columns (mAUC, accuracy, regression MAE, heatmap MAE) are filled.
  const std::vector<std::pair<std::string, std::array<bool, 4>>> expected{
      {"Single Task Behaviour", {true, false, false, false}},
      {"Single Task Density Level Estimation", {false, true, false, false}},
      {"Single Task Regression Counting", {false, false, true, false}},
      {"Single Task Heatmap Counting", {false, false, false, true}},
      {"ResnetCrowd", {true, true, true, true}},
  };
  c.expect(overall.size() == 1 + expected.size(), "overall table has " + std::to_string(overall.size()) + " rows");
  if (!overall.empty()) {
    c.expect(overall[0] == std::vector<std::string>{"Run", "Behaviour: mAUC", "Density: Accuracy",
                                                    "Regression Counting: MAE", "Heatmap Counting: MAE"},
             "overall header");
  }
  std::size_t na = 0;
  for (const auto& [label, filled] : expected) {
    const auto row = std::find_if(overall.begin(), overall.end(), [&](const auto& r) { return r[0] == label; });
    c.expect(row != overall.end(), "missing row " + label);
    if (row == overall.end() || row->size() != 5) continue;
    for (std::size_t k = 0; k < 4; ++k) {
      const bool is_na = (*row)[k + 1] == "N/A";
      na += is_na;
      c.expect(is_na != filled[k], label + " column " + std::to_string(k + 1));
    }
  }
  const std::vector<std::string> banded_rows{"ResnetCrowd: Regression Counting", "ResnetCrowd: Heatmap Counting",
                                             "Single Task Regression Counting", "Single Task Heatmap Counting"};
  c.expect(banded.size() == 1 + banded_rows.size(), "banded table has " + std::to_string(banded.size()) + " rows");
  if (!banded.empty()) {
    c.expect(banded[0] == std::vector<std::string>{"Run", "Low Congestion MAE", "Medium Congestion MAE",
                                                   "High Congestion MAE"},
             "banded header");
  }
  for (const auto& label : banded_rows) {
    c.expect(std::any_of(banded.begin(), banded.end(), [&](const auto& r) { return r[0] == label; }),
             "missing banded row " + label);
  }

  const json report = read_json(dir / "eval" / "report.json");
  c.expect(report.at("runs").size() == 5, "five runs in report.json");
  for (const auto& run : report.at("runs")) c.expect(run.at("folds").size() == 5, "five folds per run");
  for (const auto& r : canonical_runs()) {
    for (std::size_t k = 1; k <= 5; ++k) {
      c.expect(fs::exists(dir / "run" / "runs" / r.name / ("fold_" + std::to_string(k)) / "final" / "weights.bin"),
               "checkpoint " + r.name + " fold " + std::to_string(k));
    }
  }
  return c.outcome("5 runs x 5 folds trained and evaluated in " + fmt("%.0f s", secs) + ", " + std::to_string(na) +
                   " N/A cells in place, banded table with " + std::to_string(banded.size() - 1) + " rows");
}

// 9. Single-task runs leave other heads untouched.
bool group_serves(ParamGroup g, Task t) {
  switch (g) {
    case ParamGroup::kBackbone: return true;
    case ParamGroup::kBehaviour: return t == Task::kBehaviour;
    case ParamGroup::kDensity: return t == Task::kDensity;
    case ParamGroup::kCountReg: return t == Task::kCountReg;
    case ParamGroup::kHeatmap: return t == Task::kCountHeatmap;
  }
  return false;
}

Outcome masking(const Context&) {
  Checks c;
  const auto config = ResnetCrowdConfig::desk_scale();
  const auto data = synthetic_samples(20, 9, config);
  std::size_t frozen = 0, moved = 0;
  for (Task task : kAllTasks) {
    ResnetCrowdModel model(config);
    std::vector<std::vector<float>> before;
    for (const auto& p : model.parameters()) before.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    TrainConfig tc = TrainConfig::desk_scale();
    tc.epochs = 2;
    tc.augment = false;
    tc.mask = TaskMask::only(task);
    train(model, data, tc);
    const auto after = model.parameters();
    for (std::size_t i = 0; i < after.size(); ++i) {
      const bool identical = same_bits(after[i].tensor.data(), before[i]);
      if (group_serves(after[i].group, task)) {
        c.expect(!identical, std::string(to_string(task)) + " run did not update " + after[i].name);
        ++moved;
      } else {
        c.expect(identical, std::string(to_string(task)) + " run changed " + after[i].name);
        ++frozen;
      }
    }
  }
  return c.outcome("4 single-task runs: " + std::to_string(frozen) + " foreign head tensors bit-identical, " +
                   std::to_string(moved) + " own tensors updated");
}

// 10. Anomaly pipeline on separable clusters.
Outcome anomaly(const Context&) {
  Checks c;
  std::mt19937_64 rng(10);
  std::normal_distribution<double> d(0.0, 1.0);
  const std::size_t dim = 16, normal_n = 600, odd_n = 200;
  FeatureMatrix features;
  for (std::size_t i = 0; i < normal_n + odd_n; ++i) {
    // Normal frames come from two modes; anomalies sit away from both.
    const double centre = i >= normal_n ? 4.0 : (i % 2 ? -3.0 : 0.0);
    std::vector<double> row(dim);
    for (auto& v : row) v = centre + d(rng);
    features.push_back(std::move(row));
  }
  std::unique_ptr<bool[]> labels(new bool[features.size()]);
  for (std::size_t i = 0; i < features.size(); ++i) labels[i] = i >= normal_n;
  const std::span<const bool> l(labels.get(), features.size());

  const auto result = run_anomaly(features, l, GmmOptions{});
  const auto& ll = result.fit.log_likelihood;
  bool monotone = ll.size() >= 2;
  for (std::size_t i = 1; i < ll.size(); ++i) {
    monotone = monotone && ll[i] >= ll[i - 1] - 1e-9 * std::max(1.0, std::abs(ll[i - 1]));
  }
  c.expect(monotone, "log-likelihood not monotone");
  c.expect(result.auc.has_value() && *result.auc > kAnomalyAuc, "auc " + fmt("%.3f", result.auc.value_or(0.0)));

  std::vector<char> shuffled(l.begin(), l.end());
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::unique_ptr<bool[]> s(new bool[shuffled.size()]);
  for (std::size_t i = 0; i < shuffled.size(); ++i) s[i] = shuffled[i];
  const double chance = evaluate_anomaly(result.scores, {s.get(), shuffled.size()});
  c.expect(std::abs(chance - 0.5) <= kShuffledBand, "shuffled auc " + fmt("%.3f", chance));
  return c.outcome(std::to_string(ll.size() - 1) + " EM steps with non-decreasing log-likelihood (" +
                   fmt("%.3f", ll.front()) + " -> " + fmt("%.3f", ll.back()) + "), AUC " +
                   fmt("%.3f", result.auc.value_or(0.0)) + ", shuffled " + fmt("%.3f", chance));
}

// 11. Determinism of full runs.
std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome determinism(const Context& ctx) {
  Checks c;
  const fs::path dir = fresh_dir(ctx, "determinism");
  const fs::path log = dir / "cli.log";
  const auto t0 = std::chrono::steady_clock::now();
  require_cli(ctx, "gen-synth --preset desk --out " + quote(dir / "data"), log);
  for (const char* name : {"a", "b"}) {
    const fs::path out = dir / name;
    require_cli(ctx, "train --preset desk --set train.mode=multi_task --set train.augment=false --manifest " +
                         quote(dir / "data" / "manifest.json") + " --out " + quote(out / "run"),
                log);
    require_cli(ctx, "eval --run " + quote(out / "run") + " --out " + quote(out / "eval"), log);
  }
  const double secs = seconds_since(t0);
  const auto a = files_under(dir / "a"), b = files_under(dir / "b");
  c.expect(a == b, "different file sets");
  std::size_t checkpoints = 0, compared = 0;
  for (const auto& f : a) {
    if (!fs::exists(dir / "b" / f)) continue;
    ++compared;
    checkpoints += f.filename() == "weights.bin";
    c.expect(read_file(dir / "a" / f) == read_file(dir / "b" / f), f.string() + " differs");
  }
  c.expect(checkpoints == 5, std::to_string(checkpoints) + " checkpoints");
  c.expect(fs::exists(dir / "a" / "eval" / "report.json"), "no report");
  return c.outcome(std::to_string(compared) + " files byte-identical across two runs (" + std::to_string(checkpoints) +
                   " checkpoints, reports and predictions), " + fmt("%.0f s", secs));
}

struct Criterion {
  int number;
  const char* title;
  std::function<Outcome(const Context&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ResnetCrowd acceptance checks"};
  int only = 0;
  std::string work = "acceptance_work", cli;
  app.add_option("--criterion", only, "run a single criterion (1-11); all when omitted")->check(CLI::Range(0, 11));
  app.add_option("--work", work, "scratch directory");
  app.add_option("--cli", cli, "resnetcrowd command-line tool");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "gradient correctness", gradients},
      {2, "architecture fidelity", architecture},
      {3, "loss oracle equivalence", loss_oracles},
      {4, "optimizer oracle", optimizer_oracle},
      {5, "data rules", data_rules},
      {6, "metric oracles", metric_oracles},
      {7, "learning smoke test", learning},
      {8, "ablation harness", ablation},
      {9, "masking correctness", masking},
      {10, "anomaly pipeline", anomaly},
      {11, "determinism", determinism},
  };
  const Context ctx{fs::absolute(work), cli.empty() ? fs::path() : fs::absolute(cli)};
  fs::create_directories(ctx.work);

  bool all_pass = true;
  for (const auto& k : criteria) {
    if (only != 0 && k.number != only) continue;
    Outcome o;
    try {
      o = k.run(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all_pass = all_pass && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << k.number << " (" << k.title << "): " << o.detail
              << std::endl;
  }
  return all_pass ? 0 : 1;
}
