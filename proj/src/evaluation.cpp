#include "resnetcrowd/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

namespace resnetcrowd {

using nlohmann::json;

std::vector<SamplePrediction> predict(ResnetCrowdModel& model, std::span<const PreparedSample> samples,
                                      std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("predict: batch_size must be positive");
  const auto& cfg = model.config();
  const std::size_t levels = cfg.num_density_levels;
  const std::size_t map_size = cfg.heatmap_width * cfg.heatmap_height;
  std::vector<SamplePrediction> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const ForwardOutput f = model.forward(batch_images(samples, idx, cfg), Mode::kEval);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const PreparedSample& s = samples[idx[i]];
      SamplePrediction p;
      p.id = s.id;
      p.true_count = s.count;
      p.true_level = s.density_level;
      p.truth = s.behaviour;
      p.count_reg = f.count.at(i);
      const auto map = f.heatmap.data().subspan(i * map_size, map_size);
      p.count_heatmap = std::accumulate(map.begin(), map.end(), 0.0);
      p.fight = f.behaviour.at(i * 2);
      p.mob = f.behaviour.at(i * 2 + 1);
      const auto probs = f.density.data().subspan(i * levels, levels);
      p.density.assign(probs.begin(), probs.end());
      p.level = argmax_level(probs);
      out.push_back(std::move(p));
    }
  }
  return out;
}

namespace {

std::optional<double> auc_if_defined(std::span<const SamplePrediction> preds, bool fight) {
  std::vector<double> scores;
  // vector<bool> is not contiguous, so labels live in a plain array.
  std::unique_ptr<bool[]> labels(new bool[preds.size()]);
  std::size_t positives = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    scores.push_back(fight ? preds[i].fight : preds[i].mob);
    labels[i] = fight ? preds[i].truth.fight : preds[i].truth.mob;
    positives += labels[i];
  }
  if (positives == 0 || positives == preds.size()) return std::nullopt;
  return roc_auc(scores, std::span<const bool>(labels.get(), preds.size()));
}

CountingSummary summarise(const CountingMetrics& m) {
  return {m.mae, m.rmse, m.low.mae(), m.medium.mae(), m.high.mae()};
}

// Mean over the values that are present; absent when none are.
std::optional<double> mean_of(const std::vector<std::optional<double>>& values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

template <typename F>
std::optional<double> mean_field(const std::vector<FoldMetrics>& folds, F get) {
  std::vector<std::optional<double>> values;
  for (const auto& f : folds) values.push_back(get(f));
  return mean_of(values);
}

std::optional<CountingSummary> mean_counting(const std::vector<FoldMetrics>& folds,
                                             std::optional<CountingSummary> FoldMetrics::*member) {
  std::vector<CountingSummary> present;
  for (const auto& f : folds) {
    if (f.*member) present.push_back(*(f.*member));
  }
  if (present.empty()) return std::nullopt;
  CountingSummary m;
  std::vector<std::optional<double>> low, medium, high;
  for (const auto& c : present) {
    m.mae += c.mae;
    m.rmse += c.rmse;
    low.push_back(c.low);
    medium.push_back(c.medium);
    high.push_back(c.high);
  }
  m.mae /= static_cast<double>(present.size());
  m.rmse /= static_cast<double>(present.size());
  m.low = mean_of(low);
  m.medium = mean_of(medium);
  m.high = mean_of(high);
  return m;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json counting_json(const std::optional<CountingSummary>& c) {
  if (!c) return nullptr;
  return {{"mae", c->mae},
          {"mse_rmse", c->rmse},
          {"banded_mae", {{"low", opt_json(c->low)}, {"medium", opt_json(c->medium)}, {"high", opt_json(c->high)}}}};
}

json fold_json(const FoldMetrics& f) {
  return {{"behaviour_mauc", opt_json(f.mauc)},
          {"fight_auc", opt_json(f.fight_auc)},
          {"mob_auc", opt_json(f.mob_auc)},
          {"density_accuracy", opt_json(f.density_accuracy)},
          {"count_reg", counting_json(f.count_reg)},
          {"count_heatmap", counting_json(f.count_heatmap)}};
}

std::string cell(const std::optional<double>& v, int decimals) {
  if (!v) return "N/A";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, *v);
  return buf;
}

std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c > 0) out << " | ";
      out << r[c] << std::string(width[c] - r[c].size(), ' ');
    }
    out << '\n';
  };
  line(header);
  std::size_t total = 3 * (header.size() - 1);
  for (auto w : width) total += w;
  out << std::string(total, '-') << '\n';
  for (const auto& r : rows) line(r);
  return out.str();
}

}  // namespace

FoldMetrics compute_metrics(std::span<const SamplePrediction> predictions, const TaskMask& mask) {
  FoldMetrics m;
  if (predictions.empty()) throw MetricError("compute_metrics: no predictions");
  if (mask.behaviour) {
    m.fight_auc = auc_if_defined(predictions, true);
    m.mob_auc = auc_if_defined(predictions, false);
    m.mauc = mean_of({m.fight_auc, m.mob_auc});
  }
  if (mask.density) {
    std::vector<int> pred, truth;
    for (const auto& p : predictions) {
      pred.push_back(p.level);
      truth.push_back(p.true_level);
    }
    m.density_accuracy = density_accuracy(pred, truth);
  }
  std::vector<double> truth;
  for (const auto& p : predictions) truth.push_back(p.true_count);
  if (mask.count_reg) {
    std::vector<double> pred;
    for (const auto& p : predictions) pred.push_back(p.count_reg);
    m.count_reg = summarise(counting_metrics(pred, truth));
  }
  if (mask.count_heatmap) {
    std::vector<double> pred;
    for (const auto& p : predictions) pred.push_back(p.count_heatmap);
    m.count_heatmap = summarise(counting_metrics(pred, truth));
  }
  return m;
}

json MetricsReport::to_json() const {
  json folds_json = json::array();
  for (const auto& f : folds) folds_json.push_back(fold_json(f));
  json tasks = json::array();
  for (Task t : kAllTasks) {
    if (mask.enabled(t)) tasks.push_back(to_string(t));
  }
  return {{"run", run}, {"tasks", tasks}, {"folds", folds_json}, {"mean", fold_json(mean)}};
}

MetricsReport cross_validate(const std::string& run, const TaskMask& mask, std::span<ResnetCrowdModel> fold_models,
                             std::span<const PreparedSample> samples, const Folds& folds,
                             std::vector<std::vector<SamplePrediction>>* predictions_out) {
  if (fold_models.size() != folds.size()) {
    throw std::invalid_argument("cross_validate: " + std::to_string(fold_models.size()) + " models for " +
                                std::to_string(folds.size()) + " folds");
  }
  MetricsReport report;
  report.run = run;
  report.mask = mask;
  for (std::size_t k = 0; k < folds.size(); ++k) {
    const auto held_out = select(samples, folds[k]);
    const auto preds = predict(fold_models[k], held_out);
    report.folds.push_back(compute_metrics(preds, mask));
    if (predictions_out) predictions_out->push_back(preds);
  }
  const auto& f = report.folds;
  report.mean.fight_auc = mean_field(f, [](const FoldMetrics& m) { return m.fight_auc; });
  report.mean.mob_auc = mean_field(f, [](const FoldMetrics& m) { return m.mob_auc; });
  // Concepts first, then folds.
  report.mean.mauc = mean_field(f, [](const FoldMetrics& m) { return m.mauc; });
  report.mean.density_accuracy = mean_field(f, [](const FoldMetrics& m) { return m.density_accuracy; });
  report.mean.count_reg = mean_counting(f, &FoldMetrics::count_reg);
  report.mean.count_heatmap = mean_counting(f, &FoldMetrics::count_heatmap);
  return report;
}

std::string display_name(const std::string& run) {
  if (run == "single_behaviour") return "Single Task Behaviour";
  if (run == "single_density") return "Single Task Density Level Estimation";
  if (run == "single_count_reg") return "Single Task Regression Counting";
  if (run == "single_count_heatmap") return "Single Task Heatmap Counting";
  if (run == "multi_task") return "ResnetCrowd";
  return run;
}

std::string format_overall_table(std::span<const MetricsReport> reports) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : reports) {
    const auto& m = r.mean;
    rows.push_back({display_name(r.run), cell(m.mauc, 3), cell(m.density_accuracy, 3),
                    cell(m.count_reg ? std::optional<double>(m.count_reg->mae) : std::nullopt, 1),
                    cell(m.count_heatmap ? std::optional<double>(m.count_heatmap->mae) : std::nullopt, 1)});
  }
  return render_table({"Run", "Behaviour: mAUC", "Density: Accuracy", "Regression Counting: MAE",
                       "Heatmap Counting: MAE"},
                      rows);
}

std::string format_banded_table(std::span<const MetricsReport> reports) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : reports) {
    const bool single = r.mask.active_count() == 1;
    auto add = [&](const std::optional<CountingSummary>& c, const char* what) {
      if (!c) return;
      rows.push_back({single ? display_name(r.run) : display_name(r.run) + ": " + what, cell(c->low, 1),
                      cell(c->medium, 1), cell(c->high, 1)});
    };
    add(r.mean.count_reg, "Regression Counting");
    add(r.mean.count_heatmap, "Heatmap Counting");
  }
  return render_table({"Run", "Low Congestion MAE", "Medium Congestion MAE", "High Congestion MAE"}, rows);
}

json reports_to_json(std::span<const MetricsReport> reports) {
  json runs = json::array();
  for (const auto& r : reports) runs.push_back(r.to_json());
  return {{"runs", runs},
          {"notes",
           {{"mse_rmse", "root of the mean squared error"},
            {"bands", "low [0,50], medium (50,150], high (150,inf) by true count"},
            {"mauc", "mean over concepts, then over folds; folds with a single class for a concept are skipped"}}}};
}

void write_predictions_csv(const std::filesystem::path& path,
                           std::span<const std::vector<SamplePrediction>> per_fold) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "fold,id,true_count,count_reg,count_heatmap,true_level,level,p_level1,p_level2,p_level3,p_level4,p_level5,"
         "fight,mob,fight_prob,mob_prob\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  for (std::size_t k = 0; k < per_fold.size(); ++k) {
    for (const auto& p : per_fold[k]) {
      out << k + 1 << ',' << p.id << ',' << num(p.true_count) << ',' << num(p.count_reg) << ','
          << num(p.count_heatmap) << ',' << p.true_level << ',' << p.level;
      for (std::size_t l = 0; l < 5; ++l) out << ',' << (l < p.density.size() ? num(p.density[l]) : "");
      out << ',' << int(p.truth.fight) << ',' << int(p.truth.mob) << ',' << num(p.fight) << ',' << num(p.mob) << '\n';
    }
  }
}

}  // namespace resnetcrowd
