#include "test_support.hpp"

#include <map>

#include "resnetcrowd/model.hpp"

using namespace resnetcrowd;

namespace {

Tensor random_images(const ResnetCrowdConfig& cfg, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return test::random_tensor({n, 3, cfg.input_height, cfg.input_width}, rng);
}

Tensor param(const ResnetCrowdModel& m, const std::string& name) {
  for (const auto& p : m.parameters()) {
    if (p.name == name) return p.tensor;
  }
  FAIL("no parameter " << name);
  return {};
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("output shapes at the published resolution") {
    ResnetCrowdModel model(ResnetCrowdConfig{});
    const auto out = model.forward(random_images(model.config(), 1, 1), Mode::kEval);
    CHECK(out.heatmap.shape() == Shape{1, 1, 90, 160});
    CHECK(out.count.shape() == Shape{1, 1});
    CHECK(out.behaviour.shape() == Shape{1, 2});
    CHECK(out.density.shape() == Shape{1, 5});
    CHECK(out.features.shape() == Shape{1, 64});
  }

  TEST_CASE("five backbone convolutions") {
    ResnetCrowdModel model(ResnetCrowdConfig::desk_scale());
    CHECK(model.backbone_convolution_count() == 5);
    std::size_t convs = 0;
    for (const auto& p : model.parameters()) {
      if (p.group == ParamGroup::kBackbone && p.tensor.rank() == 4) ++convs;
    }
    CHECK(convs == 5);
  }

  TEST_CASE("parameter count by layer arithmetic") {
    ResnetCrowdModel model(ResnetCrowdConfig{});
    std::map<ParamGroup, std::size_t> by_group;
    for (const auto& p : model.parameters()) by_group[p.group] += p.tensor.numel();
    const std::size_t c = 64;
    const std::size_t stem = 3 * c * 7 * 7 + 2 * c;
    const std::size_t blocks = 4 * (c * c * 3 * 3 + 2 * c);
    CHECK(by_group[ParamGroup::kBackbone] == stem + blocks);
    CHECK(by_group[ParamGroup::kBackbone] == 157504);
    CHECK(by_group[ParamGroup::kHeatmap] == 65);
    CHECK(by_group[ParamGroup::kCountReg] == 65);
    CHECK(by_group[ParamGroup::kBehaviour] == 130);
    CHECK(by_group[ParamGroup::kDensity] == 325);
    CHECK(model.parameter_count() == 158089);
    CHECK(model.parameter_count() != kReportedParameterCount);
  }

  TEST_CASE("equal seeds give identical parameters") {
    ResnetCrowdModel a(ResnetCrowdConfig::desk_scale()), b(ResnetCrowdConfig::desk_scale());
    auto cfg = ResnetCrowdConfig::desk_scale();
    cfg.seed = 9;
    ResnetCrowdModel c(cfg);
    const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
    bool all_equal = true, differs = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      all_equal = all_equal && test::values(pa[i].tensor) == test::values(pb[i].tensor);
      differs = differs || test::values(pa[i].tensor) != test::values(pc[i].tensor);
    }
    CHECK(all_equal);
    CHECK(differs);
  }

  TEST_CASE("initialisation ranges") {
    ResnetCrowdModel model(ResnetCrowdConfig{});
    const double bound = std::sqrt(6.0 / (64 + 2));
    for (float w : param(model, "head_behaviour.weight").data()) CHECK(std::abs(w) <= bound);
    for (const auto& p : model.parameters()) {
      if (p.kind == ParamKind::kBias || p.kind == ParamKind::kNormShift) {
        for (float v : p.tensor.data()) CHECK(v == 0.0f);
      }
      if (p.kind == ParamKind::kNormScale) {
        for (float v : p.tensor.data()) CHECK(v == 1.0f);
      }
    }
    // He normal: sample std of the stem within 10% of sqrt(2 / fan_in).
    const auto w = param(model, "conv1.weight");
    double s2 = 0;
    for (float v : w.data()) s2 += double(v) * v;
    CHECK(std::sqrt(s2 / w.numel()) == doctest::Approx(std::sqrt(2.0 / 147)).epsilon(0.1));
  }

  TEST_CASE("zero heads give neutral outputs") {
    ResnetCrowdModel model(ResnetCrowdConfig::desk_scale());
    for (const auto& p : model.parameters()) {
      if (p.group != ParamGroup::kBackbone && p.group != ParamGroup::kHeatmap) {
        auto t = p.tensor;
        for (auto& v : t.mutable_data()) v = 0.0f;
      }
    }
    const auto out = model.forward(random_images(model.config(), 2, 2), Mode::kTrain);
    for (float v : out.behaviour.data()) CHECK(v == 0.5f);
    for (float v : out.density.data()) CHECK(v == doctest::Approx(0.2));
    for (float v : out.count.data()) CHECK(v == 0.0f);
  }

  TEST_CASE("output ranges on arbitrary inputs") {
    ResnetCrowdModel model(ResnetCrowdConfig::desk_scale());
    const auto out = model.forward(random_images(model.config(), 3, 3), Mode::kTrain);
    for (float v : out.count.data()) CHECK(v >= 0.0f);
    for (float v : out.behaviour.data()) CHECK((v > 0.0f && v < 1.0f));
    for (float v : out.heatmap.data()) CHECK((v > 0.0f && v < 1.0f));
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0;
      for (std::size_t k = 0; k < 5; ++k) s += out.density.at(r * 5 + k);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }
  }

  TEST_CASE("eval forward is repeatable and leaves the model untouched") {
    ResnetCrowdModel model(ResnetCrowdConfig::desk_scale());
    const auto x = random_images(model.config(), 2, 4);
    model.forward(x, Mode::kTrain);  // move running stats away from their initial values
    std::vector<std::vector<float>> stats;
    for (const auto& b : model.buffers()) stats.push_back(*b.values);
    const auto a = model.forward(x, Mode::kEval), b = model.forward(x, Mode::kEval);
    CHECK(test::values(a.heatmap) == test::values(b.heatmap));
    CHECK(test::values(a.features) == test::values(b.features));
    std::vector<std::vector<float>> after;
    for (const auto& buf : model.buffers()) after.push_back(*buf.values);
    CHECK(stats == after);
  }

  TEST_CASE("train forward updates running statistics") {
    ResnetCrowdModel model(ResnetCrowdConfig::desk_scale());
    const auto before = *model.buffers().front().values;
    model.forward(random_images(model.config(), 2, 5), Mode::kTrain);
    CHECK(*model.buffers().front().values != before);
  }

  TEST_CASE("wrong input resolution is rejected") {
    ResnetCrowdModel model(ResnetCrowdConfig::desk_scale());
    CHECK_THROWS_AS(model.forward(Tensor::zeros({1, 3, 90, 162}), Mode::kEval), ShapeError);
    CHECK_THROWS_AS(model.forward(Tensor::zeros({1, 1, 90, 160}), Mode::kEval), ShapeError);
  }

  TEST_CASE("zeroed residual branches reduce blocks to the identity") {
    ResnetCrowdModel model(ResnetCrowdConfig::desk_scale());
    const auto x = random_images(model.config(), 2, 6);
    const auto full = model.forward(x, Mode::kTrain);
    for (const auto& p : model.parameters()) {
      if (p.name.rfind("block", 0) == 0 && p.kind == ParamKind::kWeight) {
        auto t = p.tensor;
        for (auto& v : t.mutable_data()) v = 0.0f;
      }
    }
    const auto reduced = model.forward(x, Mode::kTrain);
    // Stem alone, rebuilt from the same parameters.
    auto bn = BatchNormState::create(64);
    const auto stem = relu(batch_norm(conv2d(x, param(model, "conv1.weight"), {}, 2, 3), bn, Mode::kTrain));
    const auto pooled = global_avg_pool(stem);
    for (std::size_t i = 0; i < pooled.numel(); ++i) {
      CHECK(reduced.features.at(i) == doctest::Approx(pooled.at(i)).epsilon(1e-5));
    }
    CHECK(test::values(reduced.features) != test::values(full.features));
  }

  TEST_CASE("clone is deep") {
    ResnetCrowdModel model(ResnetCrowdConfig::desk_scale());
    auto copy = model.clone();
    auto w = param(copy, "head_count.weight");
    w.mutable_data()[0] += 1.0f;
    CHECK(param(model, "head_count.weight").at(0) != w.at(0));
  }

  TEST_CASE("config validation") {
    auto cfg = ResnetCrowdConfig::desk_scale();
    cfg.heatmap_width = 79;
    CHECK_THROWS(ResnetCrowdModel{cfg});
    CHECK_THROWS(ResnetCrowdConfig::with_input(161, 90).validate());
    const auto round = ResnetCrowdConfig::from_json(ResnetCrowdConfig::desk_scale().to_json());
    CHECK(round.input_width == 160);
    CHECK(round.heatmap_height == 45);
  }
}
