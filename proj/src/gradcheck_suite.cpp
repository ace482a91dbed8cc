#include "resnetcrowd/gradcheck_suite.hpp"

#include <algorithm>
#include <chrono>
#include <random>

#include "resnetcrowd/losses.hpp"
#include "resnetcrowd/model.hpp"
#include "resnetcrowd/ops.hpp"

namespace resnetcrowd {

namespace {

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  Tensor normal(Shape shape, double stddev = 1.0, bool grad = true) {
    std::normal_distribution<float> d(0.0f, static_cast<float>(stddev));
    std::vector<float> v(shape_numel(shape));
    for (auto& x : v) x = d(rng_);
    return Tensor::from_data(std::move(shape), std::move(v), grad);
  }

  // Values bounded away from zero so relu kinks stay out of reach of the
  // finite-difference step.
  Tensor away_from_zero(Shape shape) {
    std::uniform_real_distribution<float> mag(0.05f, 1.5f);
    std::bernoulli_distribution sign(0.5);
    std::vector<float> v(shape_numel(shape));
    for (auto& x : v) x = sign(rng_) ? mag(rng_) : -mag(rng_);
    return Tensor::from_data(std::move(shape), std::move(v), true);
  }

  Tensor uniform(Shape shape, float lo, float hi, bool grad = true) {
    std::uniform_real_distribution<float> d(lo, hi);
    std::vector<float> v(shape_numel(shape));
    for (auto& x : v) x = d(rng_);
    return Tensor::from_data(std::move(shape), std::move(v), grad);
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Scalar probe of an op's output: sum(op * R) for a fixed random R.
Tensor project(const Tensor& y, const Tensor& r) { return sum(mul(y, r)); }

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(const GradCheckSuiteOptions& options) {
  Sampler s(options.seed);
  std::vector<GradCheckCase> cases;
  GradCheckOptions layer;
  layer.tolerance = options.layer_tolerance;
  layer.seed = options.seed;

  auto run = [&](const std::string& name, const std::function<Tensor()>& loss, const std::vector<NamedTensor>& in,
                 const GradCheckOptions& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    GradCheckCase c{name, finite_diff_check(loss, in, opt), 0.0};
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    cases.push_back(std::move(c));
  };

  {
    auto x = s.normal({2, 3, 7, 6}), w = s.normal({4, 3, 3, 3}, 0.5), b = s.normal({4});
    auto r = s.normal({2, 4, 7, 6}, 1.0, false);
    run("conv2d 3x3 stride 1 pad 1", [&] { return project(conv2d(x, w, b, 1, 1), r); },
        {{"input", x}, {"weight", w}, {"bias", b}}, layer);
  }
  {
    auto x = s.normal({1, 3, 10, 12}), w = s.normal({2, 3, 7, 7}, 0.3);
    auto r = s.normal({1, 2, 5, 6}, 1.0, false);
    run("conv2d 7x7 stride 2 pad 3", [&] { return project(conv2d(x, w, Tensor(), 2, 3), r); },
        {{"input", x}, {"weight", w}}, layer);
  }
  {
    auto x = s.normal({2, 5, 3, 3}), w = s.normal({1, 5, 1, 1}), b = s.normal({1});
    auto r = s.normal({2, 1, 3, 3}, 1.0, false);
    run("conv2d 1x1", [&] { return project(conv2d(x, w, b, 1, 0), r); }, {{"input", x}, {"weight", w}, {"bias", b}},
        layer);
  }
  {
    auto x = s.normal({3, 2, 3, 4});
    auto bn = BatchNormState::create(2);
    bn.gamma = s.uniform({2}, 0.5f, 1.5f);
    bn.beta = s.normal({2});
    auto r = s.normal({3, 2, 3, 4}, 1.0, false);
    run("batch_norm train", [&] { return project(batch_norm(x, bn, Mode::kTrain), r); },
        {{"input", x}, {"gamma", bn.gamma}, {"beta", bn.beta}}, layer);
  }
  {
    auto x = s.normal({2, 3, 2, 2});
    auto bn = BatchNormState::create(3);
    bn.gamma = s.uniform({3}, 0.5f, 1.5f);
    bn.beta = s.normal({3});
    bn.running_mean = {0.3f, -0.2f, 0.1f};
    bn.running_var = {0.8f, 1.7f, 0.4f};
    auto r = s.normal({2, 3, 2, 2}, 1.0, false);
    run("batch_norm eval", [&] { return project(batch_norm(x, bn, Mode::kEval), r); },
        {{"input", x}, {"gamma", bn.gamma}, {"beta", bn.beta}}, layer);
  }
  {
    auto x = s.away_from_zero({4, 5});
    auto r = s.normal({4, 5}, 1.0, false);
    run("relu", [&] { return project(relu(x), r); }, {{"input", x}}, layer);
  }
  {
    auto x = s.normal({4, 5}, 2.0);
    auto r = s.normal({4, 5}, 1.0, false);
    run("sigmoid", [&] { return project(sigmoid(x), r); }, {{"input", x}}, layer);
  }
  {
    auto x = s.normal({3, 5}, 2.0);
    auto r = s.normal({3, 5}, 1.0, false);
    run("softmax", [&] { return project(softmax(x), r); }, {{"input", x}}, layer);
  }
  {
    auto x = s.normal({2, 3, 4, 5});
    auto r = s.normal({2, 3}, 1.0, false);
    run("global_avg_pool", [&] { return project(global_avg_pool(x), r); }, {{"input", x}}, layer);
  }
  {
    auto x = s.normal({3, 6}), w = s.normal({6, 4}), b = s.normal({4});
    auto r = s.normal({3, 4}, 1.0, false);
    run("linear", [&] { return project(linear(x, w, b), r); }, {{"input", x}, {"weight", w}, {"bias", b}}, layer);
  }
  {
    auto a = s.normal({2, 5}), b = s.normal({2, 5});
    auto r = s.normal({2, 5}, 1.0, false);
    run("add", [&] { return project(add(a, b), r); }, {{"a", a}, {"b", b}}, layer);
    run("mul", [&] { return project(mul(a, b), r); }, {{"a", a}, {"b", b}}, layer);
  }
  {
    auto p = s.uniform({4, 2}, 0.1f, 0.9f);
    std::vector<BehaviourLabel> t{{true, false}, {false, false}, {true, true}, {false, true}};
    run("behaviour_loss", [&] { return behaviour_loss(p, t); }, {{"pred", p}}, layer);
  }
  {
    auto logits = s.normal({3, 5});
    std::vector<int> levels{1, 4, 5};
    run("density_loss", [&] { return density_loss_levels(softmax(logits), levels); }, {{"logits", logits}}, layer);
  }
  {
    auto p = s.uniform({4, 1}, 0.0f, 20.0f);
    std::vector<float> t{3.0f, 12.0f, 0.0f, 25.0f};
    run("count_reg_loss", [&] { return count_reg_loss(p, t); }, {{"pred", p}}, layer);
  }
  {
    auto p = s.uniform({2, 1, 3, 4}, 0.05f, 0.95f);
    std::vector<float> t(24);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (auto& v : t) v = u(s.rng());
    run("heatmap_loss", [&] { return heatmap_loss(p, t); }, {{"pred", p}}, layer);
  }

  if (options.include_model) {
    auto cfg = ResnetCrowdConfig::with_input(options.model_width, options.model_height);
    cfg.seed = options.seed;
    auto model = std::make_shared<ResnetCrowdModel>(cfg);
    auto images = s.normal({2, 3, cfg.input_height, cfg.input_width}, 1.0, false);
    std::vector<BehaviourLabel> beh{{true, false}, {false, true}};
    std::vector<int> levels{2, 5};
    // Count targets sit near the initial prediction: a float32 loss of
    // magnitude L carries quantisation noise ~L * 6e-8, which the central
    // difference divides by epsilon.
    std::vector<float> counts;
    {
      const ForwardOutput probe = model->forward(images, Mode::kTrain);
      counts = {probe.count.at(0) + 0.5f, probe.count.at(1) + 0.25f};
    }
    std::vector<float> maps(2 * cfg.heatmap_width * cfg.heatmap_height);
    std::uniform_real_distribution<float> u(0.0f, 0.3f);
    for (auto& v : maps) v = u(s.rng());
    auto loss = [&] {
      const ForwardOutput out = model->forward(images, Mode::kTrain);
      LossParts parts{behaviour_loss(out.behaviour, beh), density_loss_levels(out.density, levels),
                      count_reg_loss(out.count, counts), heatmap_loss(out.heatmap, maps)};
      return total_loss(parts, TaskMask::all());
    };
    std::vector<NamedTensor> params;
    for (const auto& p : model->parameters()) params.push_back({p.name, p.tensor});
    GradCheckOptions opt;
    opt.tolerance = options.model_tolerance;
    opt.max_coordinates = options.model_coordinates;
    opt.epsilon = options.model_epsilon;
    opt.skip_relu_kinks = true;
    opt.seed = options.seed;
    run("full model + total loss (" + std::to_string(cfg.input_width) + "x" + std::to_string(cfg.input_height) + " input)", loss, params, opt);
  }
  return cases;
}

}  // namespace resnetcrowd
