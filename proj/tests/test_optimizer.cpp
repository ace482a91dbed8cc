#include "test_support.hpp"

#include "resnetcrowd/ops.hpp"
#include "resnetcrowd/optimizer.hpp"

using namespace resnetcrowd;

namespace {

Parameter scalar_param(float w, float g, ParamKind kind = ParamKind::kWeight) {
  auto t = Tensor::from_data({1}, {w}, true);
  t.mutable_grad()[0] = g;
  return {"w", t, ParamGroup::kBackbone, kind};
}

AdaGradConfig config(double lr, double decay) {
  AdaGradConfig c;
  c.learning_rate = lr;
  c.weight_decay = decay;
  return c;
}

}  // namespace

TEST_SUITE("optimizer") {
  TEST_CASE("single step from a fresh accumulator") {
    AdaGrad opt(config(0.01, 0.0));
    std::vector<Parameter> params{scalar_param(1.0f, 0.5f)};
    opt.step(params);
    CHECK((*opt.accumulator("w"))[0] == 0.25f);
    CHECK(params[0].tensor.at(0) == doctest::Approx(0.99).epsilon(1e-7));
  }

  TEST_CASE("zero gradient without decay changes nothing") {
    AdaGrad opt(config(0.01, 0.0));
    std::vector<Parameter> params{scalar_param(1.0f, 0.0f)};
    opt.step(params);
    CHECK(params[0].tensor.at(0) == 1.0f);
    CHECK((*opt.accumulator("w"))[0] == 0.0f);
  }

  TEST_CASE("decay-only step shrinks the weight") {
    AdaGrad opt(config(0.01, 1e-4));
    std::vector<Parameter> params{scalar_param(1.0f, 0.0f)};
    opt.step(params);
    CHECK(params[0].tensor.at(0) < 1.0f);
    CHECK((*opt.accumulator("w"))[0] == doctest::Approx(1e-8));
  }

  TEST_CASE("decay skips biases and norm parameters") {
    AdaGrad opt(config(0.01, 1e-4));
    std::vector<Parameter> params{scalar_param(1.0f, 0.0f, ParamKind::kBias)};
    params[0].name = "b";
    params.push_back(scalar_param(1.0f, 0.0f, ParamKind::kNormScale));
    params[1].name = "gamma";
    opt.step(params);
    CHECK(params[0].tensor.at(0) == 1.0f);
    CHECK(params[1].tensor.at(0) == 1.0f);
  }

  TEST_CASE("trajectory matches a double-precision reference") {
    // Scalar quadratic 0.5*w^2, so g = w.
    const double lr = 0.1, eps = 1e-8, decay = 1e-3;
    AdaGradConfig c = config(lr, decay);
    c.epsilon = eps;
    AdaGrad opt(c);
    auto t = Tensor::from_data({1}, {2.0f}, true);
    std::vector<Parameter> params{{"w", t, ParamGroup::kBackbone, ParamKind::kWeight}};
    double w = 2.0, acc = 0.0;
    for (int step = 0; step < 100; ++step) {
      t.zero_grad();
      sum(scale(mul(t, t), 0.5f)).backward();
      opt.step(params);
      const double g = w + decay * w;
      acc += g * g;
      w -= lr * g / (std::sqrt(acc) + eps);
      CHECK(t.at(0) == doctest::Approx(w).epsilon(1e-5));
    }
  }

  TEST_CASE("iterates shrink monotonically on a quadratic") {
    AdaGrad opt(config(0.5, 0.0));
    auto t = Tensor::from_data({1}, {3.0f}, true);
    std::vector<Parameter> params{{"w", t, ParamGroup::kBackbone, ParamKind::kWeight}};
    float previous = std::abs(t.at(0));
    for (int step = 0; step < 200; ++step) {
      t.zero_grad();
      sum(scale(mul(t, t), 0.5f)).backward();
      opt.step(params);
      CHECK(std::abs(t.at(0)) <= previous);
      previous = std::abs(t.at(0));
    }
  }

  TEST_CASE("step magnitude is bounded by the learning rate") {
    std::mt19937_64 rng(5);
    const double lr = 0.05;
    AdaGrad opt(config(lr, 1e-4));
    auto t = test::random_tensor({64}, rng, 1.0f, true);
    std::vector<Parameter> params{{"w", t, ParamGroup::kBackbone, ParamKind::kWeight}};
    std::vector<float> previous_acc(64, 0.0f);
    for (int step = 0; step < 50; ++step) {
      t.zero_grad();
      const auto g = test::random_tensor({64}, rng, 10.0f);
      std::copy(g.data().begin(), g.data().end(), t.mutable_grad().begin());
      const auto before = test::values(t);
      opt.step(params);
      const auto& acc = *opt.accumulator("w");
      for (std::size_t i = 0; i < 64; ++i) {
        CHECK(std::abs(t.at(i) - before[i]) <= lr * (1 + 1e-5));
        CHECK(acc[i] >= previous_acc[i]);
      }
      previous_acc = acc;
    }
  }

  TEST_CASE("non-finite gradient aborts the whole step") {
    AdaGrad opt(config(0.01, 0.0));
    std::vector<Parameter> params{scalar_param(1.0f, 0.5f), scalar_param(2.0f, NAN)};
    params[1].name = "v";
    CHECK_THROWS_AS(opt.step(params), NumericError);
    CHECK(params[0].tensor.at(0) == 1.0f);
    CHECK(opt.accumulator("w") == nullptr);
    CHECK(opt.steps_taken() == 0);
  }

  TEST_CASE("zero_grads separates accumulation") {
    auto t = Tensor::from_data({2}, {1.0f, 2.0f}, true);
    std::vector<Parameter> params{{"w", t, ParamGroup::kBackbone, ParamKind::kWeight}};
    sum(mul(t, t)).backward();
    sum(mul(t, t)).backward();
    CHECK(t.grad()[1] == 8.0f);
    zero_grads(params);
    CHECK(t.grad()[1] == 0.0f);
    sum(mul(t, t)).backward();
    CHECK(t.grad()[1] == 4.0f);
    zero_grads(params);
    sum(scale(t, 0.0f)).backward();
    CHECK(t.grad()[0] == 0.0f);
    // A step after zeroing is pure decay.
    AdaGrad opt(config(0.01, 1e-4));
    opt.step(params);
    CHECK(t.at(0) < 1.0f);
  }

  TEST_CASE("identical inputs give identical trajectories") {
    auto run = [] {
      std::mt19937_64 rng(9);
      auto t = test::random_tensor({16}, rng, 1.0f, true);
      std::vector<Parameter> params{{"w", t, ParamGroup::kBackbone, ParamKind::kWeight}};
      AdaGrad opt(config(0.1, 1e-4));
      for (int i = 0; i < 20; ++i) {
        t.zero_grad();
        sum(mul(t, t)).backward();
        opt.step(params);
      }
      return test::values(t);
    };
    CHECK(run() == run());
  }

  TEST_CASE("state survives save and load") {
    const auto dir = test::scratch_dir("adagrad_state");
    AdaGrad opt(config(0.02, 1e-4));
    std::vector<Parameter> params{scalar_param(1.0f, 0.3f)};
    opt.step(params);
    opt.save(dir);
    const auto loaded = AdaGrad::load(dir);
    CHECK(loaded.steps_taken() == 1);
    CHECK(loaded.config().learning_rate == 0.02);
    CHECK(*loaded.accumulator("w") == *opt.accumulator("w"));
  }

  TEST_CASE("invalid hyperparameters are rejected") {
    CHECK_THROWS(AdaGrad(config(0.0, 0.0)));
    CHECK_THROWS(AdaGrad(config(0.01, -1.0)));
  }
}
