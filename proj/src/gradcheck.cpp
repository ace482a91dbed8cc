#include "resnetcrowd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "resnetcrowd/ops.hpp"

namespace resnetcrowd {

GradCheckReport finite_diff_check(const std::function<Tensor()>& build_loss, const std::vector<NamedTensor>& inputs,
                                  const GradCheckOptions& options) {
  if (!(options.epsilon >= 1e-4 && options.epsilon <= 1e-2)) {
    throw std::invalid_argument("finite_diff_check: epsilon must lie in [1e-4, 1e-2]");
  }
  if (options.skip_relu_kinks && !(options.min_epsilon >= 1e-4 && options.min_epsilon <= options.epsilon)) {
    throw std::invalid_argument("finite_diff_check: min_epsilon must lie in [1e-4, epsilon]");
  }
  for (const auto& in : inputs) {
    if (!in.tensor.is_leaf() || !in.tensor.requires_grad()) {
      throw std::invalid_argument("finite_diff_check: '" + in.name + "' is not a leaf requiring gradients");
    }
    Tensor t = in.tensor;
    t.zero_grad();
  }
  std::vector<std::uint8_t> base_signs, signs;
  auto evaluate = [&](std::vector<std::uint8_t>* trace) {
    if (trace) {
      trace->clear();
      testing_hooks::set_relu_sign_trace(trace);
    }
    struct Reset {
      ~Reset() { testing_hooks::set_relu_sign_trace(nullptr); }
    } reset;
    return build_loss();
  };
  evaluate(options.skip_relu_kinks ? &base_signs : nullptr).backward();

  GradCheckReport report;
  report.tolerance = options.tolerance;
  std::mt19937_64 rng(options.seed);

  for (const auto& in : inputs) {
    Tensor t = in.tensor;
    std::vector<float> analytic(t.numel(), 0.0f);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    const bool sampled = options.max_coordinates != 0 && coords.size() > options.max_coordinates;
    if (sampled) std::shuffle(coords.begin(), coords.end(), rng);
    const std::size_t wanted = sampled ? options.max_coordinates : coords.size();

    double worst_diff = 0.0, scale = 0.0;
    std::size_t checked = 0, skipped = 0;
    auto values = t.mutable_data();
    for (auto i : coords) {
      if (checked == wanted) break;
      const float original = values[i];
      double step = options.epsilon;
      float up = 0.0f, down = 0.0f;
      double loss_up = 0.0, loss_down = 0.0;
      bool kink = true;
      auto* trace = options.skip_relu_kinks ? &signs : nullptr;
      while (kink && step >= options.min_epsilon) {
        up = original + static_cast<float>(step);
        down = original - static_cast<float>(step);
        values[i] = up;
        loss_up = evaluate(trace).item();
        kink = trace && signs != base_signs;
        values[i] = down;
        loss_down = evaluate(trace).item();
        kink = kink || (trace && signs != base_signs);
        step *= 0.5;
      }
      values[i] = original;
      if (kink) {
        ++skipped;
        continue;
      }
      ++checked;
      const double numeric = (loss_up - loss_down) / (static_cast<double>(up) - static_cast<double>(down));
      worst_diff = std::max(worst_diff, std::abs(numeric - analytic[i]));
      scale = std::max({scale, std::abs(numeric), std::abs(static_cast<double>(analytic[i]))});
    }
    // A tensor with no kink-free coordinate cannot be verified.
    const double error = checked == 0 ? std::numeric_limits<double>::infinity() : worst_diff / std::max(scale, 1e-8);
    GradCheckEntry entry{in.name, error, checked, skipped};
    report.max_relative_error = std::max(report.max_relative_error, entry.max_relative_error);
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace resnetcrowd
