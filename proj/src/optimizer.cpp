#include "resnetcrowd/optimizer.hpp"

#include <cmath>

#include "resnetcrowd/checkpoint.hpp"

namespace resnetcrowd {

nlohmann::json AdaGradConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"epsilon", epsilon}, {"weight_decay", weight_decay}};
}

AdaGradConfig AdaGradConfig::from_json(const nlohmann::json& j) {
  AdaGradConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  return c;
}

AdaGrad::AdaGrad(AdaGradConfig config) : config_(config) {
  if (!(config_.learning_rate > 0.0) || !(config_.epsilon > 0.0) || !(config_.weight_decay >= 0.0)) {
    throw std::invalid_argument("AdaGrad: learning_rate and epsilon must be positive, weight_decay non-negative");
  }
}

void AdaGrad::step(std::span<const Parameter> params) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (float g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("AdaGrad: non-finite gradient in " + p.name + ", step aborted");
    }
  }
  for (const auto& p : params) {
    auto [it, inserted] = accumulators_.try_emplace(p.name, p.tensor.numel(), 0.0f);
    if (inserted) order_.push_back(p.name);
    auto& acc = it->second;
    if (acc.size() != p.tensor.numel()) {
      throw ShapeError("AdaGrad: parameter " + p.name + " changed size between steps");
    }
    Tensor t = p.tensor;
    auto w = t.mutable_data();
    const auto grad = t.grad();
    const bool has_grad = !grad.empty();
    const double decay = p.decays() ? config_.weight_decay : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = (has_grad ? static_cast<double>(grad[i]) : 0.0) + decay * w[i];
      acc[i] = static_cast<float>(acc[i] + g * g);
      if (g == 0.0) continue;
      const double delta = config_.learning_rate * g / (std::sqrt(static_cast<double>(acc[i])) + config_.epsilon);
      w[i] = static_cast<float>(w[i] - delta);
    }
  }
  ++steps_;
}

const std::vector<float>* AdaGrad::accumulator(const std::string& name) const {
  auto it = accumulators_.find(name);
  return it == accumulators_.end() ? nullptr : &it->second;
}

void AdaGrad::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  Archive archive;
  archive.header = {{"config", config_.to_json()}, {"steps", steps_}};
  for (const auto& name : order_) {
    const auto& acc = accumulators_.at(name);
    archive.entries.push_back({name, {acc.size()}, acc, false});
  }
  write_archive(dir / "optimizer.json", dir / "optimizer.bin", "resnetcrowd-optimizer", archive);
}

AdaGrad AdaGrad::load(const std::filesystem::path& dir) {
  Archive archive = read_archive(dir / "optimizer.json", dir / "optimizer.bin", "resnetcrowd-optimizer");
  AdaGrad opt(AdaGradConfig::from_json(archive.header.at("config")));
  opt.steps_ = archive.header.at("steps").get<std::size_t>();
  for (auto& e : archive.entries) {
    opt.order_.push_back(e.name);
    opt.accumulators_[e.name] = std::move(e.values);
  }
  return opt;
}

void zero_grads(std::span<const Parameter> params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.mutable_grad();
    t.zero_grad();
  }
}

}  // namespace resnetcrowd
