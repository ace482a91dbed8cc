#include "resnetcrowd/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace resnetcrowd {

namespace {

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<float> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<float>(dist(rng));
  return Tensor::from_data(std::move(shape), std::move(values), true);
}

Tensor he_normal(Shape shape, std::mt19937_64& rng) {
  const std::size_t fan_in = shape[1] * shape[2] * shape[3];
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<float> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<float>(dist(rng));
  return Tensor::from_data(std::move(shape), std::move(values), true);
}

}  // namespace

ResnetCrowdConfig ResnetCrowdConfig::desk_scale() { return with_input(160, 90); }

ResnetCrowdConfig ResnetCrowdConfig::with_input(std::size_t width, std::size_t height) {
  ResnetCrowdConfig c;
  c.input_width = width;
  c.input_height = height;
  c.heatmap_width = width / 2;
  c.heatmap_height = height / 2;
  return c;
}

void ResnetCrowdConfig::validate() const {
  if (input_width < 2 || input_height < 2 || input_width % 2 || input_height % 2) {
    throw std::invalid_argument("model config: input resolution must be even and at least 2x2");
  }
  if (heatmap_width * 2 != input_width || heatmap_height * 2 != input_height) {
    throw std::invalid_argument("model config: heatmap resolution must be half the input resolution");
  }
  if (backbone_channels == 0) throw std::invalid_argument("model config: backbone_channels must be positive");
  if (num_behaviour_concepts != 2) throw std::invalid_argument("model config: exactly two behaviour concepts");
  if (num_density_levels != 5) throw std::invalid_argument("model config: exactly five density levels");
  for (float s : channel_std) {
    if (!(s > 0.0f)) throw std::invalid_argument("model config: channel_std must be positive");
  }
}

nlohmann::json ResnetCrowdConfig::to_json() const {
  return {{"input_width", input_width},
          {"input_height", input_height},
          {"backbone_channels", backbone_channels},
          {"num_behaviour_concepts", num_behaviour_concepts},
          {"num_density_levels", num_density_levels},
          {"heatmap_width", heatmap_width},
          {"heatmap_height", heatmap_height},
          {"seed", seed},
          {"channel_mean", channel_mean},
          {"channel_std", channel_std}};
}

ResnetCrowdConfig ResnetCrowdConfig::from_json(const nlohmann::json& j) {
  ResnetCrowdConfig c;
  c.input_width = j.at("input_width").get<std::size_t>();
  c.input_height = j.at("input_height").get<std::size_t>();
  c.backbone_channels = j.at("backbone_channels").get<std::size_t>();
  c.num_behaviour_concepts = j.at("num_behaviour_concepts").get<std::size_t>();
  c.num_density_levels = j.at("num_density_levels").get<std::size_t>();
  c.heatmap_width = j.at("heatmap_width").get<std::size_t>();
  c.heatmap_height = j.at("heatmap_height").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.channel_mean = j.at("channel_mean").get<std::array<float, 3>>();
  c.channel_std = j.at("channel_std").get<std::array<float, 3>>();
  c.validate();
  return c;
}

const char* to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::kBackbone: return "backbone";
    case ParamGroup::kHeatmap: return "heatmap";
    case ParamGroup::kCountReg: return "count_reg";
    case ParamGroup::kBehaviour: return "behaviour";
    case ParamGroup::kDensity: return "density";
  }
  return "unknown";
}

ResnetCrowdModel::ResnetCrowdModel(const ResnetCrowdConfig& config) : config_(config) {
  config_.validate();
  const std::size_t c = config_.backbone_channels;
  std::mt19937_64 rng(config_.seed);

  conv1_ = he_normal({c, 3, 7, 7}, rng);
  bn1_ = BatchNormState::create(c);
  blocks_.resize(2);
  for (auto& block : blocks_) {
    block.conv_a = he_normal({c, c, 3, 3}, rng);
    block.bn_a = BatchNormState::create(c);
    block.conv_b = he_normal({c, c, 3, 3}, rng);
    block.bn_b = BatchNormState::create(c);
  }

  heatmap_weight_ = xavier_uniform({1, c, 1, 1}, c, 1, rng);
  heatmap_bias_ = Tensor::zeros({1}, true);
  // Pooled features are non-negative (they follow a relu), so a count head
  // with negative net weight would start with a dead output relu. The draw is
  // Xavier uniform folded onto [0, bound].
  count_weight_ = xavier_uniform({c, 1}, c, 1, rng);
  for (auto& w : count_weight_.mutable_data()) w = std::abs(w);
  count_bias_ = Tensor::zeros({1}, true);
  behaviour_weight_ = xavier_uniform({c, config_.num_behaviour_concepts}, c, config_.num_behaviour_concepts, rng);
  behaviour_bias_ = Tensor::zeros({config_.num_behaviour_concepts}, true);
  density_weight_ = xavier_uniform({c, config_.num_density_levels}, c, config_.num_density_levels, rng);
  density_bias_ = Tensor::zeros({config_.num_density_levels}, true);
}

Tensor ResnetCrowdModel::run_block(BasicBlock& block, const Tensor& x, Mode mode) {
  Tensor y = relu(batch_norm(conv2d(x, block.conv_a, {}, 1, 1), block.bn_a, mode));
  y = batch_norm(conv2d(y, block.conv_b, {}, 1, 1), block.bn_b, mode);
  return relu(add(x, y));
}

ForwardOutput ResnetCrowdModel::forward(const Tensor& images, Mode mode) {
  const Shape expected{images.defined() && images.rank() == 4 ? images.dim(0) : 0, 3, config_.input_height,
                       config_.input_width};
  if (!images.defined() || images.rank() != 4 || images.dim(0) == 0 || images.shape() != expected) {
    throw ShapeError("forward: expected images of shape [N,3," + std::to_string(config_.input_height) + "," +
                     std::to_string(config_.input_width) + "], got " +
                     (images.defined() ? shape_to_string(images.shape()) : std::string("undefined")));
  }
  Tensor x = relu(batch_norm(conv2d(images, conv1_, {}, 2, 3), bn1_, mode));
  for (auto& block : blocks_) x = run_block(block, x, mode);

  ForwardOutput out;
  out.heatmap = sigmoid(conv2d(x, heatmap_weight_, heatmap_bias_, 1, 0));
  out.features = global_avg_pool(x);
  out.count = relu(linear(out.features, count_weight_, count_bias_));
  out.behaviour = sigmoid(linear(out.features, behaviour_weight_, behaviour_bias_));
  out.density = softmax(linear(out.features, density_weight_, density_bias_));
  return out;
}

std::vector<Parameter> ResnetCrowdModel::parameters() const {
  std::vector<Parameter> params;
  auto add_bn = [&](const std::string& prefix, const BatchNormState& bn) {
    params.push_back({prefix + ".gamma", bn.gamma, ParamGroup::kBackbone, ParamKind::kNormScale});
    params.push_back({prefix + ".beta", bn.beta, ParamGroup::kBackbone, ParamKind::kNormShift});
  };
  params.push_back({"conv1.weight", conv1_, ParamGroup::kBackbone, ParamKind::kWeight});
  add_bn("bn1", bn1_);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string prefix = "block" + std::to_string(b + 1);
    params.push_back({prefix + ".conv_a.weight", blocks_[b].conv_a, ParamGroup::kBackbone, ParamKind::kWeight});
    add_bn(prefix + ".bn_a", blocks_[b].bn_a);
    params.push_back({prefix + ".conv_b.weight", blocks_[b].conv_b, ParamGroup::kBackbone, ParamKind::kWeight});
    add_bn(prefix + ".bn_b", blocks_[b].bn_b);
  }
  params.push_back({"head_heatmap.weight", heatmap_weight_, ParamGroup::kHeatmap, ParamKind::kWeight});
  params.push_back({"head_heatmap.bias", heatmap_bias_, ParamGroup::kHeatmap, ParamKind::kBias});
  params.push_back({"head_count.weight", count_weight_, ParamGroup::kCountReg, ParamKind::kWeight});
  params.push_back({"head_count.bias", count_bias_, ParamGroup::kCountReg, ParamKind::kBias});
  params.push_back({"head_behaviour.weight", behaviour_weight_, ParamGroup::kBehaviour, ParamKind::kWeight});
  params.push_back({"head_behaviour.bias", behaviour_bias_, ParamGroup::kBehaviour, ParamKind::kBias});
  params.push_back({"head_density.weight", density_weight_, ParamGroup::kDensity, ParamKind::kWeight});
  params.push_back({"head_density.bias", density_bias_, ParamGroup::kDensity, ParamKind::kBias});
  return params;
}

std::vector<Buffer> ResnetCrowdModel::buffers() {
  std::vector<Buffer> out;
  auto add_bn = [&](const std::string& prefix, BatchNormState& bn) {
    out.push_back({prefix + ".running_mean", &bn.running_mean});
    out.push_back({prefix + ".running_var", &bn.running_var});
  };
  add_bn("bn1", bn1_);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string prefix = "block" + std::to_string(b + 1);
    add_bn(prefix + ".bn_a", blocks_[b].bn_a);
    add_bn(prefix + ".bn_b", blocks_[b].bn_b);
  }
  return out;
}

std::size_t ResnetCrowdModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

ResnetCrowdModel ResnetCrowdModel::clone() const {
  ResnetCrowdModel copy(config_);
  auto src = parameters();
  auto dst = copy.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto values = src[i].tensor.data();
    std::copy(values.begin(), values.end(), dst[i].tensor.mutable_data().begin());
  }
  auto copy_stats = [](const BatchNormState& from, BatchNormState& to) {
    to.running_mean = from.running_mean;
    to.running_var = from.running_var;
  };
  copy_stats(bn1_, copy.bn1_);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    copy_stats(blocks_[b].bn_a, copy.blocks_[b].bn_a);
    copy_stats(blocks_[b].bn_b, copy.blocks_[b].bn_b);
  }
  return copy;
}

void standardize_into(std::span<const float> rgb_hwc, std::size_t width, std::size_t height,
                      const ResnetCrowdConfig& config, std::span<float> chw_out) {
  const std::size_t plane = width * height;
  if (rgb_hwc.size() != plane * 3 || chw_out.size() != plane * 3) {
    throw ShapeError("standardize_into: buffer sizes do not match " + std::to_string(width) + "x" +
                     std::to_string(height) + "x3");
  }
  for (std::size_t c = 0; c < 3; ++c) {
    const float mean = config.channel_mean[c];
    const float inv_std = 1.0f / config.channel_std[c];
    for (std::size_t i = 0; i < plane; ++i) chw_out[c * plane + i] = (rgb_hwc[i * 3 + c] - mean) * inv_std;
  }
}

}  // namespace resnetcrowd
