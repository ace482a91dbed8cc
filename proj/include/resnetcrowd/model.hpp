#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "resnetcrowd/ops.hpp"
#include "resnetcrowd/tensor.hpp"

namespace resnetcrowd {

/// Parameter count reported for the published architecture. Kept for the
/// run metadata; the layers described here add up to fewer.
inline constexpr std::size_t kReportedParameterCount = 180934;

struct ResnetCrowdConfig {
  std::size_t input_width = 320;
  std::size_t input_height = 180;
  std::size_t backbone_channels = 64;
  std::size_t num_behaviour_concepts = 2;  // Fight, Mob
  std::size_t num_density_levels = 5;
  std::size_t heatmap_width = 160;
  std::size_t heatmap_height = 90;
  std::uint64_t seed = 0;
  // Inputs are scaled to [0,1] and then standardised per channel with these.
  std::array<float, 3> channel_mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> channel_std{0.229f, 0.224f, 0.225f};

  /// Reduced resolution used by the automated tests: 160x90 in, 80x45 maps.
  static ResnetCrowdConfig desk_scale();
  /// Same architecture at an arbitrary (even) input size.
  static ResnetCrowdConfig with_input(std::size_t width, std::size_t height);

  void validate() const;
  nlohmann::json to_json() const;
  static ResnetCrowdConfig from_json(const nlohmann::json& j);
};

enum class ParamGroup { kBackbone, kHeatmap, kCountReg, kBehaviour, kDensity };
enum class ParamKind { kWeight, kBias, kNormScale, kNormShift };

const char* to_string(ParamGroup group);

struct Parameter {
  std::string name;
  Tensor tensor;
  ParamGroup group;
  ParamKind kind;

  /// L2 regularisation applies to conv/linear weights only.
  bool decays() const { return kind == ParamKind::kWeight; }
};

/// Non-trainable state persisted with the weights (BN running statistics).
struct Buffer {
  std::string name;
  std::vector<float>* values;
};

struct ForwardOutput {
  Tensor heatmap;    // [N,1,Hh,Wh] per-pixel probabilities
  Tensor count;      // [N,1] >= 0
  Tensor behaviour;  // [N,2] (Fight, Mob) probabilities
  Tensor density;    // [N,5] softmax over levels 1..5
  Tensor features;   // [N,C] pooled backbone representation
};

/// Five-convolution residual backbone (stride-2 7x7 stem without max
/// pooling, then two basic blocks) feeding four task heads.
class ResnetCrowdModel {
 public:
  explicit ResnetCrowdModel(const ResnetCrowdConfig& config);

  ResnetCrowdModel(const ResnetCrowdModel&) = delete;
  ResnetCrowdModel& operator=(const ResnetCrowdModel&) = delete;
  ResnetCrowdModel(ResnetCrowdModel&&) = default;
  ResnetCrowdModel& operator=(ResnetCrowdModel&&) = default;

  const ResnetCrowdConfig& config() const { return config_; }

  /// images: [N,3,input_height,input_width], already standardised.
  ForwardOutput forward(const Tensor& images, Mode mode);

  /// Every trainable tensor in serialisation order.
  std::vector<Parameter> parameters() const;
  std::vector<Buffer> buffers();
  std::size_t parameter_count() const;
  std::size_t backbone_convolution_count() const { return 1 + 2 * blocks_.size(); }

  /// Deep copy with fresh parameter storage.
  ResnetCrowdModel clone() const;

 private:
  struct BasicBlock {
    Tensor conv_a;
    BatchNormState bn_a;
    Tensor conv_b;
    BatchNormState bn_b;
  };

  Tensor run_block(BasicBlock& block, const Tensor& x, Mode mode);

  ResnetCrowdConfig config_;
  Tensor conv1_;
  BatchNormState bn1_;
  std::vector<BasicBlock> blocks_;
  Tensor heatmap_weight_, heatmap_bias_;
  Tensor count_weight_, count_bias_;
  Tensor behaviour_weight_, behaviour_bias_;
  Tensor density_weight_, density_bias_;
};

/// Converts interleaved RGB values in [0,1] (HWC) into one standardised
/// CHW slice of a batch tensor.
void standardize_into(std::span<const float> rgb_hwc, std::size_t width, std::size_t height,
                      const ResnetCrowdConfig& config, std::span<float> chw_out);

}  // namespace resnetcrowd
