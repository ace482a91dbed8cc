#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "resnetcrowd/tensor.hpp"

namespace resnetcrowd {

enum class Mode { kTrain, kEval };

/// Per-channel affine batch normalisation parameters and running statistics.
struct BatchNormState {
  Tensor gamma;  // [C], trainable
  Tensor beta;   // [C], trainable
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float momentum = 0.1f;
  float epsilon = 1e-5f;

  static BatchNormState create(std::size_t channels);
  std::size_t channels() const { return running_mean.size(); }
};

/// Zero-padded cross-correlation. input [N,C,H,W], weight [F,C,kh,kw],
/// bias [F] or undefined. Kernel sizes must be odd.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding);

/// Train mode normalises with batch statistics and updates the running
/// statistics in `state` (unbiased variance, exponential moving average);
/// eval mode reads the running statistics only.
Tensor batch_norm(const Tensor& input, BatchNormState& state, Mode mode);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Row-wise softmax over the last axis of an [N,K] tensor.
Tensor softmax(const Tensor& x);
/// [N,C,H,W] -> [N,C]
Tensor global_avg_pool(const Tensor& x);
/// x [N,D] times weight [D,K] plus bias [K].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float factor);
/// Sum of all elements as a [1] tensor.
Tensor sum(const Tensor& x);

namespace testing_hooks {
/// While set, every relu call appends one byte per element (input > 0).
void set_relu_sign_trace(std::vector<std::uint8_t>* trace);
/// Multiplies every conv2d weight gradient by `factor`. 1.0 restores normal
/// behaviour. Used only by negative-control gradient checks.
void set_conv_weight_grad_scale(float factor);
float conv_weight_grad_scale();
}  // namespace testing_hooks

}  // namespace resnetcrowd
