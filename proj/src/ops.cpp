#include "resnetcrowd/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace resnetcrowd {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

float g_conv_weight_grad_scale = 1.0f;
std::vector<std::uint8_t>* g_relu_sign_trace = nullptr;

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (!t.defined() || t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     (t.defined() ? ", got " + shape_to_string(t.shape()) : ", got undefined tensor"));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kernel_h, kernel_w;
  std::size_t out_h, out_w;
  int stride, padding;

  std::size_t patch() const { return channels * kernel_h * kernel_w; }
  std::size_t pixels() const { return out_h * out_w; }
  bool pointwise() const { return kernel_h == 1 && kernel_w == 1 && stride == 1 && padding == 0; }
};

// col has shape [C*kh*kw, out_h*out_w]
void im2col(const float* image, const ConvGeometry& g, float* col) {
  const std::size_t pixels = g.pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    const float* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        float* row = col + ((c * g.kernel_h + ki) * g.kernel_w + kj) * pixels;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.padding + static_cast<long>(ki);
          float* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0f);
            continue;
          }
          const float* src = plane + iy * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.padding + static_cast<long>(kj);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? 0.0f : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, const ConvGeometry& g, float* image) {
  const std::size_t pixels = g.pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    float* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        const float* row = col + ((c * g.kernel_h + ki) * g.kernel_w + kj) * pixels;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.padding + static_cast<long>(ki);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          float* dst = plane + iy * g.width;
          const float* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.padding + static_cast<long>(kj);
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

namespace testing_hooks {
void set_relu_sign_trace(std::vector<std::uint8_t>* trace) { g_relu_sign_trace = trace; }
void set_conv_weight_grad_scale(float factor) { g_conv_weight_grad_scale = factor; }
float conv_weight_grad_scale() { return g_conv_weight_grad_scale; }
}  // namespace testing_hooks

BatchNormState BatchNormState::create(std::size_t channels) {
  BatchNormState s;
  s.gamma = Tensor::full({channels}, 1.0f, true);
  s.beta = Tensor::zeros({channels}, true);
  s.running_mean.assign(channels, 0.0f);
  s.running_var.assign(channels, 1.0f);
  return s;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  const std::size_t batch = input.dim(0);
  const std::size_t filters = weight.dim(0);
  if (weight.dim(1) != input.dim(1)) {
    throw ShapeError("conv2d: input has " + std::to_string(input.dim(1)) + " channels but weight " +
                     shape_to_string(weight.shape()) + " expects " + std::to_string(weight.dim(1)));
  }
  if (weight.dim(2) % 2 == 0 || weight.dim(3) % 2 == 0) {
    throw ShapeError("conv2d: kernel sizes must be odd, got " + shape_to_string(weight.shape()));
  }
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
  if (bias.defined() && bias.shape() != Shape{filters}) {
    throw ShapeError("conv2d: bias shape " + shape_to_string(bias.shape()) + " does not match " +
                     std::to_string(filters) + " filters");
  }

  ConvGeometry g{};
  g.channels = input.dim(1);
  g.height = input.dim(2);
  g.width = input.dim(3);
  g.kernel_h = weight.dim(2);
  g.kernel_w = weight.dim(3);
  g.stride = stride;
  g.padding = padding;
  const long span_h = static_cast<long>(g.height) + 2 * padding - static_cast<long>(g.kernel_h);
  const long span_w = static_cast<long>(g.width) + 2 * padding - static_cast<long>(g.kernel_w);
  if (span_h < 0 || span_w < 0) throw ShapeError("conv2d: kernel larger than padded input");
  g.out_h = static_cast<std::size_t>(span_h / stride + 1);
  g.out_w = static_cast<std::size_t>(span_w / stride + 1);

  const std::size_t patch = g.patch();
  const std::size_t pixels = g.pixels();
  const std::size_t in_stride = g.channels * g.height * g.width;
  std::vector<float> out(batch * filters * pixels);
  std::vector<float> col(g.pointwise() ? 0 : patch * pixels);

  ConstMatrixMap w(weight.data().data(), filters, patch);
  for (std::size_t n = 0; n < batch; ++n) {
    const float* image = input.data().data() + n * in_stride;
    const float* cols = image;
    if (!g.pointwise()) {
      im2col(image, g, col.data());
      cols = col.data();
    }
    MatrixMap y(out.data() + n * filters * pixels, filters, pixels);
    y.noalias() = w * ConstMatrixMap(cols, patch, pixels);
    if (bias.defined()) {
      for (std::size_t f = 0; f < filters; ++f) y.row(f).array() += bias.data()[f];
    }
  }

  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  auto backward = [input, weight, g, batch, filters](std::span<const float>, std::span<const float> grad_out,
                                                     std::span<const std::span<float>> grad_in) {
    const std::size_t patch = g.patch();
    const std::size_t pixels = g.pixels();
    const std::size_t in_stride = g.channels * g.height * g.width;
    const bool want_input = !grad_in[0].empty();
    const bool want_weight = !grad_in[1].empty();
    const bool want_bias = grad_in.size() > 2 && !grad_in[2].empty();

    ConstMatrixMap w(weight.data().data(), filters, patch);
    RowMatrix weight_grad;
    if (want_weight) weight_grad = RowMatrix::Zero(filters, patch);
    std::vector<float> col(g.pointwise() ? 0 : patch * pixels);
    RowMatrix col_grad;

    for (std::size_t n = 0; n < batch; ++n) {
      ConstMatrixMap dy(grad_out.data() + n * filters * pixels, filters, pixels);
      if (want_bias) {
        for (std::size_t f = 0; f < filters; ++f) grad_in[2][f] += dy.row(f).sum();
      }
      const float* image = input.data().data() + n * in_stride;
      if (want_weight) {
        const float* cols = image;
        if (!g.pointwise()) {
          im2col(image, g, col.data());
          cols = col.data();
        }
        weight_grad.noalias() += dy * ConstMatrixMap(cols, patch, pixels).transpose();
      }
      if (want_input) {
        float* dx = grad_in[0].data() + n * in_stride;
        if (g.pointwise()) {
          MatrixMap(dx, patch, pixels).noalias() += w.transpose() * dy;
        } else {
          col_grad.noalias() = w.transpose() * dy;
          col2im_add(col_grad.data(), g, dx);
        }
      }
    }
    if (want_weight) {
      const float factor = g_conv_weight_grad_scale;
      const float* src = weight_grad.data();
      for (std::size_t i = 0; i < grad_in[1].size(); ++i) grad_in[1][i] += factor * src[i];
    }
  };
  return Tensor::make_result({batch, filters, g.out_h, g.out_w}, std::move(out), std::move(inputs),
                             std::move(backward), "conv2d");
}

Tensor batch_norm(const Tensor& input, BatchNormState& state, Mode mode) {
  require_rank(input, 4, "batch_norm", "input");
  const std::size_t batch = input.dim(0), channels = input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);
  if (state.channels() != channels || state.gamma.numel() != channels || state.beta.numel() != channels ||
      state.running_var.size() != channels) {
    throw ShapeError("batch_norm: state has " + std::to_string(state.channels()) + " channels, input " +
                     shape_to_string(input.shape()));
  }
  const std::size_t count = batch * plane;
  if (mode == Mode::kTrain && count < 2) {
    throw std::invalid_argument("batch_norm: train mode needs at least two values per channel, got " +
                                std::to_string(count));
  }

  const float* x = input.data().data();
  const float* gamma = state.gamma.data().data();
  const float* beta = state.beta.data().data();
  std::vector<float> out(input.numel());
  std::vector<float> xhat(input.numel());
  std::vector<float> inv_std(channels);

  for (std::size_t c = 0; c < channels; ++c) {
    double mean, var;
    if (mode == Mode::kTrain) {
      double s = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const float* p = x + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      mean = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const float* p = x + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mean;
          ss += d * d;
        }
      }
      var = ss / static_cast<double>(count);
      const double unbiased = ss / static_cast<double>(count - 1);
      const double m = state.momentum;
      state.running_mean[c] = static_cast<float>((1.0 - m) * state.running_mean[c] + m * mean);
      state.running_var[c] = static_cast<float>((1.0 - m) * state.running_var[c] + m * unbiased);
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const float istd = static_cast<float>(1.0 / std::sqrt(var + state.epsilon));
    inv_std[c] = istd;
    const float mu = static_cast<float>(mean);
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t base = (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const float h = (x[base + i] - mu) * istd;
        xhat[base + i] = h;
        out[base + i] = gamma[c] * h + beta[c];
      }
    }
  }

  const bool train = mode == Mode::kTrain;
  Tensor gamma_t = state.gamma;
  auto backward = [gamma_t, xhat = std::move(xhat), inv_std = std::move(inv_std), batch, channels, plane, train](
                      std::span<const float>, std::span<const float> dy, std::span<const std::span<float>> grad_in) {
    const float* gamma = gamma_t.data().data();
    const double count = static_cast<double>(batch * plane);
    for (std::size_t c = 0; c < channels; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const std::size_t base = (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += dy[base + i];
          sum_dy_xhat += static_cast<double>(dy[base + i]) * xhat[base + i];
        }
      }
      if (!grad_in[1].empty()) grad_in[1][c] += static_cast<float>(sum_dy_xhat);
      if (!grad_in[2].empty()) grad_in[2][c] += static_cast<float>(sum_dy);
      if (grad_in[0].empty()) continue;
      const float k = gamma[c] * inv_std[c];
      if (train) {
        const float mean_dy = static_cast<float>(sum_dy / count);
        const float mean_dy_xhat = static_cast<float>(sum_dy_xhat / count);
        for (std::size_t n = 0; n < batch; ++n) {
          const std::size_t base = (n * channels + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            grad_in[0][base + i] += k * (dy[base + i] - mean_dy - xhat[base + i] * mean_dy_xhat);
          }
        }
      } else {
        for (std::size_t n = 0; n < batch; ++n) {
          const std::size_t base = (n * channels + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) grad_in[0][base + i] += k * dy[base + i];
        }
      }
    }
  };
  return Tensor::make_result(input.shape(), std::move(out), {input, state.gamma, state.beta}, std::move(backward),
                             "batch_norm");
}

Tensor relu(const Tensor& x) {
  std::vector<float> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
  if (g_relu_sign_trace) {
    for (std::size_t i = 0; i < out.size(); ++i) g_relu_sign_trace->push_back(in[i] > 0.0f);
  }
  auto backward = [](std::span<const float> y, std::span<const float> dy, std::span<const std::span<float>> grad_in) {
    // y > 0 exactly when x > 0, so the subgradient at 0 is 0.
    for (std::size_t i = 0; i < dy.size(); ++i) {
      if (y[i] > 0.0f) grad_in[0][i] += dy[i];
    }
  };
  return Tensor::make_result(x.shape(), std::move(out), {x}, std::move(backward), "relu");
}

Tensor sigmoid(const Tensor& x) {
  std::vector<float> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = in[i];
    if (v >= 0.0) {
      out[i] = static_cast<float>(1.0 / (1.0 + std::exp(-v)));
    } else {
      const double e = std::exp(v);
      out[i] = static_cast<float>(e / (1.0 + e));
    }
  }
  auto backward = [](std::span<const float> y, std::span<const float> dy, std::span<const std::span<float>> grad_in) {
    for (std::size_t i = 0; i < dy.size(); ++i) grad_in[0][i] += dy[i] * y[i] * (1.0f - y[i]);
  };
  return Tensor::make_result(x.shape(), std::move(out), {x}, std::move(backward), "sigmoid");
}

Tensor softmax(const Tensor& x) {
  require_rank(x, 2, "softmax", "input");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (cols < 2) throw ShapeError("softmax: need at least two classes, got " + shape_to_string(x.shape()));
  std::vector<float> out(x.numel());
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = in.data() + r * cols;
    const float peak = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t k = 0; k < cols; ++k) total += std::exp(static_cast<double>(row[k]) - peak);
    for (std::size_t k = 0; k < cols; ++k) {
      out[r * cols + k] = static_cast<float>(std::exp(static_cast<double>(row[k]) - peak) / total);
    }
  }
  auto backward = [rows, cols](std::span<const float> y, std::span<const float> dy,
                               std::span<const std::span<float>> grad_in) {
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t k = 0; k < cols; ++k) dot += static_cast<double>(dy[r * cols + k]) * y[r * cols + k];
      for (std::size_t k = 0; k < cols; ++k) {
        const std::size_t i = r * cols + k;
        grad_in[0][i] += static_cast<float>(y[i] * (dy[i] - dot));
      }
    }
  };
  return Tensor::make_result(x.shape(), std::move(out), {x}, std::move(backward), "softmax");
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool", "input");
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t area = x.dim(2) * x.dim(3);
  std::vector<float> out(planes);
  auto in = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < area; ++i) s += in[p * area + i];
    out[p] = static_cast<float>(s / static_cast<double>(area));
  }
  auto backward = [planes, area](std::span<const float>, std::span<const float> dy,
                                 std::span<const std::span<float>> grad_in) {
    const float inv = 1.0f / static_cast<float>(area);
    for (std::size_t p = 0; p < planes; ++p) {
      const float g = dy[p] * inv;
      float* dst = grad_in[0].data() + p * area;
      for (std::size_t i = 0; i < area; ++i) dst[i] += g;
    }
  };
  return Tensor::make_result({x.dim(0), x.dim(1)}, std::move(out), {x}, std::move(backward), "global_avg_pool");
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  const std::size_t rows = x.dim(0), in_dim = x.dim(1), out_dim = weight.dim(1);
  if (weight.dim(0) != in_dim) {
    throw ShapeError("linear: input " + shape_to_string(x.shape()) + " incompatible with weight " +
                     shape_to_string(weight.shape()));
  }
  if (!bias.defined() || bias.shape() != Shape{out_dim}) {
    throw ShapeError("linear: bias must have shape [" + std::to_string(out_dim) + "]");
  }
  std::vector<float> out(rows * out_dim);
  MatrixMap y(out.data(), rows, out_dim);
  y.noalias() = ConstMatrixMap(x.data().data(), rows, in_dim) * ConstMatrixMap(weight.data().data(), in_dim, out_dim);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < out_dim; ++k) y(r, k) += bias.data()[k];
  }
  auto backward = [x, weight, rows, in_dim, out_dim](std::span<const float>, std::span<const float> dy_span,
                                                     std::span<const std::span<float>> grad_in) {
    ConstMatrixMap dy(dy_span.data(), rows, out_dim);
    if (!grad_in[0].empty()) {
      MatrixMap(grad_in[0].data(), rows, in_dim).noalias() +=
          dy * ConstMatrixMap(weight.data().data(), in_dim, out_dim).transpose();
    }
    if (!grad_in[1].empty()) {
      MatrixMap(grad_in[1].data(), in_dim, out_dim).noalias() +=
          ConstMatrixMap(x.data().data(), rows, in_dim).transpose() * dy;
    }
    if (!grad_in[2].empty()) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < out_dim; ++k) grad_in[2][k] += dy(r, k);
      }
    }
  };
  return Tensor::make_result({rows, out_dim}, std::move(out), {x, weight, bias}, std::move(backward), "linear");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto backward = [](std::span<const float>, std::span<const float> dy, std::span<const std::span<float>> grad_in) {
    for (auto slot : grad_in) {
      if (slot.empty()) continue;
      for (std::size_t i = 0; i < dy.size(); ++i) slot[i] += dy[i];
    }
  };
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, std::move(backward), "add");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto backward = [a, b](std::span<const float>, std::span<const float> dy, std::span<const std::span<float>> grad_in) {
    if (!grad_in[0].empty()) {
      for (std::size_t i = 0; i < dy.size(); ++i) grad_in[0][i] += dy[i] * b.data()[i];
    }
    if (!grad_in[1].empty()) {
      for (std::size_t i = 0; i < dy.size(); ++i) grad_in[1][i] += dy[i] * a.data()[i];
    }
  };
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, std::move(backward), "mul");
}

Tensor scale(const Tensor& x, float factor) {
  std::vector<float> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  auto backward = [factor](std::span<const float>, std::span<const float> dy,
                           std::span<const std::span<float>> grad_in) {
    for (std::size_t i = 0; i < dy.size(); ++i) grad_in[0][i] += factor * dy[i];
  };
  return Tensor::make_result(x.shape(), std::move(out), {x}, std::move(backward), "scale");
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (float v : x.data()) s += v;
  auto backward = [](std::span<const float>, std::span<const float> dy, std::span<const std::span<float>> grad_in) {
    for (auto& g : grad_in[0]) g += dy[0];
  };
  return Tensor::make_result({1}, {static_cast<float>(s)}, {x}, std::move(backward), "sum");
}

}  // namespace resnetcrowd
