#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace resnetcrowd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Raised when an operation receives tensors of incompatible shape.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation produces or consumes NaN/Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Tensor;

namespace detail {

struct TensorImpl;

/// Receives the forward output values, the output gradient, and the gradient
/// buffers of each input (accumulate with +=). An input that does not require
/// a gradient is handed an empty span.
using BackwardFn = std::function<void(std::span<const float> out, std::span<const float> grad_out,
                                      std::span<const std::span<float>> grad_in)>;

struct Node {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;  // null for leaves
};

}  // namespace detail

/// Dense row-major float tensor with an optional gradient buffer.
///
/// Copies share storage (handle semantics). Only leaf tensors, i.e. those
/// created directly rather than by an operation, retain gradients after
/// backward(); gradients of intermediate results live only for the duration
/// of the backward sweep. Repeated backward() calls accumulate into leaf
/// gradients until zero_grad() is called.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  /// Builds the result of a differentiable operation. Finiteness of `data`
  /// is checked here; `backward` is recorded only if some input requires a
  /// gradient.
  static Tensor make_result(Shape shape, std::vector<float> data, std::vector<Tensor> inputs,
                            detail::BackwardFn backward, const char* op_name);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const float> data() const;
  /// Writable view for parameter updates and test perturbations.
  std::span<float> mutable_data();
  float item() const;
  float at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const float> grad() const;
  std::span<float> mutable_grad();
  void zero_grad();

  /// Reverse-mode sweep from a single-element tensor.
  void backward() const;

  /// Deep copy of the values without graph history.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

}  // namespace resnetcrowd
