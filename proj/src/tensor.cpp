#include "resnetcrowd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace resnetcrowd {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::shared_ptr<detail::TensorImpl> make_impl(Shape shape, std::vector<float> data, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor of shape " + shape_to_string(shape) + " cannot hold " +
                     std::to_string(data.size()) + " values");
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return impl;
}

void check_finite(std::span<const float> values, const char* op_name) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(op_name) + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<float>(n, 0.0f), requires_grad));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  if (!std::isfinite(value)) throw NumericError("full: non-finite fill value");
  auto n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<float>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
  check_finite(data, "from_data");
  return Tensor(make_impl(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(float value, bool requires_grad) { return from_data({1}, {value}, requires_grad); }

Tensor Tensor::make_result(Shape shape, std::vector<float> data, std::vector<Tensor> inputs,
                           detail::BackwardFn backward, const char* op_name) {
  check_finite(data, op_name);
  auto impl = make_impl(std::move(shape), std::move(data), false);
  bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    impl->requires_grad = true;
    auto node = std::make_shared<detail::Node>();
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.impl_);
    node->backward = std::move(backward);
    impl->grad_fn = std::move(node);
  }
  return Tensor(std::move(impl));
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<const float> Tensor::data() const { return impl_->data; }
std::span<float> Tensor::mutable_data() { return impl_->data; }

float Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw std::logic_error("requires_grad can only be changed on leaf tensors");
  impl_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return impl_->grad_fn == nullptr; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const float> Tensor::grad() const { return impl_->grad; }

std::span<float> Tensor::mutable_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(numel(), 0.0f);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

Tensor Tensor::detach() const { return from_data(shape(), impl_->data, false); }

void Tensor::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() requires a single-element loss, got shape " + shape_to_string(shape()));
  }
  if (!impl_->requires_grad) return;

  using Impl = detail::TensorImpl;

  // Post-order over nodes with history; reversed it is a valid sweep order.
  std::vector<Impl*> order;
  std::unordered_set<Impl*> visited;
  std::vector<std::pair<Impl*, std::size_t>> stack;
  if (impl_->grad_fn) {
    stack.emplace_back(impl_.get(), 0);
    visited.insert(impl_.get());
  }
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const auto& inputs = node->grad_fn->inputs;
    if (next < inputs.size()) {
      Impl* child = inputs[next++].get();
      if (child->grad_fn && child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<Impl*, std::vector<float>> pending;
  auto grad_slot = [&](Impl* t) -> std::span<float> {
    if (!t->requires_grad) return {};
    if (t->grad_fn) {
      auto& buf = pending[t];
      if (buf.empty()) buf.assign(t->data.size(), 0.0f);
      return buf;
    }
    if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0f);
    return t->grad;
  };

  grad_slot(impl_.get())[0] += 1.0f;

  std::vector<std::span<float>> slots;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* node = *it;
    auto found = pending.find(node);
    if (found == pending.end()) continue;
    std::vector<float> grad_out = std::move(found->second);
    pending.erase(found);
    slots.clear();
    for (auto& input : node->grad_fn->inputs) slots.push_back(grad_slot(input.get()));
    node->grad_fn->backward(node->data, grad_out, slots);
  }
}

}  // namespace resnetcrowd
