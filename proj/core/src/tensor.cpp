#include "ssit/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ssit {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) {
    if (e <= 0) throw std::invalid_argument("tensor extent must be positive, got " + shape_str(s));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

template <typename T>
std::vector<T>& Node<T>::grad_buffer() {
  if (!grad) grad = std::make_shared<std::vector<T>>(value->size(), T(0));
  return *grad;
}

template struct Node<float>;
template struct Node<double>;

}  // namespace detail

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1)
    throw std::invalid_argument("item() requires a scalar tensor, shape is " +
                                shape_str(shape()));
  return (*node_->value)[0];
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
  for (T v : *node_->value)
    if (!std::isfinite(v)) return false;
  return true;
}

template <typename T>
BasicTensor<T> BasicGraph<T>::leaf(Shape shape, std::vector<T> data,
                                   bool requires_grad) {
  const int64_t n = shape_numel(shape);
  if (n != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("leaf data size " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  return leaf_shared(std::move(shape),
                     std::make_shared<std::vector<T>>(std::move(data)), nullptr,
                     requires_grad);
}

template <typename T>
BasicTensor<T> BasicGraph<T>::scalar_leaf(T v, bool requires_grad) {
  return leaf({1}, {v}, requires_grad);
}

template <typename T>
BasicTensor<T> BasicGraph<T>::leaf_shared(Shape shape,
                                          std::shared_ptr<std::vector<T>> value,
                                          std::shared_ptr<std::vector<T>> grad,
                                          bool requires_grad) {
  const int64_t n = shape_numel(shape);
  if (n != static_cast<int64_t>(value->size()))
    throw std::invalid_argument("leaf buffer does not match shape " + shape_str(shape));
  if (grad && grad->size() != value->size())
    throw std::invalid_argument("leaf gradient buffer size mismatch");
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->grad = std::move(grad);
  node->requires_grad = requires_grad;
  if (requires_grad) {
    node->id = static_cast<int64_t>(tape_.size());
    tape_.push_back(node);
  }
  return BasicTensor<T>(std::move(node), this);
}

template <typename T>
BasicTensor<T> BasicGraph<T>::make_node(
    Shape shape, std::vector<T> values, std::vector<BasicTensor<T>> inputs,
    std::function<void(detail::Node<T>&)> backprop) {
  const int64_t n = shape_numel(shape);
  if (n != static_cast<int64_t>(values.size()))
    throw std::invalid_argument("op output size does not match shape " + shape_str(shape));
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::make_shared<std::vector<T>>(std::move(values));
  bool needs = false;
  for (const auto& in : inputs) {
    if (in.defined() && in.requires_grad()) needs = true;
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backprop = std::move(backprop);
    node->id = static_cast<int64_t>(tape_.size());
    tape_.push_back(node);
  }
  return BasicTensor<T>(std::move(node), this);
}

template <typename T>
void BasicGraph<T>::backward(const BasicTensor<T>& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward on undefined tensor");
  if (loss.numel() != 1)
    throw std::invalid_argument("backward requires a scalar loss, shape is " +
                                shape_str(loss.shape()));
  auto& root = *loss.node();
  if (root.id < 0) {
    // loss does not depend on any tracked tensor; nothing to do
    return;
  }
  if (loss.graph() != this)
    throw std::invalid_argument("loss belongs to a different graph");
  root.grad_buffer()[0] += T(1);
  for (int64_t i = root.id; i >= 0; --i) {
    detail::Node<T>& n = *tape_[i];
    if (n.grad && n.backprop) n.backprop(n);
  }
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class BasicGraph<float>;
template class BasicGraph<double>;

}  // namespace ssit
