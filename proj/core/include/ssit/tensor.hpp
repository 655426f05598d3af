#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ssit {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Numeric mode of a computation. Training runs in train32; the gradient
// verification harness re-executes the same graph construction in check64.
// Both instantiate the identical op set, so graph topology never depends on
// the mode.
enum class Precision { train32, check64 };

template <Precision P>
struct precision_scalar;
template <>
struct precision_scalar<Precision::train32> {
  using type = float;
};
template <>
struct precision_scalar<Precision::check64> {
  using type = double;
};

template <typename T>
class BasicGraph;

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::shared_ptr<std::vector<T>> value;
  std::shared_ptr<std::vector<T>> grad;  // allocated on first touch
  bool requires_grad = false;
  int64_t id = -1;  // position in the recording graph, -1 if untracked
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;

  int64_t numel() const { return static_cast<int64_t>(value->size()); }
  std::vector<T>& grad_buffer();  // zero-initialized on demand
};

}  // namespace detail

// Value-semantics handle to an immutable result of a computation. Copying a
// tensor shares the underlying buffers; no operation mutates its inputs.
template <typename T>
class BasicTensor {
 public:
  using scalar_type = T;

  BasicTensor() = default;

  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return node_->numel(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> values() const { return {node_->value->data(), node_->value->size()}; }
  // gradient accumulated by the last backward() pass; empty if never reached
  std::span<const T> grad() const {
    if (!node_->grad) return {};
    return {node_->grad->data(), node_->grad->size()};
  }

  T item() const;          // requires numel() == 1
  bool all_finite() const;
  bool defined() const { return node_ != nullptr; }

  // --- internal wiring (used by op implementations) ---
  using node_ptr = std::shared_ptr<detail::Node<T>>;
  BasicTensor(node_ptr n, BasicGraph<T>* g) : node_(std::move(n)), graph_(g) {}
  const node_ptr& node() const { return node_; }
  BasicGraph<T>* graph() const { return graph_; }

 private:
  node_ptr node_;
  BasicGraph<T>* graph_ = nullptr;
};

// Tape of executed differentiable operations in forward execution order.
// backward() replays it strictly in reverse, so gradient accumulation order
// is deterministic.
template <typename T>
class BasicGraph {
 public:
  BasicGraph() = default;
  BasicGraph(const BasicGraph&) = delete;
  BasicGraph& operator=(const BasicGraph&) = delete;

  BasicTensor<T> leaf(Shape shape, std::vector<T> data, bool requires_grad);
  BasicTensor<T> scalar_leaf(T v, bool requires_grad = false);

  // Leaf whose value and gradient alias externally owned buffers (model
  // parameters). The gradient buffer must be pre-sized and is accumulated
  // into, not overwritten.
  BasicTensor<T> leaf_shared(Shape shape, std::shared_ptr<std::vector<T>> value,
                             std::shared_ptr<std::vector<T>> grad,
                             bool requires_grad);

  // Record a computed node. inputs may span tracked and untracked tensors;
  // the node joins the tape only if some input requires a gradient.
  BasicTensor<T> make_node(Shape shape, std::vector<T> values,
                           std::vector<BasicTensor<T>> inputs,
                           std::function<void(detail::Node<T>&)> backprop);

  // Populates gradients of every requires_grad tensor reachable from loss.
  // loss must be scalar. Gradients accumulate additively across uses.
  void backward(const BasicTensor<T>& loss);

  size_t recorded_nodes() const { return tape_.size(); }

 private:
  std::vector<std::shared_ptr<detail::Node<T>>> tape_;
};

using Tensor = BasicTensor<float>;
using Graph = BasicGraph<float>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;
extern template class BasicGraph<float>;
extern template class BasicGraph<double>;

}  // namespace ssit
