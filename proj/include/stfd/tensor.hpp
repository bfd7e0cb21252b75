#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "stfd/errors.hpp"

namespace stfd {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Vec = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

// One vertex of the define-by-run graph. `backward` reads `grad` of this node
// and accumulates into the grads of `parents`.
template <typename Scalar>
struct Node {
  Shape shape;
  Vec<Scalar> value;
  Vec<Scalar> grad;  // size 0 until a backward pass reaches the node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  // Grad slot of this node, allocated as zeros on first use.
  Vec<Scalar>& grad_slot() {
    if (grad.size() != value.size()) grad = Vec<Scalar>::Zero(value.size());
    return grad;
  }
};

}  // namespace detail

// Dense row-major n-d array with an optional gradient slot.
//
// Tensor is a handle: copies share the same storage and graph node. Operations
// in ops.hpp return fresh tensors whose nodes remember their inputs, so the
// graph lives exactly as long as the last handle to its output.
template <typename Scalar>
class Tensor {
 public:
  using Node = detail::Node<Scalar>;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, Vec<Scalar> values, bool requires_grad = false);

  static Tensor scalar(Scalar v, bool requires_grad = false);
  // Result of an operation; requires_grad is inherited from the parents and
  // the backward closure is dropped when no parent needs a gradient.
  static Tensor from_op(Shape shape, Vec<Scalar> values,
                        std::vector<std::shared_ptr<Node>> parents,
                        std::function<void(Node&)> backward);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  Index dim(int axis) const;
  Index size() const { return node_->value.size(); }

  Vec<Scalar>& value() { return node_->value; }
  const Vec<Scalar>& value() const { return node_->value; }
  Scalar* data() { return node_->value.data(); }
  const Scalar* data() const { return node_->value.data(); }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  Vec<Scalar>& grad() { return node_->grad; }
  const Vec<Scalar>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Vec<Scalar>::Zero(node_->value.size()); }
  void clear_grad() { node_->grad.resize(0); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  // Value of a single-element tensor.
  Scalar item() const;

  // Deep copy of the value with no graph history.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Reverse-mode sweep from a scalar loss. Leaf tensors accumulate into their
// grad slot across calls; intermediate grads are recomputed on every call.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss);

// Ordered name -> tensor map holding trainable parameters and buffers
// (batchnorm running statistics, which do not require grad). Also carries the
// Adam moment state so optimizer progress travels with the parameters.
template <typename Scalar>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<Scalar> tensor;
    Vec<Scalar> adam_m;
    Vec<Scalar> adam_v;
  };

  Tensor<Scalar>& add(std::string name, Tensor<Scalar> tensor);
  bool contains(std::string_view name) const;
  Tensor<Scalar>& at(std::string_view name);
  const Tensor<Scalar>& at(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::vector<std::string> names() const;
  void zero_grads();

  std::int64_t adam_step_count = 0;

 private:
  std::vector<Entry> entries_;
};

// Copies values into a store of a different scalar type (grads and optimizer
// state are not carried over).
template <typename To, typename From>
ParamStore<To> cast_store(const ParamStore<From>& from) {
  ParamStore<To> to;
  for (const auto& e : from) {
    Tensor<To> t(e.tensor.shape(), e.tensor.value().template cast<To>(), e.tensor.requires_grad());
    to.add(e.name, std::move(t));
  }
  return to;
}

// True when both stores hold the same names, shapes and bitwise-equal values.
template <typename Scalar>
bool bitwise_equal(const ParamStore<Scalar>& a, const ParamStore<Scalar>& b);

}  // namespace stfd
