#include "stfd/tensor.hpp"

#include <cstring>
#include <sstream>
#include <unordered_set>

namespace stfd {

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, bool requires_grad) : node_(std::make_shared<Node>()) {
  for (Index d : shape) {
    if (d < 0) throw ShapeError("negative dimension in " + to_string(shape));
  }
  node_->value = Vec<Scalar>::Zero(numel(shape));
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Vec<Scalar> values, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  if (numel(shape) != values.size()) {
    throw ShapeError("shape " + to_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::scalar(Scalar v, bool requires_grad) {
  Vec<Scalar> values(1);
  values[0] = v;
  return Tensor(Shape{}, std::move(values), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from_op(Shape shape, Vec<Scalar> values,
                                       std::vector<std::shared_ptr<Node>> parents,
                                       std::function<void(Node&)> backward) {
  Tensor out(std::move(shape), std::move(values));
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  if (needs) {
    out.node_->requires_grad = true;
    out.node_->parents = std::move(parents);
    out.node_->backward = std::move(backward);
  }
  return out;
}

template <typename Scalar>
Index Tensor<Scalar>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
  }
  return node_->shape[static_cast<std::size_t>(axis)];
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::detach() const {
  return Tensor(node_->shape, node_->value, false);
}

template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  using Node = detail::Node<Scalar>;
  if (!loss.defined() || loss.size() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " +
                     (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) {
    if (node->backward) node->grad = Vec<Scalar>::Zero(node->value.size());
  }
  loss.node()->grad_slot()[0] += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward) node->backward(*node);
  }
}

template <typename Scalar>
Tensor<Scalar>& ParamStore<Scalar>::add(std::string name, Tensor<Scalar> tensor) {
  if (contains(name)) throw UsageError("duplicate parameter name '" + name + "'");
  entries_.push_back(Entry{std::move(name), std::move(tensor), {}, {}});
  return entries_.back().tensor;
}

template <typename Scalar>
bool ParamStore<Scalar>::contains(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

template <typename Scalar>
Tensor<Scalar>& ParamStore<Scalar>::at(std::string_view name) {
  for (auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw UsageError("no parameter named '" + std::string(name) + "'");
}

template <typename Scalar>
const Tensor<Scalar>& ParamStore<Scalar>::at(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw UsageError("no parameter named '" + std::string(name) + "'");
}

template <typename Scalar>
std::vector<std::string> ParamStore<Scalar>::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

template <typename Scalar>
void ParamStore<Scalar>::zero_grads() {
  for (auto& e : entries_) {
    if (e.tensor.requires_grad()) e.tensor.zero_grad();
  }
}

template <typename Scalar>
bool bitwise_equal(const ParamStore<Scalar>& a, const ParamStore<Scalar>& b) {
  if (a.size() != b.size()) return false;
  auto ib = b.begin();
  for (auto ia = a.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->name != ib->name || ia->tensor.shape() != ib->tensor.shape()) return false;
    const auto bytes = static_cast<std::size_t>(ia->tensor.size()) * sizeof(Scalar);
    if (bytes && std::memcmp(ia->tensor.data(), ib->tensor.data(), bytes) != 0) return false;
  }
  return true;
}

template class Tensor<float>;
template class Tensor<double>;
template class ParamStore<float>;
template class ParamStore<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);
template bool bitwise_equal(const ParamStore<float>&, const ParamStore<float>&);
template bool bitwise_equal(const ParamStore<double>&, const ParamStore<double>&);

}  // namespace stfd
