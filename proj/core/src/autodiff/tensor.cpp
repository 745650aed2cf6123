#include "stflow/autodiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "stflow/error.hpp"

namespace stflow::ad {

namespace {

thread_local bool g_finite_checks =
#ifdef NDEBUG
    false;
#else
    true;
#endif

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void check_rank(const Shape& shape) {
  if (shape.size() > kMaxRank) throw ShapeError("rank above 4: " + to_string(shape));
}

}  // namespace

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Buffer& detail::Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_rank(shape);
  const std::size_t n = element_count(shape);
  return from_values(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  check_rank(shape);
  if (element_count(shape) != values.size()) {
    throw ShapeError(to_string(shape) + " needs " + std::to_string(element_count(shape)) +
                     " values, got " + std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value.assign(values.begin(), values.end());
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar " + to_string(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach(bool requires_grad) const {
  return from_values(shape(), std::vector<double>(node_->value.begin(), node_->value.end()),
                     requires_grad);
}

const char* Tensor::op_name() const { return node_->op; }

Tensor Tensor::make_result(Shape shape, Buffer value, std::vector<Tensor> inputs,
                           const char* op, std::function<void(detail::Node&)> backward) {
  check_rank(shape);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (FiniteCheckScope::active() && !all_finite(node->value)) {
    const bool inputs_finite = std::all_of(inputs.begin(), inputs.end(),
                                           [](const Tensor& t) { return all_finite(t.values()); });
    if (inputs_finite) throw NumericalError(std::string("non-finite output from op '") + op + "'");
  }
  const bool needs_grad =
      std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (needs_grad) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

Tape Tape::record(const Tensor& root) {
  Tape tape;
  if (!root.requires_grad()) return tape;
  // Iterative post-order DFS: inputs finish before the nodes that use them.
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  std::vector<std::shared_ptr<detail::Node>> post;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (child->requires_grad && visited.insert(child.get()).second) {
        stack.emplace_back(std::move(child), 0);
      }
    } else {
      post.push_back(node);
      stack.pop_back();
    }
  }
  tape.order_.assign(post.rbegin(), post.rend());
  return tape;
}

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(order_.size());
  for (const auto& n : order_) names.emplace_back(n->op);
  return names;
}

void Tape::replay() {
  if (order_.empty()) return;
  for (auto& n : order_) {
    if (n->backward) {
      n->ensure_grad();
      std::fill(n->grad.begin(), n->grad.end(), 0.0);
    }
  }
  order_.front()->ensure_grad()[0] += 1.0;
  for (auto& n : order_) {
    if (n->backward) n->backward(*n);
  }
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got " +
                     (loss.defined() ? to_string(loss.shape()) : std::string("undefined")));
  }
  Tape::record(loss).replay();
}

FiniteCheckScope::FiniteCheckScope(bool enabled) : previous_(g_finite_checks) {
  g_finite_checks = enabled;
}

FiniteCheckScope::~FiniteCheckScope() { g_finite_checks = previous_; }

bool FiniteCheckScope::active() { return g_finite_checks; }

}  // namespace stflow::ad
