#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace stflow::ad {

/// Up to four axes; by convention (batch, time, node, channel).
using Shape = std::vector<std::size_t>;

inline constexpr std::size_t kMaxRank = 4;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

/// Cache-line aligned storage. Eigen peels vectorized loops by address, so
/// a fixed base alignment keeps the summation order, and hence every
/// rounding, identical from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

class Tensor;

namespace detail {

struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;  // sized on first use when requires_grad
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  Buffer& ensure_grad();
};

}  // namespace detail

/// Handle to a dense float64 array that may take part in reverse-mode
/// differentiation. Copies share storage; use detach() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  /// Direct write access, for leaves (initialization, optimizer updates).
  std::span<double> mutable_values();
  double item() const;

  bool requires_grad() const;
  /// Empty span until a backward pass reaches this tensor.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Value copy with no history.
  Tensor detach(bool requires_grad = false) const;

  const char* op_name() const;
  const std::shared_ptr<detail::Node>& node() const { return node_; }

  /// Builds an op output. `backward` is only attached when some input
  /// requires a gradient.
  static Tensor make_result(Shape shape, Buffer value, std::vector<Tensor> inputs,
                            const char* op, std::function<void(detail::Node&)> backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Operations reachable from a root, ordered so that every node appears
/// before all of its inputs (reverse topological order).
class Tape {
 public:
  static Tape record(const Tensor& root);

  std::size_t size() const { return order_.size(); }
  std::vector<std::string> op_names() const;

  /// Seeds the root gradient with 1, clears stale gradients on interior
  /// nodes and replays every backward function in order. Leaf gradients
  /// accumulate across replays.
  void replay();

 private:
  std::vector<std::shared_ptr<detail::Node>> order_;
};

/// Fills dLoss/dTensor for every requires_grad tensor reachable from `loss`.
/// Throws ShapeError when `loss` is not a scalar.
void backward(const Tensor& loss);

/// While alive on this thread, every op output is scanned for NaN/Inf
/// produced from finite inputs. Enabled by default in debug builds.
class FiniteCheckScope {
 public:
  explicit FiniteCheckScope(bool enabled = true);
  ~FiniteCheckScope();
  FiniteCheckScope(const FiniteCheckScope&) = delete;
  FiniteCheckScope& operator=(const FiniteCheckScope&) = delete;

  static bool active();

 private:
  bool previous_;
};

}  // namespace stflow::ad
