#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace adapterlab {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tensor;

namespace detail {

struct TensorImpl;

// One recorded operation. The output tensor owns the node; the node owns its
// inputs, so the graph lives exactly as long as the loss that reaches it.
struct GraphNode {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& output)> backward;
  const char* name = "";
};

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::shared_ptr<GraphNode> creator;

  void accumulate_grad(std::span<const double> g);
  std::span<double> grad_buffer();
};

}  // namespace detail

/// Dense row-major tensor of doubles with optional gradient tracking.
///
/// Tensor is a handle: copies share storage. Use clone() for a deep copy.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t flat_index) const { return values()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();
  void clear_grad();

  // Deep copy of values only; the copy is a graph leaf.
  Tensor clone(bool requires_grad = false) const;

  bool shares_storage_with(const Tensor& other) const { return impl_ == other.impl_; }
  bool is_leaf() const;

  // Internal: used by ops to build the graph.
  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// While alive, operations on this thread record no graph. Used for
/// evaluation passes.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

/// Reverse-mode sweep from a scalar loss. Populates grad on every tensor
/// that requires grad and is reachable from the loss, then releases the
/// recorded graph so the next step starts from a fresh one.
void backward(const Tensor& loss);

/// Topologically ordered operations reachable from `root` (inputs first).
std::vector<const detail::GraphNode*> recorded_operations(const Tensor& root);

}  // namespace adapterlab
