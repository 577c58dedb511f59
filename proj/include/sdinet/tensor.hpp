#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sdinet {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

template <class T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::F32; }
template <>
constexpr DType dtype_of<double>() { return DType::F64; }

template <class T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a backward pass touches this tensor
  bool requires_grad = false;

  std::span<T> grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

/// Dense row-major tensor handle. Copies share storage; values are treated as
/// immutable once an op has consumed them, except for parameters which the
/// optimizer updates in place between steps.
template <class T>
class Tensor {
 public:
  using value_type = T;
  using Storage = TensorStorage<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Storage> storage) : impl_(std::move(storage)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  // Negative indices count from the back.
  std::int64_t dim(int axis) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<const T> data() const { return impl_->data; }
  std::span<T> mutable_data() { return impl_->data; }
  const std::vector<T>& values() const { return impl_->data; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->grad_buffer(); }
  void zero_grad() { impl_->grad.clear(); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }

  T item() const;
  T at(std::initializer_list<std::int64_t> index) const;

  // Same values, no gradient history, independent storage.
  Tensor detach() const;

  const std::shared_ptr<Storage>& storage() const { return impl_; }
  const void* id() const { return impl_.get(); }

 private:
  std::shared_ptr<Storage> impl_;
};

/// One recorded op. `backward` reads the output grads and accumulates into
/// the inputs that require grad.
template <class T>
struct TapeNode {
  std::string_view op;
  std::vector<std::shared_ptr<TensorStorage<T>>> inputs;
  std::vector<std::shared_ptr<TensorStorage<T>>> outputs;
  std::function<void()> backward;
};

/// Ordered record of differentiable ops on the current thread. Nodes are
/// appended when created, so the list is always in topological order.
template <class T>
class GradTape {
 public:
  void record(TapeNode<T> node) { nodes_.push_back(std::move(node)); }
  const std::vector<TapeNode<T>>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and walks the tape backwards. Grads accumulate
  /// into every tensor that requires grad. The tape is cleared afterwards
  /// unless `retain` is set.
  void backward(const Tensor<T>& loss, bool retain = false);

 private:
  std::vector<TapeNode<T>> nodes_;
};

template <class T>
GradTape<T>& active_tape();

bool grad_enabled();

/// Disables tape recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <class T>
void backward(const Tensor<T>& loss, bool retain = false) {
  active_tape<T>().backward(loss, retain);
}

template <class T>
bool all_finite(std::span<const T> values);

}  // namespace sdinet
