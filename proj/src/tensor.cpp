#include "sdinet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sdinet/error.hpp"

namespace sdinet {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (const auto d : shape) {
    if (d <= 0) throw DimensionError("shape dimensions must be positive: " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto s = std::make_shared<Storage>();
  const auto n = shape_numel(shape);
  s->shape = std::move(shape);
  s->data.assign(static_cast<std::size_t>(n), value);
  s->requires_grad = requires_grad;
  return Tensor(std::move(s));
}

template <class T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw DimensionError("Tensor::from: " + std::to_string(values.size()) +
                         " values do not fill shape " + shape_str(shape));
  }
  auto s = std::make_shared<Storage>();
  s->shape = std::move(shape);
  s->data = std::move(values);
  s->requires_grad = requires_grad;
  return Tensor(std::move(s));
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return full(Shape{1}, value, requires_grad);
}

template <class T>
std::int64_t Tensor<T>::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw DimensionError("axis out of range for shape " + shape_str(shape()));
  return impl_->shape[static_cast<std::size_t>(a)];
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

template <class T>
T Tensor<T>::at(std::initializer_list<std::int64_t> index) const {
  if (static_cast<int>(index.size()) != rank()) throw DimensionError("at(): rank mismatch");
  std::int64_t flat = 0;
  std::size_t axis = 0;
  for (const auto i : index) {
    const auto d = impl_->shape[axis++];
    if (i < 0 || i >= d) throw DimensionError("at(): index out of range");
    flat = flat * d + i;
  }
  return impl_->data[static_cast<std::size_t>(flat)];
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
  return from(impl_->shape, impl_->data, false);
}

template <class T>
void GradTape<T>::backward(const Tensor<T>& loss, bool retain) {
  if (loss.numel() != 1) {
    throw UsageError("backward() requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  const auto* target = loss.storage().get();
  std::ptrdiff_t last = -1;
  for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(nodes_.size()) - 1; i >= 0; --i) {
    const auto& outs = nodes_[static_cast<std::size_t>(i)].outputs;
    if (std::any_of(outs.begin(), outs.end(), [&](const auto& o) { return o.get() == target; })) {
      last = i;
      break;
    }
  }
  if (last < 0 && !loss.requires_grad()) {
    throw UsageError("backward(): loss was not produced on the active tape");
  }
  loss.storage()->grad_buffer()[0] += T(1);
  for (std::ptrdiff_t i = last; i >= 0; --i) {
    auto& node = nodes_[static_cast<std::size_t>(i)];
    const bool live = std::any_of(node.outputs.begin(), node.outputs.end(),
                                  [](const auto& o) { return !o->grad.empty(); });
    if (live && node.backward) node.backward();
  }
  if (!retain) nodes_.clear();
}

template <class T>
GradTape<T>& active_tape() {
  thread_local GradTape<T> tape;
  return tape;
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <class T>
bool all_finite(std::span<const T> values) {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;
template class GradTape<float>;
template class GradTape<double>;
template GradTape<float>& active_tape<float>();
template GradTape<double>& active_tape<double>();
template bool all_finite<float>(std::span<const float>);
template bool all_finite<double>(std::span<const double>);

}  // namespace sdinet
