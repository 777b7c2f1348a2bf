// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace m3s {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is first accumulated
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major float64 array with an optional gradient buffer.
///
/// Tensor is a shared handle: copies alias the same storage. Use clone() for
/// a deep copy and detach() for a handle that never records gradients.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(impl_); }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  // Spans alias the storage, so calling these on a temporary is rejected.
  std::span<const double> data() const&;
  std::span<const double> data() const&& = delete;
  std::span<double> mutable_data() &;
  std::span<double> mutable_data() && = delete;
  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  std::span<const double> grad() const&;
  std::span<const double> grad() const&& = delete;
  /// Gradient buffer, allocated and zero-filled on first access.
  std::span<double> grad_buffer();
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const;

  /// Identity of the underlying storage; stable for the tensor's lifetime.
  const void* id() const { return impl_.get(); }

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Ordered record of differentiable operations.
///
/// Operations append themselves while a TapeScope for this tape is active and
/// at least one input requires a gradient. Because entries are appended after
/// their inputs exist, the record is already in topological order and a
/// reverse sweep visits each operation once.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Entry {
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::shared_ptr<detail::TensorImpl> output;
    BackwardFn backward;
  };

  void record(const std::vector<Tensor>& inputs, const Tensor& output, BackwardFn backward);
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

  /// Seeds d loss / d loss = 1 and runs every recorded backward rule in
  /// reverse order. Gradients accumulate into existing grad buffers.
  void backward(const Tensor& loss);

 private:
  std::vector<Entry> entries_;
};

/// Makes `tape` the recording target of the current thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording on the current thread (inference).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

void backward(Tape& tape, const Tensor& loss);

namespace detail {

/// Returns the active tape when any input requires a gradient, else nullptr.
Tape* recording_tape(std::initializer_list<const Tensor*> inputs);
Tape* recording_tape(const std::vector<Tensor>& inputs);

/// Throws NumericError when `t` holds a non-finite element.
void check_finite(const Tensor& t, const char* op);

}  // namespace detail

}  // namespace m3s
