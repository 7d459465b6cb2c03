#pragma once

#include <complex>
#include <functional>
#include <memory>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "recfno/errors.hpp"

namespace recfno {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Complex = std::complex<double>;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixC = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Index shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
template <typename Scalar>
bool all_finite(const Eigen::Array<Scalar, Eigen::Dynamic, 1>& values) {
  if constexpr (std::is_same_v<Scalar, Complex>) {
    return values.real().allFinite() && values.imag().allFinite();
  } else {
    return values.allFinite();
  }
}
}  // namespace detail

/// Dense row-major array of `Scalar` with an optional gradient buffer.
///
/// Copies share storage (handle semantics); use clone() for a deep copy. Gradients follow the
/// convention grad = dL/dRe + i dL/dIm for complex scalars, so a complex tensor can be optimised
/// as two independent real components.
template <typename Scalar>
class BasicTensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using scalar_type = Scalar;

  BasicTensor() = default;

  /// Creates a tensor from user data; rejects shape mismatches and non-finite values.
  BasicTensor(Shape shape, Array values) {
    if (shape_size(shape) != values.size()) {
      throw ShapeError("tensor: shape " + shape_string(shape) + " does not hold " +
                       std::to_string(values.size()) + " values");
    }
    if (!detail::all_finite(values)) throw NumericError("tensor: non-finite value at creation");
    impl_ = std::make_shared<Impl>(Impl{std::move(shape), std::move(values), Array(), false});
  }

  /// Internal constructor used by differentiable operations; no finiteness screening.
  static BasicTensor wrap(Shape shape, Array values) {
    BasicTensor t;
    t.impl_ = std::make_shared<Impl>(Impl{std::move(shape), std::move(values), Array(), false});
    return t;
  }

  static BasicTensor zeros(Shape shape) {
    const Index n = shape_size(shape);
    return wrap(std::move(shape), Array::Zero(n));
  }

  static BasicTensor constant(Shape shape, Scalar value) {
    const Index n = shape_size(shape);
    return wrap(std::move(shape), Array::Constant(n, value));
  }

  static BasicTensor scalar(Scalar value) { return constant({1}, value); }

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const { return impl_->shape; }
  Index rank() const { return static_cast<Index>(impl_->shape.size()); }
  Index dim(Index axis) const { return impl_->shape.at(static_cast<std::size_t>(axis)); }
  Index size() const { return impl_->values.size(); }

  const Array& values() const { return impl_->values; }
  /// Direct write access, used by optimisers and data pipelines. Must not be used on a tensor
  /// whose value a pending backward pass still depends on.
  Array& values_mut() { return impl_->values; }

  const Scalar* data() const { return impl_->values.data(); }
  Scalar* data() { return impl_->values.data(); }

  Scalar item() const {
    if (size() != 1) throw ContractError("item(): tensor has " + std::to_string(size()) + " elements");
    return impl_->values[0];
  }

  Scalar& at(Index i, Index j, Index c) {
    return impl_->values[(i * dim(1) + j) * dim(2) + c];
  }
  Scalar at(Index i, Index j, Index c) const {
    return impl_->values[(i * dim(1) + j) * dim(2) + c];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  BasicTensor& set_requires_grad(bool flag) {
    impl_->requires_grad = flag;
    return *this;
  }

  bool has_grad() const { return impl_->grad.size() == impl_->values.size() && impl_->values.size() > 0; }

  const Array& grad() const {
    if (!has_grad()) throw ContractError("grad(): no gradient has been accumulated");
    return impl_->grad;
  }

  /// Gradient buffer, allocated as zeros on first access.
  Array& grad_mut() const {
    if (impl_->grad.size() != impl_->values.size()) impl_->grad = Array::Zero(impl_->values.size());
    return impl_->grad;
  }

  /// Adds `delta` to the gradient; the first contribution is assigned without a zero fill.
  template <typename Expr>
  void accumulate_grad(const Expr& delta) const {
    if (impl_->grad.size() != impl_->values.size()) {
      impl_->grad = delta;
    } else {
      impl_->grad += delta;
    }
  }

  void zero_grad() const { impl_->grad = Array(); }

  BasicTensor clone() const { return wrap(impl_->shape, impl_->values); }

  /// Same values, reshaped; the result is a fresh leaf.
  BasicTensor reshaped_copy(Shape shape) const {
    if (shape_size(shape) != size()) throw ShapeError("reshape: element count mismatch");
    return wrap(std::move(shape), impl_->values);
  }

  bool same_storage(const BasicTensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    Array values;
    Array grad;
    bool requires_grad;
  };
  std::shared_ptr<Impl> impl_;
};

using Tensor = BasicTensor<double>;
using ComplexTensor = BasicTensor<Complex>;

/// Ordered record of executed differentiable operations on the current thread.
///
/// Entries are appended in execution order, so walking the record backwards visits every
/// operation after all of its consumers. backward() consumes the record.
class Tape {
 public:
  using Entry = std::function<void()>;

  static Tape& current();

  void record(Entry backward_rule) { entries_.push_back(std::move(backward_rule)); }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule once, newest first.
  void backward(Tensor loss);

 private:
  std::vector<Entry> entries_;
};

bool grad_enabled();

/// Disables recording on the current thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Populates gradients of every requires-grad tensor reachable from `loss` on the current tape.
void backward(const Tensor& loss);

namespace detail {

template <typename... Ts>
bool any_requires_grad(const Ts&... ts) {
  return grad_enabled() && (ts.requires_grad() || ...);
}

void check_finite_debug(const Tensor& t, const char* op);
void check_finite_debug(const ComplexTensor& t, const char* op);

}  // namespace detail

}  // namespace recfno
