#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "recfno/tensor.hpp"

namespace recfno {

/// Compares reverse-mode gradients of a scalar function against central differences.
///
/// Returns max over coordinates of |analytic - numeric| / (|analytic| + |numeric| + 1e-8).
/// Complex inputs are perturbed along the real and imaginary axes separately. `x` keeps its
/// values on return; its gradient buffer holds the analytic gradient.
template <typename TensorT>
double grad_check(const std::function<Tensor(const TensorT&)>& f, TensorT x, double step = 1e-4) {
  using Scalar = typename TensorT::scalar_type;
  constexpr bool is_complex = !std::is_same_v<Scalar, double>;

  Tape::current().clear();
  const bool had_flag = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();
  backward(f(x));
  const typename TensorT::Array analytic = x.has_grad() ? x.grad() : TensorT::Array::Zero(x.size());
  x.set_requires_grad(had_flag);

  NoGradGuard no_grad;
  auto eval = [&]() { return f(x).item(); };
  auto rel = [](double a, double n) { return std::abs(a - n) / (std::abs(a) + std::abs(n) + 1e-8); };

  double worst = 0.0;
  auto& values = x.values_mut();
  for (Index i = 0; i < x.size(); ++i) {
    const Scalar saved = values[i];
    const int parts = is_complex ? 2 : 1;
    for (int part = 0; part < parts; ++part) {
      Scalar delta;
      if constexpr (is_complex) {
        delta = part == 0 ? Scalar(step, 0.0) : Scalar(0.0, step);
      } else {
        delta = step;
      }
      values[i] = saved + delta;
      const double up = eval();
      values[i] = saved - delta;
      const double down = eval();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      double exact;
      if constexpr (is_complex) {
        exact = part == 0 ? analytic[i].real() : analytic[i].imag();
      } else {
        exact = analytic[i];
      }
      worst = std::max(worst, rel(exact, numeric));
    }
  }
  return worst;
}

}  // namespace recfno
