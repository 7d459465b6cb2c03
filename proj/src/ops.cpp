#include "recfno/ops.hpp"

#include <cmath>
#include <numbers>

#include "recfno/fft.hpp"

namespace recfno {

namespace {

using Array = Tensor::Array;
using ArrayC = ComplexTensor::Array;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_rank(const Tensor& t, Index rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

template <typename T>
T tracked(T out, const char* op) {
  detail::check_finite_debug(out, op);
  out.set_requires_grad(true);
  return out;
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

using MapRow = Eigen::Map<RowMatrix>;
using CMapRow = Eigen::Map<const RowMatrix>;

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::wrap(a.shape(), a.values() + b.values());
  if (!detail::any_requires_grad(a, b)) return out;
  out = tracked(out, "add");
  Tape::current().record([a, b, out]() mutable {
    if (!out.has_grad()) return;
    if (a.requires_grad()) a.accumulate_grad(out.grad());
    if (b.requires_grad()) b.accumulate_grad(out.grad());
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = Tensor::wrap(a.shape(), a.values() - b.values());
  if (!detail::any_requires_grad(a, b)) return out;
  out = tracked(out, "sub");
  Tape::current().record([a, b, out]() mutable {
    if (!out.has_grad()) return;
    if (a.requires_grad()) a.accumulate_grad(out.grad());
    if (b.requires_grad()) b.accumulate_grad(-out.grad());
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::wrap(a.shape(), a.values() * b.values());
  if (!detail::any_requires_grad(a, b)) return out;
  out = tracked(out, "mul");
  Tape::current().record([a, b, out]() mutable {
    if (!out.has_grad()) return;
    if (a.requires_grad()) a.accumulate_grad(out.grad() * b.values());
    if (b.requires_grad()) b.accumulate_grad(out.grad() * a.values());
  });
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = Tensor::wrap(a.shape(), a.values() * factor);
  if (!detail::any_requires_grad(a)) return out;
  out = tracked(out, "scale");
  Tape::current().record([a, out, factor]() mutable {
    if (out.has_grad()) a.accumulate_grad(out.grad() * factor);
  });
  return out;
}

Tensor abs(const Tensor& a) {
  Tensor out = Tensor::wrap(a.shape(), a.values().abs());
  if (!detail::any_requires_grad(a)) return out;
  out = tracked(out, "abs");
  Tape::current().record([a, out]() mutable {
    if (!out.has_grad()) return;
    const Array& x = a.values();
    const Array sign = (x > 0).select(Array::Ones(x.size()), (x < 0).select(-Array::Ones(x.size()), 0.0));
    a.accumulate_grad(out.grad() * sign);
  });
  return out;
}

Tensor sum(const Tensor& a) {
  Tensor out = Tensor::scalar(a.values().sum());
  if (!detail::any_requires_grad(a)) return out;
  out = tracked(out, "sum");
  Tape::current().record([a, out]() mutable {
    if (out.has_grad()) a.accumulate_grad(Array::Constant(a.size(), out.grad()[0]));
  });
  return out;
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

double gelu(double x) { return x * normal_cdf(x); }

Tensor gelu(const Tensor& x) {
  const Array& v = x.values();
  Array cdf(v.size());
  for (Index i = 0; i < v.size(); ++i) cdf[i] = normal_cdf(v[i]);
  Tensor out = Tensor::wrap(x.shape(), v * cdf);
  if (!detail::any_requires_grad(x)) return out;
  out = tracked(out, "gelu");
  Tape::current().record([x, out, cdf = std::move(cdf)]() mutable {
    if (!out.has_grad()) return;
    const Array& v = x.values();
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    x.accumulate_grad(out.grad() * (cdf + v * (-0.5 * v.square()).exp() * inv_sqrt_2pi));
  });
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  Tensor out = Tensor::wrap(std::move(shape), x.values());
  if (!detail::any_requires_grad(x)) return out;
  out = tracked(out, "reshape");
  Tape::current().record([x, out]() mutable {
    if (out.has_grad()) x.accumulate_grad(out.grad());
  });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 1, "linear");
  require_rank(weight, 2, "linear");
  const Index n_in = weight.dim(0), n_out = weight.dim(1);
  if (x.dim(0) != n_in || bias.size() != n_out) {
    throw ShapeError("linear: x " + shape_string(x.shape()) + ", weight " + shape_string(weight.shape()) +
                     ", bias " + shape_string(bias.shape()));
  }
  CMapRow W(weight.data(), n_in, n_out);
  Array y = (W.transpose() * x.values().matrix()).array() + bias.values();
  Tensor out = Tensor::wrap({n_out}, std::move(y));
  if (!detail::any_requires_grad(x, weight, bias)) return out;
  out = tracked(out, "linear");
  Tape::current().record([x, weight, bias, out, n_in, n_out]() mutable {
    if (!out.has_grad()) return;
    const Eigen::VectorXd g = out.grad().matrix();
    CMapRow W(weight.data(), n_in, n_out);
    if (x.requires_grad()) x.accumulate_grad((W * g).array());
    if (weight.requires_grad()) {
      MapRow gW(weight.grad_mut().data(), n_in, n_out);
      gW.noalias() += x.values().matrix() * g.transpose();
    }
    if (bias.requires_grad()) bias.accumulate_grad(g.array());
  });
  return out;
}

Tensor conv1x1(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 3, "conv1x1");
  require_rank(weight, 2, "conv1x1");
  const Index h = x.dim(0), w = x.dim(1), cin = x.dim(2);
  const Index cout = weight.dim(1);
  if (weight.dim(0) != cin || bias.size() != cout) {
    throw ShapeError("conv1x1: input channels " + std::to_string(cin) + " vs weight " +
                     shape_string(weight.shape()) + ", bias " + shape_string(bias.shape()));
  }
  const Index pixels = h * w;
  Array y(pixels * cout);
  {
    CMapRow X(x.data(), pixels, cin);
    CMapRow W(weight.data(), cin, cout);
    MapRow Y(y.data(), pixels, cout);
    Y.noalias() = X * W;
    Y.rowwise() += bias.values().matrix().transpose();
  }
  Tensor out = Tensor::wrap({h, w, cout}, std::move(y));
  if (!detail::any_requires_grad(x, weight, bias)) return out;
  out = tracked(out, "conv1x1");
  Tape::current().record([x, weight, bias, out, pixels, cin, cout]() mutable {
    if (!out.has_grad()) return;
    CMapRow G(out.grad().data(), pixels, cout);
    if (x.requires_grad()) {
      MapRow gX(x.grad_mut().data(), pixels, cin);
      gX.noalias() += G * CMapRow(weight.data(), cin, cout).transpose();
    }
    if (weight.requires_grad()) {
      MapRow gW(weight.grad_mut().data(), cin, cout);
      gW.noalias() += CMapRow(x.data(), pixels, cin).transpose() * G;
    }
    if (bias.requires_grad()) bias.accumulate_grad(G.colwise().sum().transpose().array());
  });
  return out;
}

namespace {

// Row p = (i, j) holds the 3x3 neighbourhood of pixel (i, j), tap-major then channel.
RowMatrix im2col3x3(const double* x, Index h, Index w, Index c) {
  RowMatrix col = RowMatrix::Zero(h * w, 9 * c);
  for (Index i = 0; i < h; ++i) {
    for (Index j = 0; j < w; ++j) {
      double* row = col.data() + (i * w + j) * 9 * c;
      for (Index di = 0; di < 3; ++di) {
        const Index si = i + di - 1;
        if (si < 0 || si >= h) continue;
        for (Index dj = 0; dj < 3; ++dj) {
          const Index sj = j + dj - 1;
          if (sj < 0 || sj >= w) continue;
          const double* src = x + (si * w + sj) * c;
          std::copy(src, src + c, row + (di * 3 + dj) * c);
        }
      }
    }
  }
  return col;
}

void col2im3x3_add(const RowMatrix& col, double* gx, Index h, Index w, Index c) {
  for (Index i = 0; i < h; ++i) {
    for (Index j = 0; j < w; ++j) {
      const double* row = col.data() + (i * w + j) * 9 * c;
      for (Index di = 0; di < 3; ++di) {
        const Index si = i + di - 1;
        if (si < 0 || si >= h) continue;
        for (Index dj = 0; dj < 3; ++dj) {
          const Index sj = j + dj - 1;
          if (sj < 0 || sj >= w) continue;
          double* dst = gx + (si * w + sj) * c;
          const double* src = row + (di * 3 + dj) * c;
          for (Index k = 0; k < c; ++k) dst[k] += src[k];
        }
      }
    }
  }
}

}  // namespace

Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 3, "conv3x3");
  const Index h = x.dim(0), w = x.dim(1), cin = x.dim(2);
  if (weight.rank() != 4 || weight.dim(0) != 3 || weight.dim(1) != 3 || weight.dim(2) != cin) {
    throw ShapeError("conv3x3: weight " + shape_string(weight.shape()) + " incompatible with input " +
                     shape_string(x.shape()));
  }
  const Index cout = weight.dim(3);
  if (bias.size() != cout) throw ShapeError("conv3x3: bias size mismatch");
  if (h < 1 || w < 1) throw ShapeError("conv3x3: empty input");
  RowMatrix col = im2col3x3(x.data(), h, w, cin);
  Array y(h * w * cout);
  {
    MapRow Y(y.data(), h * w, cout);
    Y.noalias() = col * CMapRow(weight.data(), 9 * cin, cout);
    Y.rowwise() += bias.values().matrix().transpose();
  }
  Tensor out = Tensor::wrap({h, w, cout}, std::move(y));
  if (!detail::any_requires_grad(x, weight, bias)) return out;
  out = tracked(out, "conv3x3");
  Tape::current().record([x, weight, bias, out, col = std::move(col), h, w, cin, cout]() mutable {
    if (!out.has_grad()) return;
    CMapRow G(out.grad().data(), h * w, cout);
    if (weight.requires_grad()) {
      MapRow gW(weight.grad_mut().data(), 9 * cin, cout);
      gW.noalias() += col.transpose() * G;
    }
    if (bias.requires_grad()) bias.accumulate_grad(G.colwise().sum().transpose().array());
    if (x.requires_grad()) {
      RowMatrix gcol = G * CMapRow(weight.data(), 9 * cin, cout).transpose();
      col2im3x3_add(gcol, x.grad_mut().data(), h, w, cin);
    }
  });
  return out;
}

Tensor nearest_resize(const Tensor& x, Index h2, Index w2) {
  require_rank(x, 3, "nearest_resize");
  if (h2 < 1 || w2 < 1) throw ShapeError("nearest_resize: target extent must be positive");
  const Index h = x.dim(0), w = x.dim(1), c = x.dim(2);
  std::vector<Index> rows(static_cast<std::size_t>(h2)), cols(static_cast<std::size_t>(w2));
  for (Index i = 0; i < h2; ++i) rows[static_cast<std::size_t>(i)] = i * h / h2;
  for (Index j = 0; j < w2; ++j) cols[static_cast<std::size_t>(j)] = j * w / w2;
  Array y(h2 * w2 * c);
  for (Index i = 0; i < h2; ++i) {
    for (Index j = 0; j < w2; ++j) {
      const double* src = x.data() + (rows[static_cast<std::size_t>(i)] * w + cols[static_cast<std::size_t>(j)]) * c;
      std::copy(src, src + c, y.data() + (i * w2 + j) * c);
    }
  }
  Tensor out = Tensor::wrap({h2, w2, c}, std::move(y));
  if (!detail::any_requires_grad(x)) return out;
  out = tracked(out, "nearest_resize");
  Tape::current().record([x, out, rows = std::move(rows), cols = std::move(cols), w, c, h2, w2]() mutable {
    if (!out.has_grad()) return;
    const Array& g = out.grad();
    Array& gx = x.grad_mut();
    for (Index i = 0; i < h2; ++i) {
      for (Index j = 0; j < w2; ++j) {
        const double* src = g.data() + (i * w2 + j) * c;
        double* dst = gx.data() + (rows[static_cast<std::size_t>(i)] * w + cols[static_cast<std::size_t>(j)]) * c;
        for (Index k = 0; k < c; ++k) dst[k] += src[k];
      }
    }
  });
  return out;
}

namespace {

ArrayC transform2(ArrayC data, Index h, Index w, Index c, FftDirection dir) {
  fft2_inplace<double>(std::span<Complex>(data.data(), static_cast<std::size_t>(data.size())),
                       static_cast<std::size_t>(h), static_cast<std::size_t>(w), static_cast<std::size_t>(c), dir);
  return data;
}

}  // namespace

ComplexTensor fft2(const Tensor& x) {
  require_rank(x, 3, "fft2");
  const Index h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (h < 1 || w < 1) throw ShapeError("fft2: empty grid");
  ComplexTensor out = ComplexTensor::wrap(x.shape(), transform2(x.values().cast<Complex>(), h, w, c, FftDirection::Forward));
  if (!detail::any_requires_grad(x)) return out;
  out = tracked(out, "fft2");
  // Adjoint of the unnormalised forward transform is the unnormalised inverse transform.
  Tape::current().record([x, out, h, w, c]() mutable {
    if (!out.has_grad()) return;
    x.accumulate_grad(transform2(out.grad(), h, w, c, FftDirection::Inverse).real());
  });
  return out;
}

double hermitian_defect(const ComplexTensor& spectrum) {
  if (spectrum.rank() != 3) throw ShapeError("hermitian_defect: expected [h, w, c]");
  const Index h = spectrum.dim(0), w = spectrum.dim(1), c = spectrum.dim(2);
  double worst = 0.0;
  for (Index i = 0; i < h; ++i) {
    for (Index j = 0; j < w; ++j) {
      for (Index k = 0; k < c; ++k) {
        const Complex a = spectrum.at(i, j, k);
        const Complex b = spectrum.at((h - i) % h, (w - j) % w, k);
        worst = std::max(worst, std::abs(a - std::conj(b)));
      }
    }
  }
  return worst;
}

Tensor ifft2(const ComplexTensor& spectrum) {
  if (spectrum.rank() != 3) throw ShapeError("ifft2: expected [h, w, c], got " + shape_string(spectrum.shape()));
  const Index h = spectrum.dim(0), w = spectrum.dim(1), c = spectrum.dim(2);
  const double scale_ref = spectrum.size() ? spectrum.values().abs().maxCoeff() : 0.0;
  const double defect = hermitian_defect(spectrum);
  if (defect > 1e-5 * scale_ref) {
    throw SymmetryError("ifft2: spectrum is not conjugate-symmetric (defect " + std::to_string(defect) + ")");
  }
  const double norm = 1.0 / static_cast<double>(h * w);
  ArrayC field = transform2(spectrum.values(), h, w, c, FftDirection::Inverse) * norm;
  const double residue = field.size() ? field.imag().abs().maxCoeff() : 0.0;
  if (residue > 1e-6 * std::max(scale_ref, 1e-300)) {
    throw SymmetryError("ifft2: imaginary residue " + std::to_string(residue) + " too large");
  }
  Tensor out = Tensor::wrap(spectrum.shape(), field.real());
  if (!detail::any_requires_grad(spectrum)) return out;
  out = tracked(out, "ifft2");
  // y = Re(G X) with G = conj(F)/(h w); the adjoint is F g / (h w).
  Tape::current().record([spectrum, out, h, w, c, norm]() mutable {
    if (!out.has_grad()) return;
    spectrum.accumulate_grad(transform2(out.grad().cast<Complex>(), h, w, c, FftDirection::Forward) * norm);
  });
  return out;
}

Tensor abs2(const ComplexTensor& z) {
  Tensor out = Tensor::wrap(z.shape(), z.values().abs2());
  if (!detail::any_requires_grad(z)) return out;
  out = tracked(out, "abs2");
  Tape::current().record([z, out]() mutable {
    if (!out.has_grad()) return;
    z.accumulate_grad(2.0 * z.values() * out.grad().cast<Complex>());
  });
  return out;
}

}  // namespace recfno
