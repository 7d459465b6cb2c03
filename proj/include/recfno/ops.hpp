#pragma once

#include "recfno/tensor.hpp"

namespace recfno {

// Elementwise arithmetic. Operands must have identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor abs(const Tensor& a);  // subgradient 0 at 0

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Gaussian error linear unit, exact form x * Phi(x).
Tensor gelu(const Tensor& x);
double gelu(double x);

Tensor reshape(const Tensor& x, Shape shape);

/// y = x W + b for x of shape [n_in], W [n_in, n_out], b [n_out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Per-pixel affine map: x [h, w, cin], weight [cin, cout], bias [cout] -> [h, w, cout].
Tensor conv1x1(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Same-size 3x3 convolution with one cell of zero padding.
/// weight [3, 3, cin, cout] with taps indexed (row offset + 1, column offset + 1).
Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Nearest-neighbour resize of [h, w, c] to [h2, w2, c] reading source row floor(i * h / h2).
Tensor nearest_resize(const Tensor& x, Index h2, Index w2);

/// Unnormalised 2D DFT per channel of a real [h, w, c] tensor.
ComplexTensor fft2(const Tensor& x);

/// Inverse of fft2 including the 1/(h w) factor. Requires a conjugate-symmetric spectrum
/// (tolerance 1e-5 relative to the largest coefficient) and drops the vanishing imaginary part.
Tensor ifft2(const ComplexTensor& spectrum);

/// Elementwise squared modulus.
Tensor abs2(const ComplexTensor& z);

/// Largest |X(k1,k2) - conj X(-k1,-k2)| over all entries of a [h, w, c] spectrum.
double hermitian_defect(const ComplexTensor& spectrum);

}  // namespace recfno
