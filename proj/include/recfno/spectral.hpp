#pragma once

#include <vector>

#include "recfno/rng.hpp"
#include "recfno/tensor.hpp"

namespace recfno {

/// Rows of an h-row spectrum kept by a k1-mode truncation, in block order: frequencies
/// 0..k1-1 followed by -k1..-1 (stored as h-k1..h-1). All rows when 2 k1 >= h.
std::vector<Index> retained_rows(Index h, Index k1);

/// Weight applied to half-spectrum column `k2` when rebuilding a real field from columns
/// 0..k2max-1 of a width-w spectrum: 2 when the conjugate mirror column w-k2 is implied, else 1.
double half_spectrum_weight(Index k2, Index k2max, Index w);

/// Retained low-frequency block of a [h, w, c] spectrum: rows retained_rows(h, k1),
/// columns 0..min(k2, w)-1. Throws ModeError when k1 > h or k2 > w.
ComplexTensor truncate_modes(const ComplexTensor& spectrum, Index k1, Index k2);

/// Real field on an h x w grid whose spectrum is the given retained block (as produced by
/// truncate_modes) plus the implied conjugate mirror of every coefficient whose mirror is not in the block, with the 1/(h w) inverse normalisation.
/// Coefficients outside the block are zero.
Tensor modes_to_field(const ComplexTensor& block, Index h, Index w, Index k1);

/// Throws ModeError unless 1 <= k1 <= h/2 and 1 <= k2 <= w/2 + 1.
void check_mode_limits(Index h, Index w, Index k1, Index k2);

/// Spectral convolution: fft2 -> keep retained modes -> per-mode channel mixing -> real inverse.
///
/// `weight` is [2 k1, k2, c_out, c_in]; row r < k1 holds frequency r, row r >= k1 holds
/// frequency r - 2 k1, column k2 holds the non-negative column frequency. Only the modes enter the
/// computation, so the transform is evaluated as truncated DFT products rather than a full FFT.
/// On the self-conjugate columns (0 and, when retained, w/2) the mixed spectrum is projected on its
/// conjugate-symmetric part, which keeps the output real for arbitrary weights. A row there whose
/// conjugate row is not retained (frequency -k1) gets an implied mirror like the other columns.
Tensor spectral_conv(const Tensor& v, const ComplexTensor& weight);

/// Projects spectral weights onto the subset that maps every real field's spectrum to a
/// conjugate-symmetric one at resolution (h, w), so no imaginary part is discarded.
ComplexTensor hermitian_consistent(const ComplexTensor& weight, Index h, Index w);

struct FourierLayerParams {
  ComplexTensor spectral_weight;  // [2 k1, k2, d_v, d_v]
  Tensor weight;                  // [d_v, d_v], pointwise path
  Tensor bias;                    // [d_v]
};

FourierLayerParams init_fourier_layer(Index width, Index k1, Index k2, Rng& rng);

/// gelu(conv1x1(v; W, b) + spectral_conv(v; R)).
Tensor fourier_layer(const Tensor& v, const FourierLayerParams& params);

}  // namespace recfno
