#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

namespace recfno {

enum class FftDirection { Forward, Inverse };

constexpr bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// e^{sign * 2*pi*i * k / n} with the angle reduced modulo n first so large products keep full accuracy.
template <typename Real>
std::complex<Real> twiddle(std::size_t k, std::size_t n, int sign) {
  const std::size_t r = k % n;
  const Real angle = static_cast<Real>(sign) * Real(2) * std::numbers::pi_v<Real> *
                     static_cast<Real>(r) / static_cast<Real>(n);
  return {std::cos(angle), std::sin(angle)};
}

/// O(n^2) transform straight from the definition; used for non-power-of-two lengths.
template <typename Real>
void dft_naive(std::span<std::complex<Real>> data, FftDirection dir) {
  const std::size_t n = data.size();
  const int sign = dir == FftDirection::Forward ? -1 : 1;
  std::vector<std::complex<Real>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<Real> acc{};
    for (std::size_t j = 0; j < n; ++j) acc += data[j] * twiddle<Real>(j * k, n, sign);
    out[k] = acc;
  }
  std::copy(out.begin(), out.end(), data.begin());
}

/// Unnormalised in-place 1D transform. Forward uses e^{-2 pi i jk/n}, inverse e^{+2 pi i jk/n};
/// neither scales by 1/n.
///
/// Iterative radix-2 (bit reversal followed by log2(n) butterfly stages) when n is a power of two,
/// otherwise falls back to dft_naive.
template <typename Real>
void fft_inplace(std::span<std::complex<Real>> data, FftDirection dir) {
  const std::size_t n = data.size();
  if (n <= 1) return;
  if (!is_power_of_two(n)) {
    dft_naive(data, dir);
    return;
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  const int sign = dir == FftDirection::Forward ? -1 : 1;
  std::vector<std::complex<Real>> w(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) w[k] = twiddle<Real>(k, n, sign);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const std::complex<Real> u = data[start + k];
        const std::complex<Real> v = data[start + k + half] * w[k * stride];
        data[start + k] = u + v;
        data[start + k + half] = u - v;
      }
    }
  }
}

/// Unnormalised 2D transform of a row-major [h, w, c] block, channel by channel.
template <typename Real>
void fft2_inplace(std::span<std::complex<Real>> data, std::size_t h, std::size_t w, std::size_t c,
                  FftDirection dir) {
  std::vector<std::complex<Real>> line(std::max(h, w));
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) line[j] = data[(i * w + j) * c + ch];
      fft_inplace(std::span(line.data(), w), dir);
      for (std::size_t j = 0; j < w; ++j) data[(i * w + j) * c + ch] = line[j];
    }
    for (std::size_t j = 0; j < w; ++j) {
      for (std::size_t i = 0; i < h; ++i) line[i] = data[(i * w + j) * c + ch];
      fft_inplace(std::span(line.data(), h), dir);
      for (std::size_t i = 0; i < h; ++i) data[(i * w + j) * c + ch] = line[i];
    }
  }
}

}  // namespace recfno
