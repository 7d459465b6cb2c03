#pragma once

// Reference implementations used only by tests. They follow the textbook definitions directly
// and share no code with the library paths they check.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "recfno/data.hpp"
#include "recfno/tensor.hpp"

namespace oracle {

using recfno::Complex;
using recfno::Index;

/// Direct double-sum 2D DFT of a [h, w, c] array; sign -1 forward, +1 inverse (unnormalised).
inline std::vector<Complex> dft2(const std::vector<Complex>& x, Index h, Index w, Index c, int sign) {
  std::vector<Complex> out(x.size());
  const double two_pi = 2.0 * std::numbers::pi;
  for (Index k1 = 0; k1 < h; ++k1)
    for (Index k2 = 0; k2 < w; ++k2)
      for (Index ch = 0; ch < c; ++ch) {
        Complex acc = 0.0;
        for (Index a = 0; a < h; ++a)
          for (Index b = 0; b < w; ++b) {
            const double angle = sign * two_pi *
                                 (static_cast<double>(a * k1) / static_cast<double>(h) +
                                  static_cast<double>(b * k2) / static_cast<double>(w));
            acc += x[static_cast<std::size_t>((a * w + b) * c + ch)] * Complex(std::cos(angle), std::sin(angle));
          }
        out[static_cast<std::size_t>((k1 * w + k2) * c + ch)] = acc;
      }
  return out;
}

inline std::vector<Complex> to_complex(const recfno::Tensor& t) {
  std::vector<Complex> v(static_cast<std::size_t>(t.size()));
  for (Index i = 0; i < t.size(); ++i) v[static_cast<std::size_t>(i)] = t.values()[i];
  return v;
}

/// Standard normal CDF through the complementary error function.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Per-pixel matrix-vector loop for a 1x1 convolution.
inline std::vector<double> conv1x1(const recfno::Tensor& x, const recfno::Tensor& wgt, const recfno::Tensor& b) {
  const Index h = x.dim(0), w = x.dim(1), ci = x.dim(2), co = wgt.dim(1);
  std::vector<double> y(static_cast<std::size_t>(h * w * co));
  for (Index p = 0; p < h * w; ++p)
    for (Index o = 0; o < co; ++o) {
      double acc = b.values()[o];
      for (Index i = 0; i < ci; ++i) acc += x.values()[p * ci + i] * wgt.values()[i * co + o];
      y[static_cast<std::size_t>(p * co + o)] = acc;
    }
  return y;
}

/// Sliding-window 3x3 convolution with zero padding; weight [3,3,ci,co].
inline std::vector<double> conv3x3(const recfno::Tensor& x, const recfno::Tensor& wgt, const recfno::Tensor& b) {
  const Index h = x.dim(0), w = x.dim(1), ci = x.dim(2), co = wgt.dim(3);
  std::vector<double> y(static_cast<std::size_t>(h * w * co));
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j)
      for (Index o = 0; o < co; ++o) {
        double acc = b.values()[o];
        for (Index di = -1; di <= 1; ++di)
          for (Index dj = -1; dj <= 1; ++dj) {
            const Index si = i + di, sj = j + dj;
            if (si < 0 || sj < 0 || si >= h || sj >= w) continue;
            for (Index c = 0; c < ci; ++c)
              acc += x.values()[(si * w + sj) * ci + c] * wgt.values()[(((di + 1) * 3 + (dj + 1)) * ci + c) * co + o];
          }
        y[static_cast<std::size_t>((i * w + j) * co + o)] = acc;
      }
  return y;
}

// Frequency held by row r of a [2 k1, ...] weight.
inline Index row_frequency(Index r, Index k1) { return r < k1 ? r : r - 2 * k1; }

inline Index wrap(Index f, Index n) { return ((f % n) + n) % n; }

// Full DFT, explicit per-mode mixing on the retained half-spectrum plus its conjugate mirror,
// zeros elsewhere, then a full inverse DFT. Returns the complex result before taking Re.
inline std::vector<Complex> naive_spectral_conv(const recfno::Tensor& v, const recfno::ComplexTensor& R) {
  const Index h = v.dim(0), w = v.dim(1), ci = v.dim(2);
  const Index k1 = R.dim(0) / 2, k2 = R.dim(1), co = R.dim(2);
  const auto X = dft2(to_complex(v), h, w, ci, -1);
  std::vector<Complex> Y(static_cast<std::size_t>(h * w * co), Complex(0.0, 0.0));
  std::vector<bool> set(static_cast<std::size_t>(h * w), false);
  auto at = [&](Index f1, Index f2) { return wrap(f1, h) * w + wrap(f2, w); };
  for (Index r = 0; r < 2 * k1; ++r)
    for (Index k = 0; k < k2; ++k) {
      const Index p = at(row_frequency(r, k1), k);
      for (Index o = 0; o < co; ++o) {
        Complex acc = 0.0;
        for (Index i = 0; i < ci; ++i)
          acc += R.values()[((r * k2 + k) * co + o) * ci + i] * X[static_cast<std::size_t>(p * ci + i)];
        Y[static_cast<std::size_t>(p * co + o)] = acc;
      }
      set[static_cast<std::size_t>(p)] = true;
    }
  // Mirror modes not stored in the half-spectrum.
  for (Index r = 0; r < 2 * k1; ++r)
    for (Index k = 0; k < k2; ++k) {
      const Index p = at(row_frequency(r, k1), k);
      const Index q = at(-row_frequency(r, k1), -k);
      if (set[static_cast<std::size_t>(q)]) continue;
      for (Index o = 0; o < co; ++o) Y[static_cast<std::size_t>(q * co + o)] = std::conj(Y[static_cast<std::size_t>(p * co + o)]);
    }
  auto y = dft2(Y, h, w, co, +1);
  for (auto& z : y) z /= static_cast<double>(h * w);
  return y;
}

inline recfno::ComplexTensor identity_weight(Index k1, Index k2, Index c) {
  recfno::ComplexTensor R = recfno::ComplexTensor::zeros({2 * k1, k2, c, c});
  for (Index r = 0; r < 2 * k1; ++r)
    for (Index k = 0; k < k2; ++k)
      for (Index i = 0; i < c; ++i) R.values_mut()[((r * k2 + k) * c + i) * c + i] = Complex(1.0, 0.0);
  return R;
}

inline double h_mean(double a, double b) { return 2.0 * a * b / (a + b); }

// Independent assembly of the Darcy operator applied to u: cell-centred, Dirichlet faces.
inline double darcy_relative_residual(const recfno::Tensor& a, const recfno::Tensor& u, const recfno::GridSpec& g) {
  const double dx = g.dx(), dy = g.dy();
  double r2 = 0.0, f2 = 0.0;
  auto A = [&](Index i, Index j) { return a.values()[i * g.n_x + j]; };
  auto U = [&](Index i, Index j) { return u.values()[i * g.n_x + j]; };
  for (Index i = 0; i < g.n_y; ++i) {
    for (Index j = 0; j < g.n_x; ++j) {
      double flux = 0.0;
      const Index di[4] = {0, 0, -1, 1}, dj[4] = {-1, 1, 0, 0};
      for (int k = 0; k < 4; ++k) {
        const Index ni = i + di[k], nj = j + dj[k];
        const double ratio = k < 2 ? dy / dx : dx / dy;
        if (ni < 0 || nj < 0 || ni >= g.n_y || nj >= g.n_x) {
          flux += A(i, j) * ratio * 2.0 * U(i, j);
        } else {
          flux += h_mean(A(i, j), A(ni, nj)) * ratio * (U(i, j) - U(ni, nj));
        }
      }
      const double f = dx * dy;
      r2 += (flux - f) * (flux - f);
      f2 += f * f;
    }
  }
  return std::sqrt(r2 / f2);
}

inline double heat_relative_residual(const recfno::HeatInstance& inst, const recfno::Tensor& u, const recfno::GridSpec& g) {
  const std::vector<bool> sink = recfno::heat_sink_cells(inst, g);
  const recfno::Tensor f = recfno::heat_source_field(inst, g);
  const double dx = g.dx(), dy = g.dy();
  auto U = [&](Index i, Index j) { return u.values()[i * g.n_x + j]; };
  double r2 = 0.0, f2 = 0.0;
  for (Index i = 0; i < g.n_y; ++i) {
    for (Index j = 0; j < g.n_x; ++j) {
      if (sink[static_cast<std::size_t>(i * g.n_x + j)]) continue;
      double flux = 0.0;
      const Index di[4] = {0, 0, -1, 1}, dj[4] = {-1, 1, 0, 0};
      for (int k = 0; k < 4; ++k) {
        const Index ni = i + di[k], nj = j + dj[k];
        if (ni < 0 || nj < 0 || ni >= g.n_y || nj >= g.n_x) continue;
        const double lam = h_mean(recfno::heat_conductivity(U(i, j)), recfno::heat_conductivity(U(ni, nj)));
        flux += lam * (k < 2 ? dy / dx : dx / dy) * (U(i, j) - U(ni, nj));
      }
      const double src = f.values()[i * g.n_x + j] * dx * dy;
      r2 += (flux - src) * (flux - src);
      f2 += src * src;
    }
  }
  return std::sqrt(r2 / f2);
}

}  // namespace oracle
