#include "recfno/spectral.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <tuple>

#include "recfno/fft.hpp"
#include "recfno/ops.hpp"

namespace recfno {

std::vector<Index> retained_rows(Index h, Index k1) {
  std::vector<Index> rows;
  if (2 * k1 >= h) {
    for (Index r = 0; r < h; ++r) rows.push_back(r);
    return rows;
  }
  for (Index r = 0; r < k1; ++r) rows.push_back(r);
  for (Index r = h - k1; r < h; ++r) rows.push_back(r);
  return rows;
}

double half_spectrum_weight(Index k2, Index k2max, Index w) {
  if (k2 == 0) return 1.0;
  return (w - k2) < k2max ? 1.0 : 2.0;
}

void check_mode_limits(Index h, Index w, Index k1, Index k2) {
  if (k1 < 1 || k2 < 1 || 2 * k1 > h || k2 > w / 2 + 1) {
    throw ModeError("modes (" + std::to_string(k1) + "," + std::to_string(k2) + ") do not fit a " +
                    std::to_string(h) + "x" + std::to_string(w) + " grid (need k1 <= h/2, k2 <= w/2+1)");
  }
}

ComplexTensor truncate_modes(const ComplexTensor& spectrum, Index k1, Index k2) {
  if (spectrum.rank() != 3) throw ShapeError("truncate_modes: expected [h, w, c]");
  const Index h = spectrum.dim(0), w = spectrum.dim(1), c = spectrum.dim(2);
  if (k1 < 1 || k2 < 1 || k1 > h || k2 > w) {
    throw ModeError("truncate_modes: modes (" + std::to_string(k1) + "," + std::to_string(k2) +
                    ") exceed the " + std::to_string(h) + "x" + std::to_string(w) + " spectrum");
  }
  const std::vector<Index> rows = retained_rows(h, k1);
  const Index nr = static_cast<Index>(rows.size());
  ComplexTensor block = ComplexTensor::zeros({nr, k2, c});
  for (Index r = 0; r < nr; ++r)
    for (Index j = 0; j < k2; ++j)
      for (Index ch = 0; ch < c; ++ch) block.at(r, j, ch) = spectrum.at(rows[static_cast<std::size_t>(r)], j, ch);
  return block;
}

namespace {

// Truncated DFT matrices for one (h, w, k1, k2) configuration.
//   Fw  [k2 x w]   e^{-2 pi i k j / w}
//   Fh  [R  x h]   e^{-2 pi i f_r i / h} over the retained row frequencies f_r
//   Sw  [w  x k2]  inverse along w with the half-spectrum weights and 1/(h w) folded in
//   mirror [R x k2] 2 where a self-conjugate column holds a row whose conjugate row is not
//                   retained (its mirror is implied, as on the other columns), else 1
struct SpectralBasis {
  RowMatrix fw_re, fw_im, fh_re, fh_im, sw_re, sw_im;
  RowMatrix mirror;
  bool has_mirror = false;
};

std::shared_ptr<const SpectralBasis> basis_for(Index h, Index w, const std::vector<Index>& row_freqs, Index k2) {
  using Key = std::tuple<Index, Index, std::vector<Index>, Index>;
  thread_local std::map<Key, std::shared_ptr<const SpectralBasis>> cache;
  Key key{h, w, row_freqs, k2};
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  auto b = std::make_shared<SpectralBasis>();
  const Index nr = static_cast<Index>(row_freqs.size());
  b->fw_re.resize(k2, w);
  b->fw_im.resize(k2, w);
  for (Index k = 0; k < k2; ++k) {
    for (Index j = 0; j < w; ++j) {
      const auto t = twiddle<double>(static_cast<std::size_t>(k * j), static_cast<std::size_t>(w), -1);
      b->fw_re(k, j) = t.real();
      b->fw_im(k, j) = t.imag();
    }
  }
  b->fh_re.resize(nr, h);
  b->fh_im.resize(nr, h);
  for (Index r = 0; r < nr; ++r) {
    const Index f = ((row_freqs[static_cast<std::size_t>(r)] % h) + h) % h;
    for (Index i = 0; i < h; ++i) {
      const auto t = twiddle<double>(static_cast<std::size_t>(f * i), static_cast<std::size_t>(h), -1);
      b->fh_re(r, i) = t.real();
      b->fh_im(r, i) = t.imag();
    }
  }
  b->sw_re.resize(w, k2);
  b->sw_im.resize(w, k2);
  const double norm = 1.0 / static_cast<double>(h * w);
  for (Index k = 0; k < k2; ++k) {
    const double s = half_spectrum_weight(k, k2, w) * norm;
    b->sw_re.col(k) = b->fw_re.row(k).transpose() * s;
    b->sw_im.col(k) = b->fw_im.row(k).transpose() * s;
  }
  b->mirror = RowMatrix::Ones(nr, k2);
  for (Index k : {Index{0}, w / 2}) {
    if (k >= k2 || (k != 0 && 2 * k != w)) continue;
    for (Index r = 0; r < nr; ++r) {
      const Index want = ((-row_freqs[static_cast<std::size_t>(r)]) % h + h) % h;
      bool found = false;
      for (Index f : row_freqs) found = found || ((f % h) + h) % h == want;
      if (!found) {
        b->mirror(r, k) = 2.0;
        b->has_mirror = true;
      }
    }
  }
  cache.emplace(std::move(key), b);
  return b;
}

std::vector<Index> block_row_frequencies(Index nr, Index k1) {
  // Block rows: 0..k1-1 then -k1..-1 when nr == 2 k1; otherwise natural order.
  std::vector<Index> f(static_cast<std::size_t>(nr));
  for (Index r = 0; r < nr; ++r) f[static_cast<std::size_t>(r)] = (nr == 2 * k1 && r >= k1) ? r - 2 * k1 : r;
  return f;
}

using CMap = Eigen::Map<const RowMatrix>;
using MMap = Eigen::Map<RowMatrix>;

// Scales [R, k2 * c] mode rows by the implied-mirror factors.
void apply_mirror(const SpectralBasis& b, RowMatrix& m, Index c) {
  if (!b.has_mirror) return;
  for (Index r = 0; r < m.rows(); ++r)
    for (Index k = 0; k < b.mirror.cols(); ++k)
      if (b.mirror(r, k) != 1.0) m.block(r, k * c, 1, c) *= b.mirror(r, k);
}

}  // namespace

Tensor modes_to_field(const ComplexTensor& block, Index h, Index w, Index k1) {
  if (block.rank() != 3) throw ShapeError("modes_to_field: expected [rows, k2, c] block");
  const Index nr = block.dim(0), k2 = block.dim(1), c = block.dim(2);
  if (nr != static_cast<Index>(retained_rows(h, k1).size()) || k2 > w) {
    throw ModeError("modes_to_field: block " + shape_string(block.shape()) + " does not match grid " +
                    std::to_string(h) + "x" + std::to_string(w));
  }
  std::vector<Index> freqs(static_cast<std::size_t>(nr));
  const std::vector<Index> rows = retained_rows(h, k1);
  for (Index r = 0; r < nr; ++r) freqs[static_cast<std::size_t>(r)] = rows[static_cast<std::size_t>(r)];
  const auto basis = basis_for(h, w, freqs, k2);
  RowMatrix yre(nr, k2 * c), yim(nr, k2 * c);
  for (Index r = 0; r < nr; ++r) {
    for (Index e = 0; e < k2 * c; ++e) {
      yre(r, e) = block.data()[r * k2 * c + e].real();
      yim(r, e) = block.data()[r * k2 * c + e].imag();
    }
  }
  apply_mirror(*basis, yre, c);
  apply_mirror(*basis, yim, c);
  const RowMatrix cre = basis->fh_re.transpose() * yre + basis->fh_im.transpose() * yim;
  const RowMatrix cim = basis->fh_re.transpose() * yim - basis->fh_im.transpose() * yre;
  Tensor out = Tensor::zeros({h, w, c});
  for (Index i = 0; i < h; ++i) {
    MMap yi(out.data() + i * w * c, w, c);
    yi.noalias() = basis->sw_re * CMap(cre.data() + i * k2 * c, k2, c) + basis->sw_im * CMap(cim.data() + i * k2 * c, k2, c);
  }
  return out;
}

Tensor spectral_conv(const Tensor& v, const ComplexTensor& weight) {
  if (v.rank() != 3) throw ShapeError("spectral_conv: expected [h, w, c] input, got " + shape_string(v.shape()));
  if (weight.rank() != 4 || weight.dim(0) % 2 != 0) {
    throw ShapeError("spectral_conv: weight must be [2 k1, k2, c_out, c_in], got " + shape_string(weight.shape()));
  }
  const Index h = v.dim(0), w = v.dim(1), cin = v.dim(2);
  const Index k1 = weight.dim(0) / 2, k2 = weight.dim(1), cout = weight.dim(2);
  if (weight.dim(3) != cin) {
    throw ShapeError("spectral_conv: weight expects " + std::to_string(weight.dim(3)) + " input channels, got " +
                     std::to_string(cin));
  }
  check_mode_limits(h, w, k1, k2);
  const Index nr = 2 * k1;
  const auto basis = basis_for(h, w, block_row_frequencies(nr, k1), k2);
  const SpectralBasis& B = *basis;

  // Along w: A_i = Fw X_i, stacked as [h, k2 * cin].
  RowMatrix are(h, k2 * cin), aim(h, k2 * cin);
  for (Index i = 0; i < h; ++i) {
    CMap xi(v.data() + i * w * cin, w, cin);
    MMap(are.data() + i * k2 * cin, k2, cin).noalias() = B.fw_re * xi;
    MMap(aim.data() + i * k2 * cin, k2, cin).noalias() = B.fw_im * xi;
  }
  // Along h over the retained rows.
  RowMatrix bre = B.fh_re * are - B.fh_im * aim;
  RowMatrix bim = B.fh_re * aim + B.fh_im * are;

  // Per-mode channel mixing.
  RowMatrix yre(nr, k2 * cout), yim(nr, k2 * cout);
  {
    Eigen::VectorXcd b(cin), y(cout);
    for (Index r = 0; r < nr; ++r) {
      for (Index k = 0; k < k2; ++k) {
        for (Index ch = 0; ch < cin; ++ch) b[ch] = Complex(bre(r, k * cin + ch), bim(r, k * cin + ch));
        Eigen::Map<const RowMatrixC> R(weight.data() + (r * k2 + k) * cout * cin, cout, cin);
        y.noalias() = R * b;
        for (Index ch = 0; ch < cout; ++ch) {
          yre(r, k * cout + ch) = y[ch].real();
          yim(r, k * cout + ch) = y[ch].imag();
        }
      }
    }
  }

  apply_mirror(B, yre, cout);
  apply_mirror(B, yim, cout);

  // Inverse along h (conjugate transpose of Fh), then real inverse along w.
  const RowMatrix cre = B.fh_re.transpose() * yre + B.fh_im.transpose() * yim;
  const RowMatrix cim = B.fh_re.transpose() * yim - B.fh_im.transpose() * yre;
  Tensor::Array out_values(h * w * cout);
  for (Index i = 0; i < h; ++i) {
    MMap(out_values.data() + i * w * cout, w, cout).noalias() =
        B.sw_re * CMap(cre.data() + i * k2 * cout, k2, cout) + B.sw_im * CMap(cim.data() + i * k2 * cout, k2, cout);
  }
  Tensor out = Tensor::wrap({h, w, cout}, std::move(out_values));
  detail::check_finite_debug(out, "spectral_conv");
  if (!detail::any_requires_grad(v, weight)) return out;
  out.set_requires_grad(true);

  Tape::current().record([v, weight, out, basis, bre = std::move(bre), bim = std::move(bim), h, w, cin, cout, nr,
                          k2]() mutable {
    if (!out.has_grad()) return;
    const SpectralBasis& B = *basis;
    const Tensor::Array& gy = out.grad();
    RowMatrix gcre(h, k2 * cout), gcim(h, k2 * cout);
    for (Index i = 0; i < h; ++i) {
      CMap gyi(gy.data() + i * w * cout, w, cout);
      MMap(gcre.data() + i * k2 * cout, k2, cout).noalias() = B.sw_re.transpose() * gyi;
      MMap(gcim.data() + i * k2 * cout, k2, cout).noalias() = B.sw_im.transpose() * gyi;
    }
    RowMatrix gyre = B.fh_re * gcre - B.fh_im * gcim;
    RowMatrix gyim = B.fh_im * gcre + B.fh_re * gcim;
    apply_mirror(B, gyre, cout);
    apply_mirror(B, gyim, cout);

    RowMatrix gbre(nr, k2 * cin), gbim(nr, k2 * cin);
    const bool need_w = weight.requires_grad();
    Complex* gR = need_w ? weight.grad_mut().data() : nullptr;
    Eigen::VectorXcd b(cin), g(cout), gb(cin);
    for (Index r = 0; r < nr; ++r) {
      for (Index k = 0; k < k2; ++k) {
        for (Index ch = 0; ch < cout; ++ch) g[ch] = Complex(gyre(r, k * cout + ch), gyim(r, k * cout + ch));
        Eigen::Map<const RowMatrixC> R(weight.data() + (r * k2 + k) * cout * cin, cout, cin);
        gb.noalias() = R.adjoint() * g;
        for (Index ch = 0; ch < cin; ++ch) {
          gbre(r, k * cin + ch) = gb[ch].real();
          gbim(r, k * cin + ch) = gb[ch].imag();
        }
        if (need_w) {
          for (Index ch = 0; ch < cin; ++ch) b[ch] = Complex(bre(r, k * cin + ch), bim(r, k * cin + ch));
          Eigen::Map<RowMatrixC>(gR + (r * k2 + k) * cout * cin, cout, cin).noalias() += g * b.adjoint();
        }
      }
    }
    if (!v.requires_grad()) return;
    const RowMatrix gare = B.fh_re.transpose() * gbre + B.fh_im.transpose() * gbim;
    const RowMatrix gaim = B.fh_re.transpose() * gbim - B.fh_im.transpose() * gbre;
    double* gx = v.grad_mut().data();
    for (Index i = 0; i < h; ++i) {
      MMap(gx + i * w * cin, w, cin).noalias() += B.fw_re.transpose() * CMap(gare.data() + i * k2 * cin, k2, cin) +
                                                  B.fw_im.transpose() * CMap(gaim.data() + i * k2 * cin, k2, cin);
    }
  });
  return out;
}

ComplexTensor hermitian_consistent(const ComplexTensor& weight, Index h, Index w) {
  if (weight.rank() != 4 || weight.dim(0) % 2 != 0) throw ShapeError("hermitian_consistent: bad weight shape");
  const Index nr = weight.dim(0), k1 = nr / 2, k2 = weight.dim(1);
  check_mode_limits(h, w, k1, k2);
  const Index block = weight.dim(2) * weight.dim(3);
  const std::vector<Index> freqs = block_row_frequencies(nr, k1);
  ComplexTensor out = weight.clone();
  for (Index col : {Index{0}, w / 2}) {
    if (col >= k2 || (col != 0 && 2 * col != w)) continue;
    for (Index r = 0; r < nr; ++r) {
      const Index mirror_freq = ((-freqs[static_cast<std::size_t>(r)]) % h + h) % h;
      Index partner = -1;
      for (Index s = 0; s < nr; ++s)
        if (((freqs[static_cast<std::size_t>(s)] % h) + h) % h == mirror_freq) partner = s;
      Complex* dst = out.data() + (r * k2 + col) * block;
      if (partner < 0) continue;  // mirror implied, already consistent
      const Complex* a = weight.data() + (r * k2 + col) * block;
      const Complex* b = weight.data() + (partner * k2 + col) * block;
      for (Index e = 0; e < block; ++e) dst[e] = 0.5 * (a[e] + std::conj(b[e]));
    }
  }
  return out;
}

FourierLayerParams init_fourier_layer(Index width, Index k1, Index k2, Rng& rng) {
  FourierLayerParams p;
  const double radius = 1.0 / static_cast<double>(width);
  ComplexTensor::Array r(2 * k1 * k2 * width * width);
  for (Index i = 0; i < r.size(); ++i) {
    const double rho = radius * std::sqrt(rng.uniform());
    const double theta = 2.0 * std::numbers::pi * rng.uniform();
    r[i] = std::polar(rho, theta);
  }
  p.spectral_weight = ComplexTensor({2 * k1, k2, width, width}, std::move(r));
  p.spectral_weight.set_requires_grad(true);
  const double bound = 1.0 / std::sqrt(static_cast<double>(width));
  Tensor::Array wv(width * width), bv(width);
  for (Index i = 0; i < wv.size(); ++i) wv[i] = rng.uniform(-bound, bound);
  for (Index i = 0; i < bv.size(); ++i) bv[i] = rng.uniform(-bound, bound);
  p.weight = Tensor({width, width}, std::move(wv));
  p.bias = Tensor({width}, std::move(bv));
  p.weight.set_requires_grad(true);
  p.bias.set_requires_grad(true);
  return p;
}

Tensor fourier_layer(const Tensor& v, const FourierLayerParams& params) {
  if (v.rank() != 3 || v.dim(2) != params.weight.dim(0)) {
    throw ShapeError("fourier_layer: input " + shape_string(v.shape()) + " does not match width " +
                     std::to_string(params.weight.dim(0)));
  }
  return gelu(add(conv1x1(v, params.weight, params.bias), spectral_conv(v, params.spectral_weight)));
}

}  // namespace recfno
