#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "axnas/error.hpp"
#include "axnas/multiplier.hpp"

namespace axnas {

// Rank-4 NHWC tensor. Weight tensors reuse the axes: conv kernels are
// (kh, kw, c_in, c_out), dense matrices (1, 1, in, out), per-channel vectors
// (1, 1, 1, c).
struct Tensor {
  int n = 0, h = 0, w = 0, c = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int n_, int h_, int w_, int c_)
      : n(n_), h(h_), w(w_), c(c_),
        v(static_cast<std::size_t>(n_) * h_ * w_ * c_, 0.0) {}

  std::size_t size() const { return v.size(); }

  std::size_t idx(int i, int y, int x, int ch) const {
    return ((static_cast<std::size_t>(i) * h + y) * w + x) * c + ch;
  }
  double& at(int i, int y, int x, int ch) { return v[idx(i, y, x, ch)]; }
  double at(int i, int y, int x, int ch) const { return v[idx(i, y, x, ch)]; }

  bool same_dims(const Tensor& o) const {
    return n == o.n && h == o.h && w == o.w && c == o.c;
  }
};

// 8-bit magnitude/sign representation with one positive scale per tensor, or
// one per sample so that inference results do not depend on batch packing.
struct QuantTensor {
  int n = 0, h = 0, w = 0, c = 0;
  std::vector<std::uint8_t> mag;
  std::vector<std::int8_t> sign;  // +1/-1; empty means all positive
  std::vector<double> scale;      // size 1 (uniform) or n (per sample)

  double scale_for(int i) const {
    return scale.size() == 1 ? scale[0] : scale[static_cast<std::size_t>(i)];
  }
};

namespace detail {

inline std::uint8_t quantize_value(double x, double scale) {
  const double m = std::abs(x) / scale;
  const long r = std::lround(m);
  return static_cast<std::uint8_t>(r > 255 ? 255 : r);
}

inline double max_abs_checked(std::span<const double> xs) {
  double m = 0.0;
  for (double x : xs) {
    if (!std::isfinite(x)) throw NumericError("non-finite value in tensor");
    m = std::max(m, std::abs(x));
  }
  return m;
}

}  // namespace detail

// Symmetric per-tensor quantization: scale = max|x|/255 (1 when x == 0),
// magnitudes rounded and clamped to 255, signs kept unless non_negative.
inline QuantTensor quantize(const Tensor& x, bool non_negative) {
  QuantTensor q;
  q.n = x.n;
  q.h = x.h;
  q.w = x.w;
  q.c = x.c;
  const double max_abs = detail::max_abs_checked(x.v);
  const double scale = max_abs > 0.0 ? max_abs / 255.0 : 1.0;
  q.scale = {scale};
  q.mag.resize(x.size());
  if (!non_negative) q.sign.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    q.mag[i] = detail::quantize_value(x.v[i], scale);
    if (!non_negative) q.sign[i] = x.v[i] < 0.0 ? -1 : 1;
  }
  return q;
}

// Per-sample variant used for activations: each batch row gets its own
// scale, so a sample quantizes identically alone or inside a batch.
inline QuantTensor quantize_per_sample(const Tensor& x, bool non_negative) {
  QuantTensor q;
  q.n = x.n;
  q.h = x.h;
  q.w = x.w;
  q.c = x.c;
  q.scale.resize(static_cast<std::size_t>(x.n));
  q.mag.resize(x.size());
  if (!non_negative) q.sign.resize(x.size());
  const std::size_t stride = x.size() / static_cast<std::size_t>(x.n);
  for (int i = 0; i < x.n; ++i) {
    const std::span<const double> row(x.v.data() + i * stride, stride);
    const double max_abs = detail::max_abs_checked(row);
    const double scale = max_abs > 0.0 ? max_abs / 255.0 : 1.0;
    q.scale[static_cast<std::size_t>(i)] = scale;
    for (std::size_t k = 0; k < stride; ++k) {
      const std::size_t at = i * stride + k;
      q.mag[at] = detail::quantize_value(x.v[at], scale);
      if (!non_negative) q.sign[at] = x.v[at] < 0.0 ? -1 : 1;
    }
  }
  return q;
}

inline Tensor dequantize(const QuantTensor& q) {
  Tensor t(q.n, q.h, q.w, q.c);
  const std::size_t stride =
      q.n > 0 ? t.size() / static_cast<std::size_t>(q.n) : 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double s = q.scale_for(static_cast<int>(i / stride));
    const double sgn = q.sign.empty() ? 1.0 : q.sign[i];
    t.v[i] = sgn * q.mag[i] * s;
  }
  return t;
}

// "Same" padding geometry with ceil(h/stride) output size.
struct ConvGeom {
  int kh = 1, kw = 1;
  int sh = 1, sw = 1;
  int pad_top = 0, pad_left = 0;
  int out_h = 0, out_w = 0;
};

inline ConvGeom same_geom(int h, int w, int kh, int kw, int sh, int sw) {
  ConvGeom g;
  g.kh = kh;
  g.kw = kw;
  g.sh = sh;
  g.sw = sw;
  g.out_h = (h + sh - 1) / sh;
  g.out_w = (w + sw - 1) / sw;
  g.pad_top = std::max((g.out_h - 1) * sh + kh - h, 0) / 2;
  g.pad_left = std::max((g.out_w - 1) * sw + kw - w, 0) / 2;
  return g;
}

// Quantized convolution through the multiplier table. Every scalar product,
// padding included, goes through the table; partial sums accumulate exactly
// in 64-bit integers and are scaled back once per output element.
inline Tensor conv_forward_approx(const QuantTensor& in, const QuantTensor& wq,
                                  const MultiplierModel& model,
                                  const ConvGeom& g,
                                  std::span<const double> bias) {
  if (wq.w != in.c)
    throw ShapeError("conv weights expect " + std::to_string(wq.w) +
                     " input channels, activations have " +
                     std::to_string(in.c));
  if (wq.n != g.kh || wq.h != g.kw)
    throw ShapeError("conv weights do not match kernel geometry");
  const int cin = in.c;
  const int cout = wq.c;
  if (static_cast<int>(bias.size()) != cout)
    throw ShapeError("conv bias size does not match filter count");

  Tensor out(in.n, g.out_h, g.out_w, cout);
  const std::uint16_t* table = model.table.data();
  std::vector<std::int64_t> acc(static_cast<std::size_t>(cout));
  for (int i = 0; i < in.n; ++i) {
    const double scale = in.scale_for(i) * wq.scale_for(0);
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        std::fill(acc.begin(), acc.end(), std::int64_t{0});
        for (int ky = 0; ky < g.kh; ++ky) {
          const int iy = oy * g.sh - g.pad_top + ky;
          const bool row_pad = iy < 0 || iy >= in.h;
          for (int kx = 0; kx < g.kw; ++kx) {
            const int ix = ox * g.sw - g.pad_left + kx;
            const bool pad = row_pad || ix < 0 || ix >= in.w;
            for (int ci = 0; ci < cin; ++ci) {
              int a = 0;
              int a_sign = 1;
              if (!pad) {
                const std::size_t ai =
                    ((static_cast<std::size_t>(i) * in.h + iy) * in.w + ix) *
                        cin +
                    ci;
                a = in.mag[ai];
                if (!in.sign.empty()) a_sign = in.sign[ai];
              }
              const std::size_t wbase =
                  ((static_cast<std::size_t>(ky) * g.kw + kx) * cin + ci) *
                  cout;
              const std::uint16_t* row = table + (a << 8);
              for (int co = 0; co < cout; ++co) {
                const int w_sign =
                    wq.sign.empty() ? 1 : wq.sign[wbase + co];
                acc[static_cast<std::size_t>(co)] +=
                    static_cast<std::int64_t>(a_sign * w_sign) *
                    row[wq.mag[wbase + co]];
              }
            }
          }
        }
        double* o = out.v.data() + out.idx(i, oy, ox, 0);
        for (int co = 0; co < cout; ++co)
          o[co] = static_cast<double>(acc[static_cast<std::size_t>(co)]) *
                      scale +
                  bias[static_cast<std::size_t>(co)];
      }
    }
  }
  return out;
}

// Floating-point reference convolution; also the backward pass's model of
// the forward computation.
inline Tensor conv_forward_float(const Tensor& in, const Tensor& weights,
                                 const ConvGeom& g,
                                 std::span<const double> bias) {
  const int cin = in.c;
  const int cout = weights.c;
  if (weights.w != cin) throw ShapeError("conv weights/input channel mismatch");
  Tensor out(in.n, g.out_h, g.out_w, cout);
  for (int i = 0; i < in.n; ++i) {
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        double* o = out.v.data() + out.idx(i, oy, ox, 0);
        for (int co = 0; co < cout; ++co) o[co] = bias[co];
        for (int ky = 0; ky < g.kh; ++ky) {
          const int iy = oy * g.sh - g.pad_top + ky;
          if (iy < 0 || iy >= in.h) continue;
          for (int kx = 0; kx < g.kw; ++kx) {
            const int ix = ox * g.sw - g.pad_left + kx;
            if (ix < 0 || ix >= in.w) continue;
            const double* irow = in.v.data() + in.idx(i, iy, ix, 0);
            const double* wrow =
                weights.v.data() +
                ((static_cast<std::size_t>(ky) * g.kw + kx) * cin) * cout;
            for (int ci = 0; ci < cin; ++ci) {
              const double a = irow[ci];
              const double* wc = wrow + static_cast<std::size_t>(ci) * cout;
              for (int co = 0; co < cout; ++co) o[co] += a * wc[co];
            }
          }
        }
      }
    }
  }
  return out;
}

struct ConvGrads {
  Tensor d_input;
  Tensor d_weights;
  std::vector<double> d_bias;
};

inline ConvGrads conv_backward_float(const Tensor& d_out, const Tensor& in,
                                     const Tensor& weights,
                                     const ConvGeom& g) {
  const int cin = in.c;
  const int cout = weights.c;
  ConvGrads grads;
  grads.d_input = Tensor(in.n, in.h, in.w, in.c);
  grads.d_weights = Tensor(weights.n, weights.h, weights.w, weights.c);
  grads.d_bias.assign(static_cast<std::size_t>(cout), 0.0);
  for (int i = 0; i < in.n; ++i) {
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        const double* do_row = d_out.v.data() + d_out.idx(i, oy, ox, 0);
        for (int co = 0; co < cout; ++co) grads.d_bias[co] += do_row[co];
        for (int ky = 0; ky < g.kh; ++ky) {
          const int iy = oy * g.sh - g.pad_top + ky;
          if (iy < 0 || iy >= in.h) continue;
          for (int kx = 0; kx < g.kw; ++kx) {
            const int ix = ox * g.sw - g.pad_left + kx;
            if (ix < 0 || ix >= in.w) continue;
            const double* irow = in.v.data() + in.idx(i, iy, ix, 0);
            double* dirow = grads.d_input.v.data() + in.idx(i, iy, ix, 0);
            const std::size_t wbase =
                (static_cast<std::size_t>(ky) * g.kw + kx) * cin;
            for (int ci = 0; ci < cin; ++ci) {
              const double* wc =
                  weights.v.data() + (wbase + ci) * cout;
              double* dwc = grads.d_weights.v.data() + (wbase + ci) * cout;
              double di = 0.0;
              const double a = irow[ci];
              for (int co = 0; co < cout; ++co) {
                di += wc[co] * do_row[co];
                dwc[co] += a * do_row[co];
              }
              dirow[ci] += di;
            }
          }
        }
      }
    }
  }
  return grads;
}

}  // namespace axnas
