#pragma once

#include <cmath>
#include <vector>

#include "mpa/ops.hpp"
#include "mpa/tensor.hpp"

// Network-layer primitives. Tensors use HWC layout (channel index fastest);
// linear weights are [Cin,Cout], conv kernels [kh,kw,Cin,Cout], depthwise
// kernels [kh,kw,C].

namespace mpa {

// x[...,Cin] @ w[Cin,Cout] + b[Cout]
template <typename T>
TensorPtr<T> linear(const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& b) {
  int cin = x->shape.back();
  if (w->shape.size() != 2 || w->shape[0] != cin)
    throw std::invalid_argument("linear: weight " + shape_str(w->shape) +
                                " does not accept input " + shape_str(x->shape));
  int cout = w->shape[1];
  if (b->shape != Shape{cout}) throw std::invalid_argument("linear: bias shape mismatch");
  std::size_t rows = x->numel() / cin;
  std::vector<T> out(rows * cout);
  for (std::size_t r = 0; r < rows; ++r) {
    T* o = &out[r * cout];
    for (int j = 0; j < cout; ++j) o[j] = b->value[j];
    const T* xr = &x->value[r * cin];
    for (int i = 0; i < cin; ++i) {
      T a = xr[i];
      const T* wr = &w->value[std::size_t(i) * cout];
      for (int j = 0; j < cout; ++j) o[j] += a * wr[j];
    }
  }
  Shape oshape = x->shape;
  oshape.back() = cout;
  return make_node<T>(
      std::move(oshape), std::move(out), {x, w, b},
      [x, w, b, rows, cin, cout](const std::vector<T>& g, Backprop<T>& bp) {
        auto* gx = bp.grad_of(x.get());
        auto* gw = bp.grad_of(w.get());
        auto* gb = bp.grad_of(b.get());
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gr = &g[r * cout];
          if (gx) {
            T* gxr = &(*gx)[r * cin];
            for (int i = 0; i < cin; ++i) {
              const T* wr = &w->value[std::size_t(i) * cout];
              T acc = 0;
              for (int j = 0; j < cout; ++j) acc += wr[j] * gr[j];
              gxr[i] += acc;
            }
          }
          if (gw) {
            const T* xr = &x->value[r * cin];
            for (int i = 0; i < cin; ++i) {
              T a = xr[i];
              T* gwr = &(*gw)[std::size_t(i) * cout];
              for (int j = 0; j < cout; ++j) gwr[j] += a * gr[j];
            }
          }
          if (gb)
            for (int j = 0; j < cout; ++j) (*gb)[j] += gr[j];
        }
      });
}

// Row-wise layer normalisation over the channel dimension.
template <typename T>
TensorPtr<T> layer_norm(const TensorPtr<T>& x, const TensorPtr<T>& gamma,
                        const TensorPtr<T>& beta, T eps = T(1e-6)) {
  int c = x->shape.back();
  if (gamma->shape != Shape{c} || beta->shape != Shape{c})
    throw std::invalid_argument("layer_norm: gamma/beta must be [C]");
  std::size_t rows = x->numel() / c;
  std::vector<T> out(x->numel());
  auto xhat = std::make_shared<std::vector<T>>(x->numel());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = &x->value[r * c];
    T m = 0;
    for (int j = 0; j < c; ++j) m += xr[j];
    m /= static_cast<T>(c);
    T v = 0;
    for (int j = 0; j < c; ++j) {
      T d = xr[j] - m;
      v += d * d;
    }
    v /= static_cast<T>(c);
    T is = T(1) / std::sqrt(v + eps);
    (*inv_std)[r] = is;
    for (int j = 0; j < c; ++j) {
      T xh = (xr[j] - m) * is;
      (*xhat)[r * c + j] = xh;
      out[r * c + j] = gamma->value[j] * xh + beta->value[j];
    }
  }
  return make_node<T>(
      x->shape, std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std, rows, c](const std::vector<T>& g, Backprop<T>& bp) {
        auto* gx = bp.grad_of(x.get());
        auto* gg = bp.grad_of(gamma.get());
        auto* gb = bp.grad_of(beta.get());
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gr = &g[r * c];
          const T* xh = &(*xhat)[r * c];
          if (gg)
            for (int j = 0; j < c; ++j) (*gg)[j] += gr[j] * xh[j];
          if (gb)
            for (int j = 0; j < c; ++j) (*gb)[j] += gr[j];
          if (gx) {
            T sum_d = 0, sum_dx = 0;
            for (int j = 0; j < c; ++j) {
              T d = gr[j] * gamma->value[j];
              sum_d += d;
              sum_dx += d * xh[j];
            }
            T invc = T(1) / static_cast<T>(c);
            for (int j = 0; j < c; ++j) {
              T d = gr[j] * gamma->value[j];
              (*gx)[r * c + j] +=
                  (*inv_std)[r] * (d - invc * sum_d - xh[j] * invc * sum_dx);
            }
          }
        }
      });
}

// Exact-erf GELU: x * Phi(x).
template <typename T>
TensorPtr<T> gelu(const TensorPtr<T>& x) {
  std::size_t n = x->numel();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    T v = x->value[i];
    out[i] = v * detail::std_normal_cdf(v);
  }
  return make_node<T>(x->shape, std::move(out), {x},
                      [x](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* gx = bp.grad_of(x.get()))
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            T v = x->value[i];
                            (*gx)[i] += g[i] * (detail::std_normal_cdf(v) +
                                                v * detail::std_normal_pdf(v));
                          }
                      });
}

namespace detail {
inline int conv_out_extent(int in, int k, int stride, int pad, const char* op) {
  if (in % stride != 0)
    throw std::invalid_argument(std::string(op) + ": extent " + std::to_string(in) +
                                " not divisible by stride " + std::to_string(stride));
  int padded = in + 2 * pad - k;
  if (padded < 0)
    throw std::invalid_argument(std::string(op) + ": kernel larger than padded input");
  return padded / stride + 1;
}
}  // namespace detail

// Zero-padded 2D convolution, x[H,W,Cin] * k[kh,kw,Cin,Cout] + b[Cout].
template <typename T>
TensorPtr<T> conv2d(const TensorPtr<T>& x, const TensorPtr<T>& k, const TensorPtr<T>& b,
                    int stride, int pad) {
  if (x->shape.size() != 3 || k->shape.size() != 4)
    throw std::invalid_argument("conv2d: expects x[H,W,Cin], k[kh,kw,Cin,Cout]");
  int h = x->shape[0], w = x->shape[1], cin = x->shape[2];
  int kh = k->shape[0], kw = k->shape[1], cout = k->shape[3];
  if (k->shape[2] != cin) throw std::invalid_argument("conv2d: kernel Cin mismatch");
  if (b->shape != Shape{cout}) throw std::invalid_argument("conv2d: bias shape mismatch");
  int oh = detail::conv_out_extent(h, kh, stride, pad, "conv2d");
  int ow = detail::conv_out_extent(w, kw, stride, pad, "conv2d");
  std::vector<T> out(std::size_t(oh) * ow * cout);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      T* o = &out[(std::size_t(oy) * ow + ox) * cout];
      for (int j = 0; j < cout; ++j) o[j] = b->value[j];
      for (int ky = 0; ky < kh; ++ky) {
        int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          int ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= w) continue;
          const T* xr = &x->value[(std::size_t(iy) * w + ix) * cin];
          const T* kr = &k->value[((std::size_t(ky) * kw + kx) * cin) * cout];
          for (int i = 0; i < cin; ++i) {
            T a = xr[i];
            const T* krow = kr + std::size_t(i) * cout;
            for (int j = 0; j < cout; ++j) o[j] += a * krow[j];
          }
        }
      }
    }
  return make_node<T>(
      {oh, ow, cout}, std::move(out), {x, k, b},
      [x, k, b, h, w, cin, kh, kw, cout, oh, ow, stride, pad](const std::vector<T>& g,
                                                              Backprop<T>& bp) {
        auto* gx = bp.grad_of(x.get());
        auto* gk = bp.grad_of(k.get());
        auto* gb = bp.grad_of(b.get());
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            const T* gr = &g[(std::size_t(oy) * ow + ox) * cout];
            if (gb)
              for (int j = 0; j < cout; ++j) (*gb)[j] += gr[j];
            for (int ky = 0; ky < kh; ++ky) {
              int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                int ix = ox * stride - pad + kx;
                if (ix < 0 || ix >= w) continue;
                std::size_t xoff = (std::size_t(iy) * w + ix) * cin;
                std::size_t koff = (std::size_t(ky) * kw + kx) * cin * cout;
                if (gx)
                  for (int i = 0; i < cin; ++i) {
                    const T* krow = &k->value[koff + std::size_t(i) * cout];
                    T acc = 0;
                    for (int j = 0; j < cout; ++j) acc += krow[j] * gr[j];
                    (*gx)[xoff + i] += acc;
                  }
                if (gk)
                  for (int i = 0; i < cin; ++i) {
                    T a = x->value[xoff + i];
                    T* gkr = &(*gk)[koff + std::size_t(i) * cout];
                    for (int j = 0; j < cout; ++j) gkr[j] += a * gr[j];
                  }
              }
            }
          }
      });
}

// Depthwise convolution, stride 1: x[H,W,C] * k[kh,kw,C] + b[C].
template <typename T>
TensorPtr<T> depthwise_conv2d(const TensorPtr<T>& x, const TensorPtr<T>& k,
                              const TensorPtr<T>& b, int pad) {
  if (x->shape.size() != 3 || k->shape.size() != 3)
    throw std::invalid_argument("depthwise_conv2d: expects x[H,W,C], k[kh,kw,C]");
  int h = x->shape[0], w = x->shape[1], c = x->shape[2];
  int kh = k->shape[0], kw = k->shape[1];
  if (k->shape[2] != c || b->shape != Shape{c})
    throw std::invalid_argument("depthwise_conv2d: channel mismatch");
  int oh = detail::conv_out_extent(h, kh, 1, pad, "depthwise_conv2d");
  int ow = detail::conv_out_extent(w, kw, 1, pad, "depthwise_conv2d");
  std::vector<T> out(std::size_t(oh) * ow * c);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      T* o = &out[(std::size_t(oy) * ow + ox) * c];
      for (int j = 0; j < c; ++j) o[j] = b->value[j];
      for (int ky = 0; ky < kh; ++ky) {
        int iy = oy - pad + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          int ix = ox - pad + kx;
          if (ix < 0 || ix >= w) continue;
          const T* xr = &x->value[(std::size_t(iy) * w + ix) * c];
          const T* kr = &k->value[(std::size_t(ky) * kw + kx) * c];
          for (int j = 0; j < c; ++j) o[j] += xr[j] * kr[j];
        }
      }
    }
  return make_node<T>(
      {oh, ow, c}, std::move(out), {x, k, b},
      [x, k, b, h, w, c, kh, kw, oh, ow, pad](const std::vector<T>& g, Backprop<T>& bp) {
        auto* gx = bp.grad_of(x.get());
        auto* gk = bp.grad_of(k.get());
        auto* gb = bp.grad_of(b.get());
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            const T* gr = &g[(std::size_t(oy) * ow + ox) * c];
            if (gb)
              for (int j = 0; j < c; ++j) (*gb)[j] += gr[j];
            for (int ky = 0; ky < kh; ++ky) {
              int iy = oy - pad + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                int ix = ox - pad + kx;
                if (ix < 0 || ix >= w) continue;
                std::size_t xoff = (std::size_t(iy) * w + ix) * c;
                std::size_t koff = (std::size_t(ky) * kw + kx) * c;
                if (gx)
                  for (int j = 0; j < c; ++j) (*gx)[xoff + j] += k->value[koff + j] * gr[j];
                if (gk)
                  for (int j = 0; j < c; ++j) (*gk)[j + koff] += x->value[xoff + j] * gr[j];
              }
            }
          }
      });
}

// Transposed convolution: the adjoint of a stride-s conv. Output extent is
// (H-1)*stride - 2*pad + kh.
template <typename T>
TensorPtr<T> transposed_conv2d(const TensorPtr<T>& x, const TensorPtr<T>& k,
                               const TensorPtr<T>& b, int stride, int pad) {
  if (x->shape.size() != 3 || k->shape.size() != 4)
    throw std::invalid_argument("transposed_conv2d: expects x[H,W,Cin], k[kh,kw,Cin,Cout]");
  int h = x->shape[0], w = x->shape[1], cin = x->shape[2];
  int kh = k->shape[0], kw = k->shape[1], cout = k->shape[3];
  if (k->shape[2] != cin) throw std::invalid_argument("transposed_conv2d: kernel Cin mismatch");
  if (b->shape != Shape{cout}) throw std::invalid_argument("transposed_conv2d: bias shape mismatch");
  int oh = (h - 1) * stride - 2 * pad + kh;
  int ow = (w - 1) * stride - 2 * pad + kw;
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("transposed_conv2d: empty output");
  std::vector<T> out(std::size_t(oh) * ow * cout);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      T* o = &out[(std::size_t(oy) * ow + ox) * cout];
      for (int j = 0; j < cout; ++j) o[j] = b->value[j];
    }
  for (int iy = 0; iy < h; ++iy)
    for (int ix = 0; ix < w; ++ix) {
      const T* xr = &x->value[(std::size_t(iy) * w + ix) * cin];
      for (int ky = 0; ky < kh; ++ky) {
        int oy = iy * stride - pad + ky;
        if (oy < 0 || oy >= oh) continue;
        for (int kx = 0; kx < kw; ++kx) {
          int ox = ix * stride - pad + kx;
          if (ox < 0 || ox >= ow) continue;
          T* o = &out[(std::size_t(oy) * ow + ox) * cout];
          const T* kr = &k->value[(std::size_t(ky) * kw + kx) * cin * cout];
          for (int i = 0; i < cin; ++i) {
            T a = xr[i];
            const T* krow = kr + std::size_t(i) * cout;
            for (int j = 0; j < cout; ++j) o[j] += a * krow[j];
          }
        }
      }
    }
  return make_node<T>(
      {oh, ow, cout}, std::move(out), {x, k, b},
      [x, k, b, h, w, cin, kh, kw, cout, oh, ow, stride, pad](const std::vector<T>& g,
                                                              Backprop<T>& bp) {
        auto* gx = bp.grad_of(x.get());
        auto* gk = bp.grad_of(k.get());
        auto* gb = bp.grad_of(b.get());
        if (gb)
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              const T* gr = &g[(std::size_t(oy) * ow + ox) * cout];
              for (int j = 0; j < cout; ++j) (*gb)[j] += gr[j];
            }
        for (int iy = 0; iy < h; ++iy)
          for (int ix = 0; ix < w; ++ix) {
            std::size_t xoff = (std::size_t(iy) * w + ix) * cin;
            for (int ky = 0; ky < kh; ++ky) {
              int oy = iy * stride - pad + ky;
              if (oy < 0 || oy >= oh) continue;
              for (int kx = 0; kx < kw; ++kx) {
                int ox = ix * stride - pad + kx;
                if (ox < 0 || ox >= ow) continue;
                const T* gr = &g[(std::size_t(oy) * ow + ox) * cout];
                std::size_t koff = (std::size_t(ky) * kw + kx) * cin * cout;
                if (gx)
                  for (int i = 0; i < cin; ++i) {
                    const T* krow = &k->value[koff + std::size_t(i) * cout];
                    T acc = 0;
                    for (int j = 0; j < cout; ++j) acc += krow[j] * gr[j];
                    (*gx)[xoff + i] += acc;
                  }
                if (gk)
                  for (int i = 0; i < cin; ++i) {
                    T a = x->value[xoff + i];
                    T* gkr = &(*gk)[koff + std::size_t(i) * cout];
                    for (int j = 0; j < cout; ++j) gkr[j] += a * gr[j];
                  }
              }
            }
          }
      });
}

template <typename T>
TensorPtr<T> upsample_nearest(const TensorPtr<T>& x, int factor) {
  if (x->shape.size() != 3) throw std::invalid_argument("upsample_nearest expects [H,W,C]");
  if (factor < 1) throw std::invalid_argument("upsample_nearest: factor must be >= 1");
  int h = x->shape[0], w = x->shape[1], c = x->shape[2];
  int oh = h * factor, ow = w * factor;
  std::vector<T> out(std::size_t(oh) * ow * c);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      std::copy_n(&x->value[(std::size_t(oy / factor) * w + ox / factor) * c], c,
                  &out[(std::size_t(oy) * ow + ox) * c]);
  return make_node<T>({oh, ow, c}, std::move(out), {x},
                      [x, w, c, oh, ow, factor](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* gx = bp.grad_of(x.get()))
                          for (int oy = 0; oy < oh; ++oy)
                            for (int ox = 0; ox < ow; ++ox) {
                              std::size_t src = (std::size_t(oy / factor) * w + ox / factor) * c;
                              const T* gr = &g[(std::size_t(oy) * ow + ox) * c];
                              for (int j = 0; j < c; ++j) (*gx)[src + j] += gr[j];
                            }
                      });
}

// Replicate-edge padding.
template <typename T>
TensorPtr<T> pad_edge(const TensorPtr<T>& x, int top, int bottom, int left, int right) {
  if (x->shape.size() != 3) throw std::invalid_argument("pad_edge expects [H,W,C]");
  if (top < 0 || bottom < 0 || left < 0 || right < 0)
    throw std::invalid_argument("pad_edge: negative padding");
  int h = x->shape[0], w = x->shape[1], c = x->shape[2];
  int oh = h + top + bottom, ow = w + left + right;
  std::vector<T> out(std::size_t(oh) * ow * c);
  for (int oy = 0; oy < oh; ++oy) {
    int iy = std::clamp(oy - top, 0, h - 1);
    for (int ox = 0; ox < ow; ++ox) {
      int ix = std::clamp(ox - left, 0, w - 1);
      std::copy_n(&x->value[(std::size_t(iy) * w + ix) * c], c,
                  &out[(std::size_t(oy) * ow + ox) * c]);
    }
  }
  return make_node<T>({oh, ow, c}, std::move(out), {x},
                      [x, h, w, c, oh, ow, top, left](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* gx = bp.grad_of(x.get()))
                          for (int oy = 0; oy < oh; ++oy) {
                            int iy = std::clamp(oy - top, 0, h - 1);
                            for (int ox = 0; ox < ow; ++ox) {
                              int ix = std::clamp(ox - left, 0, w - 1);
                              const T* gr = &g[(std::size_t(oy) * ow + ox) * c];
                              T* gxr = &(*gx)[(std::size_t(iy) * w + ix) * c];
                              for (int j = 0; j < c; ++j) gxr[j] += gr[j];
                            }
                          }
                      });
}

// Spatial crop starting at (row0, col0).
template <typename T>
TensorPtr<T> crop_spatial(const TensorPtr<T>& x, int row0, int col0, int h, int w) {
  if (x->shape.size() != 3) throw std::invalid_argument("crop_spatial expects [H,W,C]");
  if (row0 < 0 || col0 < 0 || h < 1 || w < 1 || row0 + h > x->shape[0] ||
      col0 + w > x->shape[1])
    throw std::invalid_argument("crop_spatial: window out of bounds");
  int iw = x->shape[1], c = x->shape[2];
  std::vector<T> out(std::size_t(h) * w * c);
  for (int y = 0; y < h; ++y)
    std::copy_n(&x->value[(std::size_t(row0 + y) * iw + col0) * c], std::size_t(w) * c,
                &out[std::size_t(y) * w * c]);
  return make_node<T>({h, w, c}, std::move(out), {x},
                      [x, row0, col0, h, w, iw, c](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* gx = bp.grad_of(x.get()))
                          for (int y = 0; y < h; ++y)
                            for (int xw = 0; xw < w * c; ++xw)
                              (*gx)[(std::size_t(row0 + y) * iw + col0) * c + xw] +=
                                  g[std::size_t(y) * w * c + xw];
                      });
}

}  // namespace mpa
