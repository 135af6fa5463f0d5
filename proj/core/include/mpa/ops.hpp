#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "mpa/error.hpp"
#include "mpa/tensor.hpp"

// Differentiable primitives. Every op validates shapes up front, computes the
// forward value eagerly, and attaches a vjp closure capturing what backward
// needs. Unless stated otherwise inputs must have identical shapes.

namespace mpa {

namespace detail {

template <typename T>
void check_same(const TensorPtr<T>& a, const TensorPtr<T>& b, const char* op) {
  if (!same_shape(a->shape, b->shape))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a->shape) + " vs " + shape_str(b->shape));
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace detail

// ---- elementwise binary ----

template <typename T>
TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  detail::check_same(a, b, "add");
  std::vector<T> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return make_node<T>(a->shape, std::move(out), {a, b},
                      [a, b](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get()))
                          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                        if (auto* gb = bp.grad_of(b.get()))
                          for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
                      });
}

template <typename T>
TensorPtr<T> sub(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  detail::check_same(a, b, "sub");
  std::vector<T> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  return make_node<T>(a->shape, std::move(out), {a, b},
                      [a, b](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get()))
                          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                        if (auto* gb = bp.grad_of(b.get()))
                          for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
                      });
}

template <typename T>
TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  detail::check_same(a, b, "mul");
  std::vector<T> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return make_node<T>(a->shape, std::move(out), {a, b},
                      [a, b](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get()))
                          for (std::size_t i = 0; i < g.size(); ++i)
                            (*ga)[i] += g[i] * b->value[i];
                        if (auto* gb = bp.grad_of(b.get()))
                          for (std::size_t i = 0; i < g.size(); ++i)
                            (*gb)[i] += g[i] * a->value[i];
                      });
}

template <typename T>
TensorPtr<T> div(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  detail::check_same(a, b, "div");
  std::vector<T> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] / b->value[i];
  return make_node<T>(a->shape, std::move(out), {a, b},
                      [a, b](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get()))
                          for (std::size_t i = 0; i < g.size(); ++i)
                            (*ga)[i] += g[i] / b->value[i];
                        if (auto* gb = bp.grad_of(b.get()))
                          for (std::size_t i = 0; i < g.size(); ++i)
                            (*gb)[i] -= g[i] * a->value[i] / (b->value[i] * b->value[i]);
                      });
}

// ---- scalar broadcasts ----

template <typename T>
TensorPtr<T> add_scalar(const TensorPtr<T>& a, T c) {
  std::vector<T> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + c;
  return make_node<T>(a->shape, std::move(out), {a},
                      [a](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get()))
                          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                      });
}

template <typename T>
TensorPtr<T> mul_scalar(const TensorPtr<T>& a, T c) {
  std::vector<T> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * c;
  return make_node<T>(a->shape, std::move(out), {a},
                      [a, c](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get()))
                          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * c;
                      });
}

// x + s where s is a differentiable scalar node broadcast over x.
template <typename T>
TensorPtr<T> add_broadcast_scalar(const TensorPtr<T>& x, const TensorPtr<T>& s) {
  if (s->numel() != 1)
    throw std::invalid_argument("add_broadcast_scalar: not a scalar node");
  T c = s->value[0];
  std::vector<T> out(x->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] + c;
  return make_node<T>(x->shape, std::move(out), {x, s},
                      [x, s](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* gx = bp.grad_of(x.get()))
                          for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
                        if (auto* gs = bp.grad_of(s.get())) {
                          T acc = 0;
                          for (std::size_t i = 0; i < g.size(); ++i) acc += g[i];
                          (*gs)[0] += acc;
                        }
                      });
}

// ---- elementwise unary ----

template <typename T>
TensorPtr<T> exp_of(const TensorPtr<T>& a) {
  std::vector<T> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a->value[i]);
  auto node = make_node<T>(a->shape, std::move(out), {a}, nullptr);
  if (node->requires_grad) {
    auto self = node;
    node->vjp = [a, w = std::weak_ptr<Tensor<T>>(self)](const std::vector<T>& g,
                                                        Backprop<T>& bp) {
      auto out_node = w.lock();
      if (auto* ga = bp.grad_of(a.get()))
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * out_node->value[i];
    };
  }
  return node;
}

template <typename T>
TensorPtr<T> log_of(const TensorPtr<T>& a) {
  std::vector<T> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(a->value[i] > T(0)))
      throw NumericError("log of non-positive value");
    out[i] = std::log(a->value[i]);
  }
  return make_node<T>(a->shape, std::move(out), {a},
                      [a](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get()))
                          for (std::size_t i = 0; i < g.size(); ++i)
                            (*ga)[i] += g[i] / a->value[i];
                      });
}

template <typename T>
TensorPtr<T> sigmoid(const TensorPtr<T>& a) {
  std::vector<T> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::stable_sigmoid(a->value[i]);
  auto node = make_node<T>(a->shape, std::move(out), {a}, nullptr);
  if (node->requires_grad)
    node->vjp = [a, w = std::weak_ptr<Tensor<T>>(node)](const std::vector<T>& g,
                                                        Backprop<T>& bp) {
      auto out_node = w.lock();
      if (auto* ga = bp.grad_of(a.get()))
        for (std::size_t i = 0; i < g.size(); ++i) {
          T y = out_node->value[i];
          (*ga)[i] += g[i] * y * (T(1) - y);
        }
    };
  return node;
}

template <typename T>
TensorPtr<T> softplus(const TensorPtr<T>& a) {
  std::vector<T> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    T x = a->value[i];
    out[i] = x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  return make_node<T>(a->shape, std::move(out), {a},
                      [a](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get()))
                          for (std::size_t i = 0; i < g.size(); ++i)
                            (*ga)[i] += g[i] * detail::stable_sigmoid(a->value[i]);
                      });
}

// max(x, c); gradient passes only where x > c.
template <typename T>
TensorPtr<T> clamp_min(const TensorPtr<T>& a, T c) {
  std::vector<T> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a->value[i], c);
  return make_node<T>(a->shape, std::move(out), {a},
                      [a, c](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get()))
                          for (std::size_t i = 0; i < g.size(); ++i)
                            if (a->value[i] > c) (*ga)[i] += g[i];
                      });
}

template <typename T>
TensorPtr<T> clamp(const TensorPtr<T>& a, T lo, T hi) {
  std::vector<T> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::min(std::max(a->value[i], lo), hi);
  return make_node<T>(a->shape, std::move(out), {a},
                      [a, lo, hi](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get()))
                          for (std::size_t i = 0; i < g.size(); ++i)
                            if (a->value[i] > lo && a->value[i] < hi) (*ga)[i] += g[i];
                      });
}

// ---- straight-through estimators ----

// Round half away from zero in the forward pass; identity in the backward
// pass. With a non-differentiable input this is plain rounding.
template <typename T>
TensorPtr<T> round_ste(const TensorPtr<T>& a) {
  std::vector<T> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::round(a->value[i]);
  return make_node<T>(a->shape, std::move(out), {a},
                      [a](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get()))
                          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                      });
}

// 1 where x > thresh else 0; gradient passes through unchanged.
template <typename T>
TensorPtr<T> hard_threshold_ste(const TensorPtr<T>& a, T thresh) {
  std::vector<T> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a->value[i] > thresh ? T(1) : T(0);
  return make_node<T>(a->shape, std::move(out), {a},
                      [a](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get()))
                          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                      });
}

// ---- reductions ----

template <typename T>
TensorPtr<T> sum(const TensorPtr<T>& a) {
  T acc = 0;
  for (T v : a->value) acc += v;
  return make_node<T>({1}, {acc}, {a},
                      [a](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get()))
                          for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += g[0];
                      });
}

template <typename T>
TensorPtr<T> mean(const TensorPtr<T>& a) {
  T acc = 0;
  for (T v : a->value) acc += v;
  T inv = T(1) / static_cast<T>(a->numel());
  return make_node<T>({1}, {acc * inv}, {a},
                      [a, inv](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get()))
                          for (std::size_t i = 0; i < ga->size(); ++i)
                            (*ga)[i] += g[0] * inv;
                      });
}

// [H,W,C] -> [C], mean over all spatial positions.
template <typename T>
TensorPtr<T> mean_spatial(const TensorPtr<T>& a) {
  if (a->shape.size() != 3)
    throw std::invalid_argument("mean_spatial expects [H,W,C]");
  int hw = a->shape[0] * a->shape[1], c = a->shape[2];
  std::vector<T> out(c, T(0));
  for (int p = 0; p < hw; ++p)
    for (int j = 0; j < c; ++j) out[j] += a->value[std::size_t(p) * c + j];
  T inv = T(1) / static_cast<T>(hw);
  for (int j = 0; j < c; ++j) out[j] *= inv;
  return make_node<T>({c}, std::move(out), {a},
                      [a, hw, c, inv](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get()))
                          for (int p = 0; p < hw; ++p)
                            for (int j = 0; j < c; ++j)
                              (*ga)[std::size_t(p) * c + j] += g[j] * inv;
                      });
}

// ---- shape ops ----

template <typename T>
TensorPtr<T> reshape(const TensorPtr<T>& a, Shape shape) {
  if (shape_numel(shape) != a->numel())
    throw std::invalid_argument("reshape: numel mismatch to " + shape_str(shape));
  return make_node<T>(std::move(shape), a->value, {a},
                      [a](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get()))
                          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                      });
}

// Leaf copy: same values, no gradient connection.
template <typename T>
TensorPtr<T> detach(const TensorPtr<T>& a) {
  return make_leaf<T>(a->shape, a->value, false);
}

// Row r of an [N,C] tensor as a [C] node.
template <typename T>
TensorPtr<T> slice_row(const TensorPtr<T>& a, int r) {
  if (a->shape.size() != 2) throw std::invalid_argument("slice_row expects [N,C]");
  int n = a->shape[0], c = a->shape[1];
  if (r < 0 || r >= n) throw std::invalid_argument("slice_row: row out of range");
  std::vector<T> out(a->value.begin() + std::size_t(r) * c,
                     a->value.begin() + std::size_t(r + 1) * c);
  return make_node<T>({c}, std::move(out), {a},
                      [a, r, c](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get()))
                          for (int j = 0; j < c; ++j)
                            (*ga)[std::size_t(r) * c + j] += g[j];
                      });
}

// Single element as a scalar node (flat index).
template <typename T>
TensorPtr<T> pick(const TensorPtr<T>& a, int index) {
  if (index < 0 || std::size_t(index) >= a->numel())
    throw std::invalid_argument("pick: index out of range");
  return make_node<T>({1}, {a->value[index]}, {a},
                      [a, index](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get())) (*ga)[index] += g[0];
                      });
}

template <typename T>
TensorPtr<T> concat_channels(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->shape.size() != 3 || b->shape.size() != 3 || a->shape[0] != b->shape[0] ||
      a->shape[1] != b->shape[1])
    throw std::invalid_argument("concat_channels: incompatible shapes " +
                                shape_str(a->shape) + " vs " + shape_str(b->shape));
  int hw = a->shape[0] * a->shape[1], ca = a->shape[2], cb = b->shape[2];
  std::vector<T> out(std::size_t(hw) * (ca + cb));
  for (int p = 0; p < hw; ++p) {
    std::copy_n(&a->value[std::size_t(p) * ca], ca, &out[std::size_t(p) * (ca + cb)]);
    std::copy_n(&b->value[std::size_t(p) * cb], cb, &out[std::size_t(p) * (ca + cb) + ca]);
  }
  return make_node<T>({a->shape[0], a->shape[1], ca + cb}, std::move(out), {a, b},
                      [a, b, hw, ca, cb](const std::vector<T>& g, Backprop<T>& bp) {
                        auto* ga = bp.grad_of(a.get());
                        auto* gb = bp.grad_of(b.get());
                        for (int p = 0; p < hw; ++p) {
                          const T* gp = &g[std::size_t(p) * (ca + cb)];
                          if (ga)
                            for (int j = 0; j < ca; ++j)
                              (*ga)[std::size_t(p) * ca + j] += gp[j];
                          if (gb)
                            for (int j = 0; j < cb; ++j)
                              (*gb)[std::size_t(p) * cb + j] += gp[ca + j];
                        }
                      });
}

// Channels [c0, c1) of an [H,W,C] tensor.
template <typename T>
TensorPtr<T> slice_channels(const TensorPtr<T>& a, int c0, int c1) {
  if (a->shape.size() != 3 || c0 < 0 || c1 <= c0 || c1 > a->shape[2])
    throw std::invalid_argument("slice_channels: bad range");
  int hw = a->shape[0] * a->shape[1], c = a->shape[2], cs = c1 - c0;
  std::vector<T> out(std::size_t(hw) * cs);
  for (int p = 0; p < hw; ++p)
    std::copy_n(&a->value[std::size_t(p) * c + c0], cs, &out[std::size_t(p) * cs]);
  return make_node<T>({a->shape[0], a->shape[1], cs}, std::move(out), {a},
                      [a, hw, c, c0, cs](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get()))
                          for (int p = 0; p < hw; ++p)
                            for (int j = 0; j < cs; ++j)
                              (*ga)[std::size_t(p) * c + c0 + j] +=
                                  g[std::size_t(p) * cs + j];
                      });
}

// ---- channel broadcasts ----

// x[...,C] * s[C]
template <typename T>
TensorPtr<T> mul_channels(const TensorPtr<T>& x, const TensorPtr<T>& s) {
  int c = x->shape.back();
  if (s->shape.size() != 1 || s->shape[0] != c)
    throw std::invalid_argument("mul_channels: scale shape " + shape_str(s->shape) +
                                " does not match channels " + std::to_string(c));
  std::size_t rows = x->numel() / c;
  std::vector<T> out(x->numel());
  for (std::size_t p = 0; p < rows; ++p)
    for (int j = 0; j < c; ++j) out[p * c + j] = x->value[p * c + j] * s->value[j];
  return make_node<T>(x->shape, std::move(out), {x, s},
                      [x, s, rows, c](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* gx = bp.grad_of(x.get()))
                          for (std::size_t p = 0; p < rows; ++p)
                            for (int j = 0; j < c; ++j)
                              (*gx)[p * c + j] += g[p * c + j] * s->value[j];
                        if (auto* gs = bp.grad_of(s.get()))
                          for (std::size_t p = 0; p < rows; ++p)
                            for (int j = 0; j < c; ++j)
                              (*gs)[j] += g[p * c + j] * x->value[p * c + j];
                      });
}

// x[...,C] / s[C]
template <typename T>
TensorPtr<T> div_channels(const TensorPtr<T>& x, const TensorPtr<T>& s) {
  int c = x->shape.back();
  if (s->shape.size() != 1 || s->shape[0] != c)
    throw std::invalid_argument("div_channels: scale shape mismatch");
  std::size_t rows = x->numel() / c;
  std::vector<T> out(x->numel());
  for (std::size_t p = 0; p < rows; ++p)
    for (int j = 0; j < c; ++j) out[p * c + j] = x->value[p * c + j] / s->value[j];
  return make_node<T>(x->shape, std::move(out), {x, s},
                      [x, s, rows, c](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* gx = bp.grad_of(x.get()))
                          for (std::size_t p = 0; p < rows; ++p)
                            for (int j = 0; j < c; ++j)
                              (*gx)[p * c + j] += g[p * c + j] / s->value[j];
                        if (auto* gs = bp.grad_of(s.get()))
                          for (std::size_t p = 0; p < rows; ++p)
                            for (int j = 0; j < c; ++j)
                              (*gs)[j] -= g[p * c + j] * x->value[p * c + j] /
                                          (s->value[j] * s->value[j]);
                      });
}

// x[H,W,C] * m[H,W,1], mask broadcast across channels.
template <typename T>
TensorPtr<T> mul_mask(const TensorPtr<T>& x, const TensorPtr<T>& m) {
  if (x->shape.size() != 3 || m->shape.size() != 3 || m->shape[2] != 1 ||
      m->shape[0] != x->shape[0] || m->shape[1] != x->shape[1])
    throw std::invalid_argument("mul_mask: mask must be [H,W,1] matching x");
  int hw = x->shape[0] * x->shape[1], c = x->shape[2];
  std::vector<T> out(x->numel());
  for (int p = 0; p < hw; ++p) {
    T mv = m->value[p];
    for (int j = 0; j < c; ++j) out[std::size_t(p) * c + j] = x->value[std::size_t(p) * c + j] * mv;
  }
  return make_node<T>(x->shape, std::move(out), {x, m},
                      [x, m, hw, c](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* gx = bp.grad_of(x.get()))
                          for (int p = 0; p < hw; ++p) {
                            T mv = m->value[p];
                            for (int j = 0; j < c; ++j)
                              (*gx)[std::size_t(p) * c + j] += g[std::size_t(p) * c + j] * mv;
                          }
                        if (auto* gm = bp.grad_of(m.get()))
                          for (int p = 0; p < hw; ++p) {
                            T acc = 0;
                            for (int j = 0; j < c; ++j)
                              acc += g[std::size_t(p) * c + j] *
                                     x->value[std::size_t(p) * c + j];
                            (*gm)[p] += acc;
                          }
                      });
}

// ---- position gather / scatter ----

// Rows of an [H,W,C] tensor selected by flat spatial indices -> [n,C].
template <typename T>
TensorPtr<T> select_positions(const TensorPtr<T>& x, const std::vector<int>& idx) {
  if (x->shape.size() != 3) throw std::invalid_argument("select_positions expects [H,W,C]");
  int hw = x->shape[0] * x->shape[1], c = x->shape[2];
  for (int p : idx)
    if (p < 0 || p >= hw) throw std::invalid_argument("select_positions: index out of range");
  std::vector<T> out(idx.size() * std::size_t(c));
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(&x->value[std::size_t(idx[i]) * c], c, &out[i * c]);
  return make_node<T>({int(idx.size()), c}, std::move(out), {x},
                      [x, idx, c](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* gx = bp.grad_of(x.get()))
                          for (std::size_t i = 0; i < idx.size(); ++i)
                            for (int j = 0; j < c; ++j)
                              (*gx)[std::size_t(idx[i]) * c + j] += g[i * c + j];
                      });
}

// Inverse of two disjoint selections: rows of a and b are written back to
// their spatial positions. The two index sets must partition [0, H*W).
template <typename T>
TensorPtr<T> merge_positions(int h, int w, const std::vector<int>& ia,
                             const TensorPtr<T>& a, const std::vector<int>& ib,
                             const TensorPtr<T>& b) {
  int c = a->shape.back();
  if (b->shape.back() != c) throw std::invalid_argument("merge_positions: channel mismatch");
  if (ia.size() != std::size_t(a->shape[0]) || ib.size() != std::size_t(b->shape[0]))
    throw std::invalid_argument("merge_positions: index/row count mismatch");
  std::size_t hw = std::size_t(h) * w;
  if (ia.size() + ib.size() != hw)
    throw std::invalid_argument("merge_positions: index sets must cover all positions");
  std::vector<char> seen(hw, 0);
  for (int p : ia) {
    if (p < 0 || std::size_t(p) >= hw || seen[p]) throw std::invalid_argument("merge_positions: bad partition");
    seen[p] = 1;
  }
  for (int p : ib) {
    if (p < 0 || std::size_t(p) >= hw || seen[p]) throw std::invalid_argument("merge_positions: bad partition");
    seen[p] = 1;
  }
  std::vector<T> out(hw * c);
  for (std::size_t i = 0; i < ia.size(); ++i)
    std::copy_n(&a->value[i * c], c, &out[std::size_t(ia[i]) * c]);
  for (std::size_t i = 0; i < ib.size(); ++i)
    std::copy_n(&b->value[i * c], c, &out[std::size_t(ib[i]) * c]);
  return make_node<T>({h, w, c}, std::move(out), {a, b},
                      [a, b, ia, ib, c](const std::vector<T>& g, Backprop<T>& bp) {
                        if (auto* ga = bp.grad_of(a.get()))
                          for (std::size_t i = 0; i < ia.size(); ++i)
                            for (int j = 0; j < c; ++j)
                              (*ga)[i * c + j] += g[std::size_t(ia[i]) * c + j];
                        if (auto* gb = bp.grad_of(b.get()))
                          for (std::size_t i = 0; i < ib.size(); ++i)
                            for (int j = 0; j < c; ++j)
                              (*gb)[i * c + j] += g[std::size_t(ib[i]) * c + j];
                      });
}

// ---- coding likelihoods ----

namespace detail {
template <typename T>
T std_normal_cdf(T x) {
  return T(0.5) * (T(1) + std::erf(x * T(0.7071067811865475244)));
}
template <typename T>
T std_normal_pdf(T x) {
  return std::exp(T(-0.5) * x * x) * T(0.3989422804014326779);
}
}  // namespace detail

// Probability mass of the unit-width bin centred at t under N(mu, sigma^2):
// Phi((t-mu+1/2)/sigma) - Phi((t-mu-1/2)/sigma). All inputs same shape.
template <typename T>
TensorPtr<T> gaussian_bin_likelihood(const TensorPtr<T>& t, const TensorPtr<T>& mu,
                                     const TensorPtr<T>& sigma) {
  detail::check_same(t, mu, "gaussian_bin_likelihood");
  detail::check_same(t, sigma, "gaussian_bin_likelihood");
  std::size_t n = t->numel();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    T s = sigma->value[i];
    if (!(s > T(0))) throw NumericError("gaussian_bin_likelihood: sigma must be positive");
    T d = t->value[i] - mu->value[i];
    out[i] = detail::std_normal_cdf((d + T(0.5)) / s) -
             detail::std_normal_cdf((d - T(0.5)) / s);
  }
  return make_node<T>(
      t->shape, std::move(out), {t, mu, sigma},
      [t, mu, sigma](const std::vector<T>& g, Backprop<T>& bp) {
        auto* gt = bp.grad_of(t.get());
        auto* gm = bp.grad_of(mu.get());
        auto* gs = bp.grad_of(sigma.get());
        for (std::size_t i = 0; i < g.size(); ++i) {
          T s = sigma->value[i];
          T d = t->value[i] - mu->value[i];
          T a = (d + T(0.5)) / s, b = (d - T(0.5)) / s;
          T pa = detail::std_normal_pdf(a), pb = detail::std_normal_pdf(b);
          T dt = (pa - pb) / s;
          if (gt) (*gt)[i] += g[i] * dt;
          if (gm) (*gm)[i] -= g[i] * dt;
          if (gs) (*gs)[i] -= g[i] * (a * pa - b * pb) / s;
        }
      });
}

// Same bin mass under a logistic distribution with per-channel location and
// scale; t is [H,W,C], loc and scale are [C].
template <typename T>
TensorPtr<T> logistic_bin_likelihood(const TensorPtr<T>& t, const TensorPtr<T>& loc,
                                     const TensorPtr<T>& scale) {
  if (t->shape.size() != 3) throw std::invalid_argument("logistic_bin_likelihood expects [H,W,C]");
  int c = t->shape[2];
  if (loc->shape != Shape{c} || scale->shape != Shape{c})
    throw std::invalid_argument("logistic_bin_likelihood: loc/scale must be [C]");
  int hw = t->shape[0] * t->shape[1];
  std::vector<T> out(t->numel());
  for (int p = 0; p < hw; ++p)
    for (int j = 0; j < c; ++j) {
      T s = scale->value[j];
      if (!(s > T(0))) throw NumericError("logistic_bin_likelihood: scale must be positive");
      T d = t->value[std::size_t(p) * c + j] - loc->value[j];
      out[std::size_t(p) * c + j] = detail::stable_sigmoid((d + T(0.5)) / s) -
                                    detail::stable_sigmoid((d - T(0.5)) / s);
    }
  return make_node<T>(
      t->shape, std::move(out), {t, loc, scale},
      [t, loc, scale, hw, c](const std::vector<T>& g, Backprop<T>& bp) {
        auto* gt = bp.grad_of(t.get());
        auto* gl = bp.grad_of(loc.get());
        auto* gs = bp.grad_of(scale.get());
        for (int p = 0; p < hw; ++p)
          for (int j = 0; j < c; ++j) {
            std::size_t i = std::size_t(p) * c + j;
            T s = scale->value[j];
            T d = t->value[i] - loc->value[j];
            T a = (d + T(0.5)) / s, b = (d - T(0.5)) / s;
            T sa = detail::stable_sigmoid(a), sb = detail::stable_sigmoid(b);
            T da = sa * (T(1) - sa), db = sb * (T(1) - sb);
            T dt = (da - db) / s;
            if (gt) (*gt)[i] += g[i] * dt;
            if (gl) (*gl)[j] -= g[i] * dt;
            if (gs) (*gs)[j] -= g[i] * (a * da - b * db) / s;
          }
      });
}

// ---- classification ----

// Mean cross entropy of row-wise softmax against integer labels.
template <typename T>
TensorPtr<T> softmax_cross_entropy(const TensorPtr<T>& logits,
                                   const std::vector<int>& labels) {
  if (logits->shape.size() != 2)
    throw std::invalid_argument("softmax_cross_entropy expects [N,K] logits");
  int n = logits->shape[0], k = logits->shape[1];
  if (labels.size() != std::size_t(n))
    throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= k) throw std::invalid_argument("softmax_cross_entropy: label out of range");
  // softmax probabilities are needed in backward; compute once and capture
  auto probs = std::make_shared<std::vector<T>>(logits->numel());
  T loss = 0;
  for (int r = 0; r < n; ++r) {
    const T* row = &logits->value[std::size_t(r) * k];
    T mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    T denom = 0;
    for (int j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
    T log_denom = std::log(denom);
    for (int j = 0; j < k; ++j)
      (*probs)[std::size_t(r) * k + j] = std::exp(row[j] - mx) / denom;
    loss += -(row[labels[r]] - mx - log_denom);
  }
  loss /= static_cast<T>(n);
  return make_node<T>(
      {1}, {loss}, {logits},
      [logits, labels, probs, n, k](const std::vector<T>& g, Backprop<T>& bp) {
        if (auto* gl = bp.grad_of(logits.get())) {
          T scale = g[0] / static_cast<T>(n);
          for (int r = 0; r < n; ++r)
            for (int j = 0; j < k; ++j) {
              T p = (*probs)[std::size_t(r) * k + j];
              (*gl)[std::size_t(r) * k + j] += scale * (p - (j == labels[r] ? T(1) : T(0)));
            }
        }
      });
}

}  // namespace mpa
