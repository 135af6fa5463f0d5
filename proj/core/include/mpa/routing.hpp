#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "mpa/nn.hpp"
#include "mpa/ops.hpp"
#include "mpa/param_store.hpp"
#include "mpa/rng.hpp"
#include "mpa/schedule.hpp"

// Importance-driven routing: a per-stage predictor scores every spatial
// position, a binary mask splits positions between the stage's main path and
// one task-specific side path, and the two outputs are merged back in place.

namespace mpa {

// Channels past the first half are replaced by their global spatial mean,
// the first half passes through untouched. Input [H,W,C'].
template <typename T>
TensorPtr<T> partial_average(const TensorPtr<T>& x) {
  if (x->shape.size() != 3) throw std::invalid_argument("partial_average expects [H,W,C]");
  int hw = x->shape[0] * x->shape[1], c = x->shape[2];
  int keep = c / 2;  // 1-based channels > C'/2 are averaged
  std::vector<T> out(x->numel());
  std::vector<T> means(c - keep, T(0));
  for (int p = 0; p < hw; ++p)
    for (int j = keep; j < c; ++j) means[j - keep] += x->value[std::size_t(p) * c + j];
  T inv = T(1) / static_cast<T>(hw);
  for (auto& m : means) m *= inv;
  for (int p = 0; p < hw; ++p)
    for (int j = 0; j < c; ++j)
      out[std::size_t(p) * c + j] =
          j < keep ? x->value[std::size_t(p) * c + j] : means[j - keep];
  return make_node<T>(x->shape, std::move(out), {x},
                      [x, hw, c, keep, inv](const std::vector<T>& g, Backprop<T>& bp) {
                        auto* gx = bp.grad_of(x.get());
                        if (!gx) return;
                        std::vector<T> gsum(c - keep, T(0));
                        for (int p = 0; p < hw; ++p)
                          for (int j = keep; j < c; ++j)
                            gsum[j - keep] += g[std::size_t(p) * c + j];
                        for (int p = 0; p < hw; ++p)
                          for (int j = 0; j < c; ++j)
                            (*gx)[std::size_t(p) * c + j] +=
                                j < keep ? g[std::size_t(p) * c + j]
                                         : gsum[j - keep] * inv;
                      });
}

// Binary routing grid; 1 keeps a position on the main path.
struct ImportanceMask {
  int h = 0, w = 0;
  std::vector<std::uint8_t> on;

  std::size_t popcount() const {
    std::size_t n = 0;
    for (auto v : on) n += v;
    return n;
  }
  std::vector<int> indices(bool value) const {
    std::vector<int> out;
    for (int i = 0; i < int(on.size()); ++i)
      if (bool(on[i]) == value) out.push_back(i);
    return out;
  }
};

// Keeps the k = round(rho*H*W) highest-scoring positions; equal scores are
// won by the lower raster index, so masks for growing rho nest.
template <typename T>
ImportanceMask top_k_mask(const std::vector<T>& scores, int h, int w, double rho) {
  if (int(scores.size()) != h * w)
    throw std::invalid_argument("top_k_mask: score count mismatch");
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::domain_error("top_k_mask: rho outside [0,1]");
  long k = std::lround(rho * double(h) * double(w));
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  ImportanceMask m;
  m.h = h;
  m.w = w;
  m.on.assign(scores.size(), 0);
  for (long i = 0; i < k; ++i) m.on[order[i]] = 1;
  return m;
}

// Importance score predictor: three linear layers around one non-parametric
// partial-average, plus a per-level bias table used only when sampling
// training masks.
template <typename T>
struct Predictor {
  int channels = 0;
  TensorPtr<T> w1, b1, w2, b2, w3, b3;
  TensorPtr<T> level_bias;  // [levels]

  static Predictor create(ParameterStore<T>& store, const std::string& prefix, int c,
                          int levels, Rng& rng) {
    if (c < 2 || c % 2 != 0)
      throw ConfigError("predictor channels must be even, got " + std::to_string(c));
    int hidden = c / 2;
    Predictor p;
    p.channels = c;
    p.w1 = store.create(prefix + ".w1", {c, hidden},
                        normal_init<T>(rng, std::size_t(c) * hidden, 1.0 / std::sqrt(c)));
    p.b1 = store.create(prefix + ".b1", {hidden}, std::vector<T>(hidden, T(0)));
    p.w2 = store.create(prefix + ".w2", {hidden, hidden},
                        normal_init<T>(rng, std::size_t(hidden) * hidden,
                                       1.0 / std::sqrt(hidden)));
    p.b2 = store.create(prefix + ".b2", {hidden}, std::vector<T>(hidden, T(0)));
    p.w3 = store.create(prefix + ".w3", {hidden, 1},
                        normal_init<T>(rng, hidden, 1.0 / std::sqrt(hidden)));
    p.b3 = store.create(prefix + ".b3", {1}, {T(0)});
    p.level_bias = store.create(prefix + ".level_bias", {levels},
                                std::vector<T>(levels, T(0)));
    return p;
  }

  // Raw importance scores u' of shape [H,W,1].
  TensorPtr<T> scores(const TensorPtr<T>& x) const {
    auto h = linear(x, w1, b1);
    h = partial_average(h);
    h = gelu(linear(h, w2, b2));
    return linear(h, w3, b3);
  }
};

// Training-time stochastic mask: logistic noise on the biased scores, hard
// threshold forward, sigmoid gradient backward. P(on) = sigmoid(u' + bias).
template <typename T>
TensorPtr<T> sample_train_mask(const Predictor<T>& pred, const TensorPtr<T>& scores,
                               int level, Rng& rng) {
  if (level < 0 || level >= pred.level_bias->shape[0])
    throw std::domain_error("sample_train_mask: level out of range");
  std::vector<T> noise(scores->numel());
  for (auto& v : noise) v = T(rng.logistic());
  auto logits = add_broadcast_scalar(scores, pick(pred.level_bias, level));
  auto soft = sigmoid(add(logits, make_leaf<T>(scores->shape, std::move(noise))));
  return hard_threshold_ste(soft, T(0.5));
}

enum class PathKind { inverted, bottleneck };

// Two-layer MLP applied per position. The main path widens to 2C, side
// paths narrow to C/2.
template <typename T>
struct PathSpec {
  PathKind kind{};
  int channels = 0;
  TensorPtr<T> w1, b1, w2, b2;

  static int hidden_width(PathKind kind, int c) {
    if (kind == PathKind::bottleneck && c % 2 != 0)
      throw ConfigError("bottleneck path needs even channels");
    return kind == PathKind::inverted ? 2 * c : c / 2;
  }

  static std::size_t expected_parameter_count(PathKind kind, int c) {
    std::size_t h = std::size_t(hidden_width(kind, c));
    return std::size_t(c) * h + h + h * std::size_t(c) + std::size_t(c);
  }

  // zero_out starts the output layer at zero so a freshly added path is a
  // no-op inside its residual block until it has been trained.
  static PathSpec create(ParameterStore<T>& store, const std::string& prefix,
                         PathKind kind, int c, Rng& rng, bool zero_out = false) {
    int hidden = hidden_width(kind, c);
    PathSpec p;
    p.kind = kind;
    p.channels = c;
    p.w1 = store.create(prefix + ".w1", {c, hidden},
                        normal_init<T>(rng, std::size_t(c) * hidden, 1.0 / std::sqrt(c)));
    p.b1 = store.create(prefix + ".b1", {hidden}, std::vector<T>(hidden, T(0)));
    p.w2 = store.create(prefix + ".w2", {hidden, c},
                        zero_out ? std::vector<T>(std::size_t(hidden) * c, T(0))
                                 : normal_init<T>(rng, std::size_t(hidden) * c,
                                                  1.0 / std::sqrt(hidden)));
    p.b2 = store.create(prefix + ".b2", {c}, std::vector<T>(c, T(0)));
    return p;
  }

  TensorPtr<T> apply(const TensorPtr<T>& u) const {
    return linear(gelu(linear(u, w1, b1)), w2, b2);
  }

  std::size_t parameter_count() const {
    return w1->numel() + b1->numel() + w2->numel() + b2->numel();
  }
};

struct PathCounters {
  std::atomic<std::uint64_t> main_positions{0};
  std::atomic<std::uint64_t> side_positions{0};
};

// Dense two-path blend for training: mask weights both full-path outputs.
// With a binary mask this matches the split evaluation exactly.
template <typename T>
TensorPtr<T> mpa_apply_dense(const TensorPtr<T>& u, const TensorPtr<T>& mask,
                             const PathSpec<T>& main_path, const PathSpec<T>& side_path) {
  auto inv = add_scalar(mul_scalar(mask, T(-1)), T(1));
  return add(mul_mask(main_path.apply(u), mask), mul_mask(side_path.apply(u), inv));
}

// Split evaluation for inference: each path only sees its own positions.
template <typename T>
TensorPtr<T> mpa_apply(const TensorPtr<T>& u, const ImportanceMask& mask,
                       const PathSpec<T>& main_path, const PathSpec<T>& side_path,
                       PathCounters* counters = nullptr) {
  if (u->shape.size() != 3 || u->shape[0] != mask.h || u->shape[1] != mask.w)
    throw std::invalid_argument("mpa_apply: mask does not match feature grid");
  auto main_idx = mask.indices(true);
  auto side_idx = mask.indices(false);
  if (counters) {
    counters->main_positions.fetch_add(main_idx.size(), std::memory_order_relaxed);
    counters->side_positions.fetch_add(side_idx.size(), std::memory_order_relaxed);
  }
  if (side_idx.empty()) return main_path.apply(u);
  if (main_idx.empty()) return side_path.apply(u);
  auto main_out = main_path.apply(select_positions(u, main_idx));
  auto side_out = side_path.apply(select_positions(u, side_idx));
  return merge_positions(mask.h, mask.w, main_idx, main_out, side_idx, side_out);
}

// Mean squared deviation of per-stage mask means from the target keep ratio.
template <typename T>
TensorPtr<T> ratio_loss(const std::vector<TensorPtr<T>>& mask_means, double rho) {
  if (mask_means.empty()) throw std::invalid_argument("ratio_loss: no stages");
  TensorPtr<T> acc;
  for (const auto& m : mask_means) {
    auto d = add_scalar(m, T(-rho));
    auto sq = mul(d, d);
    acc = acc ? add(acc, sq) : sq;
  }
  return mul_scalar(acc, T(1) / static_cast<T>(mask_means.size()));
}

}  // namespace mpa
