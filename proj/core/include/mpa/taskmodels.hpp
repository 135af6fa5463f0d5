#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mpa/error.hpp"
#include "mpa/image.hpp"
#include "mpa/nn.hpp"
#include "mpa/ops.hpp"
#include "mpa/param_store.hpp"
#include "mpa/rng.hpp"
#include "mpa/toydata.hpp"

// Small task networks consuming reconstructions: a grating-orientation
// classifier and a band segmenter. They are pretrained on clean toy images,
// then frozen; the codec's task side paths train against their logits.

namespace mpa {

enum class TaskModelKind { classifier, segmenter };

inline TaskModelKind task_model_kind_from_name(const std::string& name) {
  if (name == "classifier" || name == "cls") return TaskModelKind::classifier;
  if (name == "segmenter" || name == "seg") return TaskModelKind::segmenter;
  throw ConfigError("unknown task model kind: " + name);
}

namespace detail {

template <typename T>
TensorPtr<T> task_input(const Image& img) {
  std::vector<T> v(img.rgb.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = T(img.rgb[i]);
  return make_leaf<T>({img.height, img.width, 3}, std::move(v));
}

}  // namespace detail

template <typename T>
class TaskNet {
 public:
  TaskNet(TaskModelKind kind, int classes, std::uint64_t seed) : kind_(kind), classes_(classes) {
    if (classes < 2) throw ConfigError("task model needs at least 2 classes");
    Rng rng(seed);
    store_.create("task.norm.mean", {3}, std::vector<T>(3, T(0.5)), /*trainable=*/false);
    store_.create("task.norm.std", {3}, std::vector<T>(3, T(0.25)), /*trainable=*/false);
    auto conv = [&](const std::string& n, int cin, int cout) {
      double std = 1.0 / std::sqrt(9.0 * cin);
      store_.create(n + ".w", {3, 3, cin, cout},
                    normal_init<T>(rng, std::size_t(9) * cin * cout, std));
      store_.create(n + ".b", {cout}, std::vector<T>(cout, T(0)));
    };
    if (kind == TaskModelKind::classifier) {
      conv("task.c1", 3, 8);
      conv("task.c2", 8, 16);
      store_.create("task.fc.w", {16, classes},
                    normal_init<T>(rng, std::size_t(16) * classes, 0.25));
      store_.create("task.fc.b", {classes}, std::vector<T>(classes, T(0)));
    } else {
      conv("task.c1", 3, 8);
      conv("task.c2", 8, 8);
      conv("task.c3", 8, classes);
    }
  }

  TaskModelKind kind() const { return kind_; }
  int classes() const { return classes_; }
  ParameterStore<T>& params() { return store_; }
  const ParameterStore<T>& params() const { return store_; }
  void freeze() { store_.set_all_trainable(false); }

  // Classifier: [1,K] from pooled features. Segmenter: [H*W,K] per pixel.
  TensorPtr<T> logits(const TensorPtr<T>& image) const {
    if (image->shape.size() != 3 || image->shape[2] != 3)
      throw ConfigError("task model expects an [H,W,3] tensor");
    TensorPtr<T> x = normalize(image);
    if (kind_ == TaskModelKind::classifier) {
      x = gelu(conv2d(x, store_.get("task.c1.w"), store_.get("task.c1.b"), 2, 1));
      x = gelu(conv2d(x, store_.get("task.c2.w"), store_.get("task.c2.b"), 2, 1));
      TensorPtr<T> pooled = reshape(mean_spatial(x), {1, 16});
      return linear(pooled, store_.get("task.fc.w"), store_.get("task.fc.b"));
    }
    x = gelu(conv2d(x, store_.get("task.c1.w"), store_.get("task.c1.b"), 1, 1));
    x = gelu(conv2d(x, store_.get("task.c2.w"), store_.get("task.c2.b"), 1, 1));
    x = conv2d(x, store_.get("task.c3.w"), store_.get("task.c3.b"), 1, 1);
    return reshape(x, {x->shape[0] * x->shape[1], classes_});
  }

  // Mean cross entropy against the sample's labels.
  TensorPtr<T> loss(const TensorPtr<T>& image, const ToySample& s) const {
    return softmax_cross_entropy(logits(image), labels_of(s));
  }

  std::vector<int> labels_of(const ToySample& s) const {
    if (kind_ == TaskModelKind::classifier) {
      if (s.label < 0) throw ConfigError("sample has no class label");
      return {s.label};
    }
    if (s.seg.empty()) throw ConfigError("sample has no segmentation labels");
    return s.seg;
  }

 private:
  TensorPtr<T> normalize(const TensorPtr<T>& x) const {
    TensorPtr<T> xs = div_channels(x, store_.get("task.norm.std"));
    const auto& m = store_.get("task.norm.mean")->value;
    const auto& sd = store_.get("task.norm.std")->value;
    std::vector<T> off(x->numel());
    for (std::size_t i = 0; i < off.size(); ++i) off[i] = m[i % 3] / sd[i % 3];
    return sub(xs, make_leaf<T>(x->shape, std::move(off)));
  }

  TaskModelKind kind_;
  int classes_;
  ParameterStore<T> store_;
};

template <typename T>
int predict_class(const TaskNet<T>& net, const Image& img) {
  TensorPtr<T> l = net.logits(detail::task_input<T>(img));
  int best = 0;
  for (int j = 1; j < net.classes(); ++j)
    if (l->value[j] > l->value[best]) best = j;
  return best;
}

template <typename T>
std::vector<int> predict_segmentation(const TaskNet<T>& net, const Image& img) {
  TensorPtr<T> l = net.logits(detail::task_input<T>(img));
  int k = net.classes();
  std::vector<int> out(std::size_t(l->shape[0]));
  for (int p = 0; p < l->shape[0]; ++p) {
    int best = 0;
    for (int j = 1; j < k; ++j)
      if (l->value[std::size_t(p) * k + j] > l->value[std::size_t(p) * k + best]) best = j;
    out[std::size_t(p)] = best;
  }
  return out;
}

template <typename T>
double top1_accuracy(const TaskNet<T>& net, const std::vector<Image>& images,
                     const std::vector<int>& labels) {
  if (images.size() != labels.size() || images.empty())
    throw ConfigError("accuracy: need equal nonzero image/label counts");
  int hit = 0;
  for (std::size_t i = 0; i < images.size(); ++i)
    hit += predict_class(net, images[i]) == labels[i] ? 1 : 0;
  return double(hit) / double(images.size());
}

// Intersection-over-union averaged over classes present in truth or
// prediction; `classes` caps the class ids considered.
inline double mean_iou(const std::vector<int>& pred, const std::vector<int>& truth, int classes) {
  if (pred.size() != truth.size() || pred.empty())
    throw ConfigError("mean_iou: need equal nonzero label counts");
  std::vector<long> inter(std::size_t(classes), 0), uni(std::size_t(classes), 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    int p = pred[i], t = truth[i];
    if (t < 0 || t >= classes) throw ConfigError("mean_iou: truth label out of range");
    if (p == t) {
      ++inter[std::size_t(t)];
      ++uni[std::size_t(t)];
    } else {
      if (p >= 0 && p < classes) ++uni[std::size_t(p)];
      ++uni[std::size_t(t)];
    }
  }
  double acc = 0;
  int seen = 0;
  for (int c = 0; c < classes; ++c) {
    if (uni[std::size_t(c)] == 0) continue;
    acc += double(inter[std::size_t(c)]) / double(uni[std::size_t(c)]);
    ++seen;
  }
  return seen ? acc / seen : 0.0;
}

template <typename T>
double segmentation_miou(const TaskNet<T>& net, const std::vector<Image>& images,
                         const std::vector<std::vector<int>>& labels) {
  if (images.size() != labels.size() || images.empty())
    throw ConfigError("miou: need equal nonzero image/label counts");
  double acc = 0;
  for (std::size_t i = 0; i < images.size(); ++i)
    acc += mean_iou(predict_segmentation(net, images[i]), labels[i], net.classes());
  return acc / double(images.size());
}

// Adam on clean samples; callers freeze() afterwards. Returns the final
// held-in batch loss for logging.
template <typename T>
double pretrain_task_model(TaskNet<T>& net, const std::vector<ToySample>& data, int steps,
                           double lr, std::uint64_t seed) {
  if (data.empty()) throw ConfigError("pretrain: empty dataset");
  Rng rng(seed);
  GradAccumulator<T> grads;
  double last = 0;
  const int batch = 8;
  for (int step = 1; step <= steps; ++step) {
    TensorPtr<T> total;
    for (int b = 0; b < batch; ++b) {
      const ToySample& s = data[rng.below(data.size())];
      TensorPtr<T> l = net.loss(detail::task_input<T>(s.image), s);
      total = total ? add(total, l) : l;
    }
    total = mul_scalar(total, T(1.0 / batch));
    Backprop<T> bp(total);
    grads.add(net.params(), bp);
    adam_step(net.params(), grads, lr, step);
    grads.clear();
    last = double(total->value[0]);
  }
  return last;
}

}  // namespace mpa
