#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mpa/checkpoint.hpp"
#include "mpa/codec.hpp"
#include "mpa/losses.hpp"
#include "mpa/taskmodels.hpp"
#include "mpa/toydata.hpp"

// Two-stage optimization. Stage 1 trains encoder, hyperprior, the decoder
// main path and the discriminator jointly over the whole quality range, with
// the adversarial term enabled for the second half of the run. Stage 2
// starts from a stage-1 checkpoint and tunes exactly one task's decoder side
// paths and predictors, everything else frozen.

namespace mpa {

struct TrainConfig {
  int stage = 1;
  std::string task = "mse";   // stage 2 target path
  std::string model = "desk";
  long steps = 0;             // 0: 20000 for stage 1, 2000 for stage 2
  int batch = 4;
  int crop = 0;               // stage-1 training crop, 0: 32
  double lr = 1e-4;
  std::uint64_t seed = 1;
  std::string data;           // texture|grating|regions, 0: by stage/task
  std::string dataset;        // optional directory; replaces the generator
  int data_count = 256;
  int data_size = 0;          // generated image edge, 0: 64 / 32 by stage
  int holdout = 16;
  long eval_interval = 0;     // 0: steps/10
  std::string base_checkpoint;  // stage 2 input, required there
  std::string out_checkpoint;
  std::string task_model;     // stage 2 cls/seg; pretrained and saved when missing
  std::string metrics;        // csv output path
};

TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::string& path);
// Fills defaults and throws ConfigError on contradictions.
void validate_train_config(TrainConfig& cfg);

struct TrainMetricsRow {
  long step = 0;
  double bpp = 0, mse = 0, proxy_perc = 0, ratio_loss = 0, task_metric = 0;
};

std::string metrics_csv(const std::vector<TrainMetricsRow>& rows);

struct TrainResult {
  std::vector<TrainMetricsRow> rows;
  double trainable_fraction = 1.0;  // trainable share of decoder parameters
  std::string frozen_hash_before, frozen_hash_after;
};

// Dispatches on cfg.stage; writes checkpoint/metrics files when configured.
TrainResult run_training(const TrainConfig& cfg, std::ostream* log = nullptr);

inline ModelConfig model_config_from_name(const std::string& name) {
  if (name == "desk") return ModelConfig::desk();
  if (name == "tiny") return ModelConfig::tiny();
  throw ConfigError("unknown model preset: " + name);
}

// SHA-256 over the non-trainable parameters, the set stage 2 must not touch.
template <typename T>
std::string hash_frozen(const ParameterStore<T>& store) {
  Sha256 h;
  for (const auto& p : store.all()) {
    if (p.trainable) continue;
    h.update(p.name.data(), p.name.size());
    for (T v : p.tensor->value) {
      float f = float(v);
      h.update(&f, sizeof(f));
    }
  }
  return h.hex_digest();
}

namespace detail {

template <typename T>
TensorPtr<T> sample_leaf(const Image& img) {
  std::vector<T> v(img.rgb.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = T(img.rgb[i]);
  return make_leaf<T>({img.height, img.width, 3}, std::move(v));
}

template <typename T>
TensorPtr<T> crop_leaf(const Image& img, int y0, int x0, int size) {
  std::vector<T> v(std::size_t(size) * size * 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c)
        v[(std::size_t(y) * size + x) * 3 + c] = T(img.at(y0 + y, x0 + x, c));
  return make_leaf<T>({size, size, 3}, std::move(v));
}

template <typename T>
Image tensor_image(const TensorPtr<T>& t) {
  Image img = make_image(t->shape[1], t->shape[0]);
  for (std::size_t i = 0; i < img.rgb.size(); ++i)
    img.rgb[i] = std::clamp(float(t->value[i]), 0.0f, 1.0f);
  return img;
}

// Mean squared gap between hard-mask on-fractions and the budget.
inline double hard_ratio_gap(const std::vector<ImportanceMask>& masks, double rho) {
  if (masks.empty()) return 0.0;
  double acc = 0;
  for (const auto& m : masks) {
    double frac = double(m.popcount()) / double(std::size_t(m.h) * m.w);
    acc += (rho - frac) * (rho - frac);
  }
  return acc / double(masks.size());
}

// Generator draw for the training corpus and its held-out tail.
inline std::pair<std::vector<ToySample>, std::vector<ToySample>> split_train_data(
    const TrainConfig& cfg) {
  ToyKind kind = toy_kind_from_name(cfg.data);
  if (!cfg.dataset.empty()) {
    std::vector<ToySample> all = read_toy_dataset(cfg.dataset, kind);
    if (int(all.size()) < cfg.holdout + cfg.batch)
      throw ConfigError("dataset too small for the holdout split");
    std::vector<ToySample> hold(all.end() - cfg.holdout, all.end());
    all.resize(all.size() - std::size_t(cfg.holdout));
    return {std::move(all), std::move(hold)};
  }
  std::uint64_t dseed = mix64(cfg.seed ^ 0xda7a5eedull);
  std::vector<ToySample> train = make_toy_dataset(kind, dseed, cfg.data_count, cfg.data_size);
  std::vector<ToySample> hold;
  hold.reserve(std::size_t(cfg.holdout));
  for (int i = 0; i < cfg.holdout; ++i)
    hold.push_back(make_toy_sample(kind, dseed, cfg.data_count + i, cfg.data_size));
  return {std::move(train), std::move(hold)};
}

}  // namespace detail

template <typename T>
class Stage1Trainer {
 public:
  explicit Stage1Trainer(const TrainConfig& cfg)
      : cfg_(cfg),
        mc_(model_config_from_name(cfg.model)),
        rng_(mix64(cfg.seed ^ 0x57a9e101ull)),
        model_(mc_, store_, {Task::mse, Task::cls, Task::seg}, mix64(cfg.seed ^ 0x10de1ull)) {
    Rng drng(mix64(cfg_.seed ^ 0xd15cull));
    disc_.emplace(disc_store_, mc_.channels[3], drng);
    disc_store_.set_all_trainable(false);  // woken only inside discriminator_step
    auto [train, hold] = detail::split_train_data(cfg_);
    data_ = std::move(train);
    holdout_ = std::move(hold);
    for (const auto& s : data_)
      if (s.image.width < cfg_.crop || s.image.height < cfg_.crop)
        throw ConfigError("training image smaller than the crop size");
  }

  CodecModel<T>& model() { return model_; }
  ParameterStore<T>& params() { return store_; }
  ParameterStore<T>& disc_params() { return disc_store_; }
  const std::vector<TrainMetricsRow>& rows() const { return rows_; }

  // One rate-distortion-perception update of the codec. The discriminator is
  // frozen here; its parameters see no gradient buffers at all.
  void generator_step(long step, bool use_gan) {
    int q = 1 + int(rng_.below(std::uint64_t(mc_.quality_levels)));
    captures_.clear();
    TensorPtr<T> loss;
    for (int b = 0; b < cfg_.batch; ++b) {
      TensorPtr<T> x = sample_crop();
      auto enc = model_.encode_train(x, q, rng_);
      auto hy = model_.hyper(enc.y, QuantMode::noise, &rng_);
      TensorPtr<T> yq = round_ste(enc.y);
      auto dec = model_.decode_train_main(yq, double(q));
      Stage1Parts<T> parts;
      parts.bpp = mul_scalar(hy.bits, T(1.0 / double(x->shape[0] * x->shape[1])));
      parts.distortion = pixel_distortion(x, dec.image);
      parts.perceptual = proxy_.distance(x, dec.image);
      parts.ratio = ratio_loss(enc.mask_means, model_.schedule().ratio_encoder(q));
      if (use_gan) {
        parts.gan = generator_gan_loss(disc_->probability(yq, dec.image));
        captures_.push_back(
            Capture{x->shape, enc.y->shape, x->value, yq->value, dec.image->shape,
                    dec.image->value});
      }
      TensorPtr<T> total = stage1_total(parts, q);
      loss = loss ? add(loss, total) : total;
    }
    loss = mul_scalar(loss, T(1.0 / double(cfg_.batch)));
    last_loss_ = double(loss->value[0]);
    Backprop<T> bp(loss);
    grads_.add(store_, bp);
    adam_step(store_, grads_, lr_at(step), step);
    grads_.clear();
  }

  // One discriminator update on the batch captured by the last generator
  // step. Codec outputs enter as value-only leaves, so the two updates touch
  // disjoint parameter sets by construction.
  void discriminator_step(long step) {
    if (captures_.empty()) throw ConfigError("discriminator step without a captured batch");
    disc_store_.set_all_trainable(true);
    TensorPtr<T> loss;
    for (const auto& c : captures_) {
      // Real and fake share the same quantized-latent condition, so the
      // critic can only separate them by looking at the images.
      TensorPtr<T> p_fake = disc_->probability(make_leaf<T>(c.y_shape, c.y_quant),
                                               make_leaf<T>(c.xhat_shape, c.xhat));
      TensorPtr<T> p_real =
          disc_->probability(make_leaf<T>(c.y_shape, c.y_quant), make_leaf<T>(c.x_shape, c.x));
      TensorPtr<T> l = discriminator_gan_loss(p_fake, p_real);
      loss = loss ? add(loss, l) : l;
    }
    loss = mul_scalar(loss, T(1.0 / double(captures_.size())));
    last_disc_loss_ = double(loss->value[0]);
    Backprop<T> bp(loss);
    disc_grads_.add(disc_store_, bp);
    adam_step(disc_store_, disc_grads_, lr_at(step), ++disc_steps_);
    disc_grads_.clear();
    disc_store_.set_all_trainable(false);
  }

  // Held-out metrics at mid quality, inference path.
  TrainMetricsRow evaluate_row(long step) {
    const double q = 4.0;
    TrainMetricsRow row;
    row.step = step;
    for (const auto& s : holdout_) {
      TensorPtr<T> x = detail::sample_leaf<T>(s.image);
      auto enc = model_.encode(x, q);
      auto hy = model_.hyper(enc.y, QuantMode::round);
      auto dec = model_.decode(hy.y_q, q, 0.0, Task::mse);
      Image out = detail::tensor_image(dec.image);
      TensorPtr<T> xhat = detail::sample_leaf<T>(out);
      double px = double(x->shape[0] * x->shape[1]);
      row.bpp += double(hy.bits->value[0]) / px;
      double m = 0;
      for (std::size_t i = 0; i < x->value.size(); ++i) {
        double d = double(xhat->value[i]) - double(x->value[i]);
        m += d * d;
      }
      row.mse += m / double(x->value.size());
      row.proxy_perc += double(proxy_.distance(x, xhat)->value[0]);
      row.ratio_loss += detail::hard_ratio_gap(enc.masks, model_.schedule().ratio_encoder(q));
      row.task_metric += psnr(s.image, out);
    }
    double n = double(holdout_.size());
    row.bpp /= n;
    row.mse /= n;
    row.proxy_perc /= n;
    row.ratio_loss /= n;
    row.task_metric /= n;
    return row;
  }

  TrainResult run(std::ostream* log) {
    long n = cfg_.steps;
    for (long step = 1; step <= n; ++step) {
      bool use_gan = step > n / 2;
      generator_step(step, use_gan);
      if (use_gan) discriminator_step(step);
      if (step % cfg_.eval_interval == 0 || step == n) {
        rows_.push_back(evaluate_row(step));
        if (log) {
          const auto& r = rows_.back();
          *log << "stage1 step " << step << " loss " << last_loss_ << " bpp " << r.bpp
               << " mse " << r.mse << " psnr " << r.task_metric << "\n";
        }
      }
    }
    if (!cfg_.out_checkpoint.empty()) save_checkpoint(store_, cfg_.out_checkpoint);
    TrainResult res;
    res.rows = rows_;
    res.trainable_fraction =
        double(store_.trainable_size()) / double(store_.total_size(""));
    return res;
  }

 private:
  struct Capture {
    Shape x_shape, y_shape;
    std::vector<T> x, y_quant;
    Shape xhat_shape;
    std::vector<T> xhat;
  };

  double lr_at(long step) const {
    return step > cfg_.steps * 3 / 4 ? cfg_.lr * 0.1 : cfg_.lr;
  }

  TensorPtr<T> sample_crop() {
    const ToySample& s = data_[rng_.below(data_.size())];
    int maxy = s.image.height - cfg_.crop, maxx = s.image.width - cfg_.crop;
    int y0 = maxy > 0 ? int(rng_.below(std::uint64_t(maxy) + 1)) : 0;
    int x0 = maxx > 0 ? int(rng_.below(std::uint64_t(maxx) + 1)) : 0;
    return detail::crop_leaf<T>(s.image, y0, x0, cfg_.crop);
  }

  TrainConfig cfg_;
  ModelConfig mc_;
  ParameterStore<T> store_, disc_store_;
  Rng rng_;
  CodecModel<T> model_;
  std::optional<Discriminator<T>> disc_;
  PerceptualProxy<T> proxy_;
  GradAccumulator<T> grads_, disc_grads_;
  std::vector<ToySample> data_, holdout_;
  std::vector<Capture> captures_;
  std::vector<TrainMetricsRow> rows_;
  long disc_steps_ = 0;
  double last_loss_ = 0, last_disc_loss_ = 0;
};

template <typename T>
class Stage2Trainer {
 public:
  explicit Stage2Trainer(const TrainConfig& cfg)
      : cfg_(cfg),
        mc_(model_config_from_name(cfg.model)),
        rng_(mix64(cfg.seed ^ 0x57a9e202ull)),
        task_(task_from_name(cfg.task)),
        model_(mc_, store_, {Task::mse, Task::cls, Task::seg}, mix64(cfg.seed ^ 0x10de1ull)) {
    if (cfg_.base_checkpoint.empty())
      throw ConfigError("stage 2 requires base_checkpoint from a stage 1 run");
    if (!std::filesystem::exists(cfg_.base_checkpoint))
      throw ConfigError("stage 2 base checkpoint not found: " + cfg_.base_checkpoint);
    load_checkpoint(store_, cfg_.base_checkpoint);

    store_.set_all_trainable(false);
    for (const auto& name : model_.task_parameter_names(task_))
      store_.set_trainable(name, true);
    frozen_before_ = hash_frozen(store_);

    auto [train, hold] = detail::split_train_data(cfg_);
    data_ = std::move(train);
    holdout_ = std::move(hold);
    setup_task_net();
  }

  CodecModel<T>& model() { return model_; }
  ParameterStore<T>& params() { return store_; }
  const std::string& frozen_hash_before() const { return frozen_before_; }
  TaskNet<T>* task_net() { return net_ ? &*net_ : nullptr; }

  // One side-path update: frozen encoder at inference masks, trainable task
  // routing in the decoder at a sampled orientation level.
  void step(long step) {
    int q = 1 + int(rng_.below(std::uint64_t(mc_.quality_levels)));
    int a = int(rng_.below(std::uint64_t(mc_.alpha_levels)));
    TensorPtr<T> loss;
    for (int b = 0; b < cfg_.batch; ++b) {
      const ToySample& s = data_[rng_.below(data_.size())];
      TensorPtr<T> x = detail::sample_leaf<T>(s.image);
      auto enc = model_.encode(x, double(q));
      auto hy = model_.hyper(enc.y, QuantMode::round);
      auto dec = model_.decode_train_task(hy.y_q, double(q), task_, a, rng_);
      Stage2Parts<T> parts;
      parts.bpp = mul_scalar(hy.bits, T(1.0 / double(x->shape[0] * x->shape[1])));
      if (task_ == Task::mse) {
        parts.task = pixel_distortion(x, dec.image);
      } else {
        TensorPtr<T> shown = clamp(dec.image, T(0), T(1));
        TensorPtr<T> ce = softmax_cross_entropy(net_->logits(shown), net_->labels_of(s));
        parts.task = analysis_task_term(ce, pixel_distortion(x, dec.image),
                                        proxy_.distance(x, dec.image));
      }
      parts.ratio = ratio_loss(dec.mask_means, ratio_decoder(model_.alpha_of_level(a)));
      TensorPtr<T> total = stage2_total(parts, q);
      loss = loss ? add(loss, total) : total;
    }
    loss = mul_scalar(loss, T(1.0 / double(cfg_.batch)));
    last_loss_ = double(loss->value[0]);
    Backprop<T> bp(loss);
    grads_.add(store_, bp);
    double lr = step > cfg_.steps * 3 / 4 ? cfg_.lr * 0.1 : cfg_.lr;
    adam_step(store_, grads_, lr, step);
    grads_.clear();
  }

  // Held-out metrics with the side path fully engaged (alpha = 1).
  TrainMetricsRow evaluate_row(long step) {
    const double q = 4.0;
    TrainMetricsRow row;
    row.step = step;
    std::vector<Image> outs;
    outs.reserve(holdout_.size());
    for (const auto& s : holdout_) {
      TensorPtr<T> x = detail::sample_leaf<T>(s.image);
      auto enc = model_.encode(x, q);
      auto hy = model_.hyper(enc.y, QuantMode::round);
      auto dec = model_.decode(hy.y_q, q, 1.0, task_);
      Image out = detail::tensor_image(dec.image);
      TensorPtr<T> xhat = detail::sample_leaf<T>(out);
      double px = double(x->shape[0] * x->shape[1]);
      row.bpp += double(hy.bits->value[0]) / px;
      double m = 0;
      for (std::size_t i = 0; i < x->value.size(); ++i) {
        double d = double(xhat->value[i]) - double(x->value[i]);
        m += d * d;
      }
      row.mse += m / double(x->value.size());
      row.proxy_perc += double(proxy_.distance(x, xhat)->value[0]);
      row.ratio_loss += detail::hard_ratio_gap(dec.masks, ratio_decoder(1.0));
      if (task_ == Task::mse) row.task_metric += psnr(s.image, out);
      outs.push_back(std::move(out));
    }
    double n = double(holdout_.size());
    row.bpp /= n;
    row.mse /= n;
    row.proxy_perc /= n;
    row.ratio_loss /= n;
    if (task_ == Task::mse) {
      row.task_metric /= n;
    } else if (task_ == Task::cls) {
      std::vector<int> labels;
      for (const auto& s : holdout_) labels.push_back(s.label);
      row.task_metric = top1_accuracy(*net_, outs, labels);
    } else {
      std::vector<std::vector<int>> labels;
      for (const auto& s : holdout_) labels.push_back(s.seg);
      row.task_metric = segmentation_miou(*net_, outs, labels);
    }
    return row;
  }

  TrainResult run(std::ostream* log) {
    for (long step = 1; step <= cfg_.steps; ++step) {
      this->step(step);
      if (step % cfg_.eval_interval == 0 || step == cfg_.steps) {
        rows_.push_back(evaluate_row(step));
        if (log) {
          const auto& r = rows_.back();
          *log << "stage2 step " << step << " loss " << last_loss_ << " bpp " << r.bpp
               << " task_metric " << r.task_metric << "\n";
        }
      }
    }
    TrainResult res;
    res.rows = rows_;
    res.frozen_hash_before = frozen_before_;
    res.frozen_hash_after = hash_frozen(store_);
    if (res.frozen_hash_after != res.frozen_hash_before)
      throw NumericError("frozen parameters changed during stage 2");
    res.trainable_fraction =
        double(store_.trainable_size()) / double(store_.total_size("dec."));
    if (log)
      *log << "stage2 trainable decoder fraction " << res.trainable_fraction << "\n";
    if (!cfg_.out_checkpoint.empty()) save_checkpoint(store_, cfg_.out_checkpoint);
    return res;
  }

 private:
  void setup_task_net() {
    if (task_ == Task::mse) return;
    TaskModelKind kind =
        task_ == Task::cls ? TaskModelKind::classifier : TaskModelKind::segmenter;
    int classes = task_ == Task::cls ? 2 : 3;
    net_.emplace(kind, classes, mix64(cfg_.seed ^ 0x7a5cull));
    if (!cfg_.task_model.empty() && std::filesystem::exists(cfg_.task_model)) {
      load_checkpoint(net_->params(), cfg_.task_model);
    } else {
      pretrain_task_model(*net_, data_, 300, 3e-3, mix64(cfg_.seed ^ 0x7a5c2ull));
      if (!cfg_.task_model.empty()) save_checkpoint(net_->params(), cfg_.task_model);
    }
    net_->freeze();
  }

  TrainConfig cfg_;
  ModelConfig mc_;
  ParameterStore<T> store_;
  Rng rng_;
  Task task_;
  CodecModel<T> model_;
  PerceptualProxy<T> proxy_;
  std::optional<TaskNet<T>> net_;
  GradAccumulator<T> grads_;
  std::vector<ToySample> data_, holdout_;
  std::vector<TrainMetricsRow> rows_;
  std::string frozen_before_;
  double last_loss_ = 0;
};

}  // namespace mpa
