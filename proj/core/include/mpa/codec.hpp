#pragma once

// Variable-rate image codec with routed transform blocks.
//
// Encoder: four stages of [stride-2 conv -> residual blocks], 16x total
// downsampling. The decoder mirrors it with transposed convs. Every block is
//   x -> channel gains (quality) -> LN -> depthwise 3x3 -> +res
//     -> LN -> per-position MLP -> +res
// where the MLP is routed per position between a wide main path and a narrow
// side path on the three spatially largest stages of each half; the deepest
// stage runs the main path everywhere. Encoder gains multiply, decoder gains
// divide. A mean-scale gaussian hyperprior models the latent for both rate
// estimation and actual coding.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "mpa/error.hpp"
#include "mpa/nn.hpp"
#include "mpa/ops.hpp"
#include "mpa/param_store.hpp"
#include "mpa/rng.hpp"
#include "mpa/routing.hpp"
#include "mpa/scaling.hpp"
#include "mpa/schedule.hpp"
#include "mpa/tensor.hpp"

namespace mpa {

enum class Task { mse, cls, seg };

inline const char* task_name(Task t) {
  switch (t) {
    case Task::mse: return "mse";
    case Task::cls: return "cls";
    case Task::seg: return "seg";
  }
  throw ConfigError("unknown task id");
}

inline Task task_from_name(const std::string& s) {
  if (s == "mse") return Task::mse;
  if (s == "cls") return Task::cls;
  if (s == "seg") return Task::seg;
  throw ConfigError("unknown task '" + s + "' (expected mse, cls or seg)");
}

struct ModelConfig {
  std::array<int, 4> channels{32, 48, 64, 96};
  std::array<int, 4> depths{1, 1, 2, 2};
  int hyper_channels = 48;
  int quality_levels = 8;   // q runs over [1, quality_levels]
  int alpha_levels = 8;     // training grid for the decoder trade-off knob
  double beta = 5.0;        // curvature of the encoder keep-ratio schedule

  void validate() const {
    for (int c : channels)
      if (c <= 0 || c % 4 != 0)
        throw ConfigError("stage channels must be positive multiples of 4");
    for (int d : depths)
      if (d < 1) throw ConfigError("stage depth must be >= 1");
    if (hyper_channels < 1) throw ConfigError("hyper_channels must be >= 1");
    if (quality_levels < 2) throw ConfigError("quality_levels must be >= 2");
    if (alpha_levels < 2) throw ConfigError("alpha_levels must be >= 2");
    if (!(beta > 1.0)) throw ConfigError("beta must be > 1");
  }

  RatioSchedule schedule() const { return RatioSchedule(beta, double(quality_levels)); }

  // Full-size model.
  static ModelConfig desk() { return ModelConfig{}; }

  // Small model for gradient checks and fast tests.
  static ModelConfig tiny() {
    ModelConfig c;
    c.channels = {4, 4, 4, 4};
    c.depths = {1, 1, 1, 1};
    c.hyper_channels = 4;
    return c;
  }
};

enum class QuantMode { noise, round_ste, round };

template <typename T>
struct EncodeResult {
  TensorPtr<T> y;                        // latent after channel gains, pre-quantization
  std::vector<TensorPtr<T>> mask_means;  // per routed stage, training mode
  std::vector<ImportanceMask> masks;     // per routed stage, inference mode
};

template <typename T>
struct DecodeResult {
  TensorPtr<T> image;                    // [H,W,3], unclamped
  std::vector<TensorPtr<T>> mask_means;
  std::vector<ImportanceMask> masks;
};

template <typename T>
struct HyperResult {
  TensorPtr<T> y_q;    // latent quantized per the requested mode
  TensorPtr<T> z_q;    // hyper latent quantized the same way
  TensorPtr<T> mu;     // predicted means for y
  TensorPtr<T> sigma;  // predicted scales for y, >= sigma_min
  TensorPtr<T> bits;   // scalar: estimated total bits for y_q and z_q
};

template <typename T>
class CodecModel {
 public:
  static constexpr double kSigmaMin = 0.11;
  static constexpr double kLikelihoodFloor = 1e-9;

  CodecModel(const ModelConfig& cfg, ParameterStore<T>& store, std::set<Task> tasks,
             std::uint64_t init_seed)
      : cfg_(cfg), store_(&store), tasks_(std::move(tasks)), sched_(cfg.schedule()) {
    cfg_.validate();
    if (tasks_.empty()) throw ConfigError("codec needs at least one decoder task");
    Rng rng(init_seed);
    build_encoder(rng);
    build_decoder(rng);
    build_hyper(rng);
  }

  CodecModel(const CodecModel&) = delete;
  CodecModel& operator=(const CodecModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const std::set<Task>& tasks() const { return tasks_; }
  const RatioSchedule& schedule() const { return sched_; }
  static constexpr int downsample_factor() { return 16; }
  static constexpr int routed_stages() { return 3; }
  int latent_channels() const { return cfg_.channels[3]; }

  // Parameters trained during side-path adaptation for one task: that task's
  // decoder side paths and importance predictors, nothing else.
  const std::vector<std::string>& task_parameter_names(Task t) const {
    auto it = task_params_.find(t);
    if (it == task_params_.end()) throw ConfigError("task not registered in model");
    return it->second;
  }

  PathCounters& encoder_counters(int stage) { return enc_counters_.at(std::size_t(stage)); }
  PathCounters& decoder_counters(int stage) { return dec_counters_.at(std::size_t(stage)); }

  // --- analysis transform -------------------------------------------------

  // Inference encode: exact top-k masks from the keep-ratio schedule.
  // image: [H,W,3] with both extents divisible by 16.
  EncodeResult<T> encode(const TensorPtr<T>& image, double q) {
    return encode_impl(image, q, nullptr);
  }

  // Training encode: stochastic masks biased by the integer quality level.
  EncodeResult<T> encode_train(const TensorPtr<T>& image, int q, Rng& rng) {
    return encode_impl(image, double(q), &rng);
  }

  // --- synthesis transform ------------------------------------------------

  // Inference decode. alpha in [0,1] is the share of positions routed to the
  // task side path; alpha == 0 never evaluates task parameters, so any task
  // value is accepted then.
  DecodeResult<T> decode(const TensorPtr<T>& y_hat, double q, double alpha, Task task) {
    check_latent(y_hat);
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha out of range");
    check_quality(q);
    if (alpha > 0.0 && tasks_.count(task) == 0)
      throw ConfigError(std::string("task '") + task_name(task) +
                        "' not registered in this model");
    return decode_impl(y_hat, q, ratio_decoder(alpha), task, nullptr, 0,
                       /*main_only=*/false);
  }

  // Base-model training decode: every position on the main path, no routing.
  DecodeResult<T> decode_train_main(const TensorPtr<T>& y_hat, double q) {
    check_latent(y_hat);
    check_quality(q);
    return decode_impl(y_hat, q, 1.0, Task::mse, nullptr, 0, /*main_only=*/true);
  }

  // Side-path adaptation decode: stochastic masks from the task's predictor,
  // biased by the alpha grid index.
  DecodeResult<T> decode_train_task(const TensorPtr<T>& y_hat, double q, Task task,
                                    int alpha_level, Rng& rng) {
    check_latent(y_hat);
    check_quality(q);
    if (tasks_.count(task) == 0)
      throw ConfigError(std::string("task '") + task_name(task) +
                        "' not registered in this model");
    if (alpha_level < 0 || alpha_level >= cfg_.alpha_levels)
      throw ConfigError("alpha grid index out of range");
    return decode_impl(y_hat, q, 0.0, task, &rng, alpha_level, /*main_only=*/false);
  }

  // --- hyperprior and rate ------------------------------------------------

  // Spatial extent of the hyper latent for a given latent extent.
  static int hyper_extent(int y_extent) { return (y_extent + 1) / 2; }

  // Mean/scale of the latent model from a (quantized) hyper latent. The
  // decompressor calls this with the decoded hyper latent, so it must be the
  // only path that derives mu/sigma.
  std::pair<TensorPtr<T>, TensorPtr<T>> hyper_stats(const TensorPtr<T>& z_q, int yh, int yw) {
    if (z_q->shape.size() != 3 || z_q->shape[2] != cfg_.hyper_channels ||
        z_q->shape[0] != hyper_extent(yh) || z_q->shape[1] != hyper_extent(yw))
      throw ConfigError("hyper latent extents do not match the target latent");
    TensorPtr<T> u = gelu(crop_spatial(transposed_conv2d(z_q, hs_w1_, hs_b1_, 2, 1),
                                       0, 0, yh, yw));
    TensorPtr<T> stats = conv2d(u, hs_w2_, hs_b2_, 1, 1);
    TensorPtr<T> mu = slice_channels(stats, 0, latent_channels());
    TensorPtr<T> sigma = add_scalar(
        softplus(slice_channels(stats, latent_channels(), 2 * latent_channels())),
        T(kSigmaMin));
    return {mu, sigma};
  }

  HyperResult<T> hyper(const TensorPtr<T>& y, QuantMode mode, Rng* rng = nullptr) {
    if (y->shape.size() != 3 || y->shape[2] != latent_channels())
      throw ConfigError("hyperprior expects an [h,w,C] latent");
    if (mode == QuantMode::noise && rng == nullptr)
      throw ConfigError("noise quantization needs an rng");

    int yh = y->shape[0], yw = y->shape[1];
    TensorPtr<T> t = gelu(conv2d(y, ha_w1_, ha_b1_, 1, 1));
    // the stride-2 conv needs even extents; replicate-pad odd latents
    if (yh % 2 || yw % 2) t = pad_edge(t, 0, yh % 2, 0, yw % 2);
    TensorPtr<T> z = conv2d(t, ha_w2_, ha_b2_, 2, 1);

    HyperResult<T> out;
    out.z_q = quantize(z, mode, rng);
    std::tie(out.mu, out.sigma) = hyper_stats(out.z_q, yh, yw);
    out.y_q = quantize(y, mode, rng);

    TensorPtr<T> py = gaussian_bin_likelihood(out.y_q, out.mu, out.sigma);
    TensorPtr<T> pz = logistic_bin_likelihood(out.z_q, z_loc_, exp_of(z_logscale_));
    const T to_bits = T(-1.0 / std::log(2.0));
    out.bits = mul_scalar(add(sum(log_of(clamp_min(py, T(kLikelihoodFloor)))),
                              sum(log_of(clamp_min(pz, T(kLikelihoodFloor))))),
                          to_bits);
    return out;
  }

  // Per-channel logistic parameters of the hyper latent prior, as plain values.
  void hyper_prior(std::vector<double>* loc, std::vector<double>* scale) const {
    loc->assign(z_loc_->value.begin(), z_loc_->value.end());
    scale->resize(z_logscale_->value.size());
    for (std::size_t i = 0; i < scale->size(); ++i)
      (*scale)[i] = std::exp(double(z_logscale_->value[i]));
  }

  int level_index(double q) const {
    int idx = int(std::lround(q)) - 1;
    if (idx < 0) idx = 0;
    if (idx >= cfg_.quality_levels) idx = cfg_.quality_levels - 1;
    return idx;
  }

  double alpha_of_level(int a) const { return double(a) / double(cfg_.alpha_levels - 1); }

 private:
  struct Block {
    ScalingTable<T> sf;
    TensorPtr<T> ln1_g, ln1_b, mix_w, mix_b, ln2_g, ln2_b;
    PathSpec<T> main;
    std::optional<PathSpec<T>> side;         // encoder low-quality path
    std::map<Task, PathSpec<T>> task_sides;  // decoder task paths
  };
  struct EncStage {
    TensorPtr<T> conv_w, conv_b;
    std::vector<Block> blocks;
    std::optional<Predictor<T>> pred;
  };
  struct DecStage {
    std::vector<Block> blocks;
    std::map<Task, Predictor<T>> preds;
    TensorPtr<T> tconv_w, tconv_b;
  };

  // One stage's routing decision: a differentiable stochastic mask while
  // training, a hard top-k mask at inference.
  struct StageMask {
    TensorPtr<T> soft;
    ImportanceMask hard;
    bool is_soft = false;
  };

  void check_quality(double q) const {
    if (!(q >= 1.0 && q <= double(cfg_.quality_levels)))
      throw ConfigError("quality out of range [1, " +
                        std::to_string(cfg_.quality_levels) + "]");
  }

  void check_latent(const TensorPtr<T>& y) const {
    if (y->shape.size() != 3 || y->shape[2] != latent_channels())
      throw ConfigError("decoder latent has wrong channel count");
  }

  EncodeResult<T> encode_impl(const TensorPtr<T>& image, double q, Rng* rng) {
    if (image->shape.size() != 3 || image->shape[2] != 3)
      throw ConfigError("encoder expects an [H,W,3] tensor");
    if (image->shape[0] % downsample_factor() != 0 ||
        image->shape[1] % downsample_factor() != 0)
      throw ConfigError("encoder input dims must be divisible by 16");
    check_quality(q);

    EncodeResult<T> out;
    TensorPtr<T> x = image;
    double rho = sched_.ratio_encoder(q);
    for (int s = 0; s < 4; ++s) {
      x = conv2d(x, enc_[s].conv_w, enc_[s].conv_b, 2, 1);
      std::optional<StageMask> mask;
      if (s < routed_stages()) {
        mask = make_mask(&enc_[s].pred.value(), x, rho, level_index(q), rng);
        record_mask(*mask, out);
      }
      for (auto& blk : enc_[s].blocks)
        x = block_forward(blk, x, q, mask,
                          s < routed_stages() ? &enc_counters_[s] : nullptr,
                          /*encoder=*/true, Task::mse, s < routed_stages());
    }
    out.y = sf_modulate(x, latent_sf_, q);
    return out;
  }

  DecodeResult<T> decode_impl(const TensorPtr<T>& y_hat, double q, double rho,
                              Task task, Rng* rng, int alpha_level, bool main_only) {
    bool have_task = tasks_.count(task) > 0;
    DecodeResult<T> out;
    TensorPtr<T> x = isf_demodulate(y_hat, latent_sf_, q);
    for (int d = 0; d < 4; ++d) {
      std::optional<StageMask> mask;
      bool routed = d >= 1 && !main_only;
      if (routed) {
        Predictor<T>* pred = have_task ? &dec_[d].preds.at(task) : nullptr;
        mask = make_mask(pred, x, rho, alpha_level, rng);
        record_mask(*mask, out);
      }
      for (auto& blk : dec_[d].blocks)
        x = block_forward(blk, x, q, mask, routed ? &dec_counters_[d - 1] : nullptr,
                          /*encoder=*/false, task, routed);
      x = transposed_conv2d(x, dec_[d].tconv_w, dec_[d].tconv_b, 2, 1);
    }
    out.image = x;  // raw values; clamp to [0,1] when materializing pixels
    return out;
  }

  TensorPtr<T> weight(const std::string& name, Shape shape, Rng& rng, double stddev) {
    return store_->create(name, shape, normal_init<T>(rng, shape_numel(shape), stddev));
  }
  TensorPtr<T> fill(const std::string& name, Shape shape, T v) {
    return store_->create(name, shape, std::vector<T>(shape_numel(shape), v));
  }

  static double conv_std(int kh, int kw, int cin) {
    return 1.0 / std::sqrt(double(kh) * kw * cin);
  }

  Block make_block(const std::string& prefix, int c, bool enc_side,
                   const std::set<Task>* dec_tasks, Rng& rng) {
    Block b;
    b.sf = ScalingTable<T>::create(*store_, prefix + ".sf", cfg_.quality_levels, c);
    b.ln1_g = fill(prefix + ".ln1.g", {c}, T(1));
    b.ln1_b = fill(prefix + ".ln1.b", {c}, T(0));
    b.mix_w = weight(prefix + ".mix.w", {3, 3, c}, rng, conv_std(3, 3, 1));
    b.mix_b = fill(prefix + ".mix.b", {c}, T(0));
    b.ln2_g = fill(prefix + ".ln2.g", {c}, T(1));
    b.ln2_b = fill(prefix + ".ln2.b", {c}, T(0));
    b.main = PathSpec<T>::create(*store_, prefix + ".main", PathKind::inverted, c, rng);
    if (enc_side)
      b.side = PathSpec<T>::create(*store_, prefix + ".side", PathKind::bottleneck, c, rng);
    if (dec_tasks)
      for (Task t : *dec_tasks) {
        // Task paths are additions on top of a trained model: zero output
        // keeps every block residual-neutral until the adaptation stage
        // trains them.
        std::string p = prefix + ".side." + task_name(t);
        b.task_sides.emplace(
            t, PathSpec<T>::create(*store_, p, PathKind::bottleneck, c, rng, true));
        collect_task_params(t, p);
      }
    return b;
  }

  void collect_task_params(Task t, const std::string& prefix) {
    for (const auto& p : store_->all())
      if (p.name.rfind(prefix, 0) == 0) task_params_[t].push_back(p.name);
  }

  void build_encoder(Rng& rng) {
    int in_c = 3;
    for (int s = 0; s < 4; ++s) {
      int c = cfg_.channels[std::size_t(s)];
      std::string sp = "enc.s" + std::to_string(s);
      enc_[s].conv_w = weight(sp + ".conv.w", {3, 3, in_c, c}, rng, conv_std(3, 3, in_c));
      enc_[s].conv_b = fill(sp + ".conv.b", {c}, T(0));
      if (s < routed_stages())
        enc_[s].pred = Predictor<T>::create(*store_, sp + ".pred", c, cfg_.quality_levels, rng);
      for (int bi = 0; bi < cfg_.depths[std::size_t(s)]; ++bi)
        enc_[s].blocks.push_back(
            make_block(sp + ".b" + std::to_string(bi), c, s < routed_stages(), nullptr, rng));
      in_c = c;
    }
    // coarser qualities shrink the latent before rounding, finer ones grow it
    latent_sf_ = ScalingTable<T>::create_ramp(*store_, "latent.sf", cfg_.quality_levels,
                                              cfg_.channels[3], 0.3, 3.0);
  }

  void build_decoder(Rng& rng) {
    // stage d processes channels[3-d] features and upsamples toward the image
    for (int d = 0; d < 4; ++d) {
      int c = cfg_.channels[std::size_t(3 - d)];
      int out_c = (d == 3) ? 3 : cfg_.channels[std::size_t(2 - d)];
      std::string sp = "dec.s" + std::to_string(d);
      bool routed = d >= 1;
      for (int bi = 0; bi < cfg_.depths[std::size_t(3 - d)]; ++bi)
        dec_[d].blocks.push_back(make_block(sp + ".b" + std::to_string(bi), c, false,
                                            routed ? &tasks_ : nullptr, rng));
      if (routed)
        for (Task t : tasks_) {
          std::string p = sp + ".pred." + task_name(t);
          dec_[d].preds.emplace(t, Predictor<T>::create(*store_, p, c, cfg_.alpha_levels, rng));
          collect_task_params(t, p);
        }
      // transposed conv scatters k^2/s^2 taps per output, hence the 2x
      dec_[d].tconv_w = weight(sp + ".up.w", {4, 4, c, out_c}, rng, conv_std(4, 4, c) * 2.0);
      dec_[d].tconv_b = fill(sp + ".up.b", {out_c}, T(0));
    }
  }

  void build_hyper(Rng& rng) {
    int cy = cfg_.channels[3], cz = cfg_.hyper_channels;
    ha_w1_ = weight("hyper.a.w1", {3, 3, cy, cz}, rng, conv_std(3, 3, cy));
    ha_b1_ = fill("hyper.a.b1", {cz}, T(0));
    ha_w2_ = weight("hyper.a.w2", {3, 3, cz, cz}, rng, conv_std(3, 3, cz));
    ha_b2_ = fill("hyper.a.b2", {cz}, T(0));
    hs_w1_ = weight("hyper.s.w1", {4, 4, cz, cy}, rng, conv_std(4, 4, cz) * 2.0);
    hs_b1_ = fill("hyper.s.b1", {cy}, T(0));
    hs_w2_ = weight("hyper.s.w2", {3, 3, cy, 2 * cy}, rng, conv_std(3, 3, cy));
    hs_b2_ = fill("hyper.s.b2", {2 * cy}, T(0));
    z_loc_ = fill("hyper.prior.loc", {cz}, T(0));
    z_logscale_ = fill("hyper.prior.logscale", {cz}, T(0));
  }

  TensorPtr<T> quantize(const TensorPtr<T>& x, QuantMode mode, Rng* rng) {
    switch (mode) {
      case QuantMode::noise: {
        std::vector<T> n(x->numel());
        for (auto& v : n) v = T(rng->uniform() - 0.5);
        return add(x, make_leaf<T>(x->shape, std::move(n)));
      }
      case QuantMode::round_ste:
      case QuantMode::round:
        return round_ste(x);
    }
    throw ConfigError("bad quantization mode");
  }

  // rng != nullptr selects training-mode stochastic masks.
  StageMask make_mask(Predictor<T>* pred, const TensorPtr<T>& x, double rho, int level,
                      Rng* rng) {
    StageMask m;
    if (rng) {
      m.is_soft = true;
      m.soft = sample_train_mask(*pred, pred->scores(x), level, *rng);
      return m;
    }
    int h = x->shape[0], w = x->shape[1];
    if (rho >= 1.0 || rho <= 0.0 || pred == nullptr) {
      // routing is degenerate: all positions go one way, scores don't matter
      m.hard.h = h;
      m.hard.w = w;
      m.hard.on.assign(std::size_t(h) * w, rho >= 1.0 ? 1 : 0);
      return m;
    }
    TensorPtr<T> scores = pred->scores(x);
    m.hard = top_k_mask(scores->value, h, w, rho);
    return m;
  }

  template <typename Out>
  void record_mask(const StageMask& m, Out& out) {
    if (m.is_soft)
      out.mask_means.push_back(mean(m.soft));
    else
      out.masks.push_back(m.hard);
  }

  TensorPtr<T> block_forward(Block& blk, const TensorPtr<T>& x, double q,
                             const std::optional<StageMask>& mask, PathCounters* counters,
                             bool encoder, Task task, bool routed) {
    TensorPtr<T> gains = blk.sf.gains(q);
    TensorPtr<T> xs = encoder ? mul_channels(x, gains) : div_channels(x, gains);
    TensorPtr<T> t = add(xs, depthwise_conv2d(layer_norm(xs, blk.ln1_g, blk.ln1_b),
                                              blk.mix_w, blk.mix_b, 1));
    TensorPtr<T> u = layer_norm(t, blk.ln2_g, blk.ln2_b);
    TensorPtr<T> m;
    if (!routed) {
      m = blk.main.apply(u);
    } else {
      auto it = blk.task_sides.find(task);
      PathSpec<T>* side = encoder ? &blk.side.value()
                                  : (it != blk.task_sides.end() ? &it->second : nullptr);
      if (mask->is_soft) {
        m = mpa_apply_dense(u, mask->soft, blk.main, *side);
      } else if (side == nullptr) {
        // alpha == 0 with an unregistered task: every position is main-path
        if (counters)
          counters->main_positions.fetch_add(std::size_t(mask->hard.h) * mask->hard.w,
                                             std::memory_order_relaxed);
        m = blk.main.apply(u);
      } else {
        m = mpa_apply(u, mask->hard, blk.main, *side, counters);
      }
    }
    return add(t, m);
  }

  ModelConfig cfg_;
  ParameterStore<T>* store_;
  std::set<Task> tasks_;
  RatioSchedule sched_;
  std::array<EncStage, 4> enc_;
  std::array<DecStage, 4> dec_;
  ScalingTable<T> latent_sf_;
  TensorPtr<T> ha_w1_, ha_b1_, ha_w2_, ha_b2_;
  TensorPtr<T> hs_w1_, hs_b1_, hs_w2_, hs_b2_;
  TensorPtr<T> z_loc_, z_logscale_;
  std::array<PathCounters, 3> enc_counters_;
  std::array<PathCounters, 3> dec_counters_;
  std::map<Task, std::vector<std::string>> task_params_;
};

}  // namespace mpa
