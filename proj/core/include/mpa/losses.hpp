#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mpa/error.hpp"
#include "mpa/nn.hpp"
#include "mpa/ops.hpp"
#include "mpa/param_store.hpp"
#include "mpa/rng.hpp"
#include "mpa/routing.hpp"

// Training objective pieces: the pixel distortion term, a frozen random
// feature distance standing in for a perceptual metric, a small conditional
// discriminator, and the weighted sums used by the two training stages.

namespace mpa {

// Rate weight per integer quality level (index q-1). The remaining weights
// are shared across levels.
inline constexpr double kLambdaRate[8] = {18.0, 9.32, 4.83, 2.5, 1.3, 0.67, 0.35, 0.18};
inline constexpr double kLambdaGan = 2.56;
inline constexpr double kLambdaPerceptual = 4.26;
inline constexpr double kLambdaTask = 1.0;
inline constexpr double kLambdaRatio = 10.0;

inline double lambda_rate(int q) {
  if (q < 1 || q > 8) throw ConfigError("lambda_rate: q must be in [1,8]");
  return kLambdaRate[q - 1];
}

// 0.01 * mean((255 * (xhat - x))^2): MSE in 8-bit pixel units, scaled so a
// typical value sits near the other loss terms.
template <typename T>
TensorPtr<T> pixel_distortion(const TensorPtr<T>& x, const TensorPtr<T>& xhat) {
  TensorPtr<T> d = mul_scalar(sub(xhat, x), T(255));
  return mul_scalar(mean(mul(d, d)), T(0.01));
}

// Distance in the feature space of a fixed, randomly initialized conv stack.
// The weights are seeded identically in every process, so the measure is a
// stable stand-in for a pretrained perceptual metric at this scale. Nothing
// in it ever trains.
template <typename T>
class PerceptualProxy {
 public:
  static constexpr std::uint64_t kSeed = 0x7065726370727879ull;

  PerceptualProxy() {
    Rng rng(kSeed);
    auto conv = [&](const std::string& n, int kh, int cin, int cout) {
      double std = 1.0 / std::sqrt(double(kh) * kh * cin);
      store_.create(n + ".w", {kh, kh, cin, cout},
                    normal_init<T>(rng, std::size_t(kh) * kh * cin * cout, std),
                    /*trainable=*/false);
      store_.create(n + ".b", {cout}, std::vector<T>(cout, T(0)), /*trainable=*/false);
    };
    conv("proxy.c1", 3, 3, 8);
    conv("proxy.c2", 3, 8, 16);
    conv("proxy.c3", 3, 16, 16);
  }

  // Sum over the three layers of the mean squared feature difference.
  TensorPtr<T> distance(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    auto fa = features(a);
    auto fb = features(b);
    TensorPtr<T> total;
    for (std::size_t i = 0; i < fa.size(); ++i) {
      TensorPtr<T> d = sub(fa[i], fb[i]);
      TensorPtr<T> m = mean(mul(d, d));
      total = total ? add(total, m) : m;
    }
    return total;
  }

  const ParameterStore<T>& params() const { return store_; }

 private:
  std::vector<TensorPtr<T>> features(const TensorPtr<T>& x) {
    std::vector<TensorPtr<T>> out;
    TensorPtr<T> t = gelu(conv2d(x, store_.get("proxy.c1.w"), store_.get("proxy.c1.b"), 1, 1));
    out.push_back(t);
    t = gelu(conv2d(t, store_.get("proxy.c2.w"), store_.get("proxy.c2.b"), 2, 1));
    out.push_back(t);
    t = gelu(conv2d(t, store_.get("proxy.c3.w"), store_.get("proxy.c3.b"), 2, 1));
    out.push_back(t);
    return out;
  }

  ParameterStore<T> store_;
};

// Discriminator conditioned on the latent: the latent is projected 1x1,
// nearest-upsampled to image resolution and concatenated with the image,
// then reduced by a strided conv stack to a single probability. The output
// is clamped away from {0,1} so the log losses stay finite.
template <typename T>
class Discriminator {
 public:
  static constexpr int kCondChannels = 8;

  Discriminator(ParameterStore<T>& store, int latent_channels, Rng& rng) : store_(&store) {
    auto conv = [&](const std::string& n, int kh, int cin, int cout) {
      double std = 1.0 / std::sqrt(double(kh) * kh * cin);
      store_->create(n + ".w", {kh, kh, cin, cout},
                     normal_init<T>(rng, std::size_t(kh) * kh * cin * cout, std));
      store_->create(n + ".b", {cout}, std::vector<T>(cout, T(0)));
    };
    conv("disc.cond", 1, latent_channels, kCondChannels);
    conv("disc.c1", 3, 3 + kCondChannels, 16);
    conv("disc.c2", 3, 16, 32);
    conv("disc.c3", 3, 32, 32);
    conv("disc.head", 3, 32, 1);
  }

  // P(image is a real sample given the latent), in [1e-6, 1-1e-6].
  TensorPtr<T> probability(const TensorPtr<T>& latent, const TensorPtr<T>& image) {
    if (latent->shape.size() != 3 || image->shape.size() != 3 || image->shape[2] != 3)
      throw ConfigError("discriminator expects latent [h,w,C] and image [H,W,3]");
    int factor = image->shape[0] / latent->shape[0];
    if (factor < 1 || latent->shape[0] * factor != image->shape[0] ||
        latent->shape[1] * factor != image->shape[1])
      throw ConfigError("discriminator: image dims must be a multiple of latent dims");
    TensorPtr<T> cond =
        gelu(conv2d(latent, store_->get("disc.cond.w"), store_->get("disc.cond.b"), 1, 0));
    if (factor > 1) cond = upsample_nearest(cond, factor);
    TensorPtr<T> t = concat_channels(image, cond);
    t = gelu(conv2d(t, store_->get("disc.c1.w"), store_->get("disc.c1.b"), 2, 1));
    t = gelu(conv2d(t, store_->get("disc.c2.w"), store_->get("disc.c2.b"), 2, 1));
    t = gelu(conv2d(t, store_->get("disc.c3.w"), store_->get("disc.c3.b"), 2, 1));
    t = conv2d(t, store_->get("disc.head.w"), store_->get("disc.head.b"), 1, 1);
    TensorPtr<T> p = sigmoid(reshape(mean_spatial(t), {1}));
    return clamp(p, T(1e-6), T(1) - T(1e-6));
  }

 private:
  ParameterStore<T>* store_;
};

// Non-saturating generator loss: -log D(fake).
template <typename T>
TensorPtr<T> generator_gan_loss(const TensorPtr<T>& p_fake) {
  return mul_scalar(log_of(p_fake), T(-1));
}

// -log(1 - D(fake)) - log D(real).
template <typename T>
TensorPtr<T> discriminator_gan_loss(const TensorPtr<T>& p_fake, const TensorPtr<T>& p_real) {
  TensorPtr<T> one_minus = add_scalar(mul_scalar(p_fake, T(-1)), T(1));
  return mul_scalar(add(log_of(one_minus), log_of(p_real)), T(-1));
}

// Stage 1 objective: lambda_r(q) * rate + distortion + lambda_G * gan
// + lambda_perc * perceptual + lambda_ratio * ratio. gan is null while the
// adversarial term is disabled; ratio is null when every mask was degenerate.
template <typename T>
struct Stage1Parts {
  TensorPtr<T> bpp;         // estimated bits per pixel
  TensorPtr<T> distortion;  // pixel_distortion
  TensorPtr<T> perceptual;
  TensorPtr<T> ratio;
  TensorPtr<T> gan;  // generator_gan_loss, optional
};

template <typename T>
TensorPtr<T> stage1_total(const Stage1Parts<T>& p, int q) {
  TensorPtr<T> total = add(mul_scalar(p.bpp, T(lambda_rate(q))), p.distortion);
  if (p.perceptual) total = add(total, mul_scalar(p.perceptual, T(kLambdaPerceptual)));
  if (p.ratio) total = add(total, mul_scalar(p.ratio, T(kLambdaRatio)));
  if (p.gan) total = add(total, mul_scalar(p.gan, T(kLambdaGan)));
  return total;
}

// Task term for the analysis-oriented side paths: cross entropy of a frozen
// task network on the reconstruction, anchored by the pixel and perceptual
// terms so the image stays viewable.
template <typename T>
TensorPtr<T> analysis_task_term(const TensorPtr<T>& cross_entropy,
                                const TensorPtr<T>& distortion,
                                const TensorPtr<T>& perceptual) {
  return add(cross_entropy, add(distortion, mul_scalar(perceptual, T(kLambdaPerceptual))));
}

// Stage 2 objective: lambda_r(q) * rate + lambda_task * task + lambda_ratio
// * ratio. The rate term is constant under a frozen encoder but is kept so
// logged losses stay comparable with stage 1.
template <typename T>
struct Stage2Parts {
  TensorPtr<T> bpp;
  TensorPtr<T> task;
  TensorPtr<T> ratio;
};

template <typename T>
TensorPtr<T> stage2_total(const Stage2Parts<T>& p, int q) {
  TensorPtr<T> total = add(mul_scalar(p.bpp, T(lambda_rate(q))), mul_scalar(p.task, T(kLambdaTask)));
  if (p.ratio) total = add(total, mul_scalar(p.ratio, T(kLambdaRatio)));
  return total;
}

}  // namespace mpa
