// Acceptance gate for the compression library: ten independently verifiable
// criteria covering gradients, routing, scheduling, masks, the bitstream, the
// variable-rate gain tables, both training stages and parameter accounting.
// Prints one pass/fail line per criterion; exits nonzero if any fail.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <iostream>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "mpa/checkpoint.hpp"
#include "mpa/entropy.hpp"
#include "mpa/evaluate.hpp"
#include "mpa/grad_check.hpp"
#include "mpa/losses.hpp"
#include "mpa/pipeline.hpp"
#include "mpa/taskmodels.hpp"
#include "mpa/toydata.hpp"
#include "mpa/training.hpp"

using namespace mpa;

namespace {

std::string g_tmp;

struct Criterion {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

TensorPtr<double> uleaf(Shape shape, std::uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return make_leaf<double>(std::move(shape), std::move(v), true);
}

// Weighted scalar readout so elementwise errors cannot cancel.
TensorPtr<double> probe(const TensorPtr<double>& y) {
  Rng rng(0x9e3779b97f4a7c15ull);
  std::vector<double> w(y->numel());
  for (auto& x : w) x = rng.uniform(0.5, 1.5);
  return sum(mul(y, make_leaf<double>(y->shape, std::move(w))));
}

Image random_test_image(int w, int h, Rng& rng) {
  Image img = make_image(w, h);
  for (auto& v : img.rgb) v = float(rng.uniform());
  return img;
}

// ---------------------------------------------------------------------------
// 1. gradient suite

struct GradSuite {
  double worst_prim = 0.0, worst_loss = 0.0;
  std::string worst_prim_name, worst_loss_name;

  void prim(const std::string& name, const std::function<TensorPtr<double>()>& f,
            const std::vector<TensorPtr<double>>& params,
            const std::vector<std::vector<std::size_t>>* subsets = nullptr) {
    double e = grad_check(f, params, 1e-5, subsets);
    if (e > worst_prim) {
      worst_prim = e;
      worst_prim_name = name;
    }
  }
  void loss(const std::string& name, const std::function<TensorPtr<double>()>& f,
            const std::vector<TensorPtr<double>>& params,
            const std::vector<std::vector<std::size_t>>* subsets = nullptr) {
    double e = grad_check(f, params, 1e-5, subsets);
    if (e > worst_loss) {
      worst_loss = e;
      worst_loss_name = name;
    }
  }
};

void check_primitives(GradSuite& gs) {
  auto a = uleaf({3, 4, 2}, 11, -1.0, 1.0);
  auto b = uleaf({3, 4, 2}, 12, 0.5, 1.5);
  gs.prim("add", [&] { return probe(add(a, b)); }, {a, b});
  gs.prim("sub", [&] { return probe(sub(a, b)); }, {a, b});
  gs.prim("mul", [&] { return probe(mul(a, b)); }, {a, b});
  gs.prim("div", [&] { return probe(div(a, b)); }, {a, b});
  gs.prim("add_scalar", [&] { return probe(add_scalar(a, 0.7)); }, {a});
  gs.prim("mul_scalar", [&] { return probe(mul_scalar(a, -1.3)); }, {a});

  auto s1 = uleaf({1}, 13, -0.5, 0.5);
  gs.prim("add_broadcast_scalar", [&] { return probe(add_broadcast_scalar(a, s1)); }, {a, s1});

  gs.prim("exp", [&] { return probe(exp_of(a)); }, {a});
  gs.prim("log", [&] { return probe(log_of(b)); }, {b});
  gs.prim("sigmoid", [&] { return probe(sigmoid(a)); }, {a});
  gs.prim("gelu", [&] { return probe(gelu(a)); }, {a});
  gs.prim("softplus", [&] { return probe(softplus(a)); }, {a});

  auto inner = uleaf({3, 4, 2}, 14, -0.8, 0.8);
  auto outer = uleaf({3, 4, 2}, 15, 1.2, 2.0);
  gs.prim("clamp (interior)", [&] { return probe(clamp(inner, -1.0, 1.0)); }, {inner});
  gs.prim("clamp (saturated)", [&] { return probe(clamp(outer, -1.0, 1.0)); }, {outer});
  gs.prim("clamp_min", [&] { return probe(clamp_min(b, 0.1)); }, {b});

  gs.prim("mean", [&] { return mean(a); }, {a});
  gs.prim("sum", [&] { return sum(a); }, {a});
  gs.prim("mean_spatial", [&] { return probe(mean_spatial(a)); }, {a});
  gs.prim("reshape", [&] { return probe(reshape(a, {6, 4})); }, {a});

  auto c3 = uleaf({3, 4, 3}, 16, -1.0, 1.0);
  gs.prim("concat_channels", [&] { return probe(concat_channels(a, c3)); }, {a, c3});
  auto x5 = uleaf({3, 4, 5}, 17, -1.0, 1.0);
  gs.prim("slice_channels", [&] { return probe(slice_channels(x5, 1, 4)); }, {x5});
  auto m65 = uleaf({6, 5}, 18, -1.0, 1.0);
  gs.prim("slice_row", [&] { return probe(slice_row(m65, 2)); }, {m65});
  auto v7 = uleaf({7}, 19, -1.0, 1.0);
  gs.prim("pick", [&] { return probe(pick(v7, 3)); }, {v7});

  auto ch5 = uleaf({5}, 20, 0.5, 1.5);
  gs.prim("mul_channels", [&] { return probe(mul_channels(x5, ch5)); }, {x5, ch5});
  gs.prim("div_channels", [&] { return probe(div_channels(x5, ch5)); }, {x5, ch5});

  auto soft = uleaf({3, 4, 1}, 21, 0.2, 0.8);
  gs.prim("mul_mask", [&] { return probe(mul_mask(x5, soft)); }, {x5, soft});

  std::vector<int> sel = {0, 3, 7, 11, 5};
  gs.prim("select_positions", [&] { return probe(select_positions(x5, sel)); }, {x5});
  std::vector<int> ia = {0, 2, 5, 7, 9, 11}, ib = {1, 3, 4, 6, 8, 10};
  auto ra = uleaf({6, 5}, 22, -1.0, 1.0);
  auto rb = uleaf({6, 5}, 23, -1.0, 1.0);
  gs.prim("merge_positions", [&] { return probe(merge_positions(3, 4, ia, ra, ib, rb)); },
          {ra, rb});

  auto lx = uleaf({6, 4}, 24, -1.0, 1.0);
  auto lw = uleaf({4, 3}, 25, -0.7, 0.7);
  auto lb = uleaf({3}, 26, -0.2, 0.2);
  gs.prim("linear", [&] { return probe(linear(lx, lw, lb)); }, {lx, lw, lb});

  auto nx = uleaf({3, 4, 6}, 27, -1.0, 1.0);
  auto ng = uleaf({6}, 28, 0.8, 1.2);
  auto nb = uleaf({6}, 29, -0.2, 0.2);
  gs.prim("layer_norm", [&] { return probe(layer_norm(nx, ng, nb)); }, {nx, ng, nb});

  auto cx = uleaf({5, 6, 3}, 30, -1.0, 1.0);
  auto ck = uleaf({3, 3, 3, 4}, 31, -0.5, 0.5);
  auto cb = uleaf({4}, 32, -0.2, 0.2);
  gs.prim("conv2d s1", [&] { return probe(conv2d(cx, ck, cb, 1, 1)); }, {cx, ck, cb});
  gs.prim("conv2d s2", [&] { return probe(conv2d(cx, ck, cb, 2, 1)); }, {cx, ck, cb});

  auto dx = uleaf({5, 6, 4}, 33, -1.0, 1.0);
  auto dk = uleaf({3, 3, 4}, 34, -0.5, 0.5);
  auto db = uleaf({4}, 35, -0.2, 0.2);
  gs.prim("depthwise_conv2d", [&] { return probe(depthwise_conv2d(dx, dk, db, 1)); },
          {dx, dk, db});

  auto tx = uleaf({3, 4, 4}, 36, -1.0, 1.0);
  auto tk = uleaf({4, 4, 4, 3}, 37, -0.5, 0.5);
  auto tb = uleaf({3}, 38, -0.2, 0.2);
  gs.prim("transposed_conv2d", [&] { return probe(transposed_conv2d(tx, tk, tb, 2, 1)); },
          {tx, tk, tb});

  gs.prim("upsample_nearest", [&] { return probe(upsample_nearest(x5, 2)); }, {x5});
  gs.prim("pad_edge", [&] { return probe(pad_edge(a, 1, 0, 2, 1)); }, {a});
  gs.prim("crop_spatial", [&] { return probe(crop_spatial(cx, 1, 2, 3, 3)); }, {cx});

  auto logits = uleaf({5, 4}, 39, -1.0, 1.0);
  std::vector<int> labels = {0, 2, 1, 3, 2};
  gs.prim("softmax_cross_entropy", [&] { return softmax_cross_entropy(logits, labels); },
          {logits});

  auto gt = uleaf({3, 4, 2}, 40, -1.5, 1.5);
  auto gm = uleaf({3, 4, 2}, 41, -0.5, 0.5);
  auto gsg = uleaf({3, 4, 2}, 42, 0.7, 1.7);
  gs.prim("gaussian_bin_likelihood",
          [&] { return probe(gaussian_bin_likelihood(gt, gm, gsg)); }, {gt, gm, gsg});

  auto lt = uleaf({3, 4, 2}, 43, -1.5, 1.5);
  auto ll = uleaf({2}, 44, -0.5, 0.5);
  auto ls = uleaf({2}, 45, 0.7, 1.7);
  gs.prim("logistic_bin_likelihood",
          [&] { return probe(logistic_bin_likelihood(lt, ll, ls)); }, {lt, ll, ls});
}

void check_losses(GradSuite& gs) {
  // reconstruction distortion
  auto x = uleaf({4, 4, 3}, 50, 0.0, 1.0);
  auto xh = uleaf({4, 4, 3}, 51, 0.0, 1.0);
  gs.loss("distortion", [&] { return pixel_distortion(x, xh); }, {xh});

  // adversarial pair through the conditional critic
  ParameterStore<double> ds;
  Rng drng(52);
  Discriminator<double> disc(ds, 4, drng);
  auto yl = uleaf({2, 2, 4}, 53, -2.0, 2.0);
  auto fake = uleaf({32, 32, 3}, 54, 0.0, 1.0);
  auto real = uleaf({32, 32, 3}, 55, 0.0, 1.0);
  std::vector<TensorPtr<double>> gan_params = {yl, fake, ds.get("disc.cond.w"),
                                               ds.get("disc.c2.w"), ds.get("disc.head.w")};
  std::vector<std::vector<std::size_t>> gan_subsets = {{0, 9}, {7, 500}, {0, 13}, {1, 40}, {2, 61}};
  gs.loss("generator adversarial",
          [&] { return generator_gan_loss(disc.probability(yl, fake)); }, gan_params,
          &gan_subsets);
  gs.loss("critic adversarial",
          [&] {
            return discriminator_gan_loss(disc.probability(yl, fake),
                                          disc.probability(yl, real));
          },
          gan_params, &gan_subsets);

  // full stage-1 objective at both routing extremes
  ModelConfig mc = ModelConfig::tiny();
  ParameterStore<double> store;
  CodecModel<double> model(mc, store, {Task::mse, Task::cls, Task::seg}, 56);
  PerceptualProxy<double> proxy;
  auto img = uleaf({16, 16, 3}, 57, 0.0, 1.0);
  for (int q : {1, 8}) {
    auto m1 = uleaf({1}, 58, 0.2, 0.8), m2 = uleaf({1}, 59, 0.2, 0.8),
         m3 = uleaf({1}, 60, 0.2, 0.8);
    auto f = [&] {
      auto enc = model.encode(img, double(q));
      Rng bits_rng(303);
      auto hy = model.hyper(enc.y, QuantMode::noise, &bits_rng);
      Rng deq(404);
      std::vector<double> nv(enc.y->numel());
      for (auto& v : nv) v = deq.uniform(-0.5, 0.5);
      auto yn = add(enc.y, make_leaf<double>(enc.y->shape, std::move(nv)));
      auto dec = model.decode_train_main(yn, double(q));
      Stage1Parts<double> parts;
      parts.bpp = mul_scalar(hy.bits, 1.0 / 256.0);
      parts.distortion = pixel_distortion(img, dec.image);
      parts.perceptual = proxy.distance(img, dec.image);
      parts.ratio = ratio_loss<double>({m1, m2, m3}, model.schedule().ratio_encoder(q));
      parts.gan = generator_gan_loss(disc.probability(yn, dec.image));
      return stage1_total(parts, q);
    };
    int row = (q - 1) * mc.channels[3];
    std::vector<TensorPtr<double>> params = {
        store.get("enc.s0.conv.w"),    store.get("enc.s2.b0.main.w1"),
        store.get("enc.s1.b0.side.w2"), store.get("latent.sf"),
        store.get("dec.s1.b0.main.w2"), store.get("dec.s3.up.w"),
        store.get("hyper.a.w1"),        store.get("hyper.s.w2"),
        store.get("hyper.prior.logscale"), m1, m2, m3};
    std::vector<std::vector<std::size_t>> subsets = {
        {0, 31}, {1, 7}, {0, 5}, {std::size_t(row), std::size_t(row + 3)},
        {2, 9},  {0, 40}, {3, 11}, {1, 6}, {0, 2}, {}, {}, {}};
    gs.loss(fmt("stage-1 objective (q=%d)", q), f, params, &subsets);
  }

  // task adaptation term and the full stage-2 objective at both alphas
  TaskNet<double> net(TaskModelKind::classifier, 2, 61);
  auto target = uleaf({32, 32, 3}, 62, 0.0, 1.0);
  auto ylat = uleaf({2, 2, mc.channels[3]}, 63, -2.0, 2.0);

  auto rec = uleaf({32, 32, 3}, 64, 0.0, 1.0);
  gs.loss("task adaptation term",
          [&] {
            auto ce = softmax_cross_entropy(net.logits(rec), std::vector<int>{1});
            return analysis_task_term(ce, pixel_distortion(target, rec),
                                      proxy.distance(target, rec));
          },
          {rec, net.params().get("task.c1.w"), net.params().get("task.fc.w")},
          nullptr);

  // Added task paths start with a zero output layer; randomise them so the
  // side-path gradients below are non-trivial.
  Rng salt(69);
  for (const char* name :
       {"dec.s1.b0.side.cls.w2", "dec.s2.b0.side.cls.w2", "dec.s3.b0.side.cls.w2"})
    for (auto& v : store.get(name)->value) v = salt.normal(0.0, 0.3);

  for (double alpha : {0.0, 1.0}) {
    auto bpp = uleaf({1}, 65, 0.2, 0.8);
    auto m1 = uleaf({1}, 66, 0.2, 0.8), m2 = uleaf({1}, 67, 0.2, 0.8),
         m3 = uleaf({1}, 68, 0.2, 0.8);
    auto f = [&] {
      auto dec = model.decode(ylat, 3.0, alpha, Task::cls);
      auto ce = softmax_cross_entropy(net.logits(dec.image), std::vector<int>{1});
      Stage2Parts<double> parts;
      parts.bpp = bpp;
      parts.task = analysis_task_term(ce, pixel_distortion(target, dec.image),
                                      proxy.distance(target, dec.image));
      parts.ratio = ratio_loss<double>({m1, m2, m3}, ratio_decoder(alpha));
      return stage2_total(parts, 5);
    };
    std::vector<TensorPtr<double>> params = {ylat, bpp, m1, m2, m3};
    std::vector<std::vector<std::size_t>> subsets = {{0, 7, 13}, {}, {}, {}, {}};
    if (alpha == 1.0) {
      params.push_back(store.get("dec.s1.b0.side.cls.w1"));
      params.push_back(store.get("dec.s3.b0.side.cls.w2"));
      subsets.insert(subsets.end(), {{0, 3}, {0, 3}});
    } else {
      params.push_back(store.get("dec.s1.b0.main.w1"));
      params.push_back(store.get("dec.s3.b0.main.w2"));
      subsets.insert(subsets.end(), {{0, 3}, {0, 3}});
    }
    gs.loss(fmt("stage-2 objective (alpha=%g)", alpha), f, params, &subsets);
  }
}

Criterion criterion1() {
  auto t0 = std::chrono::steady_clock::now();
  GradSuite gs;
  check_primitives(gs);
  check_losses(gs);
  double secs = seconds_since(t0);
  Criterion c;
  c.pass = gs.worst_prim < 1e-6 && gs.worst_loss < 1e-4 && secs < 60.0;
  c.detail = fmt("worst primitive %.2e (%s), worst loss %.2e (%s), %.1fs",
                 gs.worst_prim, gs.worst_prim_name.c_str(), gs.worst_loss,
                 gs.worst_loss_name.c_str(), secs);
  return c;
}

// ---------------------------------------------------------------------------
// 2. split-vs-dense routing oracle

template <typename T>
double routing_diff(std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    int h = 1 + int(rng.below(8)), w = 1 + int(rng.below(8));
    int c = 2 * (1 + int(rng.below(4)));
    ParameterStore<T> store;
    Rng prng = rng.fork(std::uint64_t(trial), 1);
    PathSpec<T> main_path = PathSpec<T>::create(store, "m", PathKind::inverted, c, prng);
    PathSpec<T> side_path = PathSpec<T>::create(store, "s", PathKind::bottleneck, c, prng);

    std::vector<T> uv(std::size_t(h) * w * c);
    for (auto& v : uv) v = T(rng.normal(0.0, 1.0));
    auto u = make_leaf<T>({h, w, c}, std::move(uv));

    ImportanceMask mask;
    mask.h = h;
    mask.w = w;
    mask.on.resize(std::size_t(h) * w);
    // include the all-main and all-side corner cases
    for (auto& m : mask.on)
      m = trial == 0 ? 1 : (trial == 1 ? 0 : std::uint8_t(rng.below(2)));

    auto split = mpa_apply(u, mask, main_path, side_path);
    std::vector<T> soft(mask.on.begin(), mask.on.end());
    auto dense = mpa_apply_dense(u, make_leaf<T>({h, w, 1}, std::move(soft)), main_path,
                                 side_path);
    for (std::size_t i = 0; i < split->value.size(); ++i)
      worst = std::max(worst, std::fabs(double(split->value[i]) - double(dense->value[i])));
  }
  return worst;
}

Criterion criterion2() {
  double d64 = routing_diff<double>(2024);
  double d32 = routing_diff<float>(2024);
  Criterion c;
  c.pass = d64 == 0.0 && d32 < 1e-6;
  c.detail = fmt("max |split - dense| = %.3e (64-bit), %.3e (32-bit), 100 triples each", d64,
                 d32);
  return c;
}

// ---------------------------------------------------------------------------
// 3. encoder keep-ratio schedule

Criterion criterion3() {
  RatioSchedule sched(5.0, 8.0);
  double r45 = sched.ratio_encoder(4.5);
  bool endpoints = sched.ratio_encoder(1.0) == 0.0 && sched.ratio_encoder(8.0) == 1.0;
  bool midpoint = std::fabs(r45 - 0.3090170) <= 1e-6;
  bool increasing = true;
  double prev = -1.0;
  for (int i = 0; i <= 700; ++i) {
    double q = 1.0 + 7.0 * double(i) / 700.0;
    double r = sched.ratio_encoder(q);
    if (!(r > prev)) increasing = false;
    prev = r;
  }
  Criterion c;
  c.pass = endpoints && midpoint && increasing;
  c.detail = fmt("rho(1)=%g rho(8)=%g rho(4.5)=%.7f, strictly increasing over 701 points",
                 sched.ratio_encoder(1.0), sched.ratio_encoder(8.0), r45);
  return c;
}

// ---------------------------------------------------------------------------
// 4. top-k mask exactness, nesting, single flips

Criterion criterion4() {
  Rng rng(44);
  bool counts_ok = true, nested_ok = true, flips_ok = true;
  for (int map = 0; map < 5; ++map) {
    int h = 11 + map, w = 16 - map;
    std::size_t hw = std::size_t(h) * w;
    std::vector<double> scores(hw);
    for (auto& s : scores) s = rng.normal(0.0, 1.0);

    ImportanceMask prev;
    for (int i = 0; i <= 100; ++i) {
      double rho = double(i) / 100.0;
      ImportanceMask m = top_k_mask(scores, h, w, rho);
      if (m.popcount() != std::size_t(std::lround(rho * double(hw)))) counts_ok = false;
      if (i > 0) {
        for (std::size_t j = 0; j < hw; ++j)
          if (prev.on[j] && !m.on[j]) nested_ok = false;
      }
      prev = m;
    }
    // sweep every cardinality: each step must turn on exactly one position
    ImportanceMask last = top_k_mask(scores, h, w, 0.0);
    for (std::size_t k = 1; k <= hw; ++k) {
      ImportanceMask m = top_k_mask(scores, h, w, double(k) / double(hw));
      int turned_on = 0, turned_off = 0;
      for (std::size_t j = 0; j < hw; ++j) {
        if (m.on[j] && !last.on[j]) ++turned_on;
        if (!m.on[j] && last.on[j]) ++turned_off;
      }
      if (turned_on != 1 || turned_off != 0) flips_ok = false;
      last = m;
    }
  }
  Criterion c;
  c.pass = counts_ok && nested_ok && flips_ok;
  c.detail = fmt("popcount %s, nesting %s, single flips %s (5 maps, 101 ratios)",
                 counts_ok ? "exact" : "WRONG", nested_ok ? "holds" : "BROKEN",
                 flips_ok ? "hold" : "BROKEN");
  return c;
}

// ---------------------------------------------------------------------------
// 5. stochastic mask statistics

Criterion criterion5() {
  ParameterStore<double> store;
  Rng prng(55);
  Predictor<double> pred = Predictor<double>::create(store, "p", 4, 8, prng);
  for (auto& v : store.at("p.level_bias").tensor->value) v = 0.0;

  Rng draw(0x5a5a5a5aull);
  auto rate = [&](double logit) {
    std::size_t on = 0, total = 0;
    for (int rep = 0; rep < 10; ++rep) {
      auto scores = make_leaf<double>({100, 100}, std::vector<double>(10000, logit));
      auto m = sample_train_mask(pred, scores, 0, draw);
      for (double v : m->value) on += v > 0.5 ? 1 : 0;
      total += m->numel();
    }
    return double(on) / double(total);
  };

  double p0 = rate(0.0), p4 = rate(4.0), pm4 = rate(-4.0);
  double s4 = 1.0 / (1.0 + std::exp(-4.0));
  Criterion c;
  c.pass = std::fabs(p0 - 0.5) <= 0.01 && std::fabs(p4 - s4) <= 0.01 &&
           std::fabs(pm4 - (1.0 - s4)) <= 0.01;
  c.detail = fmt("P(on): %.4f at logit 0 (want 0.5), %.4f at +4 (want %.4f), %.4f at -4 "
                 "(want %.4f); 1e5 draws each",
                 p0, p4, s4, pm4, 1.0 - s4);
  return c;
}

// ---------------------------------------------------------------------------
// 6. bitstream round trip and rate accounting

Criterion criterion6() {
  ModelConfig mc = ModelConfig::tiny();
  ParameterStore<float> store;
  CodecModel<float> model(mc, store, {Task::mse, Task::cls, Task::seg}, 2026);
  Rng rng(606);

  int exact_fail = 0, size_fail = 0, size_checked = 0;
  double worst_rel = 0.0;
  std::vector<std::uint8_t> kept_container;

  for (int i = 0; i < 1000; ++i) {
    int wpx, hpx;
    if (i % 2 == 0) {
      wpx = 64;
      hpx = 64;
    } else {
      wpx = 16 + int(rng.below(60));
      hpx = 16 + int(rng.below(60));
    }
    Image img = random_test_image(wpx, hpx, rng);
    double q = 1.0 + rng.uniform() * 7.0;

    CompressStats st;
    auto bytes = compress_image(model, img, q, &st);
    if (i == 0) kept_container = bytes;

    // encoder-side reference symbols
    Image padded = pad_to_multiple(img, CodecModel<float>::downsample_factor());
    auto x = detail::image_leaf<float>(padded);
    EncodeResult<float> enc = model.encode(x, st.q);
    HyperResult<float> hy = model.hyper(enc.y, QuantMode::round);

    // decoder-side symbols from the container bytes
    Container cont = parse_container(bytes);
    int ds = CodecModel<float>::downsample_factor();
    int yh = (int(cont.height) + ds - 1) / ds, yw = (int(cont.width) + ds - 1) / ds;
    int zh = CodecModel<float>::hyper_extent(yh), zw = CodecModel<float>::hyper_extent(yw);

    std::vector<double> loc, scale;
    model.hyper_prior(&loc, &scale);
    std::vector<CdfTable> ztables;
    for (std::size_t ci = 0; ci < loc.size(); ++ci)
      ztables.push_back(CdfTable::logistic(loc[ci], scale[ci]));

    RangeDecoder zdec(cont.z_bytes);
    bool ok = true;
    std::vector<float> zv(std::size_t(zh) * zw * std::size_t(mc.hyper_channels));
    for (std::size_t j = 0; j < zv.size(); ++j) {
      int sym = zdec.decode(ztables[j % std::size_t(mc.hyper_channels)]);
      zv[j] = float(sym);
      if (sym != int(std::lround(double(hy.z_q->value[j])))) ok = false;
    }
    auto z_q = make_leaf<float>({zh, zw, mc.hyper_channels}, std::move(zv));
    auto [mu, sigma] = model.hyper_stats(z_q, yh, yw);
    RangeDecoder ydec(cont.y_bytes);
    for (std::size_t j = 0; j < hy.y_q->numel(); ++j) {
      CdfTable t = CdfTable::gaussian(double(mu->value[j]), double(sigma->value[j]));
      int sym = ydec.decode(t);
      if (sym != int(std::lround(double(hy.y_q->value[j])))) ok = false;
    }
    if (!ok) ++exact_fail;

    if (wpx == 64 && hpx == 64) {
      ++size_checked;
      double est_bits = st.bpp_est * 64.0 * 64.0;
      double act_bits = double(bytes.size()) * 8.0;
      if (act_bits > est_bits * 1.01 + 64.0 * 8.0) ++size_fail;
      if (est_bits > 0)
        worst_rel = std::max(worst_rel, (act_bits - 64.0 * 8.0) / est_bits - 1.0);
    }
  }

  // one container, every task and alpha
  int decode_fail = 0;
  for (Task t : {Task::mse, Task::cls, Task::seg})
    for (double alpha : {0.0, 0.5, 1.0}) {
      try {
        auto out = decompress_image(model, kept_container, alpha, t);
        if (out.image.width < 1) ++decode_fail;
      } catch (const std::exception&) {
        ++decode_fail;
      }
    }

  Criterion c;
  c.pass = exact_fail == 0 && size_fail == 0 && decode_fail == 0;
  c.detail = fmt("1000 images: %d symbol mismatches; %d/%d size-bound misses (worst rel gap "
                 "%+.4f); %d decode failures over 3 tasks x 3 alphas",
                 exact_fail, size_fail, size_checked, worst_rel, decode_fail);
  return c;
}

// ---------------------------------------------------------------------------
// 7. variable-rate gain interpolation

Criterion criterion7() {
  Rng rng(77);
  bool exact_ok = true;
  double worst_rel = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    ParameterStore<double> store;
    ScalingTable<double> table =
        ScalingTable<double>::create(store, "t", 8, 16);
    for (auto& v : store.at("t").tensor->value) v = rng.normal(0.0, 0.4);

    for (int q = 1; q <= 8; ++q) {
      auto g = table.gains(double(q));
      for (int ch = 0; ch < 16; ++ch) {
        double stored = std::exp(store.at("t").tensor->value[std::size_t(q - 1) * 16 + ch]);
        if (g->value[ch] != stored) exact_ok = false;
      }
    }
    auto g25 = table.gains(2.5);
    auto g2 = table.gains(2.0);
    auto g3 = table.gains(3.0);
    for (int ch = 0; ch < 16; ++ch) {
      double want = std::sqrt(g2->value[ch] * g3->value[ch]);
      worst_rel = std::max(worst_rel, std::fabs(g25->value[ch] - want) / want);
    }
  }
  Criterion c;
  c.pass = exact_ok && worst_rel < 1e-7;
  c.detail = fmt("integer q %s stored rows; s(2.5) vs sqrt(s2*s3) worst rel err %.2e",
                 exact_ok ? "matches" : "DIFFERS FROM", worst_rel);
  return c;
}

// ---------------------------------------------------------------------------
// 9. stage-1 rate-distortion ordering (produces the stage-2 base checkpoint)

struct RdPoint {
  double bpp = 0.0, mse = 0.0;
};

RdPoint rd_at(CodecModel<float>& model, const std::vector<Image>& images, double q,
              double alpha, Task task) {
  RdPoint p;
  for (const Image& img : images) {
    CompressStats st;
    auto bytes = compress_image(model, img, q, &st);
    auto rec = decompress_image(model, bytes, alpha, task);
    p.bpp += st.bpp_act;
    double se = 0.0;
    for (std::size_t i = 0; i < img.rgb.size(); ++i) {
      double d = double(img.rgb[i]) - double(rec.image.rgb[i]);
      se += d * d;
    }
    p.mse += se / double(img.rgb.size());
  }
  p.bpp /= double(images.size());
  p.mse /= double(images.size());
  return p;
}

Criterion criterion9(std::string* checkpoint_out) {
  auto t0 = std::chrono::steady_clock::now();
  TrainConfig cfg;
  cfg.stage = 1;
  cfg.model = "desk";
  cfg.steps = 20000;
  cfg.batch = 4;
  cfg.crop = 32;
  cfg.data = "texture";
  cfg.data_size = 32;
  cfg.data_count = 256;
  cfg.holdout = 64;
  cfg.seed = 2471;
  cfg.metrics = g_tmp + "/stage1_metrics.csv";
  cfg.out_checkpoint = g_tmp + "/stage1.mpaw";
  validate_train_config(cfg);
  run_training(cfg, &std::cerr);
  *checkpoint_out = cfg.out_checkpoint;

  ParameterStore<float> store;
  CodecModel<float> model(ModelConfig::desk(), store, {Task::mse, Task::cls, Task::seg}, 1);
  load_checkpoint(store, cfg.out_checkpoint);

  // held-out images at the training size; the desk model is only asked to
  // generalise across content, not input extents it never saw
  std::vector<Image> held;
  for (int i = 0; i < 64; ++i)
    held.push_back(make_toy_sample(ToyKind::texture, 909091, i, 32).image);

  RdPoint p1 = rd_at(model, held, 1.0, 0.0, Task::mse);
  RdPoint p4 = rd_at(model, held, 4.0, 0.0, Task::mse);
  RdPoint p8 = rd_at(model, held, 8.0, 0.0, Task::mse);
  double secs = seconds_since(t0);

  Criterion c;
  c.pass = p1.bpp < p4.bpp && p4.bpp < p8.bpp && p1.mse > p8.mse && secs < 45.0 * 60.0;
  c.detail = fmt("bpp %.4f < %.4f < %.4f across q=1/4/8; mse %.5f > %.5f at q=1/8; 64 "
                 "held-out images; %.0fs",
                 p1.bpp, p4.bpp, p8.bpp, p1.mse, p8.mse, secs);
  return c;
}

// ---------------------------------------------------------------------------
// 8. two-stage protocol

struct Stage2Check {
  bool hash_ok = false, alpha0_ok = false, fraction_ok = false;
  double fraction = 0.0;
  double metric0 = 0.0, metric1 = 0.0;  // task metric at alpha 0 / alpha 1
};

Stage2Check run_stage2(const std::string& base_ck, const std::string& task,
                       const std::string& data, const std::string& task_model_path) {
  TrainConfig cfg;
  cfg.stage = 2;
  cfg.task = task;
  cfg.model = "desk";
  cfg.steps = 2000;
  cfg.batch = 4;
  cfg.crop = 32;
  cfg.data = data;
  cfg.data_size = 32;
  cfg.data_count = 256;
  cfg.holdout = 64;
  cfg.seed = 1902;
  cfg.base_checkpoint = base_ck;
  cfg.out_checkpoint = g_tmp + "/stage2_" + task + ".mpaw";
  cfg.metrics = g_tmp + "/stage2_" + task + "_metrics.csv";
  cfg.task_model = task_model_path;
  validate_train_config(cfg);
  TrainResult res = run_training(cfg, &std::cerr);

  Stage2Check out;
  out.hash_ok = !res.frozen_hash_before.empty() &&
                res.frozen_hash_before == res.frozen_hash_after;
  out.fraction = res.trainable_fraction;

  ParameterStore<float> base_store, tuned_store;
  CodecModel<float> base(ModelConfig::desk(), base_store, {Task::mse, Task::cls, Task::seg}, 1);
  CodecModel<float> tuned(ModelConfig::desk(), tuned_store, {Task::mse, Task::cls, Task::seg},
                          1);
  load_checkpoint(base_store, base_ck);
  load_checkpoint(tuned_store, cfg.out_checkpoint);

  // independent parameter count for the reported trainable fraction
  std::size_t task_numel = 0;
  for (const auto& name : tuned.task_parameter_names(task_from_name(task)))
    task_numel += tuned_store.at(name).tensor->numel();
  double independent = double(task_numel) / double(tuned_store.total_size("dec."));
  out.fraction_ok = out.fraction < 0.15 && std::fabs(out.fraction - independent) < 1e-12;

  Task t = task_from_name(task);
  ToyKind kind = toy_kind_from_name(data);
  std::vector<ToySample> held;
  for (int i = 0; i < 64; ++i) held.push_back(make_toy_sample(kind, 424243, i, 32));

  // alpha = 0 must reproduce the base decoder bit for bit
  out.alpha0_ok = true;
  const double eval_q = 2.0;
  std::vector<std::vector<std::uint8_t>> containers;
  for (const auto& s : held) {
    auto bytes = compress_image(tuned, s.image, eval_q);
    containers.push_back(bytes);
  }
  for (std::size_t i = 0; i < 8; ++i) {
    auto a = decompress_image(base, containers[i], 0.0, t);
    auto b = decompress_image(tuned, containers[i], 0.0, t);
    if (a.image.rgb != b.image.rgb) out.alpha0_ok = false;
  }

  if (t == Task::mse) {
    double ps0 = 0.0, ps1 = 0.0;
    for (std::size_t i = 0; i < held.size(); ++i) {
      auto r0 = decompress_image(tuned, containers[i], 0.0, t);
      auto r1 = decompress_image(tuned, containers[i], 1.0, t);
      ps0 += psnr(held[i].image, r0.image);
      ps1 += psnr(held[i].image, r1.image);
    }
    out.metric0 = ps0 / double(held.size());
    out.metric1 = ps1 / double(held.size());
  } else {
    TaskNet<float> net(TaskModelKind::classifier, 2, 1);
    load_checkpoint(net.params(), task_model_path);
    net.freeze();
    int hit0 = 0, hit1 = 0;
    for (std::size_t i = 0; i < held.size(); ++i) {
      auto r0 = decompress_image(tuned, containers[i], 0.0, t);
      auto r1 = decompress_image(tuned, containers[i], 1.0, t);
      if (predict_class(net, r0.image) == held[i].label) ++hit0;
      if (predict_class(net, r1.image) == held[i].label) ++hit1;
    }
    out.metric0 = double(hit0) / double(held.size());
    out.metric1 = double(hit1) / double(held.size());
  }
  return out;
}

Criterion criterion8(const std::string& base_ck) {
  auto t0 = std::chrono::steady_clock::now();

  // classifier head used both for the stage-2 loss and for scoring
  std::string cls_model = g_tmp + "/tasknet_cls.mpaw";
  {
    auto train = make_toy_dataset(ToyKind::grating, 881, 256, 32);
    TaskNet<float> net(TaskModelKind::classifier, 2, 3);
    pretrain_task_model(net, train, 300, 3e-3, 4);
    save_checkpoint(net.params(), cls_model);
  }

  Stage2Check mse = run_stage2(base_ck, "mse", "texture", "");
  Stage2Check cls = run_stage2(base_ck, "cls", "grating", cls_model);
  double secs = seconds_since(t0);

  bool mse_gain = mse.metric1 >= mse.metric0 + 0.1;
  bool cls_gain = cls.metric1 >= cls.metric0 + 0.02;
  Criterion c;
  c.pass = mse.hash_ok && cls.hash_ok && mse.alpha0_ok && cls.alpha0_ok && mse.fraction_ok &&
           cls.fraction_ok && mse_gain && cls_gain && secs < 20.0 * 60.0;
  c.detail = fmt("frozen hash %s; alpha=0 bit-identical %s; psnr %.2f->%.2f dB (mse path), "
                 "accuracy %.3f->%.3f (cls path); trainable fraction %.4f; %.0fs",
                 (mse.hash_ok && cls.hash_ok) ? "unchanged" : "CHANGED",
                 (mse.alpha0_ok && cls.alpha0_ok) ? "yes" : "NO", mse.metric0, mse.metric1,
                 cls.metric0, cls.metric1, mse.fraction, secs);
  return c;
}

// ---------------------------------------------------------------------------
// 10. path parameter accounting

Criterion criterion10() {
  bool ok = true;
  std::size_t bn8 = 0, inv8 = 0;
  for (int cc : {8, 16, 32, 64}) {
    // closed-form layer-extent sums: w1 [c,h] + b1 [h] + w2 [h,c] + b2 [c]
    std::size_t hb = std::size_t(cc) / 2, hi = std::size_t(cc) * 2;
    std::size_t bottleneck = std::size_t(cc) * hb + hb + hb * std::size_t(cc) + std::size_t(cc);
    std::size_t inverted = std::size_t(cc) * hi + hi + hi * std::size_t(cc) + std::size_t(cc);

    ParameterStore<float> store;
    Rng rng(10);
    PathSpec<float> b = PathSpec<float>::create(store, "b", PathKind::bottleneck, cc, rng);
    PathSpec<float> i = PathSpec<float>::create(store, "i", PathKind::inverted, cc, rng);
    if (b.parameter_count() != bottleneck || i.parameter_count() != inverted) ok = false;
    if (PathSpec<float>::expected_parameter_count(PathKind::bottleneck, cc) != bottleneck ||
        PathSpec<float>::expected_parameter_count(PathKind::inverted, cc) != inverted)
      ok = false;
    if (cc == 8) {
      bn8 = bottleneck;
      inv8 = inverted;
    }
  }
  Criterion c;
  c.pass = ok && bn8 == 76 && inv8 == 280;
  c.detail = fmt("bottleneck/inverted = %zu/%zu at C=8 per the layer-extent sums "
                 "(c*h + h + h*c + c); constructed counts match at C=8..64",
                 bn8, inv8);
  return c;
}

}  // namespace

int main() {
  const char* env = std::getenv("MPA_ACCEPT_TMP");
#ifdef MPA_ACCEPT_TMP
  g_tmp = env && *env ? env : MPA_ACCEPT_TMP;
#else
  g_tmp = env && *env ? env : "/tmp/mpa_accept";
#endif
  std::filesystem::create_directories(g_tmp);

  std::vector<std::pair<std::string, Criterion>> results(10);
  auto guard = [](const char* what, const std::function<Criterion()>& f) {
    std::fprintf(stderr, "... %s\n", what);
    try {
      return f();
    } catch (const std::exception& e) {
      Criterion c;
      c.pass = false;
      c.detail = std::string("threw: ") + e.what();
      return c;
    }
  };

  results[0] = {"gradient suite", guard("gradient suite", criterion1)};
  results[1] = {"routing split vs dense oracle", guard("routing oracle", criterion2)};
  results[2] = {"encoder keep-ratio schedule", guard("ratio schedule", criterion3)};
  results[3] = {"top-k mask exactness and nesting", guard("mask exactness", criterion4)};
  results[4] = {"stochastic mask statistics", guard("stochastic mask statistics", criterion5)};
  results[5] = {"bitstream round trip and rate bound",
                guard("bitstream fuzz (1000 images)", criterion6)};
  results[6] = {"variable-rate gain interpolation", guard("gain interpolation", criterion7)};
  results[9] = {"path parameter accounting", guard("path parameter accounting", criterion10)};

  std::string stage1_ck;
  results[8] = {"stage-1 rate-distortion ordering",
                guard("stage-1 training (20000 steps, desk model)",
                      [&] { return criterion9(&stage1_ck); })};
  results[7] = {"two-stage adaptation protocol",
                guard("stage-2 training (2 x 2000 steps)",
                      [&] { return criterion8(stage1_ck); })};

  bool all = true;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& [name, c] = results[i];
    std::printf("[%s] %zu %s: %s\n", c.pass ? "PASS" : "FAIL", i + 1, name.c_str(),
                c.detail.c_str());
    all = all && c.pass;
  }
  return all ? 0 : 1;
}
