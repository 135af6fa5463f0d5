#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "mpa/pipeline.hpp"
#include "mpa/routing.hpp"
#include "mpa/training.hpp"

namespace {

using namespace mpa;

TensorPtr<float> random_features(int h, int w, int c, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(std::size_t(h) * w * c);
  for (auto& x : v) x = float(rng.normal(0.0, 1.0));
  return make_leaf<float>({h, w, c}, std::move(v));
}

struct PathPair {
  ParameterStore<float> store;
  std::unique_ptr<PathSpec<float>> main_path, side_path;
  PathPair(int c, std::uint64_t seed) {
    Rng rng(seed);
    main_path = std::make_unique<PathSpec<float>>(
        PathSpec<float>::create(store, "m", PathKind::inverted, c, rng));
    side_path = std::make_unique<PathSpec<float>>(
        PathSpec<float>::create(store, "s", PathKind::bottleneck, c, rng));
  }
};

struct Codec {
  ParameterStore<float> store;
  std::unique_ptr<CodecModel<float>> model;
  explicit Codec(const ModelConfig& mc) {
    model = std::make_unique<CodecModel<float>>(
        mc, store, std::set<Task>{Task::mse, Task::cls, Task::seg}, 1);
  }
};

Image bench_image(int size) {
  Rng rng(42);
  Image img = make_image(size, size);
  for (auto& v : img.rgb) v = float(rng.uniform());
  return img;
}

}  // namespace

// Split evaluation: cost shifts between the wide main path and the narrow
// side path as the keep ratio moves.
static void BM_RoutedSplit(benchmark::State& state) {
  const int c = 32, h = 32, w = 32;
  static PathPair paths(c, 7);
  auto u = random_features(h, w, c, 9);
  Rng rng(11);
  std::vector<float> scores(std::size_t(h) * w);
  for (auto& s : scores) s = float(rng.normal(0.0, 1.0));
  ImportanceMask mask = top_k_mask(scores, h, w, double(state.range(0)) / 100.0);
  for (auto _ : state) {
    auto y = mpa_apply(u, mask, *paths.main_path, *paths.side_path);
    benchmark::DoNotOptimize(y->value.data());
  }
}
BENCHMARK(BM_RoutedSplit)->Arg(0)->Arg(50)->Arg(100);

// Dense training blend evaluates both paths everywhere regardless of mask.
static void BM_RoutedDense(benchmark::State& state) {
  const int c = 32, h = 32, w = 32;
  static PathPair paths(c, 7);
  auto u = random_features(h, w, c, 9);
  Rng rng(11);
  std::vector<float> soft(std::size_t(h) * w);
  for (auto& s : soft) s = float(rng.uniform());
  auto mask = make_leaf<float>({h, w, 1}, std::move(soft));
  for (auto _ : state) {
    auto y = mpa_apply_dense(u, mask, *paths.main_path, *paths.side_path);
    benchmark::DoNotOptimize(y->value.data());
  }
}
BENCHMARK(BM_RoutedDense);

static void BM_TopKMask(benchmark::State& state) {
  Rng rng(3);
  const int h = 96, w = 96;
  std::vector<float> scores(std::size_t(h) * w);
  for (auto& s : scores) s = float(rng.normal(0.0, 1.0));
  for (auto _ : state) {
    ImportanceMask m = top_k_mask(scores, h, w, 0.3);
    benchmark::DoNotOptimize(m.on.data());
  }
}
BENCHMARK(BM_TopKMask);

static void BM_Conv2d(benchmark::State& state) {
  auto x = random_features(64, 64, 32, 5);
  Rng rng(6);
  std::vector<float> kv(std::size_t(3) * 3 * 32 * 32);
  for (auto& v : kv) v = float(rng.normal(0.0, 0.05));
  auto k = make_leaf<float>({3, 3, 32, 32}, std::move(kv));
  auto b = make_leaf<float>({32}, std::vector<float>(32, 0.0f));
  for (auto _ : state) {
    auto y = conv2d(x, k, b, 1, 1);
    benchmark::DoNotOptimize(y->value.data());
  }
}
BENCHMARK(BM_Conv2d);

static void BM_CompressImage(benchmark::State& state) {
  static Codec tiny(ModelConfig::tiny());
  static Codec desk(ModelConfig::desk());
  Codec& c = state.range(0) == 0 ? tiny : desk;
  Image img = bench_image(64);
  for (auto _ : state) {
    auto bytes = compress_image(*c.model, img, 4.0);
    benchmark::DoNotOptimize(bytes.data());
  }
}
BENCHMARK(BM_CompressImage)->Arg(0)->Arg(1);

static void BM_DecompressImage(benchmark::State& state) {
  static Codec tiny(ModelConfig::tiny());
  static Codec desk(ModelConfig::desk());
  Codec& c = state.range(0) == 0 ? tiny : desk;
  Image img = bench_image(64);
  auto bytes = compress_image(*c.model, img, 4.0);
  for (auto _ : state) {
    auto out = decompress_image(*c.model, bytes, 0.5, Task::cls);
    benchmark::DoNotOptimize(out.image.rgb.data());
  }
}
BENCHMARK(BM_DecompressImage)->Arg(0)->Arg(1);

static void BM_RangeCoderRoundTrip(benchmark::State& state) {
  Rng rng(13);
  const int n = 4096;
  std::vector<int> symbols(n);
  for (auto& s : symbols) s = int(std::lround(rng.normal(0.0, 4.0)));
  CdfTable table = CdfTable::gaussian(0.0, 4.0);
  for (auto _ : state) {
    RangeEncoder enc;
    for (int s : symbols) enc.encode(table, s);
    auto bytes = enc.finish();
    RangeDecoder dec(bytes);
    int last = 0;
    for (int i = 0; i < n; ++i) last = dec.decode(table);
    benchmark::DoNotOptimize(last);
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * n * 2);
}
BENCHMARK(BM_RangeCoderRoundTrip);

static void BM_Stage1Step(benchmark::State& state) {
  TrainConfig cfg;
  cfg.stage = 1;
  cfg.model = "tiny";
  cfg.steps = 4;
  cfg.batch = 2;
  cfg.crop = 16;
  cfg.data_size = 32;
  cfg.data_count = 8;
  cfg.holdout = 2;
  cfg.seed = 5;
  validate_train_config(cfg);
  static Stage1Trainer<float> trainer(cfg);
  long step = 0;
  for (auto _ : state) trainer.generator_step(++step, false);
}
BENCHMARK(BM_Stage1Step);

BENCHMARK_MAIN();
