#include "mpa/toydata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <unordered_map>

#include "mpa/error.hpp"
#include "mpa/rng.hpp"

namespace mpa {

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

struct Color {
  float r, g, b;
  float at(int c) const { return c == 0 ? r : c == 1 ? g : b; }
};

Color random_color(Rng& rng) {
  return {float(rng.uniform()), float(rng.uniform()), float(rng.uniform())};
}

// Phase-shifted sinusoid across the image plane, in [0,1].
double grating_value(int y, int x, int size, double angle, double freq, double phase) {
  double t = (x * std::cos(angle) + y * std::sin(angle)) / size;
  return 0.5 + 0.5 * std::sin(kTau * freq * t + phase);
}

void add_noise(Image& img, Rng& rng, double amp) {
  for (auto& v : img.rgb) v = float(v + rng.uniform(-amp, amp));
}

void clamp01(Image& img) {
  for (auto& v : img.rgb) v = std::clamp(v, 0.0f, 1.0f);
}

ToySample texture_sample(Rng rng, int size) {
  ToySample s;
  s.image = make_image(size, size);
  Image& img = s.image;

  Color c0 = random_color(rng), c1 = random_color(rng);
  double gx = rng.uniform(-1.0, 1.0), gy = rng.uniform(-1.0, 1.0);
  double norm = std::max(1e-6, std::hypot(gx, gy)) * size;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double t = 0.5 + (x * gx + y * gy) / (2.0 * norm);
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = float((1.0 - t) * c0.at(c) + t * c1.at(c));
    }

  int gratings = 1 + int(rng.below(3));
  for (int g = 0; g < gratings; ++g) {
    double angle = rng.uniform(0.0, std::numbers::pi);
    double freq = rng.uniform(1.5, 6.0);
    double phase = rng.uniform(0.0, kTau);
    double amp[3] = {rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)};
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double v = grating_value(y, x, size, angle, freq, phase) - 0.5;
        for (int c = 0; c < 3; ++c) img.at(y, x, c) += float(amp[c] * v);
      }
  }

  int blobs = int(rng.below(3));
  for (int b = 0; b < blobs; ++b) {
    double cy = rng.uniform(0.0, size), cx = rng.uniform(0.0, size);
    double radius = rng.uniform(size / 8.0, size / 3.0);
    double amp[3] = {rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)};
    double inv = 1.0 / (2.0 * radius * radius);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        double w = std::exp(-d2 * inv);
        for (int c = 0; c < 3; ++c) img.at(y, x, c) += float(amp[c] * w);
      }
  }

  add_noise(img, rng, 0.01);
  clamp01(img);
  return s;
}

ToySample grating_sample(Rng rng, int size) {
  ToySample s;
  s.image = make_image(size, size);
  Image& img = s.image;

  s.label = int(rng.below(2));
  double angle = rng.uniform(-0.35, 0.35);
  if (s.label == 1) angle += std::numbers::pi / 2.0;
  double freq = rng.uniform(2.0, 5.0);
  double phase = rng.uniform(0.0, kTau);
  // Two colors at least 0.5 apart per channel, so the pattern survives
  // coarse compression.
  Color lo{float(rng.uniform(0.0, 0.45)), float(rng.uniform(0.0, 0.45)),
           float(rng.uniform(0.0, 0.45))};
  Color hi{float(lo.r + 0.5 + rng.uniform(0.0, 0.05)), float(lo.g + 0.5 + rng.uniform(0.0, 0.05)),
           float(lo.b + 0.5 + rng.uniform(0.0, 0.05))};

  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double v = grating_value(y, x, size, angle, freq, phase);
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = float((1.0 - v) * lo.at(c) + v * hi.at(c));
    }

  add_noise(img, rng, 0.02);
  clamp01(img);
  return s;
}

ToySample regions_sample(Rng rng, int size) {
  ToySample s;
  s.image = make_image(size, size);
  s.seg.assign(std::size_t(size) * size, 0);
  Image& img = s.image;

  bool vertical = rng.below(2) == 0;
  int a = int(size * rng.uniform(0.2, 0.45));
  int b = int(size * rng.uniform(0.55, 0.8));
  // Color-coded classes with per-sample jitter.
  Color base[3] = {{0.8f, 0.25f, 0.2f}, {0.2f, 0.75f, 0.3f}, {0.2f, 0.3f, 0.8f}};
  for (auto& col : base) {
    col.r += float(rng.uniform(-0.1, 0.1));
    col.g += float(rng.uniform(-0.1, 0.1));
    col.b += float(rng.uniform(-0.1, 0.1));
  }
  double angle[3], freq[3], phase[3];
  for (int k = 0; k < 3; ++k) {
    angle[k] = rng.uniform(0.0, std::numbers::pi);
    freq[k] = rng.uniform(2.0, 6.0);
    phase[k] = rng.uniform(0.0, kTau);
  }

  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      int pos = vertical ? x : y;
      int k = pos < a ? 0 : pos < b ? 1 : 2;
      s.seg[std::size_t(y) * size + x] = k;
      double v = grating_value(y, x, size, angle[k], freq[k], phase[k]) - 0.5;
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = float(base[k].at(c) + 0.08 * v);
    }

  add_noise(img, rng, 0.02);
  clamp01(img);
  return s;
}

}  // namespace

ToyKind toy_kind_from_name(const std::string& name) {
  if (name == "texture" || name == "mse") return ToyKind::texture;
  if (name == "grating" || name == "cls") return ToyKind::grating;
  if (name == "regions" || name == "seg") return ToyKind::regions;
  throw ConfigError("unknown dataset kind: " + name);
}

const char* toy_kind_name(ToyKind k) {
  switch (k) {
    case ToyKind::texture: return "texture";
    case ToyKind::grating: return "grating";
    case ToyKind::regions: return "regions";
  }
  throw ConfigError("bad dataset kind");
}

int toy_num_classes(ToyKind k) {
  switch (k) {
    case ToyKind::texture: return 0;
    case ToyKind::grating: return 2;
    case ToyKind::regions: return 3;
  }
  throw ConfigError("bad dataset kind");
}

ToySample make_toy_sample(ToyKind kind, std::uint64_t seed, int index, int size) {
  if (size < 4) throw ConfigError("toy sample size must be >= 4");
  if (index < 0) throw ConfigError("toy sample index must be >= 0");
  Rng rng = Rng(seed).fork(std::uint64_t(index), std::uint64_t(kind) + 1);
  ToySample s;
  switch (kind) {
    case ToyKind::texture: s = texture_sample(rng, size); break;
    case ToyKind::grating: s = grating_sample(rng, size); break;
    case ToyKind::regions: s = regions_sample(rng, size); break;
    default: throw ConfigError("bad dataset kind");
  }
  char name[32];
  std::snprintf(name, sizeof(name), "img_%04d.ppm", index);
  s.name = name;
  return s;
}

std::vector<ToySample> make_toy_dataset(ToyKind kind, std::uint64_t seed, int count, int size) {
  std::vector<ToySample> out;
  out.reserve(std::size_t(count));
  for (int i = 0; i < count; ++i) out.push_back(make_toy_sample(kind, seed, i, size));
  return out;
}

void write_toy_dataset(const std::string& dir, ToyKind kind, std::uint64_t seed, int count,
                       int size) {
  std::filesystem::create_directories(dir);
  std::ofstream labels;
  if (kind == ToyKind::grating) {
    labels.open(dir + "/labels.txt", std::ios::trunc);
    if (!labels) throw FormatError("cannot open for writing: " + dir + "/labels.txt");
  }
  for (int i = 0; i < count; ++i) {
    ToySample s = make_toy_sample(kind, seed, i, size);
    write_ppm(dir + "/" + s.name, s.image);
    if (kind == ToyKind::grating) labels << s.name << " " << s.label << "\n";
    if (kind == ToyKind::regions) {
      std::string base = s.name.substr(0, s.name.size() - 4);
      std::vector<std::uint8_t> ids(s.seg.begin(), s.seg.end());
      write_pgm_values(dir + "/" + base + ".labels.pgm", size, size, ids);
    }
  }
}

std::vector<ToySample> read_toy_dataset(const std::string& dir, ToyKind kind) {
  if (!std::filesystem::is_directory(dir))
    throw ConfigError("dataset directory not found: " + dir);
  std::vector<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".ppm")
      names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) throw ConfigError("dataset directory has no .ppm images: " + dir);

  std::unordered_map<std::string, int> class_of;
  if (kind == ToyKind::grating) {
    std::ifstream f(dir + "/labels.txt");
    if (!f) throw ConfigError("dataset is missing labels.txt: " + dir);
    std::string name;
    int label;
    while (f >> name >> label) class_of[name] = label;
  }

  std::vector<ToySample> out;
  out.reserve(names.size());
  for (const auto& name : names) {
    ToySample s;
    s.name = name;
    s.image = read_ppm(dir + "/" + name);
    if (kind == ToyKind::grating) {
      auto it = class_of.find(name);
      if (it == class_of.end()) throw ConfigError("no class label for " + name);
      if (it->second < 0 || it->second >= toy_num_classes(kind))
        throw FormatError("class label out of range for " + name);
      s.label = it->second;
    }
    if (kind == ToyKind::regions) {
      std::string base = name.substr(0, name.size() - 4);
      std::string lpath = dir + "/" + base + ".labels.pgm";
      if (!std::filesystem::exists(lpath))
        throw ConfigError("no segmentation labels for " + name);
      GrayImage g = read_pgm(lpath);
      if (g.width != s.image.width || g.height != s.image.height)
        throw FormatError("segmentation label size mismatch for " + name);
      s.seg.assign(g.gray.begin(), g.gray.end());
      for (int v : s.seg)
        if (v >= toy_num_classes(kind)) throw FormatError("class id out of range in " + lpath);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mpa
