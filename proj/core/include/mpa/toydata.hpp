#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mpa/image.hpp"

// Procedural datasets for training and evaluation at desk scale. Every
// sample is a pure function of (kind, seed, index), so datasets ship as
// generators rather than binary blobs; write_toy_dataset materializes one
// for the file-based tools.

namespace mpa {

enum class ToyKind {
  texture,  // layered gradients, gratings and blobs; no labels
  grating,  // one dominant grating; class 0 vertical bars, 1 horizontal
  regions,  // color-coded bands; per-pixel class in {0,1,2}
};

ToyKind toy_kind_from_name(const std::string& name);
const char* toy_kind_name(ToyKind k);
// Label arity: 0 for texture, 2 for grating, 3 for regions.
int toy_num_classes(ToyKind k);

struct ToySample {
  std::string name;      // file name when materialized
  Image image;
  int label = -1;        // grating only
  std::vector<int> seg;  // regions only, height*width class ids
};

ToySample make_toy_sample(ToyKind kind, std::uint64_t seed, int index, int size);
std::vector<ToySample> make_toy_dataset(ToyKind kind, std::uint64_t seed, int count, int size);

// img_NNNN.ppm per sample, plus labels.txt ("name class" lines) for grating
// and img_NNNN.labels.pgm (raw class ids) for regions.
void write_toy_dataset(const std::string& dir, ToyKind kind, std::uint64_t seed, int count,
                       int size);

// Loads a directory in the layout above: every *.ppm sorted by name, with
// the labels the kind demands. Missing labels raise ConfigError.
std::vector<ToySample> read_toy_dataset(const std::string& dir, ToyKind kind);

}  // namespace mpa
