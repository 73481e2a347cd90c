#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfnn/tensor.hpp"

namespace mfnn {

// Labeled 8-bit images, CHW per sample. Batches are normalized to
// (v/255 - 0.5) / 0.5.
struct Dataset {
  int width = 0, height = 0, channels = 0, num_classes = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;

  int size() const { return static_cast<int>(labels.size()); }
  std::size_t sample_bytes() const {
    return static_cast<std::size_t>(width) * height * channels;
  }
  Tensor batch(const std::vector<int>& indices) const;
  std::vector<int> batch_labels(const std::vector<int>& indices) const;
};

// Blobs vs stripes; linearly separable enough for smoke tests.
Dataset synthetic_two_class(std::uint64_t seed, int n, int size = 16);

// Ten oriented-texture classes with jitter and pixel noise; hard enough for
// a tiny backbone to underfit.
Dataset synthetic_ten_class(std::uint64_t seed, int n, int size = 32);

// Parses "synthetic2:<seed>:<n>[:<size>]" / "synthetic10:<seed>:<n>[:<size>]"
// or loads a directory in the raw container format.
Dataset open_dataset(const std::string& path_or_spec);

// On-disk layout: per-class subdirectories of .rimg files plus index.tsv
// ("<relative path>\t<label>"). The .rimg container: magic "RIMG", u32
// version, u32 width, u32 height, u32 channels, then width*height*channels
// bytes in CHW order.
void write_dataset(const Dataset& d, const std::string& dir);
Dataset load_dataset(const std::string& dir);

Dataset slice_dataset(const Dataset& d, int from, int to);

}  // namespace mfnn
