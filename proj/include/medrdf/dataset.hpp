#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "medrdf/tensor.hpp"

namespace medrdf {

enum class Split { Train, Val, Test };

std::string to_string(Split split);

struct Dataset {
  std::string name;
  Split split = Split::Train;
  int num_classes = 0;
  std::vector<ImageTensor> images;
  std::vector<int> labels;

  std::size_t size() const noexcept { return images.size(); }
  // Equal lengths, labels in [0, num_classes), uniform image shape.
  void validate() const;
};

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Class k places a Gaussian blob at the k-th of K points on a ring around the
// image center. Every image also carries a smooth random background, pixel
// noise, and a fixed class texture of sparse impulses that a small median
// filter erases (the non-robust feature an L-inf attacker can exploit).
struct SyntheticSpec {
  int num_classes = 3;
  Shape shape{1, 28, 28};
  std::size_t train = 600;
  std::size_t val = 100;
  std::size_t test = 100;
  std::uint64_t seed = 7;

  double background = 0.3;
  double background_variation = 0.08;
  double blob_amplitude = 0.2;
  double blob_radius = 3.0;
  double ring_radius = 7.0;
  double position_jitter = 2.0;
  double texture_amplitude = 0.1;
  // Fraction of pixels carrying the class texture; 1 gives a dense +-amplitude
  // pattern, smaller values give isolated positive impulses.
  double texture_density = 0.3;
  double pixel_noise = 0.02;

  void validate() const;
};

DatasetSplits make_synthetic(const SyntheticSpec& spec);

// IDX pair (images magic 0x00000803, labels magic 0x00000801). Pixels are
// unsigned bytes scaled by 1/255. num_classes 0 infers max(label) + 1.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 int num_classes = 0, Split split = Split::Train);

// CSV with a header row; column "label" first, then shape.size() pixel
// columns holding 0..255 values in channel-major order.
Dataset load_csv(const std::filesystem::path& path, Shape shape, int num_classes = 0,
                 Split split = Split::Train);

// One subdirectory per class, sorted lexicographically; subdirectory i is
// label i. Files ending in .pgm or .png are read in lexicographic order.
Dataset load_image_directory(const std::filesystem::path& root, Split split = Split::Train);

// Binary (P5) or ASCII (P2) PGM, 8 or 16 bit.
ImageTensor read_pgm(const std::filesystem::path& path);
void write_pgm(const ImageTensor& image, const std::filesystem::path& path);
// Gray, gray+alpha, RGB or RGBA; alpha is dropped.
ImageTensor read_png(const std::filesystem::path& path);

void write_idx(const Dataset& data, const std::filesystem::path& images,
               const std::filesystem::path& labels);

}  // namespace medrdf
