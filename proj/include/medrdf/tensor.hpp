#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace medrdf {

struct Shape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const noexcept { return channels * height * width; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& shape);

// A C x H x W image with real intensities, nominally in [0,1], stored
// channel-major (c, then row, then column).
class ImageTensor {
 public:
  ImageTensor() = default;
  explicit ImageTensor(Shape shape, double fill = 0.0);
  ImageTensor(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t channels() const noexcept { return shape_.channels; }
  std::size_t height() const noexcept { return shape_.height; }
  std::size_t width() const noexcept { return shape_.width; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& operator[](std::size_t i) noexcept { return data_[i]; }

  double at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }
  double& at(std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }

  bool operator==(const ImageTensor&) const = default;

 private:
  Shape shape_{};
  std::vector<double> data_;
};

// Throws InvalidInput when the shapes differ.
void require_same_shape(const ImageTensor& a, const ImageTensor& b);

ImageTensor clamp01(ImageTensor x);

// max_i |a_i - b_i|
double linf_distance(const ImageTensor& a, const ImageTensor& b);

// Projects x onto the L-inf ball of radius eps around center, in place.
void project_linf_ball(ImageTensor& x, const ImageTensor& center, double eps);

double mean(const ImageTensor& x);

}  // namespace medrdf
