#include "medrdf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "medrdf/error.hpp"

namespace medrdf {

std::string to_string(const Shape& shape) {
  return std::to_string(shape.channels) + "x" + std::to_string(shape.height) + "x" +
         std::to_string(shape.width);
}

ImageTensor::ImageTensor(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {
  if (shape.size() == 0) throw InvalidInput("image shape must be positive, got " + to_string(shape));
}

ImageTensor::ImageTensor(Shape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  if (shape.size() == 0) throw InvalidInput("image shape must be positive, got " + to_string(shape));
  if (data_.size() != shape.size()) {
    throw InvalidInput("image data has " + std::to_string(data_.size()) +
                       " elements, shape " + to_string(shape) + " needs " +
                       std::to_string(shape.size()));
  }
}

void require_same_shape(const ImageTensor& a, const ImageTensor& b) {
  if (a.shape() != b.shape()) {
    throw InvalidInput("incompatible tensors: " + to_string(a.shape()) + " vs " +
                       to_string(b.shape()));
  }
}

ImageTensor clamp01(ImageTensor x) {
  for (double& v : x.data()) v = std::clamp(v, 0.0, 1.0);
  return x;
}

double linf_distance(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b);
  double d = 0.0;
  const auto lhs = a.data();
  const auto rhs = b.data();
  for (std::size_t i = 0; i < lhs.size(); ++i) d = std::max(d, std::abs(lhs[i] - rhs[i]));
  return d;
}

void project_linf_ball(ImageTensor& x, const ImageTensor& center, double eps) {
  require_same_shape(x, center);
  auto v = x.data();
  const auto c = center.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::clamp(v[i], c[i] - eps, c[i] + eps);
}

double mean(const ImageTensor& x) {
  const auto d = x.data();
  return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

}  // namespace medrdf
