#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "medrdf/classifier.hpp"
#include "medrdf/random.hpp"
#include "medrdf/tensor.hpp"

namespace test {

inline medrdf::ImageTensor random_image(medrdf::Shape shape, std::uint64_t seed, double lo = 0.0,
                                        double hi = 1.0) {
  medrdf::SeededStream rng(seed, 0);
  medrdf::ImageTensor x(shape);
  for (double& v : x.data()) v = rng.uniform(lo, hi);
  return x;
}

// Gradient-free classifier whose probability row is a function of the input.
class FunctionClassifier : public medrdf::Classifier {
 public:
  using Fn = std::function<std::vector<double>(const medrdf::ImageTensor&)>;
  FunctionClassifier(int k, Fn fn, std::size_t max_batch = 1024) : k_(k), fn_(std::move(fn)), max_batch_(max_batch) {}

  int num_classes() const override { return k_; }
  std::size_t max_batch() const override { return max_batch_; }

 protected:
  medrdf::ProbabilityMatrix do_predict_proba(std::span<const medrdf::ImageTensor> batch) const override {
    medrdf::ProbabilityMatrix out(batch.size(), static_cast<std::size_t>(k_));
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const auto p = fn_(batch[r]);
      std::copy(p.begin(), p.end(), out.row(r).begin());
    }
    return out;
  }

 private:
  int k_;
  Fn fn_;
  std::size_t max_batch_;
};

inline std::vector<double> one_hot(int k, int label) {
  std::vector<double> p(static_cast<std::size_t>(k), 0.0);
  p[static_cast<std::size_t>(label)] = 1.0;
  return p;
}

// Always votes for `label`.
inline FunctionClassifier constant_classifier(int k, int label) {
  return FunctionClassifier(k, [k, label](const medrdf::ImageTensor&) { return one_hot(k, label); });
}

}  // namespace test

namespace test {

template <class A, class B>
bool same_values(const A& a, const B& b) {
  return std::equal(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace test
