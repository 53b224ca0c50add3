#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "medrdf/tensor.hpp"

namespace medrdf {

// Row-major samples x classes.
class ProbabilityMatrix {
 public:
  ProbabilityMatrix() = default;
  ProbabilityMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<const double> row(std::size_t r) const noexcept {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }
  std::span<double> row(std::size_t r) noexcept {
    return std::span<double>(data_).subspan(r * cols_, cols_);
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct LossSpec {
  enum class Kind {
    CrossEntropy,  // -log p_label
    Margin,        // max(Z_label - max_{k != label} Z_k, -kappa)
  };
  Kind kind = Kind::CrossEntropy;
  int label = 0;
  double kappa = 0.0;
};

// Lowest index wins ties. This is the single argmax rule of the project.
int argmax(std::span<const double> values);

// Index of the largest value excluding `skip`, lowest index on ties.
int argmax_excluding(std::span<const double> values, int skip);

// Margin loss on logits (or log-probabilities; softmax shifts cancel).
double margin_loss(std::span<const double> logits, int label, double kappa);

void softmax_inplace(std::span<double> logits);

// Base classifier h. Implementations override the do_* hooks; the public
// entry points validate inputs first.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual int num_classes() const = 0;
  virtual std::size_t max_batch() const = 0;
  // nullopt accepts any shape.
  virtual std::optional<Shape> input_shape() const { return std::nullopt; }
  virtual bool supports_gradients() const { return false; }

  // Rows are probability vectors. Throws InvalidInput for an empty,
  // oversized or non-uniform batch.
  ProbabilityMatrix predict_proba(std::span<const ImageTensor> batch) const;

  // Exact gradient of the loss with respect to the input pixels.
  // Throws CapabilityError if the model is gradient-free.
  ImageTensor input_gradient(const ImageTensor& x, const LossSpec& loss) const;

 protected:
  virtual ProbabilityMatrix do_predict_proba(std::span<const ImageTensor> batch) const = 0;
  virtual ImageTensor do_input_gradient(const ImageTensor& x, const LossSpec& loss) const;
};

int predict_label(const Classifier& model, const ImageTensor& x);

// Labels for an arbitrarily long list; chunks by max_batch.
std::vector<int> predict_labels(const Classifier& model, std::span<const ImageTensor> images);

// Logits Z = W x + b over the flattened input. Small, exact, and useful
// wherever a closed-form model is needed.
class LinearClassifier final : public Classifier {
 public:
  LinearClassifier(Shape input, std::vector<std::vector<double>> weights, std::vector<double> bias);

  int num_classes() const override { return static_cast<int>(bias_.size()); }
  std::size_t max_batch() const override { return 1u << 16; }
  std::optional<Shape> input_shape() const override { return input_; }
  bool supports_gradients() const override { return true; }

  std::vector<double> logits(const ImageTensor& x) const;
  const std::vector<std::vector<double>>& weights() const noexcept { return weights_; }
  const std::vector<double>& bias() const noexcept { return bias_; }

 protected:
  ProbabilityMatrix do_predict_proba(std::span<const ImageTensor> batch) const override;
  ImageTensor do_input_gradient(const ImageTensor& x, const LossSpec& loss) const override;

 private:
  Shape input_;
  std::vector<std::vector<double>> weights_;
  std::vector<double> bias_;
};

}  // namespace medrdf
