#include "medrdf/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "medrdf/error.hpp"

namespace medrdf {

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
  }
  return best;
}

int argmax_excluding(std::span<const double> values, int skip) {
  int best = -1;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (static_cast<int>(k) == skip) continue;
    if (best < 0 || values[k] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
  }
  return best;
}

double margin_loss(std::span<const double> logits, int label, double kappa) {
  const int other = argmax_excluding(logits, label);
  const double m = logits[static_cast<std::size_t>(label)] - logits[static_cast<std::size_t>(other)];
  return std::max(m, -kappa);
}

void softmax_inplace(std::span<double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& z : logits) {
    z = std::exp(z - top);
    total += z;
  }
  for (double& z : logits) z /= total;
}

ProbabilityMatrix Classifier::predict_proba(std::span<const ImageTensor> batch) const {
  if (batch.empty()) throw InvalidInput("predict_proba: empty batch");
  if (batch.size() > max_batch()) {
    throw InvalidInput("predict_proba: batch of " + std::to_string(batch.size()) +
                       " exceeds max_batch " + std::to_string(max_batch()));
  }
  const Shape shape = batch.front().shape();
  if (const auto expected = input_shape(); expected && *expected != shape) {
    throw InvalidInput("predict_proba: model expects " + to_string(*expected) + ", got " +
                       to_string(shape));
  }
  for (const auto& x : batch) {
    if (x.shape() != shape) throw InvalidInput("predict_proba: batch shapes are not uniform");
  }
  return do_predict_proba(batch);
}

ImageTensor Classifier::input_gradient(const ImageTensor& x, const LossSpec& loss) const {
  if (!supports_gradients()) throw CapabilityError("model does not provide input gradients");
  if (const auto expected = input_shape(); expected && *expected != x.shape()) {
    throw InvalidInput("input_gradient: model expects " + to_string(*expected) + ", got " +
                       to_string(x.shape()));
  }
  if (loss.label < 0 || loss.label >= num_classes()) {
    throw InvalidInput("input_gradient: label " + std::to_string(loss.label) + " out of range");
  }
  return do_input_gradient(x, loss);
}

ImageTensor Classifier::do_input_gradient(const ImageTensor&, const LossSpec&) const {
  throw CapabilityError("model does not provide input gradients");
}

int predict_label(const Classifier& model, const ImageTensor& x) {
  const auto probs = model.predict_proba(std::span<const ImageTensor>(&x, 1));
  return argmax(probs.row(0));
}

std::vector<int> predict_labels(const Classifier& model, std::span<const ImageTensor> images) {
  std::vector<int> labels;
  labels.reserve(images.size());
  const std::size_t chunk = model.max_batch();
  for (std::size_t start = 0; start < images.size(); start += chunk) {
    const auto part = images.subspan(start, std::min(chunk, images.size() - start));
    const auto probs = model.predict_proba(part);
    for (std::size_t r = 0; r < probs.rows(); ++r) labels.push_back(argmax(probs.row(r)));
  }
  return labels;
}

LinearClassifier::LinearClassifier(Shape input, std::vector<std::vector<double>> weights,
                                   std::vector<double> bias)
    : input_(input), weights_(std::move(weights)), bias_(std::move(bias)) {
  if (bias_.size() < 2) throw InvalidInput("linear classifier needs at least 2 classes");
  if (weights_.size() != bias_.size()) throw InvalidInput("linear classifier weight/bias mismatch");
  for (const auto& w : weights_) {
    if (w.size() != input.size()) throw InvalidInput("linear classifier weight row has wrong length");
  }
}

std::vector<double> LinearClassifier::logits(const ImageTensor& x) const {
  std::vector<double> z(bias_);
  const auto v = x.data();
  for (std::size_t k = 0; k < z.size(); ++k) {
    for (std::size_t i = 0; i < v.size(); ++i) z[k] += weights_[k][i] * v[i];
  }
  return z;
}

ProbabilityMatrix LinearClassifier::do_predict_proba(std::span<const ImageTensor> batch) const {
  ProbabilityMatrix out(batch.size(), bias_.size());
  for (std::size_t r = 0; r < batch.size(); ++r) {
    auto row = out.row(r);
    const auto z = logits(batch[r]);
    std::copy(z.begin(), z.end(), row.begin());
    softmax_inplace(row);
  }
  return out;
}

ImageTensor LinearClassifier::do_input_gradient(const ImageTensor& x, const LossSpec& loss) const {
  auto z = logits(x);
  std::vector<double> dz(z.size(), 0.0);
  const auto y = static_cast<std::size_t>(loss.label);
  if (loss.kind == LossSpec::Kind::CrossEntropy) {
    softmax_inplace(z);
    for (std::size_t k = 0; k < z.size(); ++k) dz[k] = z[k];
    dz[y] -= 1.0;
  } else {
    const int other = argmax_excluding(z, loss.label);
    if (z[y] - z[static_cast<std::size_t>(other)] > -loss.kappa) {
      dz[y] = 1.0;
      dz[static_cast<std::size_t>(other)] = -1.0;
    }
  }
  ImageTensor g(x.shape());
  auto gv = g.data();
  for (std::size_t k = 0; k < dz.size(); ++k) {
    if (dz[k] == 0.0) continue;
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += dz[k] * weights_[k][i];
  }
  return g;
}

}  // namespace medrdf
