#include "medrdf/training.hpp"

#include <algorithm>
#include <numeric>

#include "medrdf/error.hpp"
#include "medrdf/random.hpp"

namespace medrdf {

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidConfig("train.epochs must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidConfig("train.momentum must be in [0,1)");
  if (!(learning_rate >= 0.0)) throw InvalidConfig("train.learning_rate must be non-negative");
  if (weight_decay < 0.0) throw InvalidConfig("train.weight_decay must be non-negative");
  if (batch_size < 1) throw InvalidConfig("train.batch_size must be >= 1");
  if (!(lr_decay_factor > 0.0)) throw InvalidConfig("train.lr_decay_factor must be positive");
}

double learning_rate_at(const TrainConfig& cfg, int epoch) {
  double lr = cfg.learning_rate;
  for (int e : cfg.lr_decay_epochs) {
    if (epoch >= e) lr *= cfg.lr_decay_factor;
  }
  return lr;
}

FitResult fit(SmallNet& net, std::span<const ImageTensor> images, std::span<const int> labels,
              const TrainConfig& cfg) {
  cfg.validate();
  if (images.empty()) throw InvalidInput("fit: empty dataset");
  if (images.size() != labels.size()) throw InvalidInput("fit: images and labels differ in length");
  for (int y : labels) {
    if (y < 0 || y >= net.num_classes()) {
      throw InvalidInput("fit: label " + std::to_string(y) + " outside [0, K)");
    }
  }

  auto params = net.parameters();
  std::vector<double> velocity(params.size(), 0.0);
  std::vector<double> grad(params.size(), 0.0);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);

  FitResult result;
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate_at(cfg, epoch);
    // Fisher-Yates with the epoch's own substream
    SeededStream shuffle(cfg.seed, static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle() % i);
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t s = order[i];
        const auto b = net.backward(images[s], {LossSpec::Kind::CrossEntropy, labels[s], 0.0}, grad);
        loss_sum += b.loss;
        if (argmax(b.logits) == labels[s]) ++correct;
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t p = 0; p < params.size(); ++p) {
        const double g = grad[p] * scale + cfg.weight_decay * params[p];
        velocity[p] = cfg.momentum * velocity[p] + g;
        params[p] -= lr * velocity[p];
      }
    }
    const double n = static_cast<double>(images.size());
    result.trace.push_back({epoch, lr, loss_sum / n, static_cast<double>(correct) / n});
  }
  return result;
}

double accuracy(const Classifier& model, std::span<const ImageTensor> images,
                std::span<const int> labels) {
  if (images.empty()) return 0.0;
  const auto predicted = predict_labels(model, images);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(images.size());
}

}  // namespace medrdf
