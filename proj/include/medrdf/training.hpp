#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "medrdf/small_net.hpp"

namespace medrdf {

// SGD with momentum and step learning-rate decay.
struct TrainConfig {
  int epochs = 30;
  double momentum = 0.9;
  double weight_decay = 1e-6;
  double learning_rate = 0.01;
  // 0-based epoch indices at whose start the rate is multiplied by lr_decay_factor
  std::vector<int> lr_decay_epochs{15, 22};
  double lr_decay_factor = 0.1;
  int batch_size = 10;
  std::uint64_t seed = 7;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double learning_rate = 0.0;
  double mean_loss = 0.0;  // mean cross-entropy over the epoch's minibatch passes
  double accuracy = 0.0;   // fraction of training samples predicted correctly during the pass
};

struct FitResult {
  std::vector<EpochStats> trace;
};

double learning_rate_at(const TrainConfig& cfg, int epoch);

// Trains `net` in place. Deterministic for a fixed cfg.seed.
FitResult fit(SmallNet& net, std::span<const ImageTensor> images, std::span<const int> labels,
              const TrainConfig& cfg);

// Fraction of samples whose predicted label equals the target.
double accuracy(const Classifier& model, std::span<const ImageTensor> images,
                std::span<const int> labels);

}  // namespace medrdf
