#pragma once

#include <cstdint>
#include <vector>

#include "medrdf/classifier.hpp"
#include "medrdf/noise.hpp"

namespace medrdf {

inline constexpr int kAbstain = -1;

struct MedRdfConfig {
  long n = 10'000;       // noisy copies per query
  double alpha = 0.001;  // abstention threshold on the p-value
  NoiseModel noise{NoiseKind::SaltAndPepper, 0.1};
  Denoiser denoiser{DenoiserKind::MedianFilter, 3, 1.0};
  std::size_t batch_size = 256;
  std::uint64_t master_seed = 0;
  unsigned threads = 1;  // 0 = hardware concurrency

  // Checks ranges and, when a model is given, batch_size <= max_batch.
  void validate(const Classifier* model = nullptr) const;
};

struct Diagnosis {
  int result = kAbstain;      // k_A, or kAbstain
  std::vector<long> counts;   // votes per class, sums to n
  int k_a = 0, k_b = 1;       // most and second-most voted classes
  long n_a = 0, n_b = 0;
  double p_value = 1.0;
  double rm = 0.0;            // robust metric K (n_A - n_B) / n
  double elapsed = 0.0;       // wall seconds spent in predict

  bool abstained() const noexcept { return result == kAbstain; }
};

// Noisy-copy majority vote with binomial abstention. Copy i draws its noise
// from substream i of cfg.master_seed, so every field except `elapsed` is
// independent of batch_size and thread count.
Diagnosis predict(const Classifier& model, const ImageTensor& x, const MedRdfConfig& cfg);

// Builds the Diagnosis fields that follow from a vote vector.
Diagnosis diagnose_counts(std::vector<long> counts, double alpha);

// Exact two-sided test of n_A against Binom(n_A + n_B, 1/2):
// min(1, 2 P[X <= n_B]), summed in log space.
double binomial_two_sided_pvalue(long n_a, long n_b);

// K (n_A - n_B) / n
double robust_metric(long n_a, long n_b, int num_classes, long n);

// Lower bound on the top-class vote share implied by a robust metric value:
// 1/K + (K-1)/K^2 * rm.
double min_top_probability(int num_classes, double rm);

}  // namespace medrdf
