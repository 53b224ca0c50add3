#include "medrdf/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "medrdf/error.hpp"
#include "medrdf/parallel.hpp"

namespace medrdf {
namespace {

// log(exp(a) + exp(b))
double log_add(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

}  // namespace

void MedRdfConfig::validate(const Classifier* model) const {
  if (n < 1) throw InvalidConfig("medrdf n must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidConfig("medrdf alpha must be in (0,1)");
  if (batch_size < 1) throw InvalidConfig("medrdf batch_size must be >= 1");
  noise.validate();
  denoiser.validate();
  if (model != nullptr && batch_size > model->max_batch()) {
    throw InvalidConfig("medrdf batch_size " + std::to_string(batch_size) +
                        " exceeds the classifier's max_batch " + std::to_string(model->max_batch()));
  }
}

double binomial_two_sided_pvalue(long n_a, long n_b) {
  if (n_b < 0 || n_a < n_b || n_a + n_b < 1) {
    throw InvalidInput("binomial test needs n_A >= n_B >= 0 and n_A + n_B >= 1");
  }
  const long m = n_a + n_b;
  const double log_half_m = static_cast<double>(m) * std::log(0.5);
  // log C(m, k), accumulated exactly term by term from k = 0
  double log_choose = 0.0;
  double log_tail = -INFINITY;
  for (long k = 0; k <= n_b; ++k) {
    if (k > 0) log_choose += std::log(static_cast<double>(m - k + 1)) - std::log(static_cast<double>(k));
    log_tail = log_add(log_tail, log_choose);
  }
  const double p = 2.0 * std::exp(log_tail + log_half_m);
  return std::min(1.0, p);
}

double robust_metric(long n_a, long n_b, int num_classes, long n) {
  if (num_classes < 2) throw InvalidInput("robust metric needs K >= 2");
  if (n_b < 0 || n_a < n_b || n_a > n || n < 1) {
    throw InvalidInput("robust metric needs 0 <= n_B <= n_A <= n");
  }
  return static_cast<double>(num_classes) * static_cast<double>(n_a - n_b) / static_cast<double>(n);
}

double min_top_probability(int num_classes, double rm) {
  if (num_classes < 2) throw InvalidInput("min_top_probability needs K >= 2");
  const double k = num_classes;
  if (!(rm >= 0.0 && rm <= k)) throw InvalidInput("robust metric must lie in [0, K]");
  return 1.0 / k + (k - 1.0) / (k * k) * rm;
}

Diagnosis diagnose_counts(std::vector<long> counts, double alpha) {
  if (counts.size() < 2) throw InvalidInput("diagnosis needs at least two classes");
  Diagnosis d;
  d.counts = std::move(counts);
  const long n = std::accumulate(d.counts.begin(), d.counts.end(), 0L);
  // top two, lowest index on ties
  int a = 0;
  for (std::size_t k = 1; k < d.counts.size(); ++k) {
    if (d.counts[k] > d.counts[static_cast<std::size_t>(a)]) a = static_cast<int>(k);
  }
  int b = -1;
  for (std::size_t k = 0; k < d.counts.size(); ++k) {
    if (static_cast<int>(k) == a) continue;
    if (b < 0 || d.counts[k] > d.counts[static_cast<std::size_t>(b)]) b = static_cast<int>(k);
  }
  d.k_a = a;
  d.k_b = b;
  d.n_a = d.counts[static_cast<std::size_t>(a)];
  d.n_b = d.counts[static_cast<std::size_t>(b)];
  d.p_value = binomial_two_sided_pvalue(d.n_a, d.n_b);
  d.result = d.p_value <= alpha ? a : kAbstain;
  d.rm = robust_metric(d.n_a, d.n_b, static_cast<int>(d.counts.size()), n);
  return d;
}

Diagnosis predict(const Classifier& model, const ImageTensor& x, const MedRdfConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate(&model);
  const int K = model.num_classes();
  if (K < 2) throw InvalidInput("medrdf needs a classifier with K >= 2");

  const std::size_t n = static_cast<std::size_t>(cfg.n);
  const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const unsigned workers = std::min<unsigned>(resolve_threads(cfg.threads),
                                              static_cast<unsigned>(std::max<std::size_t>(batches, 1)));
  std::vector<std::vector<long>> tallies(workers, std::vector<long>(static_cast<std::size_t>(K), 0));

  parallel_for(batches, workers, [&](unsigned worker, std::size_t b) {
    const std::size_t first = b * cfg.batch_size;
    const std::size_t last = std::min(n, first + cfg.batch_size);
    std::vector<ImageTensor> copies;
    copies.reserve(last - first);
    for (std::size_t i = first; i < last; ++i) {
      SeededStream stream(cfg.master_seed, i);
      copies.push_back(denoise(perturb(x, cfg.noise, stream), cfg.denoiser));
    }
    const auto probs = model.predict_proba(copies);
    auto& tally = tallies[worker];
    for (std::size_t r = 0; r < probs.rows(); ++r) ++tally[static_cast<std::size_t>(argmax(probs.row(r)))];
  });

  std::vector<long> counts(static_cast<std::size_t>(K), 0);
  for (const auto& t : tallies) {
    for (std::size_t k = 0; k < counts.size(); ++k) counts[k] += t[k];
  }
  Diagnosis d = diagnose_counts(std::move(counts), cfg.alpha);
  d.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return d;
}

}  // namespace medrdf
