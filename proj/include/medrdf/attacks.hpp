#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "medrdf/classifier.hpp"
#include "medrdf/random.hpp"

namespace medrdf {

enum class AttackKind { FGSM, IFGSM, PGD, CW, SPSA };

struct AttackSpec {
  AttackKind kind = AttackKind::PGD;
  double epsilon = 8.0 / 255.0;
  int steps = 20;
  // <= 0 selects the default 2.5 * epsilon / steps (FGSM ignores it)
  double step_size = 0.0;
  bool random_start = true;  // PGD only
  double kappa = 0.0;        // CW only
  int spsa_batch = 128;
  double spsa_lr = 0.01;
  double spsa_delta = 0.01;
  // Stop at the first iterate the base model misclassifies. CW always does.
  bool early_stop = false;
  std::uint64_t seed = 0;

  double effective_step_size() const;
  void validate() const;

  // Defaults for each kind: SPSA uses 100 iterations and early stopping,
  // PGD starts randomly, the others do not.
  static AttackSpec defaults(AttackKind kind, double epsilon, int steps);
};

struct AttackResult {
  ImageTensor adversarial;
  bool success = false;  // base model's label differs from the true label
  long queries = 0;      // forward (and forward+backward) passes consumed
};

AttackResult fgsm(const Classifier& model, const ImageTensor& x, int y, const AttackSpec& spec);
AttackResult ifgsm(const Classifier& model, const ImageTensor& x, int y, const AttackSpec& spec);
AttackResult pgd(const Classifier& model, const ImageTensor& x, int y, const AttackSpec& spec);
AttackResult cw_margin(const Classifier& model, const ImageTensor& x, int y, const AttackSpec& spec);
AttackResult spsa(const Classifier& model, const ImageTensor& x, int y, const AttackSpec& spec);

AttackResult run_attack(const Classifier& model, const ImageTensor& x, int y, const AttackSpec& spec);

// Batched loss oracle: returns one loss per point.
using BatchLoss = std::function<std::vector<double>(std::span<const std::vector<double>>)>;

// Antithetic SPSA estimate of the gradient of `loss` at `point`:
// mean over `samples` Rademacher directions v of (L(x+dv) - L(x-dv)) / (2d) * v.
std::vector<double> spsa_gradient(const BatchLoss& loss, std::span<const double> point,
                                  double delta, int samples, SeededStream& stream);

AttackKind parse_attack_kind(std::string_view name);
std::string to_string(AttackKind kind);
// Table label in the style "PGD-20", "I-FGSM-7", "C&W", "SPSA", "FGSM".
std::string attack_label(const AttackSpec& spec);

}  // namespace medrdf
