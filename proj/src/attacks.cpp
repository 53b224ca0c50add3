#include "medrdf/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "medrdf/error.hpp"

namespace medrdf {
namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

AttackResult finish(const Classifier& model, ImageTensor adv, int y, long queries) {
  const bool success = predict_label(model, adv) != y;
  return {std::move(adv), success, queries + 1};
}

void check_inputs(const Classifier& model, const ImageTensor& x, int y, const AttackSpec& spec) {
  spec.validate();
  if (y < 0 || y >= model.num_classes()) {
    throw InvalidInput("attack: true label " + std::to_string(y) + " out of range");
  }
  if (const auto expected = model.input_shape(); expected && *expected != x.shape()) {
    throw InvalidInput("attack: model expects " + to_string(*expected) + ", got " +
                       to_string(x.shape()));
  }
}

void require_gradients(const Classifier& model) {
  if (!model.supports_gradients()) {
    throw CapabilityError("white-box attack needs input gradients; use spsa for black-box models");
  }
}

// Signed-gradient steps projected onto the eps-ball and the [0,1] box.
// direction = +1 ascends the loss, -1 descends it.
AttackResult projected_sign_descent(const Classifier& model, const ImageTensor& x, int y,
                                    const AttackSpec& spec, const LossSpec& loss, double direction,
                                    bool random_start, bool stop_on_success) {
  const double eps = spec.epsilon;
  const double step = spec.effective_step_size();
  ImageTensor adv = x;
  long queries = 0;
  if (random_start && eps > 0.0) {
    SeededStream stream(spec.seed, 0);
    for (double& v : adv.data()) v += stream.uniform(-eps, eps);
    adv = clamp01(std::move(adv));
  }
  for (int s = 0; s < spec.steps; ++s) {
    const ImageTensor g = model.input_gradient(adv, loss);
    ++queries;
    auto a = adv.data();
    const auto gv = g.data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += direction * step * sign(gv[i]);
    adv = clamp01(std::move(adv));
    project_linf_ball(adv, x, eps);
    if (stop_on_success) {
      ++queries;
      if (predict_label(model, adv) != y) return {std::move(adv), true, queries};
    }
  }
  return finish(model, std::move(adv), y, queries);
}

std::vector<double> margins_from_probabilities(const ProbabilityMatrix& probs, int y) {
  std::vector<double> out(probs.rows());
  std::vector<double> logp(probs.cols());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    const auto row = probs.row(r);
    for (std::size_t k = 0; k < row.size(); ++k) logp[k] = std::log(std::max(row[k], 1e-300));
    out[r] = margin_loss(logp, y, std::numeric_limits<double>::infinity());
  }
  return out;
}

}  // namespace

double AttackSpec::effective_step_size() const {
  if (kind == AttackKind::FGSM) return epsilon;
  if (step_size > 0.0) return step_size;
  return 2.5 * epsilon / static_cast<double>(std::max(steps, 1));
}

void AttackSpec::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw InvalidConfig("attack epsilon must be >= 0");
  if (steps < 1) throw InvalidConfig("attack steps must be >= 1");
  if (step_size < 0.0) throw InvalidConfig("attack step_size must be positive (or 0 for default)");
  if (kappa < 0.0) throw InvalidConfig("attack kappa must be >= 0");
  if (kind == AttackKind::SPSA) {
    if (spsa_batch < 1) throw InvalidConfig("spsa_batch must be >= 1");
    if (!(spsa_lr > 0.0)) throw InvalidConfig("spsa_lr must be positive");
    if (!(spsa_delta > 0.0)) throw InvalidConfig("spsa_delta must be positive");
  }
}

AttackSpec AttackSpec::defaults(AttackKind kind, double epsilon, int steps) {
  AttackSpec spec;
  spec.kind = kind;
  spec.epsilon = epsilon;
  spec.steps = steps;
  spec.random_start = kind == AttackKind::PGD;
  spec.early_stop = kind == AttackKind::SPSA || kind == AttackKind::CW;
  return spec;
}

AttackResult fgsm(const Classifier& model, const ImageTensor& x, int y, const AttackSpec& spec) {
  check_inputs(model, x, y, spec);
  require_gradients(model);
  const ImageTensor g = model.input_gradient(x, {LossSpec::Kind::CrossEntropy, y, 0.0});
  ImageTensor adv = x;
  auto a = adv.data();
  const auto gv = g.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += spec.epsilon * sign(gv[i]);
  return finish(model, clamp01(std::move(adv)), y, 1);
}

AttackResult ifgsm(const Classifier& model, const ImageTensor& x, int y, const AttackSpec& spec) {
  check_inputs(model, x, y, spec);
  require_gradients(model);
  return projected_sign_descent(model, x, y, spec, {LossSpec::Kind::CrossEntropy, y, 0.0}, 1.0,
                                false, spec.early_stop);
}

AttackResult pgd(const Classifier& model, const ImageTensor& x, int y, const AttackSpec& spec) {
  check_inputs(model, x, y, spec);
  require_gradients(model);
  return projected_sign_descent(model, x, y, spec, {LossSpec::Kind::CrossEntropy, y, 0.0}, 1.0,
                                true, spec.early_stop);
}

AttackResult cw_margin(const Classifier& model, const ImageTensor& x, int y, const AttackSpec& spec) {
  check_inputs(model, x, y, spec);
  require_gradients(model);
  if (predict_label(model, x) != y) return {x, true, 1};
  auto result = projected_sign_descent(model, x, y, spec, {LossSpec::Kind::Margin, y, spec.kappa},
                                       -1.0, false, true);
  result.queries += 1;
  return result;
}

std::vector<double> spsa_gradient(const BatchLoss& loss, std::span<const double> point,
                                  double delta, int samples, SeededStream& stream) {
  const std::size_t d = point.size();
  const std::size_t n = static_cast<std::size_t>(samples);
  std::vector<std::vector<double>> directions(n, std::vector<double>(d));
  std::vector<std::vector<double>> probes;
  probes.reserve(2 * n);
  for (auto& v : directions) {
    for (double& e : v) e = stream.rademacher();
    std::vector<double> plus(point.begin(), point.end());
    std::vector<double> minus(point.begin(), point.end());
    for (std::size_t i = 0; i < d; ++i) {
      plus[i] += delta * v[i];
      minus[i] -= delta * v[i];
    }
    probes.push_back(std::move(plus));
    probes.push_back(std::move(minus));
  }
  const std::vector<double> values = loss(probes);
  std::vector<double> grad(d, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const double slope = (values[2 * s] - values[2 * s + 1]) / (2.0 * delta);
    for (std::size_t i = 0; i < d; ++i) grad[i] += slope * directions[s][i];
  }
  for (double& g : grad) g /= static_cast<double>(n);
  return grad;
}

AttackResult spsa(const Classifier& model, const ImageTensor& x, int y, const AttackSpec& spec) {
  check_inputs(model, x, y, spec);
  const double eps = spec.epsilon;
  const Shape shape = x.shape();
  long queries = 0;

  const BatchLoss margin = [&](std::span<const std::vector<double>> points) {
    std::vector<ImageTensor> images;
    images.reserve(points.size());
    for (const auto& p : points) images.emplace_back(shape, p);
    std::vector<double> out;
    out.reserve(points.size());
    const std::size_t chunk = model.max_batch();
    for (std::size_t start = 0; start < images.size(); start += chunk) {
      const auto part = std::span<const ImageTensor>(images).subspan(
          start, std::min(chunk, images.size() - start));
      const auto m = margins_from_probabilities(model.predict_proba(part), y);
      out.insert(out.end(), m.begin(), m.end());
    }
    queries += static_cast<long>(points.size());
    return out;
  };

  // Adam on the estimated gradient, as in the original SPSA attack.
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  ImageTensor adv = x;
  std::vector<double> m1(adv.size(), 0.0), m2(adv.size(), 0.0);
  SeededStream stream(spec.seed, 0);
  for (int it = 0; it < spec.steps; ++it) {
    if (spec.early_stop) {
      ++queries;
      if (predict_label(model, adv) != y) return {std::move(adv), true, queries};
    }
    const auto g = spsa_gradient(margin, adv.data(), spec.spsa_delta, spec.spsa_batch, stream);
    const double t = it + 1;
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    auto a = adv.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
      m1[i] = beta1 * m1[i] + (1.0 - beta1) * g[i];
      m2[i] = beta2 * m2[i] + (1.0 - beta2) * g[i] * g[i];
      a[i] -= spec.spsa_lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + adam_eps);
    }
    adv = clamp01(std::move(adv));
    project_linf_ball(adv, x, eps);
  }
  return finish(model, std::move(adv), y, queries);
}

AttackResult run_attack(const Classifier& model, const ImageTensor& x, int y, const AttackSpec& spec) {
  switch (spec.kind) {
    case AttackKind::FGSM: return fgsm(model, x, y, spec);
    case AttackKind::IFGSM: return ifgsm(model, x, y, spec);
    case AttackKind::PGD: return pgd(model, x, y, spec);
    case AttackKind::CW: return cw_margin(model, x, y, spec);
    case AttackKind::SPSA: return spsa(model, x, y, spec);
  }
  throw InvalidConfig("unknown attack kind");
}

AttackKind parse_attack_kind(std::string_view name) {
  if (name == "fgsm") return AttackKind::FGSM;
  if (name == "ifgsm" || name == "i-fgsm" || name == "bim") return AttackKind::IFGSM;
  if (name == "pgd") return AttackKind::PGD;
  if (name == "cw" || name == "c&w") return AttackKind::CW;
  if (name == "spsa") return AttackKind::SPSA;
  throw InvalidConfig("unknown attack kind '" + std::string(name) + "'");
}

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::FGSM: return "fgsm";
    case AttackKind::IFGSM: return "ifgsm";
    case AttackKind::PGD: return "pgd";
    case AttackKind::CW: return "cw";
    case AttackKind::SPSA: return "spsa";
  }
  return "?";
}

std::string attack_label(const AttackSpec& spec) {
  switch (spec.kind) {
    case AttackKind::FGSM: return "FGSM";
    case AttackKind::IFGSM: return "I-FGSM-" + std::to_string(spec.steps);
    case AttackKind::PGD: return "PGD-" + std::to_string(spec.steps);
    case AttackKind::CW: return "C&W";
    case AttackKind::SPSA: return "SPSA";
  }
  return "?";
}

}  // namespace medrdf
