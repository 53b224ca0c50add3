#include <cmath>
#include <numbers>

#include "doctest.h"
#include "helpers.hpp"
#include "medrdf/attacks.hpp"
#include "medrdf/error.hpp"
#include "medrdf/small_net.hpp"

using namespace medrdf;

namespace {

const AttackKind kAll[] = {AttackKind::FGSM, AttackKind::IFGSM, AttackKind::PGD, AttackKind::CW, AttackKind::SPSA};

LinearClassifier random_linear(Shape s, int k, std::uint64_t seed) {
  SeededStream rng(seed, 0);
  std::vector<std::vector<double>> w(static_cast<std::size_t>(k), std::vector<double>(s.size()));
  std::vector<double> b(static_cast<std::size_t>(k));
  for (auto& row : w)
    for (double& v : row) v = rng.uniform(-1, 1);
  for (double& v : b) v = rng.uniform(-0.5, 0.5);
  return LinearClassifier(s, w, b);
}

double sign(double v) { return (v > 0) - (v < 0); }

}  // namespace

TEST_SUITE("attacks") {

TEST_CASE("zero budget is the identity") {
  const auto model = random_linear(Shape{1, 4, 4}, 3, 1);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto x = test::random_image(Shape{1, 4, 4}, seed);
    const int y = predict_label(model, x);  // correctly classified by construction
    for (auto kind : kAll) {
      auto spec = AttackSpec::defaults(kind, 0.0, kind == AttackKind::SPSA ? 5 : 7);
      spec.spsa_batch = 4;
      const auto r = run_attack(model, x, y, spec);
      CHECK(r.adversarial == x);
      CHECK_FALSE(r.success);
    }
  }
}

TEST_CASE("budget and box hold for every attack") {
  SmallNetArch arch;
  arch.input = {1, 8, 8};
  const SmallNet net = SmallNet::initialized(arch, 3);
  const auto lin = random_linear(Shape{1, 8, 8}, 3, 2);
  for (std::uint64_t t = 0; t < 60; ++t) {
    const auto x = test::random_image(arch.input, 500 + t);
    const Classifier& model = t % 2 ? static_cast<const Classifier&>(net) : lin;
    SeededStream rng(t, 1);
    auto spec = AttackSpec::defaults(kAll[t % 5], rng.uniform(0.0, 0.1), 1 + static_cast<int>(t % 9));
    spec.seed = t;
    spec.spsa_batch = 8;
    const auto r = run_attack(model, x, static_cast<int>(t % 3), spec);
    CHECK(linf_distance(r.adversarial, x) <= spec.epsilon + 1e-9);
    for (double v : r.adversarial.data()) CHECK((v >= 0.0 && v <= 1.0));
    CHECK(r.success == (predict_label(model, r.adversarial) != static_cast<int>(t % 3)));
    CHECK(r.queries >= 1);
  }
}

TEST_CASE("FGSM matches the linear-model closed form") {
  const Shape s{1, 5, 5};
  const auto model = random_linear(s, 3, 7);
  for (std::uint64_t t = 0; t < 50; ++t) {
    const auto x = test::random_image(s, 40 + t);
    const int y = static_cast<int>(t % 3);
    // cross-entropy gradient: sum_k (p_k - [k == y]) w_k
    const auto z = model.logits(x);
    double hi = std::max({z[0], z[1], z[2]}), total = 0.0;
    std::vector<double> p(3);
    for (int k = 0; k < 3; ++k) total += (p[static_cast<std::size_t>(k)] = std::exp(z[static_cast<std::size_t>(k)] - hi));
    for (double& v : p) v /= total;
    const double eps = 8.0 / 255;
    const auto r = fgsm(model, x, y, AttackSpec::defaults(AttackKind::FGSM, eps, 1));
    for (std::size_t i = 0; i < s.size(); ++i) {
      double g = 0.0;
      for (int k = 0; k < 3; ++k) g += (p[static_cast<std::size_t>(k)] - (k == y)) * model.weights()[static_cast<std::size_t>(k)][i];
      const double expect = std::clamp(x[i] + eps * sign(g), 0.0, 1.0);
      CHECK(r.adversarial[i] == expect);
    }
  }
}

TEST_CASE("one-step I-FGSM with step epsilon is FGSM") {
  const auto model = random_linear(Shape{1, 6, 6}, 3, 9);
  for (std::uint64_t t = 0; t < 20; ++t) {
    const auto x = test::random_image(Shape{1, 6, 6}, 90 + t);
    auto spec = AttackSpec::defaults(AttackKind::IFGSM, 0.05, 1);
    spec.step_size = 0.05;
    CHECK(ifgsm(model, x, 1, spec).adversarial == fgsm(model, x, 1, AttackSpec::defaults(AttackKind::FGSM, 0.05, 1)).adversarial);
  }
}

TEST_CASE("PGD is deterministic per seed") {
  const SmallNet net = SmallNet::initialized(SmallNetArch{}, 5);
  const auto x = test::random_image(Shape{1, 28, 28}, 3);
  auto spec = AttackSpec::defaults(AttackKind::PGD, 8.0 / 255, 5);
  spec.seed = 11;
  const auto a = pgd(net, x, 0, spec), b = pgd(net, x, 0, spec);
  CHECK(a.adversarial == b.adversarial);
  spec.seed = 12;
  CHECK(pgd(net, x, 0, spec).adversarial != a.adversarial);
  CHECK(spec.effective_step_size() == doctest::Approx(2.5 * 8.0 / 255 / 5));
}

TEST_CASE("C&W exits immediately on a misclassified input") {
  const auto model = random_linear(Shape{1, 3, 3}, 3, 4);
  const auto x = test::random_image(Shape{1, 3, 3}, 8);
  const int wrong = (predict_label(model, x) + 1) % 3;
  const auto r = cw_margin(model, x, wrong, AttackSpec::defaults(AttackKind::CW, 8.0 / 255, 20));
  CHECK(r.success);
  CHECK(r.queries == 1);
  CHECK(r.adversarial == x);
}

TEST_CASE("C&W on a two-class linear model succeeds exactly when the margin is within reach") {
  const Shape s{1, 4, 4};
  int successes = 0, failures = 0;
  for (std::uint64_t t = 0; t < 300; ++t) {
    const auto model = random_linear(s, 2, 1000 + t);
    const double eps = 8.0 / 255;
    const auto x = test::random_image(s, 2000 + t, eps, 1.0 - eps);  // box never binds
    const auto z = model.logits(x);
    const int y = z[1] > z[0] ? 1 : 0;
    const int o = 1 - y;
    double l1 = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      l1 += std::fabs(model.weights()[static_cast<std::size_t>(y)][i] - model.weights()[static_cast<std::size_t>(o)][i]);
    }
    const double margin = z[static_cast<std::size_t>(y)] - z[static_cast<std::size_t>(o)];
    if (std::fabs(margin - eps * l1) < 1e-6) continue;
    const auto r = cw_margin(model, x, y, AttackSpec::defaults(AttackKind::CW, eps, 20));
    const bool expect = margin < eps * l1;
    CHECK(r.success == expect);
    (expect ? successes : failures) += 1;
  }
  CHECK(successes > 10);
  CHECK(failures > 10);
}

TEST_CASE("SPSA gradient estimate on a quadratic points the right way") {
  // L(u, v) = 3u^2 + v^2 + uv at (0.4, -0.7): gradient (2.4 - 0.7, -1.4 + 0.4)
  const BatchLoss loss = [](std::span<const std::vector<double>> pts) {
    std::vector<double> out;
    for (const auto& p : pts) out.push_back(3 * p[0] * p[0] + p[1] * p[1] + p[0] * p[1]);
    return out;
  };
  const std::vector<double> at{0.4, -0.7};
  SeededStream stream(17, 0);
  const auto g = spsa_gradient(loss, at, 0.01, 10000, stream);
  const double tx = 6 * 0.4 - 0.7, ty = 2 * -0.7 + 0.4;
  const double cosang = (g[0] * tx + g[1] * ty) / (std::hypot(g[0], g[1]) * std::hypot(tx, ty));
  CHECK(std::acos(std::min(1.0, cosang)) * 180.0 / std::numbers::pi < 5.0);
}

TEST_CASE("SPSA defaults and black-box use") {
  const auto spec = AttackSpec::defaults(AttackKind::SPSA, 8.0 / 255, 100);
  CHECK(spec.spsa_batch == 128);
  CHECK(spec.spsa_lr == 0.01);
  CHECK(spec.steps == 100);
  CHECK(spec.epsilon == 8.0 / 255);
  CHECK(spec.early_stop);

  // a gradient-free model: white-box attacks refuse, SPSA works
  const auto lin = random_linear(Shape{1, 4, 4}, 3, 6);
  const test::FunctionClassifier black(3, [&](const ImageTensor& x) {
    auto z = lin.logits(x);
    softmax_inplace(z);
    return z;
  });
  const auto x = test::random_image(Shape{1, 4, 4}, 12);
  CHECK_THROWS_AS(pgd(black, x, 0, AttackSpec::defaults(AttackKind::PGD, 0.1, 5)), CapabilityError);
  auto s = AttackSpec::defaults(AttackKind::SPSA, 0.3, 20);
  s.spsa_batch = 16;
  const auto r = spsa(black, x, predict_label(black, x), s);
  CHECK(linf_distance(r.adversarial, x) <= 0.3 + 1e-9);
  CHECK(r.queries > 1);
}

TEST_CASE("attack spec checks and labels") {
  auto s = AttackSpec::defaults(AttackKind::PGD, 8.0 / 255, 20);
  CHECK(attack_label(s) == "PGD-20");
  CHECK(attack_label(AttackSpec::defaults(AttackKind::IFGSM, 0.1, 7)) == "I-FGSM-7");
  CHECK(attack_label(AttackSpec::defaults(AttackKind::CW, 0.1, 7)) == "C&W");
  s.steps = 0;
  CHECK_THROWS_AS(s.validate(), InvalidConfig);
  s = AttackSpec::defaults(AttackKind::PGD, -0.1, 20);
  CHECK_THROWS_AS(s.validate(), InvalidConfig);
  CHECK(parse_attack_kind("i-fgsm") == AttackKind::IFGSM);
  CHECK_THROWS(parse_attack_kind("rays"));
}

}  // TEST_SUITE
