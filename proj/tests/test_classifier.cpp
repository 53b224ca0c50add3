#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "medrdf/error.hpp"
#include "medrdf/small_net.hpp"

using namespace medrdf;

namespace {

double cross_entropy(const std::vector<double>& z, int y) {
  double hi = z[0];
  for (double v : z) hi = std::max(hi, v);
  double s = 0.0;
  for (double v : z) s += std::exp(v - hi);
  return hi + std::log(s) - z[static_cast<std::size_t>(y)];
}

double loss_of(const SmallNet& net, const ImageTensor& x, const LossSpec& l) {
  const auto z = net.logits(x);
  return l.kind == LossSpec::Kind::CrossEntropy ? cross_entropy(z, l.label) : margin_loss(z, l.label, l.kappa);
}

bool close(double analytic, double numeric) {
  const double scale = std::max(std::fabs(analytic), std::fabs(numeric));
  return scale < 1e-7 || std::fabs(analytic - numeric) / scale < 1e-3;
}

}  // namespace

TEST_SUITE("classifier") {

TEST_CASE("argmax and label helpers") {
  const std::vector<double> row{0.2, 0.5, 0.3};
  CHECK(argmax(row) == 1);
  const std::vector<double> tie{0.5, 0.5};
  CHECK(argmax(tie) == 0);
  CHECK(argmax_excluding(std::vector<double>{3, 1, 1}, 0) == 1);

  auto fixed = [](std::vector<double> p) {
    return test::FunctionClassifier(static_cast<int>(p.size()), [p](const ImageTensor&) { return p; });
  };
  const ImageTensor x(Shape{1, 2, 2});
  CHECK(predict_label(fixed({0.2, 0.5, 0.3}), x) == 1);
  CHECK(predict_label(fixed({0.5, 0.5}), x) == 0);

  SeededStream rng(3, 0);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> p(5);
    double total = 0;
    for (double& v : p) total += (v = std::floor(rng.uniform() * 4));  // plenty of ties
    int best = 0;
    for (int k = 1; k < 5; ++k)
      if (p[static_cast<std::size_t>(k)] > p[static_cast<std::size_t>(best)]) best = k;
    CHECK(argmax(p) == best);
  }
}

TEST_CASE("predict_proba validates its batch") {
  const SmallNet net = SmallNet::initialized(SmallNetArch{}, 1);
  const ImageTensor x(Shape{1, 28, 28}, 0.5);
  CHECK_THROWS_AS(net.predict_proba({}), InvalidInput);
  const ImageTensor wrong(Shape{1, 27, 28});
  CHECK_THROWS_AS(net.predict_proba(std::span<const ImageTensor>(&wrong, 1)), InvalidInput);
  std::vector<ImageTensor> mixed{x, ImageTensor(Shape{3, 28, 28})};
  CHECK_THROWS_AS(net.predict_proba(mixed), InvalidInput);
  std::vector<ImageTensor> big(net.max_batch() + 1, x);
  CHECK_THROWS_AS(net.predict_proba(big), InvalidInput);
  CHECK(net.predict_proba(std::span<const ImageTensor>(&x, 1)).rows() == 1);
}

TEST_CASE("zero-weight net is uniform with zero gradient") {
  const SmallNet net(SmallNetArch{});
  const auto x = test::random_image(Shape{1, 28, 28}, 5);
  const auto p = net.predict_proba(std::span<const ImageTensor>(&x, 1));
  for (double v : p.row(0)) CHECK(v == doctest::Approx(1.0 / 3));
  const auto g = net.input_gradient(x, {LossSpec::Kind::CrossEntropy, 2, 0.0});
  for (double v : g.data()) CHECK(v == 0.0);
}

TEST_CASE("rows are probability vectors and batching does not matter") {
  const SmallNet net = SmallNet::initialized(SmallNetArch{}, 2);
  std::vector<ImageTensor> batch;
  for (std::uint64_t i = 0; i < 40; ++i) batch.push_back(test::random_image(Shape{1, 28, 28}, 50 + i));
  const auto p = net.predict_proba(batch);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0.0;
    for (double v : p.row(r)) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::fabs(s - 1.0) <= 1e-6);
    const auto alone = net.predict_proba(std::span<const ImageTensor>(&batch[r], 1));
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::fabs(alone.row(0)[k] - p.row(r)[k]) <= 1e-6);
  }
}

TEST_CASE("fresh net does not collapse onto one class") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const SmallNet net = SmallNet::initialized(SmallNetArch{}, seed);
    std::map<int, int> freq;
    for (std::uint64_t i = 0; i < 1000; ++i) ++freq[predict_label(net, test::random_image(Shape{1, 28, 28}, 1000 * seed + i))];
    for (const auto& [k, c] : freq) CHECK(c <= 900);
  }
}

TEST_CASE("analytic gradients match central differences") {
  SmallNetArch arch;
  arch.input = {2, 9, 9};
  arch.conv1_channels = 3;
  arch.conv2_channels = 4;
  arch.hidden = 6;
  arch.num_classes = 4;
  const double h = 1e-4;
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    SmallNet net = SmallNet::initialized(arch, 10 + seed);
    // non-zero biases exercise every term
    SeededStream rng(seed, 99);
    for (double& p : net.parameters()) p += 0.05 * rng.uniform(-1, 1);
    const auto x = test::random_image(arch.input, 20 + seed);
    for (auto loss : {LossSpec{LossSpec::Kind::CrossEntropy, static_cast<int>(seed % 4), 0.0},
                      LossSpec{LossSpec::Kind::Margin, static_cast<int>((seed + 1) % 4), 0.0}}) {
      std::vector<double> pg(net.parameters().size(), 0.0);
      const auto back = net.backward(x, loss, pg);
      CHECK(back.loss == doctest::Approx(loss_of(net, x, loss)).epsilon(1e-12));
      CHECK(net.input_gradient(x, loss) == back.input_gradient);
      for (std::size_t i = 0; i < x.size(); i += 7) {
        auto xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const double num = (loss_of(net, xp, loss) - loss_of(net, xm, loss)) / (2 * h);
        CHECK_MESSAGE(close(back.input_gradient[i], num), "input ", i, ": ", back.input_gradient[i], " vs ", num);
        ++checked;
      }
      for (std::size_t i = 0; i < pg.size(); i += 5) {
        const double keep = net.parameters()[i];
        net.parameters()[i] = keep + h;
        const double up = loss_of(net, x, loss);
        net.parameters()[i] = keep - h;
        const double down = loss_of(net, x, loss);
        net.parameters()[i] = keep;
        const double num = (up - down) / (2 * h);
        CHECK_MESSAGE(close(pg[i], num), "param ", i, ": ", pg[i], " vs ", num);
        ++checked;
      }
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("margin loss subgradient takes the lower-indexed competitor on ties") {
  // logits (x, 2x, 4x - 1) tie between classes 1 and 2 at x = 0.5 but with different slopes
  const LinearClassifier lin(Shape{1, 1, 1}, {{1.0}, {2.0}, {4.0}}, {0.0, 0.0, -1.0});
  const ImageTensor x(Shape{1, 1, 1}, 0.5);
  const auto z = lin.logits(x);
  REQUIRE(z[1] == z[2]);
  const auto g = lin.input_gradient(x, {LossSpec::Kind::Margin, 0, 10.0});  // kappa keeps the hinge active
  CHECK(g[0] == 1.0 - 2.0);  // d(Z_0 - Z_1)/dx, not d(Z_0 - Z_2)/dx
  CHECK(argmax_excluding(z, 0) == 1);
}

TEST_CASE("gradient-free classifiers report a capability error") {
  const auto stub = test::constant_classifier(3, 1);
  CHECK_FALSE(stub.supports_gradients());
  CHECK_THROWS_AS(stub.input_gradient(ImageTensor(Shape{1, 2, 2}), {}), CapabilityError);
}

TEST_CASE("checkpoint round trip and corruption") {
  SmallNetArch arch;
  arch.input = {3, 28, 28};
  arch.num_classes = 7;
  const SmallNet net = SmallNet::initialized(arch, 8);
  std::stringstream buf;
  write_checkpoint(net, buf);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 8) == "MEDRDFNT");
  CHECK(bytes.size() == 8 + 4 + 12 + 4 + 16 + 4 + 8 + 4 * arch.parameter_count());

  std::stringstream in(bytes);
  const SmallNet back = read_checkpoint(in);
  CHECK(back.arch() == arch);
  for (std::size_t i = 0; i < net.parameters().size(); ++i) {
    CHECK(back.parameters()[i] == static_cast<double>(static_cast<float>(net.parameters()[i])));
  }

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_checkpoint(truncated), ParseError);
  std::string bad = bytes;
  bad[0] = 'X';
  std::stringstream magic(bad);
  CHECK_THROWS_WITH_AS(read_checkpoint(magic), doctest::Contains("offset"), ParseError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.ckpt"), IoError);
}

TEST_CASE("architecture checks") {
  SmallNetArch arch;
  arch.input = {1, 5, 5};
  CHECK_THROWS_AS(arch.validate(), InvalidConfig);
  arch.input = {1, 28, 28};
  CHECK(arch.conv1_output() == Shape{8, 13, 13});
  CHECK(arch.conv2_output() == Shape{16, 6, 6});
  CHECK(arch.parameter_count() == 9 * 8 + 8 + 9 * 8 * 16 + 16 + 576 * 32 + 32 + 32 * 3 + 3);
}

}  // TEST_SUITE
