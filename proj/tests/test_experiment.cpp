#include <unistd.h>

#include "doctest.h"
#include "helpers.hpp"
#include "medrdf/error.hpp"
#include "medrdf/experiment.hpp"

using namespace medrdf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  return fs::temp_directory_path() / ("medrdf_exp_" + std::to_string(::getpid()) + "_" + name);
}

// Tiny 3-class problem that trains in well under a second.
ExperimentConfig tiny_config(const std::string& name) {
  auto cfg = parse_config(R"(
[experiment]
attacks = fgsm
[dataset]
height = 12
width = 12
train = 60
val = 0
test = 12
blob_radius = 2
ring_radius = 3
position_jitter = 1
[model]
conv1_channels = 4
conv2_channels = 4
hidden = 8
[train]
epochs = 4
lr_decay_epochs = 3
[defense:sp]
noise = salt_and_pepper
sigma = 0.1
n = 200
)");
  cfg.out = scratch(name);
  return cfg;
}

// The desk-scale model, trained once and shared by the trend checks.
const Workbench& desk() {
  static const Workbench wb = [] {
    auto cfg = ExperimentConfig::defaults();
    cfg.init_seed = 11;
    cfg.data.synthetic.test = 200;
    cfg.out = scratch("desk");
    auto w = prepare(cfg);
    fs::remove_all(cfg.out);
    return w;
  }();
  return wb;
}

double success_rate(const Workbench& wb, const ExperimentConfig& cfg, const AttackSpec& spec) {
  const auto set = craft(wb, cfg, spec);
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < set.inputs.size(); ++i) flipped += set.base_predictions[i] != wb.test.labels[i];
  return static_cast<double>(flipped) / static_cast<double>(set.inputs.size());
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("epsilon labels") {
  CHECK(format_epsilon(8.0 / 255) == "8/255");
  CHECK(format_epsilon(0.0) == "0/255");
  CHECK(format_epsilon(0.03) == "0.03");
}

TEST_CASE("prepare trains, saves and reloads the model") {
  auto cfg = tiny_config("prepare");
  const auto wb = prepare(cfg);
  CHECK(fs::exists(cfg.out / "model.ckpt"));
  CHECK(wb.fit.has_value());
  CHECK(wb.test.size() == 12);
  CHECK(wb.model.arch().input == Shape{1, 12, 12});

  cfg.train_enabled = false;
  cfg.checkpoint = cfg.out / "model.ckpt";
  cfg.eval_limit = 5;
  const auto again = prepare(cfg);
  CHECK_FALSE(again.fit.has_value());
  CHECK(again.test.size() == 5);
  CHECK(test::same_values(again.model.parameters(), wb.model.parameters()));

  cfg.checkpoint = cfg.out / "missing.ckpt";
  CHECK_THROWS_AS(prepare(cfg), IoError);
  fs::remove_all(cfg.out);
}

TEST_CASE("no attacks leaves only the Natural column") {
  auto cfg = tiny_config("natural");
  cfg.attacks.clear();
  const auto wb = prepare(cfg);
  const auto t = run_defense_eval(wb, cfg);
  CHECK(t.complete);
  for (const auto& c : t.cells) CHECK(c.attack == "Natural");
  CHECK(t.value("None", "None", "Natural", "accuracy") == doctest::Approx(100.0 * wb.test_accuracy));
  fs::remove_all(cfg.out);
}

TEST_CASE("zero noise without a denoiser is the base model") {
  auto cfg = tiny_config("zero");
  const auto wb = prepare(cfg);
  cfg.sweep.sigmas = {0.0};
  cfg.sweep.epsilons = {0.0};
  cfg.sweep.denoiser.kind = DenoiserKind::None;
  cfg.sweep.n = 11;  // unanimous votes give p = 2^-10 < alpha
  const auto t = sweep_sigma_eps(wb, cfg);
  REQUIRE(t.cells.size() == 1);
  CHECK(t.cells[0].attack == "Natural");
  CHECK(t.cells[0].value == doctest::Approx(100.0 * wb.test_accuracy).epsilon(1e-12));
  fs::remove_all(cfg.out);
}

TEST_CASE("defense table layout, records and determinism") {
  auto cfg = tiny_config("table");
  const auto wb = prepare(cfg);
  EvalRecords rec;
  const auto a = run_defense_eval(wb, cfg, &rec);
  const auto b = run_defense_eval(wb, cfg);
  CHECK(to_csv(a) == to_csv(b));
  REQUIRE(rec.sets.size() == 2);
  CHECK(rec.sets[1].attack == "FGSM");
  REQUIRE(rec.outcomes.size() == 1);
  CHECK(rec.outcomes[0].size() == 2);
  // base, base + MF, MedRDF rows over two columns
  CHECK(a.cells.size() == 6);
  CHECK_NOTHROW(a.value("None", "MF", "FGSM", "accuracy"));
  CHECK_NOTHROW(a.value("MedRDF s.p. 0.1", "MF", "FGSM", "accuracy"));
  CHECK(a.timings.size() == 2);

  const auto rm = rm_breakdown(rec, "MedRDF s.p. 0.1", "MF", 0, 1.0);
  for (const auto& attack : {"Natural", "FGSM"}) {
    double sum = 0.0;
    for (const auto& m : {"C&R", "C&!R", "!C&!R", "!C&R"}) sum += rm.value("MedRDF s.p. 0.1", "MF", attack, m);
    CHECK(sum == doctest::Approx(100.0).epsilon(1e-3));
  }
  fs::remove_all(cfg.out);
}

TEST_CASE("copy sweep rows and timings") {
  auto cfg = tiny_config("copies");
  const auto wb = prepare(cfg);
  cfg.sweep.copies = {10, 100};
  cfg.sweep.copy_attacks.clear();
  const auto t = sweep_copies(wb, cfg);
  CHECK_NOTHROW(t.value("n=10", "MF", "Natural", "accuracy"));
  CHECK_NOTHROW(t.value("n=100", "MF", "Natural", "accuracy"));
  CHECK(t.timings.size() == 2);
  fs::remove_all(cfg.out);
}

TEST_CASE("a stop request marks tables incomplete") {
  auto cfg = tiny_config("stop");
  const auto wb = prepare(cfg);
  request_stop();
  const auto t = run_defense_eval(wb, cfg);
  clear_stop();
  CHECK_FALSE(t.complete);
  CHECK(to_markdown(t).find("Interrupted") != std::string::npos);
  CHECK(run_defense_eval(wb, cfg).complete);
  fs::remove_all(cfg.out);
}

TEST_CASE("attack report columns") {
  auto cfg = tiny_config("attack");
  const auto wb = prepare(cfg);
  const auto t = attack_report(wb, cfg);
  CHECK(t.value("None", "None", "FGSM", "max linf x255") <= 8.0 + 1e-6);
  CHECK(t.value("None", "None", "FGSM", "mean queries") == 2.0);  // one gradient, one final check
  CHECK(t.value("None", "None", "FGSM", "accuracy") <= t.value("None", "None", "Natural", "accuracy"));
  fs::remove_all(cfg.out);
}

TEST_CASE("more iterations never hurt the attacker on the desk model") {
  const auto& wb = desk();
  CHECK(wb.test.size() == 200);
  CHECK(wb.test_accuracy >= 0.9);
  const auto cfg = ExperimentConfig::defaults();
  const double eps = 8.0 / 255;
  CHECK(success_rate(wb, cfg, AttackSpec::defaults(AttackKind::IFGSM, eps, 7)) >=
        success_rate(wb, cfg, AttackSpec::defaults(AttackKind::IFGSM, eps, 1)));
  CHECK(success_rate(wb, cfg, AttackSpec::defaults(AttackKind::PGD, eps, 20)) >=
        success_rate(wb, cfg, AttackSpec::defaults(AttackKind::PGD, eps, 7)));
  double prev = 0.0;
  for (double k : {2.0, 4.0, 8.0, 16.0}) {
    const double s = success_rate(wb, cfg, AttackSpec::defaults(AttackKind::PGD, k / 255, 7));
    CHECK(s >= prev);
    prev = s;
  }
}

}  // TEST_SUITE
