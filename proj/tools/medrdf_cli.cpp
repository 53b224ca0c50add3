// medrdf: train a base model, attack it, and evaluate the noisy-copy defense.
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "medrdf/error.hpp"
#include "medrdf/experiment.hpp"

using namespace medrdf;

namespace {

constexpr int kInterrupted = 130;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<unsigned> threads;
  std::optional<std::size_t> eval_limit;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "INI experiment file (built-in desk-scale defaults when omitted)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed; overrides [experiment] seed");
  cmd->add_option("--out", o.out, "output directory; overrides [experiment] out");
  cmd->add_option("--threads", o.threads, "images evaluated concurrently (0 = all cores)");
  cmd->add_option("--eval-limit", o.eval_limit, "evaluate only the first N test images (0 = all)");
}

ExperimentConfig resolve(const CommonOptions& o) {
  auto cfg = o.config.empty() ? ExperimentConfig::defaults() : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.out = o.out;
  if (o.threads) cfg.threads = *o.threads;
  if (o.eval_limit) cfg.eval_limit = *o.eval_limit;
  cfg.validate();
  return cfg;
}

void on_sigint(int) { request_stop(); }

int finish(const ReportTable& table, const ExperimentConfig& cfg) {
  for (const auto& p : emit_report(table, cfg.out)) std::cout << p.string() << '\n';
  if (!table.complete) {
    std::cerr << "interrupted: partial results written\n";
    return kInterrupted;
  }
  return 0;
}

int run_train(const CommonOptions& o) {
  auto cfg = resolve(o);
  cfg.train_enabled = true;
  const auto wb = prepare(cfg, &std::cerr);
  const auto trace = cfg.out / "train_trace.csv";
  std::ofstream out(trace, std::ios::binary);
  if (!out) throw IoError("cannot write '" + trace.string() + "'");
  out << "epoch,learning_rate,mean_loss,accuracy\n";
  for (const auto& e : wb.fit->trace) {
    out << e.epoch << ',' << format_exact(e.learning_rate) << ',' << format_exact(e.mean_loss) << ','
        << format_exact(e.accuracy) << '\n';
  }
  std::cout << wb.checkpoint.string() << '\n' << trace.string() << '\n';
  std::printf("test accuracy %.1f%%\n", 100.0 * wb.test_accuracy);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MedRDF: noisy-copy majority voting with abstention and a robust metric"};
  app.require_subcommand(1);

  struct Command {
    const char* name;
    const char* help;
  };
  const Command commands[] = {
      {"train", "train the base model and write its checkpoint and loss trace"},
      {"attack", "craft each configured attack and report undefended accuracy"},
      {"defend", "accuracy of base, denoiser-only and MedRDF defenses per attack"},
      {"sweep-sigma", "MedRDF accuracy over attack strength x noise level"},
      {"sweep-n", "MedRDF accuracy and time per image over copy counts"},
      {"rm-report", "correct/robust breakdown of MedRDF decisions"},
  };
  CommonOptions opts;
  for (const auto& c : commands) add_common(app.add_subcommand(c.name, c.help), opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code(ErrorKind::InvalidConfig);
  }

  std::signal(SIGINT, on_sigint);
  try {
    const auto* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    if (name == "train") return run_train(opts);
    const auto cfg = resolve(opts);
    const auto wb = prepare(cfg, &std::cerr);
    if (name == "attack") return finish(attack_report(wb, cfg, &std::cerr), cfg);
    if (name == "defend") return finish(run_defense_eval(wb, cfg, nullptr, &std::cerr), cfg);
    if (name == "sweep-sigma") return finish(sweep_sigma_eps(wb, cfg, &std::cerr), cfg);
    if (name == "sweep-n") return finish(sweep_copies(wb, cfg, &std::cerr), cfg);
    if (name == "rm-report") return finish(rm_breakdown(wb, cfg, &std::cerr), cfg);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
