#include "medrdf/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ostream>

#include "medrdf/error.hpp"
#include "medrdf/parallel.hpp"

namespace medrdf {
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop{false};

// FNV-1a, so seeds do not depend on the standard library's std::hash.
std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t attack_seed(const ExperimentConfig& cfg, const AttackSpec& spec) {
  return derive_seed(cfg.seed, fnv1a(attack_label(spec) + "@" + format_exact(spec.epsilon)));
}

std::uint64_t noise_seed(const ExperimentConfig& cfg) { return derive_seed(cfg.seed, fnv1a("medrdf-noise")); }

void say(std::ostream* log, const std::string& msg) {
  if (log) *log << msg << std::endl;
}

double percent(std::size_t hits, std::size_t total) {
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

double medrdf_accuracy(const DefenseOutcome& o, std::span<const int> labels) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < o.diagnoses.size(); ++i) hits += o.diagnoses[i].result == labels[i];
  return percent(hits, o.diagnoses.size());
}

double mean_elapsed(const DefenseOutcome& o) {
  double total = 0.0;
  for (const auto& d : o.diagnoses) total += d.elapsed;
  return o.diagnoses.empty() ? 0.0 : total / static_cast<double>(o.diagnoses.size());
}

// Base model behind a fixed denoiser, h(D(x)).
double denoised_accuracy(const Workbench& wb, const ExperimentConfig& cfg, const Denoiser& d,
                         const AttackedSet& set) {
  std::vector<int> hit(set.inputs.size(), 0);
  parallel_for(set.inputs.size(), resolve_threads(cfg.threads), [&](unsigned, std::size_t i) {
    hit[i] = predict_label(wb.model, denoise(set.inputs[i], d)) == wb.test.labels[i];
  });
  return percent(static_cast<std::size_t>(std::count(hit.begin(), hit.end(), 1)), hit.size());
}

double base_accuracy(const AttackedSet& set, std::span<const int> labels) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < set.base_predictions.size(); ++i) hits += set.base_predictions[i] == labels[i];
  return percent(hits, set.base_predictions.size());
}

std::string format_sigma(double sigma) { return format_exact(sigma); }

}  // namespace

void request_stop() noexcept { g_stop.store(true); }
void clear_stop() noexcept { g_stop.store(false); }
bool stop_requested() noexcept { return g_stop.load(); }

std::string format_epsilon(double epsilon) {
  const double k = epsilon * 255.0;
  if (std::abs(k - std::round(k)) < 1e-9) return format_exact(std::round(k)) + "/255";
  return format_exact(epsilon);
}

std::string defense_label(const MedRdfConfig& medrdf) {
  return "MedRDF " + short_label(medrdf.noise.kind) + " " + format_sigma(medrdf.noise.sigma);
}

std::string denoiser_label(const Denoiser& d) { return short_label(d.kind); }

Dataset load_split(const DataSource& source, Split split, std::uint64_t synthetic_seed) {
  switch (source.kind) {
    case SourceKind::Synthetic: {
      auto spec = source.synthetic;
      spec.seed = synthetic_seed;
      auto all = make_synthetic(spec);
      return split == Split::Train ? all.train : split == Split::Val ? all.val : all.test;
    }
    case SourceKind::Idx:
      return split == Split::Train ? load_idx(source.train_images, source.train_labels, source.num_classes, split)
                                   : load_idx(source.test_images, source.test_labels, source.num_classes, split);
    case SourceKind::Csv:
      return load_csv(split == Split::Train ? source.train_images : source.test_images, source.shape,
                      source.num_classes, split);
    case SourceKind::Directory:
      return load_image_directory(split == Split::Train ? source.train_images : source.test_images, split);
  }
  throw InvalidConfig("unknown dataset source");
}

Workbench prepare(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.validate();
  Workbench wb;
  wb.test = load_split(cfg.data, Split::Test, cfg.resolved_data_seed());
  if (wb.test.size() == 0) throw InvalidInput("test split is empty");
  if (cfg.eval_limit > 0 && wb.test.size() > cfg.eval_limit) {
    wb.test.images.resize(cfg.eval_limit);
    wb.test.labels.resize(cfg.eval_limit);
  }

  SmallNetArch arch = cfg.arch;
  arch.input = wb.test.images.front().shape();
  arch.num_classes = wb.test.num_classes;

  wb.checkpoint = cfg.checkpoint.empty() ? cfg.out / "model.ckpt" : cfg.checkpoint;
  if (cfg.train_enabled) {
    wb.train = load_split(cfg.data, Split::Train, cfg.resolved_data_seed());
    if (wb.train.images.empty()) throw InvalidInput("train split is empty");
    if (wb.train.images.front().shape() != arch.input) {
      throw InvalidInput("train images are " + to_string(wb.train.images.front().shape()) + " but test images are " +
                         to_string(arch.input));
    }
    arch.num_classes = std::max(wb.train.num_classes, wb.test.num_classes);
    wb.test.num_classes = arch.num_classes;
    TrainConfig tc = cfg.train;
    tc.seed = cfg.resolved_train_seed();
    auto net = SmallNet::initialized(arch, cfg.resolved_init_seed());
    say(log, "training " + std::to_string(tc.epochs) + " epochs on " + std::to_string(wb.train.size()) + " images");
    wb.fit = fit(net, wb.train.images, wb.train.labels, tc);
    if (wb.checkpoint.has_parent_path()) {
      std::error_code ec;
      fs::create_directories(wb.checkpoint.parent_path(), ec);
      if (ec) throw IoError("cannot create '" + wb.checkpoint.parent_path().string() + "': " + ec.message());
    }
    save_checkpoint(net, wb.checkpoint);
  }
  wb.model = load_checkpoint(wb.checkpoint);
  if (wb.model.arch().input != arch.input) {
    throw InvalidInput("checkpoint expects " + to_string(wb.model.arch().input) + " inputs but the data is " +
                       to_string(arch.input));
  }
  if (wb.model.num_classes() < wb.test.num_classes) {
    throw InvalidInput("checkpoint has " + std::to_string(wb.model.num_classes()) + " classes but the data has " +
                       std::to_string(wb.test.num_classes));
  }
  wb.test.num_classes = wb.model.num_classes();
  wb.test_accuracy = accuracy(wb.model, wb.test.images, wb.test.labels);
  say(log, "test accuracy " + format_exact(100.0 * wb.test_accuracy) + "%");
  return wb;
}

AttackedSet natural_set(const Workbench& wb) {
  AttackedSet set;
  set.attack = "Natural";
  set.inputs = wb.test.images;
  set.base_predictions = predict_labels(wb.model, set.inputs);
  set.queries.assign(set.inputs.size(), 0);
  return set;
}

AttackedSet craft(const Workbench& wb, const ExperimentConfig& cfg, const AttackSpec& spec) {
  spec.validate();
  const std::size_t n = wb.test.size();
  AttackedSet set;
  set.attack = attack_label(spec);
  set.inputs.assign(n, wb.test.images.front());
  set.base_predictions.assign(n, 0);
  set.queries.assign(n, 0);
  std::vector<char> done(n, 0);
  const auto seed = attack_seed(cfg, spec);
  parallel_for(n, resolve_threads(cfg.threads), [&](unsigned, std::size_t i) {
    if (stop_requested()) return;
    AttackSpec s = spec;
    s.seed = derive_seed(seed, i);
    auto r = run_attack(wb.model, wb.test.images[i], wb.test.labels[i], s);
    set.base_predictions[i] = predict_label(wb.model, r.adversarial);
    set.queries[i] = r.queries;
    set.inputs[i] = std::move(r.adversarial);
    done[i] = 1;
  });
  set.complete = std::all_of(done.begin(), done.end(), [](char d) { return d != 0; });
  return set;
}

DefenseOutcome defend(const Workbench& wb, const ExperimentConfig& cfg, const MedRdfConfig& medrdf,
                      const AttackedSet& set) {
  medrdf.validate(&wb.model);
  DefenseOutcome out;
  out.attack = set.attack;
  out.diagnoses.resize(set.inputs.size());
  std::vector<char> done(set.inputs.size(), 0);
  const auto seed = noise_seed(cfg);
  parallel_for(set.inputs.size(), resolve_threads(cfg.threads), [&](unsigned, std::size_t i) {
    if (stop_requested()) return;
    MedRdfConfig m = medrdf;
    m.master_seed = derive_seed(seed, i);
    m.threads = 1;
    out.diagnoses[i] = predict(wb.model, set.inputs[i], m);
    done[i] = 1;
  });
  out.complete = set.complete && std::all_of(done.begin(), done.end(), [](char d) { return d != 0; });
  return out;
}

ReportTable run_defense_eval(const Workbench& wb, const ExperimentConfig& cfg, EvalRecords* records,
                             std::ostream* log) {
  ReportTable table;
  table.name = "defense";
  table.title = "Accuracy (%) of each defense against each attack";
  EvalRecords rec;
  rec.labels = wb.test.labels;

  rec.sets.push_back(natural_set(wb));
  for (const auto& a : cfg.attacks) {
    if (stop_requested()) break;
    say(log, "crafting " + attack_label(a.spec));
    auto set = craft(wb, cfg, a.spec);
    if (!set.complete) break;
    rec.sets.push_back(std::move(set));
  }

  std::vector<Denoiser> denoisers;
  for (const auto& d : cfg.defenses) {
    if (d.medrdf.denoiser.kind == DenoiserKind::None) continue;
    const bool seen = std::any_of(denoisers.begin(), denoisers.end(), [&](const Denoiser& e) {
      return e.kind == d.medrdf.denoiser.kind && e.window == d.medrdf.denoiser.window &&
             e.smoothing_sigma == d.medrdf.denoiser.smoothing_sigma;
    });
    if (!seen) denoisers.push_back(d.medrdf.denoiser);
  }

  for (const auto& set : rec.sets) table.add("None", "None", set.attack, "accuracy", base_accuracy(set, rec.labels));
  for (const auto& d : denoisers) {
    for (const auto& set : rec.sets) {
      table.add("None", denoiser_label(d), set.attack, "accuracy", denoised_accuracy(wb, cfg, d, set));
    }
  }

  for (const auto& d : cfg.defenses) {
    rec.outcomes.emplace_back();
    const auto label = defense_label(d.medrdf);
    for (const auto& set : rec.sets) {
      if (stop_requested()) break;
      say(log, label + " + " + denoiser_label(d.medrdf.denoiser) + " on " + set.attack);
      auto o = defend(wb, cfg, d.medrdf, set);
      if (!o.complete) break;
      table.add(label, denoiser_label(d.medrdf.denoiser), set.attack, "accuracy", medrdf_accuracy(o, rec.labels));
      table.timings.push_back({label, denoiser_label(d.medrdf.denoiser), set.attack, mean_elapsed(o),
                               static_cast<long>(o.diagnoses.size())});
      rec.outcomes.back().push_back(std::move(o));
    }
  }
  table.complete = !stop_requested() && rec.sets.size() == cfg.attacks.size() + 1;
  if (records) *records = std::move(rec);
  return table;
}

ReportTable sweep_sigma_eps(const Workbench& wb, const ExperimentConfig& cfg, std::ostream* log) {
  const auto& sw = cfg.sweep;
  ReportTable table;
  table.name = "sweep_sigma";
  table.title = "MedRDF accuracy (%) over attack strength (rows) and noise level (columns)";
  table.layout = Layout::ByAttack;
  for (double eps : sw.epsilons) {
    if (stop_requested()) break;
    AttackedSet set;
    if (eps == 0.0) {
      set = natural_set(wb);
    } else {
      AttackSpec spec = sw.attack;
      spec.epsilon = eps;
      say(log, "crafting " + attack_label(spec) + " eps=" + format_epsilon(eps));
      set = craft(wb, cfg, spec);
      set.attack += " eps=" + format_epsilon(eps);
    }
    for (double sigma : sw.sigmas) {
      if (stop_requested()) break;
      MedRdfConfig m = cfg.sweep.copy_defense;
      m.noise = {sw.noise, sigma};
      m.denoiser = sw.denoiser;
      m.n = sw.n;
      auto o = defend(wb, cfg, m, set);
      if (!o.complete) break;
      table.add(short_label(sw.noise) + " " + format_sigma(sigma), denoiser_label(sw.denoiser), set.attack, "accuracy",
                medrdf_accuracy(o, wb.test.labels));
    }
  }
  table.complete = !stop_requested();
  return table;
}

ReportTable sweep_copies(const Workbench& wb, const ExperimentConfig& cfg, std::ostream* log) {
  const auto& sw = cfg.sweep;
  ReportTable table;
  table.name = "sweep_n";
  table.title = "MedRDF accuracy (%) per number of noisy copies";
  std::vector<AttackedSet> sets{natural_set(wb)};
  for (const auto& a : sw.copy_attacks) {
    if (stop_requested()) break;
    say(log, "crafting " + attack_label(a.spec));
    sets.push_back(craft(wb, cfg, a.spec));
  }
  const auto denoiser = denoiser_label(sw.copy_defense.denoiser);
  for (long n : sw.copies) {
    MedRdfConfig m = sw.copy_defense;
    m.n = n;
    const auto label = "n=" + std::to_string(n);
    double seconds = 0.0;
    std::size_t images = 0;
    for (const auto& set : sets) {
      if (stop_requested() || !set.complete) break;
      say(log, "n=" + std::to_string(n) + " on " + set.attack);
      auto o = defend(wb, cfg, m, set);
      if (!o.complete) break;
      table.add(label, denoiser, set.attack, "accuracy", medrdf_accuracy(o, wb.test.labels));
      seconds += mean_elapsed(o) * static_cast<double>(o.diagnoses.size());
      images += o.diagnoses.size();
    }
    if (images > 0) {
      table.timings.push_back({label, denoiser, "all", seconds / static_cast<double>(images), static_cast<long>(images)});
    }
  }
  table.complete = !stop_requested();
  return table;
}

ReportTable rm_breakdown(const EvalRecords& records, const std::string& defense, const std::string& denoiser,
                         std::size_t defense_index, double threshold) {
  ReportTable table;
  table.name = "rm_breakdown";
  table.title = "RM breakdown (%) at threshold " + format_exact(threshold) +
                ": C = correct, R = not abstained and RM >= threshold";
  table.layout = Layout::ByAttack;
  if (defense_index >= records.outcomes.size()) return table;
  for (const auto& o : records.outcomes[defense_index]) {
    std::size_t cr = 0, cnr = 0, ncnr = 0, ncr = 0;
    for (std::size_t i = 0; i < o.diagnoses.size(); ++i) {
      const auto& d = o.diagnoses[i];
      const bool c = d.result == records.labels[i];
      const bool r = !d.abstained() && d.rm >= threshold;
      (c ? (r ? cr : cnr) : (r ? ncr : ncnr)) += 1;
    }
    const std::size_t total = o.diagnoses.size();
    table.add(defense, denoiser, o.attack, "C&R", percent(cr, total));
    table.add(defense, denoiser, o.attack, "C&!R", percent(cnr, total));
    table.add(defense, denoiser, o.attack, "!C&!R", percent(ncnr, total));
    table.add(defense, denoiser, o.attack, "!C&R", percent(ncr, total));
  }
  return table;
}

ReportTable rm_breakdown(const Workbench& wb, const ExperimentConfig& cfg, std::ostream* log) {
  if (cfg.defenses.empty()) throw InvalidConfig("rm-report needs at least one defense");
  ExperimentConfig one = cfg;
  one.defenses.resize(1);
  EvalRecords rec;
  const auto t = run_defense_eval(wb, one, &rec, log);
  const auto& m = one.defenses.front().medrdf;
  auto table = rm_breakdown(rec, defense_label(m), denoiser_label(m.denoiser), 0,
                            cfg.resolved_rm_threshold(wb.model.num_classes()));
  table.complete = t.complete;
  return table;
}

ReportTable attack_report(const Workbench& wb, const ExperimentConfig& cfg, std::ostream* log) {
  ReportTable table;
  table.name = "attacks";
  table.title = "Undefended base model under each attack";
  table.layout = Layout::ByAttack;
  const auto natural = natural_set(wb);
  table.add("None", "None", natural.attack, "accuracy", base_accuracy(natural, wb.test.labels));
  for (const auto& a : cfg.attacks) {
    if (stop_requested()) break;
    say(log, "crafting " + attack_label(a.spec));
    const auto set = craft(wb, cfg, a.spec);
    if (!set.complete) break;
    double linf = 0.0, queries = 0.0;
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < set.inputs.size(); ++i) {
      linf = std::max(linf, linf_distance(set.inputs[i], wb.test.images[i]));
      queries += static_cast<double>(set.queries[i]);
      flipped += set.base_predictions[i] != wb.test.labels[i];
    }
    table.add("None", "None", set.attack, "accuracy", base_accuracy(set, wb.test.labels));
    table.add("None", "None", set.attack, "success rate", percent(flipped, set.inputs.size()));
    table.add("None", "None", set.attack, "mean queries", queries / static_cast<double>(set.inputs.size()));
    table.add("None", "None", set.attack, "max linf x255", linf * 255.0);
  }
  table.complete = !stop_requested();
  return table;
}

}  // namespace medrdf
