#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "medrdf/config.hpp"
#include "medrdf/report.hpp"

namespace medrdf {

// Data plus the base model an experiment runs against.
struct Workbench {
  Dataset train;
  Dataset test;  // truncated to eval_limit
  SmallNet model{SmallNetArch{}};
  std::optional<FitResult> fit;  // set when the model was trained in this run
  std::filesystem::path checkpoint;
  double test_accuracy = 0.0;
};

// Loads the data and either trains (saving and re-loading the checkpoint so
// later runs see bit-identical weights) or loads the configured checkpoint.
Workbench prepare(const ExperimentConfig& cfg, std::ostream* log = nullptr);

Dataset load_split(const DataSource& source, Split split, std::uint64_t synthetic_seed);

// Cooperative cancellation: long loops poll the flag, stop early and the
// tables they return are marked incomplete.
void request_stop() noexcept;
void clear_stop() noexcept;
bool stop_requested() noexcept;

// Inputs for one column: the clean test set or adversarial examples crafted
// against the base model.
struct AttackedSet {
  std::string attack;  // "Natural" or an attack label
  std::vector<ImageTensor> inputs;
  std::vector<int> base_predictions;
  std::vector<long> queries;
  bool complete = true;
};

AttackedSet natural_set(const Workbench& wb);
// Image i is attacked with seed derive_seed(<attack seed>, i).
AttackedSet craft(const Workbench& wb, const ExperimentConfig& cfg, const AttackSpec& spec);

struct DefenseOutcome {
  std::string attack;
  std::vector<Diagnosis> diagnoses;  // one per input
  bool complete = true;
};

// MedRDF on every input. Image i uses noise seed derive_seed(<noise seed>, i)
// under every attack, so columns differ only in their inputs.
DefenseOutcome defend(const Workbench& wb, const ExperimentConfig& cfg, const MedRdfConfig& medrdf,
                      const AttackedSet& set);

std::string defense_label(const MedRdfConfig& medrdf);
std::string denoiser_label(const Denoiser& d);

// Everything behind a defense table, kept for the RM breakdown.
struct EvalRecords {
  std::vector<int> labels;
  std::vector<AttackedSet> sets;  // Natural first
  // outcomes[d][s]: defense d of cfg.defenses on sets[s]
  std::vector<std::vector<DefenseOutcome>> outcomes;
};

// Rows: undefended base model, the base model behind each configured
// denoiser, then every MedRDF defense. Columns: Natural and each attack.
ReportTable run_defense_eval(const Workbench& wb, const ExperimentConfig& cfg,
                             EvalRecords* records = nullptr, std::ostream* log = nullptr);

// MedRDF accuracy over epsilon rows and sigma columns.
ReportTable sweep_sigma_eps(const Workbench& wb, const ExperimentConfig& cfg, std::ostream* log = nullptr);

// MedRDF accuracy per copy count and attack, with per-image predict time.
ReportTable sweep_copies(const Workbench& wb, const ExperimentConfig& cfg, std::ostream* log = nullptr);

// C&R / C&!R / !C&!R / !C&R percentages, where C is "MedRDF returned the
// true label" and R is "did not abstain and rm >= threshold".
ReportTable rm_breakdown(const Workbench& wb, const ExperimentConfig& cfg, std::ostream* log = nullptr);
ReportTable rm_breakdown(const EvalRecords& records, const std::string& defense,
                         const std::string& denoiser, std::size_t defense_index, double threshold);

// Undefended accuracy, success rate, queries and largest L-inf distance per attack.
ReportTable attack_report(const Workbench& wb, const ExperimentConfig& cfg, std::ostream* log = nullptr);

// "8/255" when epsilon is a whole multiple of 1/255, else the shortest decimal.
std::string format_epsilon(double epsilon);

}  // namespace medrdf
