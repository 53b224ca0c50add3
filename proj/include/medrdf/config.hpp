#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medrdf/attacks.hpp"
#include "medrdf/dataset.hpp"
#include "medrdf/engine.hpp"
#include "medrdf/small_net.hpp"
#include "medrdf/training.hpp"

namespace medrdf {

enum class SourceKind { Synthetic, Idx, Csv, Directory };

struct DataSource {
  SourceKind kind = SourceKind::Synthetic;
  SyntheticSpec synthetic;
  // idx: image/label pairs; csv: one file per split; directory: one root per split
  std::filesystem::path train_images, train_labels;
  std::filesystem::path test_images, test_labels;
  Shape shape{1, 28, 28};  // csv only
  int num_classes = 0;     // 0 = infer from the labels
};

struct NamedAttack {
  std::string name;  // config section name
  AttackSpec spec;
};

struct DefenseSpec {
  std::string name;
  MedRdfConfig medrdf;
};

struct SweepConfig {
  // sweep-sigma: MedRDF accuracy over epsilon rows x sigma columns
  std::vector<double> sigmas{0.05, 0.1, 0.2, 0.3};
  std::vector<double> epsilons{0.0, 2.0 / 255, 4.0 / 255, 8.0 / 255, 16.0 / 255};
  NoiseKind noise = NoiseKind::SaltAndPepper;
  Denoiser denoiser;
  AttackSpec attack = AttackSpec::defaults(AttackKind::PGD, 8.0 / 255, 100);
  long n = 1000;
  // sweep-n: accuracy and time per image over copy counts
  std::vector<long> copies{100, 1000, 10000};
  std::vector<NamedAttack> copy_attacks;
  MedRdfConfig copy_defense;
};

struct ExperimentConfig {
  std::uint64_t seed = 7;
  std::filesystem::path out = "results";
  unsigned threads = 1;          // images evaluated concurrently; 0 = all cores
  std::size_t eval_limit = 0;    // 0 = the whole test split
  std::optional<double> rm_threshold;  // unset = (K - 1) / 2

  DataSource data;
  SmallNetArch arch;
  TrainConfig train;
  bool train_enabled = true;
  std::filesystem::path checkpoint;  // loaded when training is disabled
  // Explicit seeds; unset ones follow `seed`.
  std::optional<std::uint64_t> data_seed, train_seed, init_seed;

  std::vector<NamedAttack> attacks;
  std::vector<DefenseSpec> defenses;
  SweepConfig sweep;

  // Built-in desk-scale experiment used when no file is given.
  static ExperimentConfig defaults();

  std::uint64_t resolved_data_seed() const { return data_seed.value_or(seed); }
  std::uint64_t resolved_train_seed() const { return train_seed.value_or(seed); }
  std::uint64_t resolved_init_seed() const { return init_seed.value_or(seed); }
  double resolved_rm_threshold(int num_classes) const;

  void validate() const;
};

// INI text: [experiment], [dataset], [model], [train], [sweep],
// [attack:<name>] and [defense:<name>] sections. Keys absent from the text
// keep their ExperimentConfig::defaults() values; listing any attack or
// defense section replaces the default list.
ExperimentConfig parse_config(std::string_view text, std::string_view source = "config");
ExperimentConfig load_config(const std::filesystem::path& path);

// "0.031", "8/255" or "8 / 255".
double parse_number(std::string_view text);

}  // namespace medrdf
