#include "medrdf/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "medrdf/error.hpp"

namespace medrdf {
namespace pt = boost::property_tree;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto item = trim(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::map<std::string, NamedAttack> builtin_attacks() {
  std::map<std::string, NamedAttack> m;
  auto put = [&](const std::string& name, AttackKind kind, int steps) {
    m[name] = {name, AttackSpec::defaults(kind, 8.0 / 255, steps)};
  };
  put("fgsm", AttackKind::FGSM, 1);
  put("ifgsm7", AttackKind::IFGSM, 7);
  put("pgd7", AttackKind::PGD, 7);
  put("pgd20", AttackKind::PGD, 20);
  put("cw", AttackKind::CW, 20);
  put("spsa", AttackKind::SPSA, 100);
  return m;
}

std::map<std::string, DefenseSpec> builtin_defenses() {
  std::map<std::string, DefenseSpec> m;
  auto put = [&](const std::string& name, NoiseKind noise, DenoiserKind denoiser) {
    DefenseSpec d{name, {}};
    d.medrdf.noise = {noise, 0.1};
    d.medrdf.denoiser.kind = denoiser;
    m[name] = d;
  };
  put("sp_mf", NoiseKind::SaltAndPepper, DenoiserKind::MedianFilter);
  put("sp_gs", NoiseKind::SaltAndPepper, DenoiserKind::GaussianSmoothing);
  put("gaussian_mf", NoiseKind::Gaussian, DenoiserKind::MedianFilter);
  put("gaussian_gs", NoiseKind::Gaussian, DenoiserKind::GaussianSmoothing);
  put("poisson_mf", NoiseKind::Poisson, DenoiserKind::MedianFilter);
  return m;
}

// Typed access to one INI section that rejects unknown keys.
class Section {
 public:
  Section(const pt::ptree& tree, std::string name, std::string source)
      : tree_(tree), name_(std::move(name)), source_(std::move(source)) {}

  ~Section() = default;

  bool has(const std::string& key) {
    used_.insert(key);
    return tree_.find(key) != tree_.not_found();
  }

  std::string text(const std::string& key) { return trim(tree_.get<std::string>(key)); }

  template <class F>
  auto parsed(const std::string& key, F parse) {
    const auto raw = text(key);
    try {
      return parse(raw);
    } catch (const Error& e) {
      throw InvalidConfig(where(key) + ": " + e.what());
    }
  }

  void number(const std::string& key, double& out) {
    if (has(key)) out = parsed(key, [](const std::string& s) { return parse_number(s); });
  }
  template <class Int>
  void integer(const std::string& key, Int& out) {
    if (!has(key)) return;
    const auto raw = text(key);
    long long v = 0;
    const auto r = std::from_chars(raw.data(), raw.data() + raw.size(), v);
    if (r.ec != std::errc() || r.ptr != raw.data() + raw.size()) {
      throw InvalidConfig(where(key) + ": expected an integer, got '" + raw + "'");
    }
    if constexpr (std::is_unsigned_v<Int>) {
      if (v < 0) throw InvalidConfig(where(key) + ": must be non-negative");
    }
    out = static_cast<Int>(v);
  }
  void u64(const std::string& key, std::optional<std::uint64_t>& out) {
    if (!has(key)) return;
    std::uint64_t v = 0;
    integer(key, v);
    out = v;
  }
  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    auto raw = text(key);
    std::transform(raw.begin(), raw.end(), raw.begin(), [](unsigned char c) { return std::tolower(c); });
    if (raw == "true" || raw == "yes" || raw == "on" || raw == "1") {
      out = true;
    } else if (raw == "false" || raw == "no" || raw == "off" || raw == "0") {
      out = false;
    } else {
      throw InvalidConfig(where(key) + ": expected a boolean, got '" + raw + "'");
    }
  }
  void string(const std::string& key, std::string& out) {
    if (has(key)) out = text(key);
  }
  void path(const std::string& key, std::filesystem::path& out) {
    if (has(key)) out = text(key);
  }
  std::vector<double> numbers(const std::string& key) {
    std::vector<double> out;
    for (const auto& item : split_list(text(key))) {
      out.push_back(parsed(key, [&](const std::string&) { return parse_number(item); }));
    }
    return out;
  }
  template <class Int>
  std::vector<Int> integers(const std::string& key) {
    std::vector<Int> out;
    for (const auto& item : split_list(text(key))) {
      const double v = parsed(key, [&](const std::string&) { return parse_number(item); });
      if (v != static_cast<double>(static_cast<Int>(v))) {
        throw InvalidConfig(where(key) + ": '" + item + "' is not an integer");
      }
      out.push_back(static_cast<Int>(v));
    }
    return out;
  }

  // Call once every known key has been consumed.
  void reject_unknown() const {
    for (const auto& [key, value] : tree_) {
      if (!used_.count(key)) throw InvalidConfig(source_ + ": unknown key '" + key + "' in [" + name_ + "]");
    }
  }

  std::string where(const std::string& key) const { return source_ + ": [" + name_ + "] " + key; }

 private:
  const pt::ptree& tree_;
  std::string name_;
  std::string source_;
  std::set<std::string> used_;
};

void read_attack(Section& s, AttackSpec& spec) {
  if (s.has("kind")) {
    const auto kind = s.parsed("kind", [](const std::string& v) { return parse_attack_kind(v); });
    // switching kind resets the kind-specific defaults
    spec = AttackSpec::defaults(kind, spec.epsilon, kind == AttackKind::SPSA ? 100 : spec.steps);
  }
  s.number("epsilon", spec.epsilon);
  s.integer("steps", spec.steps);
  s.number("step_size", spec.step_size);
  s.boolean("random_start", spec.random_start);
  s.number("kappa", spec.kappa);
  s.integer("spsa_batch", spec.spsa_batch);
  s.number("spsa_lr", spec.spsa_lr);
  s.number("spsa_delta", spec.spsa_delta);
  s.boolean("early_stop", spec.early_stop);
  s.reject_unknown();
}

void read_denoiser(Section& s, Denoiser& d) {
  if (s.has("denoiser")) d.kind = s.parsed("denoiser", [](const std::string& v) { return parse_denoiser_kind(v); });
  s.integer("window", d.window);
  s.number("smoothing_sigma", d.smoothing_sigma);
}

void read_defense(Section& s, MedRdfConfig& m) {
  if (s.has("noise")) m.noise.kind = s.parsed("noise", [](const std::string& v) { return parse_noise_kind(v); });
  s.number("sigma", m.noise.sigma);
  read_denoiser(s, m.denoiser);
  s.integer("n", m.n);
  s.number("alpha", m.alpha);
  s.integer("batch_size", m.batch_size);
  s.reject_unknown();
}

SourceKind parse_source(const std::string& v) {
  if (v == "synthetic") return SourceKind::Synthetic;
  if (v == "idx") return SourceKind::Idx;
  if (v == "csv") return SourceKind::Csv;
  if (v == "directory" || v == "dir") return SourceKind::Directory;
  throw InvalidConfig("unknown dataset source '" + v + "' (synthetic, idx, csv, directory)");
}

template <class T>
std::vector<T> select(const std::map<std::string, T>& known, const std::vector<std::string>& names,
                      const std::string& what) {
  std::vector<T> out;
  for (const auto& n : names) {
    const auto it = known.find(n);
    if (it == known.end()) throw InvalidConfig("unknown " + what + " '" + n + "'");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

double parse_number(std::string_view text) {
  const auto s = trim(text);
  auto one = [&](const std::string& t) {
    const auto u = trim(t);
    double v = 0.0;
    const auto r = std::from_chars(u.data(), u.data() + u.size(), v);
    if (u.empty() || r.ec != std::errc() || r.ptr != u.data() + u.size()) {
      throw InvalidConfig("expected a number, got '" + std::string(text) + "'");
    }
    return v;
  };
  const auto slash = s.find('/');
  if (slash == std::string::npos) return one(s);
  const double den = one(s.substr(slash + 1));
  if (den == 0.0) throw InvalidConfig("division by zero in '" + std::string(text) + "'");
  return one(s.substr(0, slash)) / den;
}

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig cfg;
  const auto attacks = builtin_attacks();
  cfg.attacks = select(attacks, {"ifgsm7", "pgd20", "cw"}, "attack");
  cfg.defenses = select(builtin_defenses(), {"sp_mf"}, "defense");
  cfg.sweep.copy_attacks = select(attacks, {"ifgsm7", "pgd7", "cw"}, "attack");
  cfg.sweep.copy_defense = cfg.defenses.front().medrdf;
  return cfg;
}

double ExperimentConfig::resolved_rm_threshold(int num_classes) const {
  // 1 for three classes, 3 for seven
  return rm_threshold.value_or((num_classes - 1) / 2.0);
}

void ExperimentConfig::validate() const {
  data.synthetic.validate();
  arch.validate();
  train.validate();
  if (data.kind != SourceKind::Synthetic && (data.train_images.empty() && train_enabled)) {
    throw InvalidConfig("dataset: training needs train_images");
  }
  if (data.kind != SourceKind::Synthetic && data.test_images.empty()) {
    throw InvalidConfig("dataset: test_images is required");
  }
  if (data.kind == SourceKind::Idx && (data.test_labels.empty() || (train_enabled && data.train_labels.empty()))) {
    throw InvalidConfig("dataset: idx source needs label files");
  }
  if (!train_enabled && checkpoint.empty()) {
    throw InvalidConfig("training is disabled but no checkpoint is configured");
  }
  if (rm_threshold && !(*rm_threshold >= 0.0)) throw InvalidConfig("rm_threshold must be >= 0");
  for (const auto& a : attacks) a.spec.validate();
  for (const auto& d : defenses) d.medrdf.validate();
  for (const auto& a : sweep.copy_attacks) a.spec.validate();
  sweep.copy_defense.validate();
  sweep.attack.validate();
  sweep.denoiser.validate();
  if (sweep.sigmas.empty() || sweep.epsilons.empty()) throw InvalidConfig("sweep sigmas and epsilons must be non-empty");
  if (sweep.copies.empty()) throw InvalidConfig("sweep copies must be non-empty");
  for (double s : sweep.sigmas) NoiseModel{sweep.noise, s}.validate();
  for (double e : sweep.epsilons) {
    if (!(e >= 0.0 && e <= 1.0)) throw InvalidConfig("sweep epsilons must lie in [0, 1]");
  }
  for (long n : sweep.copies) {
    if (n < 1) throw InvalidConfig("sweep copies must be >= 1");
  }
  if (sweep.n < 1) throw InvalidConfig("sweep n must be >= 1");
}

ExperimentConfig parse_config(std::string_view text, std::string_view source) {
  const std::string src(source);
  pt::ptree tree;
  {
    std::istringstream in{std::string(text)};
    try {
      pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
      throw ParseError(src + ": line " + std::to_string(e.line()) + ": " + e.message());
    }
  }

  ExperimentConfig cfg = ExperimentConfig::defaults();
  auto attacks = builtin_attacks();
  auto defenses = builtin_defenses();
  std::vector<std::string> declared_attacks, declared_defenses;
  std::optional<std::vector<std::string>> attack_names, defense_names, copy_attack_names;
  std::optional<std::string> copy_defense_name;

  const pt::ptree empty;
  auto section = [&](const std::string& name) -> const pt::ptree& {
    const auto it = tree.find(name);
    return it == tree.not_found() ? empty : it->second;
  };

  for (const auto& [name, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ParseError(src + ": key '" + name + "' appears outside any section");
    }
    static const std::set<std::string> fixed{"experiment", "dataset", "model", "train", "sweep"};
    if (fixed.count(name)) continue;
    const auto colon = name.find(':');
    const auto kind = name.substr(0, colon);
    const auto label = colon == std::string::npos ? std::string() : trim(name.substr(colon + 1));
    if (kind == "attack" && !label.empty()) {
      Section s(body, name, src);
      NamedAttack a = attacks.count(label) ? attacks[label] : NamedAttack{label, AttackSpec{}};
      a.name = label;
      read_attack(s, a.spec);
      attacks[label] = a;
      declared_attacks.push_back(label);
    } else if (kind == "defense" && !label.empty()) {
      Section s(body, name, src);
      DefenseSpec d = defenses.count(label) ? defenses[label] : DefenseSpec{label, {}};
      d.name = label;
      read_defense(s, d.medrdf);
      defenses[label] = d;
      declared_defenses.push_back(label);
    } else {
      throw InvalidConfig(src + ": unknown section [" + name + "]");
    }
  }

  {
    Section s(section("experiment"), "experiment", src);
    s.integer("seed", cfg.seed);
    s.path("out", cfg.out);
    s.integer("threads", cfg.threads);
    s.integer("eval_limit", cfg.eval_limit);
    if (s.has("rm_threshold") && s.text("rm_threshold") != "auto") {
      double v = 0;
      s.number("rm_threshold", v);
      cfg.rm_threshold = v;
    }
    if (s.has("attacks")) attack_names = split_list(s.text("attacks"));
    if (s.has("defenses")) defense_names = split_list(s.text("defenses"));
    s.reject_unknown();
  }
  {
    Section s(section("dataset"), "dataset", src);
    auto& d = cfg.data;
    if (s.has("source")) d.kind = s.parsed("source", parse_source);
    s.path("train_images", d.train_images);
    s.path("train_labels", d.train_labels);
    s.path("test_images", d.test_images);
    s.path("test_labels", d.test_labels);
    s.integer("channels", d.shape.channels);
    s.integer("height", d.shape.height);
    s.integer("width", d.shape.width);
    s.integer("num_classes", d.num_classes);
    auto& syn = d.synthetic;
    if (d.num_classes > 0) syn.num_classes = d.num_classes;
    syn.shape = d.shape;
    s.u64("seed", cfg.data_seed);
    s.integer("train", syn.train);
    s.integer("val", syn.val);
    s.integer("test", syn.test);
    s.number("background", syn.background);
    s.number("background_variation", syn.background_variation);
    s.number("blob_amplitude", syn.blob_amplitude);
    s.number("blob_radius", syn.blob_radius);
    s.number("ring_radius", syn.ring_radius);
    s.number("position_jitter", syn.position_jitter);
    s.number("texture_amplitude", syn.texture_amplitude);
    s.number("texture_density", syn.texture_density);
    s.number("pixel_noise", syn.pixel_noise);
    s.reject_unknown();
  }
  {
    Section s(section("model"), "model", src);
    s.integer("conv1_channels", cfg.arch.conv1_channels);
    s.integer("conv2_channels", cfg.arch.conv2_channels);
    s.integer("hidden", cfg.arch.hidden);
    s.path("checkpoint", cfg.checkpoint);
    s.u64("init_seed", cfg.init_seed);
    s.reject_unknown();
  }
  {
    Section s(section("train"), "train", src);
    s.boolean("enabled", cfg.train_enabled);
    s.integer("epochs", cfg.train.epochs);
    s.number("learning_rate", cfg.train.learning_rate);
    s.number("momentum", cfg.train.momentum);
    s.number("weight_decay", cfg.train.weight_decay);
    if (s.has("lr_decay_epochs")) cfg.train.lr_decay_epochs = s.integers<int>("lr_decay_epochs");
    s.number("lr_decay_factor", cfg.train.lr_decay_factor);
    s.integer("batch_size", cfg.train.batch_size);
    s.u64("seed", cfg.train_seed);
    s.reject_unknown();
  }
  {
    Section s(section("sweep"), "sweep", src);
    auto& w = cfg.sweep;
    if (s.has("sigmas")) w.sigmas = s.numbers("sigmas");
    if (s.has("epsilons")) w.epsilons = s.numbers("epsilons");
    if (s.has("noise")) w.noise = s.parsed("noise", [](const std::string& v) { return parse_noise_kind(v); });
    read_denoiser(s, w.denoiser);
    if (s.has("attack")) {
      const auto kind = s.parsed("attack", [](const std::string& v) { return parse_attack_kind(v); });
      w.attack = AttackSpec::defaults(kind, w.attack.epsilon, w.attack.steps);
    }
    s.integer("steps", w.attack.steps);
    s.integer("n", w.n);
    if (s.has("copies")) w.copies = s.integers<long>("copies");
    if (s.has("copy_attacks")) copy_attack_names = split_list(s.text("copy_attacks"));
    if (s.has("copy_defense")) copy_defense_name = s.text("copy_defense");
    s.reject_unknown();
  }

  // Declared sections replace the default selection unless names are given explicitly.
  if (attack_names) {
    cfg.attacks = select(attacks, *attack_names, "attack");
  } else if (!declared_attacks.empty()) {
    cfg.attacks = select(attacks, declared_attacks, "attack");
  }
  if (defense_names) {
    cfg.defenses = select(defenses, *defense_names, "defense");
  } else if (!declared_defenses.empty()) {
    cfg.defenses = select(defenses, declared_defenses, "defense");
  }
  if (copy_attack_names) cfg.sweep.copy_attacks = select(attacks, *copy_attack_names, "attack");
  if (copy_defense_name) {
    cfg.sweep.copy_defense = select(defenses, {*copy_defense_name}, "defense").front().medrdf;
  } else if (!cfg.defenses.empty()) {
    cfg.sweep.copy_defense = cfg.defenses.front().medrdf;
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

}  // namespace medrdf
