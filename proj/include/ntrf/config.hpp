#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ntrf/corpus.hpp"
#include "ntrf/gradcheck.hpp"
#include "ntrf/nce.hpp"
#include "ntrf/noise.hpp"
#include "ntrf/potential.hpp"
#include "ntrf/trf_model.hpp"

namespace ntrf {

/// Raised for invalid configuration documents; the message names the key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct CorpusSection {
  std::string train;
  std::string valid;
  std::string test;
  TokenLevel level = TokenLevel::Char;
  std::size_t max_length = 5;
  std::size_t min_count = 1;
  std::size_t max_vocab = 0;
};

struct PotentialSection {
  int embedding = 16;
  int bank_width = 0;
  int bank_channels = 0;
  int stack_layers = 0;
  int hidden = 16;
  double init_scale = 0.1;
};

struct ReferenceSection {
  ReferenceKind kind = ReferenceKind::Uniform;
  std::string model;  // n-gram or LSTM model file; empty trains an n-gram
  int order = 2;      // n-gram reference trained on the fly
};

struct NoiseSection {
  int order = 2;
  NoiseMode mode = NoiseMode::Strict;
  unsigned producers = 2;
};

struct TrainSection {
  std::size_t ratio = 10;
  std::size_t batch_size = 10;
  OptimizerKind theta_optimizer = OptimizerKind::Adam;
  OptimizerKind zeta_optimizer = OptimizerKind::Adam;
  double lr_theta = 1e-3;
  double lr_zeta = 1e-2;
  LearningSchedule schedule = LearningSchedule::Fixed;
  std::size_t epochs = 20;
  ZetaInit zeta_init = ZetaInit::LogVocabPerSymbol;
  bool track_exact = false;
  double enumeration_budget = kDefaultEnumerationBudget;
  unsigned threads = 1;
  bool checkpoints = false;
};

struct NGramSection {
  int order = 3;
};

struct LstmSection {
  int embedding = 16;
  int hidden = 16;
  int layers = 1;
  std::size_t max_length = 0;  // 0 = corpus max_length
  double lr = 0.5;
  std::size_t epochs = 10;
  std::size_t batch_size = 10;
  double init_scale = 0.1;
};

struct MemberSection {
  std::string name;
  std::string kind;  // ngram, lstm or trf
  std::string model;
  std::string vocab;  // ngram/lstm: vocabulary file; empty = vocab.txt beside the model
  double weight = 1.0;
};

struct RescoreSection {
  std::string nbest;
  std::string references;
  std::string dev_nbest;  // empty: use the configured member weights
  std::string dev_references;
  double step = 0.1;
  double max_weight = 1.0;
  double acoustic_weight = 1.0;
};

struct GradCheckSection {
  std::size_t instances = 20;
  double step = 1e-4;
  double floor = 1e-6;
  double theta_tolerance = 1e-5;
  double zeta_tolerance = 1e-6;
};

/// One experiment described by an INI document. Relative paths are resolved
/// against the directory of the config file.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";
  CorpusSection corpus;
  PotentialSection potential;
  ReferenceSection reference;
  NoiseSection noise;
  TrainSection train;
  NGramSection ngram;
  LstmSection lstm;
  RescoreSection rescore;
  std::vector<MemberSection> members;  // [member.<name>] sections, in file order
  GradCheckSection gradcheck;
  std::filesystem::path base_dir = ".";

  /// Parses and validates: unknown sections or keys, malformed values and
  /// missing input files raise ConfigError. NTRF_SEED and NTRF_OUTPUT_DIR
  /// override run.seed and run.output_dir when set.
  static ExperimentConfig load(const std::filesystem::path& path);
  static ExperimentConfig parse(const std::string& text,
                                const std::filesystem::path& base_dir = ".",
                                bool apply_environment = true);

  /// Full INI text with every key; parse(to_ini()) reproduces this config.
  std::string to_ini() const;
  void save(const std::filesystem::path& path) const;

  std::filesystem::path resolve(const std::string& path) const;
  /// Copy with every non-empty path made absolute, so it can be saved
  /// anywhere and reloaded.
  ExperimentConfig with_absolute_paths() const;
  std::filesystem::path output_path() const { return resolve(output_dir); }

  PotentialConfig potential_config(int vocab_size) const;
  NceConfig nce_config() const;
  GradCheckSuiteConfig gradcheck_config() const;
};

}  // namespace ntrf
