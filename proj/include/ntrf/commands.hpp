#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ntrf/config.hpp"
#include "ntrf/corpus.hpp"
#include "ntrf/evalkit.hpp"
#include "ntrf/gradcheck.hpp"
#include "ntrf/nce.hpp"
#include "ntrf/trf_model.hpp"

namespace ntrf {

/// Encoded corpus splits sharing one vocabulary built from the training split.
struct CorpusData {
  Vocabulary vocab;
  std::vector<Sequence> train;
  std::vector<Sequence> valid;
  std::vector<Sequence> test;
  LengthPrior prior;  // empirical over the training split
};

CorpusData load_corpus(const ExperimentConfig& config);

struct NGramRunResult {
  std::filesystem::path model;
  double train_nll = 0.0;
  double valid_nll = 0.0;  // NaN without a validation split
};

/// Writes ngram.json, ngram.arpa, vocab.txt and ngram_metrics.csv.
NGramRunResult cmd_train_ngram(const ExperimentConfig& config, std::ostream& log);

struct LstmRunResult {
  std::filesystem::path model;
  std::vector<double> train_nll;  // per epoch, index 0 before training
  std::vector<double> valid_nll;
};

/// Writes lstm.json, vocab.txt and lstm_metrics.csv.
LstmRunResult cmd_train_lstm(const ExperimentConfig& config, std::ostream& log);

struct TrfRunResult {
  std::filesystem::path bundle;
  TrainLog log;
};

/// Writes trf.json with its potential, vocabulary and reference files,
/// noise_ngram.json, steps.csv, epochs.csv and config.ini; with
/// train.checkpoints, also checkpoints/epoch_NNN/trf.json after every epoch.
TrfRunResult cmd_train_trf(const ExperimentConfig& config, std::ostream& log);

/// Mean NLL of the lines in `data` under a saved TRF bundle.
NllReport cmd_eval(const std::filesystem::path& bundle, const std::filesystem::path& data,
                   bool exact_z, const EnumerationOptions& options, std::ostream& out);

struct RescoreSystem {
  std::string name;  // member name, "acoustic" or "combined"
  std::vector<double> weights;
  double dev_wer = 0.0;  // NaN without a dev set
  double test_wer = 0.0;
};

struct RescoreResult {
  std::vector<std::string> member_names;
  std::vector<RescoreSystem> systems;
};

/// Tunes weights on the dev lists when configured, then writes
/// rescore_wer.csv (one row per system) and rescore_best.txt
/// (`<utt-id> <best hypothesis>` under the combined weights).
RescoreResult cmd_rescore(const ExperimentConfig& config, std::ostream& log);

/// Runs the finite-difference suite and prints one line per check family.
bool cmd_gradcheck(const GradCheckSuiteConfig& config, std::ostream& out);

/// Prints `length,zeta,exact_log_z,gap` for every supported length.
ZetaGap cmd_enumerate_z(const std::filesystem::path& bundle, const EnumerationOptions& options,
                        std::ostream& out);

}  // namespace ntrf
