#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ntrf/common.hpp"
#include "ntrf/corpus.hpp"
#include "ntrf/lstm_cell.hpp"
#include "ntrf/tensor.hpp"

namespace ntrf {

struct LstmLmConfig {
  int vocab_size = 0;
  int embedding = 16;
  int hidden = 16;
  int layers = 1;
  /// Longest sequence (boundaries included) the model generates; the end
  /// symbol is forced at this length so all lengths <= max_length carry
  /// total probability one.
  int max_length = 64;

  void validate() const;
  bool operator==(const LstmLmConfig&) const = default;
};

/// Left-to-right LSTM language model. The begin symbol is never predicted.
struct LstmLmParams {
  static constexpr int kFormatVersion = 1;

  LstmLmConfig config;
  Eigen::MatrixXd embedding;  // embedding x V
  std::vector<LstmWeights> layers;
  Eigen::MatrixXd output;     // V x hidden
  Eigen::VectorXd output_bias;

  static LstmLmParams zeros(const LstmLmConfig& config);
  static LstmLmParams random(const LstmLmConfig& config, Rng& rng, double scale = 0.1);

  std::vector<TensorRef> tensors();
  std::vector<ConstTensorRef> tensors() const;

  nlohmann::json to_json() const;
  static LstmLmParams from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static LstmLmParams load(const std::filesystem::path& path);
};

/// log P(x) for a begin ... end sequence: next-symbol log-softmax summed over
/// positions 1..l-1. -inf for sequences longer than max_length.
double lstm_lm_logprob(const LstmLmParams& params, const Sequence& x);

/// Mean NLL over `batch`; accumulates the gradient of that mean into `grad`.
double lstm_lm_nll_gradient(const LstmLmParams& params, std::span<const Sequence> batch,
                            LstmLmParams& grad);

/// One plain SGD step on the mean NLL of `batch`. Returns the NLL before the
/// update.
double lstm_lm_train_step(LstmLmParams& params, std::span<const Sequence> batch,
                          double learning_rate);

}  // namespace ntrf
