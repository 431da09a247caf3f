#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ntrf/common.hpp"
#include "ntrf/corpus.hpp"
#include "ntrf/lstm_cell.hpp"
#include "ntrf/tensor.hpp"

namespace ntrf {

/// Sizes of the potential network. With bank_width == 0 the CNN part is
/// skipped and embeddings feed the BLSTM directly.
struct PotentialConfig {
  int vocab_size = 0;
  int embedding = 16;
  int bank_width = 0;     // filters of widths 1..bank_width
  int bank_channels = 0;  // output channels per bank width
  int stack_layers = 0;   // width-3 convolutions after the bank
  int hidden = 16;        // BLSTM units per direction

  bool has_cnn() const { return bank_width > 0; }
  /// Throws on inconsistent sizes.
  void validate() const;
  bool operator==(const PotentialConfig&) const = default;
};

nlohmann::json to_json(const PotentialConfig& config);
PotentialConfig potential_config_from_json(const nlohmann::json& doc);

/// 1-D convolution over the time axis; weight columns are grouped by tap.
struct ConvLayer {
  Eigen::MatrixXd weight;  // out x (in * width)
  Eigen::VectorXd bias;    // out
  int width = 1;
};

/// All trainable weights of the potential phi(x).
struct PotentialParams {
  static constexpr int kFormatVersion = 1;

  PotentialConfig config;
  Eigen::MatrixXd embedding;     // embedding x V, one column per symbol
  std::vector<ConvLayer> bank;   // widths 1..K
  std::vector<ConvLayer> stack;  // width 3, ends at embedding channels
  LstmWeights forward_lstm;
  LstmWeights backward_lstm;
  Eigen::VectorXd attention;     // scores alpha_i = attention . h_i
  Eigen::VectorXd readout;       // 2 * hidden
  Eigen::Matrix<double, 1, 1> bias;

  static PotentialParams zeros(const PotentialConfig& config);
  /// Every weight uniform in [-scale, scale].
  static PotentialParams random(const PotentialConfig& config, Rng& rng, double scale = 0.1);

  std::vector<TensorRef> tensors();
  std::vector<ConstTensorRef> tensors() const;

  nlohmann::json to_json() const;
  static PotentialParams from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static PotentialParams load(const std::filesystem::path& path);
};

/// Forward record for one potential evaluation. Single use: backward
/// consumes it.
class PotentialCache {
 public:
  PotentialCache() = default;

  double phi() const { return phi_; }
  std::size_t length() const { return ids_.size(); }
  /// Time dimension of every intermediate feature map, in pipeline order.
  std::vector<Eigen::Index> feature_lengths() const;
  /// Sign pattern of every ReLU pre-activation.
  std::vector<bool> relu_pattern() const;

 private:
  friend PotentialCache potential_forward(const PotentialParams&, const Sequence&);
  friend void potential_backward_accumulate(const PotentialParams&, PotentialCache&, double,
                                            PotentialParams&);

  const PotentialParams* owner_ = nullptr;
  PotentialConfig config_;
  bool consumed_ = true;
  std::vector<int> ids_;
  Eigen::MatrixXd embedded_;                 // e x l
  std::vector<Eigen::MatrixXd> bank_pre_;    // per width, pre-activation
  Eigen::MatrixXd bank_out_;                 // K*f x l
  std::vector<Eigen::MatrixXd> stack_in_;
  std::vector<Eigen::MatrixXd> stack_pre_;
  Eigen::MatrixXd blstm_in_;                 // e x l
  LstmTrace forward_trace_;
  LstmTrace backward_trace_;
  Eigen::MatrixXd hidden_;                   // 2d x l
  double phi_ = 0.0;
};

/// phi(x) = readout . sum_i alpha_i h_i + bias with alpha_i = attention . h_i.
/// Convolutions zero-pad so every feature map keeps length l.
PotentialCache potential_forward(const PotentialParams& params, const Sequence& x);

/// phi(x) only.
double potential_value(const PotentialParams& params, const Sequence& x);

/// grad += upstream * dphi/dtheta, consuming `cache`.
void potential_backward_accumulate(const PotentialParams& params, PotentialCache& cache,
                                   double upstream, PotentialParams& grad);

/// upstream * dphi/dtheta, consuming `cache`.
PotentialParams potential_backward(const PotentialParams& params, PotentialCache& cache,
                                   double upstream);

}  // namespace ntrf
