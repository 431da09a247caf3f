#include "ntrf/lstm_lm.hpp"

#include <cmath>

#include "ntrf/io.hpp"

namespace ntrf {

void LstmLmConfig::validate() const {
  if (vocab_size < 3) throw Error("lstm config: vocab_size must be >= 3");
  if (embedding <= 0 || hidden <= 0 || layers <= 0) {
    throw Error("lstm config: embedding, hidden and layers must be positive");
  }
  if (max_length < 2) throw Error("lstm config: max_length must be >= 2");
}

LstmLmParams LstmLmParams::zeros(const LstmLmConfig& config) {
  config.validate();
  LstmLmParams p;
  p.config = config;
  p.embedding = Eigen::MatrixXd::Zero(config.embedding, config.vocab_size);
  int in = config.embedding;
  for (int i = 0; i < config.layers; ++i) {
    p.layers.push_back(LstmWeights::zeros(in, config.hidden));
    in = config.hidden;
  }
  p.output = Eigen::MatrixXd::Zero(config.vocab_size, config.hidden);
  p.output_bias = Eigen::VectorXd::Zero(config.vocab_size);
  return p;
}

LstmLmParams LstmLmParams::random(const LstmLmConfig& config, Rng& rng, double scale) {
  LstmLmParams p = zeros(config);
  for (auto& t : p.tensors()) {
    for (auto& v : t.values) v = rng.uniform(-scale, scale);
  }
  return p;
}

std::vector<TensorRef> LstmLmParams::tensors() {
  std::vector<TensorRef> out;
  out.push_back(tensor_ref("embedding", embedding));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].append_tensors("lstm." + std::to_string(i + 1), out);
  }
  out.push_back(tensor_ref("output.weight", output));
  out.push_back(tensor_ref("output.bias", output_bias));
  return out;
}

std::vector<ConstTensorRef> LstmLmParams::tensors() const {
  std::vector<ConstTensorRef> out;
  out.push_back(tensor_ref("embedding", embedding));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].append_tensors("lstm." + std::to_string(i + 1), out);
  }
  out.push_back(tensor_ref("output.weight", output));
  out.push_back(tensor_ref("output.bias", output_bias));
  return out;
}

nlohmann::json LstmLmParams::to_json() const {
  return {{"format", "ntrf-lstm-lm"},
          {"version", kFormatVersion},
          {"config",
           {{"vocab_size", config.vocab_size},
            {"embedding", config.embedding},
            {"hidden", config.hidden},
            {"layers", config.layers},
            {"max_length", config.max_length}}},
          {"tensors", tensors_to_json(tensors())}};
}

LstmLmParams LstmLmParams::from_json(const nlohmann::json& doc) {
  check_format(doc, "ntrf-lstm-lm", kFormatVersion);
  LstmLmConfig c;
  try {
    const auto& cfg = doc.at("config");
    c.vocab_size = cfg.at("vocab_size").get<int>();
    c.embedding = cfg.at("embedding").get<int>();
    c.hidden = cfg.at("hidden").get<int>();
    c.layers = cfg.at("layers").get<int>();
    c.max_length = cfg.at("max_length").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed lstm-lm file: ") + e.what());
  }
  LstmLmParams p = zeros(c);
  if (!doc.contains("tensors")) throw Error("malformed lstm-lm file: missing tensors");
  tensors_from_json(doc["tensors"], p.tensors());
  return p;
}

void LstmLmParams::save(const std::filesystem::path& path) const {
  write_json_atomic(path, to_json());
}

LstmLmParams LstmLmParams::load(const std::filesystem::path& path) {
  return from_json(read_json(path));
}

namespace {

struct LmPass {
  std::vector<LstmTrace> traces;
  Eigen::MatrixXd log_probs;  // V x (l-1): column t predicts x[t+1]
};

// Log-softmax over every symbol but begin; at the last admissible step only
// end remains.
void log_softmax_column(const Eigen::VectorXd& logits, bool force_end, Eigen::Ref<Eigen::VectorXd> out) {
  out.setConstant(kNegInf);
  if (force_end) {
    out(Vocabulary::kEnd) = 0.0;
    return;
  }
  double mx = kNegInf;
  for (Eigen::Index v = 1; v < logits.size(); ++v) mx = std::max(mx, logits(v));
  double sum = 0.0;
  for (Eigen::Index v = 1; v < logits.size(); ++v) sum += std::exp(logits(v) - mx);
  const double lse = mx + std::log(sum);
  for (Eigen::Index v = 1; v < logits.size(); ++v) out(v) = logits(v) - lse;
}

void check_ids(const LstmLmParams& params, const Sequence& x) {
  if (x.length() < 2) throw Error("lstm-lm: sequence needs begin and end");
  for (int id : x.ids) {
    if (id < 0 || id >= params.config.vocab_size) throw Error("lstm-lm: id out of range");
  }
}

LmPass run(const LstmLmParams& params, const Sequence& x) {
  const auto steps = static_cast<Eigen::Index>(x.length()) - 1;
  Eigen::MatrixXd inputs(params.config.embedding, steps);
  for (Eigen::Index t = 0; t < steps; ++t) {
    inputs.col(t) = params.embedding.col(x.ids[static_cast<std::size_t>(t)]);
  }
  LmPass pass;
  pass.traces.resize(params.layers.size());
  const Eigen::MatrixXd* layer_in = &inputs;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    lstm_forward(params.layers[i], *layer_in, false, pass.traces[i]);
    layer_in = &pass.traces[i].hidden;
  }
  const Eigen::MatrixXd logits =
      (params.output * (*layer_in)).colwise() + params.output_bias;
  pass.log_probs.resize(params.config.vocab_size, steps);
  for (Eigen::Index t = 0; t < steps; ++t) {
    const bool force_end = t + 2 >= params.config.max_length;
    log_softmax_column(logits.col(t), force_end, pass.log_probs.col(t));
  }
  return pass;
}

}  // namespace

double lstm_lm_logprob(const LstmLmParams& params, const Sequence& x) {
  check_ids(params, x);
  if (x.length() > static_cast<std::size_t>(params.config.max_length)) return kNegInf;
  const LmPass pass = run(params, x);
  double total = 0.0;
  for (Eigen::Index t = 0; t < pass.log_probs.cols(); ++t) {
    total += pass.log_probs(x.ids[static_cast<std::size_t>(t + 1)], t);
  }
  return total;
}

double lstm_lm_nll_gradient(const LstmLmParams& params, std::span<const Sequence> batch,
                            LstmLmParams& grad) {
  if (batch.empty()) throw Error("lstm_lm_nll_gradient: empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  double nll = 0.0;
  for (const auto& x : batch) {
    check_ids(params, x);
    if (x.length() > static_cast<std::size_t>(params.config.max_length)) {
      throw Error("lstm-lm: training sequence longer than max_length");
    }
    const LmPass pass = run(params, x);
    const Eigen::Index steps = pass.log_probs.cols();
    const Eigen::MatrixXd& top = pass.traces.back().hidden;
    // d(-log p)/dlogits = softmax - onehot on the admissible symbols.
    Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(params.config.vocab_size, steps);
    for (Eigen::Index t = 0; t < steps; ++t) {
      const int target = x.ids[static_cast<std::size_t>(t + 1)];
      nll -= scale * pass.log_probs(target, t);
      const bool force_end = t + 2 >= params.config.max_length;
      if (force_end) continue;
      for (Eigen::Index v = 1; v < d_logits.rows(); ++v) {
        d_logits(v, t) = scale * std::exp(pass.log_probs(v, t));
      }
      d_logits(target, t) -= scale;
    }
    grad.output.noalias() += d_logits * top.transpose();
    grad.output_bias += d_logits.rowwise().sum();
    Eigen::MatrixXd d_hidden = params.output.transpose() * d_logits;
    Eigen::MatrixXd d_inputs;
    for (std::size_t i = params.layers.size(); i-- > 0;) {
      lstm_backward(params.layers[i], pass.traces[i], d_hidden, grad.layers[i], d_inputs);
      d_hidden = d_inputs;
    }
    for (Eigen::Index t = 0; t < steps; ++t) {
      grad.embedding.col(x.ids[static_cast<std::size_t>(t)]) += d_hidden.col(t);
    }
  }
  return nll;
}

double lstm_lm_train_step(LstmLmParams& params, std::span<const Sequence> batch,
                          double learning_rate) {
  LstmLmParams grad = LstmLmParams::zeros(params.config);
  const double nll = lstm_lm_nll_gradient(params, batch, grad);
  if (learning_rate != 0.0) sgd_step(params.tensors(), std::as_const(grad).tensors(), learning_rate);
  return nll;
}

}  // namespace ntrf
