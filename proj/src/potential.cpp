#include "ntrf/potential.hpp"

#include "ntrf/io.hpp"

namespace ntrf {

void PotentialConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw Error(std::string("potential config: ") + name + " must be positive");
  };
  if (vocab_size < 3) throw Error("potential config: vocab_size must be >= 3");
  positive(embedding, "embedding");
  positive(hidden, "hidden");
  if (bank_width < 0 || bank_channels < 0 || stack_layers < 0) {
    throw Error("potential config: negative CNN size");
  }
  if (bank_width > 0) {
    positive(bank_channels, "bank_channels");
    if (stack_layers == 0 && bank_width * bank_channels != embedding) {
      throw Error("potential config: without stacked convolutions the bank output (" +
                  std::to_string(bank_width * bank_channels) +
                  " channels) must match the embedding size for the residual add");
    }
  } else if (stack_layers > 0 || bank_channels > 0) {
    throw Error("potential config: stacked convolutions require a conv bank");
  }
}

nlohmann::json to_json(const PotentialConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"embedding", c.embedding},
          {"bank_width", c.bank_width}, {"bank_channels", c.bank_channels},
          {"stack_layers", c.stack_layers}, {"hidden", c.hidden}};
}

PotentialConfig potential_config_from_json(const nlohmann::json& doc) {
  PotentialConfig c;
  try {
    c.vocab_size = doc.at("vocab_size").get<int>();
    c.embedding = doc.at("embedding").get<int>();
    c.bank_width = doc.at("bank_width").get<int>();
    c.bank_channels = doc.at("bank_channels").get<int>();
    c.stack_layers = doc.at("stack_layers").get<int>();
    c.hidden = doc.at("hidden").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed potential config: ") + e.what());
  }
  c.validate();
  return c;
}

PotentialParams PotentialParams::zeros(const PotentialConfig& config) {
  config.validate();
  PotentialParams p;
  p.config = config;
  const int e = config.embedding;
  const int d = config.hidden;
  p.embedding = Eigen::MatrixXd::Zero(e, config.vocab_size);
  for (int k = 1; k <= config.bank_width; ++k) {
    p.bank.push_back({Eigen::MatrixXd::Zero(config.bank_channels, e * k),
                      Eigen::VectorXd::Zero(config.bank_channels), k});
  }
  int in = config.bank_width * config.bank_channels;
  for (int s = 0; s < config.stack_layers; ++s) {
    p.stack.push_back({Eigen::MatrixXd::Zero(e, in * 3), Eigen::VectorXd::Zero(e), 3});
    in = e;
  }
  p.forward_lstm = LstmWeights::zeros(e, d);
  p.backward_lstm = LstmWeights::zeros(e, d);
  p.attention = Eigen::VectorXd::Zero(2 * d);
  p.readout = Eigen::VectorXd::Zero(2 * d);
  p.bias.setZero();
  return p;
}

PotentialParams PotentialParams::random(const PotentialConfig& config, Rng& rng, double scale) {
  PotentialParams p = zeros(config);
  for (auto& t : p.tensors()) {
    for (auto& v : t.values) v = rng.uniform(-scale, scale);
  }
  return p;
}

std::vector<TensorRef> PotentialParams::tensors() {
  std::vector<TensorRef> out;
  out.push_back(tensor_ref("embedding", embedding));
  for (std::size_t k = 0; k < bank.size(); ++k) {
    const auto name = "bank." + std::to_string(k + 1);
    out.push_back(tensor_ref(name + ".weight", bank[k].weight));
    out.push_back(tensor_ref(name + ".bias", bank[k].bias));
  }
  for (std::size_t s = 0; s < stack.size(); ++s) {
    const auto name = "stack." + std::to_string(s + 1);
    out.push_back(tensor_ref(name + ".weight", stack[s].weight));
    out.push_back(tensor_ref(name + ".bias", stack[s].bias));
  }
  forward_lstm.append_tensors("blstm.forward", out);
  backward_lstm.append_tensors("blstm.backward", out);
  out.push_back(tensor_ref("attention", attention));
  out.push_back(tensor_ref("readout", readout));
  out.push_back(tensor_ref("bias", bias));
  return out;
}

std::vector<ConstTensorRef> PotentialParams::tensors() const {
  std::vector<ConstTensorRef> out;
  out.push_back(tensor_ref("embedding", embedding));
  for (std::size_t k = 0; k < bank.size(); ++k) {
    const auto name = "bank." + std::to_string(k + 1);
    out.push_back(tensor_ref(name + ".weight", bank[k].weight));
    out.push_back(tensor_ref(name + ".bias", bank[k].bias));
  }
  for (std::size_t s = 0; s < stack.size(); ++s) {
    const auto name = "stack." + std::to_string(s + 1);
    out.push_back(tensor_ref(name + ".weight", stack[s].weight));
    out.push_back(tensor_ref(name + ".bias", stack[s].bias));
  }
  forward_lstm.append_tensors("blstm.forward", out);
  backward_lstm.append_tensors("blstm.backward", out);
  out.push_back(tensor_ref("attention", attention));
  out.push_back(tensor_ref("readout", readout));
  out.push_back(tensor_ref("bias", bias));
  return out;
}

nlohmann::json PotentialParams::to_json() const {
  return {{"format", "ntrf-potential"},
          {"version", kFormatVersion},
          {"config", ntrf::to_json(config)},
          {"tensors", tensors_to_json(tensors())}};
}

PotentialParams PotentialParams::from_json(const nlohmann::json& doc) {
  check_format(doc, "ntrf-potential", kFormatVersion);
  if (!doc.contains("config") || !doc.contains("tensors")) {
    throw Error("malformed potential file: missing config or tensors");
  }
  PotentialParams p = zeros(potential_config_from_json(doc["config"]));
  tensors_from_json(doc["tensors"], p.tensors());
  if (auto bad = first_non_finite(std::as_const(p).tensors()); !bad.empty()) {
    throw Error("potential tensor '" + bad + "' holds a non-finite value");
  }
  return p;
}

void PotentialParams::save(const std::filesystem::path& path) const {
  write_json_atomic(path, to_json());
}

PotentialParams PotentialParams::load(const std::filesystem::path& path) {
  return from_json(read_json(path));
}

namespace {

int left_pad(int width) { return (width - 1) / 2; }

// Half convolution: out[:, t] = W * [in[:, t - p], ..., in[:, t - p + w - 1]] + b
// with zero columns outside the sequence.
Eigen::MatrixXd conv_forward(const ConvLayer& layer, const Eigen::MatrixXd& in) {
  const Eigen::Index L = in.cols();
  const Eigen::Index channels = in.rows();
  const int p = left_pad(layer.width);
  Eigen::MatrixXd out = layer.bias.replicate(1, L);
  for (int j = 0; j < layer.width; ++j) {
    const auto tap = layer.weight.middleCols(j * channels, channels);
    for (Eigen::Index t = 0; t < L; ++t) {
      const Eigen::Index src = t - p + j;
      if (src < 0 || src >= L) continue;
      out.col(t).noalias() += tap * in.col(src);
    }
  }
  return out;
}

void conv_backward(const ConvLayer& layer, const Eigen::MatrixXd& in, const Eigen::MatrixXd& d_out,
                   ConvLayer& grad, Eigen::MatrixXd& d_in) {
  const Eigen::Index L = in.cols();
  const Eigen::Index channels = in.rows();
  const int p = left_pad(layer.width);
  d_in.setZero(channels, L);
  grad.bias += d_out.rowwise().sum();
  for (int j = 0; j < layer.width; ++j) {
    const auto tap = layer.weight.middleCols(j * channels, channels);
    auto d_tap = grad.weight.middleCols(j * channels, channels);
    for (Eigen::Index t = 0; t < L; ++t) {
      const Eigen::Index src = t - p + j;
      if (src < 0 || src >= L) continue;
      d_tap.noalias() += d_out.col(t) * in.col(src).transpose();
      d_in.col(src).noalias() += tap.transpose() * d_out.col(t);
    }
  }
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& m) { return m.cwiseMax(0.0); }

Eigen::MatrixXd relu_grad(const Eigen::MatrixXd& pre, const Eigen::MatrixXd& d_out) {
  return (pre.array() > 0.0).select(d_out, 0.0);
}

}  // namespace

std::vector<Eigen::Index> PotentialCache::feature_lengths() const {
  std::vector<Eigen::Index> out{embedded_.cols()};
  for (const auto& m : bank_pre_) out.push_back(m.cols());
  if (config_.has_cnn()) out.push_back(bank_out_.cols());
  for (const auto& m : stack_pre_) out.push_back(m.cols());
  out.push_back(blstm_in_.cols());
  out.push_back(forward_trace_.hidden.cols());
  out.push_back(backward_trace_.hidden.cols());
  out.push_back(hidden_.cols());
  return out;
}

std::vector<bool> PotentialCache::relu_pattern() const {
  std::vector<bool> out;
  auto add = [&](const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data()[i] > 0.0);
  };
  for (const auto& m : bank_pre_) add(m);
  for (const auto& m : stack_pre_) add(m);
  return out;
}

PotentialCache potential_forward(const PotentialParams& params, const Sequence& x) {
  const auto& cfg = params.config;
  const auto L = static_cast<Eigen::Index>(x.length());
  if (L == 0) throw Error("potential_forward: empty sequence");
  if (params.embedding.rows() != cfg.embedding || params.embedding.cols() != cfg.vocab_size ||
      params.bank.size() != static_cast<std::size_t>(cfg.bank_width) ||
      params.stack.size() != static_cast<std::size_t>(cfg.stack_layers) ||
      params.attention.size() != 2 * cfg.hidden || params.readout.size() != 2 * cfg.hidden ||
      params.forward_lstm.input_size() != cfg.embedding) {
    throw Error("potential_forward: parameter dimensions do not match the configuration");
  }

  PotentialCache cache;
  cache.owner_ = &params;
  cache.config_ = cfg;
  cache.consumed_ = false;
  cache.ids_ = x.ids;
  cache.embedded_.resize(cfg.embedding, L);
  for (Eigen::Index t = 0; t < L; ++t) {
    const int id = x.ids[static_cast<std::size_t>(t)];
    if (id < 0 || id >= cfg.vocab_size) {
      throw Error("potential_forward: symbol id " + std::to_string(id) + " out of range");
    }
    cache.embedded_.col(t) = params.embedding.col(id);
  }

  if (cfg.has_cnn()) {
    const Eigen::Index f = cfg.bank_channels;
    cache.bank_out_.resize(f * cfg.bank_width, L);
    for (std::size_t k = 0; k < params.bank.size(); ++k) {
      cache.bank_pre_.push_back(conv_forward(params.bank[k], cache.embedded_));
      cache.bank_out_.middleRows(static_cast<Eigen::Index>(k) * f, f) = relu(cache.bank_pre_.back());
    }
    Eigen::MatrixXd feature = cache.bank_out_;
    for (const auto& layer : params.stack) {
      cache.stack_in_.push_back(feature);
      cache.stack_pre_.push_back(conv_forward(layer, feature));
      feature = relu(cache.stack_pre_.back());
    }
    cache.blstm_in_ = cache.embedded_ + feature;
  } else {
    cache.blstm_in_ = cache.embedded_;
  }

  lstm_forward(params.forward_lstm, cache.blstm_in_, false, cache.forward_trace_);
  lstm_forward(params.backward_lstm, cache.blstm_in_, true, cache.backward_trace_);
  const Eigen::Index d = cfg.hidden;
  cache.hidden_.resize(2 * d, L);
  cache.hidden_.topRows(d) = cache.forward_trace_.hidden;
  cache.hidden_.bottomRows(d) = cache.backward_trace_.hidden;

  const Eigen::VectorXd alpha = cache.hidden_.transpose() * params.attention;
  const Eigen::VectorXd pooled = cache.hidden_ * alpha;
  cache.phi_ = params.readout.dot(pooled) + params.bias(0);
  return cache;
}

double potential_value(const PotentialParams& params, const Sequence& x) {
  return potential_forward(params, x).phi();
}

void potential_backward_accumulate(const PotentialParams& params, PotentialCache& cache,
                                   double upstream, PotentialParams& grad) {
  if (cache.consumed_) throw Error("potential_backward: forward record already consumed");
  if (cache.owner_ != &params || !(cache.config_ == params.config)) {
    throw Error("potential_backward: forward record belongs to different parameters");
  }
  if (!(grad.config == params.config)) throw Error("potential_backward: gradient shape mismatch");
  cache.consumed_ = true;
  if (upstream == 0.0) return;

  const auto& H = cache.hidden_;
  const Eigen::VectorXd alpha = H.transpose() * params.attention;  // attention scores
  const Eigen::VectorXd read = H.transpose() * params.readout;     // readout . h_i
  grad.bias(0) += upstream;
  grad.readout.noalias() += upstream * (H * alpha);
  grad.attention.noalias() += upstream * (H * read);
  // dphi/dh_i = alpha_i * readout + (readout . h_i) * attention
  const Eigen::MatrixXd dH =
      upstream * (params.readout * alpha.transpose() + params.attention * read.transpose());

  const Eigen::Index d = params.config.hidden;
  Eigen::MatrixXd d_in_fwd, d_in_bwd;
  lstm_backward(params.forward_lstm, cache.forward_trace_, dH.topRows(d), grad.forward_lstm,
                d_in_fwd);
  lstm_backward(params.backward_lstm, cache.backward_trace_, dH.bottomRows(d),
                grad.backward_lstm, d_in_bwd);
  const Eigen::MatrixXd d_blstm_in = d_in_fwd + d_in_bwd;

  Eigen::MatrixXd d_embedded = d_blstm_in;
  if (params.config.has_cnn()) {
    Eigen::MatrixXd d_feature = d_blstm_in;
    for (std::size_t s = params.stack.size(); s-- > 0;) {
      const Eigen::MatrixXd d_pre = relu_grad(cache.stack_pre_[s], d_feature);
      conv_backward(params.stack[s], cache.stack_in_[s], d_pre, grad.stack[s], d_feature);
    }
    const Eigen::Index f = params.config.bank_channels;
    Eigen::MatrixXd d_emb_k;
    for (std::size_t k = 0; k < params.bank.size(); ++k) {
      const Eigen::MatrixXd d_pre =
          relu_grad(cache.bank_pre_[k], d_feature.middleRows(static_cast<Eigen::Index>(k) * f, f));
      conv_backward(params.bank[k], cache.embedded_, d_pre, grad.bank[k], d_emb_k);
      d_embedded += d_emb_k;
    }
  }
  for (std::size_t t = 0; t < cache.ids_.size(); ++t) {
    grad.embedding.col(cache.ids_[t]) += d_embedded.col(static_cast<Eigen::Index>(t));
  }
}

PotentialParams potential_backward(const PotentialParams& params, PotentialCache& cache,
                                   double upstream) {
  PotentialParams grad = PotentialParams::zeros(params.config);
  potential_backward_accumulate(params, cache, upstream, grad);
  return grad;
}

}  // namespace ntrf
