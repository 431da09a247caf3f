#include "ntrf/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

namespace ntrf {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

double GradCheckReport::max_rel_error() const {
  double worst_error = 0.0;
  for (const auto& b : blocks) worst_error = std::max(worst_error, b.max_rel_error);
  return worst_error;
}

const BlockCheck* GradCheckReport::worst() const {
  const BlockCheck* out = nullptr;
  for (const auto& b : blocks) {
    if (!out || b.max_rel_error > out->max_rel_error) out = &b;
  }
  return out;
}

std::size_t GradCheckReport::checked() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.checked;
  return n;
}

std::size_t GradCheckReport::skipped() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.skipped;
  return n;
}

void GradCheckReport::merge(const GradCheckReport& other) {
  for (const auto& b : other.blocks) {
    auto it = std::find_if(blocks.begin(), blocks.end(),
                           [&](const BlockCheck& mine) { return mine.name == b.name; });
    if (it == blocks.end()) {
      blocks.push_back(b);
      continue;
    }
    const std::size_t checked = it->checked + b.checked;
    const std::size_t skipped = it->skipped + b.skipped;
    if (b.max_rel_error > it->max_rel_error) *it = b;
    it->checked = checked;
    it->skipped = skipped;
  }
}

GradCheckReport finite_difference_check(const std::vector<TensorRef>& params,
                                        const std::vector<ConstTensorRef>& analytic,
                                        const ScalarFunction& f, const KinkProbe& kinks,
                                        const GradCheckOptions& options) {
  if (params.size() != analytic.size()) throw Error("gradcheck: tensor lists differ in length");
  const double h = options.step;
  const std::vector<bool> base_pattern = kinks ? kinks() : std::vector<bool>{};
  GradCheckReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto& p = params[t];
    const auto& g = analytic[t];
    if (p.name != g.name || p.values.size() != g.values.size()) {
      throw Error("gradcheck: analytic gradient layout differs at " + p.name);
    }
    BlockCheck block;
    block.name = p.name;
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const double saved = p.values[i];
      p.values[i] = saved + h;
      const double up = f();
      const bool up_kink = kinks && kinks() != base_pattern;
      p.values[i] = saved - h;
      const double down = f();
      const bool down_kink = kinks && kinks() != base_pattern;
      p.values[i] = saved;
      if (up_kink || down_kink) {
        ++block.skipped;
        continue;
      }
      const double numeric = (up - down) / (2.0 * h);
      const double a = g.values[i] * (1.0 + options.fault);
      const double err = relative_error(a, numeric, options.floor);
      ++block.checked;
      if (!(err <= block.max_rel_error)) {
        block.max_rel_error = err;
        block.worst_index = i;
        block.analytic = a;
        block.numeric = numeric;
      }
    }
    report.blocks.push_back(block);
  }
  return report;
}

namespace {

std::vector<bool> relu_patterns(const PotentialParams& params, std::span<const Sequence> xs) {
  std::vector<bool> out;
  if (!params.config.has_cnn()) return out;
  for (const auto& x : xs) {
    const auto cache = potential_forward(params, x);
    const auto p = cache.relu_pattern();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

KinkProbe kink_probe(const PotentialParams& params, std::span<const Sequence> xs) {
  if (!params.config.has_cnn()) return {};
  return [&params, xs] { return relu_patterns(params, xs); };
}

}  // namespace

GradCheckReport check_potential_gradient(const PotentialParams& params, const Sequence& x,
                                         const GradCheckOptions& options) {
  PotentialParams work = params;
  auto cache = potential_forward(work, x);
  const PotentialParams grad = potential_backward(work, cache, 1.0);
  const std::span<const Sequence> xs(&x, 1);
  return finite_difference_check(
      work.tensors(), grad.tensors(), [&] { return potential_value(work, x); },
      kink_probe(work, xs), options);
}

GradCheckReport check_lstm_lm_gradient(const LstmLmParams& params,
                                       std::span<const Sequence> batch,
                                       const GradCheckOptions& options) {
  LstmLmParams work = params;
  LstmLmParams grad = LstmLmParams::zeros(work.config);
  lstm_lm_nll_gradient(work, batch, grad);
  auto mean_nll = [&] {
    double total = 0.0;
    for (const auto& x : batch) total -= lstm_lm_logprob(work, x);
    return total / static_cast<double>(batch.size());
  };
  return finite_difference_check(work.tensors(), std::as_const(grad).tensors(), mean_nll, {},
                                 options);
}

NceGradCheck check_nce_gradient(const TrfModel& model, std::span<const Sequence> data,
                                const NoiseDistribution& noise, const NoiseBatch& batch,
                                const GradCheckOptions& options) {
  TrfModel work = model;
  const NceGradients grads = nce_gradients(work, data, noise, batch);
  auto objective = [&] { return nce_objective(work, data, noise, batch); };

  std::vector<Sequence> all(data.begin(), data.end());
  all.insert(all.end(), batch.sequences.begin(), batch.sequences.end());

  NceGradCheck out;
  out.theta = finite_difference_check(work.potential.tensors(), grads.theta.tensors(), objective,
                                      kink_probe(work.potential, all), options);
  const auto n = static_cast<Eigen::Index>(work.zeta.size());
  out.zeta = finite_difference_check(
      {TensorRef{"zeta", std::span<double>(work.zeta), n, 1}},
      {ConstTensorRef{"zeta", std::span<const double>(grads.zeta), n, 1}}, objective, {},
      options);
  return out;
}

bool GradCheckSuiteResult::passed(const GradCheckSuiteConfig& config) const {
  return potential.max_rel_error() < config.theta_tolerance &&
         lstm_lm.max_rel_error() < config.theta_tolerance &&
         nce_theta.max_rel_error() < config.theta_tolerance &&
         nce_zeta.max_rel_error() < config.zeta_tolerance;
}

namespace {

constexpr std::size_t kSuiteMaxLength = 5;

PotentialConfig suite_potential_config(std::size_t instance, int vocab, Rng& rng) {
  PotentialConfig cfg;
  cfg.vocab_size = vocab;
  cfg.hidden = 2 + static_cast<int>(rng.below(7));  // 2..8
  switch (instance % 3) {
    case 0:
      cfg.embedding = 2 + static_cast<int>(rng.below(5));
      break;
    case 1:
      cfg.embedding = 2 + static_cast<int>(rng.below(5));
      cfg.bank_width = 2;
      cfg.bank_channels = 2;
      cfg.stack_layers = 1;
      break;
    default:
      cfg.embedding = 6;
      cfg.bank_width = 3;
      cfg.bank_channels = 2;
      break;
  }
  return cfg;
}

Sequence random_sequence(int vocab, std::size_t length, Rng& rng) {
  Sequence x;
  x.ids.push_back(Vocabulary::kBegin);
  for (std::size_t i = 2; i < length; ++i) {
    x.ids.push_back(Vocabulary::kUnknown +
                    static_cast<int>(rng.below(static_cast<std::size_t>(vocab - 2))));
  }
  x.ids.push_back(Vocabulary::kEnd);
  return x;
}

}  // namespace

GradCheckSuiteResult run_gradcheck_suite(const GradCheckSuiteConfig& config) {
  GradCheckSuiteResult result;
  for (std::size_t i = 0; i < config.instances; ++i) {
    Rng rng(config.seed, i);
    const int vocab = 3 + static_cast<int>(rng.below(4));  // 3..6

    const PotentialConfig pcfg = suite_potential_config(i, vocab, rng);
    const PotentialParams params = PotentialParams::random(pcfg, rng, 0.5);

    // Potential: arbitrary id strings of every length 1..5.
    Sequence raw;
    const std::size_t raw_length = 1 + rng.below(kSuiteMaxLength);
    for (std::size_t t = 0; t < raw_length; ++t) {
      raw.ids.push_back(static_cast<int>(rng.below(static_cast<std::size_t>(vocab))));
    }
    result.potential.merge(check_potential_gradient(params, raw, config.options));

    // LSTM LM on a small batch.
    LstmLmConfig lcfg;
    lcfg.vocab_size = vocab;
    lcfg.embedding = 2 + static_cast<int>(rng.below(4));
    lcfg.hidden = 2 + static_cast<int>(rng.below(7));
    lcfg.layers = 1 + static_cast<int>(rng.below(2));
    lcfg.max_length = static_cast<int>(kSuiteMaxLength);
    const LstmLmParams lm = LstmLmParams::random(lcfg, rng, 0.5);
    std::vector<Sequence> lm_batch;
    for (int b = 0; b < 3; ++b) {
      lm_batch.push_back(random_sequence(vocab, 2 + rng.below(kSuiteMaxLength - 1), rng));
    }
    result.lstm_lm.merge(check_lstm_lm_gradient(lm, lm_batch, config.options));

    // NCE: n-gram noise over lengths 2..5, data drawn from the noise.
    std::vector<Sequence> corpus;
    for (int s = 0; s < 20; ++s) {
      corpus.push_back(random_sequence(vocab, 2 + rng.below(kSuiteMaxLength - 1), rng));
    }
    auto base = std::make_shared<const NGramModel>(
        NGramModel::train(corpus, 1 + static_cast<int>(rng.below(2)), vocab));
    std::vector<double> probs(kSuiteMaxLength, 0.0);
    double total = 0.0;
    for (std::size_t l = 2; l <= kSuiteMaxLength; ++l) {
      probs[l - 1] = 0.1 + rng.uniform();
      total += probs[l - 1];
    }
    for (auto& p : probs) p /= total;
    const NoiseDistribution noise(LengthPrior(probs), base);

    TrfModel model{params, std::vector<double>(kSuiteMaxLength, 0.0), LengthPrior(probs),
                   i % 2 == 0 ? ReferenceDistribution::uniform(vocab)
                              : ReferenceDistribution::ngram(base)};
    for (auto& z : model.zeta) z = rng.normal();
    std::vector<Sequence> data;
    for (int s = 0; s < 3; ++s) data.push_back(noise.sample(rng));
    const NoiseBatch batch = draw_noise_batch(noise, data.size(), 2, rng);
    const NceGradCheck nce = check_nce_gradient(model, data, noise, batch, config.options);
    result.nce_theta.merge(nce.theta);
    result.nce_zeta.merge(nce.zeta);
  }
  return result;
}

}  // namespace ntrf
