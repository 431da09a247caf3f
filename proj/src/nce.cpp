#include "ntrf/nce.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace ntrf {

double posterior_data(double log_model, double log_noise, std::size_t ratio) {
  if (ratio < 1) throw Error("posterior_data: noise ratio must be >= 1");
  if (log_model == kNegInf && log_noise == kNegInf) {
    throw Error("posterior_data: sequence has zero probability under model and noise");
  }
  if (log_noise == kNegInf) return 1.0;
  if (log_model == kNegInf) return 0.0;
  return sigmoid(log_model - std::log(static_cast<double>(ratio)) - log_noise);
}

double posterior_data(const TrfModel& model, const NoiseDistribution& noise, const Sequence& x,
                      std::size_t ratio) {
  return posterior_data(log_joint(model, x), noise.log_prob(x), ratio);
}

namespace {

// log-odds of the data class.
double logit(double log_model, double log_noise, double log_ratio) {
  return log_model - log_ratio - log_noise;
}

void check_batch(std::span<const Sequence> data, const NoiseBatch& batch) {
  if (data.empty()) throw Error("NCE: empty data batch");
  if (batch.sequences.size() != batch.ratio * data.size() ||
      batch.log_pn.size() != batch.sequences.size()) {
    throw Error("NCE: noise batch must hold ratio * |data| sequences");
  }
}

// log sigmoid(z) for data, log(1 - sigmoid(z)) for noise; handles the
// infinite logits produced by zero densities.
double log_class_prob(double z, bool data_class) {
  if (data_class) return z == kNegInf ? kNegInf : log_sigmoid(z);
  return z == std::numeric_limits<double>::infinity() ? kNegInf : log_sigmoid(-z);
}

}  // namespace

double nce_objective(const TrfModel& model, std::span<const Sequence> data,
                     const NoiseDistribution& noise, const NoiseBatch& batch) {
  check_batch(data, batch);
  const double log_ratio = std::log(static_cast<double>(batch.ratio));
  double data_term = 0.0;
  for (const auto& x : data) {
    data_term += log_class_prob(logit(log_joint(model, x), noise.log_prob(x), log_ratio), true);
  }
  double noise_term = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    noise_term += log_class_prob(
        logit(log_joint(model, batch.sequences[i]), batch.log_pn[i], log_ratio), false);
  }
  return data_term / static_cast<double>(data.size()) +
         static_cast<double>(batch.ratio) * noise_term / static_cast<double>(batch.size());
}

NceGradients nce_gradients(const TrfModel& model, std::span<const Sequence> data,
                           const NoiseDistribution& noise, const NoiseBatch& batch) {
  check_batch(data, batch);
  const double log_ratio = std::log(static_cast<double>(batch.ratio));
  const double inv_data = 1.0 / static_cast<double>(data.size());
  NceGradients out{PotentialParams::zeros(model.potential.config),
                   std::vector<double>(model.max_length(), 0.0), {}};
  auto& stats = out.stats;

  auto visit = [&](const Sequence& x, double log_pn, bool data_class) {
    const std::size_t l = x.length();
    if (!model.prior.supports(l)) {
      // Zero model density: P(C=0) = 0, a constant that carries no gradient.
      if (log_pn == kNegInf) throw Error("NCE: sequence impossible under model and noise");
      if (data_class) stats.objective = kNegInf;
      return;
    }
    PotentialCache cache = potential_forward(model.potential, x);
    const double log_p = log_joint_given_phi(model, x, cache.phi());
    const double z = logit(log_p, log_pn, log_ratio);
    const double post = log_pn == kNegInf ? 1.0 : sigmoid(z);
    double weight;
    if (data_class) {
      stats.objective += inv_data * log_class_prob(z, true);
      stats.mean_posterior_data += post * inv_data;
      weight = (1.0 - post) * inv_data;
    } else {
      stats.objective += inv_data * log_class_prob(z, false);
      stats.mean_posterior_noise += post / static_cast<double>(batch.size());
      weight = -post * inv_data;
    }
    out.zeta[l - 1] -= weight;
    potential_backward_accumulate(model.potential, cache, weight, out.theta);
  };

  for (const auto& x : data) visit(x, noise.log_prob(x), true);
  for (std::size_t i = 0; i < batch.size(); ++i) visit(batch.sequences[i], batch.log_pn[i], false);

  stats.grad_norm_theta = std::sqrt(squared_norm(std::as_const(out.theta).tensors()));
  double zz = 0.0;
  for (double g : out.zeta) zz += g * g;
  stats.grad_norm_zeta = std::sqrt(zz);
  return out;
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd") return OptimizerKind::Sgd;
  throw Error("unknown optimizer '" + std::string(name) + "' (adam, sgd)");
}

LearningSchedule parse_schedule(std::string_view name) {
  if (name == "fixed") return LearningSchedule::Fixed;
  if (name == "halve") return LearningSchedule::HalvePerEpoch;
  throw Error("unknown schedule '" + std::string(name) + "' (fixed, halve)");
}

ZetaInit parse_zeta_init(std::string_view name) {
  if (name == "l_log_v") return ZetaInit::LogVocabPerSymbol;
  if (name == "l") return ZetaInit::Length;
  if (name == "zero") return ZetaInit::Zero;
  if (name == "keep") return ZetaInit::Keep;
  throw Error("unknown zeta_init '" + std::string(name) + "' (l_log_v, l, zero, keep)");
}

std::string_view to_string(OptimizerKind v) { return v == OptimizerKind::Adam ? "adam" : "sgd"; }

std::string_view to_string(LearningSchedule v) {
  return v == LearningSchedule::Fixed ? "fixed" : "halve";
}

std::string_view to_string(ZetaInit v) {
  switch (v) {
    case ZetaInit::LogVocabPerSymbol: return "l_log_v";
    case ZetaInit::Length: return "l";
    case ZetaInit::Zero: return "zero";
    case ZetaInit::Keep: return "keep";
  }
  return "?";
}

void initialize_zeta(TrfModel& model, ZetaInit init) {
  const double log_v = std::log(static_cast<double>(model.vocab_size()));
  for (std::size_t l = 1; l <= model.zeta.size(); ++l) {
    switch (init) {
      case ZetaInit::LogVocabPerSymbol: model.zeta[l - 1] = static_cast<double>(l) * log_v; break;
      case ZetaInit::Length: model.zeta[l - 1] = static_cast<double>(l); break;
      case ZetaInit::Zero: model.zeta[l - 1] = 0.0; break;
      case ZetaInit::Keep: break;
    }
  }
}

void NceConfig::validate() const {
  if (ratio < 1) throw Error("NCE config: ratio must be >= 1");
  if (batch_size < 1) throw Error("NCE config: batch_size must be >= 1");
  if (!(lr_theta > 0.0) || !(lr_zeta > 0.0)) throw Error("NCE config: learning rates must be > 0");
}

void TrainLog::write_steps_csv(std::ostream& out) const {
  out << "step,epoch,objective,mean_posterior_data,mean_posterior_noise,grad_norm_theta,"
         "grad_norm_zeta\n";
  for (const auto& r : steps) {
    out << r.step << ',' << r.epoch << ',' << format_double(r.stats.objective) << ','
        << format_double(r.stats.mean_posterior_data) << ','
        << format_double(r.stats.mean_posterior_noise) << ','
        << format_double(r.stats.grad_norm_theta) << ',' << format_double(r.stats.grad_norm_zeta)
        << '\n';
  }
}

void TrainLog::write_epochs_csv(std::ostream& out) const {
  out << "epoch,train_nll_proxy,valid_nll,zeta_gap,mean_objective\n";
  for (const auto& r : epochs) {
    out << r.epoch << ',' << format_double(r.train_nll_proxy) << ',' << format_double(r.valid_nll)
        << ',' << format_double(r.zeta_gap) << ',' << format_double(r.mean_objective) << '\n';
  }
}

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ull;

class ParamUpdater {
 public:
  ParamUpdater(OptimizerKind kind, std::size_t size) : kind_(kind), adam_(size) {}

  void step(const std::vector<TensorRef>& params, const std::vector<ConstTensorRef>& descent,
            double lr) {
    if (kind_ == OptimizerKind::Adam) adam_.step(params, descent, lr);
    else sgd_step(params, descent, lr);
  }

 private:
  OptimizerKind kind_;
  Adam adam_;
};

EpochRecord evaluate_epoch(const TrfModel& model, std::size_t epoch,
                           std::span<const Sequence> train, std::span<const Sequence> valid,
                           const NceConfig& config, double mean_objective) {
  EpochRecord rec;
  rec.epoch = epoch;
  rec.mean_objective = mean_objective;
  rec.train_nll_proxy = nll(model, train, ZetaSource::Stored).mean;
  rec.valid_nll = std::numeric_limits<double>::quiet_NaN();
  rec.zeta_gap = std::numeric_limits<double>::quiet_NaN();
  if (config.track_exact) {
    const auto log_z = exact_log_normalizers(model, config.enumeration);
    rec.zeta_gap = zeta_gap_given(model, log_z).squared_norm;
    if (!valid.empty()) rec.valid_nll = nll_with_log_z(model, valid, log_z).mean;
  }
  return rec;
}

}  // namespace

TrainLog train_nce(TrfModel& model, const NoiseDistribution& noise,
                   std::span<const Sequence> train, std::span<const Sequence> valid,
                   const NceConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  model.validate();
  if (train.empty()) throw Error("train_nce: empty training set");
  initialize_zeta(model, config.zeta_init);

  Rng order_rng(config.seed, kShuffleStream);
  auto noise_ptr = std::shared_ptr<const NoiseDistribution>(&noise, [](const NoiseDistribution*) {});
  NoiseStream noise_stream(noise_ptr, config.seed, config.noise_mode, config.noise_producers);

  auto theta = model.potential.tensors();
  ParamUpdater theta_opt(config.theta_optimizer, total_size(theta));
  ParamUpdater zeta_opt(config.zeta_optimizer, model.zeta.size());

  TrainLog log;
  auto emit = [&](EpochRecord rec) {
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec, model);
  };
  emit(evaluate_epoch(model, 0, train, valid, config, std::numeric_limits<double>::quiet_NaN()));

  std::vector<std::size_t> order(train.size());
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double decay = config.schedule == LearningSchedule::HalvePerEpoch
                             ? std::ldexp(1.0, -static_cast<int>(epoch - 1))
                             : 1.0;
    const double lr_theta = config.lr_theta * decay;
    const double lr_zeta = config.lr_zeta * decay;
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(order);

    double objective_sum = 0.0;
    std::size_t batches = 0;
    std::vector<Sequence> data;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      data.clear();
      for (std::size_t i = start; i < end; ++i) data.push_back(train[order[i]]);
      const NoiseBatch batch = noise_stream.next(data.size(), config.ratio);
      NceGradients g = nce_gradients(model, data, noise, batch);
      ++step;

      // g.theta becomes the descent direction of -J.
      for (auto& t : g.theta.tensors()) {
        for (auto& v : t.values) v = -v;
      }
      const auto descent = std::as_const(g.theta).tensors();
      if (auto bad = first_non_finite(descent); !bad.empty()) {
        throw Error("train_nce: non-finite gradient at step " + std::to_string(step) +
                    " in parameter block '" + bad + "'");
      }
      std::vector<double> zeta_descent(model.zeta.size(), 0.0);
      for (std::size_t l = 1; l <= model.zeta.size(); ++l) {
        if (!std::isfinite(g.zeta[l - 1])) {
          throw Error("train_nce: non-finite gradient at step " + std::to_string(step) +
                      " in parameter block 'zeta'");
        }
        // Lengths outside the prior's support stay frozen.
        if (model.prior.supports(l)) zeta_descent[l - 1] = -g.zeta[l - 1];
      }

      theta_opt.step(theta, descent, lr_theta);
      // A zero descent entry leaves the Adam/SGD update of that zeta at 0.
      zeta_opt.step({TensorRef{"zeta", std::span<double>(model.zeta), 1,
                               static_cast<Eigen::Index>(model.zeta.size())}},
                    {ConstTensorRef{"zeta", std::span<const double>(zeta_descent), 1,
                                    static_cast<Eigen::Index>(zeta_descent.size())}},
                    lr_zeta);

      objective_sum += g.stats.objective;
      ++batches;
      log.steps.push_back({step, epoch, g.stats});
    }
    emit(evaluate_epoch(model, epoch, train, valid, config,
                        objective_sum / static_cast<double>(batches)));
  }
  return log;
}

}  // namespace ntrf
