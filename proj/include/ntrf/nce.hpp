#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ntrf/noise.hpp"
#include "ntrf/trf_model.hpp"

namespace ntrf {

/// P(C = 0 | x) = p / (p + ratio * p_n), evaluated as
/// sigmoid(log p - log ratio - log p_n). Throws if both densities are zero.
double posterior_data(double log_model, double log_noise, std::size_t ratio);
double posterior_data(const TrfModel& model, const NoiseDistribution& noise, const Sequence& x,
                      std::size_t ratio);

/// J = mean over data of log P(C=0) + ratio * mean over noise of log P(C=1).
double nce_objective(const TrfModel& model, std::span<const Sequence> data,
                     const NoiseDistribution& noise, const NoiseBatch& batch);

struct NceStepStats {
  double objective = 0.0;
  double mean_posterior_data = 0.0;   // mean P(C=0) over data
  double mean_posterior_noise = 0.0;  // mean P(C=0) over noise
  double grad_norm_theta = 0.0;
  double grad_norm_zeta = 0.0;
};

struct NceGradients {
  PotentialParams theta;     // dJ/dtheta
  std::vector<double> zeta;  // dJ/dzeta
  NceStepStats stats;
};

/// Gradients of J (for ascent). Data weights are (1 - P(C=0)) / |D|, noise
/// weights -P(C=0) / |D|.
NceGradients nce_gradients(const TrfModel& model, std::span<const Sequence> data,
                           const NoiseDistribution& noise, const NoiseBatch& batch);

enum class OptimizerKind { Sgd, Adam };
enum class LearningSchedule { Fixed, HalvePerEpoch };
enum class ZetaInit {
  LogVocabPerSymbol,  // zeta_l = l log V
  Length,             // zeta_l = l
  Zero,
  Keep,               // leave the model's zeta untouched
};

OptimizerKind parse_optimizer(std::string_view name);
LearningSchedule parse_schedule(std::string_view name);
ZetaInit parse_zeta_init(std::string_view name);
std::string_view to_string(OptimizerKind v);
std::string_view to_string(LearningSchedule v);
std::string_view to_string(ZetaInit v);

/// Sets zeta from `init` (no-op for Keep).
void initialize_zeta(TrfModel& model, ZetaInit init);

struct NceConfig {
  std::size_t ratio = 10;
  std::size_t batch_size = 10;
  OptimizerKind theta_optimizer = OptimizerKind::Adam;
  OptimizerKind zeta_optimizer = OptimizerKind::Adam;
  double lr_theta = 1e-3;
  double lr_zeta = 1e-2;
  LearningSchedule schedule = LearningSchedule::Fixed;
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
  ZetaInit zeta_init = ZetaInit::LogVocabPerSymbol;
  NoiseMode noise_mode = NoiseMode::Strict;
  unsigned noise_producers = 2;
  /// Per-epoch validation NLL and zeta gap against the exact normalizers.
  bool track_exact = false;
  EnumerationOptions enumeration;

  void validate() const;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  NceStepStats stats;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_nll_proxy = 0.0;  // mean -log p with the stored zeta
  double valid_nll = 0.0;        // exact normalizers; NaN when not tracked
  double zeta_gap = 0.0;         // squared norm; NaN when not tracked
  double mean_objective = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;

  void write_steps_csv(std::ostream& out) const;
  void write_epochs_csv(std::ostream& out) const;
};

/// Called after every epoch; epoch 0 reports the initial model.
using EpochCallback = std::function<void(const EpochRecord&, const TrfModel&)>;

/// Trains theta and zeta by descent on -J. Epochs visit the training set
/// in seeded random order, in mini-batches of config.batch_size.
TrainLog train_nce(TrfModel& model, const NoiseDistribution& noise,
                   std::span<const Sequence> train, std::span<const Sequence> valid,
                   const NceConfig& config, const EpochCallback& on_epoch = {});

}  // namespace ntrf
