#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ntrf/lstm_lm.hpp"
#include "ntrf/nce.hpp"
#include "ntrf/noise.hpp"
#include "ntrf/potential.hpp"
#include "ntrf/tensor.hpp"
#include "ntrf/trf_model.hpp"

namespace ntrf {

struct GradCheckOptions {
  double step = 1e-4;  // central-difference half width
  /// Denominator floor of the relative error, so coordinates whose true
  /// gradient is zero are judged by absolute error.
  double floor = 1e-6;
  /// Multiplies every analytic gradient by (1 + fault); for testing the checker.
  double fault = 0.0;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
double relative_error(double analytic, double numeric, double floor);

struct BlockCheck {
  std::string name;
  std::size_t checked = 0;
  /// Coordinates whose +-step stencil crosses a ReLU kink, where the
  /// central difference does not estimate the derivative.
  std::size_t skipped = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<BlockCheck> blocks;

  double max_rel_error() const;
  /// Block with the largest error; nullptr when empty.
  const BlockCheck* worst() const;
  std::size_t checked() const;
  std::size_t skipped() const;
  /// Keeps, per block name, the worst coordinate of either report.
  void merge(const GradCheckReport& other);
};

using ScalarFunction = std::function<double()>;
/// ReLU sign pattern at the current parameter values; empty when smooth.
using KinkProbe = std::function<std::vector<bool>()>;

/// Central differences of `f` over every coordinate of `params`, compared
/// against `analytic` (same names and shapes). Parameters are restored.
GradCheckReport finite_difference_check(const std::vector<TensorRef>& params,
                                        const std::vector<ConstTensorRef>& analytic,
                                        const ScalarFunction& f, const KinkProbe& kinks,
                                        const GradCheckOptions& options);

/// d phi(x) / d theta.
GradCheckReport check_potential_gradient(const PotentialParams& params, const Sequence& x,
                                         const GradCheckOptions& options = {});

/// d (mean NLL of batch) / d params.
GradCheckReport check_lstm_lm_gradient(const LstmLmParams& params,
                                       std::span<const Sequence> batch,
                                       const GradCheckOptions& options = {});

struct NceGradCheck {
  GradCheckReport theta;
  GradCheckReport zeta;
};

/// dJ/dtheta and dJ/dzeta for fixed data and noise batches.
NceGradCheck check_nce_gradient(const TrfModel& model, std::span<const Sequence> data,
                                const NoiseDistribution& noise, const NoiseBatch& batch,
                                const GradCheckOptions& options = {});

/// Seeded random instances for the gradient suite.
struct GradCheckSuiteConfig {
  std::size_t instances = 20;
  std::uint64_t seed = 1;
  GradCheckOptions options;
  double theta_tolerance = 1e-5;
  double zeta_tolerance = 1e-6;
};

struct GradCheckSuiteResult {
  GradCheckReport potential;
  GradCheckReport lstm_lm;
  GradCheckReport nce_theta;
  GradCheckReport nce_zeta;

  bool passed(const GradCheckSuiteConfig& config) const;
};

/// Instance i uses Rng(seed, i): vocabulary of 3..6 symbols, lengths up to 5,
/// hidden sizes up to 8, and cycles through no CNN, bank + stack, and bank
/// only.
GradCheckSuiteResult run_gradcheck_suite(const GradCheckSuiteConfig& config);

}  // namespace ntrf
