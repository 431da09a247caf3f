#include <cmath>
#include <utility>
#include <vector>

#include <gtest/gtest.h>

#include "ntrf/gradcheck.hpp"
#include "ntrf/lstm_lm.hpp"
#include "ntrf/potential.hpp"
#include "ntrf/trf_model.hpp"
#include "test_support.hpp"

namespace ntrf {
namespace {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // [time][channel]

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Mat naive_conv(const ConvLayer& layer, const Mat& in, bool relu) {
  const int L = static_cast<int>(in.size());
  const int channels = static_cast<int>(in[0].size());
  const int out_channels = static_cast<int>(layer.bias.size());
  const int pad = (layer.width - 1) / 2;
  Mat out(L, Vec(out_channels, 0.0));
  for (int t = 0; t < L; ++t) {
    for (int o = 0; o < out_channels; ++o) {
      double s = layer.bias(o);
      for (int j = 0; j < layer.width; ++j) {
        const int src = t - pad + j;
        if (src < 0 || src >= L) continue;
        for (int c = 0; c < channels; ++c) s += layer.weight(o, j * channels + c) * in[src][c];
      }
      out[t][o] = relu ? std::max(s, 0.0) : s;
    }
  }
  return out;
}

Mat naive_lstm(const LstmWeights& w, const Mat& in, bool reversed) {
  const int L = static_cast<int>(in.size());
  const int h = static_cast<int>(w.hidden());
  Mat out(L, Vec(h, 0.0));
  Vec hp(h, 0.0), cp(h, 0.0);
  for (int step = 0; step < L; ++step) {
    const int t = reversed ? L - 1 - step : step;
    Vec z(4 * h, 0.0);
    for (int r = 0; r < 4 * h; ++r) {
      z[r] = w.bias(r);
      for (int c = 0; c < static_cast<int>(in[t].size()); ++c) z[r] += w.input(r, c) * in[t][c];
      for (int c = 0; c < h; ++c) z[r] += w.recurrent(r, c) * hp[c];
    }
    for (int r = 0; r < h; ++r) {
      const double i = logistic(z[r]), f = logistic(z[h + r]), g = std::tanh(z[2 * h + r]),
                   o = logistic(z[3 * h + r]);
      cp[r] = f * cp[r] + i * g;
      out[t][r] = o * std::tanh(cp[r]);
    }
    hp = out[t];
  }
  return out;
}

// Loop-by-loop evaluation of the potential, written without Eigen algebra.
double naive_phi(const PotentialParams& p, const std::vector<int>& ids) {
  const auto& cfg = p.config;
  const int L = static_cast<int>(ids.size());
  Mat x(L, Vec(cfg.embedding));
  for (int t = 0; t < L; ++t) {
    for (int c = 0; c < cfg.embedding; ++c) x[t][c] = p.embedding(c, ids[t]);
  }
  if (cfg.bank_width > 0) {
    Mat feature(L);
    for (const auto& layer : p.bank) {
      const Mat out = naive_conv(layer, x, true);
      for (int t = 0; t < L; ++t) feature[t].insert(feature[t].end(), out[t].begin(), out[t].end());
    }
    for (const auto& layer : p.stack) feature = naive_conv(layer, feature, true);
    for (int t = 0; t < L; ++t) {
      for (int c = 0; c < cfg.embedding; ++c) x[t][c] += feature[t][c];
    }
  }
  const Mat hf = naive_lstm(p.forward_lstm, x, false);
  const Mat hb = naive_lstm(p.backward_lstm, x, true);
  double phi = p.bias(0);
  for (int t = 0; t < L; ++t) {
    double alpha = 0.0, read = 0.0;
    for (int r = 0; r < cfg.hidden; ++r) {
      alpha += p.attention(r) * hf[t][r] + p.attention(cfg.hidden + r) * hb[t][r];
      read += p.readout(r) * hf[t][r] + p.readout(cfg.hidden + r) * hb[t][r];
    }
    phi += alpha * read;
  }
  return phi;
}

PotentialConfig small_config(int bank_width, int stack_layers) {
  PotentialConfig c;
  c.vocab_size = 5;
  c.embedding = 4;
  c.hidden = 4;
  c.bank_width = bank_width;
  c.bank_channels = bank_width > 0 ? (stack_layers > 0 ? 3 : 4 / bank_width) : 0;
  c.stack_layers = stack_layers;
  return c;
}

const std::vector<PotentialConfig>& configs() {
  static const std::vector<PotentialConfig> all = {small_config(0, 0), small_config(2, 0),
                                                   small_config(4, 0), small_config(3, 2)};
  return all;
}

Sequence random_ids(Rng& rng, int vocab, std::size_t length) {
  Sequence x;
  for (std::size_t i = 0; i < length; ++i) {
    x.ids.push_back(static_cast<int>(rng.below(static_cast<std::size_t>(vocab))));
  }
  return x;
}

TEST(Potential, MatchesLoopOracle) {
  Rng rng(1);
  for (const auto& cfg : configs()) {
    const auto p = PotentialParams::random(cfg, rng, 0.5);
    for (std::size_t l = 1; l <= 6; ++l) {
      const auto x = random_ids(rng, cfg.vocab_size, l);
      EXPECT_NEAR(potential_value(p, x), naive_phi(p, x.ids), 1e-12)
          << "bank " << cfg.bank_width << " stack " << cfg.stack_layers << " l " << l;
    }
  }
}

TEST(Potential, ZeroAttentionGivesBias) {
  Rng rng(2);
  auto p = PotentialParams::random(small_config(2, 1), rng);
  p.attention.setZero();
  p.bias(0) = 0.375;
  EXPECT_EQ(potential_value(p, random_ids(rng, 5, 4)), 0.375);
}

TEST(Potential, EveryFeatureMapKeepsTheSequenceLength) {
  Rng rng(3);
  for (const auto& cfg : configs()) {
    const auto p = PotentialParams::random(cfg, rng);
    for (std::size_t l = 1; l <= 7; ++l) {
      const auto cache = potential_forward(p, random_ids(rng, 5, l));
      EXPECT_EQ(cache.length(), l);
      for (auto n : cache.feature_lengths()) EXPECT_EQ(n, static_cast<Eigen::Index>(l));
    }
  }
}

TEST(Potential, DeterministicForFixedSeed) {
  Rng a(4), b(4);
  const auto pa = PotentialParams::random(small_config(3, 2), a);
  const auto pb = PotentialParams::random(small_config(3, 2), b);
  const Sequence x{{0, 3, 4, 2, 1}};
  EXPECT_EQ(potential_value(pa, x), potential_value(pb, x));
  EXPECT_EQ(potential_value(pa, x), potential_value(pa, x));
}

TEST(Potential, AdditiveInBias) {
  Rng rng(5);
  auto p = PotentialParams::random(small_config(2, 1), rng);
  for (int i = 0; i < 20; ++i) {
    const auto x = random_ids(rng, 5, 1 + rng.below(5));
    const double delta = rng.uniform(-3.0, 3.0);
    const double before = potential_value(p, x);
    auto shifted = p;
    shifted.bias(0) += delta;
    EXPECT_NEAR(potential_value(shifted, x), before + delta, 1e-12);
  }
}

TEST(Potential, BiasGradientIsTheUpstreamScale) {
  Rng rng(6);
  const auto p = PotentialParams::random(small_config(2, 1), rng);
  auto cache = potential_forward(p, random_ids(rng, 5, 4));
  EXPECT_EQ(potential_backward(p, cache, 0.7).bias(0), 0.7);
}

TEST(Potential, ZeroUpstreamGivesZeroGradient) {
  Rng rng(7);
  const auto p = PotentialParams::random(small_config(3, 2), rng);
  auto cache = potential_forward(p, random_ids(rng, 5, 4));
  const auto g = potential_backward(p, cache, 0.0);
  EXPECT_EQ(squared_norm(std::as_const(g).tensors()), 0.0);
}

TEST(Potential, GradientIsLinearInUpstream) {
  Rng rng(8);
  const auto p = PotentialParams::random(small_config(2, 1), rng);
  const auto x = random_ids(rng, 5, 5);
  auto c1 = potential_forward(p, x);
  auto c2 = potential_forward(p, x);
  const PotentialParams b1 = potential_backward(p, c1, 1.0);
  const PotentialParams b3 = potential_backward(p, c2, -2.5);
  const auto g1 = flatten(b1.tensors());
  const auto g3 = flatten(b3.tensors());
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g3[i], -2.5 * g1[i], 1e-14);
}

TEST(Potential, StaleOrForeignCacheIsRejected) {
  Rng rng(9);
  const auto p = PotentialParams::random(small_config(0, 0), rng);
  const auto other = PotentialParams::random(small_config(2, 0), rng);
  const auto x = random_ids(rng, 5, 3);
  auto cache = potential_forward(p, x);
  potential_backward(p, cache, 1.0);
  EXPECT_THROW(potential_backward(p, cache, 1.0), Error);
  auto fresh = potential_forward(p, x);
  EXPECT_THROW(potential_backward(other, fresh, 1.0), Error);
  PotentialCache empty;
  EXPECT_THROW(potential_backward(p, empty, 1.0), Error);
}

TEST(Potential, RejectsBadInputsAndConfigs) {
  Rng rng(10);
  const auto p = PotentialParams::random(small_config(0, 0), rng);
  EXPECT_THROW(potential_forward(p, Sequence{}), Error);
  EXPECT_THROW(potential_forward(p, Sequence{{0, 7}}), Error);
  auto c = small_config(2, 0);
  c.bank_channels = 3;  // bank output 6 != embedding 4 without a stack
  EXPECT_THROW(c.validate(), Error);
  auto d = small_config(0, 0);
  d.stack_layers = 1;
  EXPECT_THROW(d.validate(), Error);
}

TEST(Potential, FiniteDifferenceOnSmallInstance) {
  // V = 5, l = 4, d = 4.
  for (const auto& cfg : configs()) {
    Rng rng(11);
    const auto p = PotentialParams::random(cfg, rng, 0.5);
    const auto report = check_potential_gradient(p, random_ids(rng, 5, 4));
    EXPECT_LT(report.max_rel_error(), 1e-5)
        << "bank " << cfg.bank_width << " worst " << report.worst()->name;
    EXPECT_GT(report.checked(), 0u);
  }
}

TEST(Potential, FiniteDifferenceOverTwentySeeds) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const auto& cfg = configs()[seed % configs().size()];
    const auto p = PotentialParams::random(cfg, rng, 0.5);
    const auto report = check_potential_gradient(p, random_ids(rng, 5, 1 + rng.below(5)));
    EXPECT_LT(report.max_rel_error(), 1e-5) << "seed " << seed;
  }
}

TEST(Potential, SerializationRoundTrip) {
  testing::TempDir dir;
  Rng rng(12);
  const auto p = PotentialParams::random(small_config(3, 2), rng);
  p.save(dir / "p.json");
  const auto q = PotentialParams::load(dir / "p.json");
  EXPECT_EQ(q.config, p.config);
  EXPECT_EQ(flatten(std::as_const(q).tensors()), flatten(p.tensors()));
  auto doc = p.to_json();
  doc["tensors"][0]["shape"][0] = 99;
  EXPECT_THROW(PotentialParams::from_json(doc), Error);
  doc = p.to_json();
  doc["version"] = 2;
  EXPECT_THROW(PotentialParams::from_json(doc), Error);
}

LstmLmParams small_lm(int vocab, int layers, int max_length, std::uint64_t seed, double scale) {
  LstmLmConfig c;
  c.vocab_size = vocab;
  c.embedding = 3;
  c.hidden = 4;
  c.layers = layers;
  c.max_length = max_length;
  Rng rng(seed);
  return LstmLmParams::random(c, rng, scale);
}

double total_lm_mass(const LstmLmParams& lm, int vocab, int max_length) {
  double total = 0.0;
  for (int l = 2; l <= max_length; ++l) {
    for_each_sequence(vocab, static_cast<std::size_t>(l), [&](const Sequence& x) {
      total += std::exp(lstm_lm_logprob(lm, x));
    });
  }
  return total;
}

TEST(LstmLm, NormalizesOverAllLengthsUpToTheMaximum) {
  EXPECT_NEAR(total_lm_mass(small_lm(3, 1, 4, 1, 0.5), 3, 4), 1.0, 1e-6);
  EXPECT_NEAR(total_lm_mass(small_lm(5, 2, 4, 2, 1.0), 5, 4), 1.0, 1e-9);
  EXPECT_NEAR(total_lm_mass(small_lm(4, 1, 5, 3, 1.0), 4, 5), 1.0, 1e-9);
}

TEST(LstmLm, LogProbIsNonPositiveAndDeterministic) {
  const auto lm = small_lm(6, 2, 8, 4, 0.5);
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    std::vector<int> payload;
    for (std::size_t j = 0, n = rng.below(6); j < n; ++j) {
      payload.push_back(2 + static_cast<int>(rng.below(4)));
    }
    const auto x = testing::make_sequence(payload);
    const double lp = lstm_lm_logprob(lm, x);
    EXPECT_LE(lp, 0.0);
    EXPECT_EQ(lp, lstm_lm_logprob(lm, x));
  }
  EXPECT_EQ(lstm_lm_logprob(lm, testing::make_sequence({2, 2, 2, 2, 2, 2, 2})), kNegInf);
}

TEST(LstmLm, BeginIsNeverPredicted) {
  const auto lm = small_lm(5, 1, 6, 5, 0.5);
  EXPECT_EQ(lstm_lm_logprob(lm, Sequence{{0, 0, 1}}), kNegInf);
}

std::vector<Sequence> tiny_corpus() {
  using testing::make_sequence;
  return {make_sequence({3, 4}), make_sequence({3}),    make_sequence({4, 4, 3}),
          make_sequence({3, 4}), make_sequence({2, 3}), make_sequence({4}),
          make_sequence({3, 3}), make_sequence({4, 3}), make_sequence({3, 4, 4}),
          make_sequence({2})};
}

TEST(LstmLm, TrainingLowersTheNll) {
  auto lm = small_lm(5, 1, 6, 6, 0.1);
  const auto data = tiny_corpus();
  const double initial = lstm_lm_train_step(lm, data, 0.5);
  double last = initial;
  for (int i = 0; i < 99; ++i) last = lstm_lm_train_step(lm, data, 0.5);
  EXPECT_LT(last, initial);
}

TEST(LstmLm, ZeroLearningRateLeavesParameters) {
  auto lm = small_lm(5, 2, 6, 7, 0.1);
  const auto before = flatten(std::as_const(lm).tensors());
  lstm_lm_train_step(lm, tiny_corpus(), 0.0);
  EXPECT_EQ(flatten(std::as_const(lm).tensors()), before);
}

TEST(LstmLm, FiniteDifferenceGradient) {
  for (int layers = 1; layers <= 2; ++layers) {
    const auto lm = small_lm(5, layers, 6, 8 + layers, 0.5);
    const auto data = tiny_corpus();
    const auto report = check_lstm_lm_gradient(lm, std::span<const Sequence>(data).first(4));
    EXPECT_LT(report.max_rel_error(), 1e-5) << "layers " << layers;
  }
}

TEST(LstmLm, SerializationRoundTrip) {
  testing::TempDir dir;
  const auto lm = small_lm(5, 2, 6, 10, 0.3);
  lm.save(dir / "lm.json");
  const auto back = LstmLmParams::load(dir / "lm.json");
  EXPECT_EQ(back.config, lm.config);
  const auto x = testing::make_sequence({3, 4, 2});
  EXPECT_EQ(lstm_lm_logprob(back, x), lstm_lm_logprob(lm, x));
}

TEST(GradCheck, FaultInjectionIsDetected) {
  Rng rng(13);
  const auto p = PotentialParams::random(small_config(2, 1), rng, 0.5);
  GradCheckOptions options;
  options.fault = 1e-3;
  const auto report = check_potential_gradient(p, random_ids(rng, 5, 4), options);
  EXPECT_GT(report.max_rel_error(), 1e-5);
}

TEST(GradCheck, RelativeErrorUsesTheFloor) {
  EXPECT_NEAR(relative_error(1.0, 1.1, 1e-6), 0.1 / 1.1, 1e-15);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-9, 1e-6), 1e-3);
}

}  // namespace
}  // namespace ntrf
