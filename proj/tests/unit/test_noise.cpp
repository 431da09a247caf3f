#include <cmath>
#include <map>
#include <memory>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "ntrf/noise.hpp"
#include "ntrf/trf_model.hpp"
#include "test_support.hpp"

namespace ntrf {
namespace {

using testing::make_sequence;

std::shared_ptr<const NGramModel> train_base(int order, int vocab,
                                             const std::vector<Sequence>& corpus) {
  return std::make_shared<NGramModel>(NGramModel::train(corpus, order, vocab));
}

std::vector<Sequence> small_corpus() {
  return {make_sequence({2, 3}), make_sequence({3}), make_sequence({4, 4, 3}),
          make_sequence({3, 4}), make_sequence({4}), make_sequence({2, 4, 3})};
}

TEST(NoiseDistribution, SymmetricUnigramSinglePayloadSlot) {
  // Both payload symbols are seen once, so the unigram is symmetric in them.
  const auto base = train_base(1, 4, {make_sequence({2}), make_sequence({3})});
  const NoiseDistribution noise(LengthPrior({0.0, 0.0, 1.0}), base);
  EXPECT_NEAR(noise.log_prob(make_sequence({3})), std::log(0.5), 1e-15);
  EXPECT_NEAR(noise.log_prob(make_sequence({2})), std::log(0.5), 1e-15);
}

TEST(NoiseDistribution, ZeroPriorGivesNegativeInfinity) {
  const NoiseDistribution noise(LengthPrior({0.0, 0.5, 0.5}), train_base(2, 5, small_corpus()));
  EXPECT_EQ(noise.log_prob(make_sequence({2, 3, 4})), kNegInf);
  EXPECT_TRUE(std::isfinite(noise.log_prob(make_sequence({2}))));
}

TEST(NoiseDistribution, TotalMassIsOne) {
  for (int order = 1; order <= 3; ++order) {
    const NoiseDistribution noise(LengthPrior({0.0, 0.1, 0.2, 0.3, 0.4}),
                                  train_base(order, 5, small_corpus()));
    double total = 0.0;
    for (std::size_t l = 2; l <= 5; ++l) {
      for_each_sequence(5, l, [&](const Sequence& x) { total += std::exp(noise.log_prob(x)); });
    }
    EXPECT_NEAR(total, 1.0, 1e-9) << "order " << order;
  }
}

TEST(DrawNoiseBatch, SizeIsRatioTimesBatch) {
  const NoiseDistribution noise(LengthPrior({0.0, 0.3, 0.7}), train_base(2, 5, small_corpus()));
  Rng rng(1);
  const auto batch = draw_noise_batch(noise, 10, 20, rng);
  EXPECT_EQ(batch.size(), 200u);
  EXPECT_EQ(batch.log_pn.size(), 200u);
  EXPECT_EQ(batch.ratio, 20u);
}

TEST(DrawNoiseBatch, RecordedDensityEqualsRecomputation) {
  const NoiseDistribution noise(LengthPrior({0.0, 0.2, 0.3, 0.5}),
                                train_base(2, 6, small_corpus()));
  Rng rng(2);
  const auto batch = draw_noise_batch(noise, 7, 5, rng);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    EXPECT_TRUE(std::isfinite(batch.log_pn[i]));
    EXPECT_EQ(batch.log_pn[i], noise.log_prob(batch.sequences[i]));
    EXPECT_TRUE(has_boundaries(batch.sequences[i]));
  }
}

TEST(DrawNoiseBatch, SameSeedSameBatch) {
  const NoiseDistribution noise(LengthPrior({0.0, 0.2, 0.3, 0.5}),
                                train_base(3, 5, small_corpus()));
  Rng a(3), b(3);
  const auto x = draw_noise_batch(noise, 5, 10, a);
  const auto y = draw_noise_batch(noise, 5, 10, b);
  EXPECT_EQ(x.sequences, y.sequences);
  EXPECT_EQ(x.log_pn, y.log_pn);
}

TEST(DrawNoiseBatch, LengthHistogramMatchesPrior) {
  const std::vector<double> prior = {0.0, 0.1, 0.25, 0.4, 0.25};
  const NoiseDistribution noise{LengthPrior(prior), train_base(2, 5, small_corpus())};
  Rng rng(4);
  const auto batch = draw_noise_batch(noise, 10000, 10, rng);
  std::vector<double> observed(prior.size(), 0.0), expected(prior.size(), 0.0);
  for (const auto& x : batch.sequences) observed[x.length() - 1] += 1.0;
  for (std::size_t i = 0; i < prior.size(); ++i) expected[i] = prior[i] * 100000.0;
  EXPECT_GT(testing::chi_square_p_value(expected, observed), 0.01);
}

TEST(DrawNoiseBatch, SamplesFollowTheScoredDistribution) {
  const NoiseDistribution noise(LengthPrior({0.0, 0.2, 0.8}), train_base(2, 5, small_corpus()));
  std::map<std::vector<int>, double> expected;
  for (std::size_t l = 2; l <= 3; ++l) {
    for_each_sequence(5, l, [&](const Sequence& x) {
      expected[x.ids] = 100000.0 * std::exp(noise.log_prob(x));
    });
  }
  Rng rng(5);
  std::map<std::vector<int>, double> counts;
  for (const auto& x : draw_noise_batch(noise, 100000, 1, rng).sequences) counts[x.ids] += 1.0;
  std::vector<double> e, o;
  for (const auto& [ids, n] : expected) {
    e.push_back(n);
    o.push_back(counts[ids]);
  }
  EXPECT_EQ(counts.size(), expected.size());
  EXPECT_GT(testing::chi_square_p_value(e, o), 0.01);
}

TEST(NoiseStream, StrictModeIsReproducible) {
  auto noise = std::make_shared<const NoiseDistribution>(LengthPrior({0.0, 0.5, 0.5}),
                                                         train_base(2, 5, small_corpus()));
  NoiseStream a(noise, 7), b(noise, 7), c(noise, 8);
  bool differs = false;
  for (int i = 0; i < 5; ++i) {
    const auto x = a.next(4, 3);
    const auto y = b.next(4, 3);
    EXPECT_EQ(x.sequences, y.sequences);
    differs |= c.next(4, 3).sequences != x.sequences;
  }
  EXPECT_TRUE(differs);
}

TEST(NoiseStream, AsyncModeDeliversValidBatches) {
  auto noise = std::make_shared<const NoiseDistribution>(LengthPrior({0.0, 0.3, 0.3, 0.4}),
                                                         train_base(2, 5, small_corpus()));
  NoiseStream stream(noise, 9, NoiseMode::Async, 3, 4);
  for (int i = 0; i < 20; ++i) {
    const auto batch = stream.next(1 + static_cast<std::size_t>(i % 4), 5);
    ASSERT_EQ(batch.size(), 5u * (1 + static_cast<std::size_t>(i % 4)));
    for (std::size_t j = 0; j < batch.size(); ++j) {
      EXPECT_EQ(batch.log_pn[j], noise->log_prob(batch.sequences[j]));
    }
  }
}

TEST(NoiseStream, AsyncShutdownWithFullQueue) {
  auto noise = std::make_shared<const NoiseDistribution>(LengthPrior({0.0, 1.0}),
                                                         train_base(1, 5, small_corpus()));
  { NoiseStream stream(noise, 1, NoiseMode::Async, 2, 1); }
  SUCCEED();
}

TEST(NoiseMode, ParseAndPrint) {
  EXPECT_EQ(parse_noise_mode("strict"), NoiseMode::Strict);
  EXPECT_EQ(parse_noise_mode("async"), NoiseMode::Async);
  EXPECT_EQ(to_string(NoiseMode::Async), "async");
  EXPECT_THROW(parse_noise_mode("fast"), Error);
}

TEST(BoundedQueue, FifoOrderAndClose) {
  BoundedQueue<int> q(2);
  std::jthread producer([&] {
    for (int i = 0; i < 100; ++i) q.push(i);
    q.close();
  });
  for (int i = 0; i < 100; ++i) EXPECT_EQ(q.pop(), i);
  EXPECT_EQ(q.pop(), std::nullopt);
  EXPECT_FALSE(q.push(5));
}

}  // namespace
}  // namespace ntrf
