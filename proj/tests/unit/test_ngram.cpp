#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "ntrf/ngram.hpp"
#include "ntrf/trf_model.hpp"
#include "test_support.hpp"

namespace ntrf {
namespace {

using testing::make_sequence;

constexpr int kA = 3;
constexpr int kB = 4;
constexpr int kEnd = Vocabulary::kEnd;
constexpr int kBeg = Vocabulary::kBegin;

// Five sentences over {a, b}: "a b", "a", "b b", "a b", "b".
std::vector<Sequence> toy_corpus() {
  return {make_sequence({kA, kB}), make_sequence({kA}), make_sequence({kB, kB}),
          make_sequence({kA, kB}), make_sequence({kB})};
}

std::vector<Sequence> random_corpus(Rng& rng, int vocab, std::size_t n, std::size_t max_payload) {
  std::vector<Sequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> payload;
    for (std::size_t j = 0, len = rng.below(max_payload + 1); j < len; ++j) {
      payload.push_back(2 + static_cast<int>(rng.below(static_cast<std::size_t>(vocab - 2))));
    }
    out.push_back(make_sequence(payload));
  }
  return out;
}

TEST(NGram, HandExpandedBigramKneserNey) {
  const auto m = NGramModel::train(toy_corpus(), 2, 5);
  // Bigram count-of-counts: n1 = 2, n2 = 2. Continuation counts of the
  // unigram level: a 1, b 3, </s> 2 (n1 = 1, n2 = 1).
  EXPECT_DOUBLE_EQ(m.discount(2), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.discount(1), 1.0 / 3.0);

  const std::vector<int> none;
  EXPECT_NEAR(m.prob(none, kA), 11.0 / 72.0, 1e-15);
  EXPECT_NEAR(m.prob(none, kB), 35.0 / 72.0, 1e-15);
  EXPECT_NEAR(m.prob(none, kEnd), 23.0 / 72.0, 1e-15);
  EXPECT_NEAR(m.prob(none, Vocabulary::kUnknown), 3.0 / 72.0, 1e-15);
  EXPECT_EQ(m.prob(none, kBeg), 0.0);

  const std::vector<int> after_a = {kA};
  EXPECT_NEAR(m.prob(after_a, kB), 430.0 / 648.0, 1e-15);
  EXPECT_NEAR(m.prob(after_a, kA), 22.0 / 648.0, 1e-15);
  EXPECT_NEAR(m.prob(after_a, kEnd), 190.0 / 648.0, 1e-15);
  EXPECT_NEAR(m.prob(after_a, Vocabulary::kUnknown), 6.0 / 648.0, 1e-15);

  const std::vector<int> after_begin = {kBeg};
  EXPECT_NEAR(m.prob(after_begin, kA), 598.0 / 1080.0, 1e-15);
  EXPECT_NEAR(m.prob(after_begin, kEnd), 46.0 / 1080.0, 1e-15);
}

TEST(NGram, HandComputedFixedLengthChain) {
  const auto m = NGramModel::train(toy_corpus(), 2, 5);
  EXPECT_NEAR(m.logprob_fixed_length(make_sequence({kA})), std::log(598.0 / 1034.0), 1e-14);
  EXPECT_NEAR(m.logprob_fixed_length(make_sequence({kA, kB})),
              std::log(598.0 / 1034.0 * 430.0 / 458.0), 1e-14);
  // Only the end symbol fits after begin at length 2.
  EXPECT_EQ(m.logprob_fixed_length(make_sequence({})), 0.0);
}

TEST(NGram, UnseenContextBacksOffToUnigram) {
  const auto m = NGramModel::train(toy_corpus(), 2, 5);
  const std::vector<int> unseen = {Vocabulary::kUnknown};
  const std::vector<int> none;
  for (int w = 0; w < 5; ++w) EXPECT_DOUBLE_EQ(m.prob(unseen, w), m.prob(none, w));
  const std::vector<int> long_context = {kA, kB, kA, kB};
  const std::vector<int> last = {kB};
  for (int w = 0; w < 5; ++w) EXPECT_DOUBLE_EQ(m.prob(long_context, w), m.prob(last, w));
}

TEST(NGram, UnigramFromSingleSequence) {
  const std::vector<Sequence> data = {make_sequence({kA})};
  const auto m = NGramModel::train(data, 1, 5);
  const std::vector<int> none;
  EXPECT_GT(m.prob(none, kA), 0.0);
  EXPECT_GT(m.prob(none, kEnd), 0.0);
}

TEST(NGram, DiscountingPreservesCountOrder) {
  std::vector<Sequence> data(3, make_sequence({kA, kB}));
  data.push_back(make_sequence({kA, kA}));
  const auto m = NGramModel::train(data, 2, 5);
  const std::vector<int> ctx = {kA};
  EXPECT_GT(m.prob(ctx, kB), m.prob(ctx, kA));
}

TEST(NGram, RejectsBadArguments) {
  EXPECT_THROW(NGramModel::train(toy_corpus(), 0, 5), Error);
  EXPECT_THROW(NGramModel::train(std::vector<Sequence>{}, 2, 5), Error);
  EXPECT_THROW(NGramModel::train(toy_corpus(), 2, 4), Error);
}

TEST(NGram, ConditionalsNormalizeForRandomContexts) {
  Rng rng(21);
  for (int order = 1; order <= 4; ++order) {
    const auto data = random_corpus(rng, 7, 40, 6);
    const auto m = NGramModel::train(data, order, 7);
    for (int i = 0; i < 100; ++i) {
      std::vector<int> ctx = {kBeg};
      for (std::size_t j = 0, n = rng.below(4); j < n; ++j) {
        ctx.push_back(2 + static_cast<int>(rng.below(5)));
      }
      double total = 0.0;
      for (int w = 0; w < 7; ++w) {
        const double p = m.prob(ctx, w);
        EXPECT_GE(p, 0.0);
        EXPECT_LE(p, 1.0);
        total += p;
      }
      EXPECT_NEAR(total, 1.0, 1e-9);
      const auto dist = m.conditional_distribution(ctx);
      for (int w = 0; w < 7; ++w) EXPECT_NEAR(dist[w], m.prob(ctx, w), 1e-15);
    }
    for (int k = 1; k <= order; ++k) {
      EXPECT_GE(m.discount(k), 0.0);
      EXPECT_LE(m.discount(k), 1.0);
    }
  }
}

TEST(NGram, LogProbsOfNonBeginSymbolsAreFinite) {
  Rng rng(4);
  const auto m = NGramModel::train(random_corpus(rng, 6, 10, 4), 3, 6);
  const std::vector<int> ctx = {kBeg, 3};
  for (int w = 1; w < 6; ++w) {
    const double lp = m.logprob_conditional(ctx, w);
    EXPECT_TRUE(std::isfinite(lp));
    EXPECT_LE(lp, 0.0);
  }
}

TEST(NGram, FixedLengthNormalizesPerLength) {
  Rng rng(8);
  for (int vocab = 3; vocab <= 5; ++vocab) {
    for (int order = 1; order <= 3; ++order) {
      const auto m = NGramModel::train(random_corpus(rng, vocab, 15, 4), order, vocab);
      for (std::size_t l = 2; l <= 4; ++l) {
        double total = 0.0;
        for_each_sequence(vocab, l, [&](const Sequence& x) {
          total += std::exp(m.logprob_fixed_length(x));
        });
        EXPECT_NEAR(total, 1.0, 1e-9) << "vocab " << vocab << " order " << order << " l " << l;
      }
    }
  }
}

TEST(NGram, FixedLengthNeedsBoundaries) {
  const auto m = NGramModel::train(toy_corpus(), 2, 5);
  EXPECT_THROW(m.logprob_fixed_length(Sequence{}), Error);
  EXPECT_THROW(m.logprob_fixed_length(Sequence{{kA, kB}}), Error);
}

TEST(NGram, SamplerMatchesFixedLengthScores) {
  Rng data_rng(30);
  const auto m = NGramModel::train(random_corpus(data_rng, 5, 20, 3), 2, 5);
  for (std::size_t l : {3u, 4u}) {
    std::map<std::vector<int>, std::size_t> index;
    std::vector<double> expected;
    const double n = 50000;
    for_each_sequence(5, l, [&](const Sequence& x) {
      index[x.ids] = expected.size();
      expected.push_back(n * std::exp(m.logprob_fixed_length(x)));
    });
    std::vector<double> observed(expected.size(), 0.0);
    Rng rng(99);
    for (int i = 0; i < static_cast<int>(n); ++i) {
      const auto x = m.sample_fixed_length(l, rng);
      ASSERT_EQ(x.length(), l);
      observed[index.at(x.ids)] += 1.0;
    }
    EXPECT_GT(testing::chi_square_p_value(expected, observed), 0.01) << "l " << l;
  }
}

TEST(NGram, SamplerIsDeterministicAndHandlesMinimalLength) {
  const auto m = NGramModel::train(toy_corpus(), 2, 5);
  Rng a(5), b(5);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(m.sample_fixed_length(5, a), m.sample_fixed_length(5, b));
  EXPECT_EQ(m.sample_fixed_length(2, a).ids, (std::vector<int>{kBeg, kEnd}));
  EXPECT_THROW(m.sample_fixed_length(1, a), Error);
}

TEST(NGram, MoreCopiesNeverLowerFixedLengthScore) {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    auto data = random_corpus(rng, 5, 12, 3);
    const Sequence target = data[rng.below(data.size())];
    for (int order = 1; order <= 3; ++order) {
      const double before = NGramModel::train(data, order, 5).logprob_fixed_length(target);
      auto more = data;
      more.push_back(target);
      const double after = NGramModel::train(more, order, 5).logprob_fixed_length(target);
      EXPECT_GE(after, before - 1e-12) << "trial " << trial << " order " << order;
    }
  }
}

TEST(NGram, JsonRoundTripKeepsProbabilities) {
  testing::TempDir dir;
  Rng rng(2);
  const auto m = NGramModel::train(random_corpus(rng, 6, 30, 5), 3, 6);
  m.save(dir / "m.json");
  const auto back = NGramModel::load(dir / "m.json");
  EXPECT_EQ(back.order(), 3);
  for (int i = 0; i < 50; ++i) {
    const std::vector<int> ctx = {kBeg, 2 + static_cast<int>(rng.below(4))};
    for (int w = 0; w < 6; ++w) EXPECT_EQ(back.prob(ctx, w), m.prob(ctx, w));
  }
  auto doc = m.to_json();
  doc["version"] = 99;
  EXPECT_THROW(NGramModel::from_json(doc), Error);
  doc = m.to_json();
  doc["discounts"][0] = 1.5;
  EXPECT_THROW(NGramModel::from_json(doc), Error);
}

// Standard ARPA back-off lookup over the exported tables.
class ArpaOracle {
 public:
  explicit ArpaOracle(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int section = 0;
    while (std::getline(in, line)) {
      if (line.empty() || line == "\\data\\" || line == "\\end\\" || line.rfind("ngram ", 0) == 0) {
        continue;
      }
      if (line.front() == '\\') {
        section = std::stoi(line.substr(1));
        continue;
      }
      std::istringstream fields(line);
      std::vector<std::string> parts;
      for (std::string f; std::getline(fields, f, '\t');) parts.push_back(f);
      std::istringstream words(parts[1]);
      std::vector<std::string> gram;
      for (std::string w; words >> w;) gram.push_back(w);
      EXPECT_EQ(static_cast<int>(gram.size()), section);
      prob_[gram] = std::stod(parts[0]);
      if (parts.size() > 2) bow_[gram] = std::stod(parts[2]);
    }
  }

  double log10_prob(std::vector<std::string> gram) const {
    if (auto it = prob_.find(gram); it != prob_.end()) return it->second;
    std::vector<std::string> ctx(gram.begin(), gram.end() - 1);
    const auto bow = bow_.find(ctx);
    gram.erase(gram.begin());
    return (bow == bow_.end() ? 0.0 : bow->second) + log10_prob(gram);
  }

 private:
  std::map<std::vector<std::string>, double> prob_;
  std::map<std::vector<std::string>, double> bow_;
};

TEST(NGram, ArpaExportAgreesWithBackoffLookup) {
  const std::vector<std::string> tokens = {"a", "b", "c", "d"};
  const Vocabulary vocab(tokens);
  Rng rng(17);
  const auto m = NGramModel::train(random_corpus(rng, vocab.size(), 25, 4), 3, vocab.size());
  std::ostringstream arpa;
  m.write_arpa(arpa, vocab);
  EXPECT_NE(arpa.str().find("\\3-grams:"), std::string::npos);
  const ArpaOracle oracle(arpa.str());
  for (int u = 0; u < vocab.size(); ++u) {
    if (u == kEnd) continue;
    for (int v = 2; v < vocab.size(); ++v) {
      for (int w = 1; w < vocab.size(); ++w) {
        const std::vector<int> ctx = {u, v};
        const double expected = std::log10(m.prob(ctx, w));
        const double got =
            oracle.log10_prob({vocab.symbol(u), vocab.symbol(v), vocab.symbol(w)});
        EXPECT_NEAR(got, expected, 1e-5) << u << " " << v << " " << w;
      }
    }
  }
}

}  // namespace
}  // namespace ntrf
