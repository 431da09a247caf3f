#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "ntrf/common.hpp"
#include "ntrf/corpus.hpp"
#include "test_support.hpp"

namespace ntrf {
namespace {

TEST(Vocabulary, ReservedSymbolsComeFirst) {
  const Vocabulary v;
  EXPECT_EQ(v.size(), 3);
  EXPECT_EQ(v.symbol(Vocabulary::kBegin), "<s>");
  EXPECT_EQ(v.symbol(Vocabulary::kEnd), "</s>");
  EXPECT_EQ(v.symbol(Vocabulary::kUnknown), "<unk>");
  EXPECT_EQ(v.payload_size(), 1);
}

TEST(BuildVocabulary, CountsEveryToken) {
  const std::vector<std::string> lines = {"a b", "a"};
  const auto v = build_vocabulary(lines, TokenLevel::Word, 1);
  EXPECT_EQ(v.size(), 5);
  EXPECT_EQ(v.symbol(3), "a");
  EXPECT_EQ(v.symbol(4), "b");
}

TEST(BuildVocabulary, MinCountSendsRareTokensToUnknown) {
  const std::vector<std::string> lines = {"a b", "a"};
  const auto v = build_vocabulary(lines, TokenLevel::Word, 2);
  EXPECT_EQ(v.size(), 4);
  EXPECT_EQ(v.id("b"), Vocabulary::kUnknown);
}

TEST(BuildVocabulary, OrdersByCountThenLexicographically) {
  const std::vector<std::string> lines = {"d c b", "c b", "a", "a"};
  const auto v = build_vocabulary(lines, TokenLevel::Word);
  // a, b and c occur twice; d once.
  EXPECT_EQ(v.symbols(), (std::vector<std::string>{"<s>", "</s>", "<unk>", "a", "b", "c", "d"}));
  const auto capped = build_vocabulary(lines, TokenLevel::Word, 1, 2);
  EXPECT_EQ(capped.size(), 5);
  EXPECT_EQ(capped.id("c"), Vocabulary::kUnknown);
}

TEST(BuildVocabulary, DeterministicOnGeneratedCorpus) {
  Rng rng(9);
  std::vector<std::string> lines;
  for (int i = 0; i < 100; ++i) {
    std::string line;
    for (std::size_t j = 0, n = 1 + rng.below(8); j < n; ++j) {
      line += "w" + std::to_string(rng.below(30)) + " ";
    }
    lines.push_back(line);
  }
  EXPECT_EQ(build_vocabulary(lines, TokenLevel::Word), build_vocabulary(lines, TokenLevel::Word));
}

TEST(BuildVocabulary, EmptyCorpusIsAnError) {
  EXPECT_THROW(build_vocabulary(std::vector<std::string>{}, TokenLevel::Word), Error);
}

TEST(Vocabulary, SymbolIdRoundTrip) {
  const std::vector<std::string> lines = {"the cat sat", "on the mat"};
  const auto v = build_vocabulary(lines, TokenLevel::Word);
  for (int id = 0; id < v.size(); ++id) EXPECT_EQ(v.id(v.symbol(id)), id);
}

TEST(Vocabulary, SaveLoadRoundTrip) {
  testing::TempDir dir;
  const std::vector<std::string> lines = {"x y z", "y"};
  const auto v = build_vocabulary(lines, TokenLevel::Word);
  v.save(dir / "vocab.txt");
  EXPECT_EQ(Vocabulary::load(dir / "vocab.txt"), v);
  std::ofstream(dir / "bad.txt") << "x\ny\n";
  EXPECT_THROW(Vocabulary::load(dir / "bad.txt"), Error);
}

TEST(Encode, CharactersWithBoundaries) {
  const std::vector<std::string> lines = {"cat", "act"};
  const auto v = build_vocabulary(lines, TokenLevel::Char);
  const auto x = encode("cat", v, TokenLevel::Char, true);
  EXPECT_EQ(x.ids, (std::vector<int>{Vocabulary::kBegin, v.id("c"), v.id("a"), v.id("t"),
                                     Vocabulary::kEnd}));
  EXPECT_EQ(x.length(), 5u);
}

TEST(Encode, EmptyLineIsJustBoundaries) {
  const Vocabulary v;
  EXPECT_EQ(encode("", v, TokenLevel::Char, true).ids,
            (std::vector<int>{Vocabulary::kBegin, Vocabulary::kEnd}));
}

TEST(Encode, UnseenTokensBecomeUnknown) {
  const std::vector<std::string> lines = {"q"};
  const auto v = build_vocabulary(lines, TokenLevel::Char);
  EXPECT_EQ(encode("zq", v, TokenLevel::Char, true).ids,
            (std::vector<int>{Vocabulary::kBegin, Vocabulary::kUnknown, v.id("q"),
                              Vocabulary::kEnd}));
}

TEST(Encode, WithoutBoundaries) {
  const std::vector<std::string> lines = {"a b"};
  const auto v = build_vocabulary(lines, TokenLevel::Word);
  EXPECT_EQ(encode("b a", v, TokenLevel::Word, false).ids, (std::vector<int>{v.id("b"), v.id("a")}));
}

TEST(Encode, TooLongLineIsNamedInTheError) {
  const std::vector<std::string> lines = {"abcd"};
  const auto v = build_vocabulary(lines, TokenLevel::Char);
  try {
    encode("abcd", v, TokenLevel::Char, true, 5);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("abcd"), std::string::npos);
  }
}

TEST(Encode, DecodeInvertsEncodeInVocabulary) {
  const std::vector<std::string> words = {"the cat sat on the mat", "a dog"};
  const auto wv = build_vocabulary(words, TokenLevel::Word);
  for (const auto& line : words) {
    EXPECT_EQ(decode(encode(line, wv, TokenLevel::Word, true), wv, TokenLevel::Word), line);
  }
  const std::vector<std::string> chars = {"hello", "wörld"};
  const auto cv = build_vocabulary(chars, TokenLevel::Char);
  for (const auto& line : chars) {
    EXPECT_EQ(decode(encode(line, cv, TokenLevel::Char, true), cv, TokenLevel::Char), line);
  }
}

TEST(Tokenize, CharLevelSplitsCodePointsAndDropsSpaces) {
  EXPECT_EQ(tokenize("ab c", TokenLevel::Char), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(tokenize("é", TokenLevel::Char).size(), 1u);
}

TEST(LengthPrior, EmpiricalFrequencies) {
  const std::vector<Sequence> data = {{{5}}, {{6}}, {{5, 6}}};
  const auto p = empirical_length_prior(data, 3);
  EXPECT_DOUBLE_EQ(p.prob(1), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(p.prob(2), 1.0 / 3.0);
  EXPECT_EQ(p.prob(3), 0.0);
  EXPECT_EQ(p.log_prob(3), kNegInf);
  EXPECT_EQ(p.support(), (std::vector<std::size_t>{1, 2}));
}

TEST(LengthPrior, SingleLength) {
  const std::vector<Sequence> data = {{{3, 4}}};
  const auto p = empirical_length_prior(data, 2);
  EXPECT_EQ(p.probs(), (std::vector<double>{0.0, 1.0}));
}

TEST(LengthPrior, Errors) {
  EXPECT_THROW(empirical_length_prior(std::vector<Sequence>{}, 3), Error);
  const std::vector<Sequence> data = {{{1, 2, 3, 4}}};
  EXPECT_THROW(empirical_length_prior(data, 3), Error);
  EXPECT_THROW(LengthPrior(std::vector<double>{0.5, 0.4}), Error);
  EXPECT_THROW(LengthPrior(std::vector<double>{1.5, -0.5}), Error);
}

TEST(LengthPrior, PilotCorpusAgreesWithIndependentCount) {
  const auto lines = read_lines(NTRF_SOURCE_DIR "/data/pilot/train.txt");
  const auto vocab = build_vocabulary(lines, TokenLevel::Char);
  const auto data = encode_all(lines, vocab, TokenLevel::Char, true, 5);
  const auto prior = empirical_length_prior(data, 5);
  const auto again = empirical_length_prior(data, 5);
  EXPECT_EQ(prior.probs(), again.probs());

  // Independent pass: count characters in the raw text.
  std::map<std::size_t, double> counts;
  for (const auto& line : lines) counts[line.size() + 2] += 1.0;
  double total = 0.0;
  for (std::size_t l = 1; l <= 5; ++l) {
    EXPECT_DOUBLE_EQ(prior.prob(l), counts[l] / static_cast<double>(lines.size()));
    total += prior.prob(l);
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(HasBoundaries, Shapes) {
  EXPECT_TRUE(has_boundaries(testing::make_sequence({3, 4})));
  EXPECT_TRUE(has_boundaries(testing::make_sequence({})));
  EXPECT_FALSE(has_boundaries(Sequence{{0}}));
  EXPECT_FALSE(has_boundaries(Sequence{{0, 0, 1}}));
}

}  // namespace
}  // namespace ntrf
