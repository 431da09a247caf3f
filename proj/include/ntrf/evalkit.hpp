#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ntrf/corpus.hpp"
#include "ntrf/lstm_lm.hpp"
#include "ntrf/ngram.hpp"
#include "ntrf/trf_model.hpp"

namespace ntrf {

struct Hypothesis {
  std::size_t rank = 0;
  std::optional<double> acoustic;
  std::string text;
};

struct NBestList {
  std::string utterance;
  std::vector<Hypothesis> hypotheses;  // ascending rank
};

/// Lines `<utt-id> <rank> <acoustic-score|NA> <token ...>`. Hypotheses of an
/// utterance must be contiguous.
std::vector<NBestList> read_nbest(std::istream& in);
std::vector<NBestList> read_nbest(const std::filesystem::path& path);
void write_nbest(std::ostream& out, std::span<const NBestList> lists);

/// Lines `<utt-id> <token ...>`.
std::map<std::string, std::string> read_references(const std::filesystem::path& path);

/// Sentence-level log-probability of plain text.
class SentenceScorer {
 public:
  virtual ~SentenceScorer() = default;
  virtual double log_prob(std::string_view text) const = 0;
  virtual std::string_view kind() const = 0;
};

class NGramScorer final : public SentenceScorer {
 public:
  NGramScorer(std::shared_ptr<const NGramModel> model, std::shared_ptr<const Vocabulary> vocab,
              TokenLevel level);
  double log_prob(std::string_view text) const override;
  std::string_view kind() const override { return "ngram"; }

 private:
  std::shared_ptr<const NGramModel> model_;
  std::shared_ptr<const Vocabulary> vocab_;
  TokenLevel level_;
};

class LstmScorer final : public SentenceScorer {
 public:
  LstmScorer(std::shared_ptr<const LstmLmParams> model, std::shared_ptr<const Vocabulary> vocab,
             TokenLevel level);
  double log_prob(std::string_view text) const override;
  std::string_view kind() const override { return "lstm"; }

 private:
  std::shared_ptr<const LstmLmParams> model_;
  std::shared_ptr<const Vocabulary> vocab_;
  TokenLevel level_;
};

/// log p(l, x) with the stored zeta; -inf for lengths outside the prior.
class TrfScorer final : public SentenceScorer {
 public:
  TrfScorer(std::shared_ptr<const TrfModel> model, std::shared_ptr<const Vocabulary> vocab,
            TokenLevel level);
  double log_prob(std::string_view text) const override;
  std::string_view kind() const override { return "trf"; }

 private:
  std::shared_ptr<const TrfModel> model_;
  std::shared_ptr<const Vocabulary> vocab_;
  TokenLevel level_;
};

struct ScorerMember {
  std::string name;
  std::shared_ptr<const SentenceScorer> lm;
  double weight = 1.0;
};

/// Log-linear combination: sum_i weight_i log p_i(text) + acoustic_weight * acoustic.
/// Members with weight 0 are not evaluated.
class CombinedScorer {
 public:
  explicit CombinedScorer(std::vector<ScorerMember> members, double acoustic_weight = 1.0);

  double score(std::string_view text, std::optional<double> acoustic = std::nullopt) const;
  double score(const Hypothesis& hyp) const { return score(hyp.text, hyp.acoustic); }
  const std::vector<ScorerMember>& members() const { return members_; }
  double acoustic_weight() const { return acoustic_weight_; }

 private:
  std::vector<ScorerMember> members_;
  double acoustic_weight_;
};

/// Indices into nbest.hypotheses, best first; ties keep the original order.
std::vector<std::size_t> rescore(const CombinedScorer& scorer, const NBestList& nbest);
/// Same ranking from precomputed scores.
std::vector<std::size_t> rank_by_score(std::span<const double> scores);

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t reference_length = 0;

  std::size_t errors() const { return substitutions + insertions + deletions; }
  double wer() const;
  EditCounts& operator+=(const EditCounts& other);
};

/// Minimum edit-distance alignment with unit costs.
EditCounts wer(std::span<const std::string> reference, std::span<const std::string> hypothesis);
EditCounts wer(std::string_view reference, std::string_view hypothesis);

/// Member scores and error counts of every hypothesis, for fast re-ranking
/// under many weight vectors.
struct ScoreTable {
  struct Entry {
    std::vector<double> member_scores;
    double acoustic = 0.0;
    std::size_t errors = 0;
  };
  std::vector<std::string> member_names;
  std::vector<std::vector<Entry>> utterances;
  std::vector<std::size_t> reference_lengths;
};

/// Throws if an utterance lacks a reference, listing the offending ids.
ScoreTable build_score_table(std::span<const ScorerMember> members,
                             std::span<const NBestList> nbest,
                             const std::map<std::string, std::string>& references);

/// Corpus WER of the top hypothesis per utterance under `weights`.
double corpus_wer(const ScoreTable& table, std::span<const double> weights,
                  double acoustic_weight = 1.0);

struct TuningResult {
  std::vector<double> weights;
  double wer = 0.0;
};

/// Grid search over weights in {0, step, ..., max_weight}^k minimizing the
/// corpus WER. `active` restricts which members may be non-zero (empty = all).
/// Ties keep the first grid point in lexicographic order.
TuningResult tune_weights(const ScoreTable& table, double step = 0.1, double max_weight = 1.0,
                          std::span<const bool> active = {}, double acoustic_weight = 1.0);

}  // namespace ntrf
