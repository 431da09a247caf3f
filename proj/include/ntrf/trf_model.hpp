#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ntrf/corpus.hpp"
#include "ntrf/lstm_lm.hpp"
#include "ntrf/ngram.hpp"
#include "ntrf/potential.hpp"

namespace ntrf {

enum class ReferenceKind { Uniform, NGram, LstmLm };

ReferenceKind parse_reference_kind(std::string_view name);
std::string_view to_string(ReferenceKind kind);

/// The base distribution q(x) that the random field tilts. Sequences carry
/// begin/end boundaries; the payload is everything in between.
class ReferenceDistribution {
 public:
  /// q(x) = payload_size^-(l-2): normalized separately for every length.
  static ReferenceDistribution uniform(int vocab_size);
  /// Fixed-length n-gram; normalized separately for every length.
  static ReferenceDistribution ngram(std::shared_ptr<const NGramModel> model);
  /// Left-to-right LSTM; normalized jointly over lengths.
  static ReferenceDistribution lstm(std::shared_ptr<const LstmLmParams> model);

  ReferenceKind kind() const { return kind_; }
  bool per_length_normalized() const { return kind_ != ReferenceKind::LstmLm; }
  int vocab_size() const { return vocab_size_; }
  double log_prob(const Sequence& x) const;

  const std::shared_ptr<const NGramModel>& ngram_model() const { return ngram_; }
  const std::shared_ptr<const LstmLmParams>& lstm_model() const { return lstm_; }

 private:
  ReferenceKind kind_ = ReferenceKind::Uniform;
  int vocab_size_ = 0;
  std::shared_ptr<const NGramModel> ngram_;
  std::shared_ptr<const LstmLmParams> lstm_;
};

/// log p(l, x) = log pi_l + log q(x) + phi(x) - zeta_l.
struct TrfModel {
  static constexpr int kFormatVersion = 1;

  PotentialParams potential;
  std::vector<double> zeta;  // zeta[l - 1]
  LengthPrior prior;
  ReferenceDistribution reference;

  std::size_t max_length() const { return zeta.size(); }
  int vocab_size() const { return potential.config.vocab_size; }
  /// Throws if lengths or vocabularies disagree, or zeta is not finite.
  void validate() const;
};

/// -inf when pi_l = 0.
double log_joint(const TrfModel& model, const Sequence& x);
/// Same, with phi(x) supplied by the caller.
double log_joint_given_phi(const TrfModel& model, const Sequence& x, double phi);

class EnumerationBudgetError : public Error {
 public:
  using Error::Error;
};

/// Default cap on the number of sequences enumerated per length.
inline constexpr double kDefaultEnumerationBudget = 1e7;

/// Number of begin/payload/end sequences of length `length`.
double enumeration_size(int vocab_size, std::size_t length);

/// Calls `visit` with every begin/payload/end sequence of `length` in
/// lexicographic payload order.
template <class Visit>
void for_each_sequence(int vocab_size, std::size_t length, Visit&& visit);

struct EnumerationOptions {
  double budget = kDefaultEnumerationBudget;
  unsigned threads = 1;
};

/// log Z_l = log sum_x q(x) exp(phi(x)) over the full length-l space.
double exact_log_z(const TrfModel& model, std::size_t length, const EnumerationOptions& opts = {});

/// Exact log Z for every supported length; NaN where pi_l = 0.
std::vector<double> exact_log_normalizers(const TrfModel& model,
                                          const EnumerationOptions& opts = {});

enum class ZetaSource { Stored, Exact };

struct NllReport {
  double mean = 0.0;  // +inf if any sequence has pi_l = 0
  std::vector<std::size_t> unsupported_lengths;
};

NllReport nll(const TrfModel& model, std::span<const Sequence> dataset, ZetaSource source,
              const EnumerationOptions& opts = {});
/// Mean NLL with zeta replaced by `log_z` (indexed like TrfModel::zeta).
NllReport nll_with_log_z(const TrfModel& model, std::span<const Sequence> dataset,
                         std::span<const double> log_z);

struct ZetaGap {
  std::vector<double> gap;  // zeta_l - zeta*_l; 0 for unsupported lengths
  double squared_norm = 0.0;
};

ZetaGap zeta_gap(const TrfModel& model, const EnumerationOptions& opts = {});
ZetaGap zeta_gap_given(const TrfModel& model, std::span<const double> exact_log_z);

/// Bundle file: zeta, prior, reference descriptor and paths (relative to the
/// bundle) of the potential parameters, vocabulary and reference model.
struct TrfBundle {
  TrfModel model;
  Vocabulary vocab;
  TokenLevel level = TokenLevel::Char;
};

struct TrfBundlePaths {
  std::string potential = "potential.json";
  std::string vocab = "vocab.txt";
  std::string reference;  // empty for the uniform reference
};

void save_trf_bundle(const std::filesystem::path& path, const TrfBundle& bundle,
                     const TrfBundlePaths& paths);
TrfBundle load_trf_bundle(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

template <class Visit>
void for_each_sequence(int vocab_size, std::size_t length, Visit&& visit) {
  if (length < 2) return;
  const std::size_t slots = length - 2;
  Sequence x;
  x.ids.assign(length, Vocabulary::kUnknown);
  x.ids.front() = Vocabulary::kBegin;
  x.ids.back() = Vocabulary::kEnd;
  while (true) {
    visit(static_cast<const Sequence&>(x));
    std::size_t pos = slots;
    while (pos > 0) {
      int& id = x.ids[pos];
      if (++id < vocab_size) break;
      id = Vocabulary::kUnknown;
      --pos;
    }
    if (pos == 0) return;
  }
}

}  // namespace ntrf
