#include "ntrf/evalkit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace ntrf {

std::vector<NBestList> read_nbest(std::istream& in) {
  std::vector<NBestList> lists;
  std::set<std::string> finished;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string utt, rank_text, acoustic_text;
    if (!(fields >> utt >> rank_text >> acoustic_text)) {
      throw Error("n-best line " + std::to_string(line_no) + ": expected <utt-id> <rank> <score|NA>");
    }
    Hypothesis hyp;
    try {
      std::size_t used = 0;
      hyp.rank = std::stoul(rank_text, &used);
      if (used != rank_text.size()) throw std::invalid_argument(rank_text);
      if (acoustic_text != "NA") {
        hyp.acoustic = std::stod(acoustic_text, &used);
        if (used != acoustic_text.size()) throw std::invalid_argument(acoustic_text);
      }
    } catch (const std::logic_error&) {
      throw Error("n-best line " + std::to_string(line_no) + ": bad rank or acoustic score");
    }
    std::string rest;
    std::getline(fields, rest);
    for (const auto& tok : tokenize(rest, TokenLevel::Word)) {
      if (!hyp.text.empty()) hyp.text += ' ';
      hyp.text += tok;
    }
    if (lists.empty() || lists.back().utterance != utt) {
      if (!lists.empty()) finished.insert(lists.back().utterance);
      if (finished.count(utt)) {
        throw Error("n-best utterance '" + utt + "' appears in more than one block");
      }
      lists.push_back({utt, {}});
    }
    lists.back().hypotheses.push_back(std::move(hyp));
  }
  for (auto& list : lists) {
    std::stable_sort(list.hypotheses.begin(), list.hypotheses.end(),
                     [](const Hypothesis& a, const Hypothesis& b) { return a.rank < b.rank; });
    for (std::size_t i = 1; i < list.hypotheses.size(); ++i) {
      if (list.hypotheses[i].rank == list.hypotheses[i - 1].rank) {
        throw Error("n-best utterance '" + list.utterance + "' repeats rank " +
                    std::to_string(list.hypotheses[i].rank));
      }
    }
  }
  return lists;
}

std::vector<NBestList> read_nbest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read n-best file " + path.string());
  return read_nbest(in);
}

void write_nbest(std::ostream& out, std::span<const NBestList> lists) {
  for (const auto& list : lists) {
    for (const auto& h : list.hypotheses) {
      out << list.utterance << ' ' << h.rank << ' '
          << (h.acoustic ? format_double(*h.acoustic) : std::string("NA"));
      if (!h.text.empty()) out << ' ' << h.text;
      out << '\n';
    }
  }
}

std::map<std::string, std::string> read_references(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read references " + path.string());
  std::map<std::string, std::string> refs;
  for (std::string line; std::getline(in, line);) {
    auto tokens = tokenize(line, TokenLevel::Word);
    if (tokens.empty()) continue;
    std::string text;
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      if (!text.empty()) text += ' ';
      text += tokens[i];
    }
    if (!refs.emplace(tokens[0], std::move(text)).second) {
      throw Error("reference id '" + tokens[0] + "' appears twice");
    }
  }
  return refs;
}

NGramScorer::NGramScorer(std::shared_ptr<const NGramModel> model,
                         std::shared_ptr<const Vocabulary> vocab, TokenLevel level)
    : model_(std::move(model)), vocab_(std::move(vocab)), level_(level) {}

double NGramScorer::log_prob(std::string_view text) const {
  return model_->logprob_sentence(encode(text, *vocab_, level_, true));
}

LstmScorer::LstmScorer(std::shared_ptr<const LstmLmParams> model,
                       std::shared_ptr<const Vocabulary> vocab, TokenLevel level)
    : model_(std::move(model)), vocab_(std::move(vocab)), level_(level) {}

double LstmScorer::log_prob(std::string_view text) const {
  return lstm_lm_logprob(*model_, encode(text, *vocab_, level_, true));
}

TrfScorer::TrfScorer(std::shared_ptr<const TrfModel> model,
                     std::shared_ptr<const Vocabulary> vocab, TokenLevel level)
    : model_(std::move(model)), vocab_(std::move(vocab)), level_(level) {}

double TrfScorer::log_prob(std::string_view text) const {
  return log_joint(*model_, encode(text, *vocab_, level_, true));
}

CombinedScorer::CombinedScorer(std::vector<ScorerMember> members, double acoustic_weight)
    : members_(std::move(members)), acoustic_weight_(acoustic_weight) {
  if (members_.empty()) throw Error("combined scorer needs at least one member");
  for (const auto& m : members_) {
    if (!m.lm) throw Error("combined scorer member '" + m.name + "' has no model");
    if (!std::isfinite(m.weight)) throw Error("combined scorer member '" + m.name + "' weight is not finite");
  }
  if (!std::isfinite(acoustic_weight_)) throw Error("acoustic weight is not finite");
}

double CombinedScorer::score(std::string_view text, std::optional<double> acoustic) const {
  double total = 0.0;
  for (const auto& m : members_) {
    if (m.weight == 0.0) continue;
    total += m.weight * m.lm->log_prob(text);
  }
  if (acoustic && acoustic_weight_ != 0.0) total += acoustic_weight_ * *acoustic;
  return total;
}

std::vector<std::size_t> rank_by_score(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::vector<std::size_t> rescore(const CombinedScorer& scorer, const NBestList& nbest) {
  std::vector<double> scores;
  scores.reserve(nbest.hypotheses.size());
  for (const auto& h : nbest.hypotheses) scores.push_back(scorer.score(h));
  return rank_by_score(scores);
}

double EditCounts::wer() const {
  if (reference_length == 0) throw Error("WER: empty reference");
  return static_cast<double>(errors()) / static_cast<double>(reference_length);
}

EditCounts& EditCounts::operator+=(const EditCounts& other) {
  substitutions += other.substitutions;
  insertions += other.insertions;
  deletions += other.deletions;
  reference_length += other.reference_length;
  return *this;
}

EditCounts wer(std::span<const std::string> ref, std::span<const std::string> hyp) {
  if (ref.empty()) throw Error("WER: empty reference");
  const std::size_t R = ref.size();
  const std::size_t H = hyp.size();
  // cost[i][j]: edits turning ref[0, i) into hyp[0, j).
  std::vector<std::size_t> cost((R + 1) * (H + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return cost[i * (H + 1) + j]; };
  for (std::size_t i = 0; i <= R; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= H; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= R; ++i) {
    for (std::size_t j = 1; j <= H; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  EditCounts out;
  out.reference_length = R;
  std::size_t i = R, j = H;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++out.substitutions;
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++out.deletions;
      --i;
    } else {
      ++out.insertions;
      --j;
    }
  }
  return out;
}

EditCounts wer(std::string_view reference, std::string_view hypothesis) {
  const auto r = tokenize(reference, TokenLevel::Word);
  const auto h = tokenize(hypothesis, TokenLevel::Word);
  return wer(std::span<const std::string>(r), std::span<const std::string>(h));
}

ScoreTable build_score_table(std::span<const ScorerMember> members,
                             std::span<const NBestList> nbest,
                             const std::map<std::string, std::string>& references) {
  std::vector<std::string> missing;
  for (const auto& list : nbest) {
    if (!references.count(list.utterance)) missing.push_back(list.utterance);
  }
  std::set<std::string> listed;
  for (const auto& list : nbest) listed.insert(list.utterance);
  for (const auto& [id, text] : references) {
    if (!listed.count(id)) missing.push_back(id);
  }
  if (!missing.empty()) {
    std::string ids;
    for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
    throw Error("utterance ids differ between n-best lists and references: " + ids);
  }

  ScoreTable table;
  for (const auto& m : members) table.member_names.push_back(m.name);
  for (const auto& list : nbest) {
    const auto ref = tokenize(references.at(list.utterance), TokenLevel::Word);
    table.reference_lengths.push_back(ref.size());
    std::vector<ScoreTable::Entry> entries;
    for (const auto& h : list.hypotheses) {
      ScoreTable::Entry e;
      for (const auto& m : members) e.member_scores.push_back(m.lm->log_prob(h.text));
      e.acoustic = h.acoustic.value_or(0.0);
      const auto hyp = tokenize(h.text, TokenLevel::Word);
      e.errors = wer(std::span<const std::string>(ref), std::span<const std::string>(hyp)).errors();
      entries.push_back(std::move(e));
    }
    table.utterances.push_back(std::move(entries));
  }
  return table;
}

double corpus_wer(const ScoreTable& table, std::span<const double> weights,
                  double acoustic_weight) {
  if (weights.size() != table.member_names.size()) throw Error("corpus_wer: weight count mismatch");
  std::size_t errors = 0, words = 0;
  for (std::size_t u = 0; u < table.utterances.size(); ++u) {
    const auto& entries = table.utterances[u];
    std::size_t best = 0;
    double best_score = kNegInf;
    for (std::size_t h = 0; h < entries.size(); ++h) {
      double s = acoustic_weight * entries[h].acoustic;
      for (std::size_t m = 0; m < weights.size(); ++m) {
        if (weights[m] != 0.0) s += weights[m] * entries[h].member_scores[m];
      }
      if (h == 0 || s > best_score) {
        best = h;
        best_score = s;
      }
    }
    if (!entries.empty()) errors += entries[best].errors;
    words += table.reference_lengths[u];
  }
  if (words == 0) throw Error("corpus_wer: references are empty");
  return static_cast<double>(errors) / static_cast<double>(words);
}

TuningResult tune_weights(const ScoreTable& table, double step, double max_weight,
                          std::span<const bool> active, double acoustic_weight) {
  if (!(step > 0.0)) throw Error("tune_weights: step must be positive");
  const std::size_t k = table.member_names.size();
  if (!active.empty() && active.size() != k) throw Error("tune_weights: active mask size mismatch");
  const auto points = static_cast<std::size_t>(std::floor(max_weight / step + 1e-9)) + 1;
  std::vector<std::size_t> free;
  for (std::size_t m = 0; m < k; ++m) {
    if (active.empty() || active[m]) free.push_back(m);
  }
  std::vector<std::size_t> index(k, 0);
  std::vector<double> weights(k, 0.0);
  TuningResult best;
  bool have = false;
  while (true) {
    for (std::size_t m = 0; m < k; ++m) weights[m] = static_cast<double>(index[m]) * step;
    const double w = corpus_wer(table, weights, acoustic_weight);
    if (!have || w < best.wer) {
      best = {weights, w};
      have = true;
    }
    // Odometer over the free members, last one fastest.
    std::size_t pos = free.size();
    while (pos > 0) {
      const std::size_t m = free[pos - 1];
      if (++index[m] < points) break;
      index[m] = 0;
      --pos;
    }
    if (pos == 0) return best;
  }
}

}  // namespace ntrf
