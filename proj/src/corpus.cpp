#include "ntrf/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "ntrf/common.hpp"
#include "ntrf/io.hpp"

namespace ntrf {

TokenLevel parse_token_level(std::string_view name) {
  if (name == "word") return TokenLevel::Word;
  if (name == "char") return TokenLevel::Char;
  throw Error("unknown token level '" + std::string(name) + "' (expected word or char)");
}

std::string_view to_string(TokenLevel level) {
  return level == TokenLevel::Word ? "word" : "char";
}

Vocabulary::Vocabulary() {
  add(std::string(kBeginSymbol));
  add(std::string(kEndSymbol));
  add(std::string(kUnknownSymbol));
}

Vocabulary::Vocabulary(std::span<const std::string> tokens) : Vocabulary() {
  for (const auto& t : tokens) {
    if (ids_.count(t)) throw Error("duplicate vocabulary symbol '" + t + "'");
    add(t);
  }
}

void Vocabulary::add(std::string token) {
  ids_.emplace(token, static_cast<int>(symbols_.size()));
  symbols_.push_back(std::move(token));
}

int Vocabulary::id(std::string_view token) const {
  return find(token).value_or(kUnknown);
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::symbol(int id) const {
  if (id < 0 || id >= size()) throw Error("symbol id " + std::to_string(id) + " out of range");
  return symbols_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::string text;
  for (const auto& s : symbols_) text += s + '\n';
  write_text_atomic(path, text);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read vocabulary " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() < 3 || lines[0] != kBeginSymbol || lines[1] != kEndSymbol ||
      lines[2] != kUnknownSymbol) {
    throw Error("vocabulary " + path.string() + " lacks the reserved-symbol header");
  }
  return Vocabulary(std::span<const std::string>(lines).subspan(3));
}

LengthPrior::LengthPrior(std::vector<double> probs) : probs_(std::move(probs)) {
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw Error("length prior entries must be finite and >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw Error("length prior sums to " + format_double(total) + ", expected 1");
  }
}

double LengthPrior::prob(std::size_t length) const {
  if (length == 0 || length > probs_.size()) return 0.0;
  return probs_[length - 1];
}

double LengthPrior::log_prob(std::size_t length) const {
  const double p = prob(length);
  return p > 0.0 ? std::log(p) : kNegInf;
}

std::vector<std::size_t> LengthPrior::support() const {
  std::vector<std::size_t> out;
  for (std::size_t l = 1; l <= probs_.size(); ++l) {
    if (probs_[l - 1] > 0.0) out.push_back(l);
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view line, TokenLevel level) {
  std::vector<std::string> tokens;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  if (level == TokenLevel::Word) {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && is_space(line[i])) ++i;
      std::size_t j = i;
      while (j < line.size() && !is_space(line[j])) ++j;
      if (j > i) tokens.emplace_back(line.substr(i, j - i));
      i = j;
    }
    return tokens;
  }
  // One token per UTF-8 code point, whitespace dropped.
  for (std::size_t i = 0; i < line.size();) {
    const auto lead = static_cast<unsigned char>(line[i]);
    std::size_t n = 1;
    if (lead >= 0xF0) n = 4;
    else if (lead >= 0xE0) n = 3;
    else if (lead >= 0xC0) n = 2;
    n = std::min(n, line.size() - i);
    if (!(n == 1 && is_space(line[i]))) tokens.emplace_back(line.substr(i, n));
    i += n;
  }
  return tokens;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read corpus " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(std::move(line));
  }
  return lines;
}

Vocabulary build_vocabulary(std::span<const std::string> lines, TokenLevel level,
                            std::size_t min_count, std::size_t max_size) {
  if (lines.empty()) throw Error("build_vocabulary: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& line : lines) {
    for (auto& tok : tokenize(line, level)) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    if (n < min_count) continue;
    if (tok == Vocabulary::kBeginSymbol || tok == Vocabulary::kEndSymbol ||
        tok == Vocabulary::kUnknownSymbol) {
      continue;
    }
    ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (max_size > 0 && ranked.size() > max_size) ranked.resize(max_size);
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [tok, n] : ranked) tokens.push_back(tok);
  return Vocabulary(tokens);
}

Sequence encode(std::string_view line, const Vocabulary& vocab, TokenLevel level,
                bool attach_boundaries, std::size_t max_length) {
  Sequence seq;
  if (attach_boundaries) seq.ids.push_back(vocab.begin_id());
  for (const auto& tok : tokenize(line, level)) seq.ids.push_back(vocab.id(tok));
  if (attach_boundaries) seq.ids.push_back(vocab.end_id());
  if (max_length > 0 && seq.length() > max_length) {
    throw Error("line '" + std::string(line) + "' encodes to length " +
                std::to_string(seq.length()) + ", above the maximum " +
                std::to_string(max_length));
  }
  return seq;
}

std::vector<Sequence> encode_all(std::span<const std::string> lines, const Vocabulary& vocab,
                                 TokenLevel level, bool attach_boundaries,
                                 std::size_t max_length) {
  std::vector<Sequence> out;
  out.reserve(lines.size());
  for (const auto& line : lines) {
    out.push_back(encode(line, vocab, level, attach_boundaries, max_length));
  }
  return out;
}

std::string decode(const Sequence& seq, const Vocabulary& vocab, TokenLevel level) {
  std::string out;
  for (int id : seq.ids) {
    if (id == vocab.begin_id() || id == vocab.end_id()) continue;
    if (level == TokenLevel::Word && !out.empty()) out += ' ';
    out += vocab.symbol(id);
  }
  return out;
}

LengthPrior empirical_length_prior(std::span<const Sequence> dataset, std::size_t max_length) {
  if (dataset.empty()) throw Error("empirical_length_prior: empty dataset");
  std::vector<std::size_t> counts(max_length, 0);
  for (const auto& seq : dataset) {
    const std::size_t l = seq.length();
    if (l == 0 || l > max_length) {
      throw Error("sequence of length " + std::to_string(l) + " outside 1.." +
                  std::to_string(max_length));
    }
    ++counts[l - 1];
  }
  std::vector<double> probs(max_length);
  const auto total = static_cast<double>(dataset.size());
  for (std::size_t i = 0; i < max_length; ++i) probs[i] = static_cast<double>(counts[i]) / total;
  return LengthPrior(std::move(probs));
}

bool has_boundaries(const Sequence& seq) {
  if (seq.length() < 2) return false;
  if (seq.ids.front() != Vocabulary::kBegin || seq.ids.back() != Vocabulary::kEnd) return false;
  for (std::size_t i = 1; i + 1 < seq.length(); ++i) {
    if (seq.ids[i] == Vocabulary::kBegin || seq.ids[i] == Vocabulary::kEnd) return false;
  }
  return true;
}

}  // namespace ntrf
