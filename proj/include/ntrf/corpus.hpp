#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ntrf {

/// How a text line is split into tokens.
enum class TokenLevel { Word, Char };

TokenLevel parse_token_level(std::string_view name);
std::string_view to_string(TokenLevel level);

/// Bidirectional symbol <-> id map. Ids 0, 1 and 2 are always the begin,
/// end and unknown symbols; ordinary tokens follow.
class Vocabulary {
 public:
  static constexpr int kBegin = 0;
  static constexpr int kEnd = 1;
  static constexpr int kUnknown = 2;
  static constexpr std::string_view kBeginSymbol = "<s>";
  static constexpr std::string_view kEndSymbol = "</s>";
  static constexpr std::string_view kUnknownSymbol = "<unk>";

  Vocabulary();
  /// Reserved symbols followed by `tokens` in the given order.
  explicit Vocabulary(std::span<const std::string> tokens);

  int size() const { return static_cast<int>(symbols_.size()); }
  /// Symbols that may appear strictly inside a sequence (everything except
  /// begin and end, unknown included).
  int payload_size() const { return size() - 2; }
  int begin_id() const { return kBegin; }
  int end_id() const { return kEnd; }
  int unknown_id() const { return kUnknown; }

  /// Id of `token`, or the unknown id.
  int id(std::string_view token) const;
  std::optional<int> find(std::string_view token) const;
  const std::string& symbol(int id) const;
  const std::vector<std::string>& symbols() const { return symbols_; }

  /// Three reserved lines, then one token per line; the id is the line index.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return symbols_ == other.symbols_; }

 private:
  void add(std::string token);

  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> ids_;
};

/// Token ids of one sentence. The length counts every id, including
/// attached begin/end symbols.
struct Sequence {
  std::vector<int> ids;

  std::size_t length() const { return ids.size(); }
  bool operator==(const Sequence&) const = default;
};

/// Marginal distribution of sequence lengths 1..max_length.
class LengthPrior {
 public:
  LengthPrior() = default;
  /// probs[l - 1] is the probability of length l.
  explicit LengthPrior(std::vector<double> probs);

  std::size_t max_length() const { return probs_.size(); }
  double prob(std::size_t length) const;
  /// -inf for lengths outside the support.
  double log_prob(std::size_t length) const;
  bool supports(std::size_t length) const { return prob(length) > 0.0; }
  /// Lengths with non-zero probability, ascending.
  std::vector<std::size_t> support() const;
  const std::vector<double>& probs() const { return probs_; }

 private:
  std::vector<double> probs_;
};

std::vector<std::string> tokenize(std::string_view line, TokenLevel level);

/// Non-blank lines of a UTF-8 text file.
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Tokens seen at least `min_count` times, ordered by descending count then
/// lexicographically. `max_size` caps the number of ordinary tokens (0 = no cap).
Vocabulary build_vocabulary(std::span<const std::string> lines, TokenLevel level,
                            std::size_t min_count = 1, std::size_t max_size = 0);

/// Throws if the encoded length exceeds `max_length` (0 = unbounded).
Sequence encode(std::string_view line, const Vocabulary& vocab, TokenLevel level,
                bool attach_boundaries, std::size_t max_length = 0);

std::vector<Sequence> encode_all(std::span<const std::string> lines, const Vocabulary& vocab,
                                 TokenLevel level, bool attach_boundaries,
                                 std::size_t max_length = 0);

/// Inverse of encode: drops begin/end and joins tokens (space for words).
std::string decode(const Sequence& seq, const Vocabulary& vocab, TokenLevel level);

LengthPrior empirical_length_prior(std::span<const Sequence> dataset, std::size_t max_length);

/// True if `seq` is begin, payload symbols, end.
bool has_boundaries(const Sequence& seq);

}  // namespace ntrf
