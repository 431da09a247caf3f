#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "ntrf/common.hpp"
#include "ntrf/corpus.hpp"

namespace ntrf {

/// Interpolated Kneser-Ney n-gram model over vocabulary ids.
///
/// Level k (1..order) holds k-gram counts keyed by their (k-1)-id context.
/// The top level keeps raw counts; lower levels keep continuation counts
/// (number of distinct left extensions), except for n-grams that start with
/// the begin symbol, which cannot be extended and keep raw counts. Each level
/// uses one absolute discount D = n1 / (n1 + 2 n2) estimated from its own
/// count-of-counts, or 0.5 when n1 or n2 is zero. The lowest level
/// interpolates with a uniform distribution over every symbol except begin,
/// which is never predicted.
class NGramModel {
 public:
  static constexpr int kFormatVersion = 1;

  /// Counts n-grams of every sequence, predicting positions 1..l-1.
  static NGramModel train(std::span<const Sequence> dataset, int order, int vocab_size);

  int order() const { return order_; }
  int vocab_size() const { return vocab_size_; }
  /// Discount of level k, 1 <= k <= order.
  double discount(int k) const { return discounts_.at(static_cast<std::size_t>(k - 1)); }

  /// P(next | context). Only the last order-1 ids of `context` are used.
  double prob(std::span<const int> context, int next) const;
  double logprob_conditional(std::span<const int> context, int next) const;
  /// P(. | context) for all ids; entry for begin is 0.
  std::vector<double> conditional_distribution(std::span<const int> context) const;

  /// Ordinary sentence log-probability: sum of conditionals for positions
  /// 1..l-1 of a sequence that starts with begin.
  double logprob_sentence(const Sequence& seq) const;

  /// log p(x | length). Requires begin/end boundaries. Interior positions
  /// are renormalized over non-end symbols; the final end is forced.
  double logprob_fixed_length(const Sequence& seq) const;

  /// Draws a begin/payload/end sequence of exactly `length` ids (>= 2) from
  /// the fixed-length distribution.
  Sequence sample_fixed_length(std::size_t length, Rng& rng) const;

  nlohmann::json to_json() const;
  static NGramModel from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static NGramModel load(const std::filesystem::path& path);

  /// Standard ARPA back-off listing of every observed n-gram.
  void write_arpa(std::ostream& out, const Vocabulary& vocab) const;

 private:
  struct ContextCounts {
    std::map<int, std::int64_t> next;
    std::int64_t total = 0;
  };
  using Level = std::map<std::vector<int>, ContextCounts>;

  void finalize();
  const ContextCounts* find(int level, std::span<const int> context) const;
  double level_prob(int level, std::span<const int> context, int next) const;
  /// Weight given to the lower level at a context.
  double backoff_mass(int level, const ContextCounts& counts) const;
  std::span<const int> trim(std::span<const int> context) const;

  int order_ = 0;
  int vocab_size_ = 0;
  std::vector<Level> levels_;
  std::vector<double> discounts_;
};

}  // namespace ntrf
