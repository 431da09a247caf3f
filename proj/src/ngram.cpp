#include "ntrf/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>

#include "ntrf/io.hpp"

namespace ntrf {

NGramModel NGramModel::train(std::span<const Sequence> dataset, int order, int vocab_size) {
  if (order < 1) throw Error("n-gram order must be >= 1, got " + std::to_string(order));
  if (dataset.empty()) throw Error("train_ngram: empty dataset");
  if (vocab_size < 3) throw Error("train_ngram: vocabulary needs at least 3 symbols");

  // Raw counts per level, keyed by the full n-gram.
  std::vector<std::map<std::vector<int>, std::int64_t>> raw(static_cast<std::size_t>(order));
  for (const auto& seq : dataset) {
    for (int id : seq.ids) {
      if (id < 0 || id >= vocab_size) throw Error("train_ngram: id out of vocabulary range");
    }
    const auto& x = seq.ids;
    for (std::size_t i = 1; i < x.size(); ++i) {
      for (std::size_t k = 1; k <= static_cast<std::size_t>(order) && k <= i + 1; ++k) {
        std::vector<int> gram(x.begin() + static_cast<std::ptrdiff_t>(i + 1 - k),
                              x.begin() + static_cast<std::ptrdiff_t>(i + 1));
        ++raw[k - 1][gram];
      }
    }
  }

  NGramModel model;
  model.order_ = order;
  model.vocab_size_ = vocab_size;
  model.levels_.resize(static_cast<std::size_t>(order));
  for (int k = 1; k <= order; ++k) {
    std::map<std::vector<int>, std::int64_t> counts;
    if (k == order) {
      counts = raw[k - 1];
    } else {
      for (const auto& [gram, n] : raw[k - 1]) {
        if (gram.front() == Vocabulary::kBegin) counts[gram] = n;
      }
      // Each distinct (k+1)-gram is one left extension of its k-suffix.
      for (const auto& [gram, n] : raw[k]) {
        ++counts[std::vector<int>(gram.begin() + 1, gram.end())];
      }
    }
    auto& level = model.levels_[static_cast<std::size_t>(k - 1)];
    for (const auto& [gram, n] : counts) {
      std::vector<int> context(gram.begin(), gram.end() - 1);
      auto& cc = level[context];
      cc.next[gram.back()] += n;
      cc.total += n;
    }
  }
  model.finalize();
  return model;
}

void NGramModel::finalize() {
  discounts_.assign(static_cast<std::size_t>(order_), 0.5);
  for (int k = 1; k <= order_; ++k) {
    std::int64_t n1 = 0, n2 = 0;
    for (const auto& [ctx, cc] : levels_[static_cast<std::size_t>(k - 1)]) {
      for (const auto& [w, n] : cc.next) {
        if (n == 1) ++n1;
        else if (n == 2) ++n2;
      }
    }
    if (n1 > 0 && n2 > 0) {
      discounts_[static_cast<std::size_t>(k - 1)] =
          static_cast<double>(n1) / static_cast<double>(n1 + 2 * n2);
    }
  }
}

std::span<const int> NGramModel::trim(std::span<const int> context) const {
  const auto keep = std::min<std::size_t>(context.size(), static_cast<std::size_t>(order_ - 1));
  return context.last(keep);
}

const NGramModel::ContextCounts* NGramModel::find(int level, std::span<const int> context) const {
  const auto& lv = levels_[static_cast<std::size_t>(level - 1)];
  auto it = lv.find(std::vector<int>(context.begin(), context.end()));
  return it == lv.end() ? nullptr : &it->second;
}

double NGramModel::backoff_mass(int level, const ContextCounts& counts) const {
  return discount(level) * static_cast<double>(counts.next.size()) /
         static_cast<double>(counts.total);
}

// `context` has exactly level-1 ids.
double NGramModel::level_prob(int level, std::span<const int> context, int next) const {
  if (next == Vocabulary::kBegin) return 0.0;
  double lower;
  if (level == 1) {
    lower = 1.0 / static_cast<double>(vocab_size_ - 1);
  } else {
    lower = level_prob(level - 1, context.subspan(1), next);
  }
  const ContextCounts* cc = find(level, context);
  if (cc == nullptr || cc->total == 0) return lower;
  auto it = cc->next.find(next);
  const double n = it == cc->next.end() ? 0.0 : static_cast<double>(it->second);
  return std::max(n - discount(level), 0.0) / static_cast<double>(cc->total) +
         backoff_mass(level, *cc) * lower;
}

double NGramModel::prob(std::span<const int> context, int next) const {
  if (next < 0 || next >= vocab_size_) throw Error("n-gram query id out of range");
  const auto ctx = trim(context);
  return level_prob(static_cast<int>(ctx.size()) + 1, ctx, next);
}

double NGramModel::logprob_conditional(std::span<const int> context, int next) const {
  const double p = prob(context, next);
  return p > 0.0 ? std::log(p) : kNegInf;
}

std::vector<double> NGramModel::conditional_distribution(std::span<const int> context) const {
  const auto ctx = trim(context);
  const auto V = static_cast<std::size_t>(vocab_size_);
  std::vector<double> dist(V, 1.0 / static_cast<double>(vocab_size_ - 1));
  dist[Vocabulary::kBegin] = 0.0;
  const int top = static_cast<int>(ctx.size()) + 1;
  for (int level = 1; level <= top; ++level) {
    const auto c = ctx.last(static_cast<std::size_t>(level - 1));
    const ContextCounts* cc = find(level, c);
    if (cc == nullptr || cc->total == 0) continue;
    const double gamma = backoff_mass(level, *cc);
    const double D = discount(level);
    const auto total = static_cast<double>(cc->total);
    for (auto& p : dist) p *= gamma;
    for (const auto& [w, n] : cc->next) {
      dist[static_cast<std::size_t>(w)] += std::max(static_cast<double>(n) - D, 0.0) / total;
    }
  }
  return dist;
}

double NGramModel::logprob_sentence(const Sequence& seq) const {
  if (seq.length() < 2) throw Error("logprob_sentence: sequence needs at least two ids");
  std::span<const int> x(seq.ids);
  double total = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    total += logprob_conditional(x.first(i), x[i]);
  }
  return total;
}

double NGramModel::logprob_fixed_length(const Sequence& seq) const {
  if (seq.length() == 0) throw Error("logprob_fixed_length: empty sequence");
  if (!has_boundaries(seq)) {
    throw Error("logprob_fixed_length: sequence must be begin, payload, end");
  }
  std::span<const int> x(seq.ids);
  double total = 0.0;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    const auto ctx = x.first(i);
    total += logprob_conditional(ctx, x[i]) - std::log1p(-prob(ctx, Vocabulary::kEnd));
  }
  return total;
}

Sequence NGramModel::sample_fixed_length(std::size_t length, Rng& rng) const {
  if (length < 2) throw Error("sample_fixed_length: length must be >= 2 with boundaries");
  Sequence seq;
  seq.ids.reserve(length);
  seq.ids.push_back(Vocabulary::kBegin);
  for (std::size_t i = 1; i + 1 < length; ++i) {
    auto dist = conditional_distribution(seq.ids);
    dist[Vocabulary::kEnd] = 0.0;
    seq.ids.push_back(static_cast<int>(rng.categorical(dist)));
  }
  seq.ids.push_back(Vocabulary::kEnd);
  return seq;
}

nlohmann::json NGramModel::to_json() const {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& level : levels_) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [ctx, cc] : level) {
      nlohmann::json next = nlohmann::json::array();
      for (const auto& [w, n] : cc.next) next.push_back({w, n});
      entries.push_back({{"context", ctx}, {"next", std::move(next)}});
    }
    levels.push_back(std::move(entries));
  }
  return {{"format", "ntrf-ngram"},
          {"version", kFormatVersion},
          {"smoothing", "interpolated-kneser-ney"},
          {"order", order_},
          {"vocab_size", vocab_size_},
          {"discounts", discounts_},
          {"levels", std::move(levels)}};
}

NGramModel NGramModel::from_json(const nlohmann::json& doc) {
  check_format(doc, "ntrf-ngram", kFormatVersion);
  NGramModel model;
  try {
    model.order_ = doc.at("order").get<int>();
    model.vocab_size_ = doc.at("vocab_size").get<int>();
    if (model.order_ < 1 || model.vocab_size_ < 3) throw Error("bad order or vocab_size");
    const auto& levels = doc.at("levels");
    if (levels.size() != static_cast<std::size_t>(model.order_)) {
      throw Error("level count does not match order");
    }
    model.levels_.resize(levels.size());
    for (std::size_t k = 0; k < levels.size(); ++k) {
      for (const auto& entry : levels[k]) {
        auto ctx = entry.at("context").get<std::vector<int>>();
        if (ctx.size() != k) throw Error("context length does not match its level");
        auto& cc = model.levels_[k][ctx];
        for (const auto& pair : entry.at("next")) {
          const int w = pair.at(0).get<int>();
          const auto n = pair.at(1).get<std::int64_t>();
          if (w < 0 || w >= model.vocab_size_ || n <= 0) throw Error("bad count entry");
          cc.next[w] += n;
          cc.total += n;
        }
      }
    }
    model.discounts_ = doc.at("discounts").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed n-gram model: ") + e.what());
  }
  if (model.discounts_.size() != static_cast<std::size_t>(model.order_)) {
    throw Error("malformed n-gram model: discount count does not match order");
  }
  for (double d : model.discounts_) {
    if (!(d >= 0.0 && d <= 1.0)) throw Error("malformed n-gram model: discount outside [0, 1]");
  }
  return model;
}

void NGramModel::save(const std::filesystem::path& path) const {
  write_json_atomic(path, to_json());
}

NGramModel NGramModel::load(const std::filesystem::path& path) {
  return from_json(read_json(path));
}

void NGramModel::write_arpa(std::ostream& out, const Vocabulary& vocab) const {
  if (vocab.size() != vocab_size_) throw Error("write_arpa: vocabulary size mismatch");
  auto log10p = [](double p) { return p > 0.0 ? std::log10(p) : -99.0; };
  // Every context that is extended at a higher level carries a back-off
  // weight; for an interpolated model it equals the interpolation mass.
  auto context_bow = [&](int level, const std::vector<int>& gram) -> std::optional<double> {
    if (level >= order_) return std::nullopt;
    const ContextCounts* cc = find(level + 1, gram);
    if (cc == nullptr || cc->total == 0) return std::nullopt;
    return std::log10(backoff_mass(level + 1, *cc));
  };
  auto name = [&](const std::vector<int>& gram) {
    std::string s;
    for (int id : gram) {
      if (!s.empty()) s += ' ';
      s += vocab.symbol(id);
    }
    return s;
  };

  std::vector<std::vector<std::vector<int>>> grams(static_cast<std::size_t>(order_));
  for (int w = 0; w < vocab_size_; ++w) grams[0].push_back({w});
  for (int k = 2; k <= order_; ++k) {
    for (const auto& [ctx, cc] : levels_[static_cast<std::size_t>(k - 1)]) {
      for (const auto& [w, n] : cc.next) {
        auto g = ctx;
        g.push_back(w);
        grams[static_cast<std::size_t>(k - 1)].push_back(std::move(g));
      }
    }
  }

  out << "\n\\data\\\n";
  for (int k = 1; k <= order_; ++k) {
    out << "ngram " << k << "=" << grams[static_cast<std::size_t>(k - 1)].size() << "\n";
  }
  out << std::setprecision(7);
  for (int k = 1; k <= order_; ++k) {
    out << "\n\\" << k << "-grams:\n";
    for (const auto& g : grams[static_cast<std::size_t>(k - 1)]) {
      std::span<const int> gs(g);
      const double p = level_prob(k, gs.first(g.size() - 1), g.back());
      out << log10p(p) << '\t' << name(g);
      if (auto bow = context_bow(k, g)) out << '\t' << *bow;
      out << '\n';
    }
  }
  out << "\n\\end\\\n";
}

}  // namespace ntrf
