#include "ntrf/trf_model.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <thread>

#include "ntrf/io.hpp"

namespace ntrf {

ReferenceKind parse_reference_kind(std::string_view name) {
  if (name == "uniform") return ReferenceKind::Uniform;
  if (name == "ngram") return ReferenceKind::NGram;
  if (name == "lstm") return ReferenceKind::LstmLm;
  throw Error("unknown reference kind '" + std::string(name) + "' (uniform, ngram, lstm)");
}

std::string_view to_string(ReferenceKind kind) {
  switch (kind) {
    case ReferenceKind::Uniform: return "uniform";
    case ReferenceKind::NGram: return "ngram";
    case ReferenceKind::LstmLm: return "lstm";
  }
  return "?";
}

ReferenceDistribution ReferenceDistribution::uniform(int vocab_size) {
  if (vocab_size < 3) throw Error("uniform reference needs at least 3 symbols");
  ReferenceDistribution r;
  r.kind_ = ReferenceKind::Uniform;
  r.vocab_size_ = vocab_size;
  return r;
}

ReferenceDistribution ReferenceDistribution::ngram(std::shared_ptr<const NGramModel> model) {
  if (!model) throw Error("n-gram reference: null model");
  ReferenceDistribution r;
  r.kind_ = ReferenceKind::NGram;
  r.vocab_size_ = model->vocab_size();
  r.ngram_ = std::move(model);
  return r;
}

ReferenceDistribution ReferenceDistribution::lstm(std::shared_ptr<const LstmLmParams> model) {
  if (!model) throw Error("lstm reference: null model");
  ReferenceDistribution r;
  r.kind_ = ReferenceKind::LstmLm;
  r.vocab_size_ = model->config.vocab_size;
  r.lstm_ = std::move(model);
  return r;
}

double ReferenceDistribution::log_prob(const Sequence& x) const {
  switch (kind_) {
    case ReferenceKind::Uniform:
      if (!has_boundaries(x)) throw Error("reference: sequence must be begin, payload, end");
      return -static_cast<double>(x.length() - 2) * std::log(static_cast<double>(vocab_size_ - 2));
    case ReferenceKind::NGram:
      return ngram_->logprob_fixed_length(x);
    case ReferenceKind::LstmLm:
      return lstm_lm_logprob(*lstm_, x);
  }
  return kNegInf;
}

void TrfModel::validate() const {
  if (zeta.size() != prior.max_length()) {
    throw Error("TRF model: zeta has " + std::to_string(zeta.size()) +
                " entries but the length prior has " + std::to_string(prior.max_length()));
  }
  for (double z : zeta) {
    if (!std::isfinite(z)) throw Error("TRF model: non-finite zeta");
  }
  if (reference.vocab_size() != potential.config.vocab_size) {
    throw Error("TRF model: reference and potential disagree on the vocabulary size");
  }
}

double log_joint_given_phi(const TrfModel& model, const Sequence& x, double phi) {
  const std::size_t l = x.length();
  if (!model.prior.supports(l)) return kNegInf;
  return model.prior.log_prob(l) + model.reference.log_prob(x) + phi - model.zeta[l - 1];
}

double log_joint(const TrfModel& model, const Sequence& x) {
  if (!model.prior.supports(x.length())) return kNegInf;
  return log_joint_given_phi(model, x, potential_value(model.potential, x));
}

double enumeration_size(int vocab_size, std::size_t length) {
  if (length < 2) return 0.0;
  return std::pow(static_cast<double>(vocab_size - 2), static_cast<double>(length - 2));
}

namespace {

// Block size of the pairwise reduction; results do not depend on threads.
constexpr std::size_t kBlock = 4096;

// Sequence number `index` of the lexicographic enumeration.
Sequence nth_sequence(int vocab_size, std::size_t length, std::size_t index) {
  Sequence x;
  x.ids.assign(length, Vocabulary::kUnknown);
  x.ids.front() = Vocabulary::kBegin;
  x.ids.back() = Vocabulary::kEnd;
  const auto base = static_cast<std::size_t>(vocab_size - 2);
  for (std::size_t pos = length - 2; pos >= 1; --pos) {
    x.ids[pos] = Vocabulary::kUnknown + static_cast<int>(index % base);
    index /= base;
  }
  return x;
}

void advance(Sequence& x, int vocab_size) {
  for (std::size_t pos = x.length() - 2; pos >= 1; --pos) {
    if (++x.ids[pos] < vocab_size) return;
    x.ids[pos] = Vocabulary::kUnknown;
  }
}

}  // namespace

double exact_log_z(const TrfModel& model, std::size_t length, const EnumerationOptions& opts) {
  if (length < 2) throw Error("exact_log_z: lengths below 2 hold no begin/end sequence");
  const int V = model.vocab_size();
  const double size = enumeration_size(V, length);
  if (size > opts.budget) {
    throw EnumerationBudgetError("exact_log_z: length " + std::to_string(length) + " needs " +
                                 format_double(size) + " sequences, above the budget of " +
                                 format_double(opts.budget));
  }
  const auto count = static_cast<std::size_t>(size);
  const std::size_t blocks = (count + kBlock - 1) / kBlock;
  std::vector<double> block_sums(blocks, kNegInf);

  auto work = [&](std::size_t first_block, std::size_t stride) {
    std::vector<double> terms;
    terms.reserve(kBlock);
    for (std::size_t b = first_block; b < blocks; b += stride) {
      const std::size_t begin = b * kBlock;
      const std::size_t end = std::min(count, begin + kBlock);
      terms.clear();
      Sequence x = nth_sequence(V, length, begin);
      for (std::size_t i = begin; i < end; ++i) {
        terms.push_back(model.reference.log_prob(x) + potential_value(model.potential, x));
        if (i + 1 < end) advance(x, V);
      }
      block_sums[b] = log_sum_exp(terms);
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(blocks)));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }
  return log_sum_exp(block_sums);
}

std::vector<double> exact_log_normalizers(const TrfModel& model, const EnumerationOptions& opts) {
  std::vector<double> out(model.max_length(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t l : model.prior.support()) out[l - 1] = exact_log_z(model, l, opts);
  return out;
}

NllReport nll_with_log_z(const TrfModel& model, std::span<const Sequence> dataset,
                         std::span<const double> log_z) {
  if (dataset.empty()) throw Error("nll: empty dataset");
  NllReport report;
  double total = 0.0;
  for (const auto& x : dataset) {
    const std::size_t l = x.length();
    if (!model.prior.supports(l)) {
      if (std::find(report.unsupported_lengths.begin(), report.unsupported_lengths.end(), l) ==
          report.unsupported_lengths.end()) {
        report.unsupported_lengths.push_back(l);
      }
      continue;
    }
    const double phi = potential_value(model.potential, x);
    total -= model.prior.log_prob(l) + model.reference.log_prob(x) + phi - log_z[l - 1];
  }
  if (!report.unsupported_lengths.empty()) {
    std::sort(report.unsupported_lengths.begin(), report.unsupported_lengths.end());
    std::string list;
    for (auto l : report.unsupported_lengths) list += (list.empty() ? "" : ", ") + std::to_string(l);
    std::cerr << "warning: NLL is infinite; lengths with zero prior probability: " << list << "\n";
    report.mean = std::numeric_limits<double>::infinity();
    return report;
  }
  report.mean = total / static_cast<double>(dataset.size());
  return report;
}

NllReport nll(const TrfModel& model, std::span<const Sequence> dataset, ZetaSource source,
              const EnumerationOptions& opts) {
  if (source == ZetaSource::Stored) return nll_with_log_z(model, dataset, model.zeta);
  std::vector<double> log_z(model.max_length(), std::numeric_limits<double>::quiet_NaN());
  for (const auto& x : dataset) {
    const std::size_t l = x.length();
    if (model.prior.supports(l) && std::isnan(log_z[l - 1])) {
      log_z[l - 1] = exact_log_z(model, l, opts);
    }
  }
  return nll_with_log_z(model, dataset, log_z);
}

ZetaGap zeta_gap_given(const TrfModel& model, std::span<const double> exact) {
  ZetaGap out;
  out.gap.assign(model.max_length(), 0.0);
  for (std::size_t l : model.prior.support()) {
    out.gap[l - 1] = model.zeta[l - 1] - exact[l - 1];
    out.squared_norm += out.gap[l - 1] * out.gap[l - 1];
  }
  return out;
}

ZetaGap zeta_gap(const TrfModel& model, const EnumerationOptions& opts) {
  return zeta_gap_given(model, exact_log_normalizers(model, opts));
}

void save_trf_bundle(const std::filesystem::path& path, const TrfBundle& bundle,
                     const TrfBundlePaths& paths) {
  const auto& m = bundle.model;
  m.validate();
  m.potential.save(resolve_beside(path, paths.potential));
  bundle.vocab.save(resolve_beside(path, paths.vocab));
  nlohmann::json reference = {{"kind", to_string(m.reference.kind())}};
  if (m.reference.kind() != ReferenceKind::Uniform) {
    if (paths.reference.empty()) throw Error("save_trf_bundle: reference model path required");
    reference["path"] = paths.reference;
  }
  nlohmann::json doc = {{"format", "ntrf-trf"},
                        {"version", TrfModel::kFormatVersion},
                        {"level", to_string(bundle.level)},
                        {"max_length", m.max_length()},
                        {"vocab", paths.vocab},
                        {"potential", paths.potential},
                        {"reference", reference},
                        {"length_prior", m.prior.probs()},
                        {"zeta", m.zeta}};
  write_json_atomic(path, doc);
}

TrfBundle load_trf_bundle(const std::filesystem::path& path) {
  const auto doc = read_json(path);
  check_format(doc, "ntrf-trf", TrfModel::kFormatVersion);
  TrfBundle bundle;
  try {
    bundle.level = parse_token_level(doc.at("level").get<std::string>());
    bundle.vocab = Vocabulary::load(resolve_beside(path, doc.at("vocab").get<std::string>()));
    bundle.model.potential =
        PotentialParams::load(resolve_beside(path, doc.at("potential").get<std::string>()));
    bundle.model.prior = LengthPrior(doc.at("length_prior").get<std::vector<double>>());
    bundle.model.zeta = doc.at("zeta").get<std::vector<double>>();
    if (doc.at("max_length").get<std::size_t>() != bundle.model.zeta.size()) {
      throw Error("max_length does not match zeta");
    }
    const auto& ref = doc.at("reference");
    switch (parse_reference_kind(ref.at("kind").get<std::string>())) {
      case ReferenceKind::Uniform:
        bundle.model.reference = ReferenceDistribution::uniform(bundle.vocab.size());
        break;
      case ReferenceKind::NGram:
        bundle.model.reference = ReferenceDistribution::ngram(std::make_shared<NGramModel>(
            NGramModel::load(resolve_beside(path, ref.at("path").get<std::string>()))));
        break;
      case ReferenceKind::LstmLm:
        bundle.model.reference = ReferenceDistribution::lstm(std::make_shared<LstmLmParams>(
            LstmLmParams::load(resolve_beside(path, ref.at("path").get<std::string>()))));
        break;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed TRF bundle " + path.string() + ": " + e.what());
  }
  if (bundle.vocab.size() != bundle.model.vocab_size()) {
    throw Error("TRF bundle: vocabulary size does not match the potential");
  }
  bundle.model.validate();
  return bundle;
}

}  // namespace ntrf
