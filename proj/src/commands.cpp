#include "ntrf/commands.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ntrf/io.hpp"
#include "ntrf/lstm_lm.hpp"
#include "ntrf/ngram.hpp"
#include "ntrf/noise.hpp"

namespace ntrf {

namespace {

constexpr std::uint64_t kInitStream = 0x494E4954ull;
constexpr std::uint64_t kLstmShuffleStream = 0x4C53544Dull;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<Sequence> encode_split(const ExperimentConfig& cfg, const std::string& path,
                                   const Vocabulary& vocab) {
  if (path.empty()) return {};
  const auto lines = read_lines(cfg.resolve(path));
  return encode_all(lines, vocab, cfg.corpus.level, true, cfg.corpus.max_length);
}

std::filesystem::path prepare_output(const ExperimentConfig& cfg) {
  const auto dir = cfg.output_path();
  std::filesystem::create_directories(dir);
  return dir;
}

double mean_sentence_nll(const NGramModel& model, std::span<const Sequence> data) {
  if (data.empty()) return kNaN;
  double total = 0.0;
  for (const auto& x : data) total -= model.logprob_sentence(x);
  return total / static_cast<double>(data.size());
}

double mean_lstm_nll(const LstmLmParams& model, std::span<const Sequence> data) {
  if (data.empty()) return kNaN;
  double total = 0.0;
  for (const auto& x : data) total -= lstm_lm_logprob(model, x);
  return total / static_cast<double>(data.size());
}

std::string csv_number(double v) { return format_double(v); }

ReferenceDistribution make_reference(const ExperimentConfig& cfg, const CorpusData& corpus,
                                     const std::filesystem::path& out_dir,
                                     std::string& saved_name, std::ostream& log) {
  const int vocab_size = corpus.vocab.size();
  switch (cfg.reference.kind) {
    case ReferenceKind::Uniform:
      saved_name.clear();
      return ReferenceDistribution::uniform(vocab_size);
    case ReferenceKind::NGram: {
      auto model = cfg.reference.model.empty()
                       ? NGramModel::train(corpus.train, cfg.reference.order, vocab_size)
                       : NGramModel::load(cfg.resolve(cfg.reference.model));
      if (model.vocab_size() != vocab_size) {
        throw ConfigError("config key 'reference.model': n-gram vocabulary size " +
                          std::to_string(model.vocab_size()) + " differs from the corpus (" +
                          std::to_string(vocab_size) + ")");
      }
      saved_name = "reference_ngram.json";
      model.save(out_dir / saved_name);
      log << "reference: " << model.order() << "-gram\n";
      return ReferenceDistribution::ngram(std::make_shared<const NGramModel>(std::move(model)));
    }
    case ReferenceKind::LstmLm: {
      auto model = LstmLmParams::load(cfg.resolve(cfg.reference.model));
      if (model.config.vocab_size != vocab_size) {
        throw ConfigError("config key 'reference.model': LSTM vocabulary size " +
                          std::to_string(model.config.vocab_size) +
                          " differs from the corpus (" + std::to_string(vocab_size) + ")");
      }
      const auto vocab_file = resolve_beside(cfg.resolve(cfg.reference.model), "vocab.txt");
      if (std::filesystem::exists(vocab_file) && !(Vocabulary::load(vocab_file) == corpus.vocab)) {
        throw ConfigError("config key 'reference.model': the LSTM was trained with a different "
                          "vocabulary (" + vocab_file.string() + ")");
      }
      saved_name = "reference_lstm.json";
      model.save(out_dir / saved_name);
      log << "reference: lstm\n";
      return ReferenceDistribution::lstm(std::make_shared<const LstmLmParams>(std::move(model)));
    }
  }
  throw Error("unreachable reference kind");
}

std::string checkpoint_name(std::size_t epoch) {
  std::ostringstream name;
  name << "epoch_" << std::setw(3) << std::setfill('0') << epoch;
  return name.str();
}

std::filesystem::path member_vocab_path(const ExperimentConfig& cfg, const MemberSection& m) {
  if (!m.vocab.empty()) return cfg.resolve(m.vocab);
  return resolve_beside(cfg.resolve(m.model), "vocab.txt");
}

std::vector<ScorerMember> load_members(const ExperimentConfig& cfg) {
  if (cfg.members.empty()) throw ConfigError("config needs at least one [member.<name>] section");
  std::vector<ScorerMember> members;
  for (const auto& m : cfg.members) {
    const auto model_path = cfg.resolve(m.model);
    std::shared_ptr<const SentenceScorer> scorer;
    if (m.kind == "trf") {
      auto bundle = load_trf_bundle(model_path);
      scorer = std::make_shared<TrfScorer>(
          std::make_shared<const TrfModel>(std::move(bundle.model)),
          std::make_shared<const Vocabulary>(std::move(bundle.vocab)), bundle.level);
    } else {
      auto vocab = std::make_shared<const Vocabulary>(Vocabulary::load(member_vocab_path(cfg, m)));
      if (m.kind == "ngram") {
        scorer = std::make_shared<NGramScorer>(
            std::make_shared<const NGramModel>(NGramModel::load(model_path)), vocab,
            cfg.corpus.level);
      } else {
        scorer = std::make_shared<LstmScorer>(
            std::make_shared<const LstmLmParams>(LstmLmParams::load(model_path)), vocab,
            cfg.corpus.level);
      }
    }
    members.push_back({m.name, scorer, m.weight});
  }
  return members;
}

}  // namespace

CorpusData load_corpus(const ExperimentConfig& cfg) {
  if (cfg.corpus.train.empty()) throw ConfigError("config key 'corpus.train' is required");
  const auto lines = read_lines(cfg.resolve(cfg.corpus.train));
  CorpusData data;
  data.vocab = build_vocabulary(lines, cfg.corpus.level, cfg.corpus.min_count,
                                cfg.corpus.max_vocab);
  data.train = encode_all(lines, data.vocab, cfg.corpus.level, true, cfg.corpus.max_length);
  data.valid = encode_split(cfg, cfg.corpus.valid, data.vocab);
  data.test = encode_split(cfg, cfg.corpus.test, data.vocab);
  data.prior = empirical_length_prior(data.train, cfg.corpus.max_length);
  return data;
}

NGramRunResult cmd_train_ngram(const ExperimentConfig& cfg, std::ostream& log) {
  const auto corpus = load_corpus(cfg);
  const auto out = prepare_output(cfg);
  const auto model = NGramModel::train(corpus.train, cfg.ngram.order, corpus.vocab.size());

  NGramRunResult result;
  result.model = out / "ngram.json";
  result.train_nll = mean_sentence_nll(model, corpus.train);
  result.valid_nll = mean_sentence_nll(model, corpus.valid);

  corpus.vocab.save(out / "vocab.txt");
  model.save(result.model);
  std::ostringstream arpa;
  model.write_arpa(arpa, corpus.vocab);
  write_text_atomic(out / "ngram.arpa", arpa.str());
  write_text_atomic(out / "ngram_metrics.csv",
                    "order,train_nll,valid_nll\n" + std::to_string(model.order()) + "," +
                        csv_number(result.train_nll) + "," + csv_number(result.valid_nll) + "\n");
  log << "trained " << model.order() << "-gram on " << corpus.train.size()
      << " sentences; train NLL " << format_double(result.train_nll) << ", valid NLL "
      << format_double(result.valid_nll) << "\nwrote " << result.model.string() << "\n";
  return result;
}

LstmRunResult cmd_train_lstm(const ExperimentConfig& cfg, std::ostream& log) {
  const auto corpus = load_corpus(cfg);
  const auto out = prepare_output(cfg);

  LstmLmConfig lc;
  lc.vocab_size = corpus.vocab.size();
  lc.embedding = cfg.lstm.embedding;
  lc.hidden = cfg.lstm.hidden;
  lc.layers = cfg.lstm.layers;
  lc.max_length = static_cast<int>(cfg.lstm.max_length ? cfg.lstm.max_length
                                                       : cfg.corpus.max_length);
  Rng init(cfg.seed, kInitStream);
  auto params = LstmLmParams::random(lc, init, cfg.lstm.init_scale);

  LstmRunResult result;
  result.model = out / "lstm.json";
  std::string metrics = "epoch,train_nll,valid_nll\n";
  auto record = [&](std::size_t epoch) {
    result.train_nll.push_back(mean_lstm_nll(params, corpus.train));
    result.valid_nll.push_back(mean_lstm_nll(params, corpus.valid));
    metrics += std::to_string(epoch) + "," + csv_number(result.train_nll.back()) + "," +
               csv_number(result.valid_nll.back()) + "\n";
    log << "epoch " << epoch << " train NLL " << format_double(result.train_nll.back())
        << " valid NLL " << format_double(result.valid_nll.back()) << "\n";
  };
  record(0);

  Rng order_rng(cfg.seed, kLstmShuffleStream);
  std::vector<std::size_t> order(corpus.train.size());
  std::vector<Sequence> batch;
  for (std::size_t epoch = 1; epoch <= cfg.lstm.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.lstm.batch_size) {
      batch.clear();
      const std::size_t end = std::min(order.size(), start + cfg.lstm.batch_size);
      for (std::size_t i = start; i < end; ++i) batch.push_back(corpus.train[order[i]]);
      lstm_lm_train_step(params, batch, cfg.lstm.lr);
    }
    record(epoch);
  }

  corpus.vocab.save(out / "vocab.txt");
  params.save(result.model);
  write_text_atomic(out / "lstm_metrics.csv", metrics);
  log << "wrote " << result.model.string() << "\n";
  return result;
}

TrfRunResult cmd_train_trf(const ExperimentConfig& cfg, std::ostream& log) {
  const auto corpus = load_corpus(cfg);
  const auto out = prepare_output(cfg);
  const int vocab_size = corpus.vocab.size();

  std::string reference_file;
  auto reference = make_reference(cfg, corpus, out, reference_file, log);

  auto noise_base = std::make_shared<const NGramModel>(
      NGramModel::train(corpus.train, cfg.noise.order, vocab_size));
  noise_base->save(out / "noise_ngram.json");
  const NoiseDistribution noise(corpus.prior, noise_base);

  Rng init(cfg.seed, kInitStream);
  TrfModel model{PotentialParams::random(cfg.potential_config(vocab_size), init,
                                         cfg.potential.init_scale),
                 std::vector<double>(cfg.corpus.max_length, 0.0), corpus.prior,
                 std::move(reference)};

  const NceConfig nce = cfg.nce_config();
  auto on_epoch = [&](const EpochRecord& r, const TrfModel& m) {
    log << "epoch " << r.epoch << " objective " << format_double(r.mean_objective)
        << " train NLL proxy " << format_double(r.train_nll_proxy);
    if (nce.track_exact) {
      log << " valid NLL " << format_double(r.valid_nll) << " zeta gap "
          << format_double(r.zeta_gap);
    }
    log << "\n";
    if (cfg.train.checkpoints) {
      const auto dir = out / "checkpoints" / checkpoint_name(r.epoch);
      std::filesystem::create_directories(dir);
      TrfBundlePaths paths;
      if (!reference_file.empty()) paths.reference = "../../" + reference_file;
      save_trf_bundle(dir / "trf.json", {m, corpus.vocab, cfg.corpus.level}, paths);
    }
  };

  TrfRunResult result;
  result.log = train_nce(model, noise, corpus.train, corpus.valid, nce, on_epoch);
  result.bundle = out / "trf.json";

  TrfBundlePaths paths;
  paths.reference = reference_file;
  save_trf_bundle(result.bundle, {model, corpus.vocab, cfg.corpus.level}, paths);
  std::ostringstream steps, epochs;
  result.log.write_steps_csv(steps);
  result.log.write_epochs_csv(epochs);
  write_text_atomic(out / "steps.csv", steps.str());
  write_text_atomic(out / "epochs.csv", epochs.str());
  cfg.with_absolute_paths().save(out / "config.ini");
  log << "wrote " << result.bundle.string() << "\n";
  return result;
}

NllReport cmd_eval(const std::filesystem::path& bundle_path, const std::filesystem::path& data,
                   bool exact_z, const EnumerationOptions& options, std::ostream& out) {
  const auto bundle = load_trf_bundle(bundle_path);
  const auto lines = read_lines(data);
  const auto seqs = encode_all(lines, bundle.vocab, bundle.level, true);
  NllReport report;
  try {
    report = nll(bundle.model, seqs, exact_z ? ZetaSource::Exact : ZetaSource::Stored, options);
  } catch (const EnumerationBudgetError& e) {
    throw Error(std::string(e.what()) +
                "; rerun without --exact-z to use the stored zeta, or raise --budget");
  }
  out << "sentences " << seqs.size() << "\nzeta " << (exact_z ? "exact" : "stored")
      << "\nnll " << format_double(report.mean) << "\n";
  if (!report.unsupported_lengths.empty()) {
    out << "unsupported_lengths";
    for (auto l : report.unsupported_lengths) out << ' ' << l;
    out << "\n";
  }
  return report;
}

RescoreResult cmd_rescore(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.rescore.nbest.empty() || cfg.rescore.references.empty()) {
    throw ConfigError("config keys 'rescore.nbest' and 'rescore.references' are required");
  }
  const auto members = load_members(cfg);
  const auto out = prepare_output(cfg);
  const std::size_t k = members.size();
  const double aw = cfg.rescore.acoustic_weight;

  const auto test_lists = read_nbest(cfg.resolve(cfg.rescore.nbest));
  const auto test_table =
      build_score_table(members, test_lists, read_references(cfg.resolve(cfg.rescore.references)));
  const bool tuned = !cfg.rescore.dev_nbest.empty();
  ScoreTable dev_table;
  if (tuned) {
    dev_table = build_score_table(members, read_nbest(cfg.resolve(cfg.rescore.dev_nbest)),
                                  read_references(cfg.resolve(cfg.rescore.dev_references)));
  }

  RescoreResult result;
  for (const auto& m : members) result.member_names.push_back(m.name);
  auto add_system = [&](std::string name, std::vector<double> weights) {
    RescoreSystem s{std::move(name), weights, tuned ? corpus_wer(dev_table, weights, aw) : kNaN,
                    corpus_wer(test_table, weights, aw)};
    result.systems.push_back(std::move(s));
  };

  add_system("acoustic", std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> weights(k, 0.0);
    if (tuned) {
      std::unique_ptr<bool[]> flags(new bool[k]());
      flags[i] = true;
      weights = tune_weights(dev_table, cfg.rescore.step, cfg.rescore.max_weight,
                             std::span<const bool>(flags.get(), k), aw)
                    .weights;
    } else {
      weights[i] = members[i].weight;
    }
    add_system(members[i].name, weights);
  }
  std::vector<double> combined(k);
  if (tuned) {
    combined = tune_weights(dev_table, cfg.rescore.step, cfg.rescore.max_weight, {}, aw).weights;
  } else {
    for (std::size_t i = 0; i < k; ++i) combined[i] = members[i].weight;
  }
  add_system("combined", combined);

  std::string csv = "system";
  for (const auto& name : result.member_names) csv += ",weight_" + name;
  csv += ",dev_wer,test_wer\n";
  for (const auto& s : result.systems) {
    csv += s.name;
    for (double w : s.weights) csv += "," + csv_number(w);
    csv += "," + csv_number(s.dev_wer) + "," + csv_number(s.test_wer) + "\n";
    log << s.name << " test WER " << format_double(s.test_wer) << "\n";
  }
  write_text_atomic(out / "rescore_wer.csv", csv);

  CombinedScorer scorer(
      [&] {
        auto weighted = members;
        for (std::size_t i = 0; i < k; ++i) weighted[i].weight = combined[i];
        return weighted;
      }(),
      aw);
  std::string best;
  for (const auto& list : test_lists) {
    const auto order = rescore(scorer, list);
    best += list.utterance;
    if (!order.empty() && !list.hypotheses[order.front()].text.empty()) {
      best += " " + list.hypotheses[order.front()].text;
    }
    best += "\n";
  }
  write_text_atomic(out / "rescore_best.txt", best);
  return result;
}

bool cmd_gradcheck(const GradCheckSuiteConfig& config, std::ostream& out) {
  const auto result = run_gradcheck_suite(config);
  auto line = [&](std::string_view family, const GradCheckReport& r, double tolerance) {
    const bool ok = r.max_rel_error() < tolerance;
    out << (ok ? "PASS " : "FAIL ") << family << " max_rel_error "
        << format_double(r.max_rel_error()) << " tolerance " << format_double(tolerance)
        << " checked " << r.checked() << " skipped_at_kinks " << r.skipped();
    if (const auto* w = r.worst()) {
      out << " worst_block " << w->name << "[" << w->worst_index << "] analytic "
          << format_double(w->analytic) << " numeric " << format_double(w->numeric);
    }
    out << "\n";
  };
  line("potential", result.potential, config.theta_tolerance);
  line("lstm_lm", result.lstm_lm, config.theta_tolerance);
  line("nce_theta", result.nce_theta, config.theta_tolerance);
  line("nce_zeta", result.nce_zeta, config.zeta_tolerance);
  const bool ok = result.passed(config);
  out << (ok ? "gradcheck passed" : "gradcheck FAILED") << "\n";
  return ok;
}

ZetaGap cmd_enumerate_z(const std::filesystem::path& bundle_path,
                        const EnumerationOptions& options, std::ostream& out) {
  const auto bundle = load_trf_bundle(bundle_path);
  const auto log_z = exact_log_normalizers(bundle.model, options);
  const auto gap = zeta_gap_given(bundle.model, log_z);
  out << "length,zeta,exact_log_z,gap\n";
  for (std::size_t l : bundle.model.prior.support()) {
    out << l << ',' << format_double(bundle.model.zeta[l - 1]) << ','
        << format_double(log_z[l - 1]) << ',' << format_double(gap.gap[l - 1]) << '\n';
  }
  out << "squared_gap," << format_double(gap.squared_norm) << "\n";
  return gap;
}

}  // namespace ntrf
