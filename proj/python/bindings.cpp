#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ntrf/commands.hpp"
#include "ntrf/evalkit.hpp"
#include "ntrf/gradcheck.hpp"
#include "ntrf/nce.hpp"
#include "ntrf/ngram.hpp"
#include "ntrf/noise.hpp"
#include "ntrf/trf_model.hpp"

namespace py = pybind11;
using namespace ntrf;

namespace {

// Python sees sequences as lists of ids including the begin/end symbols.
Sequence to_sequence(const std::vector<int>& ids) { return Sequence{ids}; }

std::vector<Sequence> to_sequences(const std::vector<std::vector<int>>& batch) {
  std::vector<Sequence> out;
  out.reserve(batch.size());
  for (const auto& ids : batch) out.push_back(Sequence{ids});
  return out;
}

std::vector<std::vector<int>> from_sequences(const std::vector<Sequence>& batch) {
  std::vector<std::vector<int>> out;
  out.reserve(batch.size());
  for (const auto& x : batch) out.push_back(x.ids);
  return out;
}

py::dict epoch_dict(const EpochRecord& e) {
  py::dict d;
  d["epoch"] = e.epoch;
  d["train_nll_proxy"] = e.train_nll_proxy;
  d["valid_nll"] = e.valid_nll;
  d["zeta_gap"] = e.zeta_gap;
  d["mean_objective"] = e.mean_objective;
  return d;
}

py::dict report_dict(const GradCheckReport& r) {
  py::dict d;
  d["max_rel_error"] = r.max_rel_error();
  d["checked"] = r.checked();
  d["skipped"] = r.skipped();
  d["worst_block"] = r.worst() ? r.worst()->name : std::string();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Trans-dimensional random field language models trained with NCE";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::enum_<TokenLevel>(m, "TokenLevel")
      .value("WORD", TokenLevel::Word)
      .value("CHAR", TokenLevel::Char);

  py::class_<Vocabulary>(m, "Vocabulary")
      .def(py::init<>())
      .def(py::init([](const std::vector<std::string>& tokens) { return Vocabulary(tokens); }),
           py::arg("tokens"))
      .def_static("build",
                  [](const std::vector<std::string>& lines, TokenLevel level, std::size_t min_count,
                     std::size_t max_size) {
                    return build_vocabulary(lines, level, min_count, max_size);
                  },
                  py::arg("lines"), py::arg("level"), py::arg("min_count") = 1,
                  py::arg("max_size") = 0)
      .def_static("load", &Vocabulary::load, py::arg("path"))
      .def("save", &Vocabulary::save, py::arg("path"))
      .def("__len__", &Vocabulary::size)
      .def_property_readonly("size", &Vocabulary::size)
      .def_property_readonly("payload_size", &Vocabulary::payload_size)
      .def_property_readonly("symbols", &Vocabulary::symbols)
      .def("id", &Vocabulary::id, py::arg("token"))
      .def("symbol", &Vocabulary::symbol, py::arg("id"))
      .def("encode",
           [](const Vocabulary& v, const std::string& line, TokenLevel level) {
             return encode(line, v, level, true).ids;
           },
           py::arg("line"), py::arg("level"))
      .def("decode",
           [](const Vocabulary& v, const std::vector<int>& ids, TokenLevel level) {
             return decode(to_sequence(ids), v, level);
           },
           py::arg("ids"), py::arg("level"));

  py::class_<NGramModel, std::shared_ptr<NGramModel>>(m, "NGramModel")
      .def_static("train",
                  [](const std::vector<std::vector<int>>& data, int order, int vocab_size) {
                    return std::make_shared<NGramModel>(
                        NGramModel::train(to_sequences(data), order, vocab_size));
                  },
                  py::arg("data"), py::arg("order"), py::arg("vocab_size"))
      .def_static("load", [](const std::filesystem::path& p) {
        return std::make_shared<NGramModel>(NGramModel::load(p));
      })
      .def("save", &NGramModel::save, py::arg("path"))
      .def_property_readonly("order", &NGramModel::order)
      .def_property_readonly("vocab_size", &NGramModel::vocab_size)
      .def("prob",
           [](const NGramModel& g, const std::vector<int>& context, int next) {
             return g.prob(context, next);
           },
           py::arg("context"), py::arg("next"))
      .def("logprob_sentence",
           [](const NGramModel& g, const std::vector<int>& ids) {
             return g.logprob_sentence(to_sequence(ids));
           },
           py::arg("ids"))
      .def("logprob_fixed_length",
           [](const NGramModel& g, const std::vector<int>& ids) {
             return g.logprob_fixed_length(to_sequence(ids));
           },
           py::arg("ids"))
      .def("sample_fixed_length",
           [](const NGramModel& g, std::size_t length, std::uint64_t seed) {
             Rng rng(seed);
             return g.sample_fixed_length(length, rng).ids;
           },
           py::arg("length"), py::arg("seed"));

  py::class_<NoiseDistribution, std::shared_ptr<NoiseDistribution>>(m, "NoiseDistribution")
      .def(py::init([](const std::vector<double>& prior, std::shared_ptr<NGramModel> base) {
             return std::make_shared<NoiseDistribution>(LengthPrior(prior), std::move(base));
           }),
           py::arg("length_prior"), py::arg("base"))
      .def("log_prob",
           [](const NoiseDistribution& n, const std::vector<int>& ids) {
             return n.log_prob(to_sequence(ids));
           },
           py::arg("ids"))
      .def("draw_batch",
           [](const NoiseDistribution& n, std::size_t data_batch_size, std::size_t ratio,
              std::uint64_t seed) {
             Rng rng(seed);
             const auto batch = draw_noise_batch(n, data_batch_size, ratio, rng);
             return py::make_tuple(from_sequences(batch.sequences), batch.log_pn);
           },
           py::arg("data_batch_size"), py::arg("ratio"), py::arg("seed"),
           "Returns (sequences, log_pn).");

  m.def("posterior_data",
        py::overload_cast<double, double, std::size_t>(&posterior_data), py::arg("log_model"),
        py::arg("log_noise"), py::arg("ratio"));

  py::class_<TrfBundle>(m, "TrfModel")
      .def_static("load", &load_trf_bundle, py::arg("path"))
      .def_property_readonly("vocab", [](const TrfBundle& b) { return b.vocab; })
      .def_property_readonly("max_length", [](const TrfBundle& b) { return b.model.max_length(); })
      .def_property_readonly("length_prior",
                             [](const TrfBundle& b) { return b.model.prior.probs(); })
      .def_property("zeta", [](const TrfBundle& b) { return b.model.zeta; },
                    [](TrfBundle& b, const std::vector<double>& z) {
                      b.model.zeta = z;
                      b.model.validate();
                    })
      .def("potential",
           [](const TrfBundle& b, const std::vector<int>& ids) {
             return potential_value(b.model.potential, to_sequence(ids));
           },
           py::arg("ids"))
      .def("log_joint",
           [](const TrfBundle& b, const std::vector<int>& ids) {
             return log_joint(b.model, to_sequence(ids));
           },
           py::arg("ids"))
      .def("score_text",
           [](const TrfBundle& b, const std::string& text) {
             return log_joint(b.model, encode(text, b.vocab, b.level, true));
           },
           py::arg("text"))
      .def("exact_log_z",
           [](const TrfBundle& b, std::size_t length, double budget, unsigned threads) {
             return exact_log_z(b.model, length, {budget, threads});
           },
           py::arg("length"), py::arg("budget") = kDefaultEnumerationBudget,
           py::arg("threads") = 1)
      .def("exact_log_normalizers",
           [](const TrfBundle& b, double budget, unsigned threads) {
             return exact_log_normalizers(b.model, {budget, threads});
           },
           py::arg("budget") = kDefaultEnumerationBudget, py::arg("threads") = 1)
      .def("nll",
           [](const TrfBundle& b, const std::vector<std::vector<int>>& data, bool exact_z) {
             return nll(b.model, to_sequences(data), exact_z ? ZetaSource::Exact : ZetaSource::Stored)
                 .mean;
           },
           py::arg("data"), py::arg("exact_z") = false)
      .def("zeta_gap",
           [](const TrfBundle& b) {
             const auto g = zeta_gap(b.model);
             return py::make_tuple(g.gap, g.squared_norm);
           },
           "Returns (per-length gap, squared norm).");

  m.def("wer",
        [](const std::string& reference, const std::string& hypothesis) {
          const auto e = wer(reference, hypothesis);
          py::dict d;
          d["substitutions"] = e.substitutions;
          d["insertions"] = e.insertions;
          d["deletions"] = e.deletions;
          d["reference_length"] = e.reference_length;
          d["wer"] = e.wer();
          return d;
        },
        py::arg("reference"), py::arg("hypothesis"));

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def_static("load", &ExperimentConfig::load, py::arg("path"))
      .def_static("parse", &ExperimentConfig::parse, py::arg("text"), py::arg("base_dir") = ".",
                  py::arg("apply_environment") = true)
      .def("to_ini", &ExperimentConfig::to_ini)
      .def_readwrite("seed", &ExperimentConfig::seed)
      .def_readwrite("output_dir", &ExperimentConfig::output_dir)
      .def_property_readonly("output_path", &ExperimentConfig::output_path);

  m.def("train_ngram",
        [](const ExperimentConfig& cfg) {
          std::ostringstream log;
          const auto r = cmd_train_ngram(cfg, log);
          py::dict d;
          d["model"] = r.model;
          d["train_nll"] = r.train_nll;
          d["valid_nll"] = r.valid_nll;
          return d;
        },
        py::arg("config"));
  m.def("train_lstm",
        [](const ExperimentConfig& cfg) {
          std::ostringstream log;
          const auto r = cmd_train_lstm(cfg, log);
          py::dict d;
          d["model"] = r.model;
          d["train_nll"] = r.train_nll;
          d["valid_nll"] = r.valid_nll;
          return d;
        },
        py::arg("config"));
  m.def("train_trf",
        [](const ExperimentConfig& cfg) {
          std::ostringstream log;
          TrfRunResult r;
          {
            py::gil_scoped_release release;
            r = cmd_train_trf(cfg, log);
          }
          py::list epochs;
          for (const auto& e : r.log.epochs) epochs.append(epoch_dict(e));
          py::dict d;
          d["bundle"] = r.bundle;
          d["epochs"] = epochs;
          d["steps"] = r.log.steps.size();
          return d;
        },
        py::arg("config"));
  m.def("rescore",
        [](const ExperimentConfig& cfg) {
          std::ostringstream log;
          const auto r = cmd_rescore(cfg, log);
          py::list systems;
          for (const auto& s : r.systems) {
            py::dict d;
            d["name"] = s.name;
            d["weights"] = s.weights;
            d["dev_wer"] = s.dev_wer;
            d["test_wer"] = s.test_wer;
            systems.append(d);
          }
          return systems;
        },
        py::arg("config"));
  m.def("gradcheck",
        [](std::size_t instances, std::uint64_t seed, double fault) {
          GradCheckSuiteConfig cfg;
          cfg.instances = instances;
          cfg.seed = seed;
          cfg.options.fault = fault;
          const auto r = run_gradcheck_suite(cfg);
          py::dict d;
          d["passed"] = r.passed(cfg);
          d["potential"] = report_dict(r.potential);
          d["lstm_lm"] = report_dict(r.lstm_lm);
          d["nce_theta"] = report_dict(r.nce_theta);
          d["nce_zeta"] = report_dict(r.nce_zeta);
          return d;
        },
        py::arg("instances") = 20, py::arg("seed") = 1, py::arg("fault") = 0.0);
}
