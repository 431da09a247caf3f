#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ntrf/commands.hpp"

namespace {

int run(CLI::App& app, int argc, char** argv) {
  app.require_subcommand(1);

  std::string config_path;
  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "experiment config (INI)")
        ->required()
        ->check(CLI::ExistingFile);
  };
  auto* train_ngram = app.add_subcommand("train-ngram", "train the Kneser-Ney n-gram baseline");
  add_config(train_ngram);
  auto* train_lstm = app.add_subcommand("train-lstm", "train the LSTM language model");
  add_config(train_lstm);
  auto* train_trf = app.add_subcommand("train-trf", "train a TRF model with NCE");
  add_config(train_trf);
  auto* rescore = app.add_subcommand("rescore", "rescore n-best lists and report WER");
  add_config(rescore);

  std::string model_path, data_path;
  bool exact_z = false;
  ntrf::EnumerationOptions enumeration;
  auto* eval = app.add_subcommand("eval", "mean NLL of a text file under a TRF model");
  eval->add_option("-m,--model", model_path, "TRF bundle (trf.json)")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("-d,--data", data_path, "text file, one sentence per line")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_flag("--exact-z", exact_z, "use exact normalizers instead of the stored zeta");
  eval->add_option("--budget", enumeration.budget, "largest sequence count per length");
  eval->add_option("--threads", enumeration.threads, "enumeration worker threads");

  auto* enumerate = app.add_subcommand("enumerate-z", "exact log normalizers of a TRF model");
  enumerate->add_option("-m,--model", model_path, "TRF bundle (trf.json)")
      ->required()
      ->check(CLI::ExistingFile);
  enumerate->add_option("--budget", enumeration.budget, "largest sequence count per length");
  enumerate->add_option("--threads", enumeration.threads, "enumeration worker threads");

  std::string gradcheck_config;
  ntrf::GradCheckSuiteConfig suite;
  std::uint64_t seed = 0;
  std::size_t instances = 0;
  double fault = 0.0;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gradcheck->add_option("-c,--config", gradcheck_config, "experiment config with [gradcheck]")
      ->check(CLI::ExistingFile);
  auto* seed_opt = gradcheck->add_option("--seed", seed, "instance seed");
  auto* instances_opt = gradcheck->add_option("--instances", instances, "random instances");
  gradcheck->add_option("--inject-fault", fault,
                        "scale analytic gradients by (1 + value) to exercise the checker");

  CLI11_PARSE(app, argc, argv);

  if (train_ngram->parsed()) {
    ntrf::cmd_train_ngram(ntrf::ExperimentConfig::load(config_path), std::cout);
  } else if (train_lstm->parsed()) {
    ntrf::cmd_train_lstm(ntrf::ExperimentConfig::load(config_path), std::cout);
  } else if (train_trf->parsed()) {
    ntrf::cmd_train_trf(ntrf::ExperimentConfig::load(config_path), std::cout);
  } else if (rescore->parsed()) {
    ntrf::cmd_rescore(ntrf::ExperimentConfig::load(config_path), std::cout);
  } else if (eval->parsed()) {
    ntrf::cmd_eval(model_path, data_path, exact_z, enumeration, std::cout);
  } else if (enumerate->parsed()) {
    ntrf::cmd_enumerate_z(model_path, enumeration, std::cout);
  } else if (gradcheck->parsed()) {
    if (!gradcheck_config.empty()) {
      suite = ntrf::ExperimentConfig::load(gradcheck_config).gradcheck_config();
    }
    if (*seed_opt) suite.seed = seed;
    if (*instances_opt) suite.instances = instances;
    suite.options.fault = fault;
    return ntrf::cmd_gradcheck(suite, std::cout) ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trans-dimensional random field language models trained with NCE"};
  app.name("ntrf");
  try {
    return run(app, argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
