#include "ntrf/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ntrf/io.hpp"

namespace ntrf {

namespace pt = boost::property_tree;

namespace {

constexpr std::string_view kMemberPrefix = "member.";

/// Typed reads from one INI section, remembering which keys were used.
class SectionReader {
 public:
  SectionReader(const pt::ptree* tree, std::string section)
      : tree_(tree), section_(std::move(section)) {}

  bool has(const std::string& key) {
    used_.insert(key);
    return tree_ && tree_->find(key) != tree_->not_found();
  }

  std::string text(const std::string& key) {
    if (!has(key)) return {};
    return tree_->get<std::string>(key);
  }

  void read(const std::string& key, std::string& out) {
    if (has(key)) out = text(key);
  }

  template <class Int>
  void read_int(const std::string& key, Int& out, long long min_value) {
    if (!has(key)) return;
    const std::string v = text(key);
    long long parsed = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
    if (ec != std::errc() || ptr != v.data() + v.size() || parsed < min_value) {
      fail(key, "expected an integer >= " + std::to_string(min_value) + ", got '" + v + "'");
    }
    out = static_cast<Int>(parsed);
  }

  void read(const std::string& key, double& out, bool positive = false) {
    if (!has(key)) return;
    const std::string v = text(key);
    double parsed = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(parsed) ||
        (positive && !(parsed > 0.0))) {
      fail(key, std::string("expected a ") + (positive ? "positive " : "") + "number, got '" + v +
                    "'");
    }
    out = parsed;
  }

  void read(const std::string& key, bool& out) {
    if (!has(key)) return;
    const std::string v = text(key);
    if (v == "true" || v == "yes" || v == "1") out = true;
    else if (v == "false" || v == "no" || v == "0") out = false;
    else fail(key, "expected true or false, got '" + v + "'");
  }

  template <class T, class Parse>
  void read_enum(const std::string& key, T& out, Parse parse) {
    if (!has(key)) return;
    try {
      out = parse(text(key));
    } catch (const Error& e) {
      fail(key, e.what());
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& why) const {
    throw ConfigError("config key '" + section_ + "." + key + "': " + why);
  }

  void reject_unknown() const {
    if (!tree_) return;
    for (const auto& [key, child] : *tree_) {
      if (!used_.count(key)) {
        throw ConfigError("config key '" + section_ + "." + key + "' is not recognized");
      }
    }
  }

 private:
  const pt::ptree* tree_;
  std::string section_;
  std::set<std::string> used_;
};

const pt::ptree* child(const pt::ptree& root, const std::string& name) {
  const auto it = root.find(name);
  return it == root.not_found() ? nullptr : &it->second;
}

void require_file(const ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  if (value.empty()) return;
  const auto path = cfg.resolve(value);
  if (!std::filesystem::exists(path)) {
    throw ConfigError("config key '" + key + "': path does not exist: " + path.string());
  }
}

std::string fmt(double v) { return format_double(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text,
                                         const std::filesystem::path& base_dir,
                                         bool apply_environment) {
  pt::ptree root;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax error: ") + e.what());
  }

  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  static const std::set<std::string> sections = {"run",   "corpus", "potential", "reference",
                                                 "noise", "train",  "ngram",     "lstm",
                                                 "rescore", "gradcheck"};
  for (const auto& [name, tree] : root) {
    if (tree.empty() && !tree.data().empty()) {
      throw ConfigError("config key '" + name + "' must be inside a section");
    }
    if (!sections.count(name) && name.rfind(kMemberPrefix, 0) != 0) {
      throw ConfigError("config section '" + name + "' is not recognized");
    }
  }

  {
    SectionReader r(child(root, "run"), "run");
    r.read_int("seed", cfg.seed, 0);
    r.read("output_dir", cfg.output_dir);
    r.reject_unknown();
  }
  {
    SectionReader r(child(root, "corpus"), "corpus");
    auto& c = cfg.corpus;
    r.read("train", c.train);
    r.read("valid", c.valid);
    r.read("test", c.test);
    r.read_enum("level", c.level, parse_token_level);
    r.read_int("max_length", c.max_length, 2);
    r.read_int("min_count", c.min_count, 1);
    r.read_int("max_vocab", c.max_vocab, 0);
    r.reject_unknown();
  }
  {
    SectionReader r(child(root, "potential"), "potential");
    auto& p = cfg.potential;
    r.read_int("embedding", p.embedding, 1);
    r.read_int("bank_width", p.bank_width, 0);
    r.read_int("bank_channels", p.bank_channels, 0);
    r.read_int("stack_layers", p.stack_layers, 0);
    r.read_int("hidden", p.hidden, 1);
    r.read("init_scale", p.init_scale, true);
    r.reject_unknown();
  }
  {
    SectionReader r(child(root, "reference"), "reference");
    auto& ref = cfg.reference;
    r.read_enum("kind", ref.kind, parse_reference_kind);
    r.read("model", ref.model);
    r.read_int("order", ref.order, 1);
    r.reject_unknown();
    if (ref.kind == ReferenceKind::LstmLm && ref.model.empty()) {
      r.fail("model", "the lstm reference needs a model file");
    }
  }
  {
    SectionReader r(child(root, "noise"), "noise");
    auto& n = cfg.noise;
    r.read_int("order", n.order, 1);
    r.read_enum("mode", n.mode, parse_noise_mode);
    r.read_int("producers", n.producers, 1);
    r.reject_unknown();
  }
  {
    SectionReader r(child(root, "train"), "train");
    auto& t = cfg.train;
    r.read_int("ratio", t.ratio, 1);
    r.read_int("batch_size", t.batch_size, 1);
    r.read_enum("theta_optimizer", t.theta_optimizer, parse_optimizer);
    r.read_enum("zeta_optimizer", t.zeta_optimizer, parse_optimizer);
    r.read("lr_theta", t.lr_theta, true);
    r.read("lr_zeta", t.lr_zeta, true);
    r.read_enum("schedule", t.schedule, parse_schedule);
    r.read_int("epochs", t.epochs, 0);
    r.read_enum("zeta_init", t.zeta_init, parse_zeta_init);
    r.read("track_exact", t.track_exact);
    r.read("enumeration_budget", t.enumeration_budget, true);
    r.read_int("threads", t.threads, 1);
    r.read("checkpoints", t.checkpoints);
    r.reject_unknown();
  }
  {
    SectionReader r(child(root, "ngram"), "ngram");
    r.read_int("order", cfg.ngram.order, 1);
    r.reject_unknown();
  }
  {
    SectionReader r(child(root, "lstm"), "lstm");
    auto& l = cfg.lstm;
    r.read_int("embedding", l.embedding, 1);
    r.read_int("hidden", l.hidden, 1);
    r.read_int("layers", l.layers, 1);
    r.read_int("max_length", l.max_length, 0);
    r.read("lr", l.lr, true);
    r.read_int("epochs", l.epochs, 0);
    r.read_int("batch_size", l.batch_size, 1);
    r.read("init_scale", l.init_scale, true);
    r.reject_unknown();
  }
  {
    SectionReader r(child(root, "rescore"), "rescore");
    auto& s = cfg.rescore;
    r.read("nbest", s.nbest);
    r.read("references", s.references);
    r.read("dev_nbest", s.dev_nbest);
    r.read("dev_references", s.dev_references);
    r.read("step", s.step, true);
    r.read("max_weight", s.max_weight, true);
    r.read("acoustic_weight", s.acoustic_weight);
    r.reject_unknown();
    if (s.dev_nbest.empty() != s.dev_references.empty()) {
      r.fail(s.dev_nbest.empty() ? "dev_nbest" : "dev_references",
             "dev_nbest and dev_references must be given together");
    }
  }
  {
    SectionReader r(child(root, "gradcheck"), "gradcheck");
    auto& g = cfg.gradcheck;
    r.read_int("instances", g.instances, 1);
    r.read("step", g.step, true);
    r.read("floor", g.floor, true);
    r.read("theta_tolerance", g.theta_tolerance, true);
    r.read("zeta_tolerance", g.zeta_tolerance, true);
    r.reject_unknown();
  }
  for (const auto& [name, tree] : root) {
    if (name.rfind(kMemberPrefix, 0) != 0) continue;
    MemberSection m;
    m.name = name.substr(kMemberPrefix.size());
    if (m.name.empty()) throw ConfigError("config section '" + name + "' needs a member name");
    SectionReader r(&tree, name);
    r.read("kind", m.kind);
    r.read("model", m.model);
    r.read("vocab", m.vocab);
    r.read("weight", m.weight);
    r.reject_unknown();
    if (m.kind != "ngram" && m.kind != "lstm" && m.kind != "trf") {
      r.fail("kind", "expected ngram, lstm or trf, got '" + m.kind + "'");
    }
    if (m.model.empty()) r.fail("model", "member model file is required");
    cfg.members.push_back(std::move(m));
  }

  if (apply_environment) {
    if (const char* seed = std::getenv("NTRF_SEED"); seed && *seed) {
      const std::string_view v(seed);
      std::uint64_t parsed = 0;
      const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
      if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError("environment NTRF_SEED: expected a non-negative integer, got '" +
                          std::string(v) + "'");
      }
      cfg.seed = parsed;
    }
    if (const char* dir = std::getenv("NTRF_OUTPUT_DIR"); dir && *dir) cfg.output_dir = dir;
  }

  require_file(cfg, "corpus.train", cfg.corpus.train);
  require_file(cfg, "corpus.valid", cfg.corpus.valid);
  require_file(cfg, "corpus.test", cfg.corpus.test);
  require_file(cfg, "reference.model", cfg.reference.model);
  require_file(cfg, "rescore.nbest", cfg.rescore.nbest);
  require_file(cfg, "rescore.references", cfg.rescore.references);
  require_file(cfg, "rescore.dev_nbest", cfg.rescore.dev_nbest);
  require_file(cfg, "rescore.dev_references", cfg.rescore.dev_references);
  for (const auto& m : cfg.members) {
    require_file(cfg, "member." + m.name + ".model", m.model);
    require_file(cfg, "member." + m.name + ".vocab", m.vocab);
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  auto dir = path.parent_path();
  return parse(text.str(), dir.empty() ? std::filesystem::path(".") : dir);
}

std::string ExperimentConfig::to_ini() const {
  std::ostringstream o;
  o << "[run]\nseed = " << seed << "\noutput_dir = " << output_dir << "\n\n";
  o << "[corpus]\ntrain = " << corpus.train << "\nvalid = " << corpus.valid
    << "\ntest = " << corpus.test << "\nlevel = " << to_string(corpus.level)
    << "\nmax_length = " << corpus.max_length << "\nmin_count = " << corpus.min_count
    << "\nmax_vocab = " << corpus.max_vocab << "\n\n";
  o << "[potential]\nembedding = " << potential.embedding
    << "\nbank_width = " << potential.bank_width
    << "\nbank_channels = " << potential.bank_channels
    << "\nstack_layers = " << potential.stack_layers << "\nhidden = " << potential.hidden
    << "\ninit_scale = " << fmt(potential.init_scale) << "\n\n";
  o << "[reference]\nkind = " << to_string(reference.kind) << "\nmodel = " << reference.model
    << "\norder = " << reference.order << "\n\n";
  o << "[noise]\norder = " << noise.order << "\nmode = " << to_string(noise.mode)
    << "\nproducers = " << noise.producers << "\n\n";
  o << "[train]\nratio = " << train.ratio << "\nbatch_size = " << train.batch_size
    << "\ntheta_optimizer = " << to_string(train.theta_optimizer)
    << "\nzeta_optimizer = " << to_string(train.zeta_optimizer)
    << "\nlr_theta = " << fmt(train.lr_theta) << "\nlr_zeta = " << fmt(train.lr_zeta)
    << "\nschedule = " << to_string(train.schedule) << "\nepochs = " << train.epochs
    << "\nzeta_init = " << to_string(train.zeta_init)
    << "\ntrack_exact = " << fmt(train.track_exact)
    << "\nenumeration_budget = " << fmt(train.enumeration_budget)
    << "\nthreads = " << train.threads << "\ncheckpoints = " << fmt(train.checkpoints)
    << "\n\n";
  o << "[ngram]\norder = " << ngram.order << "\n\n";
  o << "[lstm]\nembedding = " << lstm.embedding << "\nhidden = " << lstm.hidden
    << "\nlayers = " << lstm.layers << "\nmax_length = " << lstm.max_length
    << "\nlr = " << fmt(lstm.lr) << "\nepochs = " << lstm.epochs
    << "\nbatch_size = " << lstm.batch_size << "\ninit_scale = " << fmt(lstm.init_scale)
    << "\n\n";
  o << "[rescore]\nnbest = " << rescore.nbest << "\nreferences = " << rescore.references
    << "\ndev_nbest = " << rescore.dev_nbest << "\ndev_references = " << rescore.dev_references
    << "\nstep = " << fmt(rescore.step) << "\nmax_weight = " << fmt(rescore.max_weight)
    << "\nacoustic_weight = " << fmt(rescore.acoustic_weight) << "\n\n";
  o << "[gradcheck]\ninstances = " << gradcheck.instances << "\nstep = " << fmt(gradcheck.step)
    << "\nfloor = " << fmt(gradcheck.floor)
    << "\ntheta_tolerance = " << fmt(gradcheck.theta_tolerance)
    << "\nzeta_tolerance = " << fmt(gradcheck.zeta_tolerance) << "\n";
  for (const auto& m : members) {
    o << "\n[member." << m.name << "]\nkind = " << m.kind << "\nmodel = " << m.model
      << "\nvocab = " << m.vocab << "\nweight = " << fmt(m.weight) << "\n";
  }
  return o.str();
}

void ExperimentConfig::save(const std::filesystem::path& path) const {
  write_text_atomic(path, to_ini());
}

std::filesystem::path ExperimentConfig::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

ExperimentConfig ExperimentConfig::with_absolute_paths() const {
  ExperimentConfig out = *this;
  auto fix = [&](std::string& path) {
    if (!path.empty()) path = std::filesystem::absolute(resolve(path)).lexically_normal().string();
  };
  fix(out.output_dir);
  for (auto* path : {&out.corpus.train, &out.corpus.valid, &out.corpus.test, &out.reference.model,
                     &out.rescore.nbest, &out.rescore.references, &out.rescore.dev_nbest,
                     &out.rescore.dev_references}) {
    fix(*path);
  }
  for (auto& m : out.members) {
    fix(m.model);
    fix(m.vocab);
  }
  return out;
}

PotentialConfig ExperimentConfig::potential_config(int vocab_size) const {
  PotentialConfig c;
  c.vocab_size = vocab_size;
  c.embedding = potential.embedding;
  c.bank_width = potential.bank_width;
  c.bank_channels = potential.bank_channels;
  c.stack_layers = potential.stack_layers;
  c.hidden = potential.hidden;
  try {
    c.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("config section 'potential': ") + e.what());
  }
  return c;
}

NceConfig ExperimentConfig::nce_config() const {
  NceConfig c;
  c.ratio = train.ratio;
  c.batch_size = train.batch_size;
  c.theta_optimizer = train.theta_optimizer;
  c.zeta_optimizer = train.zeta_optimizer;
  c.lr_theta = train.lr_theta;
  c.lr_zeta = train.lr_zeta;
  c.schedule = train.schedule;
  c.epochs = train.epochs;
  c.seed = seed;
  c.zeta_init = train.zeta_init;
  c.noise_mode = noise.mode;
  c.noise_producers = noise.producers;
  c.track_exact = train.track_exact;
  c.enumeration.budget = train.enumeration_budget;
  c.enumeration.threads = train.threads;
  return c;
}

GradCheckSuiteConfig ExperimentConfig::gradcheck_config() const {
  GradCheckSuiteConfig c;
  c.instances = gradcheck.instances;
  c.seed = seed;
  c.options.step = gradcheck.step;
  c.options.floor = gradcheck.floor;
  c.theta_tolerance = gradcheck.theta_tolerance;
  c.zeta_tolerance = gradcheck.zeta_tolerance;
  return c;
}

}  // namespace ntrf
