#include <pthread.h>
#include <signal.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lmgame/core/error.hpp"
#include "lmgame/core/io.hpp"
#include "lmgame/corpus/corpus.hpp"
#include "lmgame/estimator/estimator.hpp"
#include "lmgame/predictors/descriptor.hpp"
#include "lmgame/service/server.hpp"
#include "lmgame/service/service.hpp"
#include "lmgame/simulation/evaluation.hpp"
#include "lmgame/simulation/experiment.hpp"
#include "lmgame/simulation/synthetic.hpp"

namespace lmgame::cli {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

enum ExitCode { kOk = 0, kConfigError = 2, kDataError = 3, kRuntimeError = 4 };

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::config:
    case ErrorKind::validation:
    case ErrorKind::not_found: return kConfigError;
    case ErrorKind::data: return kDataError;
    default: return kRuntimeError;
  }
}

// Built-in configuration; a --config file is merged over it key by key.
const char* const kDefaults = R"({
  "seed": 0,
  "artifacts": "artifacts",
  "out_dir": "out",
  "prepare": {
    "tokenizer": "word",
    "synthetic": {
      "words": 300, "branching": 6, "background": 0.15, "zipf_exponent": 1.1,
      "sentence_end": 0.0833333333333333, "paragraph_end": 0.2, "seed": 7,
      "train_docs": 200, "validation_docs": 60, "words_per_doc": 250
    }
  },
  "predictors": {
    "uniform": {"kind": "uniform"},
    "ngram-1": {"kind": "ngram", "order": 1, "k": 0.5, "train_split": "train"},
    "ngram-2": {"kind": "ngram", "order": 2, "k": 0.1, "train_split": "train"},
    "ngram-4": {"kind": "ngram", "order": 4, "k": 0.01, "train_split": "train"}
  },
  "experiment": {
    "generator": "ngram-2", "targets": ["ngram-1", "ngram-4"], "target": "ngram-4",
    "split": "validation", "N": 1000, "n": 10, "max_context": 120,
    "allowed": "continuous", "mode": "monte_carlo", "behavior": "optimal",
    "believed_generator": null, "logit_noise": 0.0, "responders": 1, "bootstrap": 0
  },
  "bias_curve": {"generator": "ngram-1", "target": "ngram-4", "n_values": [5, 10, 20, 40], "seeds": 10},
  "rounding_sweep": {"presets": ["rounded", "more_round", "even_more_round"]},
  "split_table": {"predictors": ["ngram-1", "ngram-2", "ngram-4"], "N": 1000,
                  "train_split": "train", "validation_split": "validation", "max_context": 120},
  "eval_top1": {"predictors": ["uniform", "ngram-1", "ngram-2", "ngram-4"], "split": "validation", "N": 1000,
                "filter": "exclude_visually_empty", "max_context": 120, "bins": 20},
  "serve": {
    "host": "127.0.0.1", "port": 8080, "event_log": "events.jsonl",
    "sets": [
      {"id": "top1-1", "game": "top1", "length": 40, "seed": 1},
      {"id": "compare-1", "game": "compare", "length": 40, "n": 10, "generator": "ngram-2", "allowed": "rounded", "seed": 2}
    ]
  }
})";

nlohmann::json plain(const ojson& j) { return nlohmann::json::parse(j.dump()); }

std::string format_double(double v) { return ojson(v).dump(); }

class Context {
 public:
  ojson cfg;
  fs::path base_dir;  // relative paths in the config resolve against it

  std::uint64_t seed() const { return cfg.at("seed").get<std::uint64_t>(); }
  fs::path artifacts() const { return resolve(cfg.at("artifacts").get<std::string>()); }
  fs::path out_dir() const { return resolve(cfg.at("out_dir").get<std::string>()); }
  fs::path corpus_dir() const { return artifacts() / "corpus"; }

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }

  // A config section overlaid on another, e.g. bias_curve on top of experiment.
  ojson section(const std::string& name, const std::string& base = "") const {
    ojson s = base.empty() ? ojson::object() : cfg.at(base);
    s.merge_patch(cfg.at(name));
    return s;
  }

  const Corpus& corpus() {
    if (!corpus_) {
      try {
        corpus_.emplace(Corpus::load(corpus_dir()));
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::data, corpus_dir().string() + ": " + e.what());
      }
    }
    return *corpus_;
  }

  std::string corpus_digest() { return sha256_hex(read_file(corpus_dir() / "checksums.json")); }

  PredictorPtr predictor(const std::string& name) {
    if (auto it = predictors_.find(name); it != predictors_.end()) return it->second;
    const auto& all = cfg.at("predictors");
    if (!all.contains(name)) fail(ErrorKind::config, "unknown predictor '" + name + "'");
    const auto d = PredictorDescriptor::from_json(name, plain(all[name]));
    const bool needs_corpus = d.kind == PredictorKind::uniform ? !d.params.contains("vocab_size") : !d.params.contains("model");
    auto p = make_predictor(d, needs_corpus || d.kind == PredictorKind::ngram ? &corpus() : nullptr, base_dir);
    if (p->vocab_size() != corpus().vocab().size())
      fail(ErrorKind::config, "predictor '" + name + "' has vocab size " + std::to_string(p->vocab_size()) +
                                  " but the corpus has " + std::to_string(corpus().vocab().size()));
    predictors_.emplace(name, p);
    return p;
  }

  // Writes <out_dir>/<kind>.json and <kind>.csv. The JSON carries enough provenance to
  // regenerate the payload: the config sections used, the seed, the corpus digest and
  // the code version.
  void write_bundle(const std::string& kind, const std::string& command, ojson payload, const std::string& csv,
                    const std::vector<std::string>& sections, ojson extra = ojson::object()) {
    ojson used = ojson::object();
    for (const auto& s : sections) used[s] = cfg.at(s);
    ojson provenance{{"command", command}, {"seed", seed()}, {"version", LMGAME_VERSION}, {"config", used}};
    for (auto it = extra.begin(); it != extra.end(); ++it) provenance[it.key()] = it.value();
    ojson bundle{{"kind", kind}, {"payload", std::move(payload)}, {"provenance", std::move(provenance)}};
    const auto dir = out_dir();
    write_file_atomic(dir / (kind + ".json"), bundle.dump(2) + "\n");
    write_file_atomic(dir / (kind + ".csv"), csv);
    std::cout << (dir / (kind + ".json")).string() << "\n" << (dir / (kind + ".csv")).string() << "\n";
  }

 private:
  std::optional<Corpus> corpus_;
  std::map<std::string, PredictorPtr> predictors_;
};

std::vector<PromptInstance> prompts_for(Context& ctx, const ojson& sec, const std::string& split_key = "split",
                                        std::uint64_t stream = 1) {
  const auto& split = ctx.corpus().split(sec.at(split_key).get<std::string>());
  return sample_prompts(split, sec.at("N").get<std::size_t>(), sec.value("max_context", kDefaultMaxContext),
                        mix_seed(ctx.seed(), stream));
}

ExperimentConfig experiment_config(Context& ctx, const ojson& sec, const std::string& target) {
  ExperimentConfig c;
  c.generator = ctx.predictor(sec.at("generator").get<std::string>());
  c.target = ctx.predictor(target);
  c.prompts = prompts_for(ctx, sec);
  c.n = sec.at("n").get<std::size_t>();
  c.seed = ctx.seed();
  c.allowed = AllowedSet::preset(sec.at("allowed").get<std::string>());
  c.mode = estimation_mode_from_string(sec.at("mode").get<std::string>());
  c.behavior = behavior_from_string(sec.at("behavior").get<std::string>());
  if (sec.contains("believed_generator") && !sec["believed_generator"].is_null())
    c.believed_generator = ctx.predictor(sec["believed_generator"].get<std::string>());
  c.logit_noise = sec.at("logit_noise").get<double>();
  c.responders = sec.at("responders").get<std::size_t>();
  c.validate();
  return c;
}

void print_json(const ojson& j) { std::cout << j.dump(2) << "\n"; }

// --- prepare -------------------------------------------------------------------------

struct PrepareFlags {
  std::string manifest;
  bool synthetic = false;
  std::string tokenizer, vocab, merges;
};

int cmd_prepare(Context& ctx, const PrepareFlags& f) {
  auto& sec = ctx.cfg["prepare"];
  if (!f.manifest.empty()) sec["manifest"] = fs::absolute(f.manifest).string();
  if (!f.tokenizer.empty()) sec["tokenizer"] = f.tokenizer;
  if (!f.vocab.empty()) sec["vocab"] = fs::absolute(f.vocab).string();
  if (!f.merges.empty()) sec["merges"] = fs::absolute(f.merges).string();
  const bool synthetic = f.synthetic || !sec.contains("manifest");

  std::map<std::string, std::vector<std::string>> texts;
  if (synthetic) {
    const auto& s = sec.at("synthetic");
    SyntheticLanguage lang;
    lang.words = s.value("words", lang.words);
    lang.branching = s.value("branching", lang.branching);
    lang.background = s.value("background", lang.background);
    lang.zipf_exponent = s.value("zipf_exponent", lang.zipf_exponent);
    lang.sentence_end = s.value("sentence_end", lang.sentence_end);
    lang.paragraph_end = s.value("paragraph_end", lang.paragraph_end);
    lang.seed = s.value("seed", lang.seed);
    const auto words = s.at("words_per_doc").get<std::size_t>();
    texts["train"] = synthetic_documents(lang, s.at("train_docs").get<std::size_t>(), words, 1);
    texts["validation"] = synthetic_documents(lang, s.at("validation_docs").get<std::size_t>(), words, 2);
  } else {
    texts = CorpusManifest::load(ctx.resolve(sec["manifest"].get<std::string>())).split_texts;
  }

  const auto kind = tokenizer_kind_from_string(synthetic ? "word" : sec.at("tokenizer").get<std::string>());
  Vocab vocab = [&] {
    if (kind == TokenizerKind::whole_word) {
      std::vector<std::string> all;
      for (const auto& [_, t] : texts) all.insert(all.end(), t.begin(), t.end());
      return build_word_vocab(all);
    }
    if (!sec.contains("vocab") || !sec.contains("merges"))
      fail(ErrorKind::config, "the bpe tokenizer needs prepare.vocab and prepare.merges (or --vocab and --merges)");
    return Vocab::load_gpt2(ctx.resolve(sec["vocab"].get<std::string>()), ctx.resolve(sec["merges"].get<std::string>()));
  }();
  Tokenizer tokenizer(std::move(vocab), kind);
  std::map<std::string, CorpusSplit> splits;
  for (const auto& [name, t] : texts) splits.emplace(name, tokenize_split(name, t, tokenizer));
  const Corpus corpus(std::move(tokenizer), std::move(splits));
  const auto checksums = corpus.save(ctx.corpus_dir());

  ojson summary{{"corpus", ctx.corpus_dir().string()}, {"vocab_size", corpus.vocab().size()}, {"splits", ojson::object()}};
  for (const auto& [name, s] : corpus.splits())
    summary["splits"][name] = {{"documents", s.documents.size()}, {"tokens", s.token_count()}, {"digest", s.source_digest}};
  summary["checksums"] = checksums;
  print_json(summary);
  return kOk;
}

// --- train-ngram ---------------------------------------------------------------------

int cmd_train_ngram(Context& ctx, std::size_t order, double k, const std::string& split, std::string name) {
  if (name.empty()) name = "ngram-" + std::to_string(order);
  const auto& corpus = ctx.corpus();
  const auto model = NGramModel::train(corpus.split(split), order, k, corpus.vocab().size(), name);
  const auto text = model.to_json().dump() + "\n";
  const auto path = ctx.artifacts() / "models" / (name + ".json");
  write_file_atomic(path, text);
  print_json({{"model", path.string()}, {"name", name}, {"order", order}, {"k", k}, {"split", split}, {"sha256", sha256_hex(text)}});
  return kOk;
}

// --- eval-top1 -----------------------------------------------------------------------

struct ParticipantAccuracy {
  std::size_t correct = 0, evaluated = 0, excluded = 0;
};

std::map<std::string, ParticipantAccuracy> read_top1_export(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::map<std::string, ParticipantAccuracy> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      auto& acc = out[j.at("participant").get<std::string>()];
      if (j.at("excluded").get<bool>()) {
        ++acc.excluded;
        continue;
      }
      ++acc.evaluated;
      acc.correct += j.at("correct").get<bool>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::data, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

int cmd_eval_top1(Context& ctx, const std::string& export_path) {
  const auto sec = ctx.cfg.at("eval_top1");
  const auto filter = top1_filter_from_string(sec.at("filter").get<std::string>());
  const auto prompts = prompts_for(ctx, sec, "split", 2);
  const auto bins = sec.at("bins").get<std::size_t>();
  if (bins == 0) fail(ErrorKind::config, "eval_top1.bins must be >= 1");

  ojson payload{{"filter", to_string(filter)}, {"prompts", prompts.size()}, {"predictors", ojson::array()}};
  std::ostringstream csv;
  csv << "series,name,accuracy,correct,evaluated,excluded\n";
  for (const auto& name : sec.at("predictors")) {
    const auto rep = top1_accuracy(*ctx.predictor(name.get<std::string>()), prompts, filter, ctx.corpus().vocab());
    payload["predictors"].push_back(to_json(rep));
    csv << "predictor," << rep.predictor << ',' << format_double(rep.accuracy) << ',' << rep.correct << ',' << rep.evaluated
        << ',' << rep.excluded << '\n';
  }

  ojson extra = ojson::object();
  if (!export_path.empty()) {
    std::vector<std::size_t> counts(bins, 0);
    payload["participants"] = ojson::array();
    for (const auto& [who, acc] : read_top1_export(export_path)) {
      if (acc.evaluated == 0) continue;
      const double a = static_cast<double>(acc.correct) / static_cast<double>(acc.evaluated);
      ++counts[std::min(bins - 1, static_cast<std::size_t>(a * static_cast<double>(bins)))];
      payload["participants"].push_back(
          {{"participant", who}, {"accuracy", a}, {"correct", acc.correct}, {"evaluated", acc.evaluated}, {"excluded", acc.excluded}});
      csv << "participant," << who << ',' << format_double(a) << ',' << acc.correct << ',' << acc.evaluated << ','
          << acc.excluded << '\n';
    }
    std::vector<double> edges;
    for (std::size_t b = 0; b <= bins; ++b) edges.push_back(static_cast<double>(b) / static_cast<double>(bins));
    payload["histogram"] = {{"bin_edges", edges}, {"counts", counts}};
    extra["export_sha256"] = sha256_hex(read_file(export_path));
  }
  extra["corpus_sha256"] = ctx.corpus_digest();
  ctx.write_bundle("accuracy_histogram", "eval-top1", std::move(payload), csv.str(), {"predictors", "eval_top1"}, extra);
  return kOk;
}

// --- estimate / simulate -------------------------------------------------------------

std::vector<RatioSample> read_records(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<RatioSample> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<RatioSample>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::data, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorKind::data, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (out.empty()) fail(ErrorKind::data, path.string() + ": no records");
  return out;
}

const char* const kBarsHeader = "name,kind,loss,perplexity,lower,upper,sigma,N,true_perplexity,q05,median,q95\n";

ojson bar(const std::string& name, const std::string& kind, const LossReport& r, std::ostringstream& csv,
          std::optional<double> truth = std::nullopt, const BootstrapReport* boot = nullptr) {
  auto j = to_json(r);
  j["name"] = name;
  j["kind"] = kind;
  if (truth) j["true_perplexity"] = *truth;
  if (boot) j["bootstrap"] = to_json(*boot);
  auto opt = [](std::optional<double> v) { return v ? format_double(*v) : std::string(); };
  csv << name << ',' << kind << ',' << format_double(r.loss) << ',' << format_double(r.perplexity) << ','
      << format_double(r.lower) << ',' << format_double(r.upper) << ',' << format_double(r.sigma) << ',' << r.N << ','
      << opt(truth) << ',' << (boot ? format_double(boot->q05) : "") << ',' << (boot ? format_double(boot->median) : "")
      << ',' << (boot ? format_double(boot->q95) : "") << '\n';
  return j;
}

int cmd_estimate(Context& ctx, const std::string& records_path) {
  const auto sec = ctx.cfg.at("experiment");
  const auto iterations = sec.at("bootstrap").get<std::size_t>();
  std::ostringstream csv;
  csv << kBarsHeader;
  ojson payload{{"bars", ojson::array()}};
  ojson extra = ojson::object();

  if (!records_path.empty()) {
    const auto samples = read_records(records_path);
    const auto rep = estimate_from_samples(samples, "records");
    std::optional<BootstrapReport> boot;
    if (iterations > 0) boot = bootstrap_over_users(samples, iterations, ctx.seed());
    payload["source"] = "records";
    std::set<std::string> responders;
    for (const auto& s : samples) responders.insert(s.responder_id);
    payload["responders"] = responders.size();
    payload["records"] = samples.size();
    payload["bars"].push_back(bar("records", "estimate", rep, csv, std::nullopt, boot ? &*boot : nullptr));
    extra["records_sha256"] = sha256_hex(read_file(records_path));
    ctx.write_bundle("perplexity_bars", "estimate", std::move(payload), csv.str(), {"experiment"}, extra);
    return kOk;
  }

  payload["source"] = "simulation";
  bool generator_done = false;
  for (const auto& t : sec.at("targets")) {
    const auto cfg = experiment_config(ctx, sec, t.get<std::string>());
    const auto res = run_estimation_experiment(cfg);
    if (!generator_done) {
      payload["bars"].push_back(bar(cfg.generator->name(), "generator", res.generator, csv, res.generator.perplexity));
      generator_done = true;
    }
    std::optional<BootstrapReport> boot;
    if (iterations > 0) {
      if (cfg.responders < 2) fail(ErrorKind::config, "experiment.bootstrap needs experiment.responders >= 2");
      boot = bootstrap_over_users(res.samples, iterations, ctx.seed());
    }
    auto b = bar(cfg.target->name(), "estimate", res.estimate, csv, res.truth.perplexity, boot ? &*boot : nullptr);
    b["bias"] = res.bias;
    try {
      const auto sub = word_token_subset_report(res.samples, cfg.prompts, ctx.corpus().vocab(), cfg.target->name());
      b["word_tokens"] = {{"kept", sub.kept}, {"total", sub.total}, {"perplexity", sub.report.perplexity},
                          {"bounds", {sub.report.lower, sub.report.upper}}};
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::data) throw;
    }
    payload["bars"].push_back(std::move(b));
  }
  extra["corpus_sha256"] = ctx.corpus_digest();
  ctx.write_bundle("perplexity_bars", "estimate", std::move(payload), csv.str(), {"predictors", "experiment"}, extra);
  return kOk;
}

int cmd_simulate(Context& ctx, std::string output) {
  const auto sec = ctx.cfg.at("experiment");
  const auto cfg = experiment_config(ctx, sec, sec.at("target").get<std::string>());
  const auto res = run_estimation_experiment(cfg);
  std::string lines;
  for (const auto& s : res.samples) lines += to_record(s).dump() + "\n";
  const fs::path path = output.empty() ? ctx.out_dir() / "simulated.jsonl" : fs::absolute(output);
  write_file_atomic(path, lines);
  print_json({{"records", path.string()},
              {"count", res.samples.size()},
              {"estimate", to_json(res.estimate)},
              {"truth", to_json(res.truth)},
              {"generator", to_json(res.generator)},
              {"bias", res.bias}});
  return kOk;
}

// --- bias-curve / rounding-sweep / split-table ---------------------------------------

int cmd_bias_curve(Context& ctx) {
  const auto sec = ctx.section("bias_curve", "experiment");
  const auto cfg = experiment_config(ctx, sec, sec.at("target").get<std::string>());
  const auto n_values = sec.at("n_values").get<std::vector<std::size_t>>();
  const auto curve = bias_curve(cfg, n_values, sec.at("seeds").get<std::size_t>());
  ojson payload{{"generator", cfg.generator->name()}, {"target", cfg.target->name()}, {"N", cfg.prompts.size()}, {"points", ojson::array()}};
  std::ostringstream csv;
  csv << "n,mean_bias,spread,mean_bias_bits,true_loss\n";
  for (const auto& p : curve) {
    payload["points"].push_back(to_json(p));
    csv << p.n << ',' << format_double(p.mean_bias) << ',' << format_double(p.spread) << ','
        << format_double(p.mean_bias / std::numbers::ln2) << ',' << format_double(p.true_loss) << '\n';
  }
  ctx.write_bundle("bias_curve", "bias-curve", std::move(payload), csv.str(), {"predictors", "experiment", "bias_curve"},
                   {{"corpus_sha256", ctx.corpus_digest()}});
  return kOk;
}

int cmd_rounding_sweep(Context& ctx) {
  const auto sec = ctx.section("rounding_sweep", "experiment");
  auto cfg = experiment_config(ctx, sec, sec.at("target").get<std::string>());
  std::vector<std::optional<AllowedSet>> presets;
  for (const auto& p : sec.at("presets")) presets.push_back(AllowedSet::preset(p.get<std::string>()));
  const auto rows = rounding_sweep(cfg.target, cfg.generator, presets, cfg);
  ojson payload{{"generator", cfg.generator->name()}, {"target", cfg.target->name()}, {"rows", ojson::array()}};
  std::ostringstream csv;
  csv << "preset,loss,perplexity,lower,upper,true_perplexity\n";
  for (const auto& r : rows) {
    auto j = to_json(r.estimate);
    j["preset"] = r.preset;
    j["true_perplexity"] = std::exp(r.true_loss);
    payload["rows"].push_back(std::move(j));
    csv << r.preset << ',' << format_double(r.estimate.loss) << ',' << format_double(r.estimate.perplexity) << ','
        << format_double(r.estimate.lower) << ',' << format_double(r.estimate.upper) << ','
        << format_double(std::exp(r.true_loss)) << '\n';
  }
  ctx.write_bundle("rounding_table", "rounding-sweep", std::move(payload), csv.str(),
                   {"predictors", "experiment", "rounding_sweep"}, {{"corpus_sha256", ctx.corpus_digest()}});
  return kOk;
}

int cmd_split_table(Context& ctx) {
  const auto sec = ctx.cfg.at("split_table");
  const auto train = prompts_for(ctx, sec, "train_split", 3);
  const auto val = prompts_for(ctx, sec, "validation_split", 4);
  ojson payload{{"rows", ojson::array()}};
  std::ostringstream csv;
  csv << "predictor,split,N,accuracy,accuracy_err,loss,loss_err,perplexity,perplexity_lower,perplexity_upper\n";
  for (const auto& name : sec.at("predictors")) {
    const auto rep = split_comparison(*ctx.predictor(name.get<std::string>()), train, val);
    payload["rows"].push_back({{"predictor", rep.predictor}, {"train", to_json(rep.train)}, {"validation", to_json(rep.validation)}});
    for (const auto& [split, s] : {std::pair{"train", rep.train}, std::pair{"validation", rep.validation}})
      csv << rep.predictor << ',' << split << ',' << s.N << ',' << format_double(s.accuracy) << ','
          << format_double(s.accuracy_err) << ',' << format_double(s.loss) << ',' << format_double(s.loss_err) << ','
          << format_double(s.perplexity) << ',' << format_double(s.perplexity_lower) << ','
          << format_double(s.perplexity_upper) << '\n';
  }
  ctx.write_bundle("split_table", "split-table", std::move(payload), csv.str(), {"predictors", "split_table"},
                   {{"corpus_sha256", ctx.corpus_digest()}});
  return kOk;
}

// --- serve / export ------------------------------------------------------------------

fs::path sets_dir(const Context& ctx) { return ctx.artifacts() / "sets"; }

fs::path event_log_path(const Context& ctx) {
  const fs::path p(ctx.cfg.at("serve").at("event_log").get<std::string>());
  return p.is_absolute() ? p : ctx.artifacts() / p;
}

// Frozen sets are built once and then always loaded from artifacts/sets, so every
// participant and every restart sees the same questions.
std::vector<QuestionSet> frozen_sets(Context& ctx) {
  std::vector<QuestionSet> out;
  for (const auto& spec_json : ctx.cfg.at("serve").at("sets")) {
    const auto spec = QuestionSetSpec::from_json(plain(spec_json));
    const auto path = sets_dir(ctx) / (spec.id + ".json");
    if (fs::exists(path)) {
      auto set = QuestionSet::from_json(nlohmann::json::parse(read_file(path)));
      if (set.length() != spec.length)
        std::cerr << "note: question set '" << spec.id << "' is frozen with length " << set.length() << "; keeping it\n";
      out.push_back(std::move(set));
      continue;
    }
    const auto& split = ctx.corpus().split(spec.split);
    auto set = spec.game == Game::top1 ? build_top1_set(spec, split)
                                       : build_compare_set(spec, split, *ctx.predictor(spec.generator));
    write_file_atomic(path, set.to_json().dump() + "\n");
    std::cerr << "froze question set '" << spec.id << "' to " << path.string() << "\n";
    out.push_back(std::move(set));
  }
  return out;
}

std::vector<QuestionSet> load_frozen_sets(const Context& ctx) {
  std::vector<QuestionSet> out;
  if (!fs::exists(sets_dir(ctx))) return out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(sets_dir(ctx)))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out.push_back(QuestionSet::from_json(nlohmann::json::parse(read_file(f))));
  return out;
}

int cmd_serve(Context& ctx) {
  const auto& sec = ctx.cfg.at("serve");
  // Block the stop signals before any thread starts; a dedicated thread waits for them.
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

  Service service(ctx.corpus().tokenizer(), frozen_sets(ctx), event_log_path(ctx));
  if (service.dropped_tail()) std::cerr << "event log had a torn tail; it was cut at the last intact event\n";
  HttpServer http(service);
  const auto host = sec.at("host").get<std::string>();
  const int port = http.bind(host, sec.at("port").get<int>());

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&stop_signals, &sig);
    http.stop();
  });
  std::cout << nlohmann::json{{"listening", "http://" + host + ":" + std::to_string(port)},
                              {"port", port},
                              {"event_log", event_log_path(ctx).string()},
                              {"replayed_events", service.replayed_events()}}
                   .dump()
            << std::endl;
  http.listen();
  pthread_kill(waiter.native_handle(), SIGTERM);  // no-op wake-up if a signal already arrived
  waiter.join();
  service.close();
  std::cerr << "stopped; event log closed\n";
  return kOk;
}

struct ExportFlags {
  std::string game = "compare", set, participant, output;
};

int cmd_export(Context& ctx, const ExportFlags& f) {
  const auto log = event_log_path(ctx);
  if (!fs::exists(log)) fail(ErrorKind::data, "no event log at " + log.string());
  const Service service(ctx.corpus().tokenizer(), load_frozen_sets(ctx), log, true);
  ExportFilter filter;
  filter.game = game_from_string(f.game);
  if (!f.set.empty()) filter.set = f.set;
  if (!f.participant.empty()) filter.participant = f.participant;
  const auto lines = service.export_records(filter);
  if (f.output.empty() || f.output == "-") {
    std::cout << lines;
  } else {
    write_file_atomic(f.output, lines);
    std::cerr << "wrote " << f.output << "\n";
  }
  return kOk;
}

// --- main ----------------------------------------------------------------------------

void apply_env(Context& ctx) {
  if (const char* a = std::getenv("LMGAME_ARTIFACTS"); a && *a) ctx.cfg["artifacts"] = fs::absolute(a).string();
  if (const char* l = std::getenv("LMGAME_EVENT_LOG"); l && *l) ctx.cfg["serve"]["event_log"] = fs::absolute(l).string();
  if (const char* p = std::getenv("LMGAME_PORT"); p && *p) {
    try {
      ctx.cfg["serve"]["port"] = std::stoi(p);
    } catch (const std::exception&) {
      fail(ErrorKind::config, std::string("LMGAME_PORT is not a number: ") + p);
    }
  }
}

int run(int argc, char** argv) {
  CLI::App app{"lmgame: estimate language-model and human next-token perplexity from comparison games"};
  app.set_version_flag("--version", LMGAME_VERSION);
  app.require_subcommand(1);
  std::string config_path, out_dir, artifacts;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON config file (merged over the built-in defaults)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "master seed");
  app.add_option("--out-dir", out_dir, "where reports are written");
  app.add_option("--artifacts", artifacts, "artifact directory (corpus, models, question sets, event log)");
  app.fallthrough();

  PrepareFlags prep;
  auto* prepare = app.add_subcommand("prepare", "validate and freeze a corpus and its tokenizer");
  prepare->add_option("--manifest", prep.manifest, "corpus manifest JSON");
  prepare->add_flag("--synthetic", prep.synthetic, "generate the built-in synthetic corpus");
  prepare->add_option("--tokenizer", prep.tokenizer, "bpe or word");
  prepare->add_option("--vocab", prep.vocab, "GPT-2 style vocab.json");
  prepare->add_option("--merges", prep.merges, "GPT-2 style merges.txt");

  std::size_t order = 0;
  double k = 0.01;
  std::string train_split = "train", model_name;
  auto* train = app.add_subcommand("train-ngram", "train an n-gram model and save it under artifacts/models");
  train->add_option("--order", order, "n-gram order")->required()->check(CLI::PositiveNumber);
  train->add_option("--k", k, "add-k smoothing");
  train->add_option("--split", train_split, "training split");
  train->add_option("--name", model_name, "model name");

  std::string top1_export, top1_filter;
  std::vector<std::string> top1_predictors;
  auto* eval = app.add_subcommand("eval-top1", "top-1 accuracy of predictors and of exported human guesses");
  eval->add_option("--export", top1_export, "top-1 export (JSON lines) from the service")->check(CLI::ExistingFile);
  eval->add_option("--filter", top1_filter, "none, exclude_visually_empty or word_tokens_only");
  eval->add_option("--predictor", top1_predictors, "predictor name (repeatable)");

  std::string records;
  std::optional<std::size_t> bootstrap;
  auto* estimate = app.add_subcommand("estimate", "perplexity bars from exported records or from a simulation");
  estimate->add_option("--records", records, "ratio records (JSON lines)")->check(CLI::ExistingFile);
  estimate->add_option("--bootstrap", bootstrap, "bootstrap iterations over responders (0 disables)");

  std::optional<std::vector<std::size_t>> n_values;
  std::optional<std::size_t> seeds, bias_n;
  auto* bias = app.add_subcommand("bias-curve", "estimate minus truth as a function of samples per prompt");
  bias->add_option("--n-values", n_values, "samples per prompt; 0 means exhaustive");
  bias->add_option("--seeds", seeds, "repetitions per n");
  bias->add_option("--prompts", bias_n, "number of prompts N");

  std::optional<std::vector<std::string>> presets;
  auto* sweep = app.add_subcommand("rounding-sweep", "estimated perplexity under coarser answer sets");
  sweep->add_option("--presets", presets, "allowed-set presets");

  auto* split_table = app.add_subcommand("split-table", "train versus validation accuracy and perplexity");

  std::string sim_output, sim_target;
  auto* simulate = app.add_subcommand("simulate", "simulate responders and write their ratio records");
  simulate->add_option("--output", sim_output, "records file (default <out-dir>/simulated.jsonl)");
  simulate->add_option("--target", sim_target, "predictor whose beliefs the responders hold");

  std::optional<std::string> host, event_log;
  std::optional<int> port;
  auto* serve = app.add_subcommand("serve", "run the game service until SIGINT or SIGTERM");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port (0 picks a free one)");
  serve->add_option("--event-log", event_log, "event log path");

  ExportFlags exp;
  auto* exporter = app.add_subcommand("export", "write records from the event log as JSON lines");
  exporter->add_option("--game", exp.game, "compare or top1");
  exporter->add_option("--set", exp.set, "question set id");
  exporter->add_option("--participant", exp.participant, "participant");
  exporter->add_option("--output", exp.output, "output file (default stdout)");
  exporter->add_option("--event-log", event_log, "event log path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  Context ctx;
  ctx.cfg = ojson::parse(kDefaults);
  ctx.base_dir = fs::current_path();
  if (!config_path.empty()) {
    const auto user = ojson::parse(read_file(config_path), nullptr, false);
    if (user.is_discarded() || !user.is_object()) fail(ErrorKind::config, config_path + ": not a JSON object");
    ctx.cfg.merge_patch(user);
    ctx.base_dir = fs::absolute(config_path).parent_path();
  }
  apply_env(ctx);
  if (seed) ctx.cfg["seed"] = *seed;
  if (!out_dir.empty()) ctx.cfg["out_dir"] = fs::absolute(out_dir).string();
  if (!artifacts.empty()) ctx.cfg["artifacts"] = fs::absolute(artifacts).string();
  if (host) ctx.cfg["serve"]["host"] = *host;
  if (port) ctx.cfg["serve"]["port"] = *port;
  if (event_log) ctx.cfg["serve"]["event_log"] = fs::absolute(*event_log).string();
  if (!top1_filter.empty()) ctx.cfg["eval_top1"]["filter"] = top1_filter;
  if (!top1_predictors.empty()) ctx.cfg["eval_top1"]["predictors"] = top1_predictors;
  if (bootstrap) ctx.cfg["experiment"]["bootstrap"] = *bootstrap;
  if (n_values) ctx.cfg["bias_curve"]["n_values"] = *n_values;
  if (seeds) ctx.cfg["bias_curve"]["seeds"] = *seeds;
  if (bias_n) ctx.cfg["bias_curve"]["N"] = *bias_n;
  if (presets) ctx.cfg["rounding_sweep"]["presets"] = *presets;
  if (!sim_target.empty()) ctx.cfg["experiment"]["target"] = sim_target;

  if (*prepare) return cmd_prepare(ctx, prep);
  if (*train) return cmd_train_ngram(ctx, order, k, train_split, model_name);
  if (*eval) return cmd_eval_top1(ctx, top1_export);
  if (*estimate) return cmd_estimate(ctx, records);
  if (*bias) return cmd_bias_curve(ctx);
  if (*sweep) return cmd_rounding_sweep(ctx);
  if (*split_table) return cmd_split_table(ctx);
  if (*simulate) return cmd_simulate(ctx, sim_output);
  if (*serve) return cmd_serve(ctx);
  if (*exporter) return cmd_export(ctx, exp);
  return kConfigError;
}

}  // namespace
}  // namespace lmgame::cli

int main(int argc, char** argv) {
  using namespace lmgame;
  try {
    return cli::run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return cli::exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error (config): " << e.what() << "\n";
    return cli::kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error (runtime): " << e.what() << "\n";
    return cli::kRuntimeError;
  }
}
