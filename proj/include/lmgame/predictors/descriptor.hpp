#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "lmgame/core/error.hpp"
#include "lmgame/core/io.hpp"
#include "lmgame/corpus/corpus.hpp"
#include "lmgame/predictors/ngram.hpp"
#include "lmgame/predictors/predictor.hpp"
#include "lmgame/predictors/remote.hpp"

namespace lmgame {

enum class PredictorKind { ngram, lookup, uniform, remote };

inline PredictorKind predictor_kind_from_string(const std::string& s) {
  if (s == "ngram") return PredictorKind::ngram;
  if (s == "lookup") return PredictorKind::lookup;
  if (s == "uniform") return PredictorKind::uniform;
  if (s == "remote") return PredictorKind::remote;
  fail(ErrorKind::config, "unknown predictor kind '" + s + "'");
}

// How to obtain a predictor. Parameters by kind:
//   ngram:   {"model": path} or {"order": int, "k": real, "train_split": name}
//   lookup:  {"table": path}
//   uniform: {} (vocab size from the corpus) or {"vocab_size": int}
//   remote:  {"url": "http://host:port"}
struct PredictorDescriptor {
  PredictorKind kind = PredictorKind::uniform;
  std::string display_name;
  nlohmann::json params = nlohmann::json::object();

  static PredictorDescriptor from_json(const std::string& default_name, const nlohmann::json& j) {
    PredictorDescriptor d;
    d.kind = predictor_kind_from_string(j.at("kind").get<std::string>());
    d.display_name = j.value("name", default_name);
    d.params = j;
    switch (d.kind) {
      case PredictorKind::ngram:
        if (!j.contains("model") && !(j.contains("order") && j.contains("train_split")))
          fail(ErrorKind::config, d.display_name + ": ngram needs 'model' or 'order' + 'train_split'");
        if (j.contains("order") && j["order"].get<int>() < 1) fail(ErrorKind::config, d.display_name + ": order must be >= 1");
        if (j.contains("k") && !(j["k"].get<double>() > 0)) fail(ErrorKind::config, d.display_name + ": k must be > 0");
        break;
      case PredictorKind::lookup:
        if (!j.contains("table")) fail(ErrorKind::config, d.display_name + ": lookup needs 'table'");
        break;
      case PredictorKind::remote:
        if (!j.contains("url")) fail(ErrorKind::config, d.display_name + ": remote needs 'url'");
        break;
      case PredictorKind::uniform:
        break;
    }
    return d;
  }
};

inline PredictorPtr make_predictor(const PredictorDescriptor& d, const Corpus* corpus,
                                   const std::filesystem::path& base_dir = {}) {
  const auto& p = d.params;
  auto resolve = [&](const std::string& rel) {
    const std::filesystem::path p(rel);
    return p.is_absolute() ? p : base_dir / p;
  };
  auto need_corpus = [&] {
    if (!corpus) fail(ErrorKind::config, d.display_name + ": needs a prepared corpus");
    return corpus;
  };
  switch (d.kind) {
    case PredictorKind::ngram: {
      if (p.contains("model")) {
        auto m = NGramModel::from_json(nlohmann::json::parse(read_file(resolve(p["model"].get<std::string>()))));
        return std::make_shared<NGramModel>(std::move(m));
      }
      const auto* c = need_corpus();
      return std::make_shared<NGramModel>(NGramModel::train(c->split(p["train_split"].get<std::string>()),
                                                            p["order"].get<std::size_t>(), p.value("k", 0.01),
                                                            c->vocab().size(), d.display_name));
    }
    case PredictorKind::lookup:
      return std::make_shared<LookupPredictor>(
          LookupPredictor::from_json(nlohmann::json::parse(read_file(resolve(p["table"].get<std::string>()))), d.display_name));
    case PredictorKind::uniform: {
      const auto v = p.contains("vocab_size") ? p["vocab_size"].get<std::size_t>() : need_corpus()->vocab().size();
      return std::make_shared<UniformPredictor>(v, d.display_name);
    }
    case PredictorKind::remote: {
      auto r = RemotePredictor::connect(p["url"].get<std::string>(), p.value("timeout", 60));
      return std::make_shared<RemotePredictor>(p["url"].get<std::string>(), r.vocab_size(), d.display_name, p.value("timeout", 60));
    }
  }
  fail(ErrorKind::config, "unhandled predictor kind");
}

}  // namespace lmgame
