#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmgame/core/error.hpp"
#include "lmgame/core/io.hpp"
#include "lmgame/core/random.hpp"
#include "lmgame/core/types.hpp"
#include "lmgame/corpus/bpe.hpp"
#include "lmgame/corpus/vocab.hpp"

namespace lmgame {

inline constexpr std::size_t kDefaultMaxContext = 120;

struct CorpusSplit {
  std::string name;
  std::vector<TokenSeq> documents;
  std::vector<std::string> document_digests;  // sha256 of each raw document
  std::string source_digest;                  // sha256 over the document digests, in order

  std::size_t token_count() const {
    std::size_t n = 0;
    for (const auto& d : documents) n += d.size();
    return n;
  }

  bool empty() const { return token_count() == 0; }

  void check_ids(std::size_t vocab_size) const {
    for (std::size_t d = 0; d < documents.size(); ++d)
      for (auto id : documents[d])
        if (id >= vocab_size)
          fail(ErrorKind::data, "split '" + name + "' document " + std::to_string(d) + " has token " + std::to_string(id) +
                                    " >= vocab size " + std::to_string(vocab_size));
  }
};

inline std::string combine_digests(const std::vector<std::string>& digests) {
  std::string all;
  for (const auto& d : digests) all += d;
  return sha256_hex(all);
}

// Splits built from token sequences directly (tests, synthetic corpora). Digests are taken
// over the token ids.
inline CorpusSplit make_split(std::string name, std::vector<TokenSeq> documents) {
  CorpusSplit split{std::move(name), std::move(documents), {}, {}};
  for (const auto& doc : split.documents) {
    std::string raw(reinterpret_cast<const char*>(doc.data()), doc.size() * sizeof(TokenId));
    split.document_digests.push_back(sha256_hex(raw));
  }
  split.source_digest = combine_digests(split.document_digests);
  return split;
}

inline CorpusSplit tokenize_split(std::string name, const std::vector<std::string>& texts, const Tokenizer& tokenizer) {
  CorpusSplit split{std::move(name), {}, {}, {}};
  for (const auto& text : texts) {
    split.documents.push_back(tokenizer.encode(text));
    split.document_digests.push_back(sha256_hex(text));
  }
  split.source_digest = combine_digests(split.document_digests);
  return split;
}

inline void check_disjoint(const CorpusSplit& a, const CorpusSplit& b) {
  std::unordered_set<std::string> seen(a.document_digests.begin(), a.document_digests.end());
  for (std::size_t i = 0; i < b.document_digests.size(); ++i)
    if (seen.count(b.document_digests[i]))
      fail(ErrorKind::data, "document " + std::to_string(i) + " of split '" + b.name + "' also appears in split '" + a.name + "'");
}

struct PromptOrigin {
  std::size_t document = 0;
  std::size_t offset = 0;

  auto operator<=>(const PromptOrigin&) const = default;
};

struct PromptInstance {
  TokenSeq context;
  TokenId true_next = 0;
  PromptOrigin origin;
  std::optional<TokenId> following;  // token after true_next, when the document continues

  bool operator==(const PromptInstance&) const = default;
};

inline PromptInstance make_prompt(const CorpusSplit& split, PromptOrigin origin, std::size_t max_context) {
  const auto& doc = split.documents.at(origin.document);
  if (origin.offset >= doc.size()) fail(ErrorKind::data, "prompt offset past end of document");
  PromptInstance p;
  const std::size_t begin = origin.offset > max_context ? origin.offset - max_context : 0;
  p.context.assign(doc.begin() + static_cast<std::ptrdiff_t>(begin), doc.begin() + static_cast<std::ptrdiff_t>(origin.offset));
  p.true_next = doc[origin.offset];
  p.origin = origin;
  if (origin.offset + 1 < doc.size()) p.following = doc[origin.offset + 1];
  return p;
}

// Uniform draw of prompt positions (document, offset >= 1) from a split. Positions are
// distinct while count fits in the split, and drawn with replacement otherwise.
inline std::vector<PromptInstance> sample_prompts(const CorpusSplit& split, std::size_t count, std::size_t max_context,
                                                  std::uint64_t seed) {
  if (count == 0) fail(ErrorKind::config, "prompt count must be at least 1");
  std::vector<std::size_t> cumulative;  // eligible positions before each document
  std::size_t eligible = 0;
  for (const auto& doc : split.documents) {
    cumulative.push_back(eligible);
    if (doc.size() >= 2) eligible += doc.size() - 1;
  }
  if (eligible == 0) fail(ErrorKind::data, "split '" + split.name + "' has no eligible prompt positions");

  auto locate = [&](std::size_t global) {
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), global);
    const auto d = static_cast<std::size_t>(std::distance(cumulative.begin(), it)) - 1;
    return PromptOrigin{d, global - cumulative[d] + 1};
  };

  auto rng = make_rng(seed, 0x70726f6d);
  std::vector<std::size_t> picks;
  picks.reserve(count);
  if (count <= eligible) {
    // Floyd's algorithm: a uniform subset, then a uniform order.
    std::set<std::size_t> chosen;
    for (std::size_t j = eligible - count; j < eligible; ++j) {
      const auto t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
      if (!chosen.insert(t).second) chosen.insert(j);
    }
    picks.assign(chosen.begin(), chosen.end());
    std::shuffle(picks.begin(), picks.end(), rng);
  } else {
    std::uniform_int_distribution<std::size_t> dist(0, eligible - 1);
    for (std::size_t i = 0; i < count; ++i) picks.push_back(dist(rng));
  }

  std::vector<PromptInstance> prompts;
  prompts.reserve(count);
  for (auto g : picks) prompts.push_back(make_prompt(split, locate(g), max_context));
  return prompts;
}

// Contiguous walk through one document, as in the top-1 game: round k predicts token
// start+k from everything before it (truncated to max_context).
inline std::vector<PromptInstance> segment_prompts(const CorpusSplit& split, std::size_t length, std::size_t max_context,
                                                   std::uint64_t seed) {
  std::vector<std::size_t> candidates;
  for (std::size_t d = 0; d < split.documents.size(); ++d)
    if (split.documents[d].size() > length) candidates.push_back(d);
  if (candidates.empty()) fail(ErrorKind::data, "no document in split '" + split.name + "' is longer than " + std::to_string(length));
  auto rng = make_rng(seed, 0x7365676d);
  const auto d = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
  const auto& doc = split.documents[d];
  const auto start = std::uniform_int_distribution<std::size_t>(1, doc.size() - length)(rng);
  std::vector<PromptInstance> prompts;
  for (std::size_t k = 0; k < length; ++k) prompts.push_back(make_prompt(split, {d, start + k}, max_context));
  return prompts;
}

// ---------------------------------------------------------------------------
// Manifests and frozen artifacts
// ---------------------------------------------------------------------------

// {"documents": "file" | "lines", "splits": {"train": ["a.txt", ...], "validation": [...]}}
// Paths are relative to the manifest. "file" treats each file as one document, "lines"
// treats each non-empty line as one.
struct CorpusManifest {
  std::map<std::string, std::vector<std::string>> split_texts;

  static CorpusManifest load(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::data, path.string() + ": " + e.what());
    }
    const auto mode = j.value("documents", std::string("file"));
    if (mode != "file" && mode != "lines") fail(ErrorKind::data, path.string() + ": documents must be 'file' or 'lines'");
    if (!j.contains("splits") || !j["splits"].is_object()) fail(ErrorKind::data, path.string() + ": missing 'splits' object");
    const auto base = path.parent_path();
    CorpusManifest m;
    for (auto it = j["splits"].begin(); it != j["splits"].end(); ++it) {
      auto& texts = m.split_texts[it.key()];
      for (const auto& file : it.value()) {
        const auto text = read_file(base / file.get<std::string>());
        if (!unicode::is_valid_utf8(text)) fail(ErrorKind::data, file.get<std::string>() + ": not valid UTF-8");
        if (mode == "file") {
          texts.push_back(text);
        } else {
          std::size_t pos = 0;
          while (pos <= text.size()) {
            auto end = text.find('\n', pos);
            if (end == std::string::npos) end = text.size();
            if (end > pos) texts.push_back(text.substr(pos, end - pos));
            pos = end + 1;
          }
        }
      }
    }
    return m;
  }
};

// A tokenizer plus its tokenized splits.
class Corpus {
 public:
  Corpus(Tokenizer tokenizer, std::map<std::string, CorpusSplit> splits)
      : tokenizer_(std::move(tokenizer)), splits_(std::move(splits)) {
    for (const auto& [_, s] : splits_) s.check_ids(tokenizer_.vocab().size());
    for (auto a = splits_.begin(); a != splits_.end(); ++a)
      for (auto b = std::next(a); b != splits_.end(); ++b) check_disjoint(a->second, b->second);
  }

  static Corpus from_manifest(const CorpusManifest& manifest, Tokenizer tokenizer) {
    std::map<std::string, CorpusSplit> splits;
    for (const auto& [name, texts] : manifest.split_texts) splits.emplace(name, tokenize_split(name, texts, tokenizer));
    return Corpus(std::move(tokenizer), std::move(splits));
  }

  const Tokenizer& tokenizer() const { return tokenizer_; }
  const Vocab& vocab() const { return tokenizer_.vocab(); }

  const CorpusSplit& split(const std::string& name) const {
    auto it = splits_.find(name);
    if (it == splits_.end()) fail(ErrorKind::not_found, "no split named '" + name + "'");
    return it->second;
  }
  const std::map<std::string, CorpusSplit>& splits() const { return splits_; }

  // Layout: vocab.json, merges.txt, tokenizer.json, splits/<name>.json, checksums.json.
  // Returns the checksum table.
  std::map<std::string, std::string> save(const std::filesystem::path& dir) const {
    std::map<std::string, std::string> files;
    files["vocab.json"] = vocab().vocab_json();
    files["merges.txt"] = vocab().merges_text();
    files["tokenizer.json"] = nlohmann::json{{"kind", to_string(tokenizer_.kind())}}.dump() + "\n";
    for (const auto& [name, s] : splits_) {
      nlohmann::json docs = nlohmann::json::array();
      for (std::size_t d = 0; d < s.documents.size(); ++d)
        docs.push_back({{"digest", s.document_digests[d]}, {"tokens", s.documents[d]}});
      files["splits/" + name + ".json"] =
          nlohmann::json{{"name", name}, {"source_digest", s.source_digest}, {"documents", docs}}.dump() + "\n";
    }
    std::map<std::string, std::string> checksums;
    for (const auto& [rel, content] : files) {
      write_file_atomic(dir / rel, content);
      checksums[rel] = sha256_hex(content);
    }
    write_file_atomic(dir / "checksums.json", nlohmann::json(checksums).dump(2) + "\n");
    return checksums;
  }

  static Corpus load(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "checksums.json"))
      fail(ErrorKind::data, dir.string() + ": not a prepared corpus (missing checksums.json)");
    const auto checksums = nlohmann::json::parse(read_file(dir / "checksums.json"));
    for (auto it = checksums.begin(); it != checksums.end(); ++it)
      if (sha256_hex(read_file(dir / it.key())) != it.value().get<std::string>())
        fail(ErrorKind::data, (dir / it.key()).string() + ": checksum mismatch");
    const auto kind = nlohmann::json::parse(read_file(dir / "tokenizer.json")).at("kind").get<std::string>();
    Tokenizer tokenizer(Vocab::load_gpt2(dir / "vocab.json", dir / "merges.txt"), tokenizer_kind_from_string(kind));
    std::map<std::string, CorpusSplit> splits;
    for (const auto& entry : std::filesystem::directory_iterator(dir / "splits")) {
      const auto j = nlohmann::json::parse(read_file(entry.path()));
      CorpusSplit s;
      s.name = j.at("name").get<std::string>();
      s.source_digest = j.at("source_digest").get<std::string>();
      for (const auto& d : j.at("documents")) {
        s.document_digests.push_back(d.at("digest").get<std::string>());
        s.documents.push_back(d.at("tokens").get<TokenSeq>());
      }
      splits.emplace(s.name, std::move(s));
    }
    return Corpus(std::move(tokenizer), std::move(splits));
  }

 private:
  Tokenizer tokenizer_;
  std::map<std::string, CorpusSplit> splits_;
};

}  // namespace lmgame
