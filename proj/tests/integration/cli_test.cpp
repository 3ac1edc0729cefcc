#include <gtest/gtest.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

struct Result {
  int code = -1;
  std::string out, err;
};

// Runs the CLI inside dir, with a small synthetic corpus unless the test overrides it.
class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("lmgame-cli-" + std::to_string(::getpid()) + "-" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write("small.json", R"({
      "prepare": {"synthetic": {"train_docs": 40, "validation_docs": 15, "words_per_doc": 150}},
      "experiment": {"N": 200},
      "bias_curve": {"seeds": 2},
      "split_table": {"N": 200},
      "eval_top1": {"N": 200},
      "serve": {"sets": [{"id": "t", "game": "top1", "length": 5, "seed": 1},
                         {"id": "c", "game": "compare", "length": 6, "n": 4, "generator": "ngram-1", "seed": 2}]}
    })");
  }
  void TearDown() override { fs::remove_all(dir_); }

  void write(const std::string& rel, const std::string& content) {
    fs::create_directories((dir_ / rel).parent_path());
    std::ofstream(dir_ / rel, std::ios::binary) << content;
  }

  Result run(const std::vector<std::string>& args, bool small = true) {
    std::string cmd = "cd " + quote(dir_.string()) + " && " + quote(LMGAME_CLI_PATH);
    if (small) cmd += " --config small.json";
    for (const auto& a : args) cmd += " " + quote(a);
    cmd += " > cli.out 2> cli.err";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(dir_ / "cli.out");
    r.err = slurp(dir_ / "cli.err");
    return r;
  }

  void prepare() { ASSERT_EQ(run({"prepare", "--synthetic"}).code, 0); }

  fs::path dir_;
};

TEST_F(Cli, PrepareIsDeterministic) {
  const auto first = run({"prepare", "--synthetic"});
  ASSERT_EQ(first.code, 0) << first.err;
  const auto a = nlohmann::json::parse(first.out)["checksums"];
  const auto second = run({"prepare", "--synthetic"});
  EXPECT_EQ(nlohmann::json::parse(second.out)["checksums"], a);
  EXPECT_TRUE(fs::exists(dir_ / "artifacts/corpus/checksums.json"));
}

TEST_F(Cli, PrepareFromManifest) {
  write("corpus/a.txt", "the cat sat on the mat.\nthe dog sat on the log.\n");
  write("corpus/b.txt", "a cat and a dog.\n");
  write("corpus/manifest.json", R"({"documents": "lines", "splits": {"train": ["a.txt"], "validation": ["b.txt"]}})");
  auto r = run({"prepare", "--manifest", "corpus/manifest.json", "--tokenizer", "word"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["splits"]["train"]["documents"], 2);
  EXPECT_EQ(j["splits"]["validation"]["documents"], 1);

  // A byte-level BPE tokenizer needs both vocab files; a missing one is a data error.
  r = run({"prepare", "--manifest", "corpus/manifest.json", "--tokenizer", "bpe", "--vocab",
           std::string(LMGAME_TEST_DATA_DIR) + "/bpe/vocab.json", "--merges", "missing-merges.txt"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("missing-merges.txt"), std::string::npos) << r.err;
  r = run({"prepare", "--manifest", "corpus/manifest.json", "--tokenizer", "bpe", "--vocab",
           std::string(LMGAME_TEST_DATA_DIR) + "/bpe/vocab.json", "--merges", std::string(LMGAME_TEST_DATA_DIR) + "/bpe/merges.txt"});
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"no-such-verb"}).code, 2);
  write("bad.json", "{not json");
  EXPECT_EQ(run({"--config", "bad.json", "split-table"}, false).code, 2);
  EXPECT_EQ(run({"split-table"}).code, 3);  // no prepared corpus yet
  prepare();
  EXPECT_EQ(run({"eval-top1", "--predictor", "nope"}).code, 2);
  write("records.jsonl", "{\"round_id\": 1}\n");
  const auto r = run({"estimate", "--records", "records.jsonl"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("records.jsonl:1:"), std::string::npos) << r.err;
  EXPECT_EQ(run({"serve", "--port", "0", "--event-log", "/proc/forbidden/events.jsonl"}).code, 4);
}

TEST_F(Cli, ReportsAreByteIdenticalAcrossRuns) {
  prepare();
  for (const auto& [verb, kind] : std::vector<std::pair<std::string, std::string>>{
           {"split-table", "split_table"}, {"bias-curve", "bias_curve"}, {"rounding-sweep", "rounding_table"},
           {"eval-top1", "accuracy_histogram"}, {"estimate", "perplexity_bars"}}) {
    ASSERT_EQ(run({verb, "--out-dir", "one"}).code, 0) << verb;
    ASSERT_EQ(run({verb, "--out-dir", "two"}).code, 0) << verb;
    EXPECT_EQ(slurp(dir_ / "one" / (kind + ".json")), slurp(dir_ / "two" / (kind + ".json"))) << verb;
    EXPECT_EQ(slurp(dir_ / "one" / (kind + ".csv")), slurp(dir_ / "two" / (kind + ".csv"))) << verb;
    const auto j = nlohmann::json::parse(slurp(dir_ / "one" / (kind + ".json")));
    EXPECT_EQ(j["kind"], kind);
    EXPECT_TRUE(j["provenance"].contains("seed"));
  }
  ASSERT_EQ(run({"bias-curve", "--out-dir", "three", "--seed", "5"}).code, 0);
  EXPECT_NE(slurp(dir_ / "one/bias_curve.json"), slurp(dir_ / "three/bias_curve.json"));
}

TEST_F(Cli, BiasCurveDefaultsAndFlags) {
  prepare();
  ASSERT_EQ(run({"bias-curve"}).code, 0);
  auto j = nlohmann::json::parse(slurp(dir_ / "out/bias_curve.json"));
  std::vector<std::size_t> ns;
  for (const auto& p : j["payload"]["points"]) ns.push_back(p["n"]);
  EXPECT_EQ(ns, (std::vector<std::size_t>{5, 10, 20, 40}));
  ASSERT_EQ(run({"bias-curve", "--n-values", "0", "--seeds", "3"}).code, 0);
  j = nlohmann::json::parse(slurp(dir_ / "out/bias_curve.json"));
  EXPECT_NEAR(j["payload"]["points"][0]["mean_bias"].get<double>(), 0.0, 1e-9);
}

TEST_F(Cli, SelfRecordsEstimateTheGeneratorExactly) {
  prepare();
  write("self.json", R"({"experiment": {"N": 200, "target": "ngram-2", "generator": "ngram-2", "responders": 3}})");
  auto r = run({"--config", "self.json", "simulate", "--output", "self.jsonl"}, false);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto sim = nlohmann::json::parse(r.out);
  EXPECT_EQ(sim["estimate"]["loss_gap"], 0.0);
  r = run({"--config", "self.json", "estimate", "--records", "self.jsonl", "--bootstrap", "20"}, false);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto bars = nlohmann::json::parse(slurp(dir_ / "out/perplexity_bars.json"))["payload"]["bars"];
  EXPECT_DOUBLE_EQ(bars[0]["perplexity"].get<double>(), sim["generator"]["perplexity"].get<double>());
  EXPECT_EQ(bars[0]["bootstrap"]["iterations"], 20);
}

TEST_F(Cli, WeakModelHasTheHigherBar) {
  prepare();
  ASSERT_EQ(run({"estimate"}).code, 0);
  const auto bars = nlohmann::json::parse(slurp(dir_ / "out/perplexity_bars.json"))["payload"]["bars"];
  ASSERT_EQ(bars.size(), 3u);
  EXPECT_EQ(bars[1]["name"], "ngram-1");
  EXPECT_EQ(bars[2]["name"], "ngram-4");
  EXPECT_GT(bars[1]["perplexity"].get<double>(), bars[2]["perplexity"].get<double>());
}

TEST_F(Cli, TrainNgramWritesAReusableModel) {
  prepare();
  auto r = run({"train-ngram", "--order", "3", "--k", "0.05"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto path = nlohmann::json::parse(r.out)["model"].get<std::string>();
  EXPECT_TRUE(fs::exists(path));
  write("model.json", R"({"predictors": {"tri": {"kind": "ngram", "model": "artifacts/models/ngram-3.json"}},
                          "split_table": {"N": 100, "predictors": ["tri"]}})");
  r = run({"--config", "model.json", "split-table"}, false);
  EXPECT_EQ(r.code, 0) << r.err;
}

// Starts `lmgame serve` and returns its pid; the port is read from its first stdout line.
pid_t start_server(const fs::path& dir, int& port) {
  int fds[2];
  if (pipe(fds) != 0) return -1;
  const pid_t pid = fork();
  if (pid == 0) {
    dup2(fds[1], STDOUT_FILENO);
    close(fds[0]);
    close(fds[1]);
    if (chdir(dir.c_str()) != 0) _exit(127);
    execl(LMGAME_CLI_PATH, LMGAME_CLI_PATH, "--config", "small.json", "serve", "--port", "0", static_cast<char*>(nullptr));
    _exit(127);
  }
  close(fds[1]);
  std::string line;
  char c;
  while (read(fds[0], &c, 1) == 1 && c != '\n') line += c;
  close(fds[0]);
  const auto j = nlohmann::json::parse(line, nullptr, false);
  port = j.is_discarded() ? -1 : j.value("port", -1);
  return pid;
}

int stop_server(pid_t pid) {
  kill(pid, SIGTERM);
  int status = 0;
  waitpid(pid, &status, 0);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(Cli, ServeShutsDownCleanlyAndResumes) {
  prepare();
  int port = -1;
  auto pid = start_server(dir_, port);
  ASSERT_GT(port, 0);
  std::string id;
  {
    httplib::Client cli("127.0.0.1", port);
    auto health = cli.Get("/health");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);
    auto created = cli.Post("/api/session", R"({"participant":"p","game":"compare","set":"c"})", "application/json");
    ASSERT_EQ(created->status, 200);
    id = nlohmann::json::parse(created->body)["session_id"];
    ASSERT_EQ(cli.Post("/api/session/" + id + "/compare", R"({"p":0.7})", "application/json")->status, 200);
  }
  EXPECT_EQ(stop_server(pid), 0);

  pid = start_server(dir_, port);
  ASSERT_GT(port, 0);
  {
    httplib::Client cli("127.0.0.1", port);
    auto round = cli.Get("/api/session/" + id + "/round");
    ASSERT_EQ(round->status, 200);
    EXPECT_EQ(nlohmann::json::parse(round->body)["index"], 1);
  }
  EXPECT_EQ(stop_server(pid), 0);

  // Offline export of the same log feeds the estimator.
  auto r = run({"export", "--participant", "p", "--output", "p.jsonl"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(slurp(dir_ / "p.jsonl"));
  std::size_t count = 0;
  for (std::string line; std::getline(lines, line);) ++count;
  EXPECT_GE(count, 1u);
  r = run({"estimate", "--records", "p.jsonl"});
  EXPECT_EQ(r.code, 0) << r.err;
}

}  // namespace
