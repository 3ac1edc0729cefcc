#include <gtest/gtest.h>

#include "lmgame/estimator/rounded_responder.hpp"
#include "lmgame/simulation/evaluation.hpp"
#include "lmgame/simulation/experiment.hpp"
#include "lmgame/simulation/synthetic.hpp"
#include "test_support.hpp"

namespace lmgame {
namespace {

std::vector<TokenSeq> unit_contexts(std::size_t V) {
  std::vector<TokenSeq> ctx;
  for (TokenId i = 0; i < V; ++i) ctx.push_back({i});
  return ctx;
}

Vocab golden_vocab() { return Vocab::load_gpt2(testing::data_path("bpe/vocab.json"), testing::data_path("bpe/merges.txt")); }

ComparisonRound make_round(TokenId y, TokenId x, bool true_first) {
  ComparisonRound r;
  r.prompt.context = {0};
  r.prompt.true_next = y;
  r.true_candidate = y;
  r.sampled_candidate = x;
  r.true_first = true_first;
  return r;
}

TEST(Respond, OptimalTiesAnswerHalf) {
  SimulatedParticipant who;
  who.belief = std::make_shared<UniformPredictor>(6);
  for (bool tf : {true, false}) EXPECT_EQ(respond(who, make_round(1, 4, tf)).p, 0.5);
}

TEST(Respond, NaivePlayerWhoSeesNoDifferenceAnswersHalf) {
  auto rng = make_rng(1);
  auto t = testing::random_lookup(rng, 12, unit_contexts(12), "t");
  SimulatedParticipant who;
  who.belief = t;
  who.believed_generator = t;
  who.behavior = Behavior::naive_rational;
  for (TokenId x = 1; x < 12; ++x)
    for (bool tf : {true, false}) EXPECT_EQ(respond(who, make_round(0, x, tf)).p, 0.5);
  who.believed_generator = nullptr;
  EXPECT_THROW(respond(who, make_round(0, 1, true)), Error);
}

TEST(Respond, OptimalPlayIgnoresBelievedGenerator) {
  auto rng = make_rng(2);
  auto h = testing::random_lookup(rng, 12, {}, "h");
  SimulatedParticipant a, b;
  a.belief = b.belief = h;
  b.believed_generator = testing::random_lookup(rng, 12, {}, "other");
  for (TokenId x = 1; x < 12; ++x) {
    const auto r = make_round(0, x, x % 2 == 0);
    EXPECT_EQ(respond(a, r).p, respond(b, r).p);
    const auto d = h->distribution(TokenSeq{0});
    EXPECT_NEAR(respond(a, r).p, optimal_response(d[r.first_displayed()], d[r.second_displayed()]), 1e-12);
  }
}

TEST(Respond, RoundedPlayStaysWithinHalfTheLocalGap) {
  auto rng = make_rng(3);
  auto h = testing::random_lookup(rng, 40, {}, "h", 0.3);
  const auto set = AllowedSet::rounded();
  SimulatedParticipant cont;
  cont.belief = h;
  const auto rounded = rounded_model_responder(h, set);
  const auto& v = set.values();
  for (TokenId x = 1; x < 40; ++x) {
    const auto r = make_round(0, x, true);
    const double p = respond(cont, r).p, q = respond(rounded, r).p;
    EXPECT_TRUE(set.contains(q));
    auto hi = std::upper_bound(v.begin(), v.end(), p);
    const double gap = (hi == v.begin() || hi == v.end()) ? 1.0 : *hi - *(hi - 1);
    EXPECT_LE(std::abs(p - q), gap / 2 + 1e-12);
  }
}

ExperimentConfig lookup_config(std::uint64_t seed, std::size_t V = 25, std::size_t prompts = 100) {
  auto rng = make_rng(seed);
  ExperimentConfig cfg;
  cfg.generator = testing::random_lookup(rng, V, unit_contexts(V), "g", 0.4);
  cfg.target = testing::random_lookup(rng, V, unit_contexts(V), "h", 0.4);
  cfg.prompts = testing::lookup_prompts(rng, *cfg.target, prompts);
  cfg.seed = seed;
  return cfg;
}

TEST(Experiment, DeterministicGivenSeed) {
  const auto cfg = lookup_config(4);
  const auto a = run_estimation_experiment(cfg), b = run_estimation_experiment(cfg);
  EXPECT_EQ(a.estimate.loss, b.estimate.loss);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  auto other = cfg;
  other.seed = 5;
  EXPECT_NE(run_estimation_experiment(other).estimate.loss, a.estimate.loss);
}

TEST(Experiment, ExhaustiveModeIsSeedInvariant) {
  auto cfg = lookup_config(6);
  cfg.mode = EstimationMode::exhaustive;
  const auto a = run_estimation_experiment(cfg);
  cfg.seed = 999;
  const auto b = run_estimation_experiment(cfg);
  EXPECT_EQ(a.estimate.loss, b.estimate.loss);
  EXPECT_NEAR(a.bias, 0.0, 1e-9);
}

TEST(Experiment, IdenticalPairGivesFlatZeroCurve) {
  auto cfg = lookup_config(7);
  cfg.target = cfg.generator;
  for (const auto& pt : bias_curve(cfg, {1, 5, 20}, 10)) {
    EXPECT_EQ(pt.mean_bias, 0.0);
    EXPECT_EQ(pt.spread, 0.0);
  }
}

TEST(Experiment, ValidatesConfig) {
  auto cfg = lookup_config(8);
  cfg.n = 0;
  EXPECT_THROW(run_estimation_experiment(cfg), Error);
  cfg = lookup_config(8);
  cfg.prompts.clear();
  EXPECT_THROW(run_estimation_experiment(cfg), Error);
  cfg = lookup_config(8);
  cfg.target = std::make_shared<UniformPredictor>(3);
  EXPECT_THROW(run_estimation_experiment(cfg), Error);
  EXPECT_THROW(bias_curve(lookup_config(8), {}), Error);
}

TEST(Experiment, NaivePlayersWhoCannotTellAnswerLikeHalfOnly) {
  // A naive player who thinks the target and the generator agree answers 0.5 to every
  // question, exactly like a player restricted to {0.5}.
  auto cfg = lookup_config(9);
  cfg.behavior = Behavior::naive_rational;
  cfg.believed_generator = cfg.target;
  const auto naive = run_estimation_experiment(cfg);
  auto half = lookup_config(9);
  half.allowed = AllowedSet::half_only();
  EXPECT_EQ(naive.estimate.loss, run_estimation_experiment(half).estimate.loss);
}

TEST(RoundingSweep, HalfOnlyEstimatesTheUniformPredictor) {
  // r = 1 everywhere means h(x) = h(y) for every pair: exhaustively, h(y)/g(y) = 1/(V g(y)).
  auto cfg = lookup_config(10, 30, 200);
  cfg.mode = EstimationMode::exhaustive;
  const auto rows = rounding_sweep(cfg.target, cfg.generator, {AllowedSet::half_only()}, cfg);
  EXPECT_NEAR(rows[0].estimate.loss, std::log(30.0), 1e-9);
}

TEST(RoundingSweep, ContinuousIsLowest) {
  auto cfg = lookup_config(10, 30, 200);
  const auto rows = rounding_sweep(cfg.target, cfg.generator,
                                   {std::nullopt, AllowedSet::rounded(), AllowedSet::even_more_round(), AllowedSet::half_only()},
                                   cfg);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].preset, "continuous");
  EXPECT_EQ(rows[3].preset, "half_only");
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(rows[0].estimate.perplexity, rows[i].estimate.perplexity);
}

TEST(Top1, OracleAndUniform) {
  auto rng = make_rng(11);
  const std::size_t V = 10;
  const UniformPredictor u(V);
  const auto prompts = testing::lookup_prompts(rng, u, 5000);
  LookupPredictor oracle(V);
  std::vector<PromptInstance> distinct;
  for (std::size_t i = 0; i < V; ++i) {
    distinct.push_back(prompts[i]);
    oracle.set_row(prompts[i].context, Distribution::point_mass(V, prompts[i].true_next));
  }
  const auto vocab = golden_vocab();
  EXPECT_EQ(top1_accuracy(oracle, distinct, Top1Filter::none, vocab).accuracy, 1.0);
  // Binomial(5000, 0.1): sd 0.0042.
  EXPECT_NEAR(top1_accuracy(u, prompts, Top1Filter::none, vocab).accuracy, 0.1, 0.02);
}

TEST(Top1, FiltersPartitionThePrompts) {
  const auto vocab = golden_vocab();
  auto rng = make_rng(12);
  const auto V = vocab.size();
  const UniformPredictor truth(V);
  auto prompts = testing::lookup_prompts(rng, truth, 3000);
  for (auto& p : prompts) p.following = static_cast<TokenId>(std::uniform_int_distribution<std::size_t>(0, V - 1)(rng));
  auto model = testing::random_lookup(rng, V, {}, "m", 0.05);

  std::size_t empty = 0, kept_hits = 0, dropped_hits = 0;
  for (const auto& p : prompts) {
    const bool hit = predict_top1(*model, p.context) == p.true_next;
    if (is_visually_empty(p.true_next, vocab)) {
      ++empty;
      dropped_hits += hit;
    } else {
      kept_hits += hit;
    }
  }
  ASSERT_GT(empty, 0u);
  const auto all = top1_accuracy(*model, prompts, Top1Filter::none, vocab);
  const auto visible = top1_accuracy(*model, prompts, Top1Filter::exclude_visually_empty, vocab);
  EXPECT_EQ(visible.excluded, empty);
  EXPECT_EQ(visible.correct, kept_hits);
  EXPECT_EQ(all.correct, kept_hits + dropped_hits);
  EXPECT_EQ(all.evaluated, visible.evaluated + visible.excluded);

  std::vector<PromptInstance> invisible;
  for (const auto& p : prompts)
    if (is_visually_empty(p.true_next, vocab)) invisible.push_back(p);
  EXPECT_THROW(top1_accuracy(*model, invisible, Top1Filter::exclude_visually_empty, vocab), Error);
  EXPECT_EQ(top1_filter_from_string(to_string(Top1Filter::word_tokens_only)), Top1Filter::word_tokens_only);
}

TEST(SplitComparison, IdenticalSplitsAndStandardErrorScaling) {
  auto rng = make_rng(13);
  auto m = testing::random_lookup(rng, 20, unit_contexts(20), "m");
  const auto prompts = testing::lookup_prompts(rng, *m, 4000);
  const auto rep = split_comparison(*m, prompts, prompts);
  EXPECT_EQ(to_json(rep.train), to_json(rep.validation));

  std::vector<PromptInstance> four;
  for (int k = 0; k < 4; ++k) four.insert(four.end(), prompts.begin(), prompts.end());
  const auto big = split_stats(*m, four);
  EXPECT_NEAR(big.loss_err / rep.train.loss_err, 0.5, 1e-3);
  EXPECT_NEAR(big.accuracy_err / rep.train.accuracy_err, 0.5, 1e-3);
  EXPECT_NEAR(big.loss, rep.train.loss, 1e-12);
}

TEST(SplitComparison, HighOrderModelOverfitsItsTrainingSplit) {
  const auto desk = testing::desk_corpus(60, 30, 200);
  const auto V = desk.tokenizer.vocab().size();
  const auto model = ngram_train(desk.train, 5, 1e-3, V);
  const auto rep = split_comparison(model, sample_prompts(desk.train, 600, 40, 1), sample_prompts(desk.validation, 600, 40, 1));
  EXPECT_GE(rep.train.accuracy, rep.validation.accuracy);
  EXPECT_LE(rep.train.perplexity, rep.validation.perplexity);
  EXPECT_GT(rep.train.loss_err, 0.0);
}

TEST(WordSubset, OnlyWordAnswersMatchesUnfiltered) {
  const auto desk = testing::desk_corpus(30, 20, 200);
  const auto& vocab = desk.tokenizer.vocab();
  const auto V = vocab.size();
  std::vector<PromptInstance> words;
  for (const auto& p : sample_prompts(desk.validation, 600, 30, 3))
    if (p.following && is_word_token(p.true_next, *p.following, vocab)) words.push_back(p);
  ASSERT_GT(words.size(), 100u);
  ExperimentConfig cfg;
  cfg.generator = std::make_shared<NGramModel>(ngram_train(desk.train, 1, 0.01, V));
  cfg.target = std::make_shared<NGramModel>(ngram_train(desk.train, 3, 0.01, V));
  cfg.prompts = words;
  const auto r = run_estimation_experiment(cfg);
  const auto sub = word_token_subset_report(r.samples, cfg.prompts, vocab);
  EXPECT_EQ(sub.kept, sub.total);
  EXPECT_EQ(sub.report.loss, r.estimate.loss);
}

TEST(WordSubset, KeepsPredictorOrdering) {
  const auto desk = testing::desk_corpus(40, 20, 200);
  const auto& vocab = desk.tokenizer.vocab();
  const auto V = vocab.size();
  ExperimentConfig cfg;
  cfg.generator = std::make_shared<NGramModel>(ngram_train(desk.train, 2, 0.01, V));
  cfg.prompts = sample_prompts(desk.validation, 400, 30, 4);
  cfg.n = 20;
  std::vector<std::pair<double, double>> losses;
  for (std::size_t order : {1, 4}) {
    cfg.target = std::make_shared<NGramModel>(ngram_train(desk.train, order, 0.01, V));
    const auto r = run_estimation_experiment(cfg);
    const auto sub = word_token_subset_report(r.samples, cfg.prompts, vocab);
    EXPECT_LT(sub.kept, sub.total);
    losses.emplace_back(r.estimate.loss, sub.report.loss);
  }
  EXPECT_EQ(losses[0].first < losses[1].first, losses[0].second < losses[1].second);
}

TEST(Synthetic, DeterministicAndVaried) {
  SyntheticLanguage lang;
  const auto a = synthetic_documents(lang, 5, 100, 1);
  EXPECT_EQ(a, synthetic_documents(lang, 5, 100, 1));
  EXPECT_NE(a, synthetic_documents(lang, 5, 100, 2));
  for (const auto& d : a) EXPECT_TRUE(unicode::is_valid_utf8(d));
}

}  // namespace
}  // namespace lmgame
