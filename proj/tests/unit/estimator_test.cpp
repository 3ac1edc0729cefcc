#include <gtest/gtest.h>

#include <numbers>

#include "lmgame/estimator/estimator.hpp"
#include "lmgame/estimator/rounded_responder.hpp"
#include "lmgame/simulation/experiment.hpp"
#include "test_support.hpp"

namespace lmgame {
namespace {

RatioSample sample(TokenId x, TokenId y, double h_x, double h_y, double g_x, double g_y, double weight = 1.0) {
  RatioSample s;
  s.x = x;
  s.y_true = y;
  s.g_x = g_x;
  s.g_y = g_y;
  s.weight = weight;
  s.auto_answered = x == y;
  s.log_r = x == y ? 0.0 : std::log(h_x) - std::log(h_y);
  s.r = x == y ? 1.0 : h_x / h_y;
  return s;
}

TEST(Estimator, MicroExample) {
  // V = 2, g = (.5, .5), h = (.75, .25), y = 0; every token as x, weighted by g.
  const std::vector<RatioSample> s = {sample(0, 0, .75, .75, .5, .5, .5), sample(1, 0, .25, .75, .5, .5, .5)};
  const auto e = estimate_h_over_g(s);
  EXPECT_EQ(e.h_over_g, 1.5);
  EXPECT_NEAR(e.log_term, std::log(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(e.log_term, -std::log(e.h_over_g), 1e-12);
}

TEST(Estimator, MicroExampleThroughRoundsAndResponses) {
  PromptInstance p;
  p.context = {1};
  p.true_next = 0;
  const auto g = Distribution::from_probs({0.5, 0.5});
  auto h = std::make_shared<LookupPredictor>(2, "h");
  h->set_fallback(Distribution::from_probs({0.75, 0.25}));
  SimulatedParticipant who;
  who.belief = h;
  std::vector<RatioSample> s;
  for (const auto& r : exhaustive_rounds(p, 0, g)) s.push_back(response_to_ratio(respond(who, r), r, r.g_sampled));
  EXPECT_EQ(estimate_h_over_g(s).h_over_g, 1.5);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[1].r, 1.0 / 3.0);
}

TEST(Estimator, AllAutoSamplesGiveOne) {
  const std::vector<RatioSample> s = {sample(3, 3, 1, 1, .2, .2, 4), sample(3, 3, 1, 1, .2, .2, 1)};
  const auto e = estimate_h_over_g(s);
  EXPECT_EQ(e.h_over_g, 1.0);
  EXPECT_EQ(e.log_term, 0.0);
}

TEST(Estimator, RejectsInconsistentSamples) {
  EXPECT_THROW(estimate_h_over_g(std::vector<RatioSample>{}), Error);
  EXPECT_THROW(estimate_h_over_g(std::vector<RatioSample>{sample(1, 0, .5, .5, .5, .5), sample(0, 1, .5, .5, .5, .5)}), Error);
  auto bad = sample(1, 0, .5, .5, .5, .5);
  bad.r = -1;
  EXPECT_THROW(estimate_h_over_g(std::vector<RatioSample>{bad}), Error);
  auto mismatched = sample(1, 0, .5, .25, .5, .5);
  mismatched.log_r = 0.0;
  EXPECT_THROW(mismatched.validate(), Error);
}

TEST(Estimator, SelfEstimationGapIsExactlyZero) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto rng = make_rng(seed);
    const std::size_t V = 30;
    std::vector<TokenSeq> ctx;
    for (TokenId i = 0; i < V; ++i) ctx.push_back({i});
    auto g = testing::random_lookup(rng, V, ctx, "g", 0.3);
    ExperimentConfig cfg;
    cfg.generator = g;
    cfg.target = g;
    cfg.prompts = testing::lookup_prompts(rng, *g, 60);
    cfg.seed = seed;
    for (std::size_t n : {1, 3, 10, 40}) {
      cfg.n = n;
      const auto r = run_estimation_experiment(cfg);
      ASSERT_EQ(*r.estimate.loss_gap, 0.0) << "seed " << seed << " n " << n;
      for (const auto& e : r.estimate.estimates) ASSERT_EQ(e.log_term, 0.0);
    }
  }
}

TEST(Estimator, ExhaustiveEnumerationIsExact) {
  auto rng = make_rng(42);
  for (std::size_t V : {2, 10, 50}) {
    std::vector<TokenSeq> ctx;
    for (TokenId i = 0; i < V; ++i) ctx.push_back({i});
    auto g = testing::random_lookup(rng, V, ctx, "g");
    auto h = testing::random_lookup(rng, V, ctx, "h");
    auto t = testing::random_lookup(rng, V, ctx, "t");
    ExperimentConfig cfg;
    cfg.generator = g;
    cfg.target = h;
    cfg.prompts = testing::lookup_prompts(rng, *t, 3 * V);
    cfg.mode = EstimationMode::exhaustive;
    const auto r = run_estimation_experiment(cfg);

    double oracle = 0.0;
    for (const auto& p : cfg.prompts) oracle -= std::log(h->distribution(p.context)[p.true_next]);
    oracle /= static_cast<double>(cfg.prompts.size());
    EXPECT_NEAR(r.estimate.loss, oracle, 1e-9) << "V=" << V;
    EXPECT_NEAR(r.truth.loss, oracle, 1e-12);
  }
}

TEST(Estimator, DirectLossExamples) {
  const UniformPredictor u(4);
  std::vector<PromptInstance> prompts(4);
  for (std::size_t i = 0; i < prompts.size(); ++i) prompts[i].true_next = static_cast<TokenId>(i % 4);
  const auto rep = direct_loss(u, prompts);
  EXPECT_NEAR(rep.loss, std::log(4.0), 1e-12);
  EXPECT_NEAR(rep.perplexity, 4.0, 1e-12);
  EXPECT_EQ(rep.sigma, 0.0);

  LookupPredictor oracle(4);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    prompts[i].context = {static_cast<TokenId>(i)};
    oracle.set_row(prompts[i].context, Distribution::point_mass(4, prompts[i].true_next));
  }
  EXPECT_NEAR(direct_loss(oracle, prompts).perplexity, 1.0, 1e-9);
  EXPECT_THROW(direct_loss(u, std::vector<PromptInstance>{}), Error);
}

TEST(Estimator, LossGapWithZeroTermsEqualsGeneratorLoss) {
  std::vector<PromptEstimate> es(4);
  for (std::size_t i = 0; i < es.size(); ++i) es[i].generator_loss = 1.0 + static_cast<double>(i);
  const auto rep = estimate_loss_gap(es, 2.5);
  EXPECT_EQ(*rep.loss_gap, 0.0);
  EXPECT_DOUBLE_EQ(rep.loss, 2.5);
  EXPECT_LE(rep.lower, rep.perplexity);
  EXPECT_GE(rep.upper, rep.perplexity);
}

TEST(Uncertainty, WorkedExamples) {
  const std::vector<double> constant(7, 1.3);
  const auto c = uncertainty_bounds(constant);
  EXPECT_EQ(c.sigma, 0.0);
  EXPECT_DOUBLE_EQ(c.lower, std::exp(1.3));
  EXPECT_DOUBLE_EQ(c.upper, std::exp(1.3));

  const std::vector<double> two = {0.0, 2.0 * std::numbers::ln2};
  const auto b = uncertainty_bounds(two);
  EXPECT_NEAR(b.sigma, std::numbers::ln2, 1e-12);
  // exp(ln 2 - 2 ln 2) and exp(ln 2 + 2 ln 2).
  EXPECT_NEAR(b.lower, 0.5, 1e-12);
  EXPECT_NEAR(b.upper, 8.0, 1e-12);
  EXPECT_THROW(uncertainty_bounds(std::vector<double>{1.0}), Error);
}

TEST(Uncertainty, StandardErrorScalesWithRootN) {
  auto rng = make_rng(3);
  std::normal_distribution<double> nd(2.0, 0.7);
  std::vector<double> v(2000);
  for (auto& x : v) x = nd(rng);
  auto doubled = v;
  doubled.insert(doubled.end(), v.begin(), v.end());
  EXPECT_NEAR(uncertainty_bounds(v).sigma / uncertainty_bounds(doubled).sigma, std::sqrt(2.0), 1e-3);
}

TEST(Uncertainty, QuantileInterpolates) {
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile({0, 10}, 0.05), 0.5);
}

ExperimentResult noisy_panel(std::size_t responders, std::uint64_t seed, double noise = 0.8) {
  auto rng = make_rng(seed);
  const std::size_t V = 20;
  std::vector<TokenSeq> ctx;
  for (TokenId i = 0; i < V; ++i) ctx.push_back({i});
  ExperimentConfig cfg;
  cfg.generator = testing::random_lookup(rng, V, ctx, "g");
  cfg.target = testing::random_lookup(rng, V, ctx, "h");
  cfg.prompts = testing::lookup_prompts(rng, *cfg.target, 80);
  cfg.responders = responders;
  cfg.logit_noise = noise;
  cfg.seed = seed;
  return run_estimation_experiment(cfg);
}

TEST(Bootstrap, DeterministicAndOrdered) {
  const auto r = noisy_panel(12, 5);
  const auto a = bootstrap_over_users(r.samples, 100, 9);
  const auto b = bootstrap_over_users(r.samples, 100, 9);
  EXPECT_EQ(a.perplexities, b.perplexities);
  EXPECT_LE(a.q05, a.median);
  EXPECT_LE(a.median, a.q95);
  EXPECT_LT(a.q05, a.q95);
  EXPECT_NE(bootstrap_over_users(r.samples, 100, 10).perplexities, a.perplexities);
}

TEST(Bootstrap, IdenticalRespondersReproduceFullEstimate) {
  const auto r = noisy_panel(6, 2, 0.0);
  const auto full = estimate_from_samples(r.samples).perplexity;
  const auto b = bootstrap_over_users(r.samples, 20, 1);
  for (double p : b.perplexities) EXPECT_NEAR(p, full, 1e-9 * full);
}

TEST(Bootstrap, NeedsTwoResponders) {
  const auto r = noisy_panel(1, 2);
  EXPECT_THROW(bootstrap_over_users(r.samples, 100, 1), Error);
  EXPECT_THROW(bootstrap_over_users(noisy_panel(3, 2).samples, 0, 1), Error);
}

TEST(Estimator, MonteCarloUnderestimatesOnAverage) {
  auto rng = make_rng(17);
  const std::size_t V = 50;
  std::vector<TokenSeq> ctx;
  for (TokenId i = 0; i < V; ++i) ctx.push_back({i});
  ExperimentConfig cfg;
  cfg.generator = testing::random_lookup(rng, V, ctx, "g", 0.2);
  cfg.target = testing::random_lookup(rng, V, ctx, "h", 0.2);
  cfg.prompts = testing::lookup_prompts(rng, *cfg.target, 200);
  const auto curve = bias_curve(cfg, {2, 0}, 10);
  EXPECT_LT(curve[0].mean_bias, 0.0);
  EXPECT_NEAR(curve[1].mean_bias, 0.0, 1e-9);
}

TEST(Estimator, RoundedResponderAnswersHalfOnTies) {
  auto h = std::make_shared<UniformPredictor>(5, "u");
  const auto who = rounded_model_responder(h, AllowedSet::rounded());
  EXPECT_EQ(who.id, "u/rounded");
  PromptInstance p;
  p.true_next = 1;
  auto rng = make_rng(0);
  for (const auto& r : build_rounds(p, 0, Distribution::uniform(5), 10, rng)) EXPECT_EQ(respond(who, r).p, 0.5);
}

TEST(Estimator, SerializationKeepsLogRatioExact) {
  const auto r = noisy_panel(2, 8);
  for (const auto& s : r.samples) {
    const auto back = nlohmann::json::parse(to_record(s).dump()).get<RatioSample>();
    ASSERT_EQ(back.log_r, s.log_r);
    ASSERT_EQ(back.r, s.r);
    ASSERT_EQ(back.g_x, s.g_x);
  }
  const auto rep = estimate_from_samples(r.samples);
  const auto j = to_json(rep, true);
  EXPECT_EQ(j["N"], rep.N);
  EXPECT_EQ(j["per_prompt"].size(), rep.N);
  EXPECT_NEAR(to_bits(rep).perplexity, rep.perplexity, 1e-9 * rep.perplexity);
  EXPECT_EQ(log_terms_csv(rep).substr(0, 9), "prompt_id");
}

}  // namespace
}  // namespace lmgame
