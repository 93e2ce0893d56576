#include <gtest/gtest.h>

#include <cmath>

#include "encompass/engine.hpp"
#include "encompass/error.hpp"
#include "encompass/fixtures.hpp"
#include "encompass/model_io.hpp"
#include "encompass/serialize.hpp"

using namespace encompass;

namespace {

StratifiedTable two_by_two() { return StratifiedTable::single("t22", ContingencyTable({2, 2}, {20, 10, 8, 25})); }
StratifiedTable three_by_three() {
  return StratifiedTable::single("t33", ContingencyTable({3, 3}, {15, 8, 3, 7, 14, 9, 2, 6, 16}));
}

ModelSpec model(const std::string& json, const StratifiedTable& t) { return parse_model(json, t.dims(), t.strata_count()); }

RunSettings small(std::size_t n = 20000) {
  RunSettings s;
  s.n_draws = n;
  s.pilot_n = 5000;
  return s;
}

}  // namespace

TEST(Engine, PriorAndPosteriorTargets) {
  const auto t = two_by_two();
  const auto prior = PriorSpec::uniform(4, 1, 2.0);
  EXPECT_DOUBLE_EQ(prior.kappa(), 2.0);
  const auto q = posterior_target(prior, t);
  EXPECT_EQ(q.side, Side::posterior);
  EXPECT_DOUBLE_EQ(q.params[0](0), 22.0);
  EXPECT_THROW(PriorSpec::uniform(4, 1, 0.0), DomainError);
  EXPECT_THROW(posterior_target(PriorSpec::uniform(9, 1), t), DimensionError);
}

TEST(Engine, DefaultAlphaGrid) {
  const auto g = RunSettings::default_alpha_grid();
  EXPECT_EQ(g.size(), 14u);
  EXPECT_DOUBLE_EQ(g.front(), 0.02);
  EXPECT_DOUBLE_EQ(g.back(), 50.0);
  EXPECT_NE(std::find(g.begin(), g.end(), 1.0), g.end());
  EXPECT_NE(std::find(g.begin(), g.end(), 20.0), g.end());
  EXPECT_TRUE(std::is_sorted(g.begin(), g.end()));
}

TEST(Engine, EncompassingModelHasZeroLogBF) {
  const auto t = two_by_two();
  const auto bf = bayes_factor(model(R"({"name": "M1", "logit_types": "local"})", t), t, PriorSpec::uniform(4, 1),
                               small(2000));
  EXPECT_EQ(bf.log_bf, 0.0);
  EXPECT_EQ(bf.route, Route::direct);
}

TEST(Engine, TwoByTwoPositiveAssociationPriorIsHalf) {
  const auto t = two_by_two();
  const auto m = model(R"({"logit_types": "local", "constraints": [{"type": "tp2"}]})", t);
  const auto est = estimate_proportion_direct(sample_prior(PriorSpec::uniform(4, 1), 100000, 3), m);
  EXPECT_NEAR(est.value, 0.5, 3 * est.se);
  EXPECT_NEAR(est.se, std::sqrt(0.25 / 100000), 1e-4);
}

TEST(Engine, DirectAndImportanceAgree) {
  const auto t = three_by_three();
  const auto prior = PriorSpec::uniform(9, 1);
  for (const char* js : {R"({"logit_types": "global", "constraints": [{"type": "pqd"}]})",
                         R"({"logit_types": "local", "constraints": [{"type": "tp2"}]})",
                         R"({"logit_types": "local", "constraints": [{"type": "stochastic_order"}]})"}) {
    const auto m = model(js, t);
    const auto direct = estimate_proportion_direct(sample_prior(prior, 200000, 5), m);
    ASSERT_GE(direct.value, 0.01) << js;
    const auto center = prior_center(m);
    // D(alpha / 9) per cell: heavier-tailed than the D(1) target up to alpha = 9.
    for (double alpha : {4.5, 9.0}) {
      const auto imp =
          importance_estimate(m, prior_target(prior), ImportanceDensity::centred(center, alpha, "prior_center"),
                              200000, 6);
      EXPECT_EQ(imp.route, Route::importance);
      EXPECT_NEAR(imp.value, direct.value, 3 * std::hypot(imp.se, direct.se)) << js << " alpha " << alpha;
    }
    const auto light = importance_estimate(
        m, prior_target(prior), ImportanceDensity::centred(center, 27.0, "prior_center"), 1000, 6);
    EXPECT_FALSE(light.warnings.empty());
    const auto fit = constrained_mle(t, m);
    const auto q = posterior_target(prior, t);
    const auto dq = estimate_proportion_direct(sample_posterior(prior, t, 100000, 7), m);
    const auto iq =
        importance_estimate(m, q, ImportanceDensity::centred(fit, 60.0, "constrained_mle"), 100000, 8);
    EXPECT_NEAR(iq.value, dq.value, 3 * std::hypot(iq.se, dq.se)) << js;
  }
}

TEST(Engine, NestingMonotonicity) {
  const auto t = three_by_three();
  const auto draws = sample_prior(PriorSpec::uniform(9, 1), 50000, 9);
  const auto tp2 = model(R"({"logit_types": "local", "constraints": [{"type": "tp2"}]})", t);
  const auto tp2_so =
      model(R"({"logit_types": "local", "constraints": [{"type": "tp2"}, {"type": "stochastic_order"}]})", t);
  const auto tp2_mh = model(
      R"({"logit_types": "local", "constraints": [{"type": "tp2"}, {"type": "marginal_homogeneity", "epsilon": 0.5}]})", t);
  const auto a = estimate_proportion_direct(draws, tp2);
  EXPECT_LE(estimate_proportion_direct(draws, tp2_so).accepted, a.accepted);
  EXPECT_LE(estimate_proportion_direct(draws, tp2_mh).accepted, a.accepted);
}

TEST(Engine, DeterministicAcrossThreadCounts) {
  const auto t = three_by_three();
  const auto m = model(R"({"name": "pqd", "logit_types": "global", "constraints": [{"type": "pqd"}]})", t);
  auto s = small(30000);
  s.replicates = 2;
  s.chunk_size = 1000;
  s.threads = 1;
  const auto a = to_json(bayes_factor(m, t, PriorSpec::uniform(9, 1), s));
  s.threads = 4;
  const auto b = to_json(bayes_factor(m, t, PriorSpec::uniform(9, 1), s));
  EXPECT_EQ(a, b);
  s.seed += 1;
  EXPECT_NE(a, to_json(bayes_factor(m, t, PriorSpec::uniform(9, 1), s)));
}

TEST(Engine, StageSumBookkeepingIsExact) {
  const auto t = two_by_two();
  const auto m = model(R"({"name": "mh", "logit_types": "local", "epsilon": 0.4,
      "constraints": [{"type": "marginal_homogeneity"}]})", t);
  auto s = small(40000);
  s.replicates = 3;
  const auto bf = bayes_factor(m, t, PriorSpec::uniform(4, 1), s);
  ASSERT_EQ(bf.route, Route::about_equality);
  ASSERT_EQ(bf.runs.size(), 3u);
  double mean = 0.0;
  for (const auto& r : bf.runs) {
    ASSERT_FALSE(r.stages.empty());
    double sum = 0.0;
    for (const auto& st : r.stages) sum += st.log_factor;
    EXPECT_EQ(r.log_bf, sum);
    const auto& last = r.stages.back();
    EXPECT_NEAR(r.log_bf, last.log_posterior - last.log_prior, 1e-12);
    EXPECT_DOUBLE_EQ(r.stages.front().epsilon, 0.4);
    mean += r.log_bf / 3.0;
  }
  EXPECT_NEAR(bf.log_bf, mean, 1e-12);
}

TEST(Engine, ScheduleShrinksByB) {
  const auto t = two_by_two();
  const auto m = model(R"({"logit_types": "local", "epsilon": 0.8, "constraints": [{"type": "independence"}]})", t);
  auto s = small(40000);
  s.schedule.stop_tol = 0.0;
  s.schedule.max_stages = 3;
  const auto bf = bayes_factor(m, t, PriorSpec::uniform(4, 1), s);
  const auto& st = bf.runs.front().stages;
  ASSERT_EQ(st.size(), 3u);
  EXPECT_DOUBLE_EQ(st[1].epsilon, 0.4);
  EXPECT_DOUBLE_EQ(st[2].epsilon, 0.2);
  EXPECT_DOUBLE_EQ(bf.final_epsilon, 0.2);
}

TEST(Engine, FatherSonPQDMatchesOracle) {
  // numpy reference with 4e6 prior draws: prior 0.013163, posterior 1, ln B = 4.330.
  const auto t = fixtures::father_son();
  const auto m = model(R"({"name": "M3", "logit_types": "global", "constraints": [{"type": "pqd"}]})", t);
  auto s = small(200000);
  s.pilot_n = 20000;
  const auto bf = bayes_factor(m, t, PriorSpec::uniform(36, 1), s);
  EXPECT_EQ(bf.prior_plan.route, Route::direct);
  EXPECT_NEAR(bf.log_bf, 4.330, 0.1);
}

TEST(Engine, ZeroAcceptanceTakesWarningPath) {
  const auto t = fixtures::father_son();
  const auto m = model(R"({"name": "M4", "logit_types": "local", "constraints": [{"type": "tp2"}]})", t);
  const auto prior = PriorSpec::uniform(36, 1);
  const auto imp = importance_estimate(
      m, prior_target(prior), ImportanceDensity::centred(prior_center(m), 20.0, "prior_center"), 2000, 1);
  EXPECT_EQ(imp.accepted, 0u);
  EXPECT_EQ(imp.value, 0.0);
  EXPECT_TRUE(std::isinf(imp.log_value));
  EXPECT_FALSE(imp.warnings.empty());
  EXPECT_THROW(tune_alpha(m, prior_target(prior), prior_center(m), {1.0, 20.0}, 1000, 2), TuningError);
  auto s = small(2000);
  s.pilot_n = 1000;
  try {
    bayes_factor(m, t, prior, s);
    FAIL() << "expected UnboundedEstimateError";
  } catch (const UnboundedEstimateError& e) {
    EXPECT_EQ(e.side(), "prior");
  }
}

TEST(Engine, TunerPrefersEssAmongAcceptingAlphas) {
  const auto t = two_by_two();
  const auto m = model(R"({"logit_types": "local"})", t);
  const auto prior = PriorSpec::uniform(4, 1);
  const auto res = tune_alpha(m, prior_target(prior), prior_center(m), {0.5, 4.0, 40.0}, 5000, 3);
  EXPECT_DOUBLE_EQ(res.alpha, 4.0);  // D(1) is the target itself
  EXPECT_TRUE(res.reached_min_acceptance);
  EXPECT_EQ(res.trials.size(), 3u);
}

TEST(Engine, JeffreysLabels) {
  EXPECT_EQ(jeffreys_label(0.19), Evidence::poor);
  EXPECT_EQ(jeffreys_label(-0.78), Evidence::substantial);
  EXPECT_EQ(jeffreys_label(1.5), Evidence::strong);
  EXPECT_EQ(jeffreys_label(2.38), Evidence::decisive);
  EXPECT_EQ(jeffreys_label(-34.88), Evidence::decisive);
}

TEST(Engine, CompareModels) {
  BFEstimate a, b;
  a.log_bf = 5.12;
  b.log_bf = 4.32;
  EXPECT_NEAR(compare_models(a, b), 0.8, 1e-12);
}

TEST(Engine, PosteriorDrawsUnderModel) {
  const auto t = three_by_three();
  const auto prior = PriorSpec::uniform(9, 1);
  const auto free = posterior_draws_under_model(model(R"({"logit_types": "local"})", t), t, prior, 5000, 1);
  EXPECT_EQ(free.accepted, 5000u);
  EXPECT_DOUBLE_EQ(free.acceptance, 1.0);
  const auto tp2 = model(R"({"logit_types": "local", "constraints": [{"type": "tp2"}]})", t);
  const auto ps = posterior_draws_under_model(tp2, t, prior, 20000, 2);
  ASSERT_GT(ps.accepted, 0u);
  for (Eigen::Index k = 4; k < 8; ++k) EXPECT_GE(ps.eta_lower(k), 0.0);
  EXPECT_TRUE(ps.mean_satisfies);
  const auto ind = model(R"({"logit_types": "local", "epsilon": 0.001, "constraints": [{"type": "independence"}]})", t);
  const auto rare = posterior_draws_under_model(ind, t, prior, 2000, 3);
  EXPECT_FALSE(rare.warnings.empty());
}

TEST(Engine, SettingsParsing) {
  const auto s = parse_run_settings(R"({"seed": 5, "n_draws": 100, "schedule": {"b": 0.25, "epsilon_start": 0.2},
      "fit": {"smoothing": 1.0}, "route": "importance"})");
  EXPECT_EQ(s.seed, 5u);
  EXPECT_EQ(s.n_draws, 100u);
  EXPECT_DOUBLE_EQ(s.schedule.b, 0.25);
  EXPECT_DOUBLE_EQ(*s.schedule.epsilon_start, 0.2);
  EXPECT_DOUBLE_EQ(s.fit.smoothing, 1.0);
  EXPECT_EQ(s.route, RouteChoice::importance);
  EXPECT_THROW(parse_run_settings(R"({"draws": 5})"), ValidationError);
  EXPECT_THROW(parse_run_settings(R"({"schedule": {"b": 2}})"), ValidationError);
  EXPECT_THROW(parse_run_settings(R"({"n_draws": "many"})"), ValidationError);
}
