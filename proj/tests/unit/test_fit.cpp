#include <gtest/gtest.h>

#include "encompass/error.hpp"
#include "encompass/fit.hpp"
#include "encompass/fixtures.hpp"
#include "encompass/model_io.hpp"

using namespace encompass;

namespace {

ModelSpec model(const std::string& json, const StratifiedTable& t) { return parse_model(json, t.dims(), t.strata_count()); }

}  // namespace

TEST(Fit, UnconstrainedIsSmoothedProportions) {
  const auto t = fixtures::father_son();
  const auto fit = constrained_mle(t, model(R"({"logit_types": "local"})", t));
  ASSERT_TRUE(fit.converged);
  const auto& y = t.stratum(0).counts();
  for (std::size_t k = 0; k < y.size(); ++k)
    EXPECT_NEAR(fit.pi_hat[0](static_cast<Eigen::Index>(k)), (y[k] + 0.5) / (3498 + 18.0), 1e-9);
}

// Oracle: closed-form independence fit of the smoothed table
// (tests/oracles/oracles.py). A tiny tolerance makes the about-equality model
// practically exact.
TEST(Fit, IndependenceMatchesOuterProduct) {
  const auto t = fixtures::father_son();
  const auto fit = constrained_mle(
      t, model(R"({"logit_types": "local", "epsilon": 1e-9, "constraints": [{"type": "independence"}]})", t));
  ASSERT_TRUE(fit.converged);
  const double head[] = {0.00604501314323211, 0.00759618632715582, 0.0105388531025405,
                         0.032688693714157,   0.0135955767296843,  0.00974045514022683};
  const double tail[] = {0.00836012455978909, 0.0105053640694708, 0.0145750096098964,
                         0.0452077679025576,  0.0188023933495634, 0.0134708422152073};
  for (int k = 0; k < 6; ++k) {
    EXPECT_NEAR(fit.pi_hat[0](k), head[k], 1e-7);
    EXPECT_NEAR(fit.pi_hat[0](30 + k), tail[k], 1e-7);
  }
  EXPECT_NEAR(fit.loglik, -11162.1546670733, 1e-3);
}

TEST(Fit, InequalityModelsAreFeasible) {
  const auto t = fixtures::father_son();
  for (const char* js : {R"({"logit_types": "local", "constraints": [{"type": "tp2"}]})",
                         R"({"logit_types": "global", "constraints": [{"type": "pqd"}]})",
                         R"({"logit_types": "local", "constraints": [{"type": "tp2"}, {"type": "stochastic_order"}]})"}) {
    const auto m = model(js, t);
    const auto fit = constrained_mle(t, m);
    EXPECT_TRUE(fit.converged) << js;
    EXPECT_LE(fit.max_violation, 1e-8) << js;
    EXPECT_LE(constraint_violation(fit.eta_hat, m.constraints()), 1e-8);
  }
}

TEST(Fit, ActiveConstraintLowersLikelihood) {
  const auto t = fixtures::father_son();
  const auto free = constrained_mle(t, model(R"({"logit_types": "local"})", t));
  const auto tp2 = constrained_mle(t, model(R"({"logit_types": "local", "constraints": [{"type": "tp2"}]})", t));
  EXPECT_LT(tp2.objective, free.objective);
}

TEST(Fit, SkinTrialNoHighOrderConverges) {
  const auto t = fixtures::skin_trial();
  const auto fit =
      constrained_mle(t, model(R"({"logit_types": "global", "constraints": [{"type": "no_high_order"}]})", t));
  EXPECT_TRUE(fit.converged);
  EXPECT_LE(fit.max_violation, 1e-8);
  EXPECT_EQ(fit.smoothing, 0.5);
}

TEST(Fit, PriorCenterIsUniform) {
  const auto t = fixtures::alzheimer();
  const auto m = model(R"({"logit_types": "reverse_continuation", "constraints": [{"type": "positive_association"},
      {"type": "association_trend"}]})", t);
  const auto c = prior_center(m);
  for (const auto& p : c.pi_hat) EXPECT_NEAR((p.array() - 1.0 / 20).abs().maxCoeff(), 0.0, 1e-8);
}

TEST(Fit, RejectsEmptyAndMismatchedTables) {
  const auto zero = StratifiedTable::single("z", ContingencyTable::zeros({6, 6}));
  const auto t = fixtures::father_son();
  const auto m = model(R"({"logit_types": "local"})", t);
  EXPECT_THROW(constrained_mle(zero, m), ValidationError);
  EXPECT_THROW(constrained_mle(fixtures::alzheimer(), m), DimensionError);
}
