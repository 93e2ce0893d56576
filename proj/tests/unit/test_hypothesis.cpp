#include <gtest/gtest.h>

#include "encompass/error.hpp"
#include "encompass/hypothesis.hpp"
#include "encompass/model_io.hpp"

using namespace encompass;

namespace {

Eigen::MatrixXd zeros(Eigen::Index r, Eigen::Index c) { return Eigen::MatrixXd::Zero(r, c); }
Eigen::MatrixXd eye(Eigen::Index n) { return Eigen::MatrixXd::Identity(n, n); }

}  // namespace

TEST(Constraints, FirstDifferences) {
  Eigen::MatrixXd d(2, 3);
  d << -1, 1, 0, 0, -1, 1;
  EXPECT_EQ(first_differences(3), d);
}

TEST(Constraints, PositiveAssociationIsOI) {
  const auto cs = positive_association(4, 3);
  Eigen::MatrixXd u(6, 11);
  u << zeros(6, 5), eye(6);
  EXPECT_EQ(cs.inequality, u);
  EXPECT_EQ(cs.equality_rows(), 0u);
}

TEST(Constraints, IndependenceIsOI) {
  const auto cs = independence(3, 3, 0.1);
  Eigen::MatrixXd e(4, 8);
  e << zeros(4, 4), eye(4);
  EXPECT_EQ(cs.equality, e);
  EXPECT_TRUE(cs.epsilon.isApprox(Eigen::VectorXd::Constant(4, 0.1)));
}

TEST(Constraints, UniformAssociationIsOD) {
  const auto cs = uniform_association(3, 3, 0.1);
  Eigen::MatrixXd e(3, 8);
  e << zeros(3, 4), first_differences(4);
  EXPECT_EQ(cs.equality, e);
  EXPECT_EQ(uniform_association(2, 2, 0.1).equality_rows(), 0u);
}

TEST(Constraints, MarginalHomogeneityIsMinusIIO) {
  const auto cs = marginal_homogeneity(3, 0.1);
  Eigen::MatrixXd e(2, 8);
  e << -eye(2), eye(2), zeros(2, 4);
  EXPECT_EQ(cs.equality, e);
}

TEST(Constraints, StochasticOrder) {
  const auto cs = stochastic_order(3);
  Eigen::MatrixXd u(2, 8);
  u << -eye(2), eye(2), zeros(2, 4);
  EXPECT_EQ(cs.inequality, u);
}

TEST(Constraints, StratifyWithinAndBetween) {
  Eigen::MatrixXd base(1, 2);
  base << 1, 2;
  Eigen::MatrixXd within(2, 4);
  within << 1, 2, 0, 0, 0, 0, 1, 2;
  EXPECT_EQ(stratify(base, StrataMode::within, 2), within);
  Eigen::MatrixXd between(2, 6);
  between << -1, -2, 1, 2, 0, 0, 0, 0, -1, -2, 1, 2;
  EXPECT_EQ(stratify(base, StrataMode::between, 3), between);
}

TEST(Constraints, HigherInteractions) {
  const auto link = build_link(std::vector<int>{2, 3, 2}, LogitType::global);
  const auto cs = zero_higher_interactions(link, 2, 0.1);
  const auto blk = link.block(MarginSet::of({0, 1, 2}));
  ASSERT_EQ(cs.equality_rows(), blk.size);
  for (std::size_t k = 0; k < blk.size; ++k) EXPECT_EQ(cs.equality(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(blk.offset + k)), 1.0);
  EXPECT_EQ(zero_higher_interactions(link, 3, 0.1).equality_rows(), 0u);
}

TEST(Constraints, MarginalTrendSignFollowsLogitType) {
  const auto g = build_link(std::vector<int>{3, 3}, LogitType::global);
  const auto r = build_link(std::vector<int>{3, 3}, LogitType::reverse_continuation);
  const auto cg = marginal_trend(g, 0, 2, Trend::increase);
  const auto cr = marginal_trend(r, 0, 2, Trend::increase);
  EXPECT_EQ(cg.inequality, -cr.inequality);
  EXPECT_EQ(cg.inequality(0, 8), 1.0);  // stratum 2 logit minus stratum 1 logit
  EXPECT_EQ(cg.inequality(0, 0), -1.0);
  EXPECT_EQ(marginal_trend(g, 0, 2, Trend::decrease).inequality, cr.inequality);
}

TEST(Constraints, SatisfiesAndCompose) {
  const auto link = build_link(std::vector<int>{2, 2}, LogitType::local);
  const auto cs = compose({positive_association(link), marginal_homogeneity(link, 0.1)});
  Eigen::VectorXd eta(3);
  eta << 0.0, 0.05, 0.3;
  EXPECT_TRUE(satisfies(eta, cs));
  eta << 0.0, 0.2, 0.3;
  EXPECT_FALSE(satisfies(eta, cs));
  eta << 0.0, 0.05, -0.3;
  EXPECT_FALSE(satisfies(eta, cs));
  EXPECT_NEAR(cs.scaled_epsilon(0.5).epsilon(0), 0.05, 1e-15);
}

TEST(Constraints, Validation) {
  EXPECT_THROW(ConstraintSet::equalities(Eigen::MatrixXd::Ones(1, 3), -1.0).check(), DomainError);
  const auto link = build_link(std::vector<int>{2, 2}, LogitType::local);
  EXPECT_THROW(ModelSpec("x", link, 2, positive_association(link)), DimensionError);
}

// ---------------------------------------------------------------------------

TEST(ModelIo, ParsesNamedConstraints) {
  const std::vector<int> dims{6, 6};
  const auto m = parse_model(R"({"name": "M5", "logit_types": "local", "epsilon": 0.2,
      "constraints": [{"type": "tp2"}, {"type": "uniform_association"}]})",
                             dims, 1);
  EXPECT_EQ(m.name(), "M5");
  EXPECT_EQ(m.constraints().inequality_rows(), 25u);
  EXPECT_EQ(m.constraints().equality_rows(), 24u);
  EXPECT_DOUBLE_EQ(m.constraints().epsilon(0), 0.2);
}

TEST(ModelIo, StrataModes) {
  const std::vector<int> dims{5, 4};
  const auto within =
      parse_model(R"({"logit_types": "reverse_continuation", "constraints": [{"type": "positive_association"}]})", dims, 2);
  EXPECT_EQ(within.constraints().inequality_rows(), 24u);
  EXPECT_EQ(within.constraints().columns(), 38u);
  const auto trend = parse_model(
      R"({"logit_types": "reverse_continuation", "constraints": [{"type": "association_trend", "direction": "decrease"}]})",
      dims, 2);
  EXPECT_EQ(trend.constraints().inequality_rows(), 12u);
  const auto m9 = parse_model(
      R"({"logit_types": "reverse_continuation", "constraints": [{"type": "marginal_trend", "var": "all"}]})", dims, 2);
  EXPECT_EQ(m9.constraints().inequality_rows(), 7u);
}

TEST(ModelIo, PerRowEpsilon) {
  const std::vector<int> dims{2, 3};
  const auto m = parse_model(
      R"({"logit_types": "local", "constraints": [{"type": "independence", "epsilon": [0.1, 0.3]}]})", dims, 1);
  EXPECT_DOUBLE_EQ(m.constraints().epsilon(1), 0.3);
  EXPECT_THROW(parse_model(R"({"logit_types": "local", "constraints": [{"type": "independence", "epsilon": [0.1]}]})",
                           dims, 1),
               ValidationError);
}

TEST(ModelIo, EncompassingModel) {
  const std::vector<int> dims{3, 3};
  const auto m = parse_model(R"({"name": "M1", "logit_types": "global"})", dims, 1);
  EXPECT_TRUE(m.constraints().is_empty());
}

TEST(ModelIo, ErrorsAreLocated) {
  const std::vector<int> dims{6, 6};
  auto message = [&](const std::string& json, std::size_t strata = 1) {
    try {
      parse_model(json, dims, strata);
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message(R"({"name": "A", "logit_types": "local", "constraints": [{"type": "pqd"}]})").find("constraint #1"),
            std::string::npos);
  EXPECT_NE(message(R"({"name": "A", "logit_types": "local", "constraints": [{"type": "tp3"}]})").find("unknown type"),
            std::string::npos);
  EXPECT_NE(message(R"({"logit_types": "local", "constraints": [{"type": "tp2", "vars": [1, 3]}]})").find("out of range"),
            std::string::npos);
  EXPECT_NE(message(R"({"logit_types": "local", "constraints": [{"type": "equal_association"}]})").find("two strata"),
            std::string::npos);
  EXPECT_NE(message(R"({"logit_types": ["local"]})").find("logit_types"), std::string::npos);
  EXPECT_NE(message("{not json").find("invalid JSON"), std::string::npos);
  EXPECT_NE(message(R"({"schema": "other/2", "logit_types": "local"})").find("schema"), std::string::npos);
}

TEST(ModelIo, RegistryListsEveryType) {
  const auto& infos = registered_constraints();
  EXPECT_GE(infos.size(), 13u);
  for (const auto& i : infos) {
    EXPECT_FALSE(i.summary.empty());
    EXPECT_TRUE(i.kind == "equality" || i.kind == "inequality");
  }
}
