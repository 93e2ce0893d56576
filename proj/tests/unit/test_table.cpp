#include <gtest/gtest.h>

#include "encompass/error.hpp"
#include "encompass/fixtures.hpp"
#include "encompass/table.hpp"

using namespace encompass;

TEST(LexIndex, LastVariableVariesFastest) {
  const std::vector<int> dims{2, 3, 4};
  EXPECT_EQ(lex_index(std::vector<int>{1, 1, 1}, dims), 0u);
  EXPECT_EQ(lex_index(std::vector<int>{1, 1, 2}, dims), 1u);
  EXPECT_EQ(lex_index(std::vector<int>{1, 2, 1}, dims), 4u);
  EXPECT_EQ(lex_index(std::vector<int>{2, 3, 4}, dims), 23u);
  for (std::size_t k = 0; k < cell_count(dims); ++k) EXPECT_EQ(lex_index(lex_unindex(k, dims), dims), k);
}

TEST(LexIndex, RejectsOutOfRange) {
  const std::vector<int> dims{2, 3};
  EXPECT_THROW(lex_index(std::vector<int>{3, 1}, dims), DomainError);
  EXPECT_THROW(lex_index(std::vector<int>{0, 1}, dims), DomainError);
}

TEST(ContingencyTable, TotalsAndLookup) {
  ContingencyTable t({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(t.total(), 10);
  EXPECT_EQ(t.at(std::vector<int>{2, 1}), 3);
  EXPECT_THROW(ContingencyTable({2, 2}, {1, 2, 3}), ValidationError);
  EXPECT_THROW(ContingencyTable({2, 2}, {1, -2, 3, 4}), ValidationError);
}

TEST(Fixtures, ShapesAndTotals) {
  const auto fs = fixtures::father_son();
  EXPECT_EQ(fs.dims(), (std::vector<int>{6, 6}));
  EXPECT_EQ(fs.strata_count(), 1u);
  EXPECT_EQ(fs.total(), 3498);  // the printed cells; the caption says 3488

  const auto az = fixtures::alzheimer();
  EXPECT_EQ(az.dims(), (std::vector<int>{5, 4}));
  ASSERT_EQ(az.strata_count(), 2u);
  EXPECT_EQ(az.stratum(0).total(), 177);
  EXPECT_EQ(az.stratum(1).total(), 336);

  const auto sk = fixtures::skin_trial();
  EXPECT_EQ(sk.dims(), (std::vector<int>{3, 3, 3, 3}));
  EXPECT_EQ(sk.strata_count(), 2u);
  EXPECT_EQ(sk.total(), 72);
  EXPECT_EQ(validate(sk).zero_cells, 128u);
}

TEST(Fixtures, Lookup) {
  EXPECT_TRUE(fixtures::exists("father_son"));
  EXPECT_FALSE(fixtures::exists("nope"));
  EXPECT_THROW(fixtures::by_name("nope"), ValidationError);
  EXPECT_EQ(fixtures::names().size(), 3u);
}

TEST(TableIO, CsvRoundTrip) {
  for (const auto& name : fixtures::names()) {
    const auto t = fixtures::by_name(name);
    const auto back = parse_table_csv(to_csv(t));
    EXPECT_EQ(back.tables(), t.tables()) << name;
    EXPECT_EQ(back.strata(), t.strata()) << name;
  }
}

TEST(TableIO, JsonRoundTrip) {
  for (const auto& name : fixtures::names()) {
    const auto t = fixtures::by_name(name);
    const auto back = parse_table_json(to_json(t));
    EXPECT_EQ(back.tables(), t.tables()) << name;
  }
}

TEST(TableIO, CsvErrorsNameTheRow) {
  const std::string bad = "stratum,A1,A2,count\nall,1,1,5\nall,1,x,2\n";
  try {
    parse_table_csv(bad);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_table_csv("stratum,A1,A2,count\nall,1,1,-3\n"), ValidationError);
}

TEST(Validate, EmptyTable) {
  const auto t = StratifiedTable::single("z", ContingencyTable::zeros({2, 2}));
  const auto d = validate(t);
  EXPECT_TRUE(d.empty);
  EXPECT_EQ(d.zero_cells, 4u);
  EXPECT_FALSE(d.messages.empty());
}
