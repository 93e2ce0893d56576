#include "encompass/fixtures.hpp"

#include <algorithm>

#include "encompass/error.hpp"

namespace encompass::fixtures {

StratifiedTable father_son() {
  // Rows: father I..VI, columns: son I..VI.
  std::vector<std::int64_t> counts = {
      125, 60,  26,  49,  14,  5,    //
      47,  65,  66,  123, 23,  21,   //
      31,  58,  110, 223, 64,  32,   //
      50,  114, 185, 715, 258, 189,  //
      6,   19,  40,  179, 143, 71,   //
      3,   14,  32,  141, 91,  106,
  };
  return StratifiedTable("father_son", {"father", "son"}, {"all"},
                         {ContingencyTable({6, 6}, std::move(counts))});
}

StratifiedTable alzheimer() {
  // Rows V, IV, III, II, I; columns IV, III, II, I (as printed).
  std::vector<std::int64_t> younger = {
      2, 1,  1,  0,   //
      1, 12, 10, 1,   //
      0, 8,  27, 5,   //
      0, 0,  20, 4,   //
      0, 0,  0,  85,
  };
  std::vector<std::int64_t> older = {
      14, 24, 2,  0,  //
      19, 48, 25, 0,  //
      1,  25, 63, 4,  //
      0,  0,  35, 7,  //
      0,  0,  0,  69,
  };
  return StratifiedTable("alzheimer", {"A1", "A2"}, {"lt75", "ge75"},
                         {ContingencyTable({5, 4}, std::move(younger)),
                          ContingencyTable({5, 4}, std::move(older))});
}

StratifiedTable skin_trial() {
  // Each line is one (A1, A2) configuration; within a line A3 is the outer
  // and A4 the inner index, matching lexicographic order.
  std::vector<std::int64_t> treatment = {
      0, 1, 0, 0, 0, 0, 0, 0, 0,  // I   I
      0, 2, 0, 0, 3, 2, 0, 0, 1,  // I   II
      0, 0, 0, 0, 1, 0, 0, 0, 0,  // I   III
      0, 0, 0, 0, 3, 0, 0, 0, 0,  // II  I
      0, 0, 1, 0, 2, 4, 1, 1, 0,  // II  II
      0, 0, 0, 0, 1, 3, 0, 0, 5,  // II  III
      0, 0, 0, 0, 0, 0, 0, 0, 0,  // III I
      0, 0, 0, 0, 0, 0, 0, 2, 0,  // III II
      0, 0, 0, 0, 0, 0, 0, 0, 3,  // III III
  };
  std::vector<std::int64_t> placebo = {
      0, 6, 1, 0, 2, 0, 0, 0, 0,  // I   I
      0, 3, 1, 0, 6, 2, 0, 0, 0,  // I   II
      0, 0, 1, 1, 0, 0, 0, 0, 0,  // I   III
      0, 0, 0, 0, 0, 0, 0, 0, 0,  // II  I
      0, 1, 0, 0, 1, 2, 0, 3, 3,  // II  II
      0, 0, 0, 0, 1, 0, 0, 0, 1,  // II  III
      0, 0, 0, 0, 0, 0, 0, 0, 0,  // III I
      0, 0, 0, 0, 0, 0, 0, 1, 0,  // III II
      0, 0, 0, 0, 0, 0, 0, 0, 0,  // III III
  };
  return StratifiedTable("skin_trial", {"A1", "A2", "A3", "A4"}, {"treatment", "placebo"},
                         {ContingencyTable({3, 3, 3, 3}, std::move(treatment)),
                          ContingencyTable({3, 3, 3, 3}, std::move(placebo))});
}

std::vector<std::string> names() { return {"father_son", "alzheimer", "skin_trial"}; }

bool exists(std::string_view name) {
  const auto all = names();
  return std::find(all.begin(), all.end(), name) != all.end();
}

StratifiedTable by_name(std::string_view name) {
  if (name == "father_son") return father_son();
  if (name == "alzheimer") return alzheimer();
  if (name == "skin_trial") return skin_trial();
  throw ValidationError("unknown dataset '" + std::string(name) + "'");
}

}  // namespace encompass::fixtures
