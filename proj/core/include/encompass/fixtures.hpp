#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "encompass/table.hpp"

namespace encompass::fixtures {

// Father's (A1) by son's (A2) occupational status, six classes each.
StratifiedTable father_son();
// Alzheimer diagnosis (A1, 5 levels) by cognitive impairment (A2, 4 levels),
// stratified by age (< 75, >= 75). Categories kept in printed order.
StratifiedTable alzheimer();
// Skin-disorder trial: ordinal response (3 levels) at four occasions
// (A1..A4), stratified by treatment / placebo.
StratifiedTable skin_trial();

std::vector<std::string> names();
// Throws ValidationError for an unknown name.
StratifiedTable by_name(std::string_view name);
bool exists(std::string_view name);

}  // namespace encompass::fixtures
