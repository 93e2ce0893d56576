#pragma once

// JSON model specifications.
//
//   {
//     "schema": "encompass.model/1",
//     "name": "M4",
//     "logit_types": ["local", "local"],      // or one string for every variable
//     "epsilon": 0.1,                         // default about-equality tolerance
//     "constraints": [
//       {"type": "tp2"},
//       {"type": "stochastic_order", "vars": [1, 2]},
//       {"type": "independence", "vars": "all", "epsilon": 0.05},
//       {"type": "marginal_trend", "var": 1, "direction": "increase"}
//     ]
//   }
//
// Variables are 1-based. Single-stratum constraints are replicated in every
// stratum unless "mode": "between" is given, in which case the same rows are
// differenced across consecutive strata. "epsilon" may be a scalar or a vector
// with one entry per generated equality row.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "encompass/hypothesis.hpp"

namespace encompass {

inline constexpr std::string_view kModelSchema = "encompass.model/1";

struct ConstraintInfo {
  std::string type;
  std::string kind;  // "inequality", "equality" or "mixed"
  std::string summary;
};

const std::vector<ConstraintInfo>& registered_constraints();

// Throws ValidationError naming the offending constraint entry.
ModelSpec parse_model(std::string_view json_text, std::span<const int> dims, std::size_t strata);
ModelSpec load_model(const std::filesystem::path& path, std::span<const int> dims, std::size_t strata);

}  // namespace encompass
