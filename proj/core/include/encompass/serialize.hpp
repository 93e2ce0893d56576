#pragma once

// Deterministic JSON renderings of results. Keys are emitted in a fixed order
// and doubles with full round-trip precision, so identical inputs give
// byte-identical text.

#include <string>

#include "encompass/engine.hpp"
#include "encompass/fit.hpp"

namespace encompass {

std::string to_json(const FitResult& fit, int indent = 2);
std::string to_json(const ProportionEstimate& estimate, int indent = 2);
std::string to_json(const RunSettings& settings, int indent = 2);
std::string to_json(const BFEstimate& bf, int indent = 2);
std::string to_json(const PosteriorSample& sample, int indent = 2);

// Run settings from JSON; absent keys keep their defaults. Throws
// ValidationError on unknown keys or bad values.
RunSettings parse_run_settings(std::string_view json_text, RunSettings base = {});

}  // namespace encompass
