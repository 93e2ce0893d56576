#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "encompass/engine.hpp"
#include "encompass/hypothesis.hpp"
#include "encompass/table.hpp"

namespace encompass::cli {

enum ExitCode : int { kOk = 0, kInputError = 1, kEstimationError = 2 };

inline constexpr std::string_view kManifestSchema = "encompass.manifest/1";
inline constexpr std::string_view kReportSchema = "encompass.report/1";

struct ModelRef {
  std::string name;
  std::string source;     // file path or "inline"
  std::string reference;  // empty = manifest reference
  ModelSpec spec;
};

// A manifest names a dataset (bundled fixture or file), the models to compare
// and the run settings. Relative paths resolve against the manifest's folder.
struct RunManifest {
  std::string name;
  std::string dataset_ref;
  StratifiedTable table;
  double kappa = 1.0;
  std::string reference = "M1";
  std::vector<ModelRef> models;
  RunSettings settings;
};

// Throws ValidationError with the file name and offending field.
RunManifest load_manifest(const std::filesystem::path& path);
StratifiedTable resolve_dataset(const std::string& ref, const std::filesystem::path& base_dir);

// Full command line entry point; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace encompass::cli
