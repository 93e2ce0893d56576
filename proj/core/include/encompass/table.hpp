#pragma once

// Multi-way contingency tables, optionally stratified by the configurations
// of a set of explanatory variables.
//
// Cells are stored in lexicographic order with the LAST variable varying
// fastest. Category labels are 1-based, flat offsets are 0-based.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace encompass {

enum class LogitType { local, global, continuation, reverse_continuation };

std::string_view to_string(LogitType type);
LogitType parse_logit_type(std::string_view name);

struct VariableSpec {
  std::string name;
  int categories = 2;
  LogitType logit_type = LogitType::local;
};

// Flat 0-based offset of a cell given its 1-based categories.
std::size_t lex_index(std::span<const int> categories, std::span<const int> dims);
// Inverse of lex_index.
std::vector<int> lex_unindex(std::size_t flat, std::span<const int> dims);
std::size_t cell_count(std::span<const int> dims);

class ContingencyTable {
 public:
  ContingencyTable() = default;
  ContingencyTable(std::vector<int> dims, std::vector<std::int64_t> counts);

  static ContingencyTable zeros(std::vector<int> dims);

  const std::vector<int>& dims() const noexcept { return dims_; }
  const std::vector<std::int64_t>& counts() const noexcept { return counts_; }
  std::size_t cells() const noexcept { return counts_.size(); }
  std::size_t variables() const noexcept { return dims_.size(); }
  std::int64_t total() const noexcept { return total_; }

  std::int64_t at(std::span<const int> categories) const;

  friend bool operator==(const ContingencyTable&, const ContingencyTable&) = default;

 private:
  std::vector<int> dims_;
  std::vector<std::int64_t> counts_;
  std::int64_t total_ = 0;
};

class StratifiedTable {
 public:
  StratifiedTable() = default;
  StratifiedTable(std::string name, std::vector<std::string> variable_names,
                  std::vector<std::string> strata, std::vector<ContingencyTable> tables);

  // Single-stratum convenience constructor; the stratum is labelled "all".
  static StratifiedTable single(std::string name, ContingencyTable table);

  const std::string& name() const noexcept { return name_; }
  const std::vector<std::string>& variable_names() const noexcept { return variable_names_; }
  const std::vector<std::string>& strata() const noexcept { return strata_; }
  const std::vector<ContingencyTable>& tables() const noexcept { return tables_; }
  const ContingencyTable& stratum(std::size_t b) const { return tables_.at(b); }

  const std::vector<int>& dims() const { return tables_.front().dims(); }
  std::size_t strata_count() const noexcept { return tables_.size(); }
  std::size_t cells() const { return tables_.front().cells(); }
  std::int64_t total() const;

  friend bool operator==(const StratifiedTable&, const StratifiedTable&) = default;

 private:
  std::string name_;
  std::vector<std::string> variable_names_;
  std::vector<std::string> strata_;
  std::vector<ContingencyTable> tables_;
};

struct TableDiagnostics {
  std::int64_t total = 0;
  std::vector<std::int64_t> stratum_totals;
  std::size_t total_cells = 0;
  std::size_t zero_cells = 0;
  double sparsity = 0.0;  // zero_cells / total_cells
  bool empty = false;     // n == 0
  std::vector<std::string> empty_strata;
  std::vector<std::string> messages;
};

TableDiagnostics validate(const StratifiedTable& table);

// Tabular I/O. CSV: optional `# name:`, `# dims:` and `# strata:` comment
// lines, header `stratum,<var1>,...,<varq>,count`, one row per non-zero cell.
// JSON: explicit `dims`, `strata` and dense per-stratum `counts`.
StratifiedTable parse_table_csv(std::string_view text, std::string name = "");
StratifiedTable parse_table_json(std::string_view text);
std::string to_csv(const StratifiedTable& table);
std::string to_json(const StratifiedTable& table);

// Dispatches on the file extension (.csv / .json).
StratifiedTable load_table(const std::filesystem::path& path);

}  // namespace encompass
