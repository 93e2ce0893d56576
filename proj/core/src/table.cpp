#include "encompass/table.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "encompass/error.hpp"
#include "json.hpp"

namespace encompass {

using nlohmann::json;

std::string_view to_string(LogitType type) {
  switch (type) {
    case LogitType::local: return "local";
    case LogitType::global: return "global";
    case LogitType::continuation: return "continuation";
    case LogitType::reverse_continuation: return "reverse_continuation";
  }
  return "local";
}

LogitType parse_logit_type(std::string_view name) {
  if (name == "local" || name == "l") return LogitType::local;
  if (name == "global" || name == "g") return LogitType::global;
  if (name == "continuation" || name == "c") return LogitType::continuation;
  if (name == "reverse_continuation" || name == "r") return LogitType::reverse_continuation;
  throw DomainError("unknown logit type '" + std::string(name) + "'");
}

std::size_t cell_count(std::span<const int> dims) {
  std::size_t r = 1;
  for (int m : dims) {
    if (m < 1) throw DomainError("category count must be positive");
    r *= static_cast<std::size_t>(m);
  }
  return r;
}

std::size_t lex_index(std::span<const int> categories, std::span<const int> dims) {
  if (categories.size() != dims.size()) {
    throw DomainError("lex_index: expected " + std::to_string(dims.size()) + " categories, got " +
                      std::to_string(categories.size()));
  }
  std::size_t flat = 0;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (categories[i] < 1 || categories[i] > dims[i]) {
      throw DomainError("lex_index: category " + std::to_string(categories[i]) + " of variable " +
                        std::to_string(i + 1) + " outside 1.." + std::to_string(dims[i]));
    }
    flat = flat * static_cast<std::size_t>(dims[i]) + static_cast<std::size_t>(categories[i] - 1);
  }
  return flat;
}

std::vector<int> lex_unindex(std::size_t flat, std::span<const int> dims) {
  if (flat >= cell_count(dims)) throw DomainError("lex_unindex: flat index out of range");
  std::vector<int> categories(dims.size());
  for (std::size_t i = dims.size(); i-- > 0;) {
    const auto m = static_cast<std::size_t>(dims[i]);
    categories[i] = static_cast<int>(flat % m) + 1;
    flat /= m;
  }
  return categories;
}

ContingencyTable::ContingencyTable(std::vector<int> dims, std::vector<std::int64_t> counts)
    : dims_(std::move(dims)), counts_(std::move(counts)) {
  if (dims_.empty()) throw ValidationError("table needs at least one variable");
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (dims_[i] < 2) {
      throw ValidationError("variable " + std::to_string(i + 1) + " has " +
                            std::to_string(dims_[i]) + " categories; at least 2 required");
    }
  }
  if (counts_.size() != cell_count(dims_)) {
    throw ValidationError("counts length " + std::to_string(counts_.size()) +
                          " does not match product of dims " + std::to_string(cell_count(dims_)));
  }
  for (std::size_t k = 0; k < counts_.size(); ++k) {
    if (counts_[k] < 0) throw ValidationError("negative count at cell " + std::to_string(k));
  }
  total_ = std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0});
}

ContingencyTable ContingencyTable::zeros(std::vector<int> dims) {
  const auto r = cell_count(dims);
  return ContingencyTable(std::move(dims), std::vector<std::int64_t>(r, 0));
}

std::int64_t ContingencyTable::at(std::span<const int> categories) const {
  return counts_[lex_index(categories, dims_)];
}

StratifiedTable::StratifiedTable(std::string name, std::vector<std::string> variable_names,
                                 std::vector<std::string> strata,
                                 std::vector<ContingencyTable> tables)
    : name_(std::move(name)),
      variable_names_(std::move(variable_names)),
      strata_(std::move(strata)),
      tables_(std::move(tables)) {
  if (tables_.empty()) throw ValidationError("stratified table needs at least one stratum");
  if (strata_.size() != tables_.size()) {
    throw ValidationError("number of stratum labels does not match number of tables");
  }
  std::vector<std::string> problems;
  for (std::size_t b = 1; b < tables_.size(); ++b) {
    if (tables_[b].dims() != tables_.front().dims()) {
      problems.push_back("stratum '" + strata_[b] + "' has different dims from '" + strata_[0] + "'");
    }
  }
  if (!problems.empty()) {
    std::string msg = "ragged strata:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
  if (variable_names_.empty()) {
    for (std::size_t i = 0; i < dims().size(); ++i) variable_names_.push_back("a" + std::to_string(i + 1));
  }
  if (variable_names_.size() != dims().size()) {
    throw ValidationError("number of variable names does not match number of variables");
  }
}

StratifiedTable StratifiedTable::single(std::string name, ContingencyTable table) {
  return StratifiedTable(std::move(name), {}, {"all"}, {std::move(table)});
}

std::int64_t StratifiedTable::total() const {
  std::int64_t n = 0;
  for (const auto& t : tables_) n += t.total();
  return n;
}

TableDiagnostics validate(const StratifiedTable& table) {
  TableDiagnostics d;
  for (std::size_t b = 0; b < table.strata_count(); ++b) {
    const auto& t = table.stratum(b);
    d.stratum_totals.push_back(t.total());
    d.total += t.total();
    d.total_cells += t.cells();
    d.zero_cells += static_cast<std::size_t>(std::count(t.counts().begin(), t.counts().end(), 0));
    if (t.total() == 0) d.empty_strata.push_back(table.strata()[b]);
  }
  d.sparsity = d.total_cells ? static_cast<double>(d.zero_cells) / static_cast<double>(d.total_cells) : 0.0;
  d.empty = d.total == 0;
  if (d.empty) d.messages.push_back("table is empty (n = 0); model fitting will reject it");
  for (const auto& s : d.empty_strata) {
    if (!d.empty) d.messages.push_back("stratum '" + s + "' has no observations");
  }
  if (d.zero_cells > 0) {
    d.messages.push_back(std::to_string(d.zero_cells) + " of " + std::to_string(d.total_cells) +
                         " cells are empty");
  }
  return d;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_int(const std::string& s, std::int64_t& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

}  // namespace

StratifiedTable parse_table_csv(std::string_view text, std::string name) {
  std::vector<int> declared_dims;
  std::vector<std::string> declared_strata;
  std::vector<std::string> header;
  struct Row {
    std::size_t line;
    std::string stratum;
    std::vector<int> cats;
    std::int64_t count;
  };
  std::vector<Row> rows;
  std::vector<std::string> errors;

  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      const auto body = trim(std::string_view(t).substr(1));
      const auto colon = body.find(':');
      if (colon == std::string::npos) continue;
      const auto key = trim(std::string_view(body).substr(0, colon));
      const auto value = trim(std::string_view(body).substr(colon + 1));
      if (key == "name" && name.empty()) {
        name = value;
      } else if (key == "dims") {
        for (const auto& f : split(value, ',')) {
          std::int64_t v = 0;
          if (!parse_int(f, v)) errors.push_back("line " + std::to_string(lineno) + ": bad dims entry '" + f + "'");
          declared_dims.push_back(static_cast<int>(v));
        }
      } else if (key == "strata") {
        declared_strata = split(value, ',');
      }
      continue;
    }
    auto fields = split(t, ',');
    if (header.empty()) {
      header = std::move(fields);
      if (header.size() < 3 || header.front() != "stratum" || header.back() != "count") {
        throw ValidationError("line " + std::to_string(lineno) +
                              ": header must be 'stratum,<variables...>,count'");
      }
      continue;
    }
    if (fields.size() != header.size()) {
      errors.push_back("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                       " fields, got " + std::to_string(fields.size()));
      continue;
    }
    Row row{lineno, fields.front(), {}, 0};
    bool ok = true;
    for (std::size_t i = 1; i + 1 < fields.size(); ++i) {
      std::int64_t v = 0;
      if (!parse_int(fields[i], v) || v < 1) {
        errors.push_back("line " + std::to_string(lineno) + ": category '" + fields[i] +
                         "' is not a positive integer");
        ok = false;
      }
      row.cats.push_back(static_cast<int>(v));
    }
    if (!parse_int(fields.back(), row.count)) {
      errors.push_back("line " + std::to_string(lineno) + ": count '" + fields.back() + "' is not an integer");
      ok = false;
    } else if (row.count < 0) {
      errors.push_back("line " + std::to_string(lineno) + ": negative count " + fields.back());
      ok = false;
    }
    if (ok) rows.push_back(std::move(row));
  }
  if (header.empty()) throw ValidationError("missing CSV header");
  const std::size_t q = header.size() - 2;

  std::vector<int> dims = declared_dims;
  if (!dims.empty() && dims.size() != q) {
    errors.push_back("dims comment lists " + std::to_string(dims.size()) + " variables, header has " +
                     std::to_string(q));
  }
  if (dims.empty()) {
    dims.assign(q, 0);
    for (const auto& r : rows)
      for (std::size_t i = 0; i < q; ++i) dims[i] = std::max(dims[i], r.cats[i]);
  }
  std::vector<std::string> strata = declared_strata;
  for (const auto& r : rows) {
    if (std::find(strata.begin(), strata.end(), r.stratum) == strata.end()) {
      if (!declared_strata.empty()) {
        errors.push_back("line " + std::to_string(r.line) + ": stratum '" + r.stratum +
                         "' not declared in strata comment");
      }
      strata.push_back(r.stratum);
    }
  }
  if (strata.empty()) strata.push_back("all");

  if (errors.empty() && dims.size() == q) {
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < q; ++i) {
        if (r.cats[i] > dims[i]) {
          errors.push_back("line " + std::to_string(r.line) + ": category " + std::to_string(r.cats[i]) +
                           " of '" + header[i + 1] + "' exceeds dimension " + std::to_string(dims[i]));
        }
      }
    }
  }
  if (!errors.empty()) {
    std::string msg = "invalid table CSV:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ValidationError(msg);
  }

  const auto r = cell_count(dims);
  std::vector<std::vector<std::int64_t>> counts(strata.size(), std::vector<std::int64_t>(r, 0));
  std::vector<std::vector<std::size_t>> seen(strata.size(), std::vector<std::size_t>(r, 0));
  for (const auto& row : rows) {
    const auto b = static_cast<std::size_t>(std::find(strata.begin(), strata.end(), row.stratum) - strata.begin());
    const auto k = lex_index(row.cats, dims);
    if (seen[b][k]) {
      errors.push_back("line " + std::to_string(row.line) + ": duplicate cell (first seen on line " +
                       std::to_string(seen[b][k]) + ")");
    }
    seen[b][k] = row.line;
    counts[b][k] += row.count;
  }
  if (!errors.empty()) {
    std::string msg = "invalid table CSV:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ValidationError(msg);
  }
  std::vector<ContingencyTable> tables;
  for (auto& c : counts) tables.emplace_back(dims, std::move(c));
  std::vector<std::string> vars(header.begin() + 1, header.end() - 1);
  return StratifiedTable(std::move(name), std::move(vars), std::move(strata), std::move(tables));
}

std::string to_csv(const StratifiedTable& table) {
  std::ostringstream out;
  if (!table.name().empty()) out << "# name: " << table.name() << '\n';
  out << "# dims: ";
  for (std::size_t i = 0; i < table.dims().size(); ++i) out << (i ? "," : "") << table.dims()[i];
  out << "\n# strata: ";
  for (std::size_t b = 0; b < table.strata_count(); ++b) out << (b ? "," : "") << table.strata()[b];
  out << "\nstratum";
  for (const auto& v : table.variable_names()) out << ',' << v;
  out << ",count\n";
  for (std::size_t b = 0; b < table.strata_count(); ++b) {
    const auto& t = table.stratum(b);
    for (std::size_t k = 0; k < t.cells(); ++k) {
      if (t.counts()[k] == 0) continue;
      out << table.strata()[b];
      for (int c : lex_unindex(k, t.dims())) out << ',' << c;
      out << ',' << t.counts()[k] << '\n';
    }
  }
  return out.str();
}

StratifiedTable parse_table_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("table JSON: ") + e.what());
  }
  std::vector<std::string> errors;
  if (!j.contains("dims") || !j["dims"].is_array()) errors.push_back("missing array field 'dims'");
  if (!j.contains("counts") || !j["counts"].is_array()) errors.push_back("missing array field 'counts'");
  if (!errors.empty()) {
    std::string msg = "invalid table JSON:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ValidationError(msg);
  }
  const auto dims = j["dims"].get<std::vector<int>>();
  auto strata = j.value("strata", std::vector<std::string>{});
  const auto& counts = j["counts"];
  if (strata.empty()) {
    for (std::size_t b = 0; b < counts.size(); ++b) strata.push_back(counts.size() == 1 ? "all" : "s" + std::to_string(b + 1));
  }
  if (strata.size() != counts.size()) {
    throw ValidationError("invalid table JSON:\n  " + std::to_string(strata.size()) + " strata labels but " +
                          std::to_string(counts.size()) + " count arrays");
  }
  std::vector<ContingencyTable> tables;
  const auto r = cell_count(dims);
  for (std::size_t b = 0; b < counts.size(); ++b) {
    const auto c = counts[b].get<std::vector<std::int64_t>>();
    if (c.size() != r) {
      errors.push_back("stratum '" + strata[b] + "': " + std::to_string(c.size()) + " counts, expected " +
                       std::to_string(r));
      continue;
    }
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (c[k] < 0) errors.push_back("stratum '" + strata[b] + "' cell " + std::to_string(k) + ": negative count");
    }
    if (errors.empty()) tables.emplace_back(dims, c);
  }
  if (!errors.empty()) {
    std::string msg = "invalid table JSON:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ValidationError(msg);
  }
  return StratifiedTable(j.value("name", std::string{}), j.value("variables", std::vector<std::string>{}),
                         std::move(strata), std::move(tables));
}

std::string to_json(const StratifiedTable& table) {
  json j;
  j["schema"] = 1;
  j["name"] = table.name();
  j["variables"] = table.variable_names();
  j["dims"] = table.dims();
  j["strata"] = table.strata();
  j["counts"] = json::array();
  for (const auto& t : table.tables()) j["counts"].push_back(t.counts());
  return j.dump(2) + "\n";
}

StratifiedTable load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open table file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const auto ext = path.extension().string();
  if (ext == ".json") return parse_table_json(buffer.str());
  if (ext == ".csv") return parse_table_csv(buffer.str(), path.stem().string());
  throw ValidationError("unsupported table format '" + ext + "' (expected .csv or .json)");
}

}  // namespace encompass
