#include "encompass/model_io.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "encompass/error.hpp"

namespace encompass {

namespace {

using nlohmann::json;

struct Context {
  const LinkMatrices& link;
  std::size_t strata;
  double epsilon;
};

struct Entry {
  std::string type;
  const json& node;
  std::string where;
};

[[noreturn]] void fail(const Entry& e, const std::string& msg) {
  throw ValidationError(e.where + " (" + e.type + "): " + msg);
}

std::size_t q_of(const Context& c) { return c.link.variables().size(); }

std::size_t one_var(const Entry& e, const json& v, std::size_t q) {
  if (!v.is_number_integer()) fail(e, "variable indices must be integers");
  const auto k = v.get<long long>();
  if (k < 1 || static_cast<std::size_t>(k) > q)
    fail(e, "variable " + std::to_string(k) + " out of range 1.." + std::to_string(q));
  return static_cast<std::size_t>(k - 1);
}

std::vector<std::pair<std::size_t, std::size_t>> pairs_of(const Entry& e, const Context& c) {
  const auto q = q_of(c);
  if (q < 2) fail(e, "needs at least two variables");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (!e.node.contains("vars")) return {{0, 1}};
  const auto& v = e.node.at("vars");
  if (v.is_string()) {
    if (v.get<std::string>() != "all") fail(e, "\"vars\" must be a pair or \"all\"");
    for (std::size_t i = 0; i < q; ++i)
      for (std::size_t j = i + 1; j < q; ++j) out.emplace_back(i, j);
    return out;
  }
  if (!v.is_array() || v.empty()) fail(e, "\"vars\" must be a pair, a list of pairs or \"all\"");
  if (v.front().is_array()) {
    for (const auto& p : v) {
      if (p.size() != 2) fail(e, "every pair in \"vars\" needs two entries");
      out.emplace_back(one_var(e, p[0], q), one_var(e, p[1], q));
    }
  } else {
    if (v.size() != 2) fail(e, "\"vars\" needs exactly two entries");
    out.emplace_back(one_var(e, v[0], q), one_var(e, v[1], q));
  }
  for (const auto& [i, j] : out)
    if (i == j) fail(e, "a pair must name two different variables");
  return out;
}

std::vector<std::size_t> singles_of(const Entry& e, const Context& c) {
  const auto q = q_of(c);
  const json* v = e.node.contains("var") ? &e.node.at("var") : e.node.contains("vars") ? &e.node.at("vars") : nullptr;
  if (!v) fail(e, "needs \"var\"");
  std::vector<std::size_t> out;
  if (v->is_string()) {
    if (v->get<std::string>() != "all") fail(e, "\"var\" must be an index, a list or \"all\"");
    for (std::size_t i = 0; i < q; ++i) out.push_back(i);
  } else if (v->is_array()) {
    for (const auto& k : *v) out.push_back(one_var(e, k, q));
  } else {
    out.push_back(one_var(e, *v, q));
  }
  return out;
}

double scalar_epsilon(const Entry& e, const Context& c) {
  if (!e.node.contains("epsilon") || e.node.at("epsilon").is_array()) return c.epsilon;
  const auto& v = e.node.at("epsilon");
  if (!v.is_number()) fail(e, "\"epsilon\" must be a number or an array of numbers");
  const double eps = v.get<double>();
  if (!(eps > 0.0)) fail(e, "\"epsilon\" must be positive");
  return eps;
}

Trend direction_of(const Entry& e) {
  const auto d = e.node.value("direction", std::string("increase"));
  if (d == "increase") return Trend::increase;
  if (d == "decrease") return Trend::decrease;
  fail(e, "\"direction\" must be \"increase\" or \"decrease\", got \"" + d + "\"");
}

StrataMode mode_of(const Entry& e) {
  const auto m = e.node.value("mode", std::string("within"));
  if (m == "within") return StrataMode::within;
  if (m == "between") return StrataMode::between;
  fail(e, "\"mode\" must be \"within\" or \"between\", got \"" + m + "\"");
}

void require_type(const Entry& e, const Context& c, std::size_t v, LogitType type) {
  if (c.link.variables()[v].logit_type != type)
    fail(e, "requires " + std::string(to_string(type)) + " logits for variable " + std::to_string(v + 1) + ", got " +
                std::string(to_string(c.link.variables()[v].logit_type)));
}

// Single-stratum pieces, stratified by the entry's mode.
ConstraintSet per_stratum(const Entry& e, const Context& c, std::vector<ConstraintSet> parts) {
  if (parts.empty()) return ConstraintSet::empty(c.link.eta_size() * c.strata);
  ConstraintSet base = compose(std::span<const ConstraintSet>(parts));
  if (base.is_empty()) return ConstraintSet::empty(c.link.eta_size() * c.strata);
  const auto mode = mode_of(e);
  if (mode == StrataMode::between && c.strata < 2) fail(e, "\"mode\": \"between\" needs at least two strata");
  return stratify(base, mode, c.strata);
}

ConstraintSet require_strata(const Entry& e, const Context& c) {
  if (c.strata < 2) fail(e, "needs at least two strata, the dataset has " + std::to_string(c.strata));
  return {};
}

using Builder = std::function<ConstraintSet(const Entry&, const Context&)>;

struct Registered {
  ConstraintInfo info;
  Builder build;
};

const std::vector<Registered>& registry() {
  static const std::vector<Registered> r = {
      {{"tp2", "inequality", "all local log-odds ratios of a pair >= 0 (local logits required)"},
       [](const Entry& e, const Context& c) {
         std::vector<ConstraintSet> parts;
         for (auto [i, j] : pairs_of(e, c)) {
           require_type(e, c, i, LogitType::local);
           require_type(e, c, j, LogitType::local);
           parts.push_back(positive_association(c.link, i, j));
         }
         return per_stratum(e, c, std::move(parts));
       }},
      {{"pqd", "inequality", "all global log-odds ratios of a pair >= 0 (global logits required)"},
       [](const Entry& e, const Context& c) {
         std::vector<ConstraintSet> parts;
         for (auto [i, j] : pairs_of(e, c)) {
           require_type(e, c, i, LogitType::global);
           require_type(e, c, j, LogitType::global);
           parts.push_back(positive_association(c.link, i, j));
         }
         return per_stratum(e, c, std::move(parts));
       }},
      {{"positive_association", "inequality", "all log-odds ratios of a pair >= 0, any logit type"},
       [](const Entry& e, const Context& c) {
         std::vector<ConstraintSet> parts;
         for (auto [i, j] : pairs_of(e, c)) parts.push_back(positive_association(c.link, i, j));
         return per_stratum(e, c, std::move(parts));
       }},
      {{"independence", "equality", "all log-odds ratios of a pair about 0"},
       [](const Entry& e, const Context& c) {
         std::vector<ConstraintSet> parts;
         for (auto [i, j] : pairs_of(e, c)) parts.push_back(independence(c.link, scalar_epsilon(e, c), i, j));
         return per_stratum(e, c, std::move(parts));
       }},
      {{"uniform_association", "equality", "all log-odds ratios of a pair about equal"},
       [](const Entry& e, const Context& c) {
         std::vector<ConstraintSet> parts;
         for (auto [i, j] : pairs_of(e, c))
           parts.push_back(uniform_association(c.link, scalar_epsilon(e, c), i, j));
         return per_stratum(e, c, std::move(parts));
       }},
      {{"marginal_homogeneity", "equality", "logits of the two variables about equal"},
       [](const Entry& e, const Context& c) {
         std::vector<ConstraintSet> parts;
         for (auto [i, j] : pairs_of(e, c)) {
           if (c.link.variables()[i].categories != c.link.variables()[j].categories)
             fail(e, "variables need the same number of categories");
           parts.push_back(marginal_homogeneity(c.link, scalar_epsilon(e, c), i, j));
         }
         return per_stratum(e, c, std::move(parts));
       }},
      {{"stochastic_order", "inequality", "every logit of the second variable >= the matching logit of the first"},
       [](const Entry& e, const Context& c) {
         std::vector<ConstraintSet> parts;
         for (auto [i, j] : pairs_of(e, c)) {
           if (c.link.variables()[i].categories != c.link.variables()[j].categories)
             fail(e, "variables need the same number of categories");
           parts.push_back(stochastic_order(c.link, i, j));
         }
         return per_stratum(e, c, std::move(parts));
       }},
      {{"no_high_order", "equality", "interactions among more than \"order\" (default 2) variables about 0"},
       [](const Entry& e, const Context& c) {
         const int order = e.node.value("order", 2);
         if (order < 1) fail(e, "\"order\" must be at least 1");
         return per_stratum(e, c, {zero_higher_interactions(c.link, order, scalar_epsilon(e, c))});
       }},
      {{"equal_association", "equality", "log-odds ratios of a pair about equal across consecutive strata"},
       [](const Entry& e, const Context& c) {
         require_strata(e, c);
         std::vector<ConstraintSet> parts;
         for (auto [i, j] : pairs_of(e, c))
           parts.push_back(equal_association(c.link, c.strata, scalar_epsilon(e, c), i, j));
         return compose(std::span<const ConstraintSet>(parts));
       }},
      {{"association_trend", "inequality", "log-odds ratios of a pair increase (or decrease) across strata"},
       [](const Entry& e, const Context& c) {
         require_strata(e, c);
         const auto dir = direction_of(e);
         std::vector<ConstraintSet> parts;
         for (auto [i, j] : pairs_of(e, c)) parts.push_back(association_trend(c.link, c.strata, dir, i, j));
         return compose(std::span<const ConstraintSet>(parts));
       }},
      {{"marginal_trend", "inequality",
        "marginal distribution of a variable increases (or decreases) across strata, signed by logit type"},
       [](const Entry& e, const Context& c) {
         require_strata(e, c);
         const auto dir = direction_of(e);
         std::vector<ConstraintSet> parts;
         for (auto v : singles_of(e, c)) parts.push_back(marginal_trend(c.link, v, c.strata, dir));
         return compose(std::span<const ConstraintSet>(parts));
       }},
      {{"equal_marginals", "equality", "logits of a variable about equal across strata"},
       [](const Entry& e, const Context& c) {
         require_strata(e, c);
         std::vector<ConstraintSet> parts;
         for (auto v : singles_of(e, c)) parts.push_back(equal_marginals(c.link, c.strata, scalar_epsilon(e, c), v));
         return compose(std::span<const ConstraintSet>(parts));
       }},
      {{"parallel_logits", "equality",
        "constant shift of univariate logits between consecutive variables (\"across\": \"variables\") or strata"},
       [](const Entry& e, const Context& c) {
         const auto across = e.node.value("across", std::string("variables"));
         if (across == "variables") {
           for (std::size_t v = 0; v + 1 < q_of(c); ++v)
             if (c.link.variables()[v].categories != c.link.variables()[v + 1].categories)
               fail(e, "all variables need the same number of categories");
           return per_stratum(e, c, {parallel_logits(c.link, scalar_epsilon(e, c))});
         }
         if (across == "strata") {
           require_strata(e, c);
           return parallel_logits_across_strata(c.link, c.strata, scalar_epsilon(e, c));
         }
         fail(e, "\"across\" must be \"variables\" or \"strata\"");
       }},
  };
  return r;
}

std::vector<LogitType> parse_types(const json& doc, std::size_t q) {
  if (!doc.contains("logit_types")) throw ValidationError("model: missing \"logit_types\"");
  const auto& v = doc.at("logit_types");
  std::vector<LogitType> out;
  try {
    if (v.is_string()) {
      out.assign(q, parse_logit_type(v.get<std::string>()));
    } else if (v.is_array()) {
      if (v.size() != q)
        throw ValidationError("model: \"logit_types\" has " + std::to_string(v.size()) + " entries for " +
                              std::to_string(q) + " variables");
      for (const auto& t : v) out.push_back(parse_logit_type(t.get<std::string>()));
    } else {
      throw ValidationError("model: \"logit_types\" must be a string or an array of strings");
    }
  } catch (const DomainError& err) {
    throw ValidationError(std::string("model: ") + err.what());
  } catch (const json::exception& err) {
    throw ValidationError(std::string("model: ") + err.what());
  }
  return out;
}

void apply_epsilon_vector(const Entry& e, ConstraintSet& cs) {
  if (!e.node.contains("epsilon") || !e.node.at("epsilon").is_array()) return;
  const auto& v = e.node.at("epsilon");
  if (v.size() != cs.equality_rows())
    fail(e, "\"epsilon\" has " + std::to_string(v.size()) + " entries for " + std::to_string(cs.equality_rows()) +
                " equality rows");
  Eigen::VectorXd eps(static_cast<Eigen::Index>(v.size()));
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (!v[k].is_number() || !(v[k].get<double>() > 0.0)) fail(e, "\"epsilon\" entries must be positive numbers");
    eps(static_cast<Eigen::Index>(k)) = v[k].get<double>();
  }
  cs.epsilon = std::move(eps);
}

}  // namespace

const std::vector<ConstraintInfo>& registered_constraints() {
  static const std::vector<ConstraintInfo> infos = [] {
    std::vector<ConstraintInfo> out;
    for (const auto& r : registry()) out.push_back(r.info);
    return out;
  }();
  return infos;
}

ModelSpec parse_model(std::string_view json_text, std::span<const int> dims, std::size_t strata) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& err) {
    throw ValidationError(std::string("model: invalid JSON: ") + err.what());
  }
  if (!doc.is_object()) throw ValidationError("model: top level must be an object");
  const auto schema = doc.value("schema", std::string(kModelSchema));
  if (schema != kModelSchema)
    throw ValidationError("model: unsupported schema \"" + schema + "\", expected \"" + std::string(kModelSchema) + "\"");
  if (strata == 0) throw ValidationError("model: at least one stratum required");

  const auto name = doc.value("name", std::string("model"));
  const auto types = parse_types(doc, dims.size());
  std::vector<VariableSpec> vars;
  for (std::size_t i = 0; i < dims.size(); ++i) vars.push_back({"A" + std::to_string(i + 1), dims[i], types[i]});
  LinkMatrices link = build_link(std::move(vars));

  double epsilon = 0.1;
  if (doc.contains("epsilon")) {
    if (!doc.at("epsilon").is_number() || !(doc.at("epsilon").get<double>() > 0.0))
      throw ValidationError("model '" + name + "': \"epsilon\" must be a positive number");
    epsilon = doc.at("epsilon").get<double>();
  }
  const Context ctx{link, strata, epsilon};

  std::vector<ConstraintSet> parts;
  if (doc.contains("constraints")) {
    const auto& list = doc.at("constraints");
    if (!list.is_array()) throw ValidationError("model '" + name + "': \"constraints\" must be an array");
    for (std::size_t k = 0; k < list.size(); ++k) {
      const auto& node = list[k];
      const std::string where = "model '" + name + "', constraint #" + std::to_string(k + 1);
      if (!node.is_object() || !node.contains("type") || !node.at("type").is_string())
        throw ValidationError(where + ": needs a string \"type\"");
      const Entry entry{node.at("type").get<std::string>(), node, where};
      const auto it = std::find_if(registry().begin(), registry().end(),
                                   [&](const Registered& r) { return r.info.type == entry.type; });
      if (it == registry().end()) {
        std::string known;
        for (const auto& r : registry()) known += (known.empty() ? "" : ", ") + r.info.type;
        throw ValidationError(where + ": unknown type \"" + entry.type + "\" (known: " + known + ")");
      }
      try {
        ConstraintSet cs = it->build(entry, ctx);
        apply_epsilon_vector(entry, cs);
        parts.push_back(std::move(cs));
      } catch (const ValidationError&) {
        throw;
      } catch (const json::exception& err) {
        throw ValidationError(where + " (" + entry.type + "): " + err.what());
      } catch (const std::logic_error& err) {
        throw ValidationError(where + " (" + entry.type + "): " + err.what());
      }
    }
  }
  ConstraintSet all = parts.empty() ? ConstraintSet::empty(link.eta_size() * strata)
                                    : compose(std::span<const ConstraintSet>(parts));
  return ModelSpec(name, std::move(link), strata, std::move(all), doc.value("notes", std::string()));
}

ModelSpec load_model(const std::filesystem::path& path, std::span<const int> dims, std::size_t strata) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open model file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_model(ss.str(), dims, strata);
  } catch (const ValidationError& err) {
    throw ValidationError(path.string() + ": " + err.what());
  }
}

}  // namespace encompass
