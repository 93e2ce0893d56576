#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "encompass/error.hpp"
#include "encompass/fit.hpp"
#include "encompass/fixtures.hpp"
#include "encompass/model_io.hpp"
#include "encompass/serialize.hpp"

namespace encompass::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string shape_of(const StratifiedTable& t) {
  std::string s;
  for (std::size_t i = 0; i < t.dims().size(); ++i) s += (i ? "x" : "") + std::to_string(t.dims()[i]);
  if (t.strata_count() > 1) s += " x " + std::to_string(t.strata_count()) + " strata";
  return s;
}

ojson number(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return nullptr;
  return x > 0 ? "inf" : "-inf";
}

std::string fmt(double x, int prec = 3) {
  if (std::isnan(x)) return "-";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << x;
  return s.str();
}

std::string fmt_g(double x) {
  std::ostringstream s;
  s << std::setprecision(6) << x;
  return s.str();
}

// ---------------------------------------------------------------------------
// Options shared by the estimation commands.

struct CommonOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> draws;
  std::optional<std::size_t> pilot;
  std::optional<std::size_t> replicates;
  std::optional<std::string> route;
  std::optional<unsigned> threads;
  std::string reference;
  std::string log_base = "e";
  std::string out_dir;
  std::string format = "text";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--draws", o.draws, "Main draws per side")->check(CLI::PositiveNumber);
  cmd->add_option("--pilot", o.pilot, "Pilot draws for routing and alpha tuning")->check(CLI::PositiveNumber);
  cmd->add_option("--replicates", o.replicates, "Independent replicates per Bayes factor")->check(CLI::PositiveNumber);
  cmd->add_option("--route", o.route, "Sampling route")->check(CLI::IsMember({"auto", "direct", "importance"}));
  cmd->add_option("--threads", o.threads, "Worker threads (0 = all cores); results do not depend on it");
  cmd->add_option("--reference", o.reference, "Reference model for pairwise log Bayes factors");
  cmd->add_option("--log-base", o.log_base, "Base of reported logarithms")->check(CLI::IsMember({"e", "10"}));
  cmd->add_option("--out", o.out_dir, "Also write the report into this directory");
  cmd->add_option("--format", o.format, "Report format")->check(CLI::IsMember({"text", "json", "csv"}));
}

void apply_common(const CommonOptions& o, RunSettings& s) {
  if (o.seed) s.seed = *o.seed;
  if (o.draws) s.n_draws = *o.draws;
  if (o.pilot) s.pilot_n = *o.pilot;
  if (o.replicates) s.replicates = *o.replicates;
  if (o.route) s.route = parse_route_choice(*o.route);
  if (o.threads) s.threads = *o.threads;
}

double log_scale(const std::string& base) { return base == "10" ? 1.0 / std::log(10.0) : 1.0; }

void emit(const std::string& text, const CommonOptions& o, const std::string& stem, std::ostream& out) {
  out << text;
  if (o.out_dir.empty()) return;
  fs::create_directories(o.out_dir);
  const std::string ext = o.format == "json" ? ".json" : o.format == "csv" ? ".csv" : ".txt";
  std::ofstream f(fs::path(o.out_dir) / (stem + ext));
  if (!f) throw ValidationError("cannot write into " + o.out_dir);
  f << text;
}

// ---------------------------------------------------------------------------
// Bayes factor reports.

struct ModelResult {
  const ModelRef* ref = nullptr;
  std::optional<BFEstimate> bf;
  std::string status = "ok";
  std::string message;
};

struct Report {
  const RunManifest* manifest = nullptr;
  double kappa = 1.0;
  std::string reference;
  std::string log_base;
  RunSettings settings;
  std::vector<ModelResult> results;
};

std::optional<double> log_bf_of(const Report& r, const std::string& name) {
  if (name == "M1") return 0.0;
  for (const auto& m : r.results)
    if (m.ref->name == name) return m.bf ? std::optional<double>(m.bf->log_bf) : std::nullopt;
  return std::nullopt;
}

std::string reference_for(const Report& r, const ModelResult& m) {
  return !m.ref->reference.empty() && r.reference.empty() ? m.ref->reference
         : !r.reference.empty()                            ? r.reference
                                                           : r.manifest->reference;
}

std::vector<std::string> ranking(const Report& r) {
  std::vector<std::pair<double, std::string>> rows{{0.0, "M1"}};
  for (const auto& m : r.results)
    if (m.bf && m.ref->name != "M1") rows.emplace_back(m.bf->log_bf, m.ref->name);
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::string> out;
  for (const auto& [v, name] : rows) out.push_back(name);
  return out;
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

std::string settings_line(const RunSettings& s) {
  std::ostringstream o;
  o << "seed=" << s.seed << " draws=" << s.n_draws << " pilot=" << s.pilot_n << " replicates=" << s.replicates
    << " route=" << to_string(s.route) << " direct_threshold=" << fmt_g(s.direct_threshold)
    << " min_acceptance=" << fmt_g(s.min_acceptance) << " chunk=" << s.chunk_size << "\n"
    << "alpha grid: [";
  for (std::size_t i = 0; i < s.alpha_grid.size(); ++i) o << (i ? ", " : "") << fmt_g(s.alpha_grid[i]);
  o << "]\n"
    << "epsilon schedule: start="
    << (s.schedule.epsilon_start ? fmt_g(*s.schedule.epsilon_start) : std::string("model"))
    << " b=" << fmt_g(s.schedule.b) << " stop_tol=" << fmt_g(s.schedule.stop_tol)
    << " max_stages=" << s.schedule.max_stages << " min_stage_ess=" << fmt_g(s.min_stage_ess) << "\n"
    << "fit: smoothing=" << fmt_g(s.fit.smoothing) << " kkt_tol=" << fmt_g(s.fit.kkt_tol)
    << " feas_tol=" << fmt_g(s.fit.feas_tol) << " max_outer=" << s.fit.max_outer
    << " max_inner=" << s.fit.max_inner << " rho0=" << fmt_g(s.fit.rho0) << "\n";
  return o.str();
}

void text_report(const Report& r, std::ostream& o) {
  const double k = log_scale(r.log_base);
  const auto& man = *r.manifest;
  o << "manifest: " << man.name << "\n"
    << "dataset: " << man.dataset_ref << " (" << shape_of(man.table) << ", n = " << man.table.total() << ")\n"
    << "prior: D(" << fmt_g(r.kappa) << " * 1_r) per stratum\n"
    << "log base: " << r.log_base << "\n"
    << settings_line(r.settings) << "\n";
  o << std::left << std::setw(8) << "model" << std::setw(16) << "route" << std::right << std::setw(12) << "log B_k1"
    << std::setw(9) << "sd" << "  " << std::left << std::setw(6) << "ref" << std::right << std::setw(12)
    << "log B_k,ref" << "  " << std::left << std::setw(24) << "evidence" << std::setw(16) << "alpha pri/post"
    << std::setw(10) << "eps" << "status\n";
  for (const auto& m : r.results) {
    const std::string ref = reference_for(r, m);
    o << std::left << std::setw(8) << m.ref->name;
    if (!m.bf) {
      o << std::setw(16) << "-" << std::right << std::setw(12) << "-" << std::setw(9) << "-" << "  " << std::left
        << std::setw(6) << ref << std::right << std::setw(12) << "-" << "  " << std::left << std::setw(24) << "-"
        << std::setw(16) << "-" << std::setw(10) << "-" << m.status << ": " << m.message << "\n";
      continue;
    }
    const auto& bf = *m.bf;
    const auto ref_value = log_bf_of(r, ref);
    const double vs_ref = ref_value ? bf.log_bf - *ref_value : std::numeric_limits<double>::quiet_NaN();
    std::string evidence = "-";
    if (ref_value) {
      evidence = std::string(to_string(jeffreys_label(vs_ref))) + (vs_ref >= 0 ? " for " : " against ") + m.ref->name;
    }
    auto alpha = [](const SidePlan& p) { return p.route == Route::importance ? fmt_g(p.alpha) : std::string("d"); };
    o << std::setw(16) << to_string(bf.route) << std::right << std::setw(12) << fmt(bf.log_bf * k) << std::setw(9)
      << fmt(bf.sd * k) << "  " << std::left << std::setw(6) << ref << std::right << std::setw(12) << fmt(vs_ref * k)
      << "  " << std::left << std::setw(24) << evidence << std::setw(16)
      << alpha(bf.prior_plan) + "/" + alpha(bf.posterior_plan) << std::setw(10)
      << (bf.route == Route::about_equality ? fmt_g(bf.final_epsilon) : std::string("-")) << m.status << "\n";
  }
  o << "\nranking (log B_k1): " << join(ranking(r), " > ") << "\n";
  bool any = false;
  for (const auto& m : r.results) {
    if (!m.bf) continue;
    for (const auto& w : m.bf->warnings) {
      if (!any) o << "\nwarnings:\n";
      any = true;
      o << "  " << m.ref->name << ": " << w << "\n";
    }
  }
}

ojson json_report(const Report& r, const std::string& command) {
  const double k = log_scale(r.log_base);
  const auto& man = *r.manifest;
  ojson j;
  j["schema"] = std::string(kReportSchema);
  j["command"] = command;
  j["manifest"] = man.name;
  ojson ds;
  ds["ref"] = man.dataset_ref;
  ds["dims"] = man.table.dims();
  ds["strata"] = man.table.strata();
  ds["n"] = man.table.total();
  j["dataset"] = ds;
  j["prior"] = {{"kappa", number(r.kappa)}};
  j["log_base"] = r.log_base;
  j["settings"] = ojson::parse(to_json(r.settings));
  ojson models = ojson::array();
  for (const auto& m : r.results) {
    ojson mj;
    const std::string ref = reference_for(r, m);
    mj["model"] = m.ref->name;
    mj["source"] = m.ref->source;
    mj["equality_rows"] = m.ref->spec.constraints().equality_rows();
    mj["inequality_rows"] = m.ref->spec.constraints().inequality_rows();
    mj["status"] = m.status;
    if (!m.message.empty()) mj["message"] = m.message;
    mj["reference"] = ref;
    if (m.bf) {
      const auto ref_value = log_bf_of(r, ref);
      mj["log_bf"] = number(m.bf->log_bf * k);
      mj["sd"] = number(m.bf->sd * k);
      if (ref_value) {
        const double vs = m.bf->log_bf - *ref_value;
        mj["log_bf_vs_reference"] = number(vs * k);
        mj["evidence"] = std::string(to_string(jeffreys_label(vs)));
        mj["favours"] = vs >= 0 ? m.ref->name : ref;
      } else {
        mj["log_bf_vs_reference"] = nullptr;
      }
      mj["estimate"] = ojson::parse(to_json(*m.bf));
    }
    models.push_back(mj);
  }
  j["models"] = models;
  j["ranking"] = ranking(r);
  return j;
}

void csv_rows(const Report& r, std::ostream& o) {
  const double k = log_scale(r.log_base);
  for (const auto& m : r.results) {
    const std::string ref = reference_for(r, m);
    o << fmt_g(r.kappa) << "," << m.ref->name << ",";
    if (m.bf) {
      const auto ref_value = log_bf_of(r, ref);
      o << to_string(m.bf->route) << "," << std::setprecision(10) << m.bf->log_bf * k << "," << m.bf->sd * k << ","
        << ref << ",";
      if (ref_value) o << (m.bf->log_bf - *ref_value) * k << "," << to_string(jeffreys_label(m.bf->log_bf - *ref_value));
      else o << ",";
      o << "," << m.bf->replicates.size() << "," << m.status << "\n";
    } else {
      o << ",,," << ref << ",,,," << m.status << "\n";
    }
  }
}

Report run_report(const RunManifest& man, double kappa, const RunSettings& settings, const CommonOptions& o) {
  Report r;
  r.manifest = &man;
  r.kappa = kappa;
  r.reference = o.reference;
  r.log_base = o.log_base;
  r.settings = settings;
  const auto prior = PriorSpec::uniform(man.table.cells(), man.table.strata_count(), kappa);
  for (const auto& ref : man.models) {
    ModelResult res;
    res.ref = &ref;
    try {
      res.bf = bayes_factor(ref.spec, man.table, prior, settings);
    } catch (const UnboundedEstimateError& e) {
      res.status = "unbounded (" + e.side() + " side)";
      res.message = e.what();
    } catch (const InversionError& e) {
      res.status = "failed";
      res.message = e.what();
    } catch (const TuningError& e) {
      res.status = "failed";
      res.message = e.what();
    }
    r.results.push_back(std::move(res));
  }
  return r;
}

bool all_ok(const Report& r) {
  return std::all_of(r.results.begin(), r.results.end(), [](const ModelResult& m) { return m.bf.has_value(); });
}

RunSettings effective_settings(const RunManifest& man, const CommonOptions& o) {
  RunSettings s = man.settings;
  apply_common(o, s);
  s.check();
  return s;
}

int cmd_bf(const std::string& manifest_path, const CommonOptions& o, std::ostream& out) {
  const RunManifest man = load_manifest(manifest_path);
  if (!o.reference.empty() && o.reference != "M1" &&
      std::none_of(man.models.begin(), man.models.end(), [&](const ModelRef& m) { return m.name == o.reference; }))
    throw ValidationError("--reference: no model named '" + o.reference + "' in the manifest");
  const RunSettings s = effective_settings(man, o);
  const Report r = run_report(man, man.kappa, s, o);
  std::ostringstream text;
  if (o.format == "json") {
    text << json_report(r, "bf").dump(2) << "\n";
  } else if (o.format == "csv") {
    text << "kappa,model,route,log_bf,sd,reference,log_bf_vs_reference,evidence,replicates,status\n";
    csv_rows(r, text);
  } else {
    text_report(r, text);
  }
  emit(text.str(), o, man.name, out);
  return all_ok(r) ? kOk : kEstimationError;
}

int cmd_sensitivity(const std::string& manifest_path, const std::vector<double>& kappas, const CommonOptions& o,
                    std::ostream& out) {
  const RunManifest man = load_manifest(manifest_path);
  const RunSettings s = effective_settings(man, o);
  std::vector<Report> reports;
  for (double kappa : kappas) {
    if (!(kappa > 0.0)) throw ValidationError("--kappa values must be positive");
    reports.push_back(run_report(man, kappa, s, o));
  }
  std::vector<std::vector<std::string>> ranks;
  for (const auto& r : reports) ranks.push_back(ranking(r));
  const bool stable = std::all_of(ranks.begin(), ranks.end(), [&](const auto& x) { return x == ranks.front(); });

  std::ostringstream text;
  if (o.format == "json") {
    ojson j;
    j["schema"] = std::string(kReportSchema);
    j["command"] = "sensitivity";
    ojson runs = ojson::array();
    for (const auto& r : reports) runs.push_back(json_report(r, "sensitivity"));
    j["runs"] = runs;
    j["ranking_stable"] = stable;
    text << j.dump(2) << "\n";
  } else if (o.format == "csv") {
    text << "kappa,model,route,log_bf,sd,reference,log_bf_vs_reference,evidence,replicates,status\n";
    for (const auto& r : reports) csv_rows(r, text);
  } else {
    for (const auto& r : reports) {
      text << "=== prior concentration kappa = " << fmt_g(r.kappa) << "\n";
      text_report(r, text);
      text << "\n";
    }
    text << "ranking identical across kappa: " << (stable ? "yes" : "no") << "\n";
  }
  emit(text.str(), o, man.name + "_sensitivity", out);
  return std::all_of(reports.begin(), reports.end(), all_ok) ? kOk : kEstimationError;
}

// ---------------------------------------------------------------------------
// fit / posterior / datasets

std::vector<std::string> eta_labels(const LinkMatrices& link, std::size_t strata, const std::vector<std::string>& names) {
  std::vector<std::string> labels;
  for (std::size_t b = 0; b < strata; ++b) {
    for (const auto& blk : link.blocks()) {
      const auto vars = blk.margin.variables();
      std::vector<int> sizes;
      std::string head = vars.size() == 1 ? "logit " : "lor ";
      for (std::size_t i = 0; i < vars.size(); ++i) {
        sizes.push_back(link.variables()[vars[i]].categories - 1);
        head += (i ? ":" : "") + (vars[i] < names.size() ? names[vars[i]] : "A" + std::to_string(vars[i] + 1));
      }
      for (std::size_t e = 0; e < blk.size; ++e) {
        std::size_t rem = e;
        std::vector<std::size_t> idx(sizes.size());
        for (std::size_t i = sizes.size(); i-- > 0;) {
          idx[i] = rem % static_cast<std::size_t>(sizes[i]) + 1;
          rem /= static_cast<std::size_t>(sizes[i]);
        }
        std::string l = head + "[";
        for (std::size_t i = 0; i < idx.size(); ++i) l += (i ? "," : "") + std::to_string(idx[i]);
        l += "]";
        if (strata > 1) l += " @" + std::to_string(b + 1);
        labels.push_back(l);
      }
    }
  }
  return labels;
}

ModelSpec load_model_for(const std::string& path, const StratifiedTable& table) {
  return load_model(path, table.dims(), table.strata_count());
}

int cmd_fit(const std::string& dataset, const std::string& model_path, double smoothing, const std::string& format,
            std::ostream& out) {
  const auto table = resolve_dataset(dataset, fs::current_path());
  const auto model = load_model_for(model_path, table);
  FitOptions opt;
  opt.smoothing = smoothing;
  const auto fit = constrained_mle(table, model, opt);
  if (format == "json") {
    ojson j;
    j["schema"] = std::string(kReportSchema);
    j["command"] = "fit";
    j["dataset"] = dataset;
    j["model"] = model.name();
    j["fit"] = ojson::parse(to_json(fit));
    out << j.dump(2) << "\n";
  } else if (format == "csv") {
    out << "stratum,cell,pi_hat\n";
    for (std::size_t b = 0; b < fit.pi_hat.size(); ++b)
      for (Eigen::Index k = 0; k < fit.pi_hat[b].size(); ++k)
        out << table.strata()[b] << "," << k << "," << std::setprecision(12) << fit.pi_hat[b](k) << "\n";
  } else {
    out << "dataset: " << dataset << " (" << shape_of(table) << ", n = " << table.total() << ")\n"
        << "model: " << model.name() << " (" << model.constraints().equality_rows() << " about-equality rows, "
        << model.constraints().inequality_rows() << " inequality rows)\n"
        << "smoothing: " << fmt_g(smoothing) << "\n"
        << "converged: " << (fit.converged ? "yes" : "no") << " after " << fit.outer_iterations
        << " outer iterations\n"
        << "loglik: " << fmt(fit.loglik, 4) << "  objective: " << fmt(fit.objective, 4) << "\n"
        << "kkt residual: " << fmt_g(fit.kkt_residual) << "  max violation: " << fmt_g(fit.max_violation) << "\n";
    const auto& dims = table.dims();
    const int cols = dims.back();
    for (std::size_t b = 0; b < fit.pi_hat.size(); ++b) {
      out << "\npi_hat, stratum " << table.strata()[b] << ":\n";
      for (Eigen::Index k = 0; k < fit.pi_hat[b].size(); ++k)
        out << std::setw(10) << fmt(fit.pi_hat[b](k), 5) << ((k + 1) % cols == 0 ? "\n" : "");
    }
    const auto labels = eta_labels(model.link(), model.strata(), table.variable_names());
    out << "\neta_hat:\n";
    for (Eigen::Index k = 0; k < fit.eta_hat.size(); ++k)
      out << "  " << std::left << std::setw(28) << labels[static_cast<std::size_t>(k)] << std::right
          << fmt(fit.eta_hat(k), 5) << "\n";
    for (const auto& m : fit.messages) out << "note: " << m << "\n";
  }
  return kOk;
}

int cmd_posterior(const std::string& dataset, const std::string& model_path, double kappa, std::size_t draws,
                  std::uint64_t seed, const std::string& format, std::ostream& out) {
  const auto table = resolve_dataset(dataset, fs::current_path());
  const auto model = load_model_for(model_path, table);
  const auto prior = PriorSpec::uniform(table.cells(), table.strata_count(), kappa);
  const auto ps = posterior_draws_under_model(model, table, prior, draws, seed);
  const auto labels = eta_labels(model.link(), model.strata(), table.variable_names());
  if (format == "json") {
    ojson j;
    j["schema"] = std::string(kReportSchema);
    j["command"] = "posterior";
    j["dataset"] = dataset;
    j["kappa"] = number(kappa);
    j["seed"] = seed;
    j["eta_labels"] = labels;
    j["sample"] = ojson::parse(to_json(ps));
    out << j.dump(2) << "\n";
  } else if (format == "csv") {
    out << "parameter,mean,lower_2.5,upper_97.5\n";
    for (Eigen::Index k = 0; k < ps.eta_mean.size(); ++k)
      out << labels[static_cast<std::size_t>(k)] << "," << std::setprecision(10) << ps.eta_mean(k) << ","
          << ps.eta_lower(k) << "," << ps.eta_upper(k) << "\n";
  } else {
    out << "dataset: " << dataset << " (" << shape_of(table) << ", n = " << table.total() << ")\n"
        << "model: " << model.name() << "\n"
        << "prior: D(" << fmt_g(kappa) << " * 1_r) per stratum  draws: " << draws << "  seed: " << seed << "\n"
        << "accepted: " << ps.accepted << " (" << fmt(100.0 * ps.acceptance, 4) << "%, se " << fmt_g(ps.se) << ")\n";
    if (ps.accepted > 0) {
      out << "summary point satisfies the model: " << (ps.mean_satisfies ? "yes" : "no") << "\n\n"
          << std::left << std::setw(28) << "parameter" << std::right << std::setw(11) << "mean" << std::setw(11)
          << "2.5%" << std::setw(11) << "97.5%" << "\n";
      for (Eigen::Index k = 0; k < ps.eta_mean.size(); ++k)
        out << std::left << std::setw(28) << labels[static_cast<std::size_t>(k)] << std::right << std::setw(11)
            << fmt(ps.eta_mean(k), 4) << std::setw(11) << fmt(ps.eta_lower(k), 4) << std::setw(11)
            << fmt(ps.eta_upper(k), 4) << "\n";
    }
    for (const auto& w : ps.warnings) out << "warning: " << w << "\n";
  }
  return kOk;
}

int cmd_datasets(bool as_json, const std::string& data_dir, std::ostream& out) {
  struct Row {
    std::string name, source, shape, error;
    std::int64_t n = 0;
    std::size_t zero = 0, cells = 0;
  };
  std::vector<Row> rows;
  auto describe = [](const std::string& name, const std::string& source, const StratifiedTable& t) {
    const auto d = validate(t);
    return Row{name, source, shape_of(t), "", d.total, d.zero_cells, d.total_cells};
  };
  for (const auto& name : fixtures::names()) rows.push_back(describe(name, "fixture", fixtures::by_name(name)));
  if (!data_dir.empty()) {
    if (!fs::is_directory(data_dir)) throw ValidationError("--data-dir: " + data_dir + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(data_dir)) {
      const auto ext = e.path().extension();
      if (e.is_regular_file() && (ext == ".csv" || ext == ".json")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      try {
        rows.push_back(describe(f.stem().string(), f.string(), load_table(f)));
      } catch (const std::exception& e) {
        rows.push_back({f.stem().string(), f.string(), "-", e.what()});
      }
    }
  }
  if (as_json) {
    ojson arr = ojson::array();
    for (const auto& r : rows) {
      ojson j;
      j["name"] = r.name;
      j["source"] = r.source;
      if (r.error.empty()) {
        j["shape"] = r.shape;
        j["n"] = r.n;
        j["cells"] = r.cells;
        j["zero_cells"] = r.zero;
      } else {
        j["error"] = r.error;
      }
      arr.push_back(j);
    }
    out << ojson{{"datasets", arr}}.dump(2) << "\n";
  } else {
    out << std::left << std::setw(16) << "name" << std::setw(24) << "shape" << std::right << std::setw(7) << "n"
        << std::setw(13) << "zero cells" << "  source\n";
    for (const auto& r : rows) {
      out << std::left << std::setw(16) << r.name << std::setw(24) << r.shape << std::right << std::setw(7)
          << (r.error.empty() ? std::to_string(r.n) : "-") << std::setw(13)
          << (r.error.empty() ? std::to_string(r.zero) + "/" + std::to_string(r.cells) : "-") << "  " << r.source
          << (r.error.empty() ? "" : "  (error: " + r.error + ")") << "\n";
    }
  }
  return kOk;
}

int cmd_constraints(std::ostream& out) {
  for (const auto& c : registered_constraints())
    out << std::left << std::setw(22) << c.type << std::setw(12) << c.kind << c.summary << "\n";
  return kOk;
}

}  // namespace

StratifiedTable resolve_dataset(const std::string& ref, const fs::path& base_dir) {
  if (fixtures::exists(ref)) return fixtures::by_name(ref);
  fs::path p(ref);
  if (p.is_relative()) p = base_dir / p;
  if (!fs::exists(p)) throw ValidationError("dataset '" + ref + "' is neither a bundled fixture nor an existing file");
  return load_table(p);
}

RunManifest load_manifest(const fs::path& path) {
  const std::string text = read_file(path);
  const fs::path base = path.parent_path();
  const std::string where = path.string();
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(where + ": invalid JSON: " + e.what());
  }
  if (!doc.is_object()) throw ValidationError(where + ": top level must be an object");
  const auto schema = doc.value("schema", std::string(kManifestSchema));
  if (schema != kManifestSchema) throw ValidationError(where + ": unsupported schema \"" + schema + "\"");

  RunManifest man;
  man.name = doc.value("name", path.stem().string());
  try {
    if (!doc.contains("dataset")) throw ValidationError("missing \"dataset\"");
    const auto& ds = doc.at("dataset");
    if (ds.is_string()) {
      man.dataset_ref = ds.get<std::string>();
    } else if (ds.is_object() && ds.contains("fixture")) {
      man.dataset_ref = ds.at("fixture").get<std::string>();
      if (!fixtures::exists(man.dataset_ref)) throw ValidationError("unknown fixture '" + man.dataset_ref + "'");
    } else if (ds.is_object() && ds.contains("path")) {
      man.dataset_ref = ds.at("path").get<std::string>();
    } else {
      throw ValidationError("\"dataset\" must be a fixture name, {\"fixture\": ...} or {\"path\": ...}");
    }
    man.table = resolve_dataset(man.dataset_ref, base);

    if (doc.contains("prior")) {
      const auto& p = doc.at("prior");
      man.kappa = p.is_number() ? p.get<double>() : p.value("kappa", 1.0);
      if (!(man.kappa > 0.0)) throw ValidationError("\"prior\" concentration must be positive");
    }
    man.reference = doc.value("reference", std::string("M1"));
    if (doc.contains("settings")) man.settings = parse_run_settings(doc.at("settings").dump());

    if (!doc.contains("models") || !doc.at("models").is_array() || doc.at("models").empty())
      throw ValidationError("\"models\" must be a non-empty array");
    for (const auto& entry : doc.at("models")) {
      std::string spec_text;
      std::string source;
      if (entry.is_string()) {
        source = entry.get<std::string>();
      } else if (entry.is_object() && entry.contains("spec") && entry.at("spec").is_string()) {
        source = entry.at("spec").get<std::string>();
      } else if (entry.is_object() && entry.contains("spec") && entry.at("spec").is_object()) {
        source = "inline";
        spec_text = entry.at("spec").dump();
      } else {
        throw ValidationError("every model entry needs a \"spec\" path or object");
      }
      if (spec_text.empty()) {
        fs::path sp(source);
        if (sp.is_relative()) sp = base / sp;
        spec_text = read_file(sp);
      }
      ModelSpec spec = parse_model(spec_text, man.table.dims(), man.table.strata_count());
      const std::string name = entry.is_object() ? entry.value("name", spec.name()) : spec.name();
      if (name != spec.name()) spec = spec.with_constraints(spec.constraints(), name);
      const std::string reference = entry.is_object() ? entry.value("reference", std::string()) : std::string();
      for (const auto& m : man.models)
        if (m.name == name) throw ValidationError("duplicate model name '" + name + "'");
      man.models.push_back({name, source, reference, std::move(spec)});
    }
    auto known = [&](const std::string& n) {
      return n == "M1" || std::any_of(man.models.begin(), man.models.end(), [&](const ModelRef& m) { return m.name == n; });
    };
    if (!known(man.reference)) throw ValidationError("reference model '" + man.reference + "' is not in the manifest");
    for (const auto& m : man.models)
      if (!m.reference.empty() && !known(m.reference))
        throw ValidationError("model '" + m.name + "' refers to unknown reference '" + m.reference + "'");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    if (msg.rfind(where, 0) == 0) throw;
    throw ValidationError(where + ": " + msg);
  } catch (const json::exception& e) {
    throw ValidationError(where + ": " + e.what());
  }
  return man;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian model selection for marginal models of contingency tables"};
  app.name("encompass");
  app.require_subcommand(1);
  app.set_version_flag("--version", "encompass 0.3.0");

  bool datasets_json = false;
  std::string data_dir;
  auto* datasets = app.add_subcommand("datasets", "List bundled fixtures and datasets in a directory");
  datasets->add_flag("--json", datasets_json, "Machine-readable listing");
  datasets->add_option("--data-dir", data_dir, "Directory with .csv/.json datasets");

  app.add_subcommand("constraints", "List the named constraints usable in model files");

  CommonOptions bf_opts;
  std::string bf_manifest;
  auto* bf = app.add_subcommand("bf", "Estimate Bayes factors for every model in a manifest");
  bf->add_option("manifest", bf_manifest, "Run manifest (JSON)")->required();
  add_common(bf, bf_opts);

  CommonOptions sens_opts;
  std::string sens_manifest;
  std::vector<double> kappas{0.5, 1.0, 2.0, 5.0};
  auto* sens = app.add_subcommand("sensitivity", "Repeat bf under D(kappa * 1_r) priors");
  sens->add_option("manifest", sens_manifest, "Run manifest (JSON)")->required();
  sens->add_option("--kappa", kappas, "Prior concentrations")->delimiter(',');
  add_common(sens, sens_opts);

  std::string fit_dataset, fit_model, fit_format = "text";
  double smoothing = 0.5;
  auto* fit = app.add_subcommand("fit", "Constrained maximum likelihood fit");
  fit->add_option("--dataset", fit_dataset, "Fixture name or table file")->required();
  fit->add_option("--model", fit_model, "Model file (JSON)")->required();
  fit->add_option("--smoothing", smoothing, "Added to every cell before fitting")->check(CLI::NonNegativeNumber);
  fit->add_option("--format", fit_format, "Report format")->check(CLI::IsMember({"text", "json", "csv"}));

  std::string post_dataset, post_model, post_format = "text";
  double post_kappa = 1.0;
  std::size_t post_draws = 100000;
  std::uint64_t post_seed = RunSettings{}.seed;
  auto* post = app.add_subcommand("posterior", "Summaries of encompassing-posterior draws that satisfy a model");
  post->add_option("--dataset", post_dataset, "Fixture name or table file")->required();
  post->add_option("--model", post_model, "Model file (JSON)")->required();
  post->add_option("--kappa", post_kappa, "Prior concentration")->check(CLI::PositiveNumber);
  post->add_option("--draws", post_draws, "Posterior draws")->check(CLI::PositiveNumber);
  post->add_option("--seed", post_seed, "Seed");
  post->add_option("--format", post_format, "Report format")->check(CLI::IsMember({"text", "json", "csv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*datasets) return cmd_datasets(datasets_json, data_dir, out);
    if (app.got_subcommand("constraints")) return cmd_constraints(out);
    if (*bf) return cmd_bf(bf_manifest, bf_opts, out);
    if (*sens) return cmd_sensitivity(sens_manifest, kappas, sens_opts, out);
    if (*fit) return cmd_fit(fit_dataset, fit_model, smoothing, fit_format, out);
    if (*post) return cmd_posterior(post_dataset, post_model, post_kappa, post_draws, post_seed, post_format, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const UnboundedEstimateError& e) {
    err << "estimation failed: " << e.what() << "\n";
    return kEstimationError;
  } catch (const TuningError& e) {
    err << "estimation failed: " << e.what() << "\n";
    return kEstimationError;
  } catch (const InversionError& e) {
    err << "estimation failed: " << e.what() << "\n";
    return kEstimationError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}

}  // namespace encompass::cli
