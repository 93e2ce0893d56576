#include "encompass/serialize.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

#include "encompass/error.hpp"

namespace encompass {

namespace {

using ojson = nlohmann::ordered_json;

ojson number(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return nullptr;
  return x > 0 ? "inf" : "-inf";
}

ojson vec(const Eigen::VectorXd& v) {
  ojson out = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number(v(i)));
  return out;
}

ojson vec(const std::vector<double>& v) {
  ojson out = ojson::array();
  for (double x : v) out.push_back(number(x));
  return out;
}

ojson fit_json(const FitResult& f) {
  ojson j;
  j["converged"] = f.converged;
  j["outer_iterations"] = f.outer_iterations;
  j["kkt_residual"] = number(f.kkt_residual);
  j["max_violation"] = number(f.max_violation);
  j["loglik"] = number(f.loglik);
  j["objective"] = number(f.objective);
  j["smoothing"] = number(f.smoothing);
  j["eta_hat"] = vec(f.eta_hat);
  ojson pis = ojson::array();
  for (const auto& p : f.pi_hat) pis.push_back(vec(p));
  j["pi_hat"] = pis;
  j["messages"] = f.messages;
  return j;
}

ojson estimate_json(const ProportionEstimate& e) {
  ojson j;
  j["route"] = std::string(to_string(e.route));
  j["value"] = number(e.value);
  j["log_value"] = number(e.log_value);
  j["n_draws"] = e.n_draws;
  j["accepted"] = e.accepted;
  j["ess"] = number(e.ess);
  j["se"] = number(e.se);
  j["rel_se"] = number(e.rel_se);
  j["alpha"] = number(e.alpha);
  j["max_abs_log_weight"] = number(e.max_abs_log_weight);
  j["warnings"] = e.warnings;
  return j;
}

ojson settings_json(const RunSettings& s) {
  ojson j;
  j["seed"] = s.seed;
  j["n_draws"] = s.n_draws;
  j["pilot_n"] = s.pilot_n;
  j["replicates"] = s.replicates;
  j["alpha_grid"] = vec(s.alpha_grid);
  j["direct_threshold"] = number(s.direct_threshold);
  j["min_acceptance"] = number(s.min_acceptance);
  j["route"] = std::string(to_string(s.route));
  j["min_stage_ess"] = number(s.min_stage_ess);
  j["chunk_size"] = s.chunk_size;
  ojson sch;
  sch["epsilon_start"] = s.schedule.epsilon_start ? number(*s.schedule.epsilon_start) : ojson("model");
  sch["b"] = number(s.schedule.b);
  sch["stop_tol"] = number(s.schedule.stop_tol);
  sch["max_stages"] = s.schedule.max_stages;
  j["schedule"] = sch;
  ojson fit;
  fit["smoothing"] = number(s.fit.smoothing);
  fit["kkt_tol"] = number(s.fit.kkt_tol);
  fit["feas_tol"] = number(s.fit.feas_tol);
  fit["max_outer"] = s.fit.max_outer;
  fit["max_inner"] = s.fit.max_inner;
  fit["rho0"] = number(s.fit.rho0);
  j["fit"] = fit;
  return j;
}

ojson plan_json(const SidePlan& p) {
  ojson j;
  j["side"] = std::string(to_string(p.side));
  j["route"] = std::string(to_string(p.route));
  j["pilot_acceptance"] = number(p.pilot_acceptance);
  j["alpha"] = number(p.alpha);
  j["center"] = p.center;
  ojson trials = ojson::array();
  for (const auto& t : p.tuning) {
    ojson tj;
    tj["alpha"] = number(t.alpha);
    tj["acceptance"] = number(t.acceptance);
    tj["ess"] = number(t.ess);
    trials.push_back(tj);
  }
  j["tuning"] = trials;
  j["notes"] = p.notes;
  return j;
}

ojson bf_json(const BFEstimate& bf) {
  ojson j;
  j["model"] = bf.model;
  j["route"] = std::string(to_string(bf.route));
  j["log_base"] = "e";
  j["log_bf"] = number(bf.log_bf);
  j["mean"] = number(bf.mean);
  j["sd"] = number(bf.sd);
  j["replicates"] = vec(bf.replicates);
  j["kappa"] = number(bf.kappa);
  if (bf.route == Route::about_equality) j["final_epsilon"] = number(bf.final_epsilon);
  j["prior_plan"] = plan_json(bf.prior_plan);
  j["posterior_plan"] = plan_json(bf.posterior_plan);
  ojson runs = ojson::array();
  for (const auto& r : bf.runs) {
    ojson rj;
    rj["index"] = r.index;
    rj["log_bf"] = number(r.log_bf);
    rj["prior"] = estimate_json(r.prior);
    rj["posterior"] = estimate_json(r.posterior);
    if (!r.stages.empty()) {
      ojson stages = ojson::array();
      for (const auto& s : r.stages) {
        ojson sj;
        sj["stage"] = s.stage;
        sj["epsilon_scale"] = number(s.epsilon_scale);
        sj["epsilon"] = number(s.epsilon);
        sj["log_prior"] = number(s.log_prior);
        sj["log_posterior"] = number(s.log_posterior);
        sj["prior_ess"] = number(s.prior_ess);
        sj["posterior_ess"] = number(s.posterior_ess);
        sj["log_factor"] = number(s.log_factor);
        stages.push_back(sj);
      }
      rj["stages"] = stages;
      rj["truncated"] = r.truncated;
    }
    runs.push_back(rj);
  }
  j["runs"] = runs;
  j["settings"] = settings_json(bf.settings);
  j["warnings"] = bf.warnings;
  return j;
}

template <typename T>
T get_as(const nlohmann::json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("settings: \"" + key + "\" has the wrong type");
  }
}

void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& known, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.count(it.key())) throw ValidationError(where + ": unknown key \"" + it.key() + "\"");
}

}  // namespace

std::string to_json(const FitResult& fit, int indent) { return fit_json(fit).dump(indent); }
std::string to_json(const ProportionEstimate& e, int indent) { return estimate_json(e).dump(indent); }
std::string to_json(const RunSettings& s, int indent) { return settings_json(s).dump(indent); }
std::string to_json(const BFEstimate& bf, int indent) { return bf_json(bf).dump(indent); }

std::string to_json(const PosteriorSample& ps, int indent) {
  ojson j;
  j["model"] = ps.model;
  j["n_draws"] = ps.n_draws;
  j["accepted"] = ps.accepted;
  j["acceptance"] = number(ps.acceptance);
  j["se"] = number(ps.se);
  ojson pis = ojson::array();
  for (const auto& p : ps.mean_pi) pis.push_back(vec(p));
  j["mean_pi"] = pis;
  j["eta_mean"] = vec(ps.eta_mean);
  j["eta_lower_2.5"] = vec(ps.eta_lower);
  j["eta_upper_97.5"] = vec(ps.eta_upper);
  j["quantile_draws"] = ps.quantile_draws;
  j["mean_satisfies"] = ps.mean_satisfies;
  j["warnings"] = ps.warnings;
  return j.dump(indent);
}

RunSettings parse_run_settings(std::string_view text, RunSettings s) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& err) {
    throw ValidationError(std::string("settings: invalid JSON: ") + err.what());
  }
  if (!doc.is_object()) throw ValidationError("settings: expected an object");
  reject_unknown(doc,
                 {"seed", "n_draws", "pilot_n", "replicates", "alpha_grid", "direct_threshold", "min_acceptance",
                  "route", "min_stage_ess", "chunk_size", "threads", "schedule", "fit"},
                 "settings");
  if (doc.contains("seed")) s.seed = get_as<std::uint64_t>(doc["seed"], "seed");
  if (doc.contains("n_draws")) s.n_draws = get_as<std::size_t>(doc["n_draws"], "n_draws");
  if (doc.contains("pilot_n")) s.pilot_n = get_as<std::size_t>(doc["pilot_n"], "pilot_n");
  if (doc.contains("replicates")) s.replicates = get_as<std::size_t>(doc["replicates"], "replicates");
  if (doc.contains("alpha_grid")) s.alpha_grid = get_as<std::vector<double>>(doc["alpha_grid"], "alpha_grid");
  if (doc.contains("direct_threshold")) s.direct_threshold = get_as<double>(doc["direct_threshold"], "direct_threshold");
  if (doc.contains("min_acceptance")) s.min_acceptance = get_as<double>(doc["min_acceptance"], "min_acceptance");
  if (doc.contains("route")) {
    try {
      s.route = parse_route_choice(get_as<std::string>(doc["route"], "route"));
    } catch (const DomainError& err) {
      throw ValidationError(std::string("settings: ") + err.what());
    }
  }
  if (doc.contains("min_stage_ess")) s.min_stage_ess = get_as<double>(doc["min_stage_ess"], "min_stage_ess");
  if (doc.contains("chunk_size")) s.chunk_size = get_as<std::size_t>(doc["chunk_size"], "chunk_size");
  if (doc.contains("threads")) s.threads = get_as<unsigned>(doc["threads"], "threads");
  if (doc.contains("schedule")) {
    const auto& sch = doc["schedule"];
    if (!sch.is_object()) throw ValidationError("settings: \"schedule\" must be an object");
    reject_unknown(sch, {"epsilon_start", "b", "stop_tol", "max_stages"}, "settings.schedule");
    if (sch.contains("epsilon_start")) {
      if (sch["epsilon_start"].is_null() || sch["epsilon_start"] == "model")
        s.schedule.epsilon_start.reset();
      else
        s.schedule.epsilon_start = get_as<double>(sch["epsilon_start"], "schedule.epsilon_start");
    }
    if (sch.contains("b")) s.schedule.b = get_as<double>(sch["b"], "schedule.b");
    if (sch.contains("stop_tol")) s.schedule.stop_tol = get_as<double>(sch["stop_tol"], "schedule.stop_tol");
    if (sch.contains("max_stages")) s.schedule.max_stages = get_as<int>(sch["max_stages"], "schedule.max_stages");
  }
  if (doc.contains("fit")) {
    const auto& f = doc["fit"];
    if (!f.is_object()) throw ValidationError("settings: \"fit\" must be an object");
    reject_unknown(f, {"smoothing", "kkt_tol", "feas_tol", "max_outer", "max_inner", "rho0"}, "settings.fit");
    if (f.contains("smoothing")) s.fit.smoothing = get_as<double>(f["smoothing"], "fit.smoothing");
    if (f.contains("kkt_tol")) s.fit.kkt_tol = get_as<double>(f["kkt_tol"], "fit.kkt_tol");
    if (f.contains("feas_tol")) s.fit.feas_tol = get_as<double>(f["feas_tol"], "fit.feas_tol");
    if (f.contains("max_outer")) s.fit.max_outer = get_as<int>(f["max_outer"], "fit.max_outer");
    if (f.contains("max_inner")) s.fit.max_inner = get_as<int>(f["max_inner"], "fit.max_inner");
    if (f.contains("rho0")) s.fit.rho0 = get_as<double>(f["rho0"], "fit.rho0");
  }
  try {
    s.check();
  } catch (const DomainError& err) {
    throw ValidationError(std::string("settings: ") + err.what());
  }
  return s;
}

}  // namespace encompass
