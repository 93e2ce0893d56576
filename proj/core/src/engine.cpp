#include "encompass/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>

#include "encompass/error.hpp"

namespace encompass {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum Purpose : std::uint64_t { kPilot = 1, kTune = 2, kMain = 3, kPosteriorDraws = 4 };

std::uint64_t side_id(Side side) { return side == Side::prior ? 1 : 2; }

struct SparseRow {
  std::vector<std::size_t> cols;
  std::vector<double> coef;

  double dot(const double* x) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < cols.size(); ++k) acc += coef[k] * x[cols[k]];
    return acc;
  }
};

struct CompiledConstraints {
  std::vector<SparseRow> ineq;
  std::vector<SparseRow> eq;
  std::vector<double> inv_eps;

  explicit CompiledConstraints(const ConstraintSet& cs) {
    auto compile = [](const Eigen::MatrixXd& m) {
      std::vector<SparseRow> rows(static_cast<std::size_t>(m.rows()));
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
          if (m(i, j) != 0.0) {
            rows[static_cast<std::size_t>(i)].cols.push_back(static_cast<std::size_t>(j));
            rows[static_cast<std::size_t>(i)].coef.push_back(m(i, j));
          }
      return rows;
    };
    ineq = compile(cs.inequality);
    eq = compile(cs.equality);
    for (Eigen::Index i = 0; i < cs.epsilon.size(); ++i) inv_eps.push_back(1.0 / cs.epsilon(i));
  }

  bool inequalities_hold(const double* eta) const {
    for (const auto& row : ineq)
      if (row.dot(eta) < 0.0) return false;
    return true;
  }

  double equality_ratio(const double* eta) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < eq.size(); ++i) worst = std::max(worst, std::abs(eq[i].dot(eta)) * inv_eps[i]);
    return worst;
  }
};

unsigned worker_count(unsigned requested, std::size_t chunks) {
  unsigned n = requested ? requested : std::max(1U, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(chunks, 1)));
}

// Runs fn(chunk, begin, end) for every chunk. Chunks are independent, so the
// outcome does not depend on the number of workers.
void for_each_chunk(std::size_t n, std::size_t chunk_size, unsigned threads,
                    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (chunk_size == 0) throw DomainError("chunk size must be positive");
  const std::size_t chunks = (n + chunk_size - 1) / chunk_size;
  const unsigned workers = worker_count(threads, chunks);
  auto body = [&](std::size_t c) { fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size)); };
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) body(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < chunks && !failed; c = next++) {
        try {
          body(c);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

void check_params(const std::vector<Eigen::VectorXd>& params, const ModelSpec& model, const char* what) {
  if (params.size() != model.strata())
    throw DimensionError(std::string(what) + ": expected " + std::to_string(model.strata()) + " strata, got " +
                         std::to_string(params.size()));
  for (const auto& p : params) {
    if (static_cast<std::size_t>(p.size()) != model.link().cells())
      throw DimensionError(std::string(what) + ": parameter vector has the wrong number of cells");
    if (!(p.array() > 0.0).all() || !p.allFinite())
      throw DomainError(std::string(what) + ": Dirichlet parameters must be positive and finite");
  }
}

std::span<const double> span_of(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

ModelSpec at_start(const ModelSpec& model, const EpsilonSchedule& schedule) {
  if (!schedule.epsilon_start || !model.has_equalities()) return model;
  ConstraintSet cs = model.constraints();
  cs.epsilon.setConstant(*schedule.epsilon_start);
  return model.with_constraints(std::move(cs), model.name());
}

ScanOptions scan_options(const RunSettings& s) { return {s.chunk_size, s.threads}; }

void add_unique(std::vector<std::string>& out, const std::vector<std::string>& more) {
  for (const auto& m : more)
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

SidePlan make_plan(const ModelSpec& model, const StratifiedTable& table, const Target& target,
                   const RunSettings& settings) {
  SidePlan plan;
  plan.side = target.side;
  plan.sampling = target.params;
  const auto opts = scan_options(settings);
  const auto base = derive_seed(settings.seed, {side_id(target.side)});

  if (settings.route == RouteChoice::direct || model.constraints().is_empty()) {
    plan.route = Route::direct;
    plan.pilot_acceptance = std::numeric_limits<double>::quiet_NaN();
    if (model.constraints().is_empty()) plan.pilot_acceptance = 1.0;
    return plan;
  }
  if (settings.route == RouteChoice::automatic) {
    const auto pilot = scan_draws(model, target.params, nullptr, settings.pilot_n, derive_seed(base, {kPilot}), opts);
    const auto est = summarize(pilot, 1.0, Route::direct);
    plan.pilot_acceptance = static_cast<double>(est.accepted) / static_cast<double>(est.n_draws);
    if (plan.pilot_acceptance >= settings.direct_threshold) {
      plan.route = Route::direct;
      return plan;
    }
  } else {
    plan.pilot_acceptance = std::numeric_limits<double>::quiet_NaN();
  }

  const FitResult center = target.side == Side::prior ? prior_center(model, settings.fit)
                                                      : constrained_mle(table, model, settings.fit);
  plan.center = target.side == Side::prior ? "prior_center" : "constrained_mle";
  if (!center.converged) add_unique(plan.notes, center.messages);
  // The grid stops at 50, far below a posterior's concentration for large n.
  auto grid = settings.alpha_grid;
  const double safe = bounded_weight_alpha(center, target);
  if (std::isfinite(safe) && safe > 0.0 && std::find(grid.begin(), grid.end(), safe) == grid.end())
    grid.push_back(safe);
  const auto tuned = tune_alpha(model, target, center, grid, settings.pilot_n,
                                derive_seed(base, {kTune}), settings.min_acceptance, opts);
  plan.route = Route::importance;
  plan.alpha = tuned.alpha;
  plan.tuning = tuned.trials;
  if (!tuned.reached_min_acceptance) {
    std::ostringstream msg;
    msg << to_string(target.side) << " side: no alpha reached " << settings.min_acceptance * 100.0
        << "% pilot acceptance; using the alpha with the highest acceptance";
    plan.notes.push_back(msg.str());
  }
  plan.sampling = ImportanceDensity::centred(center, tuned.alpha, plan.center).params;
  return plan;
}

DrawSummary run_side(const ModelSpec& model, const SidePlan& plan, const Target& target, const RunSettings& settings,
                     std::size_t replicate) {
  const auto seed = derive_seed(settings.seed, {replicate, side_id(plan.side), kMain});
  return scan_draws(model, plan.sampling, plan.route == Route::importance ? &target.params : nullptr,
                    settings.n_draws, seed, scan_options(settings));
}

[[noreturn]] void unbounded(const ModelSpec& model, Side side, const std::string& detail) {
  throw UnboundedEstimateError("model '" + model.name() + "': the " + std::string(to_string(side)) +
                                   " proportion was estimated as zero, so the log Bayes factor is unbounded" +
                                   (detail.empty() ? "" : " (" + detail + ")"),
                               std::string(to_string(side)));
}

SidePlan plan_or_unbounded(const ModelSpec& model, const StratifiedTable& table, const Target& target,
                           const RunSettings& settings) {
  try {
    return make_plan(model, table, target, settings);
  } catch (const TuningError& err) {
    unbounded(model, target.side, err.what());
  }
}

BFEstimate finish(BFEstimate bf) {
  for (const auto& run : bf.runs) bf.replicates.push_back(run.log_bf);
  bf.mean = mean_of(bf.replicates);
  bf.sd = sd_of(bf.replicates, bf.mean);
  bf.log_bf = bf.mean;
  add_unique(bf.warnings, bf.prior_plan.notes);
  add_unique(bf.warnings, bf.posterior_plan.notes);
  for (const auto& run : bf.runs) {
    add_unique(bf.warnings, run.prior.warnings);
    add_unique(bf.warnings, run.posterior.warnings);
  }
  return bf;
}

std::vector<double> quantile_pair(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  auto at = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return {at(0.025), at(0.975)};
}

}  // namespace

std::string_view to_string(Side side) { return side == Side::prior ? "prior" : "posterior"; }

std::string_view to_string(Route route) {
  switch (route) {
    case Route::direct: return "direct";
    case Route::importance: return "importance";
    case Route::about_equality: return "about_equality";
  }
  return "direct";
}

std::string_view to_string(RouteChoice choice) {
  switch (choice) {
    case RouteChoice::automatic: return "auto";
    case RouteChoice::direct: return "direct";
    case RouteChoice::importance: return "importance";
  }
  return "auto";
}

RouteChoice parse_route_choice(std::string_view name) {
  if (name == "auto" || name == "automatic") return RouteChoice::automatic;
  if (name == "direct") return RouteChoice::direct;
  if (name == "importance") return RouteChoice::importance;
  throw DomainError("unknown route '" + std::string(name) + "' (expected auto, direct or importance)");
}

PriorSpec PriorSpec::uniform(std::size_t cells, std::size_t strata, double kappa) {
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw DomainError("prior concentration must be positive");
  return {std::vector<Eigen::VectorXd>(strata, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(cells), kappa))};
}

void PriorSpec::check(std::size_t cells, std::size_t strata) const {
  if (concentration.size() != strata)
    throw DimensionError("prior has " + std::to_string(concentration.size()) + " strata, expected " +
                         std::to_string(strata));
  for (const auto& c : concentration) {
    if (static_cast<std::size_t>(c.size()) != cells) throw DimensionError("prior concentration has the wrong length");
    if (!(c.array() > 0.0).all() || !c.allFinite()) throw DomainError("prior concentration must be positive");
  }
}

double PriorSpec::kappa() const {
  if (concentration.empty() || concentration.front().size() == 0) return std::numeric_limits<double>::quiet_NaN();
  const double k = concentration.front()(0);
  for (const auto& c : concentration)
    if ((c.array() != k).any()) return std::numeric_limits<double>::quiet_NaN();
  return k;
}

Target prior_target(const PriorSpec& prior) { return {Side::prior, prior.concentration}; }

Target posterior_target(const PriorSpec& prior, const StratifiedTable& table) {
  if (prior.concentration.size() != table.strata_count())
    throw DimensionError("prior and table disagree on the number of strata");
  Target t{Side::posterior, prior.concentration};
  for (std::size_t b = 0; b < table.strata_count(); ++b) {
    const auto& counts = table.stratum(b).counts();
    if (counts.size() != static_cast<std::size_t>(t.params[b].size()))
      throw DimensionError("prior and table disagree on the number of cells");
    for (std::size_t k = 0; k < counts.size(); ++k) t.params[b](static_cast<Eigen::Index>(k)) += static_cast<double>(counts[k]);
  }
  return t;
}

ImportanceDensity ImportanceDensity::centred(const FitResult& fit, double alpha, std::string center) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("importance concentration must be positive");
  ImportanceDensity g;
  g.alpha = alpha;
  g.center = std::move(center);
  for (const auto& pi : fit.pi_hat) {
    Eigen::VectorXd p = alpha * pi;
    // Keep every parameter representable after scaling.
    p = p.cwiseMax(std::numeric_limits<double>::min() * 1e10);
    g.params.push_back(std::move(p));
  }
  return g;
}

void EpsilonSchedule::check() const {
  if (!(b > 0.0 && b < 1.0)) throw DomainError("shrink factor b must lie in (0, 1)");
  if (epsilon_start && !(*epsilon_start > 0.0)) throw DomainError("epsilon_start must be positive");
  if (!(stop_tol >= 0.0)) throw DomainError("stop_tol must be non-negative");
  if (max_stages < 1) throw DomainError("max_stages must be at least 1");
}

std::vector<double> RunSettings::default_alpha_grid() {
  std::vector<double> grid;
  const double lo = std::log(0.02);
  const double hi = std::log(50.0);
  for (int i = 0; i < 12; ++i) grid.push_back(std::exp(lo + (hi - lo) * i / 11.0));
  grid.front() = 0.02;
  grid.back() = 50.0;
  for (double extra : {1.0, 20.0})
    if (std::none_of(grid.begin(), grid.end(), [&](double a) { return std::abs(a - extra) < 1e-12; }))
      grid.push_back(extra);
  std::sort(grid.begin(), grid.end());
  return grid;
}

void RunSettings::check() const {
  if (n_draws == 0) throw DomainError("n_draws must be at least 1");
  if (pilot_n == 0) throw DomainError("pilot_n must be at least 1");
  if (replicates == 0) throw DomainError("replicates must be at least 1");
  if (alpha_grid.empty()) throw DomainError("alpha grid must not be empty");
  for (double a : alpha_grid)
    if (!(a > 0.0) || !std::isfinite(a)) throw DomainError("alpha grid entries must be positive and finite");
  if (!(direct_threshold >= 0.0 && direct_threshold <= 1.0)) throw DomainError("direct_threshold must lie in [0, 1]");
  if (!(min_acceptance >= 0.0 && min_acceptance <= 1.0)) throw DomainError("min_acceptance must lie in [0, 1]");
  if (chunk_size == 0) throw DomainError("chunk_size must be positive");
  schedule.check();
}

DrawSummary scan_draws(const ModelSpec& model, const std::vector<Eigen::VectorXd>& sampling,
                       const std::vector<Eigen::VectorXd>* target, std::size_t n, std::uint64_t seed,
                       const ScanOptions& options) {
  check_params(sampling, model, "sampling density");
  if (target) check_params(*target, model, "target density");
  const auto& link = model.link();
  const std::size_t s = model.strata();
  const std::size_t r = link.cells();
  const std::size_t t = link.eta_size();
  const CompiledConstraints cc(model.constraints());

  double log_norm = 0.0;
  std::vector<Eigen::VectorXd> diff;
  if (target) {
    for (std::size_t b = 0; b < s; ++b) {
      log_norm += log_multivariate_beta(span_of(sampling[b])) - log_multivariate_beta(span_of((*target)[b]));
      diff.push_back((*target)[b] - sampling[b]);
    }
  }

  DrawSummary out;
  out.log_weight.assign(n, 0.0);
  out.eq_ratio.assign(n, 0.0);
  out.ineq_ok.assign(n, 0);
  const std::size_t chunks = (n + options.chunk_size - 1) / std::max<std::size_t>(options.chunk_size, 1);
  std::vector<double> chunk_max(chunks, 0.0);

  for_each_chunk(n, options.chunk_size, options.threads, [&](std::size_t c, std::size_t begin, std::size_t end) {
    RandomEngine engine(derive_seed(seed, {c}));
    std::vector<double> lp(r);
    std::vector<double> eta(s * t);
    std::vector<double> scratch;
    double local_max = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      double lw = log_norm;
      for (std::size_t b = 0; b < s; ++b) {
        log_dirichlet_draw(span_of(sampling[b]), lp, engine);
        link.eta_from_log_pi(lp, std::span<double>(eta.data() + b * t, t), scratch);
        if (target) {
          const double* d = diff[b].data();
          for (std::size_t k = 0; k < r; ++k) lw += d[k] * lp[k];
        }
      }
      out.log_weight[i] = lw;
      out.ineq_ok[i] = cc.inequalities_hold(eta.data()) ? 1 : 0;
      out.eq_ratio[i] = cc.equality_ratio(eta.data());
      if (std::isfinite(lw)) local_max = std::max(local_max, std::abs(lw));
    }
    chunk_max[c] = local_max;
  });
  for (double m : chunk_max) out.max_abs_log_weight = std::max(out.max_abs_log_weight, m);
  return out;
}

ProportionEstimate summarize(const DrawSummary& draws, double epsilon_scale, Route route, double alpha) {
  ProportionEstimate est;
  est.n_draws = draws.size();
  est.route = route;
  est.alpha = alpha;
  est.max_abs_log_weight = draws.max_abs_log_weight;
  if (est.n_draws == 0) throw DomainError("cannot estimate a proportion from zero draws");
  const double n = static_cast<double>(est.n_draws);

  double hi = kNegInf;
  for (std::size_t i = 0; i < draws.size(); ++i)
    if (draws.ineq_ok[i] && draws.eq_ratio[i] <= epsilon_scale) {
      ++est.accepted;
      hi = std::max(hi, draws.log_weight[i]);
    }
  if (est.accepted == 0) {
    est.value = 0.0;
    est.log_value = kNegInf;
    est.warnings.push_back("rare event: no draws satisfied the constraints; the proportion is estimated as 0");
    return est;
  }
  if (route == Route::direct) {
    const double p = static_cast<double>(est.accepted) / n;
    est.value = p;
    est.log_value = std::log(p);
    est.ess = static_cast<double>(est.accepted);
    est.se = std::sqrt(p * (1.0 - p) / n);
    est.rel_se = est.se / p;
    return est;
  }
  double s1 = 0.0;
  double s2 = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i)
    if (draws.ineq_ok[i] && draws.eq_ratio[i] <= epsilon_scale) {
      const double w = std::exp(draws.log_weight[i] - hi);
      s1 += w;
      s2 += w * w;
    }
  est.log_value = hi + std::log(s1) - std::log(n);
  est.value = std::exp(est.log_value);
  est.ess = s1 * s1 / s2;
  const double m1 = s1 / n;
  const double m2 = s2 / n;
  const double var = est.n_draws > 1 ? std::max(m2 - m1 * m1, 0.0) * n / (n - 1.0) : 0.0;
  est.rel_se = std::sqrt(var / n) / m1;
  est.se = est.rel_se * est.value;
  if (est.ess < 10.0) {
    std::ostringstream msg;
    msg << "low effective sample size (" << est.ess << ") among accepted importance draws";
    est.warnings.push_back(msg.str());
  }
  return est;
}

DrawSet sample_prior(const PriorSpec& prior, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DomainError("sample size must be at least 1");
  if (prior.concentration.empty()) throw DomainError("prior needs at least one stratum");
  const std::size_t s = prior.concentration.size();
  const std::size_t r = static_cast<std::size_t>(prior.concentration.front().size());
  prior.check(r, s);
  DrawSet set{n, s, r, std::vector<double>(n * s * r)};
  const std::size_t chunk = 4096;
  for_each_chunk(n, chunk, 1, [&](std::size_t c, std::size_t begin, std::size_t end) {
    RandomEngine engine(derive_seed(seed, {c}));
    std::vector<double> lp(r);
    for (std::size_t i = begin; i < end; ++i)
      for (std::size_t b = 0; b < s; ++b) {
        log_dirichlet_draw(span_of(prior.concentration[b]), lp, engine);
        double* dst = set.values.data() + (i * s + b) * r;
        for (std::size_t k = 0; k < r; ++k) dst[k] = std::exp(lp[k]);
      }
  });
  return set;
}

DrawSet sample_posterior(const PriorSpec& prior, const StratifiedTable& table, std::size_t n, std::uint64_t seed) {
  const Target t = posterior_target(prior, table);
  return sample_prior(PriorSpec{t.params}, n, seed);
}

ProportionEstimate estimate_proportion_direct(const DrawSet& draws, const ModelSpec& model) {
  if (draws.n == 0) throw DomainError("cannot estimate a proportion from zero draws");
  if (draws.strata != model.strata() || draws.cells != model.link().cells())
    throw DimensionError("draws do not match the model's link and strata");
  const auto& link = model.link();
  const std::size_t t = link.eta_size();
  const CompiledConstraints cc(model.constraints());
  DrawSummary summary;
  summary.log_weight.assign(draws.n, 0.0);
  summary.eq_ratio.assign(draws.n, 0.0);
  summary.ineq_ok.assign(draws.n, 0);
  std::vector<double> lp(draws.cells);
  std::vector<double> eta(draws.strata * t);
  std::vector<double> scratch;
  for (std::size_t i = 0; i < draws.n; ++i) {
    for (std::size_t b = 0; b < draws.strata; ++b) {
      const auto d = draws.draw(i, b);
      for (std::size_t k = 0; k < draws.cells; ++k) lp[k] = std::log(d[k]);
      link.eta_from_log_pi(lp, std::span<double>(eta.data() + b * t, t), scratch);
    }
    summary.ineq_ok[i] = cc.inequalities_hold(eta.data()) ? 1 : 0;
    summary.eq_ratio[i] = cc.equality_ratio(eta.data());
  }
  return summarize(summary, 1.0, Route::direct);
}

ProportionEstimate importance_estimate(const ModelSpec& model, const Target& target, const ImportanceDensity& g,
                                       std::size_t n, std::uint64_t seed, const ScanOptions& options) {
  if (n == 0) throw DomainError("sample size must be at least 1");
  const auto draws = scan_draws(model, g.params, &target.params, n, seed, options);
  auto est = summarize(draws, 1.0, Route::importance, g.alpha);
  std::size_t light = 0;
  for (std::size_t b = 0; b < g.params.size(); ++b)
    light += static_cast<std::size_t>((g.params[b].array() > target.params[b].array()).count());
  if (light > 0)
    est.warnings.push_back("importance density is lighter-tailed than the target in " + std::to_string(light) +
                           " cells; weights are unbounded there and the standard error may understate the error");
  return est;
}

double bounded_weight_alpha(const FitResult& center, const Target& target) {
  if (center.pi_hat.size() != target.params.size())
    throw DimensionError("bounded_weight_alpha: centre and target have different strata counts");
  double a = std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < center.pi_hat.size(); ++b)
    for (Eigen::Index c = 0; c < center.pi_hat[b].size(); ++c)
      if (center.pi_hat[b](c) > 0.0) a = std::min(a, target.params[b](c) / center.pi_hat[b](c));
  return a;
}

TuningResult tune_alpha(const ModelSpec& model, const Target& target, const FitResult& center,
                        const std::vector<double>& grid, std::size_t pilot_n, std::uint64_t seed,
                        double min_acceptance, const ScanOptions& options) {
  if (grid.empty()) throw DomainError("alpha grid must not be empty");
  if (pilot_n == 0) throw DomainError("pilot size must be at least 1");
  TuningResult result;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto g = ImportanceDensity::centred(center, grid[k], "");
    const auto draws = scan_draws(model, g.params, &target.params, pilot_n, derive_seed(seed, {k}), options);
    const auto est = summarize(draws, 1.0, Route::importance, grid[k]);
    result.trials.push_back({grid[k], static_cast<double>(est.accepted) / static_cast<double>(pilot_n), est.ess});
  }
  const AlphaTrial* best = nullptr;
  for (const auto& tr : result.trials)
    if (tr.acceptance >= min_acceptance && tr.acceptance > 0.0 && (!best || tr.ess > best->ess)) best = &tr;
  if (best) {
    result.reached_min_acceptance = true;
  } else {
    for (const auto& tr : result.trials)
      if (tr.acceptance > 0.0 && (!best || tr.acceptance > best->acceptance)) best = &tr;
  }
  if (!best) {
    std::ostringstream msg;
    msg << "model '" << model.name() << "', " << to_string(target.side)
        << " side: no alpha on the grid produced an accepted pilot draw out of " << pilot_n
        << "; try a larger pilot or a better centre";
    throw TuningError(msg.str());
  }
  result.alpha = best->alpha;
  return result;
}

BFEstimate estimate_bf(const ModelSpec& model, const StratifiedTable& table, const PriorSpec& prior,
                       const RunSettings& settings) {
  settings.check();
  if (model.has_equalities())
    throw DomainError("model '" + model.name() + "' has about-equality rows; use about_equality_bf");
  prior.check(model.link().cells(), model.strata());
  const Target pt = prior_target(prior);
  const Target qt = posterior_target(prior, table);

  BFEstimate bf;
  bf.model = model.name();
  bf.settings = settings;
  bf.kappa = prior.kappa();
  bf.prior_plan = plan_or_unbounded(model, table, pt, settings);
  bf.posterior_plan = plan_or_unbounded(model, table, qt, settings);
  bf.route = (bf.prior_plan.route == Route::importance || bf.posterior_plan.route == Route::importance)
                 ? Route::importance
                 : Route::direct;

  for (std::size_t rep = 0; rep < settings.replicates; ++rep) {
    ReplicateRecord run;
    run.index = rep;
    run.prior = summarize(run_side(model, bf.prior_plan, pt, settings, rep), 1.0, bf.prior_plan.route,
                          bf.prior_plan.alpha);
    run.posterior = summarize(run_side(model, bf.posterior_plan, qt, settings, rep), 1.0, bf.posterior_plan.route,
                              bf.posterior_plan.alpha);
    if (run.prior.accepted == 0) unbounded(model, Side::prior, "replicate " + std::to_string(rep));
    if (run.posterior.accepted == 0) unbounded(model, Side::posterior, "replicate " + std::to_string(rep));
    run.log_bf = run.posterior.log_value - run.prior.log_value;
    bf.runs.push_back(std::move(run));
  }
  return finish(std::move(bf));
}

BFEstimate about_equality_bf(const ModelSpec& model, const StratifiedTable& table, const PriorSpec& prior,
                             const RunSettings& settings) {
  settings.check();
  if (!model.has_equalities())
    throw DomainError("model '" + model.name() + "' has no about-equality rows; use estimate_bf");
  prior.check(model.link().cells(), model.strata());
  const ModelSpec start = at_start(model, settings.schedule);
  const Target pt = prior_target(prior);
  const Target qt = posterior_target(prior, table);
  const auto& sch = settings.schedule;

  BFEstimate bf;
  bf.model = model.name();
  bf.route = Route::about_equality;
  bf.settings = settings;
  bf.kappa = prior.kappa();
  bf.prior_plan = plan_or_unbounded(start, table, pt, settings);
  bf.posterior_plan = plan_or_unbounded(start, table, qt, settings);
  const double eps1 = start.constraints().epsilon.maxCoeff();

  for (std::size_t rep = 0; rep < settings.replicates; ++rep) {
    ReplicateRecord run;
    run.index = rep;
    const auto prior_draws = run_side(start, bf.prior_plan, pt, settings, rep);
    const auto post_draws = run_side(start, bf.posterior_plan, qt, settings, rep);
    double scale = 1.0;
    double prev = 0.0;
    for (int n = 1; n <= sch.max_stages; ++n, scale *= sch.b) {
      auto p = summarize(prior_draws, scale, bf.prior_plan.route, bf.prior_plan.alpha);
      auto q = summarize(post_draws, scale, bf.posterior_plan.route, bf.posterior_plan.alpha);
      if (n == 1) {
        if (p.accepted == 0) unbounded(model, Side::prior, "first stage, replicate " + std::to_string(rep));
        if (q.accepted == 0) unbounded(model, Side::posterior, "first stage, replicate " + std::to_string(rep));
      } else if (p.ess < settings.min_stage_ess || q.ess < settings.min_stage_ess) {
        std::ostringstream msg;
        msg << "stage " << n << " stopped: effective sample size below " << settings.min_stage_ess
            << "; the estimate is the partial product up to stage " << n - 1;
        run.truncated = true;
        run.prior.warnings.push_back(msg.str());
        break;
      }
      StageRecord st;
      st.stage = n;
      st.epsilon_scale = scale;
      st.epsilon = eps1 * scale;
      st.log_prior = p.log_value;
      st.log_posterior = q.log_value;
      st.prior_ess = p.ess;
      st.posterior_ess = q.ess;
      const double current = q.log_value - p.log_value;
      st.log_factor = n == 1 ? current : current - prev;
      prev = current;
      run.stages.push_back(st);
      run.prior = std::move(p);
      run.posterior = std::move(q);
      if (n > 1 && std::abs(st.log_factor) < sch.stop_tol) break;
    }
    if (!run.truncated && static_cast<int>(run.stages.size()) == sch.max_stages &&
        std::abs(run.stages.back().log_factor) >= sch.stop_tol && sch.max_stages > 1)
      run.prior.warnings.push_back("epsilon schedule reached max_stages before the stage factor settled");
    run.log_bf = 0.0;
    for (const auto& st : run.stages) run.log_bf += st.log_factor;
    bf.final_epsilon = std::max(bf.final_epsilon, run.stages.back().epsilon);
    bf.runs.push_back(std::move(run));
  }
  return finish(std::move(bf));
}

BFEstimate bayes_factor(const ModelSpec& model, const StratifiedTable& table, const PriorSpec& prior,
                        const RunSettings& settings) {
  return model.has_equalities() ? about_equality_bf(model, table, prior, settings)
                                : estimate_bf(model, table, prior, settings);
}

BFEstimate replicate_bf(const ModelSpec& model, const StratifiedTable& table, const PriorSpec& prior,
                        const RunSettings& settings, std::size_t replicates) {
  RunSettings s = settings;
  s.replicates = replicates;
  return bayes_factor(model, table, prior, s);
}

double compare_models(const BFEstimate& k, const BFEstimate& l) { return k.log_bf - l.log_bf; }

std::string_view to_string(Evidence evidence) {
  switch (evidence) {
    case Evidence::poor: return "poor";
    case Evidence::substantial: return "substantial";
    case Evidence::strong: return "strong";
    case Evidence::decisive: return "decisive";
  }
  return "poor";
}

Evidence jeffreys_label(double log_bf) {
  const double a = std::abs(log_bf);
  if (a < 0.5) return Evidence::poor;
  if (a < 1.0) return Evidence::substantial;
  if (a < 2.0) return Evidence::strong;
  return Evidence::decisive;
}

PosteriorSample posterior_draws_under_model(const ModelSpec& model, const StratifiedTable& table,
                                            const PriorSpec& prior, std::size_t n, std::uint64_t seed,
                                            std::size_t keep, const ScanOptions& options) {
  if (n == 0) throw DomainError("sample size must be at least 1");
  prior.check(model.link().cells(), model.strata());
  const Target target = posterior_target(prior, table);
  const auto& link = model.link();
  const std::size_t s = model.strata();
  const std::size_t r = link.cells();
  const std::size_t t = link.eta_size();
  const CompiledConstraints cc(model.constraints());
  const std::size_t chunks = (n + options.chunk_size - 1) / options.chunk_size;

  struct ChunkOut {
    std::size_t accepted = 0;
    Eigen::VectorXd pi_sum;
    Eigen::VectorXd eta_sum;
    std::vector<double> kept;  // accepted eta, row-wise
  };
  std::vector<ChunkOut> parts(chunks);
  const auto base = derive_seed(seed, {side_id(Side::posterior), kPosteriorDraws});
  for_each_chunk(n, options.chunk_size, options.threads, [&](std::size_t c, std::size_t begin, std::size_t end) {
    RandomEngine engine(derive_seed(base, {c}));
    ChunkOut& out = parts[c];
    out.pi_sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s * r));
    out.eta_sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s * t));
    std::vector<double> lp(s * r);
    std::vector<double> eta(s * t);
    std::vector<double> scratch;
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t b = 0; b < s; ++b) {
        std::span<double> lpb(lp.data() + b * r, r);
        log_dirichlet_draw(span_of(target.params[b]), lpb, engine);
        link.eta_from_log_pi(lpb, std::span<double>(eta.data() + b * t, t), scratch);
      }
      if (!cc.inequalities_hold(eta.data()) || cc.equality_ratio(eta.data()) > 1.0) continue;
      ++out.accepted;
      for (std::size_t k = 0; k < s * r; ++k) out.pi_sum(static_cast<Eigen::Index>(k)) += std::exp(lp[k]);
      for (std::size_t k = 0; k < s * t; ++k) out.eta_sum(static_cast<Eigen::Index>(k)) += eta[k];
      if (out.kept.size() < keep * s * t) out.kept.insert(out.kept.end(), eta.begin(), eta.end());
    }
  });

  PosteriorSample ps;
  ps.model = model.name();
  ps.n_draws = n;
  Eigen::VectorXd pi_sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s * r));
  Eigen::VectorXd eta_sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s * t));
  std::vector<double> kept;
  for (const auto& p : parts) {
    ps.accepted += p.accepted;
    pi_sum += p.pi_sum;
    eta_sum += p.eta_sum;
    const std::size_t room = keep * s * t - std::min(keep * s * t, kept.size());
    kept.insert(kept.end(), p.kept.begin(), p.kept.begin() + static_cast<std::ptrdiff_t>(std::min(room, p.kept.size())));
  }
  ps.acceptance = static_cast<double>(ps.accepted) / static_cast<double>(n);
  ps.se = std::sqrt(ps.acceptance * (1.0 - ps.acceptance) / static_cast<double>(n));
  if (ps.accepted == 0) {
    ps.warnings.push_back("rare model: no posterior draw satisfies the constraints, so no summaries are available");
  } else {
    const double a = static_cast<double>(ps.accepted);
    for (std::size_t b = 0; b < s; ++b) {
      Eigen::VectorXd pi = pi_sum.segment(static_cast<Eigen::Index>(b * r), static_cast<Eigen::Index>(r)) / a;
      pi /= pi.sum();
      ps.mean_pi.push_back(std::move(pi));
    }
    ps.eta_mean = eta_sum / a;
    ps.quantile_draws = kept.size() / (s * t);
    ps.eta_lower.resize(static_cast<Eigen::Index>(s * t));
    ps.eta_upper.resize(static_cast<Eigen::Index>(s * t));
    std::vector<double> col(ps.quantile_draws);
    for (std::size_t k = 0; k < s * t; ++k) {
      for (std::size_t i = 0; i < ps.quantile_draws; ++i) col[i] = kept[i * s * t + k];
      const auto q = quantile_pair(col);
      ps.eta_lower(static_cast<Eigen::Index>(k)) = q[0];
      ps.eta_upper(static_cast<Eigen::Index>(k)) = q[1];
    }
    ps.mean_satisfies = satisfies(stacked_eta(ps.mean_pi, link), model.constraints());
    if (ps.accepted < 100 || ps.acceptance < 1e-3)
      ps.warnings.push_back("rare model: only " + std::to_string(ps.accepted) +
                            " posterior draws satisfy the constraints; summaries are unreliable");
  }
  if (model.has_equalities() && (ps.accepted < 100 || ps.acceptance < 1e-3))
    ps.warnings.push_back("about-equality constraints are rarely met by unconstrained draws; "
                          "compare models through the about-equality Bayes factor route instead");
  return ps;
}

}  // namespace encompass
