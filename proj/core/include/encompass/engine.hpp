#pragma once

// Encompassing-prior Monte Carlo.
//
// B_k1 = (posterior proportion satisfying M_k) / (prior proportion satisfying
// M_k). Each proportion is estimated either directly from Dirichlet draws of
// the encompassing prior/posterior or by importance sampling from
// D(alpha * pi_hat) centred at a constrained fit. Models with about-equality
// rows go through a shrinking schedule eps_{n+1} = b eps_n whose stage factors
// are all computed from one prior-side and one posterior-side sample.
//
// All log Bayes factors here are natural logarithms.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "encompass/fit.hpp"
#include "encompass/hypothesis.hpp"
#include "encompass/random.hpp"
#include "encompass/table.hpp"

namespace encompass {

enum class Side { prior, posterior };
enum class Route { direct, importance, about_equality };
enum class RouteChoice { automatic, direct, importance };

std::string_view to_string(Side side);
std::string_view to_string(Route route);
std::string_view to_string(RouteChoice choice);
RouteChoice parse_route_choice(std::string_view name);

struct PriorSpec {
  std::vector<Eigen::VectorXd> concentration;  // one per stratum

  // kappa * 1_r in every stratum.
  static PriorSpec uniform(std::size_t cells, std::size_t strata, double kappa = 1.0);
  void check(std::size_t cells, std::size_t strata) const;
  // The common value when every entry is equal, otherwise NaN.
  double kappa() const;
};

// Dirichlet parameters of the distribution a proportion is taken under.
struct Target {
  Side side = Side::prior;
  std::vector<Eigen::VectorXd> params;
};

Target prior_target(const PriorSpec& prior);
Target posterior_target(const PriorSpec& prior, const StratifiedTable& table);

struct ImportanceDensity {
  std::vector<Eigen::VectorXd> params;  // alpha * pi_hat per stratum
  double alpha = 1.0;
  std::string center;  // "prior_center" or "constrained_mle"

  static ImportanceDensity centred(const FitResult& fit, double alpha, std::string center);
};

struct ProportionEstimate {
  double value = 0.0;
  double log_value = 0.0;  // -inf when nothing was accepted
  std::size_t n_draws = 0;
  std::size_t accepted = 0;
  double ess = 0.0;
  double se = 0.0;
  double rel_se = 0.0;  // se / value
  Route route = Route::direct;
  double alpha = 0.0;  // importance concentration, 0 for the direct route
  double max_abs_log_weight = 0.0;
  std::vector<std::string> warnings;
};

struct EpsilonSchedule {
  std::optional<double> epsilon_start;  // replaces every model tolerance when set
  double b = 0.5;
  double stop_tol = 0.1;  // on |ln stage factor|
  int max_stages = 12;

  void check() const;
};

struct RunSettings {
  std::uint64_t seed = 20110;
  std::size_t n_draws = 1'000'000;
  std::size_t pilot_n = 100'000;
  std::size_t replicates = 1;
  std::vector<double> alpha_grid = default_alpha_grid();
  double direct_threshold = 0.01;  // pilot acceptance needed for the direct route
  double min_acceptance = 0.01;    // acceptance needed for an alpha to be ranked by ESS
  RouteChoice route = RouteChoice::automatic;
  double min_stage_ess = 50.0;
  std::size_t chunk_size = 4096;
  unsigned threads = 0;  // 0 = hardware concurrency
  EpsilonSchedule schedule;
  FitOptions fit;

  // 12 log-spaced points over [0.02, 50] together with 1 and 20.
  static std::vector<double> default_alpha_grid();
  void check() const;
};

// Per-draw record of one sampling run: log importance weight (0 for direct
// draws), max_i |E eta|_i / eps_i (0 without equality rows) and whether every
// inequality row holds.
struct DrawSummary {
  std::vector<double> log_weight;
  std::vector<double> eq_ratio;
  std::vector<std::uint8_t> ineq_ok;
  double max_abs_log_weight = 0.0;

  std::size_t size() const noexcept { return log_weight.size(); }
};

struct ScanOptions {
  std::size_t chunk_size = 4096;
  unsigned threads = 0;
};

// Draws n points from D(sampling) per stratum; when `target` is given the
// draws carry log(target density / sampling density).
DrawSummary scan_draws(const ModelSpec& model, const std::vector<Eigen::VectorXd>& sampling,
                       const std::vector<Eigen::VectorXd>* target, std::size_t n, std::uint64_t seed,
                       const ScanOptions& options = {});

// Proportion of a scan satisfying the model with tolerances scaled by
// `epsilon_scale`.
ProportionEstimate summarize(const DrawSummary& draws, double epsilon_scale, Route route, double alpha = 0.0);

DrawSet sample_prior(const PriorSpec& prior, std::size_t n, std::uint64_t seed);
DrawSet sample_posterior(const PriorSpec& prior, const StratifiedTable& table, std::size_t n, std::uint64_t seed);

ProportionEstimate estimate_proportion_direct(const DrawSet& draws, const ModelSpec& model);

ProportionEstimate importance_estimate(const ModelSpec& model, const Target& target, const ImportanceDensity& g,
                                       std::size_t n, std::uint64_t seed, const ScanOptions& options = {});

struct AlphaTrial {
  double alpha = 0.0;
  double acceptance = 0.0;
  double ess = 0.0;
};

struct TuningResult {
  double alpha = 0.0;
  bool reached_min_acceptance = false;
  std::vector<AlphaTrial> trials;
};

// Largest alpha with alpha * pi_hat <= target parameter in every cell. Up to
// this value the importance weights are bounded.
double bounded_weight_alpha(const FitResult& center, const Target& target);

// Throws TuningError when no grid point accepts a single pilot draw.
TuningResult tune_alpha(const ModelSpec& model, const Target& target, const FitResult& center,
                        const std::vector<double>& grid, std::size_t pilot_n, std::uint64_t seed,
                        double min_acceptance = 0.01, const ScanOptions& options = {});

// How one side of a Bayes factor is sampled; fixed once per model and reused
// by every replicate.
struct SidePlan {
  Side side = Side::prior;
  Route route = Route::direct;
  double pilot_acceptance = 0.0;
  double alpha = 0.0;
  std::string center;
  std::vector<Eigen::VectorXd> sampling;
  std::vector<AlphaTrial> tuning;
  std::vector<std::string> notes;
};

struct StageRecord {
  int stage = 1;
  double epsilon_scale = 1.0;
  double epsilon = 0.0;  // largest tolerance at this stage
  double log_prior = 0.0;
  double log_posterior = 0.0;
  double prior_ess = 0.0;
  double posterior_ess = 0.0;
  double log_factor = 0.0;
};

struct ReplicateRecord {
  std::size_t index = 0;
  double log_bf = 0.0;
  ProportionEstimate prior;
  ProportionEstimate posterior;
  std::vector<StageRecord> stages;
  bool truncated = false;
};

struct BFEstimate {
  std::string model;
  Route route = Route::direct;
  double log_bf = 0.0;  // mean over replicates
  double mean = 0.0;
  double sd = 0.0;
  std::vector<double> replicates;
  std::vector<ReplicateRecord> runs;
  SidePlan prior_plan;
  SidePlan posterior_plan;
  double final_epsilon = 0.0;
  RunSettings settings;
  double kappa = 1.0;
  std::vector<std::string> warnings;
};

// Inequality-only route. Throws UnboundedEstimateError naming the side that
// estimated zero.
BFEstimate estimate_bf(const ModelSpec& model, const StratifiedTable& table, const PriorSpec& prior,
                       const RunSettings& settings);
// About-equality route (model needs at least one equality row).
BFEstimate about_equality_bf(const ModelSpec& model, const StratifiedTable& table, const PriorSpec& prior,
                             const RunSettings& settings);
// Picks the route from the model and runs settings.replicates replicates.
BFEstimate bayes_factor(const ModelSpec& model, const StratifiedTable& table, const PriorSpec& prior,
                        const RunSettings& settings);
// bayes_factor with `replicates` overriding the settings.
BFEstimate replicate_bf(const ModelSpec& model, const StratifiedTable& table, const PriorSpec& prior,
                        const RunSettings& settings, std::size_t replicates);

// ln B_kl = ln B_k1 - ln B_l1.
double compare_models(const BFEstimate& k, const BFEstimate& l);

enum class Evidence { poor, substantial, strong, decisive };
std::string_view to_string(Evidence evidence);
// Thresholds 0.5, 1 and 2 on |log_bf|; the sign gives the direction.
Evidence jeffreys_label(double log_bf);

struct PosteriorSample {
  std::string model;
  std::size_t n_draws = 0;
  std::size_t accepted = 0;
  double acceptance = 0.0;
  double se = 0.0;
  std::vector<ProbabilityVector> mean_pi;  // per stratum
  EtaVector eta_mean;
  EtaVector eta_lower;  // 2.5% quantile
  EtaVector eta_upper;  // 97.5% quantile
  std::size_t quantile_draws = 0;
  bool mean_satisfies = false;
  std::vector<std::string> warnings;
};

PosteriorSample posterior_draws_under_model(const ModelSpec& model, const StratifiedTable& table,
                                            const PriorSpec& prior, std::size_t n, std::uint64_t seed,
                                            std::size_t keep = 20000, const ScanOptions& options = {});

}  // namespace encompass
