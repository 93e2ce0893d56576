#pragma once

// Constrained maximum likelihood under a product-multinomial likelihood,
// used to centre importance densities.
//
// The fitter works on theta_b = log(pi_b[2..r] / pi_b[1]) for every stratum and
// runs an augmented-Lagrangian (PHR) scheme on the constraints
// U eta >= 0, eps - E eta >= 0, eps + E eta >= 0, with damped Gauss-Newton
// inner steps.

#include <string>
#include <vector>

#include "encompass/hypothesis.hpp"
#include "encompass/table.hpp"

namespace encompass {

struct FitOptions {
  double smoothing = 0.5;  // added to every cell before fitting
  double kkt_tol = 1e-7;
  double feas_tol = 1e-8;
  int max_outer = 500;
  int max_inner = 100;
  double rho0 = 10.0;
};

struct FitTraceEntry {
  int outer = 0;
  double merit = 0.0;  // augmented Lagrangian after an accepted inner step
};

struct FitResult {
  EtaVector eta_hat;                           // stacked over strata
  std::vector<ProbabilityVector> pi_hat;       // one per stratum
  double loglik = 0.0;                         // sum y log pi on the raw counts
  double objective = 0.0;                      // sum (y + smoothing) log pi
  double kkt_residual = 0.0;
  double max_violation = 0.0;
  int outer_iterations = 0;
  bool converged = false;
  double smoothing = 0.0;
  std::vector<FitTraceEntry> trace;
  std::vector<std::string> messages;
};

// Rejects tables with an empty stratum (ValidationError) and tables whose
// shape does not match the model (DimensionError).
FitResult constrained_mle(const StratifiedTable& table, const ModelSpec& model, const FitOptions& options = {});

// Centre for prior-side importance sampling: the constrained fit to a table of
// ones, which keeps the flat-likelihood problem well posed.
FitResult prior_center(const ModelSpec& model, const FitOptions& options = {});

// Largest violation of |E eta| <= eps, U eta >= 0 (0 when satisfied).
double constraint_violation(const EtaVector& eta, const ConstraintSet& constraints);

}  // namespace encompass
