#pragma once

// Seed derivation and Dirichlet sampling on the log scale.
//
// Every random stream is identified by a path (replicate, side, purpose,
// chunk, ...) below a master seed; derive_seed mixes the path with SplitMix64
// so streams are reproducible and independent of how work is scheduled.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace encompass {

using RandomEngine = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t& state) noexcept;
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept;

// log of a Gamma(shape, 1) variate. Shapes below 1 use the boosting identity
// G(a) = G(a+1) U^(1/a) so tiny shapes do not underflow to zero.
double log_gamma_variate(double shape, RandomEngine& engine);

// Normalised log-probabilities of one Dirichlet(alpha) draw.
void log_dirichlet_draw(std::span<const double> alpha, std::span<double> log_pi, RandomEngine& engine);

// log of the multivariate beta function, sum lgamma(a_k) - lgamma(sum a_k).
double log_multivariate_beta(std::span<const double> alpha);
// Dirichlet log density at a point given by its normalised log-probabilities.
double log_dirichlet_density(std::span<const double> log_pi, std::span<const double> alpha);

// n draws of pi, one Dirichlet per stratum, stored row-wise: draw i occupies
// values[i * strata * cells, (i+1) * strata * cells), stratum-major.
struct DrawSet {
  std::size_t n = 0;
  std::size_t strata = 0;
  std::size_t cells = 0;
  std::vector<double> values;

  std::span<const double> draw(std::size_t i) const {
    return {values.data() + i * strata * cells, strata * cells};
  }
  std::span<const double> draw(std::size_t i, std::size_t b) const {
    return {values.data() + (i * strata + b) * cells, cells};
  }
  Eigen::VectorXd pi(std::size_t i, std::size_t b) const;
};

}  // namespace encompass
