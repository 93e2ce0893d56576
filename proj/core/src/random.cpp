#include "encompass/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "encompass/error.hpp"

namespace encompass {

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t state = master;
  std::uint64_t out = splitmix64(state);
  for (auto p : path) {
    state = out ^ (p + 0x632BE59BD9B4E019ULL);
    out = splitmix64(state);
  }
  return out;
}

double log_gamma_variate(double shape, RandomEngine& engine) {
  if (!(shape > 0.0) || !std::isfinite(shape)) throw DomainError("gamma shape must be positive and finite");
  if (shape >= 1.0) {
    std::gamma_distribution<double> g(shape, 1.0);
    double x = g(engine);
    while (!(x > 0.0)) x = g(engine);
    return std::log(x);
  }
  std::gamma_distribution<double> g(shape + 1.0, 1.0);
  double x = g(engine);
  while (!(x > 0.0)) x = g(engine);
  // 1 - U lies in (0, 1], so the logarithm is finite.
  const double u = 1.0 - std::generate_canonical<double, 53>(engine);
  return std::log(x) + std::log(u) / shape;
}

void log_dirichlet_draw(std::span<const double> alpha, std::span<double> log_pi, RandomEngine& engine) {
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    log_pi[k] = log_gamma_variate(alpha[k], engine);
    hi = std::max(hi, log_pi[k]);
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) acc += std::exp(log_pi[k] - hi);
  const double lse = hi + std::log(acc);
  for (std::size_t k = 0; k < alpha.size(); ++k) log_pi[k] -= lse;
}

double log_multivariate_beta(std::span<const double> alpha) {
  double sum = 0.0;
  double acc = 0.0;
  for (double a : alpha) {
    acc += std::lgamma(a);
    sum += a;
  }
  return acc - std::lgamma(sum);
}

double log_dirichlet_density(std::span<const double> log_pi, std::span<const double> alpha) {
  double acc = -log_multivariate_beta(alpha);
  for (std::size_t k = 0; k < alpha.size(); ++k) acc += (alpha[k] - 1.0) * log_pi[k];
  return acc;
}

Eigen::VectorXd DrawSet::pi(std::size_t i, std::size_t b) const {
  const auto d = draw(i, b);
  Eigen::VectorXd out(static_cast<Eigen::Index>(cells));
  for (std::size_t k = 0; k < cells; ++k) out(static_cast<Eigen::Index>(k)) = d[k];
  return out;
}

}  // namespace encompass
