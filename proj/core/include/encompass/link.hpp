#pragma once

// Marginal link eta = C log(M pi) built from generalised logits (local,
// global, continuation, reverse continuation) for every univariate margin,
// generalised log-odds ratios for every bivariate margin and the analogous
// higher-order interactions.
//
// eta is the stack of blocks eta_z over all non-empty margins z. Margins are
// enumerated by binary counting with variable 1 as the lowest bit, so for two
// variables eta = (logits of A1, logits of A2, log-odds ratios).

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "encompass/table.hpp"

namespace encompass {

using EtaVector = Eigen::VectorXd;
using ProbabilityVector = Eigen::VectorXd;

struct MarginSet {
  std::uint32_t mask = 0;  // bit i set <=> variable i+1 enters the margin

  bool contains(std::size_t variable) const noexcept { return (mask >> variable) & 1U; }
  int order() const noexcept;
  std::vector<std::size_t> variables() const;
  static MarginSet of(std::initializer_list<std::size_t> variables);

  friend bool operator==(MarginSet, MarginSet) = default;
};

struct EtaBlock {
  MarginSet margin;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Row-aggregation block for one variable entering a margin: the first m-1
// rows give the denominators and the last m-1 rows the numerators of the
// chosen logit type. Shape 2(m-1) x m.
Eigen::MatrixXd build_logit_block(int m, LogitType type);
// Contrast (-I, I) that turns log(numerator, denominator) pairs into logits.
Eigen::MatrixXd build_contrast_block(int m);
// h x h lower-triangular matrix of ones.
Eigen::MatrixXd lower_triangular_ones(int h);

class LinkMatrices {
 public:
  explicit LinkMatrices(std::vector<VariableSpec> variables);

  const Eigen::MatrixXd& contrast() const noexcept { return contrast_; }
  const Eigen::MatrixXd& marginalization() const noexcept { return marginalization_; }
  const std::vector<EtaBlock>& blocks() const noexcept { return blocks_; }
  const EtaBlock& block(MarginSet margin) const;

  std::size_t eta_size() const noexcept { return static_cast<std::size_t>(contrast_.rows()); }
  std::size_t cells() const noexcept { return static_cast<std::size_t>(marginalization_.cols()); }
  std::size_t marginal_rows() const noexcept { return static_cast<std::size_t>(marginalization_.rows()); }
  const std::vector<VariableSpec>& variables() const noexcept { return variables_; }
  std::vector<int> dims() const;
  std::vector<LogitType> logit_types() const;

  // eta for an unnormalised log-probability vector. Works on the log scale so
  // cells far below the double range do not turn into log(0).
  void eta_from_log_pi(std::span<const double> log_pi, std::span<double> eta,
                       std::vector<double>& scratch) const;

 private:
  std::vector<VariableSpec> variables_;
  Eigen::MatrixXd contrast_;
  Eigen::MatrixXd marginalization_;
  std::vector<EtaBlock> blocks_;

  // Compressed rows of M (0/1 entries) and of C (+1/-1 entries).
  std::vector<std::size_t> m_row_ptr_;
  std::vector<std::size_t> m_cols_;
  std::vector<std::size_t> c_row_ptr_;
  std::vector<std::size_t> c_cols_;
  std::vector<double> c_signs_;
};

LinkMatrices build_link(std::vector<VariableSpec> variables);
LinkMatrices build_link(std::span<const int> dims, std::span<const LogitType> types);
LinkMatrices build_link(std::span<const int> dims, LogitType type);

EtaVector eta_from_pi(const ProbabilityVector& pi, const LinkMatrices& link);
EtaVector eta_from_log_pi(const Eigen::VectorXd& log_pi, const LinkMatrices& link);
// Stacks eta(b) for every stratum.
EtaVector stacked_eta(const std::vector<ProbabilityVector>& pis, const LinkMatrices& link);

struct InversionOptions {
  double tol = 1e-10;  // infinity norm of the eta residual
  int max_iter = 200;
  int max_halvings = 30;
};

// Newton-Raphson inversion on the log-scale parameterisation
// theta_k = log(pi_k / pi_1), k = 2..r, started from the uniform table unless
// a warm start is supplied.
ProbabilityVector pi_from_eta(const EtaVector& eta, const LinkMatrices& link,
                              const InversionOptions& options = {},
                              const ProbabilityVector* warm_start = nullptr);

// d eta / d theta with theta as above; t x (r-1), square for the saturated link.
Eigen::MatrixXd eta_jacobian(const ProbabilityVector& pi, const LinkMatrices& link);
Eigen::MatrixXd eta_jacobian_log(const Eigen::VectorXd& log_pi, const LinkMatrices& link);

// Dense text dump of C and M for debugging.
std::string export_matrices(const LinkMatrices& link);

}  // namespace encompass
