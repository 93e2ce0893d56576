#include "encompass/link.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>

#include "encompass/error.hpp"

namespace encompass {

namespace {

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

double log_sum_exp(std::span<const double> values) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

Eigen::VectorXd log_pi_from_theta(const Eigen::VectorXd& theta) {
  Eigen::VectorXd lp(theta.size() + 1);
  lp(0) = 0.0;
  lp.tail(theta.size()) = theta;
  const double lse = log_sum_exp(std::span<const double>(lp.data(), static_cast<std::size_t>(lp.size())));
  lp.array() -= lse;
  return lp;
}

}  // namespace

int MarginSet::order() const noexcept { return std::popcount(mask); }

std::vector<std::size_t> MarginSet::variables() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < 32; ++i)
    if (contains(i)) out.push_back(i);
  return out;
}

MarginSet MarginSet::of(std::initializer_list<std::size_t> variables) {
  MarginSet z;
  for (auto v : variables) z.mask |= (1U << v);
  return z;
}

Eigen::MatrixXd lower_triangular_ones(int h) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(h, h);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j <= i; ++j) t(i, j) = 1.0;
  return t;
}

Eigen::MatrixXd build_logit_block(int m, LogitType type) {
  if (m < 2) throw DomainError("logit block needs at least 2 categories, got " + std::to_string(m));
  const int h = m - 1;
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(h, h);
  const Eigen::MatrixXd lower = lower_triangular_ones(h);
  const Eigen::MatrixXd upper = lower.transpose();
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(2 * h, m);
  // Denominators occupy columns 0..h-1, numerators columns 1..h.
  switch (type) {
    case LogitType::local:
      block.topLeftCorner(h, h) = identity;
      block.bottomRightCorner(h, h) = identity;
      break;
    case LogitType::global:
      block.topLeftCorner(h, h) = lower;
      block.bottomRightCorner(h, h) = upper;
      break;
    case LogitType::continuation:
      block.topLeftCorner(h, h) = identity;
      block.bottomRightCorner(h, h) = upper;
      break;
    case LogitType::reverse_continuation:
      block.topLeftCorner(h, h) = lower;
      block.bottomRightCorner(h, h) = identity;
      break;
  }
  return block;
}

Eigen::MatrixXd build_contrast_block(int m) {
  if (m < 2) throw DomainError("contrast block needs at least 2 categories");
  const int h = m - 1;
  Eigen::MatrixXd c(h, 2 * h);
  c << -Eigen::MatrixXd::Identity(h, h), Eigen::MatrixXd::Identity(h, h);
  return c;
}

LinkMatrices::LinkMatrices(std::vector<VariableSpec> variables) : variables_(std::move(variables)) {
  const std::size_t q = variables_.size();
  if (q == 0) throw DomainError("link needs at least one variable");
  if (q > 16) throw DomainError("link supports at most 16 variables");
  for (const auto& v : variables_) {
    if (v.categories < 2) {
      throw DomainError("variable '" + v.name + "' has " + std::to_string(v.categories) +
                        " categories; at least 2 required");
    }
  }

  std::vector<Eigen::MatrixXd> c_blocks;
  std::vector<Eigen::MatrixXd> m_blocks;
  std::size_t offset = 0;
  for (std::uint32_t mask = 1; mask < (1U << q); ++mask) {
    const MarginSet z{mask};
    Eigen::MatrixXd cz = Eigen::MatrixXd::Ones(1, 1);
    Eigen::MatrixXd mz = Eigen::MatrixXd::Ones(1, 1);
    for (std::size_t i = 0; i < q; ++i) {
      const int m = variables_[i].categories;
      if (z.contains(i)) {
        cz = kron(cz, build_contrast_block(m));
        mz = kron(mz, build_logit_block(m, variables_[i].logit_type));
      } else {
        mz = kron(mz, Eigen::MatrixXd::Ones(1, m));
      }
    }
    blocks_.push_back({z, offset, static_cast<std::size_t>(cz.rows())});
    offset += static_cast<std::size_t>(cz.rows());
    c_blocks.push_back(std::move(cz));
    m_blocks.push_back(std::move(mz));
  }

  Eigen::Index c_rows = 0, c_cols = 0, m_rows = 0;
  for (std::size_t k = 0; k < c_blocks.size(); ++k) {
    c_rows += c_blocks[k].rows();
    c_cols += c_blocks[k].cols();
    m_rows += m_blocks[k].rows();
  }
  const Eigen::Index r = m_blocks.front().cols();
  contrast_ = Eigen::MatrixXd::Zero(c_rows, c_cols);
  marginalization_ = Eigen::MatrixXd::Zero(m_rows, r);
  Eigen::Index ci = 0, cj = 0, mi = 0;
  for (std::size_t k = 0; k < c_blocks.size(); ++k) {
    contrast_.block(ci, cj, c_blocks[k].rows(), c_blocks[k].cols()) = c_blocks[k];
    marginalization_.block(mi, 0, m_blocks[k].rows(), r) = m_blocks[k];
    ci += c_blocks[k].rows();
    cj += c_blocks[k].cols();
    mi += m_blocks[k].rows();
  }

  m_row_ptr_.push_back(0);
  for (Eigen::Index i = 0; i < marginalization_.rows(); ++i) {
    for (Eigen::Index j = 0; j < r; ++j)
      if (marginalization_(i, j) != 0.0) m_cols_.push_back(static_cast<std::size_t>(j));
    m_row_ptr_.push_back(m_cols_.size());
  }
  c_row_ptr_.push_back(0);
  for (Eigen::Index i = 0; i < contrast_.rows(); ++i) {
    for (Eigen::Index j = 0; j < contrast_.cols(); ++j) {
      if (contrast_(i, j) != 0.0) {
        c_cols_.push_back(static_cast<std::size_t>(j));
        c_signs_.push_back(contrast_(i, j));
      }
    }
    c_row_ptr_.push_back(c_cols_.size());
  }
}

const EtaBlock& LinkMatrices::block(MarginSet margin) const {
  for (const auto& b : blocks_)
    if (b.margin == margin) return b;
  throw DomainError("margin not present in link");
}

std::vector<int> LinkMatrices::dims() const {
  std::vector<int> d;
  for (const auto& v : variables_) d.push_back(v.categories);
  return d;
}

std::vector<LogitType> LinkMatrices::logit_types() const {
  std::vector<LogitType> t;
  for (const auto& v : variables_) t.push_back(v.logit_type);
  return t;
}

void LinkMatrices::eta_from_log_pi(std::span<const double> log_pi, std::span<double> eta,
                                   std::vector<double>& scratch) const {
  const std::size_t r = cells();
  const std::size_t rows = marginal_rows();
  scratch.resize(r + rows);
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < r; ++k) hi = std::max(hi, log_pi[k]);
  double* scaled = scratch.data();
  double* log_m = scratch.data() + r;
  for (std::size_t k = 0; k < r; ++k) scaled[k] = std::exp(log_pi[k] - hi);
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::size_t p = m_row_ptr_[i]; p < m_row_ptr_[i + 1]; ++p) acc += scaled[m_cols_[p]];
    if (acc > 1e-280) {
      log_m[i] = std::log(acc);
    } else {
      // Every cell in this aggregate underflowed after scaling.
      double row_hi = -std::numeric_limits<double>::infinity();
      for (std::size_t p = m_row_ptr_[i]; p < m_row_ptr_[i + 1]; ++p)
        row_hi = std::max(row_hi, log_pi[m_cols_[p]]);
      double s = 0.0;
      for (std::size_t p = m_row_ptr_[i]; p < m_row_ptr_[i + 1]; ++p)
        s += std::exp(log_pi[m_cols_[p]] - row_hi);
      log_m[i] = row_hi - hi + std::log(s);
    }
  }
  for (std::size_t e = 0; e < eta.size(); ++e) {
    double acc = 0.0;
    for (std::size_t p = c_row_ptr_[e]; p < c_row_ptr_[e + 1]; ++p) acc += c_signs_[p] * log_m[c_cols_[p]];
    eta[e] = acc;
  }
}

LinkMatrices build_link(std::vector<VariableSpec> variables) { return LinkMatrices(std::move(variables)); }

LinkMatrices build_link(std::span<const int> dims, std::span<const LogitType> types) {
  if (dims.size() != types.size()) throw DimensionError("one logit type per variable required");
  std::vector<VariableSpec> vars;
  for (std::size_t i = 0; i < dims.size(); ++i) vars.push_back({"A" + std::to_string(i + 1), dims[i], types[i]});
  return LinkMatrices(std::move(vars));
}

LinkMatrices build_link(std::span<const int> dims, LogitType type) {
  std::vector<LogitType> types(dims.size(), type);
  return build_link(dims, types);
}

EtaVector eta_from_log_pi(const Eigen::VectorXd& log_pi, const LinkMatrices& link) {
  if (static_cast<std::size_t>(log_pi.size()) != link.cells()) {
    throw DimensionError("log-probability vector has " + std::to_string(log_pi.size()) + " cells, link expects " +
                         std::to_string(link.cells()));
  }
  EtaVector eta(static_cast<Eigen::Index>(link.eta_size()));
  std::vector<double> scratch;
  link.eta_from_log_pi(std::span<const double>(log_pi.data(), link.cells()),
                       std::span<double>(eta.data(), link.eta_size()), scratch);
  return eta;
}

EtaVector eta_from_pi(const ProbabilityVector& pi, const LinkMatrices& link) {
  if (static_cast<std::size_t>(pi.size()) != link.cells()) {
    throw DimensionError("probability vector has " + std::to_string(pi.size()) + " cells, link expects " +
                         std::to_string(link.cells()));
  }
  for (Eigen::Index k = 0; k < pi.size(); ++k) {
    if (!(pi(k) > 0.0)) throw DomainError("eta_from_pi: probability at cell " + std::to_string(k) + " is not positive");
  }
  if (std::abs(pi.sum() - 1.0) > 1e-12) throw DomainError("eta_from_pi: probabilities do not sum to 1");
  return eta_from_log_pi(pi.array().log().matrix(), link);
}

EtaVector stacked_eta(const std::vector<ProbabilityVector>& pis, const LinkMatrices& link) {
  const auto t = static_cast<Eigen::Index>(link.eta_size());
  EtaVector eta(t * static_cast<Eigen::Index>(pis.size()));
  for (std::size_t b = 0; b < pis.size(); ++b) eta.segment(static_cast<Eigen::Index>(b) * t, t) = eta_from_pi(pis[b], link);
  return eta;
}

Eigen::MatrixXd eta_jacobian_log(const Eigen::VectorXd& log_pi, const LinkMatrices& link) {
  const auto& m = link.marginalization();
  const auto r = static_cast<Eigen::Index>(link.cells());
  const double hi = log_pi.maxCoeff();
  const Eigen::VectorXd scaled = (log_pi.array() - hi).exp().matrix();
  const Eigen::VectorXd agg = m * scaled;
  // A(row, k) = M(row, k) pi_k / (M pi)_row
  Eigen::MatrixXd a(m.rows(), r);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index k = 0; k < r; ++k) {
      if (m(i, k) == 0.0) {
        a(i, k) = 0.0;
      } else if (agg(i) > 1e-280) {
        a(i, k) = scaled(k) / agg(i);
      } else {
        double row_hi = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < r; ++j)
          if (m(i, j) != 0.0) row_hi = std::max(row_hi, log_pi(j));
        double s = 0.0;
        for (Eigen::Index j = 0; j < r; ++j)
          if (m(i, j) != 0.0) s += std::exp(log_pi(j) - row_hi);
        a(i, k) = std::exp(log_pi(k) - row_hi) / s;
      }
    }
  }
  const Eigen::MatrixXd full = link.contrast() * a;
  return full.rightCols(r - 1);
}

Eigen::MatrixXd eta_jacobian(const ProbabilityVector& pi, const LinkMatrices& link) {
  if (static_cast<std::size_t>(pi.size()) != link.cells()) throw DimensionError("eta_jacobian: wrong number of cells");
  for (Eigen::Index k = 0; k < pi.size(); ++k)
    if (!(pi(k) > 0.0)) throw DomainError("eta_jacobian: probability at cell " + std::to_string(k) + " is not positive");
  return eta_jacobian_log(pi.array().log().matrix(), link);
}

namespace {

// Marginal distribution of one variable from its logits, in closed form.
Eigen::VectorXd margin_from_logits(const Eigen::VectorXd& eta, LogitType type) {
  const Eigen::Index h = eta.size();
  Eigen::VectorXd p = Eigen::VectorXd::Zero(h + 1);
  auto expit = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  switch (type) {
    case LogitType::local: {
      Eigen::VectorXd lp(h + 1);
      lp(0) = 0.0;
      for (Eigen::Index a = 0; a < h; ++a) lp(a + 1) = lp(a) + eta(a);
      p = (lp.array() - lp.maxCoeff()).exp().matrix();
      break;
    }
    case LogitType::global: {
      double prev = 0.0;  // P(A <= a)
      for (Eigen::Index a = 0; a < h; ++a) {
        const double cdf = std::max(prev, expit(-eta(a)));
        p(a) = cdf - prev;
        prev = cdf;
      }
      p(h) = 1.0 - prev;
      break;
    }
    case LogitType::continuation: {
      double survive = 1.0;  // P(A >= a)
      for (Eigen::Index a = 0; a < h; ++a) {
        p(a) = survive * expit(-eta(a));
        survive -= p(a);
      }
      p(h) = survive;
      break;
    }
    case LogitType::reverse_continuation: {
      double below = 1.0;  // P(A <= a + 1)
      for (Eigen::Index a = h - 1; a >= 0; --a) {
        p(a + 1) = below * expit(eta(a));
        below -= p(a + 1);
      }
      p(0) = below;
      break;
    }
  }
  p = p.cwiseMax(1e-12);
  return p / p.sum();
}

// Independence table with the margins implied by eta; it reproduces every
// univariate logit exactly, so Newton only has to fit the interactions.
Eigen::VectorXd independence_theta(const EtaVector& eta, const LinkMatrices& link) {
  const auto dims = link.dims();
  std::vector<Eigen::VectorXd> margins;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const auto& blk = link.block(MarginSet{1U << i});
    margins.push_back(margin_from_logits(
        eta.segment(static_cast<Eigen::Index>(blk.offset), static_cast<Eigen::Index>(blk.size)),
        link.variables()[i].logit_type));
  }
  const std::size_t r = link.cells();
  Eigen::VectorXd lp(static_cast<Eigen::Index>(r));
  for (std::size_t k = 0; k < r; ++k) {
    const auto cats = lex_unindex(k, dims);
    double v = 0.0;
    for (std::size_t i = 0; i < dims.size(); ++i) v += std::log(margins[i](cats[i] - 1));
    lp(static_cast<Eigen::Index>(k)) = v;
  }
  return (lp.tail(static_cast<Eigen::Index>(r) - 1).array() - lp(0)).matrix();
}

// Damped Newton with a Levenberg-Marquardt fallback on theta, starting from
// `theta`. Returns the final infinity-norm residual; theta is updated in place.
double solve_theta(const EtaVector& eta, const LinkMatrices& link, const InversionOptions& options,
                   Eigen::VectorXd& theta) {
  Eigen::VectorXd log_pi = log_pi_from_theta(theta);
  Eigen::VectorXd residual = eta - eta_from_log_pi(log_pi, link);
  double merit = residual.squaredNorm();
  double norm = residual.lpNorm<Eigen::Infinity>();
  if (!std::isfinite(merit)) return std::numeric_limits<double>::infinity();

  auto try_step = [&](const Eigen::VectorXd& step) {
    if (!step.allFinite()) return false;
    const Eigen::VectorXd cand_theta = theta + step;
    const Eigen::VectorXd cand_log_pi = log_pi_from_theta(cand_theta);
    Eigen::VectorXd cand_res = eta - eta_from_log_pi(cand_log_pi, link);
    const double cand_merit = cand_res.squaredNorm();
    if (!std::isfinite(cand_merit) || !(cand_merit < merit)) return false;
    theta = cand_theta;
    log_pi = cand_log_pi;
    residual = std::move(cand_res);
    merit = cand_merit;
    norm = residual.lpNorm<Eigen::Infinity>();
    return true;
  };

  double lambda = 1e-3;
  for (int iter = 0; iter < options.max_iter && !(norm <= options.tol); ++iter) {
    const Eigen::MatrixXd jac = eta_jacobian_log(log_pi, link);
    const Eigen::VectorXd newton = jac.partialPivLu().solve(residual);
    bool accepted = false;
    double scale = 1.0;
    for (int h = 0; h <= options.max_halvings && !accepted; ++h, scale *= 0.5) accepted = try_step(scale * newton);
    if (!accepted) {
      const Eigen::MatrixXd jtj = jac.transpose() * jac;
      const Eigen::VectorXd jtr = jac.transpose() * residual;
      for (int k = 0; k < 40 && !accepted; ++k, lambda *= 10.0) {
        Eigen::MatrixXd a = jtj;
        a.diagonal().array() += lambda * (1.0 + jtj.diagonal().array());
        accepted = try_step(a.ldlt().solve(jtr));
      }
      lambda = std::max(1e-6, lambda / 100.0);
    }
    if (!accepted) break;
  }
  return norm;
}

}  // namespace

ProbabilityVector pi_from_eta(const EtaVector& eta, const LinkMatrices& link, const InversionOptions& options,
                              const ProbabilityVector* warm_start) {
  const auto t = static_cast<Eigen::Index>(link.eta_size());
  if (eta.size() != t) throw DimensionError("pi_from_eta: eta has wrong length");
  if (!eta.allFinite()) throw DomainError("pi_from_eta: eta must be finite");
  const Eigen::Index r = static_cast<Eigen::Index>(link.cells());

  // Starting points in order: the caller's warm start, the independence table
  // with the target margins, the uniform table.
  std::vector<Eigen::VectorXd> starts;
  if (warm_start) {
    if (warm_start->size() != r || (warm_start->array() <= 0.0).any())
      throw DomainError("pi_from_eta: warm start must be a positive vector over the cells");
    starts.push_back((warm_start->tail(r - 1).array().log() - std::log((*warm_start)(0))).matrix());
  }
  starts.push_back(independence_theta(eta, link));
  starts.push_back(Eigen::VectorXd::Zero(r - 1));

  Eigen::VectorXd theta;
  double norm = std::numeric_limits<double>::infinity();
  for (const auto& start : starts) {
    theta = start;
    norm = solve_theta(eta, link, options, theta);
    if (norm <= options.tol) break;
    // Homotopy in eta from the starting point, doubling the step after each
    // success and halving it after each failure.
    theta = start;
    const EtaVector eta0 = eta_from_log_pi(log_pi_from_theta(start), link);
    double s = 0.0;
    double ds = 0.25;
    while (s < 1.0 && ds > 1e-4) {
      const double next = std::min(1.0, s + ds);
      Eigen::VectorXd trial = theta;
      if (solve_theta((1.0 - next) * eta0 + next * eta, link, options, trial) <= options.tol) {
        theta = trial;
        s = next;
        ds *= 2.0;
      } else {
        ds *= 0.5;
      }
    }
    if (s >= 1.0) {
      norm = (eta - eta_from_log_pi(log_pi_from_theta(theta), link)).lpNorm<Eigen::Infinity>();
      if (norm <= options.tol) break;
    }
  }
  if (!(norm <= options.tol)) {
    std::ostringstream msg;
    msg << "pi_from_eta: Newton iteration stalled with residual " << norm;
    throw InversionError(msg.str(), norm);
  }
  ProbabilityVector pi = log_pi_from_theta(theta).array().exp().matrix();
  if ((pi.array() <= 0.0).any() || !pi.allFinite()) {
    throw InversionError("pi_from_eta: solution lies outside double precision (cell probability underflows)", norm);
  }
  pi /= pi.sum();
  return pi;
}

std::string export_matrices(const LinkMatrices& link) {
  std::ostringstream out;
  const Eigen::IOFormat fmt(Eigen::FullPrecision, Eigen::DontAlignCols, " ", "\n");
  out << "# C " << link.contrast().rows() << "x" << link.contrast().cols() << "\n"
      << link.contrast().format(fmt) << "\n";
  out << "# M " << link.marginalization().rows() << "x" << link.marginalization().cols() << "\n"
      << link.marginalization().format(fmt) << "\n";
  return out.str();
}

}  // namespace encompass
