#include "encompass/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "encompass/error.hpp"

namespace encompass {

namespace {

struct Problem {
  const LinkMatrices& link;
  std::size_t strata;
  std::vector<Eigen::VectorXd> counts;  // smoothed, per stratum
  double scale = 1.0;                    // 1 / total smoothed count
  Eigen::MatrixXd g_rows;                // constraint rows, g = G eta + h >= 0
  Eigen::VectorXd g_offset;
};

struct State {
  Eigen::VectorXd theta;
  std::vector<Eigen::VectorXd> log_pi;
  Eigen::VectorXd eta;
  Eigen::VectorXd g;
  double f = 0.0;  // scaled negative log-likelihood
};

double log_sum_exp(const Eigen::VectorXd& v) {
  const double hi = v.maxCoeff();
  return hi + std::log((v.array() - hi).exp().sum());
}

Problem make_problem(const LinkMatrices& link, std::size_t strata, std::vector<Eigen::VectorXd> counts,
                     const ConstraintSet& cs) {
  Problem p{link, strata, std::move(counts), 1.0, {}, {}};
  double total = 0.0;
  for (const auto& c : p.counts) total += c.sum();
  p.scale = 1.0 / total;
  const auto cols = static_cast<Eigen::Index>(link.eta_size() * strata);
  const auto u = cs.inequality.rows();
  const auto e = cs.equality.rows();
  p.g_rows = Eigen::MatrixXd::Zero(u + 2 * e, cols);
  p.g_offset = Eigen::VectorXd::Zero(u + 2 * e);
  if (u) p.g_rows.topRows(u) = cs.inequality;
  if (e) {
    p.g_rows.middleRows(u, e) = -cs.equality;
    p.g_rows.bottomRows(e) = cs.equality;
    p.g_offset.segment(u, e) = cs.epsilon;
    p.g_offset.tail(e) = cs.epsilon;
  }
  return p;
}

State evaluate(const Problem& p, const Eigen::VectorXd& theta) {
  const auto r1 = static_cast<Eigen::Index>(p.link.cells()) - 1;
  const auto t = static_cast<Eigen::Index>(p.link.eta_size());
  State s;
  s.theta = theta;
  s.eta.resize(t * static_cast<Eigen::Index>(p.strata));
  s.f = 0.0;
  for (std::size_t b = 0; b < p.strata; ++b) {
    Eigen::VectorXd lp(r1 + 1);
    lp(0) = 0.0;
    lp.tail(r1) = theta.segment(static_cast<Eigen::Index>(b) * r1, r1);
    lp.array() -= log_sum_exp(lp);
    s.eta.segment(static_cast<Eigen::Index>(b) * t, t) = eta_from_log_pi(lp, p.link);
    s.f -= p.counts[b].dot(lp);
    s.log_pi.push_back(std::move(lp));
  }
  s.f *= p.scale;
  s.g = p.g_rows * s.eta + p.g_offset;
  return s;
}

// d eta / d theta, block diagonal over strata.
Eigen::MatrixXd jacobian(const Problem& p, const State& s) {
  const auto r1 = static_cast<Eigen::Index>(p.link.cells()) - 1;
  const auto t = static_cast<Eigen::Index>(p.link.eta_size());
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(t * static_cast<Eigen::Index>(p.strata), r1 * static_cast<Eigen::Index>(p.strata));
  for (std::size_t b = 0; b < p.strata; ++b) {
    const auto o = static_cast<Eigen::Index>(b);
    j.block(o * t, o * r1, t, r1) = eta_jacobian_log(s.log_pi[b], p.link);
  }
  return j;
}

Eigen::VectorXd objective_gradient(const Problem& p, const State& s) {
  const auto r1 = static_cast<Eigen::Index>(p.link.cells()) - 1;
  Eigen::VectorXd grad(r1 * static_cast<Eigen::Index>(p.strata));
  for (std::size_t b = 0; b < p.strata; ++b) {
    const double n = p.counts[b].sum();
    const Eigen::VectorXd pi = s.log_pi[b].array().exp().matrix();
    grad.segment(static_cast<Eigen::Index>(b) * r1, r1) = -(p.counts[b].tail(r1) - n * pi.tail(r1)) * p.scale;
  }
  return grad;
}

Eigen::MatrixXd objective_hessian(const Problem& p, const State& s) {
  const auto r1 = static_cast<Eigen::Index>(p.link.cells()) - 1;
  const auto dim = r1 * static_cast<Eigen::Index>(p.strata);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t b = 0; b < p.strata; ++b) {
    const double n = p.counts[b].sum() * p.scale;
    const Eigen::VectorXd pi = s.log_pi[b].array().exp().matrix().tail(r1);
    const auto o = static_cast<Eigen::Index>(b) * r1;
    h.block(o, o, r1, r1) = n * (Eigen::MatrixXd(pi.asDiagonal()) - pi * pi.transpose());
  }
  return h;
}

double merit(const State& s, const Eigen::VectorXd& lambda, double rho) {
  const Eigen::VectorXd shifted = (lambda - rho * s.g).cwiseMax(0.0);
  return s.f + (shifted.squaredNorm() - lambda.squaredNorm()) / (2.0 * rho);
}

double violation_of(const Eigen::VectorXd& g) { return g.size() ? std::max(0.0, -g.minCoeff()) : 0.0; }

FitResult solve(const Problem& p, const std::vector<Eigen::VectorXd>& raw_counts, const FitOptions& opt) {
  const auto r1 = static_cast<Eigen::Index>(p.link.cells()) - 1;
  const auto dim = r1 * static_cast<Eigen::Index>(p.strata);
  const auto m = p.g_rows.rows();

  // Start from the smoothed unconstrained MLE.
  Eigen::VectorXd theta(dim);
  for (std::size_t b = 0; b < p.strata; ++b) {
    const auto& c = p.counts[b];
    theta.segment(static_cast<Eigen::Index>(b) * r1, r1) = (c.tail(r1).array().log() - std::log(c(0))).matrix();
  }
  State s = evaluate(p, theta);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
  double rho = opt.rho0;
  double last_violation = violation_of(s.g);

  FitResult out;
  out.smoothing = opt.smoothing;
  double kkt = std::numeric_limits<double>::infinity();

  for (int outer = 0; outer < opt.max_outer; ++outer) {
    out.outer_iterations = outer + 1;
    for (int inner = 0; inner < opt.max_inner; ++inner) {
      const Eigen::MatrixXd jg = m ? Eigen::MatrixXd(p.g_rows * jacobian(p, s)) : Eigen::MatrixXd(0, dim);
      const Eigen::VectorXd mult = (lambda - rho * s.g).cwiseMax(0.0);
      Eigen::VectorXd grad = objective_gradient(p, s);
      if (m) grad -= jg.transpose() * mult;
      if (grad.lpNorm<Eigen::Infinity>() <= 0.01 * opt.kkt_tol) break;

      Eigen::MatrixXd h = objective_hessian(p, s);
      for (Eigen::Index j = 0; j < m; ++j)
        if (mult(j) > 0.0) h.noalias() += rho * jg.row(j).transpose() * jg.row(j);
      h.diagonal().array() += 1e-10 + 1e-12 * h.diagonal().cwiseAbs().maxCoeff();
      Eigen::VectorXd dir = -h.ldlt().solve(grad);
      double slope = grad.dot(dir);
      if (!dir.allFinite() || slope >= 0.0) {
        dir = -grad;
        slope = -grad.squaredNorm();
      }

      const double phi0 = merit(s, lambda, rho);
      double step = 1.0;
      bool accepted = false;
      for (int k = 0; k < 50; ++k, step *= 0.5) {
        State cand = evaluate(p, s.theta + step * dir);
        if (!std::isfinite(cand.f) || !cand.eta.allFinite()) continue;
        const double phi = merit(cand, lambda, rho);
        if (phi <= phi0 + 1e-4 * step * slope) {
          s = std::move(cand);
          out.trace.push_back({outer, phi});
          accepted = true;
          break;
        }
      }
      if (!accepted || step * dir.lpNorm<Eigen::Infinity>() < 1e-14) break;
    }

    // Multiplier update and KKT check.
    const Eigen::MatrixXd jg = m ? Eigen::MatrixXd(p.g_rows * jacobian(p, s)) : Eigen::MatrixXd(0, dim);
    if (m) lambda = (lambda - rho * s.g).cwiseMax(0.0);
    Eigen::VectorXd stat = objective_gradient(p, s);
    if (m) stat -= jg.transpose() * lambda;
    const double viol = violation_of(s.g);
    double comp = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) comp = std::max(comp, std::abs(lambda(j) * std::max(s.g(j), 0.0)));
    kkt = std::max({stat.lpNorm<Eigen::Infinity>(), comp, viol});
    if (kkt <= opt.kkt_tol && viol <= opt.feas_tol) {
      out.converged = true;
      break;
    }
    if (viol > 0.25 * last_violation && viol > opt.feas_tol) rho = std::min(rho * 10.0, 1e12);
    last_violation = viol;
  }

  out.kkt_residual = kkt;
  out.max_violation = violation_of(s.g);
  out.eta_hat = s.eta;
  out.objective = -s.f / p.scale;
  out.loglik = 0.0;
  for (std::size_t b = 0; b < p.strata; ++b) {
    Eigen::VectorXd pi = s.log_pi[b].array().exp().matrix();
    pi /= pi.sum();
    for (Eigen::Index k = 0; k < pi.size(); ++k)
      if (raw_counts[b](k) > 0.0) out.loglik += raw_counts[b](k) * s.log_pi[b](k);
    out.pi_hat.push_back(std::move(pi));
  }
  if (!out.converged) {
    out.messages.push_back("fit stopped after " + std::to_string(out.outer_iterations) +
                           " outer iterations with KKT residual " + std::to_string(kkt) + " and violation " +
                           std::to_string(out.max_violation));
  }
  return out;
}

}  // namespace

double constraint_violation(const EtaVector& eta, const ConstraintSet& cs) {
  double v = 0.0;
  if (cs.inequality.rows()) v = std::max(v, -(cs.inequality * eta).minCoeff());
  if (cs.equality.rows())
    v = std::max(v, ((cs.equality * eta).cwiseAbs() - cs.epsilon).maxCoeff());
  return std::max(v, 0.0);
}

FitResult constrained_mle(const StratifiedTable& table, const ModelSpec& model, const FitOptions& options) {
  if (table.dims() != model.link().dims())
    throw DimensionError("table shape does not match the model's link");
  if (table.strata_count() != model.strata())
    throw DimensionError("table has " + std::to_string(table.strata_count()) + " strata, model expects " +
                         std::to_string(model.strata()));
  if (!(options.smoothing >= 0.0)) throw DomainError("smoothing must be non-negative");
  std::vector<Eigen::VectorXd> raw;
  std::vector<Eigen::VectorXd> smoothed;
  for (std::size_t b = 0; b < table.strata_count(); ++b) {
    const auto& t = table.stratum(b);
    if (t.total() == 0)
      throw ValidationError("stratum '" + table.strata()[b] + "' has no observations; cannot fit");
    Eigen::VectorXd y(static_cast<Eigen::Index>(t.cells()));
    for (std::size_t k = 0; k < t.cells(); ++k) y(static_cast<Eigen::Index>(k)) = static_cast<double>(t.counts()[k]);
    raw.push_back(y);
    if (options.smoothing == 0.0 && (y.array() <= 0.0).any())
      throw DomainError("stratum '" + table.strata()[b] + "' has empty cells; use positive smoothing");
    smoothed.push_back((y.array() + options.smoothing).matrix());
  }
  const Problem p = make_problem(model.link(), model.strata(), std::move(smoothed), model.constraints());
  return solve(p, raw, options);
}

FitResult prior_center(const ModelSpec& model, const FitOptions& options) {
  std::vector<Eigen::VectorXd> ones(model.strata(), Eigen::VectorXd::Ones(static_cast<Eigen::Index>(model.link().cells())));
  const Problem p = make_problem(model.link(), model.strata(), ones, model.constraints());
  FitOptions opt = options;
  opt.smoothing = 0.0;
  return solve(p, ones, opt);
}

}  // namespace encompass
