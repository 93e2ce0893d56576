#include "encompass/hypothesis.hpp"

#include <algorithm>

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

Eigen::MatrixXd vstack(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() == 0) return b;
  if (b.rows() == 0) return a;
  Eigen::MatrixXd out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

void require_pair(const LinkMatrices& link, std::size_t i, std::size_t j) {
  const auto q = link.variables().size();
  if (i >= q || j >= q || i == j) {
    throw DimensionError("variable pair (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                         ") is not valid for a link with " + std::to_string(q) + " variables");
  }
}

void require_strata(std::size_t strata) {
  if (strata < 2) throw DomainError("between-strata constraints need at least 2 strata");
}

Eigen::MatrixXd association_rows(const LinkMatrices& link, std::size_t i, std::size_t j) {
  require_pair(link, i, j);
  return select_margin(link, MarginSet::of({i, j}));
}

Eigen::MatrixXd logit_rows(const LinkMatrices& link, std::size_t v) {
  if (v >= link.variables().size()) throw DimensionError("variable index out of range");
  return select_margin(link, MarginSet::of({v}));
}

bool same_categories(const LinkMatrices& link, std::size_t i, std::size_t j) {
  return link.variables()[i].categories == link.variables()[j].categories;
}

LinkMatrices bivariate_link(int m1, int m2) {
  const std::vector<int> dims{m1, m2};
  return build_link(dims, LogitType::local);
}

}  // namespace

ConstraintSet ConstraintSet::empty(std::size_t columns) {
  const auto c = static_cast<Eigen::Index>(columns);
  return {Eigen::MatrixXd(0, c), Eigen::MatrixXd(0, c), Eigen::VectorXd(0)};
}

ConstraintSet ConstraintSet::equalities(Eigen::MatrixXd e, double epsilon) {
  const auto rows = e.rows();
  return equalities(std::move(e), Eigen::VectorXd::Constant(rows, epsilon));
}

ConstraintSet ConstraintSet::equalities(Eigen::MatrixXd e, Eigen::VectorXd epsilon) {
  const auto cols = e.cols();
  ConstraintSet c{std::move(e), Eigen::MatrixXd(0, cols), std::move(epsilon)};
  c.check();
  return c;
}

ConstraintSet ConstraintSet::inequalities(Eigen::MatrixXd u) {
  const auto cols = u.cols();
  return {Eigen::MatrixXd(0, cols), std::move(u), Eigen::VectorXd(0)};
}

std::size_t ConstraintSet::columns() const noexcept {
  return static_cast<std::size_t>(std::max(equality.cols(), inequality.cols()));
}

ConstraintSet ConstraintSet::scaled_epsilon(double factor) const {
  if (!(factor > 0.0)) throw DomainError("epsilon scale factor must be positive");
  ConstraintSet out = *this;
  out.epsilon *= factor;
  return out;
}

void ConstraintSet::check() const {
  if (equality.rows() > 0 && inequality.rows() > 0 && equality.cols() != inequality.cols()) {
    throw DimensionError("equality and inequality matrices have different column counts");
  }
  if (epsilon.size() != equality.rows()) {
    throw DimensionError("epsilon has " + std::to_string(epsilon.size()) + " entries for " +
                         std::to_string(equality.rows()) + " equality rows");
  }
  if ((epsilon.array() <= 0.0).any()) throw DomainError("about-equality tolerances must be positive");
}

Eigen::MatrixXd first_differences(int h) {
  if (h < 2) throw DomainError("first differences need h >= 2, got " + std::to_string(h));
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(h - 1, h);
  for (int i = 0; i < h - 1; ++i) {
    d(i, i) = -1.0;
    d(i, i + 1) = 1.0;
  }
  return d;
}

Eigen::MatrixXd stratify(const Eigen::MatrixXd& base, StrataMode mode, std::size_t strata) {
  if (strata == 0) throw DomainError("at least one stratum required");
  const auto s = static_cast<Eigen::Index>(strata);
  if (mode == StrataMode::within) return kron(Eigen::MatrixXd::Identity(s, s), base);
  require_strata(strata);
  return kron(first_differences(static_cast<int>(s)), base);
}

ConstraintSet stratify(const ConstraintSet& base, StrataMode mode, std::size_t strata) {
  base.check();
  const auto t = static_cast<Eigen::Index>(base.columns());
  const auto s = static_cast<Eigen::Index>(strata);
  ConstraintSet out;
  out.equality = base.equality.rows() ? stratify(base.equality, mode, strata)
                                      : Eigen::MatrixXd(0, t * s);
  out.inequality = base.inequality.rows() ? stratify(base.inequality, mode, strata)
                                          : Eigen::MatrixXd(0, t * s);
  const auto copies = mode == StrataMode::within ? s : s - 1;
  out.epsilon = base.epsilon.replicate(copies, 1);
  return out;
}

Eigen::MatrixXd select_margin(const LinkMatrices& link, MarginSet margin) {
  const auto& blk = link.block(margin);
  Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(blk.size),
                                              static_cast<Eigen::Index>(link.eta_size()));
  for (std::size_t k = 0; k < blk.size; ++k)
    sel(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(blk.offset + k)) = 1.0;
  return sel;
}

ConstraintSet positive_association(const LinkMatrices& link, std::size_t i, std::size_t j) {
  return ConstraintSet::inequalities(association_rows(link, i, j));
}

ConstraintSet independence(const LinkMatrices& link, double epsilon, std::size_t i, std::size_t j) {
  return ConstraintSet::equalities(association_rows(link, i, j), epsilon);
}

ConstraintSet uniform_association(const LinkMatrices& link, double epsilon, std::size_t i, std::size_t j) {
  const Eigen::MatrixXd rows = association_rows(link, i, j);
  if (rows.rows() < 2) {
    ConstraintSet c = ConstraintSet::empty(link.eta_size());
    return c;
  }
  return ConstraintSet::equalities(first_differences(static_cast<int>(rows.rows())) * rows, epsilon);
}

ConstraintSet marginal_homogeneity(const LinkMatrices& link, double epsilon, std::size_t i, std::size_t j) {
  require_pair(link, i, j);
  if (!same_categories(link, i, j)) throw DimensionError("marginal homogeneity needs equal category counts");
  return ConstraintSet::equalities(logit_rows(link, j) - logit_rows(link, i), epsilon);
}

ConstraintSet stochastic_order(const LinkMatrices& link, std::size_t i, std::size_t j) {
  require_pair(link, i, j);
  if (!same_categories(link, i, j)) throw DimensionError("stochastic order needs equal category counts");
  return ConstraintSet::inequalities(logit_rows(link, j) - logit_rows(link, i));
}

ConstraintSet zero_higher_interactions(const LinkMatrices& link, int order, double epsilon) {
  if (order < 1) throw DomainError("interaction order must be at least 1");
  Eigen::MatrixXd e(0, static_cast<Eigen::Index>(link.eta_size()));
  for (const auto& blk : link.blocks()) {
    if (blk.margin.order() > order) e = vstack(e, select_margin(link, blk.margin));
  }
  if (e.rows() == 0) return ConstraintSet::empty(link.eta_size());
  return ConstraintSet::equalities(std::move(e), epsilon);
}

ConstraintSet positive_association(int m1, int m2) { return positive_association(bivariate_link(m1, m2)); }
ConstraintSet independence(int m1, int m2, double epsilon) { return independence(bivariate_link(m1, m2), epsilon); }
ConstraintSet uniform_association(int m1, int m2, double epsilon) {
  return uniform_association(bivariate_link(m1, m2), epsilon);
}
ConstraintSet marginal_homogeneity(int m, double epsilon) { return marginal_homogeneity(bivariate_link(m, m), epsilon); }
ConstraintSet stochastic_order(int m) { return stochastic_order(bivariate_link(m, m)); }

int increase_sign(LogitType type) { return type == LogitType::reverse_continuation ? -1 : 1; }

ConstraintSet marginal_trend(const LinkMatrices& link, std::size_t variable, std::size_t strata, Trend trend) {
  require_strata(strata);
  const double sign = static_cast<double>(increase_sign(link.variables().at(variable).logit_type)) *
                      (trend == Trend::increase ? 1.0 : -1.0);
  return ConstraintSet::inequalities(sign * stratify(logit_rows(link, variable), StrataMode::between, strata));
}

ConstraintSet association_trend(const LinkMatrices& link, std::size_t strata, Trend trend, std::size_t i,
                                std::size_t j) {
  require_strata(strata);
  const double sign = trend == Trend::increase ? 1.0 : -1.0;
  return ConstraintSet::inequalities(sign * stratify(association_rows(link, i, j), StrataMode::between, strata));
}

ConstraintSet equal_association(const LinkMatrices& link, std::size_t strata, double epsilon, std::size_t i,
                                std::size_t j) {
  require_strata(strata);
  return ConstraintSet::equalities(stratify(association_rows(link, i, j), StrataMode::between, strata), epsilon);
}

ConstraintSet equal_marginals(const LinkMatrices& link, std::size_t strata, double epsilon, std::size_t variable) {
  require_strata(strata);
  return ConstraintSet::equalities(stratify(logit_rows(link, variable), StrataMode::between, strata), epsilon);
}

ConstraintSet parallel_logits(const LinkMatrices& link, double epsilon) {
  const auto q = link.variables().size();
  Eigen::MatrixXd e(0, static_cast<Eigen::Index>(link.eta_size()));
  for (std::size_t v = 0; v + 1 < q; ++v) {
    if (!same_categories(link, v, v + 1)) throw DimensionError("parallel logits need equal category counts");
    const int m = link.variables()[v].categories;
    if (m < 3) continue;
    const Eigen::MatrixXd shift = logit_rows(link, v + 1) - logit_rows(link, v);
    e = vstack(e, first_differences(m - 1) * shift);
  }
  if (e.rows() == 0) return ConstraintSet::empty(link.eta_size());
  return ConstraintSet::equalities(std::move(e), epsilon);
}

ConstraintSet parallel_logits_across_strata(const LinkMatrices& link, std::size_t strata, double epsilon) {
  require_strata(strata);
  Eigen::MatrixXd logits(0, static_cast<Eigen::Index>(link.eta_size()));
  for (std::size_t v = 0; v < link.variables().size(); ++v) logits = vstack(logits, logit_rows(link, v));
  if (logits.rows() < 2) return ConstraintSet::empty(link.eta_size() * strata);
  const Eigen::MatrixXd base = first_differences(static_cast<int>(logits.rows())) * logits;
  return ConstraintSet::equalities(stratify(base, StrataMode::between, strata), epsilon);
}

bool satisfies(const EtaVector& eta, const ConstraintSet& constraints) {
  const auto cols = static_cast<Eigen::Index>(constraints.columns());
  if (!constraints.is_empty() && eta.size() != cols) {
    throw DimensionError("eta has length " + std::to_string(eta.size()) + ", constraints expect " +
                         std::to_string(cols));
  }
  if (constraints.inequality.rows() > 0 && ((constraints.inequality * eta).array() < 0.0).any()) return false;
  if (constraints.equality.rows() > 0 &&
      ((constraints.equality * eta).array().abs() > constraints.epsilon.array()).any())
    return false;
  return true;
}

ConstraintSet compose(std::span<const ConstraintSet> parts) {
  if (parts.empty()) throw DomainError("compose needs at least one constraint set");
  std::size_t cols = 0;
  for (const auto& p : parts) {
    p.check();
    const auto c = p.columns();
    if (cols == 0) cols = c;
    if (c != 0 && c != cols) throw DimensionError("cannot compose constraint sets with different column counts");
  }
  ConstraintSet out = ConstraintSet::empty(cols);
  for (const auto& p : parts) {
    if (p.equality.rows()) {
      out.equality = vstack(out.equality, p.equality);
      Eigen::VectorXd eps(out.epsilon.size() + p.epsilon.size());
      eps << out.epsilon, p.epsilon;
      out.epsilon = std::move(eps);
    }
    if (p.inequality.rows()) out.inequality = vstack(out.inequality, p.inequality);
  }
  return out;
}

ConstraintSet compose(std::initializer_list<ConstraintSet> parts) {
  return compose(std::span<const ConstraintSet>(parts.begin(), parts.size()));
}

ModelSpec::ModelSpec(std::string name, LinkMatrices link, std::size_t strata, ConstraintSet constraints,
                     std::string notes)
    : name_(std::move(name)),
      link_(std::move(link)),
      strata_(strata),
      constraints_(std::move(constraints)),
      notes_(std::move(notes)) {
  if (strata_ == 0) throw DomainError("model needs at least one stratum");
  constraints_.check();
  const auto expected = link_.eta_size() * strata_;
  if (!constraints_.is_empty() && constraints_.columns() != expected) {
    throw DimensionError("model '" + name_ + "': constraints have " + std::to_string(constraints_.columns()) +
                         " columns, link and strata give " + std::to_string(expected));
  }
  if (constraints_.is_empty()) constraints_ = ConstraintSet::empty(expected);
}

ModelSpec ModelSpec::encompassing(LinkMatrices link, std::size_t strata, std::string name) {
  const auto cols = link.eta_size() * strata;
  return ModelSpec(std::move(name), std::move(link), strata, ConstraintSet::empty(cols), "saturated model");
}

ModelSpec ModelSpec::with_constraints(ConstraintSet constraints, std::string name) const {
  return ModelSpec(std::move(name), link_, strata_, std::move(constraints), notes_);
}

}  // namespace encompass
