#pragma once

// Linear (about-)equality and inequality constraints on the marginal
// parameter vector eta:
//
//   |E eta| <= epsilon,   U eta >= 0.
//
// For stratified data eta stacks eta(b) over the s strata, so constraint
// matrices have s*t columns. Builders that describe a single stratum return
// t-column pieces; `stratify` replicates them within strata (I_s (x) .) or
// contrasts consecutive strata (D_s (x) .).

#include <Eigen/Dense>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "encompass/link.hpp"

namespace encompass {

struct ConstraintSet {
  Eigen::MatrixXd equality;    // e x cols
  Eigen::MatrixXd inequality;  // u x cols
  Eigen::VectorXd epsilon;     // e tolerances, all > 0

  static ConstraintSet empty(std::size_t columns);
  static ConstraintSet equalities(Eigen::MatrixXd e, double epsilon);
  static ConstraintSet equalities(Eigen::MatrixXd e, Eigen::VectorXd epsilon);
  static ConstraintSet inequalities(Eigen::MatrixXd u);

  std::size_t columns() const noexcept;
  std::size_t equality_rows() const noexcept { return static_cast<std::size_t>(equality.rows()); }
  std::size_t inequality_rows() const noexcept { return static_cast<std::size_t>(inequality.rows()); }
  bool is_empty() const noexcept { return equality_rows() == 0 && inequality_rows() == 0; }

  // Same constraints with every tolerance multiplied by `factor`.
  ConstraintSet scaled_epsilon(double factor) const;
  // Throws DimensionError / DomainError if the invariants do not hold.
  void check() const;
};

// (h-1) x h first-difference matrix: D_h x = (x2-x1, ..., xh-x(h-1)).
Eigen::MatrixXd first_differences(int h);

enum class StrataMode { within, between };

Eigen::MatrixXd stratify(const Eigen::MatrixXd& base, StrataMode mode, std::size_t strata);
ConstraintSet stratify(const ConstraintSet& base, StrataMode mode, std::size_t strata);

// Rows selecting one eta block (t columns).
Eigen::MatrixXd select_margin(const LinkMatrices& link, MarginSet margin);

// Two-variable builders. Variables are 0-based indices into the link; the
// defaults address A1 and A2. For a bivariate link these reproduce
// U = (O I), E = (O D), E = (-I I O), ... exactly.
ConstraintSet positive_association(const LinkMatrices& link, std::size_t i = 0, std::size_t j = 1);
ConstraintSet independence(const LinkMatrices& link, double epsilon, std::size_t i = 0, std::size_t j = 1);
ConstraintSet uniform_association(const LinkMatrices& link, double epsilon, std::size_t i = 0, std::size_t j = 1);
ConstraintSet marginal_homogeneity(const LinkMatrices& link, double epsilon, std::size_t i = 0, std::size_t j = 1);
// Logits of variable j dominate those of variable i: eta_j - eta_i >= 0.
ConstraintSet stochastic_order(const LinkMatrices& link, std::size_t i = 0, std::size_t j = 1);
// Every interaction among more than `order` variables is about zero.
ConstraintSet zero_higher_interactions(const LinkMatrices& link, int order, double epsilon);

// Shorthands for an m1 x m2 table (the matrices do not depend on logit type).
ConstraintSet positive_association(int m1, int m2);
ConstraintSet independence(int m1, int m2, double epsilon);
ConstraintSet uniform_association(int m1, int m2, double epsilon);
ConstraintSet marginal_homogeneity(int m, double epsilon);
ConstraintSet stochastic_order(int m);

// Direction of a marginal distribution shift across ordered strata.
enum class Trend { increase, decrease };

// Sign that a logit of the given type carries when the marginal distribution
// increases: +1 for local, global and continuation logits, -1 for reverse
// continuation logits.
int increase_sign(LogitType type);

// Between-strata constraints (s >= 2).
ConstraintSet marginal_trend(const LinkMatrices& link, std::size_t variable, std::size_t strata, Trend trend);
ConstraintSet association_trend(const LinkMatrices& link, std::size_t strata, Trend trend, std::size_t i = 0,
                                std::size_t j = 1);
ConstraintSet equal_association(const LinkMatrices& link, std::size_t strata, double epsilon, std::size_t i = 0,
                                std::size_t j = 1);
ConstraintSet equal_marginals(const LinkMatrices& link, std::size_t strata, double epsilon, std::size_t variable);

// Constant shift between the univariate logits of consecutive variables
// (all variables need the same number of categories), within each stratum.
ConstraintSet parallel_logits(const LinkMatrices& link, double epsilon);
// Constant shift of all univariate logits between consecutive strata.
ConstraintSet parallel_logits_across_strata(const LinkMatrices& link, std::size_t strata, double epsilon);

// delta_k: |E eta| <= eps and U eta >= 0, elementwise.
bool satisfies(const EtaVector& eta, const ConstraintSet& constraints);

ConstraintSet compose(std::span<const ConstraintSet> parts);
ConstraintSet compose(std::initializer_list<ConstraintSet> parts);

class ModelSpec {
 public:
  ModelSpec(std::string name, LinkMatrices link, std::size_t strata, ConstraintSet constraints,
            std::string notes = {});

  // The saturated model: no constraints.
  static ModelSpec encompassing(LinkMatrices link, std::size_t strata, std::string name = "M1");

  const std::string& name() const noexcept { return name_; }
  const LinkMatrices& link() const noexcept { return link_; }
  std::size_t strata() const noexcept { return strata_; }
  const ConstraintSet& constraints() const noexcept { return constraints_; }
  const std::string& notes() const noexcept { return notes_; }
  std::vector<LogitType> logit_types() const { return link_.logit_types(); }
  bool has_equalities() const noexcept { return constraints_.equality_rows() > 0; }

  ModelSpec with_constraints(ConstraintSet constraints, std::string name) const;

 private:
  std::string name_;
  LinkMatrices link_;
  std::size_t strata_;
  ConstraintSet constraints_;
  std::string notes_;
};

}  // namespace encompass
