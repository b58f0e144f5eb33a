#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aipw/core.hpp"

namespace aipw {

using Eigen::MatrixXd;

enum class LearnerKind {
  zero,
  marginal_mean,
  ols,
  ols_interactions,
  lasso_cv,
  hal_lite,
  super_learner,
};

std::string to_string(LearnerKind k);
LearnerKind learner_kind_from_string(const std::string& s);

struct LearnerSpec {
  LearnerKind kind = LearnerKind::ols;

  // lasso_cv / hal_lite
  int lambda_grid = 100;
  double lambda_min_ratio = 1e-4;
  int cv_folds = 5;

  // hal_lite
  int hal_max_degree = 2;   // in {2, 3}
  int hal_smoothness = 0;   // 0 = indicator, 1 = hinge
  int hal_knot_budget = 0;  // 0 -> default min(25, n/10) per dimension

  // super_learner
  std::vector<LearnerSpec> library;
  int sl_folds = 5;

  void validate() const;

  static LearnerSpec of(LearnerKind k);
  static LearnerSpec hal(int max_degree, int smoothness, int knot_budget = 0);
  /// {zero, marginal_mean, ols, ols_interactions, lasso_cv}.
  static std::vector<LearnerSpec> mis_library();
  /// mis_library plus hal_lite with (degree, smoothness) in {2,3}x{0,1}.
  static std::vector<LearnerSpec> rich_library(int knot_budget = 0);
};

/// One tensor-product basis term: prod_j 1(x_{dims[j]} >= knots[j]) for
/// smoothness 0, or prod_j max(x_{dims[j]} - knots[j], 0) for smoothness 1.
struct HalBasisTerm {
  std::vector<int> dims;
  std::vector<double> knots;
};

struct HalBasis {
  int smoothness = 0;
  std::vector<HalBasisTerm> terms;

  double eval(std::size_t term, const VectorXd& x) const;
  std::size_t size() const { return terms.size(); }
};

/// Basis terms for every covariate subset of size <= max_degree, with knots
/// from per-dimension empirical quantiles (at most knot_budget each, silently
/// truncated to the number of distinct values). Duplicate columns (as
/// evaluated on X) are removed.
HalBasis build_hal_basis(const MatrixXd& X, int max_degree, int smoothness,
                         int knot_budget);

/// Least squares on [1, A, X] (plus all pairwise products of {A, X} when
/// interactions is set). Near-singular designs fall back to a 1e-8 ridge on
/// the normal equations unless ridge_fallback is disabled.
OutcomePredictor fit_linear(const Dataset& data, bool interactions,
                            bool ridge_fallback = true);

/// Diagnostics from a lasso fit, exposed for tests.
struct LassoFitInfo {
  double lambda = 0.0;
  VectorXd coefficients;  // on the original (unstandardized) columns
  double intercept = 0.0;
  std::vector<double> gradients;  // -x_j' r / n on standardized columns
  std::vector<double> lambda_path;
  std::vector<double> cv_mse;  // mean CV MSE per path point
};

/// Coordinate-descent lasso over a log-spaced lambda path on standardized
/// columns of [A, X]; lambda selected by cv_folds-fold CV MSE, refit on the
/// full data. Intercept unpenalized (handled by centering).
OutcomePredictor fit_lasso_cv(const Dataset& data, const LearnerSpec& spec,
                              std::uint64_t seed, LassoFitInfo* info = nullptr);

/// Single-lambda lasso on [A, X] (no CV), exposed for diagnostics: lambda = 0
/// matches OLS, lambda >= lambda_max matches the marginal mean.
OutcomePredictor fit_lasso_at(const Dataset& data, double lambda,
                              LassoFitInfo* info = nullptr);

/// Lasso on [A, X, hal_basis(X), A*hal_basis(X)], predictions clamped to
/// [-M, M] with M = max |y| over the training data.
OutcomePredictor fit_hal_lite(const Dataset& data, const LearnerSpec& spec,
                              std::uint64_t seed, LassoFitInfo* info = nullptr);

struct FittedStack {
  std::vector<std::string> learner_names;
  VectorXd weights;              // convex: w_j >= 0, sum w_j = 1
  std::vector<double> cv_risk;   // CV MSE per retained base learner
  double stack_cv_risk = 0.0;    // CV MSE of the convex combination
  std::vector<std::string> dropped;  // names of base learners that failed
};

/// Convex stacking: CV predictions per base learner, non-negative least
/// squares weights normalized to sum 1, base learners refit on the full data.
OutcomePredictor fit_super_learner(const Dataset& data,
                                   const std::vector<LearnerSpec>& library,
                                   int folds, std::uint64_t seed,
                                   FittedStack* stack = nullptr);

/// Dispatch on spec.kind.
OutcomePredictor fit_learner(const Dataset& data, const LearnerSpec& spec,
                             std::uint64_t seed);

/// True when fitting the spec ignores the data (zero learner).
bool is_data_independent(const LearnerSpec& spec);

}  // namespace aipw
