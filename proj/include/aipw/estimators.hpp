#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aipw/core.hpp"
#include "aipw/learners.hpp"

namespace aipw {

enum class Estimand { mean1, mean0, ate };

std::string to_string(Estimand e);

/// Point estimate with plug-in scaled variance and symmetric Wald-CI.
/// variance_est is the sigma^2-role quantity; se = sqrt(variance_est / n).
struct EstimateReport {
  Estimand estimand = Estimand::ate;
  double point = 0.0;
  double variance_est = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double alpha = 0.05;
};

/// Reports for both arm means and the ATE.
struct EstimateSet {
  EstimateReport mean1;
  EstimateReport mean0;
  EstimateReport ate;
};

struct FoldAssignment {
  std::size_t K = 0;
  std::vector<std::size_t> membership;  // observation index -> fold id

  std::vector<std::vector<std::size_t>> fold_indices() const;
  std::vector<std::size_t> fold_sizes() const;
};

/// Random permutation split into K contiguous chunks of sizes floor(n/K) or
/// ceil(n/K); deterministic per seed.
FoldAssignment make_folds(std::size_t n, std::size_t K, std::uint64_t seed);

/// (point -/+ z_{alpha/2} sqrt(variance_est / n)).
std::pair<double, double> wald_ci(double point, double variance_est, std::size_t n,
                                  double alpha);

/// Inverse probability weighted estimator; variance from the empirical second
/// moment of the estimated influence function.
EstimateSet estimate_ipw(const Dataset& data, double alpha);

enum class HcVariant { HC0, HC1, HC3 };

/// ANCOVA: OLS of Y on (1, A, X); the ATE estimate is the coefficient on A
/// and variance_est is n times the heteroskedasticity-consistent sandwich
/// variance of that coefficient.
EstimateReport estimate_ancova(const Dataset& data, double alpha,
                               HcVariant hc = HcVariant::HC3);

/// Non-cross-fit AIPW with an externally fitted outcome model.
EstimateSet estimate_aipw(const Dataset& data, const OutcomePredictor& q, double alpha);

struct CrossfitResult {
  EstimateSet estimates;
  FoldAssignment folds;
  std::vector<OutcomePredictor> fold_predictors;
  // Per-arm per-fold sample-split estimates (fold-major), used by the
  // variance-bias diagnostics.
  std::vector<double> fold_psi1;
  std::vector<double> fold_psi0;
};

/// K-fold cross-fit AIPW: the outcome model for fold k is fitted on the
/// complement of fold k.
CrossfitResult estimate_aipw_crossfit(const Dataset& data, const LearnerSpec& learner,
                                      std::size_t K, std::uint64_t seed, double alpha);

}  // namespace aipw
