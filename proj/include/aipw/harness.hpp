#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aipw/dgp.hpp"
#include "aipw/estimators.hpp"
#include "aipw/learners.hpp"

namespace aipw {

enum class EstimatorKind { ipw, ancova, aipw, aipw_crossfit };

std::string to_string(EstimatorKind k);
EstimatorKind estimator_kind_from_string(const std::string& s);

/// One entry of the scenario's estimator roster.
struct EstimatorSpec {
  std::string name;  // label used in output tables
  EstimatorKind kind = EstimatorKind::ipw;
  LearnerSpec learner;       // aipw / aipw_crossfit
  std::size_t K = 20;        // aipw_crossfit folds
  HcVariant hc = HcVariant::HC3;

  /// True for kinds that fit an outcome model (aipw, aipw_crossfit).
  bool uses_learner() const;
};

struct ScenarioConfig {
  std::string scenario_id = "scenario";
  DgpConfig dgp;
  std::size_t n = 400;
  std::size_t runs = 800;
  std::vector<EstimatorSpec> roster;
  double alpha = 0.05;
  std::uint64_t base_seed = 1;
  std::size_t test_set_size = 10000;
  std::uint64_t truth_mc_n = 100000;
  int threads = 0;  // 0 -> hardware concurrency

  void validate() const;
};

/// Per-run, per-estimator results. Failed runs carry no reports.
struct RunRecord {
  std::size_t run = 0;
  std::string estimator;
  bool failed = false;
  EstimateSet estimates;  // ancova fills only .ate
  bool has_arm_means = true;
  bool covered = false;   // ATE CI covers the truth
};

/// Oracle quantities for one learner-based estimator.
struct OracleArtifacts {
  std::string estimator;
  std::vector<double> q_hash_1;  // Q#(x, 1) per test point
  std::vector<double> q_hash_0;
  double sigma_hash_sq = 0.0;  // test-set second moment of T1(Q#)-T0(Q#)-ATE
  double sigma_star_sq = 0.0;
  double mean_var_est = 0.0;   // MC mean of the ATE variance_est
  double mc_scaled_var = 0.0;  // n * Var(point estimates)
  double sigma_hash_sq_mc_se = 0.0;
};

struct EstimatorAggregate {
  std::string estimator;
  std::size_t runs = 0;      // successful runs
  std::size_t failures = 0;
  std::size_t covered = 0;
  double coverage = 0.0;
  double wilson_low = 0.0;
  double wilson_high = 0.0;
  double mean_point = 0.0;
  double mean_point_se = 0.0;
  double mean_var_est = 0.0;
  double mc_scaled_var = 0.0;
  std::vector<double> points;  // ATE point estimates of successful runs
};

struct ScenarioResult {
  TruthReport truth;
  std::vector<RunRecord> records;           // run-major, roster order within run
  std::vector<EstimatorAggregate> aggregates;  // roster order
  std::vector<OracleArtifacts> oracles;        // learner-based estimators only
};

/// Runs the full Monte Carlo scenario. Per-run data comes from
/// derive_seed(base_seed, run); results are byte-identical for any thread
/// count. Individual run failures are recorded; more than 10% failures for
/// any estimator raises an error.
ScenarioResult run_scenario(const ScenarioConfig& cfg);

/// Sorted sample quantiles of points paired with quantiles of
/// Normal(truth.ate, sigma_hash_sq / n) at plotting positions (i - 0.5) / R.
std::vector<std::pair<double, double>> qq_data(const std::vector<double>& points,
                                               const TruthReport& truth,
                                               double sigma_hash_sq, std::size_t n);

/// Per-arm Monte Carlo check of the cross-fit variance-bias identity
/// sigma_dagger^2 - sigma_hash^2
///   = sum_k (|I_k|/n) { E[P_* ((1-pi)/pi)(Qhat_k - Q#)^2] - Var(psihat_k) }.
struct IdentityArmReport {
  int arm = 1;
  double lhs = 0.0;      // mean sigma_hat^2 - sigma_hash^2
  double rhs = 0.0;
  double lhs_se = 0.0;
  double rhs_se = 0.0;
  double combined_se = 0.0;
  double z = 0.0;        // |lhs - rhs| / combined_se
  double sigma_dagger_sq = 0.0;
  double sigma_hash_sq = 0.0;
  double e_term = 0.0;       // E[P_* ((1-pi)/pi)(Qhat_k - Q#)^2] summed with |I_k|/n weights
  double var_fold_term = 0.0;  // sum_k (|I_k|/n) Var(psihat_k)
};

struct IdentityCheckReport {
  IdentityArmReport arm1;
  IdentityArmReport arm0;
};

/// cfg.roster must contain exactly one aipw_crossfit estimator; K must divide
/// n (exchangeable splitting), otherwise an error is raised.
IdentityCheckReport variance_bias_identity_check(const ScenarioConfig& cfg);

}  // namespace aipw
