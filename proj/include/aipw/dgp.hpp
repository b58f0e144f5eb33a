#pragma once

#include <cstdint>

#include "aipw/core.hpp"

namespace aipw {

/// Simulation data-generating process: X ~ Unif(-1,1)^p i.i.d.,
/// A ~ Bernoulli(1/2), Y | X,A ~ Normal(true_outcome_mean, noise_sd^2).
/// Only the first three covariates drive the outcome; extra covariates are
/// generated but inert.
struct DgpConfig {
  int p = 3;  // covariate dimension, >= 3
  double pi1 = 0.5;
};

/// Monte Carlo ground truth for a DGP.
struct TruthReport {
  double psi1 = 0.0;
  double psi0 = 0.0;
  double ate = 0.0;
  double sigma_star_sq = 0.0;  // efficient asymptotic variance for the ATE
  std::uint64_t mc_n = 0;
  double ate_mc_se = 0.0;
  double sigma_star_sq_mc_se = 0.0;
};

/// Conditional outcome mean for the simulation DGP. Requires dim(x) >= 3.
double true_outcome_mean(const VectorXd& x, int a);

/// Conditional outcome standard deviation as a function of q = true mean.
double noise_sd(double q);

/// Predictor wrapping the true outcome mean.
OutcomePredictor true_outcome_predictor();

/// Deterministic per seed; generation is chunked so each chunk derives an
/// independent stream from (seed, chunk index).
Dataset generate_dataset(const DgpConfig& cfg, std::size_t n, std::uint64_t seed);

/// Monte Carlo truth: ATE as the MC mean of Q*(X,1)-Q*(X,0), sigma_star_sq as
/// the MC variance of the efficient influence function on full (X,A,Y) draws.
TruthReport compute_truth(const DgpConfig& cfg, std::uint64_t mc_n, std::uint64_t seed);

}  // namespace aipw
