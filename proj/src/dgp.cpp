#include "aipw/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "aipw/rng.hpp"
#include "aipw/stats.hpp"

namespace aipw {

namespace {

double expit(double t) { return 1.0 / (1.0 + std::exp(-t)); }

constexpr std::size_t kChunk = 4096;

}  // namespace

double true_outcome_mean(const VectorXd& x, int a) {
  if (x.size() < 3) throw std::invalid_argument("true_outcome_mean requires dim(x) >= 3");
  const double x1 = x[0], x2 = x[1], x3 = x[2];
  double q = 8.0 * a + 7.0 * std::abs(x1) + 10.0 * std::sin(20.0 * x2);
  q -= 10.0 * (x3 > 0.3 ? x3 * x3 : 1.0);
  q += 10.0 * x1 * std::abs(x2) * x3 + 14.0 * std::sqrt(std::abs(x3));
  q += 4.0 * a / (1.0 + expit(-8.0 * x1 * x2));
  q += 9.0 * (x1 * x1 + x2 * x2 > 0.25 ? 1.0 : 0.0);
  q -= 13.0 * std::min({x1, x2, x3});
  q += std::max(std::cos(7.0 * x1 + 13.0 * x3), x2) * (-17.0 + 5.0 * a);
  return q;
}

double noise_sd(double q) {
  return std::max({1.0, 0.1 * std::abs(q), 2.0 * std::abs(std::sin(q))});
}

OutcomePredictor true_outcome_predictor() {
  return {[](const VectorXd& x, int a) { return true_outcome_mean(x, a); }, "truth", 0.0};
}

Dataset generate_dataset(const DgpConfig& cfg, std::size_t n, std::uint64_t seed) {
  if (cfg.p < 3) throw std::invalid_argument("DGP requires p >= 3");
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  Dataset data;
  data.propensity = PropensitySpec(cfg.pi1);
  data.observations.resize(n);
  const std::size_t nchunks = (n + kChunk - 1) / kChunk;
  for (std::size_t c = 0; c < nchunks; ++c) {
    Rng rng(derive_seed(seed, c));
    const std::size_t end = std::min(n, (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      Observation& v = data.observations[i];
      v.x.resize(cfg.p);
      for (int j = 0; j < cfg.p; ++j) v.x[j] = rng.uniform(-1.0, 1.0);
      v.a = rng.bernoulli(cfg.pi1) ? 1 : 0;
      const double q = true_outcome_mean(v.x, v.a);
      v.y = q + noise_sd(q) * rng.normal();
    }
  }
  return data;
}

TruthReport compute_truth(const DgpConfig& cfg, std::uint64_t mc_n, std::uint64_t seed) {
  if (mc_n < 10000) throw std::invalid_argument("compute_truth requires mc_n >= 1e4");
  TruthReport out;
  out.mc_n = mc_n;

  // Pass 1: ATE from covariate draws only.
  double sum_d = 0.0, sum_d2 = 0.0;
  double sum_psi1 = 0.0, sum_psi0 = 0.0;
  VectorXd x(cfg.p);
  {
    const std::size_t nchunks = (mc_n + kChunk - 1) / kChunk;
    for (std::size_t c = 0; c < nchunks; ++c) {
      Rng rng(derive_seed(seed, c));
      const std::uint64_t end = std::min<std::uint64_t>(mc_n, (c + 1) * kChunk);
      for (std::uint64_t i = c * kChunk; i < end; ++i) {
        for (int j = 0; j < cfg.p; ++j) x[j] = rng.uniform(-1.0, 1.0);
        const double q1 = true_outcome_mean(x, 1);
        const double q0 = true_outcome_mean(x, 0);
        sum_psi1 += q1;
        sum_psi0 += q0;
        const double d = q1 - q0;
        sum_d += d;
        sum_d2 += d * d;
      }
    }
  }
  const double nn = static_cast<double>(mc_n);
  out.psi1 = sum_psi1 / nn;
  out.psi0 = sum_psi0 / nn;
  out.ate = sum_d / nn;
  out.ate_mc_se = std::sqrt(std::max(0.0, sum_d2 / nn - out.ate * out.ate) / nn);

  // Pass 2: efficient influence function variance on full (X,A,Y) draws,
  // from an offset stream so the two passes are independent.
  const Dataset sample = generate_dataset(cfg, mc_n, derive_seed(seed, 0x5e1fULL, 1));
  const OutcomePredictor qstar = true_outcome_predictor();
  double sum_f2 = 0.0, sum_f4 = 0.0;
  for (const auto& v : sample.observations) {
    const double f = transform(qstar, 1, v, sample.propensity) -
                     transform(qstar, 0, v, sample.propensity) - out.ate;
    sum_f2 += f * f;
    sum_f4 += f * f * f * f;
  }
  out.sigma_star_sq = sum_f2 / nn;
  out.sigma_star_sq_mc_se =
      std::sqrt(std::max(0.0, sum_f4 / nn - out.sigma_star_sq * out.sigma_star_sq) / nn);
  return out;
}

}  // namespace aipw
