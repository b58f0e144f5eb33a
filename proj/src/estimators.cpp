#include "aipw/estimators.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "aipw/rng.hpp"
#include "aipw/stats.hpp"

namespace aipw {

namespace {

EstimateReport make_report(Estimand estimand, double point, double variance_est,
                           std::size_t n, double alpha) {
  EstimateReport r;
  r.estimand = estimand;
  r.point = point;
  r.variance_est = variance_est;
  r.se = std::sqrt(variance_est / static_cast<double>(n));
  r.alpha = alpha;
  std::tie(r.ci_low, r.ci_high) = wald_ci(point, variance_est, n, alpha);
  return r;
}

// Arm means and ATE from per-observation transformed outcomes T1, T0, with
// the sigma^2-role variance as the empirical second moment of the centered
// transforms (divisor n).
EstimateSet reports_from_transforms(const std::vector<double>& t1,
                                    const std::vector<double>& t0, double alpha) {
  const std::size_t n = t1.size();
  const double nn = static_cast<double>(n);
  double s1 = 0.0, s0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s1 += t1[i];
    s0 += t0[i];
  }
  const double psi1 = s1 / nn, psi0 = s0 / nn;
  double v1 = 0.0, v0 = 0.0, vd = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d1 = t1[i] - psi1, d0 = t0[i] - psi0;
    v1 += d1 * d1;
    v0 += d0 * d0;
    const double dd = d1 - d0;
    vd += dd * dd;
  }
  EstimateSet out;
  out.mean1 = make_report(Estimand::mean1, psi1, v1 / nn, n, alpha);
  out.mean0 = make_report(Estimand::mean0, psi0, v0 / nn, n, alpha);
  out.ate = make_report(Estimand::ate, psi1 - psi0, vd / nn, n, alpha);
  return out;
}

}  // namespace

std::string to_string(Estimand e) {
  switch (e) {
    case Estimand::mean1: return "mean1";
    case Estimand::mean0: return "mean0";
    case Estimand::ate: return "ate";
  }
  throw std::logic_error("unknown estimand");
}

std::vector<std::vector<std::size_t>> FoldAssignment::fold_indices() const {
  std::vector<std::vector<std::size_t>> out(K);
  for (std::size_t i = 0; i < membership.size(); ++i) out[membership[i]].push_back(i);
  return out;
}

std::vector<std::size_t> FoldAssignment::fold_sizes() const {
  std::vector<std::size_t> out(K, 0);
  for (auto f : membership) ++out[f];
  return out;
}

FoldAssignment make_folds(std::size_t n, std::size_t K, std::uint64_t seed) {
  if (K < 2) throw std::invalid_argument("number of folds must be >= 2");
  if (n < K) throw std::invalid_argument("number of folds exceeds sample size");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);

  FoldAssignment out;
  out.K = K;
  out.membership.resize(n);
  const std::size_t base = n / K, extra = n % K;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < K; ++f) {
    const std::size_t sz = base + (f < extra ? 1 : 0);
    for (std::size_t j = 0; j < sz; ++j) out.membership[idx[pos + j]] = f;
    pos += sz;
  }
  return out;
}

std::pair<double, double> wald_ci(double point, double variance_est, std::size_t n,
                                  double alpha) {
  if (variance_est < 0.0) throw std::invalid_argument("variance_est must be >= 0");
  if (n == 0) throw std::invalid_argument("n must be >= 1");
  const double half = z_quantile(alpha / 2.0) *
                      std::sqrt(variance_est / static_cast<double>(n));
  return {point - half, point + half};
}

EstimateSet estimate_ipw(const Dataset& data, double alpha) {
  data.require_both_arms();
  const OutcomePredictor zero = zero_predictor();
  const std::size_t n = data.n();
  std::vector<double> t1(n), t0(n);
  for (std::size_t i = 0; i < n; ++i) {
    t1[i] = transform(zero, 1, data.observations[i], data.propensity);
    t0[i] = transform(zero, 0, data.observations[i], data.propensity);
  }
  return reports_from_transforms(t1, t0, alpha);
}

EstimateReport estimate_ancova(const Dataset& data, double alpha, HcVariant hc) {
  data.require_both_arms();
  const std::size_t n = data.n();
  const std::size_t p = data.dim();
  const Eigen::Index k = static_cast<Eigen::Index>(p + 2);
  if (n <= static_cast<std::size_t>(k)) {
    throw std::invalid_argument("ancova requires n > number of regressors");
  }
  MatrixXd X(n, k);
  VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Observation& v = data.observations[i];
    X(i, 0) = 1.0;
    X(i, 1) = v.a;
    X.row(i).tail(p) = v.x;
    y[i] = v.y;
  }
  const MatrixXd xtx = X.transpose() * X;
  Eigen::FullPivLU<MatrixXd> lu(xtx);
  lu.setThreshold(1e-10);
  if (!lu.isInvertible()) throw std::runtime_error("singular design");
  const MatrixXd xtx_inv = lu.inverse();
  const VectorXd beta = xtx_inv * (X.transpose() * y);
  const VectorXd resid = y - X * beta;

  MatrixXd meat = MatrixXd::Zero(k, k);
  for (std::size_t i = 0; i < n; ++i) {
    double w = resid[i] * resid[i];
    if (hc == HcVariant::HC3) {
      const double h = X.row(i) * xtx_inv * X.row(i).transpose();
      const double d = 1.0 - h;
      if (d <= 0.0) throw std::runtime_error("leverage >= 1 in sandwich variance");
      w /= d * d;
    }
    meat.noalias() += w * X.row(i).transpose() * X.row(i);
  }
  if (hc == HcVariant::HC1) {
    meat *= static_cast<double>(n) / static_cast<double>(n - static_cast<std::size_t>(k));
  }
  const MatrixXd cov = xtx_inv * meat * xtx_inv;
  const double var_coef = cov(1, 1);

  // variance_est plays the sigma^2 role: n * Var(coefficient on A).
  return make_report(Estimand::ate, beta[1], static_cast<double>(n) * var_coef, n, alpha);
}

EstimateSet estimate_aipw(const Dataset& data, const OutcomePredictor& q, double alpha) {
  data.require_both_arms();
  const std::size_t n = data.n();
  std::vector<double> t1(n), t0(n);
  for (std::size_t i = 0; i < n; ++i) {
    t1[i] = transform(q, 1, data.observations[i], data.propensity);
    t0[i] = transform(q, 0, data.observations[i], data.propensity);
  }
  return reports_from_transforms(t1, t0, alpha);
}

CrossfitResult estimate_aipw_crossfit(const Dataset& data, const LearnerSpec& learner,
                                      std::size_t K, std::uint64_t seed, double alpha) {
  data.require_both_arms();
  const std::size_t n = data.n();
  CrossfitResult out;
  out.folds = make_folds(n, K, derive_seed(seed, 0xf01d0ULL));
  const auto folds = out.folds.fold_indices();

  double psi1 = 0.0, psi0 = 0.0, psi_ate = 0.0;
  double var1 = 0.0, var0 = 0.0, var_ate = 0.0;
  const double nn = static_cast<double>(n);

  for (std::size_t kf = 0; kf < K; ++kf) {
    Dataset train;
    train.propensity = data.propensity;
    for (std::size_t i = 0; i < n; ++i) {
      if (out.folds.membership[i] != kf) train.observations.push_back(data.observations[i]);
    }
    train.require_both_arms();
    const OutcomePredictor q = fit_learner(train, learner, derive_seed(seed, kf));
    out.fold_predictors.push_back(q);

    const auto& idx = folds[kf];
    if (idx.empty()) throw std::runtime_error("empty fold");
    const double m = static_cast<double>(idx.size());
    std::vector<double> t1(idx.size()), t0(idx.size());
    double s1 = 0.0, s0 = 0.0;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const Observation& v = data.observations[idx[j]];
      t1[j] = transform(q, 1, v, data.propensity);
      t0[j] = transform(q, 0, v, data.propensity);
      s1 += t1[j];
      s0 += t0[j];
    }
    const double p1 = s1 / m, p0 = s0 / m;
    double v1 = 0.0, v0 = 0.0, vd = 0.0;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const double d1 = t1[j] - p1, d0 = t0[j] - p0;
      v1 += d1 * d1;
      v0 += d0 * d0;
      const double dd = d1 - d0;
      vd += dd * dd;
    }
    out.fold_psi1.push_back(p1);
    out.fold_psi0.push_back(p0);

    // |I_k|-weighted aggregation of fold-level points and variances.
    const double w = m / nn;
    psi1 += w * p1;
    psi0 += w * p0;
    psi_ate += w * (p1 - p0);
    var1 += w * (v1 / m);
    var0 += w * (v0 / m);
    var_ate += w * (vd / m);
  }

  out.estimates.mean1 = make_report(Estimand::mean1, psi1, var1, n, alpha);
  out.estimates.mean0 = make_report(Estimand::mean0, psi0, var0, n, alpha);
  out.estimates.ate = make_report(Estimand::ate, psi_ate, var_ate, n, alpha);
  return out;
}

}  // namespace aipw
