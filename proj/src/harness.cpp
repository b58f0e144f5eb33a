#include "aipw/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "aipw/rng.hpp"
#include "aipw/stats.hpp"

namespace aipw {

namespace {

constexpr std::size_t kRunBlock = 8;
constexpr std::uint64_t kTruthTag = 0x7271ULL;
constexpr std::uint64_t kTestTag = 0x7e57ULL;

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Runs fn(block_index, run_begin, run_end) for contiguous run blocks across
/// a worker pool. Each block is handled by exactly one worker, so any
/// per-block state is filled deterministically; callers must reduce block
/// results in block order to stay independent of the thread count.
template <typename Fn>
void parallel_blocks(std::size_t runs, int threads, Fn&& fn) {
  const std::size_t nblocks = (runs + kRunBlock - 1) / kRunBlock;
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t b = next.fetch_add(1);
      if (b >= nblocks) return;
      const std::size_t lo = b * kRunBlock;
      const std::size_t hi = std::min(runs, lo + kRunBlock);
      fn(b, lo, hi);
    }
  };
  const int nt = std::min<std::size_t>(resolve_threads(threads), nblocks);
  if (nt <= 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

double ipw_style_transform(double q, int obs_a, double y, int a_prime, double p) {
  double out = q;
  if (obs_a == a_prime) out += (y - q) / p;
  return out;
}

}  // namespace

std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::ipw: return "ipw";
    case EstimatorKind::ancova: return "ancova";
    case EstimatorKind::aipw: return "aipw";
    case EstimatorKind::aipw_crossfit: return "aipw_crossfit";
  }
  throw std::logic_error("unknown estimator kind");
}

EstimatorKind estimator_kind_from_string(const std::string& s) {
  if (s == "ipw") return EstimatorKind::ipw;
  if (s == "ancova") return EstimatorKind::ancova;
  if (s == "aipw") return EstimatorKind::aipw;
  if (s == "aipw_crossfit") return EstimatorKind::aipw_crossfit;
  throw std::invalid_argument("unknown estimator kind: " + s);
}

bool EstimatorSpec::uses_learner() const {
  return kind == EstimatorKind::aipw || kind == EstimatorKind::aipw_crossfit;
}

void ScenarioConfig::validate() const {
  if (runs < 1) throw std::invalid_argument("runs must be >= 1");
  if (n < 2) throw std::invalid_argument("n must be >= 2");
  if (test_set_size < 1000) throw std::invalid_argument("test_set_size must be >= 1000");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
  if (roster.empty()) throw std::invalid_argument("estimator roster must be nonempty");
  if (dgp.p < 3) throw std::invalid_argument("dgp.p must be >= 3");
  for (std::size_t i = 0; i < roster.size(); ++i) {
    const auto& e = roster[i];
    if (e.name.empty()) throw std::invalid_argument("estimator name must be nonempty");
    for (std::size_t j = 0; j < i; ++j) {
      if (roster[j].name == e.name) {
        throw std::invalid_argument("duplicate estimator label: " + e.name);
      }
    }
    if (e.kind == EstimatorKind::aipw_crossfit && e.K < 2) {
      throw std::invalid_argument("aipw_crossfit requires K >= 2");
    }
    if (e.uses_learner()) e.learner.validate();
  }
  if (truth_mc_n < 10000) throw std::invalid_argument("truth_mc_n must be >= 1e4");
}

namespace {

struct EstimatorBlockAcc {
  VectorXd sum1;  // per-test-point prediction sums
  VectorXd sum0;
  std::size_t contributions = 0;  // (run, fold) units accumulated
};

struct BlockResult {
  std::vector<RunRecord> records;
  std::vector<EstimatorBlockAcc> acc;  // learner-based estimators, roster order
};

// Predictions of q on the test covariates for both arms, added to acc.
void accumulate_predictions(const OutcomePredictor& q, const Dataset& test,
                            EstimatorBlockAcc& acc) {
  for (std::size_t i = 0; i < test.n(); ++i) {
    acc.sum1[i] += q.predict(test.observations[i].x, 1);
    acc.sum0[i] += q.predict(test.observations[i].x, 0);
  }
  ++acc.contributions;
}

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  ScenarioResult out;
  out.truth = compute_truth(cfg.dgp, cfg.truth_mc_n, derive_seed(cfg.base_seed, kTruthTag));
  const Dataset test =
      generate_dataset(cfg.dgp, cfg.test_set_size, derive_seed(cfg.base_seed, kTestTag));

  std::vector<std::size_t> learner_slot(cfg.roster.size(), SIZE_MAX);
  std::size_t n_learner = 0;
  for (std::size_t e = 0; e < cfg.roster.size(); ++e) {
    if (cfg.roster[e].uses_learner()) learner_slot[e] = n_learner++;
  }

  const std::size_t nblocks = (cfg.runs + kRunBlock - 1) / kRunBlock;
  std::vector<BlockResult> blocks(nblocks);

  parallel_blocks(cfg.runs, cfg.threads, [&](std::size_t b, std::size_t lo, std::size_t hi) {
    BlockResult& blk = blocks[b];
    blk.acc.resize(n_learner);
    for (auto& a : blk.acc) {
      a.sum1 = VectorXd::Zero(test.n());
      a.sum0 = VectorXd::Zero(test.n());
    }
    for (std::size_t r = lo; r < hi; ++r) {
      const Dataset data = generate_dataset(cfg.dgp, cfg.n, derive_seed(cfg.base_seed, r));
      for (std::size_t e = 0; e < cfg.roster.size(); ++e) {
        const EstimatorSpec& spec = cfg.roster[e];
        RunRecord rec;
        rec.run = r;
        rec.estimator = spec.name;
        try {
          switch (spec.kind) {
            case EstimatorKind::ipw:
              rec.estimates = estimate_ipw(data, cfg.alpha);
              break;
            case EstimatorKind::ancova:
              rec.estimates.ate = estimate_ancova(data, cfg.alpha, spec.hc);
              rec.has_arm_means = false;
              break;
            case EstimatorKind::aipw: {
              const OutcomePredictor q =
                  fit_learner(data, spec.learner, derive_seed(cfg.base_seed, r, 1000 + e));
              rec.estimates = estimate_aipw(data, q, cfg.alpha);
              accumulate_predictions(q, test, blk.acc[learner_slot[e]]);
              break;
            }
            case EstimatorKind::aipw_crossfit: {
              const CrossfitResult cf = estimate_aipw_crossfit(
                  data, spec.learner, spec.K, derive_seed(cfg.base_seed, r, 1000 + e),
                  cfg.alpha);
              rec.estimates = cf.estimates;
              // Q# pools predictions over runs and folds.
              for (const auto& q : cf.fold_predictors) {
                accumulate_predictions(q, test, blk.acc[learner_slot[e]]);
              }
              break;
            }
          }
          rec.covered = rec.estimates.ate.ci_low <= out.truth.ate &&
                        out.truth.ate <= rec.estimates.ate.ci_high;
        } catch (const std::exception&) {
          rec.failed = true;
        }
        blk.records.push_back(std::move(rec));
      }
    }
  });

  // Deterministic reduction in block order.
  std::vector<EstimatorBlockAcc> total(n_learner);
  for (auto& a : total) {
    a.sum1 = VectorXd::Zero(test.n());
    a.sum0 = VectorXd::Zero(test.n());
  }
  for (const auto& blk : blocks) {
    for (std::size_t s = 0; s < n_learner; ++s) {
      total[s].sum1 += blk.acc[s].sum1;
      total[s].sum0 += blk.acc[s].sum0;
      total[s].contributions += blk.acc[s].contributions;
    }
    for (const auto& rec : blk.records) out.records.push_back(rec);
  }

  // Aggregates per estimator, in roster order.
  for (std::size_t e = 0; e < cfg.roster.size(); ++e) {
    EstimatorAggregate agg;
    agg.estimator = cfg.roster[e].name;
    double sum_var = 0.0;
    for (const auto& rec : out.records) {
      if (rec.estimator != agg.estimator) continue;
      if (rec.failed) {
        ++agg.failures;
        continue;
      }
      ++agg.runs;
      agg.covered += rec.covered ? 1 : 0;
      agg.points.push_back(rec.estimates.ate.point);
      sum_var += rec.estimates.ate.variance_est;
    }
    if (agg.failures * 10 > cfg.runs) {
      throw std::runtime_error("estimator " + agg.estimator + ": more than 10% of runs failed");
    }
    if (agg.runs == 0) {
      throw std::runtime_error("estimator " + agg.estimator + ": no successful runs");
    }
    agg.coverage = static_cast<double>(agg.covered) / static_cast<double>(agg.runs);
    std::tie(agg.wilson_low, agg.wilson_high) = wilson_interval(agg.covered, agg.runs, 0.95);
    agg.mean_point = mean(agg.points);
    agg.mean_var_est = sum_var / static_cast<double>(agg.runs);
    if (agg.runs > 1) {
      const double v = variance_unbiased(agg.points);
      agg.mc_scaled_var = static_cast<double>(cfg.n) * v;
      agg.mean_point_se = std::sqrt(v / static_cast<double>(agg.runs));
    }
    out.aggregates.push_back(std::move(agg));
  }

  // Oracle artifacts for learner-based estimators.
  for (std::size_t e = 0; e < cfg.roster.size(); ++e) {
    if (learner_slot[e] == SIZE_MAX) continue;
    const EstimatorBlockAcc& acc = total[learner_slot[e]];
    if (acc.contributions == 0) {
      throw std::runtime_error("estimator " + cfg.roster[e].name + ": no stored predictions");
    }
    OracleArtifacts oa;
    oa.estimator = cfg.roster[e].name;
    const double c = static_cast<double>(acc.contributions);
    oa.q_hash_1.resize(test.n());
    oa.q_hash_0.resize(test.n());
    std::vector<double> infl_sq(test.n());
    for (std::size_t i = 0; i < test.n(); ++i) {
      oa.q_hash_1[i] = acc.sum1[i] / c;
      oa.q_hash_0[i] = acc.sum0[i] / c;
      const Observation& v = test.observations[i];
      const double p1 = test.propensity.prob(1, v.x);
      const double t1 = ipw_style_transform(oa.q_hash_1[i], v.a, v.y, 1, p1);
      const double t0 = ipw_style_transform(oa.q_hash_0[i], v.a, v.y, 0, 1.0 - p1);
      const double dd = t1 - t0 - out.truth.ate;
      infl_sq[i] = dd * dd;
    }
    oa.sigma_hash_sq = mean(infl_sq);
    oa.sigma_hash_sq_mc_se =
        std::sqrt(variance_n(infl_sq) / static_cast<double>(test.n()));
    oa.sigma_star_sq = out.truth.sigma_star_sq;
    const EstimatorAggregate& agg = out.aggregates[e];
    oa.mean_var_est = agg.mean_var_est;
    oa.mc_scaled_var = agg.mc_scaled_var;
    out.oracles.push_back(std::move(oa));
  }
  return out;
}

std::vector<std::pair<double, double>> qq_data(const std::vector<double>& points,
                                               const TruthReport& truth,
                                               double sigma_hash_sq, std::size_t n) {
  if (points.size() < 10) throw std::invalid_argument("qq_data requires >= 10 points");
  std::vector<double> sorted = points;
  std::sort(sorted.begin(), sorted.end());
  const double sd = std::sqrt(sigma_hash_sq / static_cast<double>(n));
  std::vector<std::pair<double, double>> out(sorted.size());
  const double r = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double p = (static_cast<double>(i) + 0.5) / r;
    out[i] = {truth.ate + sd * inv_norm_cdf(p), sorted[i]};
  }
  return out;
}

IdentityCheckReport variance_bias_identity_check(const ScenarioConfig& cfg) {
  cfg.validate();
  const EstimatorSpec* spec = nullptr;
  for (const auto& e : cfg.roster) {
    if (e.kind == EstimatorKind::aipw_crossfit) {
      if (spec) throw std::invalid_argument("identity check requires exactly one aipw_crossfit");
      spec = &e;
    }
  }
  if (!spec) throw std::invalid_argument("identity check requires an aipw_crossfit estimator");
  if (cfg.n % spec->K != 0) {
    throw std::invalid_argument("identity requires exchangeable splitting");
  }
  const std::size_t K = spec->K;
  const std::size_t R = cfg.runs;

  const Dataset test =
      generate_dataset(cfg.dgp, cfg.test_set_size, derive_seed(cfg.base_seed, kTestTag));
  const std::size_t tn = test.n();

  // Positivity weights (1 - pi(a|x)) / pi(a|x) on the test points.
  std::vector<double> w1(tn), w0(tn);
  for (std::size_t i = 0; i < tn; ++i) {
    const double p1 = test.propensity.prob(1, test.observations[i].x);
    w1[i] = (1.0 - p1) / p1;
    w0[i] = p1 / (1.0 - p1);
  }

  const std::uint64_t est_seed_tag = 1000;  // matches run_scenario's first roster slot

  // Pass 1: prediction sums for Q# plus per-run variance estimates and fold
  // point estimates. Fits are re-derived in pass 2 from the same seeds.
  struct Pass1Block {
    VectorXd sum1, sum0;
    std::vector<double> sigma_sq_1, sigma_sq_0;  // per run
    std::vector<double> fold_psi1, fold_psi0;    // run-major, K per run
  };
  const std::size_t nblocks = (R + kRunBlock - 1) / kRunBlock;
  std::vector<Pass1Block> blocks(nblocks);
  parallel_blocks(R, cfg.threads, [&](std::size_t b, std::size_t lo, std::size_t hi) {
    Pass1Block& blk = blocks[b];
    blk.sum1 = VectorXd::Zero(tn);
    blk.sum0 = VectorXd::Zero(tn);
    for (std::size_t r = lo; r < hi; ++r) {
      const Dataset data = generate_dataset(cfg.dgp, cfg.n, derive_seed(cfg.base_seed, r));
      const CrossfitResult cf = estimate_aipw_crossfit(
          data, spec->learner, K, derive_seed(cfg.base_seed, r, est_seed_tag), cfg.alpha);
      blk.sigma_sq_1.push_back(cf.estimates.mean1.variance_est);
      blk.sigma_sq_0.push_back(cf.estimates.mean0.variance_est);
      for (std::size_t k = 0; k < K; ++k) {
        blk.fold_psi1.push_back(cf.fold_psi1[k]);
        blk.fold_psi0.push_back(cf.fold_psi0[k]);
        for (std::size_t i = 0; i < tn; ++i) {
          blk.sum1[i] += cf.fold_predictors[k].predict(test.observations[i].x, 1);
          blk.sum0[i] += cf.fold_predictors[k].predict(test.observations[i].x, 0);
        }
      }
    }
  });

  VectorXd qh1 = VectorXd::Zero(tn), qh0 = VectorXd::Zero(tn);
  std::vector<double> sigma_sq_1, sigma_sq_0, fold_psi1, fold_psi0;
  for (const auto& blk : blocks) {
    qh1 += blk.sum1;
    qh0 += blk.sum0;
    sigma_sq_1.insert(sigma_sq_1.end(), blk.sigma_sq_1.begin(), blk.sigma_sq_1.end());
    sigma_sq_0.insert(sigma_sq_0.end(), blk.sigma_sq_0.begin(), blk.sigma_sq_0.end());
    fold_psi1.insert(fold_psi1.end(), blk.fold_psi1.begin(), blk.fold_psi1.end());
    fold_psi0.insert(fold_psi0.end(), blk.fold_psi0.begin(), blk.fold_psi0.end());
  }
  const double rk = static_cast<double>(R * K);
  qh1 /= rk;
  qh0 /= rk;

  // Pass 2: per-run mean over folds of the test-set integral
  // P_* w (Qhat_k - Q#)^2, refitting deterministically from the same seeds.
  struct Pass2Block {
    std::vector<double> e1, e0;  // per run
  };
  std::vector<Pass2Block> blocks2(nblocks);
  parallel_blocks(R, cfg.threads, [&](std::size_t b, std::size_t lo, std::size_t hi) {
    Pass2Block& blk = blocks2[b];
    for (std::size_t r = lo; r < hi; ++r) {
      const Dataset data = generate_dataset(cfg.dgp, cfg.n, derive_seed(cfg.base_seed, r));
      const CrossfitResult cf = estimate_aipw_crossfit(
          data, spec->learner, K, derive_seed(cfg.base_seed, r, est_seed_tag), cfg.alpha);
      double v1 = 0.0, v0 = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        double s1 = 0.0, s0 = 0.0;
        for (std::size_t i = 0; i < tn; ++i) {
          const double d1 = cf.fold_predictors[k].predict(test.observations[i].x, 1) - qh1[i];
          const double d0 = cf.fold_predictors[k].predict(test.observations[i].x, 0) - qh0[i];
          s1 += w1[i] * d1 * d1;
          s0 += w0[i] * d0 * d0;
        }
        v1 += s1 / static_cast<double>(tn);
        v0 += s0 / static_cast<double>(tn);
      }
      blk.e1.push_back(v1 / static_cast<double>(K));
      blk.e0.push_back(v0 / static_cast<double>(K));
    }
  });
  std::vector<double> e1, e0;
  for (const auto& blk : blocks2) {
    e1.insert(e1.end(), blk.e1.begin(), blk.e1.end());
    e0.insert(e0.end(), blk.e0.begin(), blk.e0.end());
  }

  const auto arm_report = [&](int arm, const std::vector<double>& sigma_sq,
                              const std::vector<double>& fold_psi,
                              const std::vector<double>& eterm, const VectorXd& qh,
                              const std::vector<double>& w) {
    IdentityArmReport rep;
    rep.arm = arm;

    // sigma_hash^2 for the arm: central test-set variance of T_arm(Q#).
    std::vector<double> t(tn);
    for (std::size_t i = 0; i < tn; ++i) {
      const Observation& v = test.observations[i];
      const double p = test.propensity.prob(arm, v.x);
      t[i] = ipw_style_transform(qh[i], v.a, v.y, arm, p);
    }
    const double tbar = mean(t);
    std::vector<double> dev_sq(tn);
    for (std::size_t i = 0; i < tn; ++i) dev_sq[i] = (t[i] - tbar) * (t[i] - tbar);
    rep.sigma_hash_sq = mean(dev_sq);
    const double hash_se = std::sqrt(variance_n(dev_sq) / static_cast<double>(tn));

    rep.sigma_dagger_sq = mean(sigma_sq);
    const double dagger_se =
        std::sqrt(variance_unbiased(sigma_sq) / static_cast<double>(R));

    rep.lhs = rep.sigma_dagger_sq - rep.sigma_hash_sq;
    rep.lhs_se = std::sqrt(dagger_se * dagger_se + hash_se * hash_se);

    rep.e_term = mean(eterm);
    const double e_se = std::sqrt(variance_unbiased(eterm) / static_cast<double>(R));

    // sum_k (1/K) Var(psihat_k): pooled variance over all (run, fold) fold
    // estimates (identically distributed under exchangeable splitting).
    rep.var_fold_term = variance_unbiased(fold_psi);
    const double fmean = mean(fold_psi);
    std::vector<double> fdev(fold_psi.size());
    for (std::size_t i = 0; i < fold_psi.size(); ++i) {
      fdev[i] = (fold_psi[i] - fmean) * (fold_psi[i] - fmean);
    }
    const double vf_se =
        std::sqrt(variance_unbiased(fdev) / static_cast<double>(fdev.size()));

    rep.rhs = rep.e_term - rep.var_fold_term;
    rep.rhs_se = std::sqrt(e_se * e_se + vf_se * vf_se);
    rep.combined_se = std::sqrt(rep.lhs_se * rep.lhs_se + rep.rhs_se * rep.rhs_se);
    rep.z = rep.combined_se > 0.0 ? std::abs(rep.lhs - rep.rhs) / rep.combined_se : 0.0;
    return rep;
  };

  IdentityCheckReport out;
  out.arm1 = arm_report(1, sigma_sq_1, fold_psi1, e1, qh1, w1);
  out.arm0 = arm_report(0, sigma_sq_0, fold_psi0, e0, qh0, w0);
  return out;
}

}  // namespace aipw
