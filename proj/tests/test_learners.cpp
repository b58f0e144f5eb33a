#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "aipw/learners.hpp"
#include "aipw/rng.hpp"

using namespace aipw;

namespace {

Dataset linear_dataset(std::size_t n, std::size_t p, std::uint64_t seed,
                       double noise = 0.0) {
  Dataset d;
  d.propensity = PropensitySpec(0.5);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    Observation v;
    v.x = VectorXd::Zero(static_cast<Eigen::Index>(p));
    for (std::size_t j = 0; j < p; ++j) v.x[j] = rng.uniform(-1.0, 1.0);
    v.a = rng.bernoulli(0.5) ? 1 : 0;
    v.y = 2.0 + 3.0 * v.a + v.x[0] + noise * rng.normal();
    d.observations.push_back(v);
  }
  return d;
}

double test_mse(const OutcomePredictor& q, const Dataset& d) {
  double s = 0.0;
  for (const auto& v : d.observations) {
    const double e = v.y - q.predict(v.x, v.a);
    s += e * e;
  }
  return s / static_cast<double>(d.n());
}

}  // namespace

TEST_CASE("fit_linear recovers a noiseless linear model") {
  const Dataset d = linear_dataset(60, 3, 1);
  const OutcomePredictor q = fit_linear(d, false);
  // Check predictions at probe points; coefficients (2, 3, 1, 0, 0) imply
  // exact prediction everywhere.
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    VectorXd x(3);
    for (int j = 0; j < 3; ++j) x[j] = rng.uniform(-1.0, 1.0);
    const int a = rng.bernoulli(0.5) ? 1 : 0;
    CHECK(std::abs(q.predict(x, a) - (2.0 + 3.0 * a + x[0])) <= 1e-8);
  }
}

TEST_CASE("fit_linear interactions nest the additive model") {
  const Dataset d = linear_dataset(80, 2, 5, 1.0);
  const OutcomePredictor add = fit_linear(d, false);
  const OutcomePredictor inter = fit_linear(d, true);
  CHECK(test_mse(inter, d) <= test_mse(add, d) + 1e-10);
}

TEST_CASE("fit_linear flags singular designs when fallback is disabled") {
  Dataset d;
  d.propensity = PropensitySpec(0.5);
  for (int i = 0; i < 6; ++i) {
    Observation v;
    v.x = VectorXd::Constant(1, 1.0);  // x column duplicates the intercept
    v.a = i % 2;
    v.y = i;
    d.observations.push_back(v);
  }
  CHECK_THROWS_WITH_AS(fit_linear(d, false, false), "singular design", std::runtime_error);
  CHECK_NOTHROW(fit_linear(d, false, true));
}

TEST_CASE("fit_linear beats the marginal mean in-sample") {
  const Dataset d = linear_dataset(400, 3, 9, 1.0);
  const OutcomePredictor ols = fit_linear(d, false);
  const OutcomePredictor mm = fit_learner(d, LearnerSpec::of(LearnerKind::marginal_mean), 0);
  CHECK(test_mse(ols, d) < test_mse(mm, d));
}

TEST_CASE("lasso at lambda 0 matches OLS") {
  const Dataset d = linear_dataset(100, 3, 21, 0.5);
  const OutcomePredictor lasso = fit_lasso_at(d, 0.0);
  const OutcomePredictor ols = fit_linear(d, false);
  Rng rng(22);
  for (int i = 0; i < 50; ++i) {
    VectorXd x(3);
    for (int j = 0; j < 3; ++j) x[j] = rng.uniform(-1.0, 1.0);
    const int a = rng.bernoulli(0.5) ? 1 : 0;
    CHECK(std::abs(lasso.predict(x, a) - ols.predict(x, a)) <= 1e-6);
  }
}

TEST_CASE("lasso at a huge lambda collapses to the marginal mean") {
  const Dataset d = linear_dataset(100, 3, 23, 0.5);
  double ybar = 0.0;
  for (const auto& v : d.observations) ybar += v.y;
  ybar /= static_cast<double>(d.n());
  LassoFitInfo info;
  const OutcomePredictor q = fit_lasso_at(d, 1e6, &info);
  CHECK(q.predict(VectorXd::Zero(3), 1) == doctest::Approx(ybar).epsilon(1e-12));
  CHECK(info.coefficients.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lasso solutions satisfy the KKT conditions") {
  const Dataset d = linear_dataset(150, 6, 31, 1.0);
  LearnerSpec spec = LearnerSpec::of(LearnerKind::lasso_cv);
  LassoFitInfo info;
  (void)fit_lasso_cv(d, spec, 17, &info);
  REQUIRE(info.gradients.size() == 7);  // [A, X1..X6]
  REQUIRE(info.coefficients.size() == 7);
  for (std::size_t j = 0; j < info.gradients.size(); ++j) {
    const double g = info.gradients[j];
    const double b = info.coefficients[static_cast<Eigen::Index>(j)];
    if (b == 0.0) {
      CHECK(std::abs(g) <= info.lambda + 1e-6);
    } else {
      CHECK(std::abs(g + info.lambda * (b > 0 ? 1.0 : -1.0)) <= 1e-6);
    }
  }
  CHECK(info.lambda_path.size() == static_cast<std::size_t>(spec.lambda_grid));
  CHECK(info.cv_mse.size() == info.lambda_path.size());
  CHECK(std::is_sorted(info.lambda_path.rbegin(), info.lambda_path.rend()));
}

TEST_CASE("cv lasso recovers a sparse signal") {
  Dataset d;
  d.propensity = PropensitySpec(0.5);
  Rng rng(41);
  const std::size_t n = 200, p = 10;
  for (std::size_t i = 0; i < n; ++i) {
    Observation v;
    v.x = VectorXd::Zero(p);
    for (std::size_t j = 0; j < p; ++j) v.x[j] = rng.uniform(-1.0, 1.0);
    v.a = rng.bernoulli(0.5) ? 1 : 0;
    v.y = 4.0 * v.x[0] + 0.3 * rng.normal();
    d.observations.push_back(v);
  }
  LassoFitInfo info;
  const OutcomePredictor q = fit_lasso_cv(d, LearnerSpec::of(LearnerKind::lasso_cv), 3, &info);
  CHECK(info.coefficients[1] != 0.0);  // X1 column (after the treatment column)
  // Out-of-sample MSE close to the oracle (true regression) noise floor.
  Dataset test;
  test.propensity = d.propensity;
  Rng rng2(42);
  for (std::size_t i = 0; i < 2000; ++i) {
    Observation v;
    v.x = VectorXd::Zero(p);
    for (std::size_t j = 0; j < p; ++j) v.x[j] = rng2.uniform(-1.0, 1.0);
    v.a = rng2.bernoulli(0.5) ? 1 : 0;
    v.y = 4.0 * v.x[0] + 0.3 * rng2.normal();
    test.observations.push_back(v);
  }
  CHECK(test_mse(q, test) <= 1.1 * 0.09 + 0.01);
}

TEST_CASE("lasso fits are deterministic in the seed") {
  const Dataset d = linear_dataset(120, 4, 51, 1.0);
  LassoFitInfo a, b;
  (void)fit_lasso_cv(d, LearnerSpec::of(LearnerKind::lasso_cv), 5, &a);
  (void)fit_lasso_cv(d, LearnerSpec::of(LearnerKind::lasso_cv), 5, &b);
  CHECK(a.lambda == b.lambda);
  CHECK((a.coefficients - b.coefficients).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hal basis: single knot at the median of distinct values") {
  MatrixXd X(3, 1);
  X << -1.0, 0.0, 1.0;
  const HalBasis basis = build_hal_basis(X, 1, 0, 1);
  REQUIRE(basis.size() == 1);
  CHECK(basis.eval(0, VectorXd::Constant(1, -1.0)) == 0.0);
  CHECK(basis.eval(0, VectorXd::Constant(1, 1.0)) == 1.0);
  CHECK(basis.eval(0, VectorXd::Constant(1, 0.0)) == 1.0);  // indicator is >=
}

TEST_CASE("hal basis: hinge smoothness") {
  MatrixXd X(3, 1);
  X << -1.0, 0.0, 1.0;
  const HalBasis basis = build_hal_basis(X, 1, 1, 1);
  REQUIRE(basis.size() == 1);
  CHECK(basis.eval(0, VectorXd::Constant(1, -1.0)) == 0.0);
  CHECK(basis.eval(0, VectorXd::Constant(1, 0.5)) == doctest::Approx(0.5));
}

TEST_CASE("hal basis: interactions and size bound") {
  Rng rng(61);
  MatrixXd X(200, 3);
  for (int i = 0; i < 200; ++i) {
    for (int j = 0; j < 3; ++j) X(i, j) = rng.uniform(-1.0, 1.0);
  }
  const HalBasis basis = build_hal_basis(X, 2, 0, 10);
  // 3 * 10 main-effect terms + 3 * 100 pairwise products, before dedup.
  CHECK(basis.size() <= 330);
  CHECK(basis.size() > 30);
  bool has_pair = false;
  for (const auto& t : basis.terms) has_pair = has_pair || t.dims.size() == 2;
  CHECK(has_pair);
  // degree 3 adds triple interactions
  const HalBasis deg3 = build_hal_basis(X, 3, 0, 4);
  bool has_triple = false;
  for (const auto& t : deg3.terms) has_triple = has_triple || t.dims.size() == 3;
  CHECK(has_triple);
}

TEST_CASE("hal_lite fits a step function better than OLS") {
  Dataset d;
  d.propensity = PropensitySpec(0.5);
  Rng rng(71);
  for (int i = 0; i < 300; ++i) {
    Observation v;
    v.x = VectorXd::Constant(1, rng.uniform(-1.0, 1.0));
    v.a = rng.bernoulli(0.5) ? 1 : 0;
    v.y = (v.x[0] >= 0.2 ? 3.0 : -1.0) + 0.2 * rng.normal();
    d.observations.push_back(v);
  }
  Dataset test;
  test.propensity = d.propensity;
  Rng rng2(72);
  for (int i = 0; i < 1000; ++i) {
    Observation v;
    v.x = VectorXd::Constant(1, rng2.uniform(-1.0, 1.0));
    v.a = rng2.bernoulli(0.5) ? 1 : 0;
    v.y = (v.x[0] >= 0.2 ? 3.0 : -1.0) + 0.2 * rng2.normal();
    test.observations.push_back(v);
  }
  const OutcomePredictor hal = fit_hal_lite(d, LearnerSpec::hal(2, 0), 7);
  const OutcomePredictor ols = fit_linear(d, false);
  CHECK(test_mse(hal, test) < 0.5 * test_mse(ols, test));
}

TEST_CASE("hal_lite respects the outcome clamp") {
  const Dataset d = linear_dataset(120, 2, 81, 1.0);
  double m = 0.0;
  for (const auto& v : d.observations) m = std::max(m, std::abs(v.y));
  const OutcomePredictor hal = fit_hal_lite(d, LearnerSpec::hal(2, 1), 11);
  CHECK(hal.bound == doctest::Approx(m));
  Rng rng(82);
  for (int i = 0; i < 200; ++i) {
    VectorXd x(2);
    x << rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0);  // beyond training range
    const double pred = hal.predict(x, rng.bernoulli(0.5) ? 1 : 0);
    CHECK(std::abs(pred) <= m + 1e-12);
  }
}

TEST_CASE("hal_lite on constant outcomes returns the constant") {
  Dataset d;
  d.propensity = PropensitySpec(0.5);
  Rng rng(91);
  for (int i = 0; i < 80; ++i) {
    Observation v;
    v.x = VectorXd::Constant(1, rng.uniform(-1.0, 1.0));
    v.a = i % 2;
    v.y = 4.0;
    d.observations.push_back(v);
  }
  const OutcomePredictor hal = fit_hal_lite(d, LearnerSpec::hal(2, 0), 1);
  CHECK(std::abs(hal.predict(VectorXd::Constant(1, 0.3), 1) - 4.0) <= 1e-6);
}

TEST_CASE("super learner puts nearly all weight on the right model") {
  Dataset d;
  d.propensity = PropensitySpec(0.5);
  Rng rng(101);
  for (int i = 0; i < 200; ++i) {
    Observation v;
    v.x = VectorXd::Constant(1, rng.uniform(-1.0, 1.0));
    v.a = rng.bernoulli(0.5) ? 1 : 0;
    v.y = 5.0 + 1e-3 * rng.normal();
    d.observations.push_back(v);
  }
  std::vector<LearnerSpec> lib = {LearnerSpec::of(LearnerKind::zero),
                                  LearnerSpec::of(LearnerKind::marginal_mean)};
  FittedStack stack;
  const OutcomePredictor q = fit_super_learner(d, lib, 5, 3, &stack);
  REQUIRE(stack.weights.size() == 2);
  CHECK(stack.weights[1] >= 0.99);
  CHECK(q.predict(VectorXd::Zero(1), 0) == doctest::Approx(5.0).epsilon(1e-3));
}

TEST_CASE("super learner weights stay on the simplex and never lose to the best base") {
  std::vector<LearnerSpec> lib = {LearnerSpec::of(LearnerKind::zero),
                                  LearnerSpec::of(LearnerKind::marginal_mean),
                                  LearnerSpec::of(LearnerKind::ols)};
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const Dataset d = linear_dataset(60, 2, seed, 1.0);
    FittedStack stack;
    (void)fit_super_learner(d, lib, 5, seed, &stack);
    double sum = 0.0;
    for (Eigen::Index j = 0; j < stack.weights.size(); ++j) {
      CHECK(stack.weights[j] >= 0.0);
      sum += stack.weights[j];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-10);
    const double best_base = *std::min_element(stack.cv_risk.begin(), stack.cv_risk.end());
    CHECK(stack.stack_cv_risk <= best_base + 1e-9);
  }
}

TEST_CASE("super learner singleton zero library is data independent") {
  LearnerSpec sl = LearnerSpec::of(LearnerKind::super_learner);
  sl.library = {LearnerSpec::of(LearnerKind::zero)};
  CHECK(is_data_independent(sl));
  sl.library = {LearnerSpec::of(LearnerKind::zero), LearnerSpec::of(LearnerKind::ols)};
  CHECK(!is_data_independent(sl));
  CHECK(is_data_independent(LearnerSpec::of(LearnerKind::zero)));
  CHECK(!is_data_independent(LearnerSpec::of(LearnerKind::marginal_mean)));
}

TEST_CASE("library rosters have the documented composition") {
  const auto mis = LearnerSpec::mis_library();
  REQUIRE(mis.size() == 5);
  CHECK(mis[0].kind == LearnerKind::zero);
  CHECK(mis[4].kind == LearnerKind::lasso_cv);
  const auto rich = LearnerSpec::rich_library();
  REQUIRE(rich.size() == 9);
  int hal_count = 0;
  for (const auto& s : rich) hal_count += s.kind == LearnerKind::hal_lite ? 1 : 0;
  CHECK(hal_count == 4);
}

TEST_CASE("learner fits are deterministic in (data, spec, seed)") {
  const Dataset d = linear_dataset(100, 3, 7, 1.0);
  LearnerSpec sl = LearnerSpec::of(LearnerKind::super_learner);
  sl.library = LearnerSpec::mis_library();
  const OutcomePredictor a = fit_learner(d, sl, 13);
  const OutcomePredictor b = fit_learner(d, sl, 13);
  Rng rng(14);
  for (int i = 0; i < 30; ++i) {
    VectorXd x(3);
    for (int j = 0; j < 3; ++j) x[j] = rng.uniform(-1.0, 1.0);
    const int arm = rng.bernoulli(0.5) ? 1 : 0;
    CHECK(a.predict(x, arm) == b.predict(x, arm));
  }
}

TEST_CASE("learner spec validation") {
  LearnerSpec bad = LearnerSpec::hal(4, 0);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  LearnerSpec bad2 = LearnerSpec::of(LearnerKind::lasso_cv);
  bad2.cv_folds = 1;
  CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);
  LearnerSpec sl = LearnerSpec::of(LearnerKind::super_learner);
  CHECK_THROWS_AS(sl.validate(), std::invalid_argument);  // empty library
  CHECK(learner_kind_from_string("hal_lite") == LearnerKind::hal_lite);
  CHECK(to_string(LearnerKind::super_learner) == "super_learner");
  CHECK_THROWS_AS(learner_kind_from_string("nope"), std::invalid_argument);
}
