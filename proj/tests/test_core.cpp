#include <doctest.h>

#include <cmath>

#include "aipw/core.hpp"
#include "aipw/rng.hpp"
#include "aipw/stats.hpp"

using namespace aipw;

namespace {

Observation obs(std::initializer_list<double> x, int a, double y) {
  Observation v;
  v.x = VectorXd::Zero(static_cast<Eigen::Index>(x.size()));
  Eigen::Index i = 0;
  for (double xi : x) v.x[i++] = xi;
  v.a = a;
  v.y = y;
  return v;
}

}  // namespace

TEST_CASE("transform evaluates the exact formula") {
  const PropensitySpec pi(0.5);
  const OutcomePredictor one = constant_predictor(1.0);
  CHECK(transform(one, 1, obs({0.0}, 1, 2.0), pi) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(transform(one, 1, obs({0.0}, 0, 2.0), pi) == doctest::Approx(1.0).epsilon(1e-15));
  const OutcomePredictor zero = zero_predictor();
  CHECK(transform(zero, 1, obs({0.0}, 1, 7.5), pi) == doctest::Approx(15.0).epsilon(1e-15));
}

TEST_CASE("transform with zero predictor is the pure IPW term") {
  const PropensitySpec pi(0.3);
  const OutcomePredictor zero = zero_predictor();
  const Observation v = obs({0.2, -0.4}, 0, 3.0);
  CHECK(transform(zero, 0, v, pi) == doctest::Approx(3.0 / 0.7).epsilon(1e-15));
  CHECK(transform(zero, 1, v, pi) == 0.0);
}

TEST_CASE("influence centers the transform") {
  const PropensitySpec pi(0.5);
  const OutcomePredictor one = constant_predictor(1.0);
  const Observation v = obs({0.0}, 1, 2.0);
  CHECK(influence(one, 3.0, 1, v, pi) == doctest::Approx(0.0));
  CHECK(influence(one, 1.0, 1, v, pi) == doctest::Approx(2.0));
}

TEST_CASE("h_term direct cases") {
  const PropensitySpec pi(0.5);
  const OutcomePredictor q = constant_predictor(0.5);
  const OutcomePredictor qref = zero_predictor();
  CHECK(h_term(q, qref, 1, obs({0.0}, 1, 9.0), pi) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(h_term(q, qref, 1, obs({0.0}, 0, 9.0), pi) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(h_term(q, q, 1, obs({0.0}, 1, 9.0), pi) == 0.0);
}

TEST_CASE("h_term equals the difference of transforms") {
  const PropensitySpec pi(0.4);
  const OutcomePredictor q{[](const VectorXd& x, int a) { return x[0] * 2.0 + a; }, "lin", 0.0};
  const OutcomePredictor qref{[](const VectorXd& x, int) { return std::sin(x[0]); }, "sin", 0.0};
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const Observation v = obs({rng.uniform(-1.0, 1.0)}, rng.bernoulli(0.4) ? 1 : 0,
                              rng.uniform(-3.0, 3.0));
    for (int ap : {0, 1}) {
      const double lhs = h_term(q, qref, ap, v, pi);
      const double rhs = transform(q, ap, v, pi) - transform(qref, ap, v, pi);
      CHECK(std::abs(lhs - rhs) <= 1e-12);
    }
  }
}

TEST_CASE("nonfinite predictions fail fast") {
  const PropensitySpec pi(0.5);
  const OutcomePredictor bad{[](const VectorXd&, int) { return std::nan(""); }, "bad", 0.0};
  CHECK_THROWS_WITH_AS(transform(bad, 1, obs({0.0}, 1, 1.0), pi),
                       "predictor produced nonfinite value", std::runtime_error);
}

TEST_CASE("propensity validation") {
  CHECK_THROWS_AS(PropensitySpec(0.0), std::invalid_argument);
  CHECK_THROWS_AS(PropensitySpec(1.0), std::invalid_argument);
  const PropensitySpec pi(0.3);
  CHECK(pi.prob(1, VectorXd::Zero(1)) == doctest::Approx(0.3));
  CHECK(pi.prob(0, VectorXd::Zero(1)) == doctest::Approx(0.7));
  CHECK(pi.tau_pi() == doctest::Approx(0.3));
  // function-valued propensity escaping the declared margin fails
  const PropensitySpec fn([](const VectorXd& x) { return x[0] > 0 ? 0.9 : 0.5; }, 0.2);
  CHECK(fn.prob(1, VectorXd::Constant(1, -1.0)) == doctest::Approx(0.5));
  CHECK_THROWS_AS(fn.prob(1, VectorXd::Constant(1, 1.0)), std::runtime_error);
}

TEST_CASE("dataset arm checks") {
  Dataset data;
  data.propensity = PropensitySpec(0.5);
  data.observations = {obs({0.0}, 1, 1.0)};
  CHECK_THROWS_WITH_AS(data.require_both_arms(), "arm empty", std::runtime_error);
  data.observations.push_back(obs({0.0}, 0, 1.0));
  CHECK_NOTHROW(data.require_both_arms());
}

TEST_CASE("H-term moments under constant propensity") {
  // H = {1 - 1(a=1)/pi}(Q - Qref)(x) with Q - Qref = x1 + 1, pi = 0.5,
  // X1 ~ Unif(-1,1): mean 0, second moment (1-pi)/pi E[(x1+1)^2] = 4/3.
  const PropensitySpec pi(0.5);
  const OutcomePredictor q{[](const VectorXd& x, int) { return x[0] + 1.0; }, "q", 0.0};
  const OutcomePredictor qref = zero_predictor();
  const std::size_t draws = 1000000;
  Rng rng(42);
  double s = 0.0, s2 = 0.0, s4 = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    Observation v;
    v.x = VectorXd::Constant(1, rng.uniform(-1.0, 1.0));
    v.a = rng.bernoulli(0.5) ? 1 : 0;
    v.y = 0.0;
    const double h = h_term(q, qref, 1, v, pi);
    s += h;
    s2 += h * h;
    s4 += h * h * h * h;
  }
  const double n = static_cast<double>(draws);
  const double mean_h = s / n;
  const double m2 = s2 / n;
  const double se_mean = std::sqrt((m2 - mean_h * mean_h) / n);
  CHECK(std::abs(mean_h) <= 3.0 * se_mean);
  CHECK(m2 == doctest::Approx(4.0 / 3.0).epsilon(0.02));
  CHECK(s4 / n >= 0.0);
}

TEST_CASE("inverse normal CDF reference values") {
  CHECK(inv_norm_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-10));
  CHECK(inv_norm_cdf(0.75) == doctest::Approx(0.6744897501960817).epsilon(1e-10));
  CHECK(inv_norm_cdf(0.5) == doctest::Approx(0.0));
  CHECK(inv_norm_cdf(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-9));
  for (double p : {0.001, 0.01, 0.2, 0.5, 0.77, 0.999}) {
    CHECK(norm_cdf(inv_norm_cdf(p)) == doctest::Approx(p).epsilon(1e-12));
  }
  CHECK_THROWS_AS(inv_norm_cdf(0.0), std::invalid_argument);
}

TEST_CASE("wilson interval reference values") {
  const auto [lo, hi] = wilson_interval(760, 800, 0.95);
  CHECK(lo == doctest::Approx(0.93263).epsilon(2.2e-4));
  CHECK(hi == doctest::Approx(0.96307).epsilon(2.2e-4));
  CHECK(wilson_interval(0, 10, 0.95).first == 0.0);
  CHECK(wilson_interval(10, 10, 0.95).second == 1.0);
  CHECK_THROWS_AS(wilson_interval(0, 0, 0.95), std::invalid_argument);
}

TEST_CASE("rng streams are deterministic and well-behaved") {
  Rng a(123), b(123), c(124);
  bool same = true, differ = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a(), vb = b(), vc = c();
    same = same && (va == vb);
    differ = differ || (va != vc);
  }
  CHECK(same);
  CHECK(differ);

  Rng r(99);
  double s = 0.0, s2 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  CHECK(s / n == doctest::Approx(0.0).epsilon(0.02));
  CHECK(std::abs(s / n) < 0.02);
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));

  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
}
