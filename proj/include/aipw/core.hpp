#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace aipw {

using Eigen::VectorXd;

/// One observed data point: covariates, binary treatment, outcome.
struct Observation {
  VectorXd x;
  int a = 0;  // treatment indicator, 0 or 1
  double y = 0.0;
};

/// Known randomization propensity: either a constant P(A=1) or a function of x.
/// tau_pi is the declared positivity margin; prob(a|x) must stay in
/// [tau_pi, 1-tau_pi].
class PropensitySpec {
 public:
  explicit PropensitySpec(double pi1, double tau_pi = 0.0);
  PropensitySpec(std::function<double(const VectorXd&)> pi1_fn, double tau_pi);

  /// P(A = a | X = x).
  double prob(int a, const VectorXd& x) const;
  double tau_pi() const { return tau_pi_; }
  bool is_constant() const { return !pi1_fn_; }
  double constant_pi1() const;

 private:
  double pi1_ = 0.5;
  std::function<double(const VectorXd&)> pi1_fn_;
  double tau_pi_ = 0.0;
};

struct Dataset {
  std::vector<Observation> observations;
  PropensitySpec propensity{0.5};

  std::size_t n() const { return observations.size(); }
  std::size_t dim() const {
    return observations.empty() ? 0 : static_cast<std::size_t>(observations.front().x.size());
  }
  std::size_t arm_count(int a) const;
  /// Throws if either treatment arm is empty.
  void require_both_arms() const;
};

/// A fitted outcome regression (x, a) -> predicted outcome. Immutable and
/// shareable. bound, when positive, is the declared sup-norm bound M on
/// predictions.
struct OutcomePredictor {
  std::function<double(const VectorXd&, int)> predict;
  std::string name;
  double bound = 0.0;  // 0 means "no declared bound"

  double operator()(const VectorXd& x, int a) const { return predict(x, a); }
};

/// Zero predictor (x, a) -> 0.
OutcomePredictor zero_predictor();

/// Constant predictor (x, a) -> c.
OutcomePredictor constant_predictor(double c);

/// AIPW transformation: 1(a = a') {y - Q(x, a')} / pi(a'|x) + Q(x, a').
double transform(const OutcomePredictor& q, int a_prime, const Observation& v,
                 const PropensitySpec& pi);

/// Influence-function value: transform(q, a', v, pi) - psi.
double influence(const OutcomePredictor& q, double psi, int a_prime,
                 const Observation& v, const PropensitySpec& pi);

/// H-term: {1 - 1(a = a') / pi(a'|x)} {Q(x, a') - Qref(x, a')}. Equals the
/// difference of the two transforms.
double h_term(const OutcomePredictor& q, const OutcomePredictor& q_ref,
              int a_prime, const Observation& v, const PropensitySpec& pi);

}  // namespace aipw
