#include "aipw/core.hpp"

namespace aipw {

PropensitySpec::PropensitySpec(double pi1, double tau_pi) : pi1_(pi1), tau_pi_(tau_pi) {
  if (!(pi1 > 0.0 && pi1 < 1.0)) {
    throw std::invalid_argument("propensity must lie in (0,1)");
  }
  if (tau_pi_ <= 0.0) {
    tau_pi_ = std::min(pi1, 1.0 - pi1);
  }
  if (tau_pi_ > 0.5) {
    throw std::invalid_argument("tau_pi must lie in (0, 0.5]");
  }
}

PropensitySpec::PropensitySpec(std::function<double(const VectorXd&)> pi1_fn, double tau_pi)
    : pi1_fn_(std::move(pi1_fn)), tau_pi_(tau_pi) {
  if (!(tau_pi_ > 0.0 && tau_pi_ <= 0.5)) {
    throw std::invalid_argument("tau_pi must lie in (0, 0.5]");
  }
}

double PropensitySpec::prob(int a, const VectorXd& x) const {
  const double p1 = pi1_fn_ ? pi1_fn_(x) : pi1_;
  if (!(p1 >= tau_pi_ && p1 <= 1.0 - tau_pi_)) {
    throw std::runtime_error("propensity outside [tau_pi, 1-tau_pi]");
  }
  return a == 1 ? p1 : 1.0 - p1;
}

double PropensitySpec::constant_pi1() const {
  if (pi1_fn_) {
    throw std::logic_error("propensity is not constant");
  }
  return pi1_;
}

std::size_t Dataset::arm_count(int a) const {
  std::size_t c = 0;
  for (const auto& v : observations) c += (v.a == a);
  return c;
}

void Dataset::require_both_arms() const {
  if (arm_count(1) == 0 || arm_count(0) == 0) {
    throw std::runtime_error("arm empty");
  }
}

OutcomePredictor zero_predictor() {
  return {[](const VectorXd&, int) { return 0.0; }, "zero", 0.0};
}

OutcomePredictor constant_predictor(double c) {
  return {[c](const VectorXd&, int) { return c; }, "constant", std::abs(c)};
}

namespace {
double checked_predict(const OutcomePredictor& q, const VectorXd& x, int a) {
  const double p = q.predict(x, a);
  if (!std::isfinite(p)) {
    throw std::runtime_error("predictor produced nonfinite value");
  }
  return p;
}
}  // namespace

double transform(const OutcomePredictor& q, int a_prime, const Observation& v,
                 const PropensitySpec& pi) {
  const double qv = checked_predict(q, v.x, a_prime);
  const double p = pi.prob(a_prime, v.x);
  double out = qv;
  if (v.a == a_prime) {
    out += (v.y - qv) / p;
  }
  return out;
}

double influence(const OutcomePredictor& q, double psi, int a_prime,
                 const Observation& v, const PropensitySpec& pi) {
  return transform(q, a_prime, v, pi) - psi;
}

double h_term(const OutcomePredictor& q, const OutcomePredictor& q_ref,
              int a_prime, const Observation& v, const PropensitySpec& pi) {
  const double dq = checked_predict(q, v.x, a_prime) - checked_predict(q_ref, v.x, a_prime);
  const double p = pi.prob(a_prime, v.x);
  const double w = (v.a == a_prime) ? (1.0 - 1.0 / p) : 1.0;
  return w * dq;
}

}  // namespace aipw
