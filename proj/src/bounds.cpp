#include "aipw/bounds.hpp"

#include <cmath>
#include <stdexcept>

namespace aipw {

namespace {

double sum_terms(const std::vector<BoundTerm>& terms) {
  double s = 0.0;
  for (const auto& t : terms) s += t.value;
  return s;
}

}  // namespace

std::string to_string(ClassKind k) {
  return k == ClassKind::VC ? "VC" : "VC-hull";
}

ClassKind class_kind_from_string(const std::string& s) {
  if (s == "VC") return ClassKind::VC;
  if (s == "VC-hull" || s == "VC_hull" || s == "vc_hull") return ClassKind::VCHull;
  throw std::invalid_argument("unknown class kind: " + s);
}

void BoundInputs::validate() const {
  if (!(tau_pi > 0.0 && tau_pi <= 0.5)) {
    throw std::invalid_argument("tau_pi must lie in (0, 0.5]");
  }
  if (!(sigma_star > 0.0) || sigma_hash < sigma_star) {
    throw std::invalid_argument("require sigma_hash >= sigma_star > 0");
  }
  if (m_underbar > m_bar) throw std::invalid_argument("require m_underbar <= m_bar");
  if (rho_hash < 0.0 || varrho_hash < 0.0 || rho_bar < 0.0 || sigma_bar_sq < 0.0 ||
      m_underbar < 0.0 || eqd2 < 0.0 || eqd1 < 0.0 || qdiff < 0.0) {
    throw std::invalid_argument("moment constants must be >= 0");
  }
  if (nu < 2) throw std::invalid_argument("nu must be an integer >= 2");
  if (eqd1 > std::sqrt(eqd2) * (1.0 + 1e-12) + 1e-300) {
    throw std::invalid_argument("require eqd1 <= sqrt(eqd2)");
  }
  if (!(n >= 1.0) || !(K >= 2.0) || !(fold_size >= 1.0)) {
    throw std::invalid_argument("require n >= 1, K >= 2, fold_size >= 1");
  }
  if (M < 0.0 || sigma_dagger <= 0.0 || q <= 0.0 || delta <= 0.0 || delta_prime <= 0.0 ||
      constant <= 0.0 || j_2delta < 0.0 || j_2delta_prime < 0.0 || j_2 < 0.0) {
    throw std::invalid_argument("bound inputs out of domain");
  }
}

double BoundReport::term(const std::string& name) const {
  for (const auto& t : terms) {
    if (t.name == name) return t.value;
  }
  throw std::invalid_argument("no bound term named " + name);
}

double BoundReport::extra(const std::string& name) const {
  for (const auto& t : extras) {
    if (t.name == name) return t.value;
  }
  throw std::invalid_argument("no bound extra named " + name);
}

double k_rate_factor(int K, double r, bool subgaussian, std::optional<double> n) {
  if (K < 2) throw std::invalid_argument("K must be >= 2");
  if (!(r > 0.0)) throw std::invalid_argument("r must be > 0");
  const double k = static_cast<double>(K);
  double out = subgaussian ? std::pow(k, (r + 1.0) / 2.0) * std::pow(k - 1.0, -r / 2.0)
                           : std::pow(k, (r + 2.0) / 3.0) * std::pow(k - 1.0, -r / 3.0);
  if (n) {
    out *= subgaussian ? std::pow(*n, -r / 2.0) : std::pow(*n, -r / 3.0);
  }
  return out;
}

double entropy_integral_bound(double delta, int nu, ClassKind kind, double constant) {
  if (constant <= 0.0) throw std::invalid_argument("constant must be > 0");
  if (kind == ClassKind::VC) {
    if (!(delta > 0.0 && delta <= std::exp(-1.0))) {
      throw std::invalid_argument("VC entropy bound requires 0 < delta <= 1/e");
    }
    return constant * delta * std::sqrt(std::log(1.0 / delta));
  }
  if (!(delta > 0.0)) throw std::invalid_argument("VC-hull entropy bound requires delta > 0");
  if (nu < 2) throw std::invalid_argument("nu must be an integer >= 2");
  return constant * std::pow(delta, 1.0 / static_cast<double>(nu));
}

BoundReport cv_bound_terms(const BoundInputs& inp) {
  inp.validate();
  BoundReport rep;
  const double C = inp.constant;
  const double n = inp.n, K = inp.K, m = inp.fold_size;
  const double tau = inp.tau_pi, tr = (1.0 - tau) / tau;
  const double sh = inp.sigma_hash, sd = inp.sigma_dagger;
  const double za = std::abs(inp.z_alpha);
  const double logn = std::log(n);

  // Precondition: psi* = 0, or z_alpha = 0, or
  // 2 (sqrt(2)+1)^2 q sigmabar^2 log n / |I_k| <= psi*^2.
  const double guard = 2.0 * std::pow(std::sqrt(2.0) + 1.0, 2) * inp.q * inp.sigma_bar_sq *
                       logn / m;
  rep.precondition_ok =
      inp.psi_star == 0.0 || inp.z_alpha == 0.0 || guard <= inp.psi_star * inp.psi_star;
  if (!rep.precondition_ok) {
    rep.warnings.push_back("precondition 2(sqrt(2)+1)^2 q sigma_bar_sq log n/|I_k| <= psi_star^2 "
                           "violated; values are informational");
  }

  // Per-fold building blocks.
  const double envelope_sq = std::pow(sh + std::sqrt(tr * inp.eqd2), 2);
  const double r_hat = (std::cbrt(m / (n * sh * sh) * tr) +
                        std::cbrt(m * m * inp.M * inp.M * za * za / (n * n * sh * sh * sd * sd) *
                                  tr * tr)) *
                       std::cbrt(inp.eqd2);
  const double r_hat_prime =
      inp.s_hat1 / sh *
          (inp.eqd1 + inp.s_hat2 * std::sqrt(inp.q * inp.eqd2 * logn)) *
          std::sqrt(inp.q * m / n * logn) +
      m * inp.s_hat3 * za * inp.M * (1.0 - tau) / (n * sh * sd * tau) *
          std::sqrt(inp.q * inp.eqd2 * logn);
  const double s_hat =
      m / n * (tr * inp.eqd2 + 2.0 * tr * inp.qdiff * inp.eqd1 + envelope_sq / m);
  const double s_hat_prime = m / n * (tr * inp.eqd2 + envelope_sq / m);

  const double r_used = inp.subgaussian ? r_hat_prime : r_hat;
  const double s_used = inp.condition7 ? s_hat_prime : s_hat;

  rep.terms.push_back({"rho_term", C * inp.rho_hash / (sh * sh * sh * std::sqrt(n))});
  rep.terms.push_back({inp.subgaussian ? "r_hat_prime_sum" : "r_hat_sum", C * K * r_used});
  rep.terms.push_back({inp.condition7 ? "s_hat_prime_sq_sum" : "s_hat_sq_sum",
                       C * K * s_used * s_used / std::pow(sh, 4)});
  rep.terms.push_back(
      {"moment_sum",
       C * K *
           (inp.m_bar / std::pow(inp.m_underbar, 1.5) +
            (inp.z_alpha != 0.0 ? inp.rho_bar / std::pow(inp.sigma_star, 1.5) : 0.0)) /
           std::sqrt(m)});
  rep.terms.push_back(
      {"union_tail_sum", C * K * za * std::sqrt(2.0 * inp.q * m * inp.m_bar * logn) / (n * sh * sd)});
  rep.terms.push_back({"n_pow_q_sum", C * K * std::pow(n, -inp.q)});
  const double psi_block =
      std::abs(inp.psi_star) * std::sqrt(inp.q * inp.sigma_bar_sq / m * logn) +
      (inp.psi_star == 0.0 ? inp.q * inp.sigma_bar_sq / m * logn : 0.0) + envelope_sq / m;
  rep.terms.push_back({"psi_tail_sum", C * K * m * za / (n * sh * sd) * psi_block});

  rep.extras.push_back({"r_hat_k", r_hat});
  rep.extras.push_back({"r_hat_prime_k", r_hat_prime});
  rep.extras.push_back({"s_hat_k", s_hat});
  rep.extras.push_back({"s_hat_prime_k", s_hat_prime});
  // Variance-difference envelopes: |sigma_dagger - sigma_hash| bounds.
  rep.extras.push_back({"sd_diff_bound", K * s_hat / sh});
  rep.extras.push_back({"sd_diff_bound_cond7", K * s_hat_prime / sh});

  rep.total = sum_terms(rep.terms);
  return rep;
}

BoundReport noncv_bound_terms(const BoundInputs& inp) {
  inp.validate();
  BoundReport rep;
  const double C = inp.constant;
  const double n = inp.n;
  const double tau = inp.tau_pi, tr = (1.0 - tau) / tau;
  const double M = inp.M;
  const double sh = inp.sigma_hash, sd = inp.sigma_dagger;
  const double za = std::abs(inp.z_alpha);
  const double logn = std::log(n);
  const double sqn = std::sqrt(n);
  const double fH = 2.0 * M * (1.0 - tau) / tau;
  const double fT2 = 8.0 * M * M * (1.0 - tau) / (tau * tau);
  const double j2d = inp.j_2delta, j2dp = inp.j_2delta_prime, j2 = inp.j_2;
  const double d = inp.delta, dp = inp.delta_prime;

  rep.terms.push_back({"rho_term", C * inp.rho_hash / (sh * sh * sh * sqn)});
  rep.terms.push_back({"varrho_term",
                       inp.z_alpha != 0.0
                           ? C * inp.varrho_hash / (std::pow(inp.varsigma_hash, 3) * sqn)
                           : 0.0});
  rep.terms.push_back({"n_pow_q", C * std::pow(n, -inp.q)});

  // Rtilde(delta, delta'), or its subgaussian replacement Rtilde'.
  if (inp.subgaussian) {
    if (!(2.0 * M * std::min(d, dp) > inp.eqd1)) {
      throw std::invalid_argument("guard 2Mdelta > E||dQ|| violated");
    }
    if (!(inp.eqd2 > 0.0) || !(inp.s_tilde1 > 0.0)) {
      throw std::invalid_argument("subgaussian Rtilde' requires eqd2 > 0 and s_tilde1 > 0");
    }
    const double e1 = 2.0 * d * M - inp.eqd1;
    const double e2 = 2.0 * dp * M - inp.eqd1;
    const double r_tilde_prime =
        std::exp(-e1 * e1 / (2.0 * inp.s_tilde1 * inp.s_tilde1 * inp.eqd2)) +
        C * inp.s_tilde2 * M * (1.0 - tau) * za / (tau * sh * sd) *
            std::sqrt(inp.q * inp.eqd2 * logn) +
        C * fT2 * fT2 * j2 * j2 / (std::pow(sh, 4) * n) *
            std::exp(-e2 * e2 / (inp.s_tilde1 * inp.s_tilde1 * inp.eqd2));
    rep.terms.push_back({"r_tilde_prime", r_tilde_prime});
  } else {
    const double r_tilde =
        inp.eqd2 / (4.0 * d * d * M * M) +
        C * std::cbrt(16.0 * M * M * tr * tr * za * za / (sh * sh * sd * sd) * inp.eqd2) +
        C * fT2 * fT2 * j2 * j2 * inp.eqd2 * inp.eqd2 /
            (std::pow(sh, 4) * std::pow(dp, 4) * std::pow(M, 4) * n);
    rep.terms.push_back({"r_tilde", r_tilde});
  }

  const double s4 = std::pow(sh, 4);
  rep.terms.push_back({"ep_sq_term", C / s4 * fT2 * fT2 * j2dp * j2dp / n});
  rep.terms.push_back(
      {"ep_quartic_term", C / s4 * fT2 * fT2 * std::pow(j2dp, 4) / (std::pow(dp, 4) * n * n)});
  rep.terms.push_back({"nuisance_sq_term", C / s4 * tr * tr * inp.eqd2 * inp.eqd2});
  rep.terms.push_back({"cross_term",
                       inp.condition9
                           ? 0.0
                           : C / s4 * tr * tr * inp.qdiff * inp.qdiff * inp.eqd1 * inp.eqd1});
  rep.terms.push_back({"small_term", C / s4 * (s4 + std::pow(fH, 4) * std::pow(j2, 4)) / (n * n)});

  const double zc = C * za / (sh * sd);
  rep.terms.push_back({"zb_variance_logn", zc * sh * sh * inp.q * logn / n});
  rep.terms.push_back({"zb_mean_tail", zc * (std::abs(inp.psi_star) * sh + inp.varsigma_hash) *
                                           std::sqrt(inp.q * logn / n)});
  rep.terms.push_back({"zb_h_small", zc * fH * sh * std::sqrt(inp.q * logn) / n});
  rep.terms.push_back(
      {"zb_h_sq", zc * fH * fH * (j2 * j2 + inp.q * inp.q * logn * logn) / n});
  rep.terms.push_back(
      {"zb_psi_h", zc * std::abs(inp.psi_star) * fH * (j2 + inp.q * logn) / sqn});
  rep.terms.push_back({"zb_ep_j", zc * (fH + fT2 / sqn) * j2d});
  rep.terms.push_back({"zb_ep_jsq", zc * (fH + fT2 / sqn) * j2d * j2d / (d * d * sqn)});
  rep.terms.push_back({"zb_delta_logn", zc * inp.q * (fH + fT2 / sqn) * (d + 1.0 / sqn) * logn});

  // Variance-difference envelope B and the sd-bias bound.
  const double b_env = C * fT2 * j2d / sqn + C * fT2 * j2d * j2d / (d * d * n) +
                       C * fT2 * j2 * inp.eqd2 / (sh * d * d * M * M * sqn);
  double sd_bias = b_env / sh + tr / sh * inp.eqd2 +
                   C / (sh * n) * (sh * sh + fH * fH * j2 * j2);
  if (!inp.condition9) sd_bias += 2.0 * tr / sh * inp.qdiff * inp.eqd1;

  rep.extras.push_back({"f_h", fH});
  rep.extras.push_back({"f_t2", fT2});
  rep.extras.push_back({"b_envelope", b_env});
  rep.extras.push_back({"sd_bias_bound", sd_bias});

  rep.total = sum_terms(rep.terms);
  return rep;
}

BoundReport corollary_rates(ClassKind part, const BoundInputs& inp, double n) {
  inp.validate();
  if (!(inp.eqd2 > 0.0)) throw std::invalid_argument("corollary rates require eqd2 > 0");
  if (!(n >= 2.0)) throw std::invalid_argument("corollary rates require n >= 2");
  BoundReport rep;
  const double logn = std::log(n);
  const double sqn_inv = 1.0 / std::sqrt(n);
  if (inp.subgaussian && !(inp.eqd2 < 1.0 / logn)) {
    rep.precondition_ok = false;
    rep.warnings.push_back("subgaussian rate requires eqd2 < 1/log n; values are informational");
  }

  if (part == ClassKind::VC) {
    const double delta_vc =
        inp.subgaussian ? std::sqrt(inp.eqd2 * logn) : std::cbrt(inp.eqd2);
    const double log_inv = std::log(1.0 / inp.eqd2);
    rep.terms.push_back({"delta_log_term", delta_vc * std::sqrt(std::max(0.0, log_inv))});
    rep.terms.push_back({"root_n_log_term", sqn_inv * log_inv});
    rep.terms.push_back({"logn_term", (delta_vc + sqn_inv) * logn});
    rep.extras.push_back({"delta_vc", delta_vc});
  } else {
    const double nu = static_cast<double>(inp.nu);
    double d1, d2;
    if (inp.subgaussian) {
      d1 = std::pow(inp.eqd2 * logn, 1.0 / (2.0 * nu));
      d2 = sqn_inv * std::pow(inp.eqd2 * logn, -(nu - 1.0) / nu);
    } else {
      d1 = std::pow(inp.eqd2, 1.0 / (1.0 + 2.0 * nu)) +
           std::pow(n, -1.0 / (4.0 * nu - 2.0));
      d2 = 0.0;
    }
    rep.terms.push_back({"delta_1", d1});
    rep.terms.push_back({"delta_2", d2});
    rep.terms.push_back({"logn_term", (std::pow(d1, nu) + sqn_inv) * logn});
    rep.extras.push_back({"delta_vc_hull_1", d1});
    rep.extras.push_back({"delta_vc_hull_2", d2});
  }
  rep.total = sum_terms(rep.terms);
  return rep;
}

}  // namespace aipw
