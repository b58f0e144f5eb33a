#pragma once

#include <optional>
#include <string>
#include <vector>

namespace aipw {

enum class ClassKind { VC, VCHull };

std::string to_string(ClassKind k);
ClassKind class_kind_from_string(const std::string& s);

/// Every constant entering the Berry-Esseen-type bound calculators. These are
/// user-supplied moment constants; nothing here is estimated from data. The
/// generic absolute constant C (which the source bounds leave unspecified) is
/// an explicit input defaulting to 1, so totals are meaningful only up to it.
struct BoundInputs {
  double n = 100;
  double K = 2;
  double fold_size = 50;  // |I_k|, equal across folds

  double tau_pi = 0.5;
  double M = 1.0;

  double alpha = 0.05;
  double z_alpha = 1.959963984540054;

  double psi_star = 0.0;      // psi_{*,a}
  double sigma_hash = 1.0;    // sigma_{#,a}
  double sigma_dagger = 1.0;  // sigma_{dagger,a}
  double sigma_star = 1.0;    // sigma_{*,a}
  double rho_hash = 0.0;      // rho_{#,a}, third absolute moment
  double varsigma_hash = 1.0; // varsigma_{#,a}
  double varrho_hash = 0.0;   // varrho_{#,a}
  double m_bar = 1.0;         // mbar
  double m_underbar = 1.0;    // munderbar
  double sigma_bar_sq = 1.0;  // sigmabar_a^2
  double rho_bar = 0.0;       // rhobar

  double q = 2.0;
  double delta = 0.5;
  double delta_prime = 0.5;

  double eqd2 = 0.0;   // E || Qhat - Q# ||_2^2
  double eqd1 = 0.0;   // E || Qhat - Q# ||_2
  double qdiff = 0.0;  // || Q# - Q* ||_2
  int nu = 2;

  // Subgaussian variance proxies; required inputs when subgaussian is set.
  double s_hat1 = 0.0, s_hat2 = 0.0, s_hat3 = 0.0;
  double s_tilde1 = 0.0, s_tilde2 = 0.0;

  bool subgaussian = false;
  bool condition7 = false;  // common fold mean (cross-fit variant switch)
  bool condition9 = false;  // common mean / consistency (non-cross-fit switch)
  ClassKind kind = ClassKind::VC;

  double constant = 1.0;  // the generic absolute constant C

  // Entropy-integral values J(2*delta), J(2*delta'), J(2); supplied directly
  // (entropy_integral_bound can be used to produce them).
  double j_2delta = 1.0;
  double j_2delta_prime = 1.0;
  double j_2 = 1.0;

  void validate() const;
};

struct BoundTerm {
  std::string name;
  double value = 0.0;
};

/// Per-term breakdown of a bound. total is always the sum of terms; extras
/// hold named auxiliary quantities that are reported but not summed.
struct BoundReport {
  std::vector<BoundTerm> terms;
  std::vector<BoundTerm> extras;
  double total = 0.0;
  bool precondition_ok = true;
  std::vector<std::string> warnings;

  double term(const std::string& name) const;
  double extra(const std::string& name) const;
};

/// K-dependent factor of the cross-fit coverage rate:
/// K^{(r+2)/3} (K-1)^{-r/3}, or K^{(r+1)/2} (K-1)^{-r/2} with the subgaussian
/// flag; multiplied by n^{-r/3} (resp. n^{-r/2}) when n is given.
double k_rate_factor(int K, double r, bool subgaussian,
                     std::optional<double> n = std::nullopt);

/// Uniform entropy integral bound: constant * delta * sqrt(log(1/delta)) for
/// VC classes (requires 0 < delta < 1/e), constant * delta^{1/nu} for
/// VC-hulls (requires delta > 0).
double entropy_integral_bound(double delta, int nu, ClassKind kind, double constant);

/// Cross-fit bound (Rhat_k / Shat_k family): per-term breakdown of the full
/// right-hand side, with the subgaussian flag switching Rhat_k -> Rhat'_k and
/// condition7 switching Shat_k -> Shat'_k. Extras include the per-fold
/// Rhat_k, Shat_k, Shat'_k values and the sd-difference bounds sum Shat_k /
/// sigma# and sum Shat'_k / sigma#. A violated precondition is flagged, not
/// fatal (informational mode).
BoundReport cv_bound_terms(const BoundInputs& inp);

/// Non-cross-fit bound (F^H / F^T2 / Rtilde family): per-term breakdown of
/// the full right-hand side; condition9 drops the ||Q#-Q*||_2 cross-term.
/// Extras include F^H, F^T2, the variance-difference envelope B and the
/// sd-bias bound. With the subgaussian flag, the guard
/// 2 M min{delta, delta'} > eqd1 must hold.
BoundReport noncv_bound_terms(const BoundInputs& inp);

/// Corollary rate expressions for VC / VC-hull classes; extras carry the
/// Delta quantities.
BoundReport corollary_rates(ClassKind part, const BoundInputs& inp, double n);

}  // namespace aipw
