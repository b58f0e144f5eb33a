#pragma once

#include <cstddef>
#include <span>
#include <utility>

namespace aipw {

/// Inverse standard normal CDF, accurate to better than 1e-13 (Acklam's
/// rational approximation refined with one Halley step against erfc).
double inv_norm_cdf(double p);

/// Standard normal quantile z_alpha: the (1 - alpha)-quantile.
double z_quantile(double alpha);

/// Standard normal density and CDF.
double norm_pdf(double z);
double norm_cdf(double z);

double mean(std::span<const double> v);

/// Population variance (divide by n).
double variance_n(std::span<const double> v);

/// Sample variance (divide by n - 1).
double variance_unbiased(std::span<const double> v);

/// Wilson score interval for a binomial proportion.
std::pair<double, double> wilson_interval(std::size_t successes, std::size_t trials,
                                          double level);

}  // namespace aipw
