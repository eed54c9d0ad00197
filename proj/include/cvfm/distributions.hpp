#pragma once

// Scalar densities, distribution functions and quantiles shared by the
// model, the samplers and the tests.

namespace cvfm {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

/// Standard normal CDF.
double norm_cdf(double x);

/// log of the standard normal CDF, accurate far into the lower tail.
double norm_logcdf(double x);

/// Standard normal quantile (Acklam's rational approximation followed by a
/// Halley refinement step; relative error near machine precision).
double norm_quantile(double p);

/// log of the N(mean, var) density at x.
double normal_logpdf(double x, double mean, double var);

/// log(Phi(b) - Phi(a)) for a < b, stable when both bounds sit in one tail.
double norm_log_interval(double a, double b);

/// log(exp(a) - exp(b)) for a >= b.
double log_diff_exp(double a, double b);

}  // namespace cvfm
