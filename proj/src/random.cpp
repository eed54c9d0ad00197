#include "cvfm/random.hpp"

#include "cvfm/distributions.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>
#include <vector>

namespace cvfm {

// ---------------------------------------------------------------------------
// Normal distribution functions

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double norm_logcdf(double x) {
  if (x > 5.0) return std::log1p(-0.5 * std::erfc(x / std::sqrt(2.0)));
  if (x > -20.0) return std::log(0.5 * std::erfc(-x / std::sqrt(2.0)));
  // Asymptotic expansion of the Mills ratio.
  const double x2 = 1.0 / (x * x);
  const double series = 1.0 - x2 * (1.0 - 3.0 * x2 * (1.0 - 5.0 * x2 * (1.0 - 7.0 * x2)));
  return -0.5 * x * x - kLogSqrt2Pi - std::log(-x) + std::log(series);
}

double norm_quantile(double p) {
  if (!(p > 0.0)) return -std::numeric_limits<double>::infinity();
  if (!(p < 1.0)) return std::numeric_limits<double>::infinity();

  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00, 2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley step against the erfc-based CDF.
  const double e = (x < 0.0) ? norm_cdf(x) - p : (1.0 - p) - 0.5 * std::erfc(x / std::sqrt(2.0));
  const double u = e * std::sqrt(2.0 * kPi) * std::exp(0.5 * x * x);
  if (std::isfinite(u)) x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

double normal_logpdf(double x, double mean, double var) {
  const double z = x - mean;
  return -0.5 * (z * z / var + std::log(var)) - kLogSqrt2Pi;
}

double log_diff_exp(double a, double b) {
  if (b == -std::numeric_limits<double>::infinity()) return a;
  if (!(a > b)) return -std::numeric_limits<double>::infinity();
  return a + std::log1p(-std::exp(b - a));
}

double norm_log_interval(double a, double b) {
  if (!(a < b)) return -std::numeric_limits<double>::infinity();
  if (std::isfinite(a) && std::isfinite(b)) {
    const double w = b - a;
    const double mid = 0.5 * (a + b);
    if (w * std::max(1.0, std::abs(mid)) < 1e-3) {
      // Midpoint rule with its second-order correction.
      return std::log(w) - 0.5 * mid * mid - kLogSqrt2Pi +
             std::log1p(w * w * (mid * mid - 1.0) / 24.0);
    }
  }
  if (a > 0.0) return log_diff_exp(norm_logcdf(-a), norm_logcdf(-b));
  if (b <= 0.0) return log_diff_exp(norm_logcdf(b), norm_logcdf(a));
  return std::log(norm_cdf(b) - norm_cdf(a));
}

// ---------------------------------------------------------------------------
// Generators

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * m;
  has_spare_ = true;
  return u * m;
}

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double rnorm(Rng& rng, double mean, double sd) { return mean + sd * rng.normal(); }

namespace {

// Marsaglia and Tsang, shape >= 1, unit rate.
double gamma_mt(Rng& rng, double shape) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace

double rlog_gamma(Rng& rng, double shape) {
  require(shape > 0.0, "rlog_gamma: shape must be positive");
  if (shape >= 1.0) return std::log(gamma_mt(rng, shape));
  return std::log(gamma_mt(rng, shape + 1.0)) + std::log(rng.uniform()) / shape;
}

double rgamma(Rng& rng, double shape, double rate) {
  require(shape > 0.0 && rate > 0.0, "rgamma: shape and rate must be positive");
  if (shape >= 1.0) return gamma_mt(rng, shape) / rate;
  return std::exp(rlog_gamma(rng, shape)) / rate;
}

double rbeta(Rng& rng, double a, double b) {
  const double la = rlog_gamma(rng, a);
  const double lb = rlog_gamma(rng, b);
  // a / (a + b) evaluated from the logs.
  return 1.0 / (1.0 + std::exp(lb - la));
}

double rinv_gamma(Rng& rng, double shape, double scale) {
  require(scale > 0.0, "rinv_gamma: scale must be positive");
  return scale / rgamma(rng, shape, 1.0);
}

double rhalf_cauchy(Rng& rng) { return std::abs(std::tan(kPi * (rng.uniform() - 0.5))); }

Vector rdirichlet(Rng& rng, Index dim, double a) {
  require(dim >= 1, "rdirichlet: dimension must be positive");
  Vector logs(dim);
  for (Index j = 0; j < dim; ++j) logs[j] = rlog_gamma(rng, a);
  const double mx = logs.maxCoeff();
  const double lse = mx + std::log((logs.array() - mx).exp().sum());
  Vector out(dim);
  for (Index j = 0; j < dim; ++j) out[j] = std::max(std::exp(logs[j] - lse), DBL_MIN);
  return out;
}

namespace {

// Exponential rejection for the standardized interval [a, b] with a > 0 far
// in the upper tail (Robert 1995).
double truncnorm_upper_tail(Rng& rng, double a, double b) {
  const double alpha = 0.5 * (a + std::sqrt(a * a + 4.0));
  const double span_mass = std::isfinite(b) ? -std::expm1(-alpha * (b - a)) : 1.0;
  for (;;) {
    const double z = a - std::log1p(-rng.uniform() * span_mass) / alpha;
    const double d = z - alpha;
    if (std::log(rng.uniform()) <= -0.5 * d * d) return std::min(z, b);
  }
}

double truncnorm_standard(Rng& rng, double a, double b) {
  constexpr double tail = 6.0;
  if (a >= tail) return truncnorm_upper_tail(rng, a, b);
  if (b <= -tail) return -truncnorm_upper_tail(rng, -b, -a);
  const double w = b - a;
  if (w < 1e-9) return a + w * rng.uniform();
  if (a >= 0.0) {
    // Upper half: work with survival probabilities to keep precision.
    const double sa = norm_cdf(-a);
    const double sb = norm_cdf(-b);
    const double u = sb + (sa - sb) * rng.uniform();
    return -norm_quantile(u);
  }
  const double pa = norm_cdf(a);
  const double pb = norm_cdf(b);
  const double u = pa + (pb - pa) * rng.uniform();
  return norm_quantile(u);
}

}  // namespace

double rtruncnorm(Rng& rng, double mean, double sd, double lo, double hi) {
  require(!(lo > hi), "rtruncnorm: empty interval");
  if (!(lo < hi)) return lo;
  double x;
  if (!(sd > 0.0)) {
    x = std::clamp(mean, lo, hi);
  } else {
    const double a = (lo - mean) / sd;
    const double b = (hi - mean) / sd;
    if (!(a < b)) {
      x = std::clamp(mean, lo, hi);
    } else {
      x = mean + sd * truncnorm_standard(rng, a, b);
    }
  }
  if (x < lo) x = lo;
  if (x >= hi) x = std::nextafter(hi, -std::numeric_limits<double>::infinity());
  if (x < lo) x = lo;
  return x;
}

// ---------------------------------------------------------------------------
// Generalized inverse Gaussian

namespace {

double gig_mode(double lambda, double omega) {
  if (lambda >= 1.0) return (std::sqrt((lambda - 1.0) * (lambda - 1.0) + omega * omega) + (lambda - 1.0)) / omega;
  return omega / (std::sqrt((1.0 - lambda) * (1.0 - lambda) + omega * omega) + (1.0 - lambda));
}

// Ratio-of-uniforms without mode shift; lambda in [0, 1], omega moderate.
double gig_rou_noshift(Rng& rng, double lambda, double omega) {
  const double t = 0.5 * (lambda - 1.0);
  const double s = 0.25 * omega;
  const double xm = gig_mode(lambda, omega);
  const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);
  const double ym = ((lambda + 1.0) + std::sqrt((lambda + 1.0) * (lambda + 1.0) + omega * omega)) / omega;
  const double um = std::exp(0.5 * (lambda + 1.0) * std::log(ym) - s * (ym + 1.0 / ym) - nc);
  for (;;) {
    const double u = um * rng.uniform();
    const double v = rng.uniform();
    const double x = u / v;
    if (std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) return x;
  }
}

// Ratio-of-uniforms with mode shift; lambda > 2 or omega > 3.
double gig_rou_shift(Rng& rng, double lambda, double omega) {
  const double t = 0.5 * (lambda - 1.0);
  const double s = 0.25 * omega;
  const double xm = gig_mode(lambda, omega);
  const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);

  // Roots of the cubic that bound the shifted region.
  const double a = -(2.0 * (lambda + 1.0) / omega + xm);
  const double b = (2.0 * (lambda - 1.0) * xm / omega - 1.0);
  const double c = xm;
  const double p = b - a * a / 3.0;
  const double q = (2.0 * a * a * a) / 27.0 - (a * b) / 3.0 + c;
  const double fi = std::acos(-q / (2.0 * std::sqrt(-(p * p * p) / 27.0)));
  const double fak = 2.0 * std::sqrt(-p / 3.0);
  const double y1 = fak * std::cos(fi / 3.0) - a / 3.0;
  const double y2 = fak * std::cos(fi / 3.0 + 4.0 / 3.0 * kPi) - a / 3.0;

  const double uplus = (y1 - xm) * std::exp(t * std::log(y1) - s * (y1 + 1.0 / y1) - nc);
  const double uminus = (y2 - xm) * std::exp(t * std::log(y2) - s * (y2 + 1.0 / y2) - nc);
  for (;;) {
    const double u = uminus + rng.uniform() * (uplus - uminus);
    const double v = rng.uniform();
    const double x = u / v + xm;
    if (x <= 0.0) continue;
    if (std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) return x;
  }
}

// Transformed density rejection for 0 <= lambda < 1 and small omega.
double gig_small_omega(Rng& rng, double lambda, double omega) {
  const double xm = gig_mode(lambda, omega);
  const double x0 = omega / (1.0 - lambda);
  const double k0 = std::exp((lambda - 1.0) * std::log(xm) - 0.5 * omega * (xm + 1.0 / xm));
  double area[3];
  area[0] = k0 * x0;
  double k1, k2;
  if (x0 >= 2.0 / omega) {
    k1 = 0.0;
    area[1] = 0.0;
    k2 = std::pow(x0, lambda - 1.0);
    area[2] = k2 * 2.0 * std::exp(-omega * x0 / 2.0) / omega;
  } else {
    k1 = std::exp(-omega);
    area[1] = (lambda == 0.0) ? k1 * std::log(2.0 / (omega * omega))
                              : k1 / lambda * (std::pow(2.0 / omega, lambda) - std::pow(x0, lambda));
    k2 = std::pow(2.0 / omega, lambda - 1.0);
    area[2] = k2 * 2.0 * std::exp(-1.0) / omega;
  }
  const double total = area[0] + area[1] + area[2];
  for (;;) {
    double v = total * rng.uniform();
    double x, hx;
    if (v <= area[0]) {
      x = x0 * v / area[0];
      hx = k0;
    } else if ((v -= area[0]) <= area[1]) {
      if (lambda == 0.0) {
        x = omega * std::exp(std::exp(omega) * v);
        hx = k1 / x;
      } else {
        x = std::pow(std::pow(x0, lambda) + (lambda / k1 * v), 1.0 / lambda);
        hx = k1 * std::pow(x, lambda - 1.0);
      }
    } else {
      v -= area[1];
      const double lo = std::max(x0, 2.0 / omega);
      x = -2.0 / omega * std::log(std::exp(-omega / 2.0 * lo) - omega / (2.0 * k2) * v);
      hx = k2 * std::exp(-omega / 2.0 * x);
    }
    const double u = rng.uniform() * hx;
    if (std::log(u) <= (lambda - 1.0) * std::log(x) - omega / 2.0 * (x + 1.0 / x)) return x;
  }
}

}  // namespace

double rgig(Rng& rng, double lambda, double chi, double psi) {
  require(chi >= 0.0 && psi >= 0.0 && std::isfinite(chi) && std::isfinite(psi),
          "rgig: chi and psi must be finite and non-negative");
  if (chi == 0.0) {
    require(lambda > 0.0 && psi > 0.0, "rgig: chi = 0 requires lambda > 0 and psi > 0");
    return rgamma(rng, lambda, psi / 2.0);
  }
  if (psi == 0.0) {
    require(lambda < 0.0, "rgig: psi = 0 requires lambda < 0");
    return rinv_gamma(rng, -lambda, chi / 2.0);
  }
  const double omega = std::sqrt(chi) * std::sqrt(psi);
  // For omega -> 0 the density tends to its gamma (lambda > 0) or inverse
  // gamma (lambda < 0) limit with relative error O(omega).
  if (omega < kGigLimitOmega && lambda != 0.0)
    return lambda > 0.0 ? rgamma(rng, lambda, psi / 2.0) : rinv_gamma(rng, -lambda, chi / 2.0);
  const double lambda_abs = std::abs(lambda);
  const double alpha = std::sqrt(chi) / std::sqrt(psi);

  double x;
  if (lambda_abs > 2.0 || omega > 3.0) {
    x = gig_rou_shift(rng, lambda_abs, omega);
  } else if (lambda_abs >= 1.0 - 2.25 * omega * omega || omega > 0.2) {
    x = gig_rou_noshift(rng, lambda_abs, omega);
  } else {
    x = gig_small_omega(rng, lambda_abs, omega);
  }
  return lambda < 0.0 ? alpha / x : alpha * x;
}

Index rcategorical_log(Rng& rng, std::span<const double> log_weights) {
  require(!log_weights.empty(), "rcategorical_log: no weights");
  const double mx = *std::max_element(log_weights.begin(), log_weights.end());
  require(mx > -std::numeric_limits<double>::infinity() && !std::isnan(mx),
          "rcategorical_log: all weights are zero");
  double total = 0.0;
  thread_local std::vector<double> w;
  w.resize(log_weights.size());
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    w[i] = std::exp(log_weights[i] - mx);
    total += w[i];
  }
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (u < w[i]) return static_cast<Index>(i);
    u -= w[i];
  }
  // Rounding left a sliver; return the last positive-weight entry.
  for (std::size_t i = w.size(); i-- > 0;)
    if (w[i] > 0.0) return static_cast<Index>(i);
  return 0;
}

Vector rmvnorm_precision(Rng& rng, const Vector& mean, const Eigen::LLT<Matrix>& prec_chol) {
  Vector z(mean.size());
  for (Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
  return mean + prec_chol.matrixU().solve(z);
}

}  // namespace cvfm
