#pragma once

#include "cvfm/types.hpp"

#include <cstdint>
#include <random>
#include <span>

namespace cvfm {

/// Seeded 64-bit generator. Every sampler in the library draws through an
/// explicit Rng handle; there is no global random state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 1) : engine_(seed) {}

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal (Marsaglia polar method).
  double normal();

  std::uint64_t next_u64() { return engine_(); }

  friend bool operator==(const Rng& a, const Rng& b) {
    return a.engine_ == b.engine_ && a.has_spare_ == b.has_spare_ &&
           (!a.has_spare_ || a.spare_ == b.spare_);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Derives an independent seed for substream `stream` of `seed` (SplitMix64).
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream);

double rnorm(Rng& rng, double mean, double sd);

/// Gamma with the given shape and rate (mean shape / rate).
double rgamma(Rng& rng, double shape, double rate);

/// log of a Gamma(shape, 1) variate; stays finite for very small shapes.
double rlog_gamma(Rng& rng, double shape);

double rbeta(Rng& rng, double a, double b);

/// Inverse-gamma with density proportional to x^{-shape-1} exp(-scale / x).
double rinv_gamma(Rng& rng, double shape, double scale);

/// Half-Cauchy C+(0, 1).
double rhalf_cauchy(Rng& rng);

/// Symmetric Dirichlet(a, ..., a) of dimension `dim`, computed in log space.
/// Entries are floored at the smallest normal double so they stay positive.
Vector rdirichlet(Rng& rng, Index dim, double a);

/// Normal(mean, sd^2) truncated to [lo, hi). Either bound may be infinite.
/// Central intervals use the inverse CDF; intervals entirely beyond |z| = 6
/// use exponential rejection. The result always satisfies lo <= x < hi
/// (or x == lo when the interval is narrower than one ulp).
double rtruncnorm(Rng& rng, double mean, double sd, double lo, double hi);

/// Generalized inverse Gaussian with density proportional to
/// x^{lambda-1} exp(-(chi / x + psi x) / 2). Uses the ratio-of-uniforms and
/// transformed-density-rejection generators of Hormann and Leydold. chi = 0
/// gives a gamma draw, psi = 0 an inverse-gamma draw, and for lambda != 0
/// with sqrt(chi psi) < kGigLimitOmega the matching limit is used as well.
inline constexpr double kGigLimitOmega = 1e-8;
double rgig(Rng& rng, double lambda, double chi, double psi);

/// Draws an index with probability proportional to exp(log_weights[i]).
Index rcategorical_log(Rng& rng, std::span<const double> log_weights);

/// Multivariate normal draw given the Cholesky factor of the *precision*
/// (prec = L L') and the mean.
Vector rmvnorm_precision(Rng& rng, const Vector& mean, const Eigen::LLT<Matrix>& prec_chol);

}  // namespace cvfm
