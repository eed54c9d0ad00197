#pragma once

// Deterministic model mathematics: covariate-dependent loadings and
// covariance, the mean regression, log-normal moments and the rounded
// log-normal count kernel.

#include "cvfm/types.hpp"

#include <span>
#include <vector>

namespace cvfm {

/// Covariate vector of a sample with the intercept in position 0.
class CovariateVector {
 public:
  explicit CovariateVector(Vector values);

  const Vector& values() const { return values_; }
  Index size() const { return values_.size(); }
  /// The covariates without the intercept.
  Vector without_intercept() const { return values_.tail(values_.size() - 1); }

 private:
  Vector values_;
};

/// Q (J x K), F (K x P) and the idiosyncratic variance.
struct FactorLoadingParams {
  Matrix q;
  Matrix f;
  double sigma2 = 1.0;

  Index n_features() const { return q.rows(); }
  Index n_factors() const { return q.cols(); }
  Index n_covariates() const { return f.cols(); }
};

/// Size factors r (N), baselines alpha (one row, or one row per subject)
/// and mean coefficients beta (J x P_mean).
struct MeanParams {
  Vector r;
  Matrix alpha;
  Matrix beta;
  /// Subject index per sample; empty unless alpha has one row per subject.
  std::vector<int> subject;

  bool subject_mode() const { return alpha.rows() > 1 || !subject.empty(); }
};

/// Lambda(x): entry (j, k) = q_jk * (f_k . x).
Matrix loading_at(const FactorLoadingParams& params, const CovariateVector& x);

/// Sigma(x) = Lambda(x) Lambda(x)' + sigma2 I.
Matrix sigma_at(const FactorLoadingParams& params, const CovariateVector& x);

/// Converts a covariance matrix into a correlation matrix.
Matrix correlation_from_covariance(const Matrix& sigma);

/// mu_i = r_i + alpha_(s_i) + beta * mean_covariates. The covariates exclude
/// the intercept.
Vector mu_at(const MeanParams& params, Index i, const Vector& mean_covariates);

/// Overload that drops the intercept of a full covariate vector.
Vector mu_at(const MeanParams& params, Index i, const CovariateVector& x);

struct LognormalMoments {
  Vector mean;
  Matrix cov;
};

/// Mean and covariance of exp(Z) for Z ~ N(mu, sigma).
LognormalMoments lognormal_moments(const Vector& mu, const Matrix& sigma);

/// log P(Y = y | eta) for the rounded log-normal kernel with independent
/// coordinates given the latent factors: the product over j of
/// Phi((log(y_j + 1) - m_j) / sd) - Phi((log y_j - m_j) / sd), log 0 = -inf.
double rounded_log_pmf(std::span<const std::int64_t> y, const Vector& m, double sd);

double rounded_pmf(std::span<const std::int64_t> y, const Vector& m, double sd);

/// The interval [log y, log(y + 1)) that a latent log-abundance must occupy.
struct LatentBounds {
  double lo;
  double hi;
};
LatentBounds latent_bounds(std::int64_t y);

}  // namespace cvfm
