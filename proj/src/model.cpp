#include "cvfm/model.hpp"

#include "cvfm/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cvfm {

CovariateVector::CovariateVector(Vector values) : values_(std::move(values)) {
  require(values_.size() >= 1, "CovariateVector: needs at least the intercept");
  require(values_[0] == 1.0, "CovariateVector: first entry must be the intercept 1");
}

namespace {

void check_dims(const FactorLoadingParams& params, const CovariateVector& x) {
  require(params.f.rows() == params.q.cols(),
          "loading parameters: F has " + std::to_string(params.f.rows()) + " rows but Q has " +
              std::to_string(params.q.cols()) + " columns");
  require(params.f.cols() == x.size(), "loading parameters: F has " + std::to_string(params.f.cols()) +
                                           " columns but x has length " + std::to_string(x.size()));
}

}  // namespace

Matrix loading_at(const FactorLoadingParams& params, const CovariateVector& x) {
  check_dims(params, x);
  const Vector h = params.f * x.values();
  return params.q * h.asDiagonal();
}

Matrix sigma_at(const FactorLoadingParams& params, const CovariateVector& x) {
  require(params.sigma2 > 0.0, "sigma_at: sigma2 must be positive");
  const Matrix lambda = loading_at(params, x);
  Matrix sigma = lambda * lambda.transpose();
  sigma.diagonal().array() += params.sigma2;
  // Exact symmetry regardless of the product's rounding.
  return 0.5 * (sigma + sigma.transpose());
}

Matrix correlation_from_covariance(const Matrix& sigma) {
  require(sigma.rows() == sigma.cols(), "correlation: matrix must be square");
  const Vector inv_sd = sigma.diagonal().array().sqrt().inverse();
  Matrix rho = inv_sd.asDiagonal() * sigma * inv_sd.asDiagonal();
  for (Index j = 0; j < rho.rows(); ++j) {
    rho(j, j) = 1.0;
    for (Index k = 0; k < j; ++k) {
      const double v = std::clamp(0.5 * (rho(j, k) + rho(k, j)), -1.0, 1.0);
      rho(j, k) = rho(k, j) = v;
    }
  }
  return rho;
}

Vector mu_at(const MeanParams& params, Index i, const Vector& mean_covariates) {
  require(i >= 0 && i < params.r.size(), "mu_at: sample index out of range");
  require(params.beta.cols() == mean_covariates.size(),
          "mu_at: beta has " + std::to_string(params.beta.cols()) + " columns but " +
              std::to_string(mean_covariates.size()) + " mean covariates were given");
  Index row = 0;
  if (params.subject_mode()) {
    require(static_cast<std::size_t>(i) < params.subject.size(),
            "mu_at: subject mode requires a subject label for sample " + std::to_string(i));
    row = params.subject[static_cast<std::size_t>(i)];
    require(row >= 0 && row < params.alpha.rows(), "mu_at: subject label out of range");
  }
  require(params.alpha.cols() == params.beta.rows(), "mu_at: alpha and beta disagree on J");
  Vector mu = params.alpha.row(row).transpose();
  mu.array() += params.r[i];
  if (mean_covariates.size() > 0) mu += params.beta * mean_covariates;
  return mu;
}

Vector mu_at(const MeanParams& params, Index i, const CovariateVector& x) {
  return mu_at(params, i, x.without_intercept());
}

LognormalMoments lognormal_moments(const Vector& mu, const Matrix& sigma) {
  require(sigma.rows() == mu.size() && sigma.cols() == mu.size(), "lognormal_moments: dimension mismatch");
  LognormalMoments out;
  out.mean = (mu.array() + 0.5 * sigma.diagonal().array()).exp();
  out.cov = (out.mean * out.mean.transpose()).array() * sigma.array().unaryExpr([](double s) {
    return std::expm1(s);
  });
  return out;
}

LatentBounds latent_bounds(std::int64_t y) {
  require(y >= 0, "count must be non-negative");
  if (y == 0) return {-std::numeric_limits<double>::infinity(), 0.0};
  const double yd = static_cast<double>(y);
  const double lo = std::log(yd);
  return {lo, lo + std::log1p(1.0 / yd)};
}

double rounded_log_pmf(std::span<const std::int64_t> y, const Vector& m, double sd) {
  require(static_cast<Index>(y.size()) == m.size(), "rounded_pmf: y and m differ in length");
  require(sd > 0.0, "rounded_pmf: sd must be positive");
  double total = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    require(y[j] >= 0, "rounded_pmf: counts must be non-negative");
    const LatentBounds b = latent_bounds(y[j]);
    const double mj = m[static_cast<Index>(j)];
    total += norm_log_interval((b.lo - mj) / sd, (b.hi - mj) / sd);
  }
  return total;
}

double rounded_pmf(std::span<const std::int64_t> y, const Vector& m, double sd) {
  return std::exp(rounded_log_pmf(y, m, sd));
}

}  // namespace cvfm
