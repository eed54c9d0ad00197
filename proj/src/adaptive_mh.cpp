#include "cvfm/adaptive_mh.hpp"

#include <algorithm>

namespace cvfm {

AdaptiveProposal::AdaptiveProposal(Index dim, double initial_scale)
    : dim_(dim),
      initial_scale_(initial_scale),
      mean_(Vector::Zero(dim)),
      m2_(Matrix::Zero(dim, dim)),
      chol_(Matrix::Identity(dim, dim) * initial_scale) {
  require(dim >= 1, "AdaptiveProposal: dimension must be positive");
  require(initial_scale > 0.0, "AdaptiveProposal: initial scale must be positive");
}

Vector AdaptiveProposal::propose(const Vector& current, Rng& rng) const {
  Vector z(dim_);
  for (Index k = 0; k < dim_; ++k) z[k] = rng.normal();
  const Vector step = chol_.triangularView<Eigen::Lower>() * z;
  return current + std::exp(log_scale_) * step;
}

void AdaptiveProposal::count(bool accepted, bool adapting) {
  ++proposed_;
  if (accepted) ++accepted_;
  if (!adapting) {
    ++frozen_proposed_;
    if (accepted) ++frozen_accepted_;
  }
}

double AdaptiveProposal::frozen_acceptance_rate() const {
  return frozen_proposed_ ? static_cast<double>(frozen_accepted_) / static_cast<double>(frozen_proposed_) : 0.0;
}

double AdaptiveProposal::overall_acceptance_rate() const {
  return proposed_ ? static_cast<double>(accepted_) / static_cast<double>(proposed_) : 0.0;
}

void AdaptiveProposal::adapt(const Vector& state, double accept_prob, const AdaptConfig& cfg) {
  ++n_;
  // Welford update of the running mean and scatter.
  const Vector delta = state - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_.noalias() += delta * (state - mean_).transpose();

  const double gain = std::pow(static_cast<double>(n_) + 1.0, -0.6);
  log_scale_ = std::clamp(log_scale_ + gain * (accept_prob - cfg.target), -15.0, 15.0);

  if (n_ >= std::max<long>(cfg.start, 2)) {
    const long every = dim_ <= 20 ? 1 : 10;
    if (!empirical_ || n_ % every == 0) refresh_factor(cfg);
  }
}

void AdaptiveProposal::refresh_factor(const AdaptConfig& cfg) {
  Matrix cov = m2_ / static_cast<double>(n_ - 1);
  cov.diagonal().array() += cfg.epsilon;
  cov *= 2.38 * 2.38 / static_cast<double>(dim_);
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) return;
  if (!empirical_) {
    // The empirical covariance carries its own magnitude.
    log_scale_ = 0.0;
  }
  chol_ = llt.matrixL();
  empirical_ = true;
}

}  // namespace cvfm
