#pragma once

#include "cvfm/random.hpp"
#include "cvfm/types.hpp"

#include <cmath>

namespace cvfm {

struct AdaptConfig {
  bool enabled = true;
  double initial_scale = 0.1;  ///< proposal sd before the empirical covariance is used
  long start = 200;            ///< adaptation steps before switching to the empirical covariance
  double target = 0.234;       ///< acceptance rate targeted by the global scale
  double epsilon = 1e-6;       ///< jitter added to the empirical covariance
};

/// Gaussian random-walk proposal with Haario-style covariance adaptation and
/// a Robbins-Monro global scale. Proposal covariance after `start` steps is
/// exp(2 s) (2.38^2 / d) (C + eps I), where C is the running covariance of
/// the visited states; before that it is exp(2 s) initial_scale^2 I.
class AdaptiveProposal {
 public:
  AdaptiveProposal() = default;
  AdaptiveProposal(Index dim, double initial_scale);

  Index dim() const { return dim_; }
  Vector propose(const Vector& current, Rng& rng) const;

  /// Feeds the post-step state and the step's acceptance probability.
  void adapt(const Vector& state, double accept_prob, const AdaptConfig& cfg);

  void count(bool accepted, bool adapting);

  /// Acceptance rate over steps taken with adaptation switched off.
  double frozen_acceptance_rate() const;
  long frozen_steps() const { return frozen_proposed_; }
  double overall_acceptance_rate() const;
  double log_scale() const { return log_scale_; }

 private:
  void refresh_factor(const AdaptConfig& cfg);

  Index dim_ = 0;
  double initial_scale_ = 0.1;
  double log_scale_ = 0.0;
  long n_ = 0;
  Vector mean_;
  Matrix m2_;
  Matrix chol_;
  bool empirical_ = false;
  long proposed_ = 0, accepted_ = 0;
  long frozen_proposed_ = 0, frozen_accepted_ = 0;
};

/// One Metropolis-Hastings step with a symmetric adaptive proposal.
/// `current_logp` must hold log_target(current) and is updated on acceptance.
template <class LogTarget>
bool adaptive_mh_step(AdaptiveProposal& proposal, Vector& current, double& current_logp, LogTarget&& log_target,
                      Rng& rng, bool adapting, const AdaptConfig& cfg) {
  const Vector candidate = proposal.propose(current, rng);
  const double cand_logp = log_target(candidate);
  const double log_ratio = cand_logp - current_logp;
  const double accept_prob = std::isnan(log_ratio) ? 0.0 : (log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio));
  const bool accepted = rng.uniform() < accept_prob;
  if (accepted) {
    current = candidate;
    current_logp = cand_logp;
  }
  proposal.count(accepted, adapting);
  if (adapting) proposal.adapt(current, accept_prob, cfg);
  return accepted;
}

}  // namespace cvfm
