#pragma once

// Blocked Gibbs sampler for the augmented posterior, with adaptive
// Metropolis-Hastings steps for the Dirichlet allocations phi_k and the
// covariance-regression coefficients f_k.
//
// A sweep runs, in order:
//   latent Y*, eta, Q, zeta, tau, phi, F (followed by a fresh eta), sigma2,
//   beta, baseline stack, size-factor stack.
// The F step targets the posterior with eta integrated out, so it redraws eta
// from its full conditional before returning.

#include "cvfm/adaptive_mh.hpp"
#include "cvfm/calibrate.hpp"
#include "cvfm/data.hpp"
#include "cvfm/priors.hpp"
#include "cvfm/random.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace cvfm {

struct SamplerConfig {
  long n_iter = 20000;
  long n_burn = 10000;
  long thin = 10;
  std::uint64_t seed = 1;
  AdaptConfig adapt;
  double omega_step = 1.0;  ///< random-walk sd of the inner weights on the logit scale

  void validate() const;
};

struct FactorState {
  DirHsState dirhs;  ///< Q, phi, zeta, tau
  Matrix f;          ///< K x P
  double sigma2 = 1.0;
  Matrix eta;        ///< N x K
};

struct MeanState {
  Vector r;
  Matrix alpha;  ///< alpha_rows x J; derived from the stack and its indicators
  Matrix beta;   ///< J x P_mean
  ConstrainedDpStack alpha_stack;
  ConstrainedDpStack r_stack;
  IntMatrix alpha_component, alpha_inner;  ///< alpha_rows x J
  IntVector r_component, r_inner;          ///< N
};

struct ChainState {
  FactorState factor;
  MeanState mean;
  Matrix latent_y;  ///< N x J log-scale latent abundances
  long iteration = 0;
  Rng rng;
  std::vector<AdaptiveProposal> phi_proposal;
  std::vector<AdaptiveProposal> f_proposal;
};

/// Data-driven starting point: latents inside their cells, baselines and size
/// factors from empirical log means, unit shrinkage scales, zero beta.
ChainState initial_state(const ModelData& data, const HyperConfig& hyper, const SamplerConfig& config);

/// Draws every parameter from the prior; latents and counts are then
/// simulated by forward_simulate. Used by the joint-distribution tests.
ChainState sample_prior_state(const ModelData& data, const HyperConfig& hyper, const SamplerConfig& config);

/// Draws eta ~ N(0, I), Y* ~ N(mu + Lambda eta, sigma2) and y = floor(exp(Y*))
/// (saturating at the largest int64). Writes the counts into data.y.
void forward_simulate(ModelData& data, ChainState& state);

// Derived quantities ---------------------------------------------------------

/// H = X_cov F' (N x K): the covariate-dependent factor scales f_k . x_i.
Matrix factor_scales(const ChainState& s, const ModelData& d);
/// mu (N x J).
Matrix mean_matrix(const ChainState& s, const ModelData& d);
/// Lambda(x_i) eta_i stacked by row (N x J).
Matrix factor_term(const ChainState& s, const ModelData& d);
/// Rebuilds alpha from the stack and its indicators.
void refresh_alpha(MeanState& m);

// Gibbs and Metropolis blocks -------------------------------------------------

void update_latent_y(ChainState& s, const ModelData& d, const HyperConfig& h);
void update_eta(ChainState& s, const ModelData& d, const HyperConfig& h);
void update_q(ChainState& s, const ModelData& d, const HyperConfig& h);
void update_zeta(ChainState& s, const ModelData& d, const HyperConfig& h);
void update_tau(ChainState& s, const ModelData& d, const HyperConfig& h);
void update_phi(ChainState& s, const ModelData& d, const HyperConfig& h, const SamplerConfig& c, bool adapting);
void update_f(ChainState& s, const ModelData& d, const HyperConfig& h, const SamplerConfig& c, bool adapting);
void update_sigma2(ChainState& s, const ModelData& d, const HyperConfig& h);
void update_beta(ChainState& s, const ModelData& d, const HyperConfig& h);
void update_alpha_stack(ChainState& s, const ModelData& d, const HyperConfig& h, const SamplerConfig& c);
void update_r_stack(ChainState& s, const ModelData& d, const HyperConfig& h, const SamplerConfig& c);

/// One full sweep in the documented order. Throws NumericalError naming the
/// block if any updated component is not finite.
void sweep(ChainState& s, const ModelData& d, const HyperConfig& h, const SamplerConfig& c, bool adapting);

/// Log target of the phi_k update on the additive log-ratio scale (last
/// coordinate as reference), including the transform's Jacobian.
double phi_log_target(const Vector& z, const Vector& q_col, const Vector& zeta_col, double tau, double a_phi,
                      bool with_likelihood);

/// Log of N(e_i; 0, Lambda_i Lambda_i' + sigma2 I) summed over samples, with
/// Lambda_i = Q diag(h_i); uses the K x K Woodbury form.
double collapsed_loglik(const Matrix& h, const Matrix& q, const Matrix& residual, double sigma2);

/// Checks lo <= Y*_ij < hi for every cell (equality with lo allowed when the
/// cell is narrower than one ulp).
bool latent_within_bounds(const Matrix& latent, const CountMatrix& y);

// Draw storage ----------------------------------------------------------------

/// Saved draws of one chain: per-parameter tables, one row per saved draw.
struct ChainDraws {
  std::vector<long> iterations;
  std::map<std::string, std::vector<std::string>> columns;
  std::map<std::string, std::vector<double>> values;  ///< row-major

  Index n_draws() const { return static_cast<Index>(iterations.size()); }
  /// Draws x columns matrix of one parameter.
  Matrix table(const std::string& name) const;
};

struct ChainSummary {
  double phi_acceptance = 0.0;  ///< mean post-adaptation acceptance over factors
  double f_acceptance = 0.0;
  double seconds = 0.0;
};

struct ChainResult {
  ChainDraws draws;
  ChainSummary summary;
  ChainState final_state;
};

using ProgressFn = std::function<void(long iteration)>;

/// Runs one chain from initial_state and stores thinned post-burn-in draws of
/// Q, F, sigma2, tau, beta, alpha and r.
ChainResult run_chain(const ModelData& data, const HyperConfig& hyper, const SamplerConfig& config,
                      const ProgressFn& progress = {});

/// Appends the current state of the saved parameters to `draws`.
void record_draw(ChainDraws& draws, const ChainState& s, const ModelData& d);

}  // namespace cvfm
