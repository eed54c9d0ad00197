#pragma once

#include "cvfm/data.hpp"
#include "cvfm/priors.hpp"

namespace cvfm {

/// Every fixed hyperparameter of the model.
struct HyperConfig {
  int K = 1;
  double a_phi = 1.0;
  double a_tau = 0.1;
  double b_tau = 1.0;
  double a_sigma = 3.0;
  double b_sigma = 3.0;
  double u2_beta = 10.0;
  double nu_alpha = 0.0;
  double nu_r = 0.0;
  double u2_alpha = 10.0;
  double u_r2 = 0.01;
  double u2_xi_r = 1.0;
  double c_alpha = 3.0;
  double c_r = 3.0;
  double a_omega_alpha = 5.0;
  double b_omega_alpha = 5.0;
  double a_omega_r = 5.0;
  double b_omega_r = 5.0;
  int L_alpha = 35;
  int L_r = 30;

  /// Throws ContractError unless every field is in range.
  void validate() const;

  DirHsHyper dirhs() const { return {a_phi, a_tau, b_tau, K}; }
  DpStackHyper alpha_stack() const;
  DpStackHyper r_stack() const;
};

/// Pseudocount added before taking logs in the clr transform.
inline constexpr double kClrPseudocount = 0.01;

/// Number of principal components of the clr-transformed counts needed to
/// explain `variance_target` of the total variance, capped at min(N - 1, J).
/// Returns 1 for a table with no variance.
int choose_k_by_pca(const CountTable& counts, double variance_target = 0.95);

/// Data-driven defaults: nu_r is the mean log library size, nu_alpha the mean
/// of log(y + 0.01) - nu_r, a_phi = 1 / (0.2 J), a_tau = 0.1, b_tau = 1 / J,
/// K by PCA, remaining constants as in HyperConfig.
HyperConfig default_hypers(const CountTable& counts);

}  // namespace cvfm
