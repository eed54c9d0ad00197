#include "cvfm/calibrate.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace cvfm {

void HyperConfig::validate() const {
  require(K >= 1, "K must be at least 1");
  require(L_alpha >= 2 && L_r >= 2, "truncation levels must be at least 2");
  for (double v : {a_phi, a_tau, b_tau, a_sigma, b_sigma, u2_beta, u2_alpha, u_r2, u2_xi_r, c_alpha, c_r,
                   a_omega_alpha, b_omega_alpha, a_omega_r, b_omega_r})
    require(v > 0.0 && std::isfinite(v), "hyperparameters must be positive and finite");
  require(std::isfinite(nu_alpha) && std::isfinite(nu_r), "constraint targets must be finite");
}

DpStackHyper HyperConfig::alpha_stack() const {
  DpStackHyper h;
  h.L = L_alpha;
  h.concentration = c_alpha;
  h.a_omega = a_omega_alpha;
  h.b_omega = b_omega_alpha;
  h.nu = nu_alpha;
  h.xi_var = u2_alpha;
  h.kernel_sd = 0.0;
  return h;
}

DpStackHyper HyperConfig::r_stack() const {
  DpStackHyper h;
  h.L = L_r;
  h.concentration = c_r;
  h.a_omega = a_omega_r;
  h.b_omega = b_omega_r;
  h.nu = nu_r;
  h.xi_var = u2_xi_r;
  h.kernel_sd = std::sqrt(u_r2);
  return h;
}

int choose_k_by_pca(const CountTable& counts, double variance_target) {
  const Index N = counts.n_samples();
  const Index J = counts.n_features();
  require(N >= 2, "choose_k_by_pca: needs at least two samples");
  require(variance_target > 0.0 && variance_target <= 1.0, "choose_k_by_pca: target must lie in (0, 1]");

  Matrix clr = (counts.counts.cast<double>().array() + kClrPseudocount).log().matrix();
  clr.colwise() -= clr.rowwise().mean();
  Matrix centered = clr.rowwise() - clr.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(N - 1);

  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov, Eigen::EigenvaluesOnly);
  Vector values = eig.eigenvalues().reverse().cwiseMax(0.0);
  const double total = values.sum();
  const Index cap = std::min<Index>(N - 1, J);
  if (!(total > 1e-12 * std::max(1.0, cov.diagonal().cwiseAbs().maxCoeff()))) return 1;

  double cumulative = 0.0;
  for (Index k = 0; k < values.size(); ++k) {
    cumulative += values[k];
    if (cumulative / total >= variance_target - 1e-10) return static_cast<int>(std::clamp<Index>(k + 1, 1, cap));
  }
  return static_cast<int>(std::max<Index>(cap, 1));
}

HyperConfig default_hypers(const CountTable& counts) {
  const Index N = counts.n_samples();
  const Index J = counts.n_features();
  require(N >= 1 && J >= 1, "default_hypers: count table is empty");
  HyperConfig h;
  double nu_r = 0.0;
  for (Index i = 0; i < N; ++i) {
    const std::int64_t total = counts.counts.row(i).sum();
    require(total > 0, "default_hypers: sample " + std::to_string(i + 1) + " has zero total count");
    nu_r += std::log(static_cast<double>(total));
  }
  nu_r /= static_cast<double>(N);
  const double mean_log = (counts.counts.cast<double>().array() + 0.01).log().mean();

  const double Jd = static_cast<double>(J);
  h.nu_r = nu_r;
  h.nu_alpha = mean_log - nu_r;
  h.a_phi = 1.0 / (0.2 * Jd);
  h.a_tau = 0.1;
  h.b_tau = 1.0 / Jd;
  h.K = N >= 2 ? choose_k_by_pca(counts) : 1;
  return h;
}

}  // namespace cvfm
