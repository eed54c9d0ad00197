#include "cvfm/priors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cvfm {

DirHsState sample_dirhs_prior(const DirHsHyper& hyper, Index J, Rng& rng) {
  require(hyper.a_phi > 0 && hyper.a_tau > 0 && hyper.b_tau > 0 && hyper.K >= 1,
          "Dir-HS hyperparameters must be positive");
  require(J >= 1, "sample_dirhs_prior: J must be positive");
  const Index K = hyper.K;
  DirHsState s;
  s.tau.resize(K);
  s.phi.resize(J, K);
  s.zeta.resize(J, K);
  s.zeta_aux.resize(J, K);
  s.q.resize(J, K);
  for (Index k = 0; k < K; ++k) {
    s.tau[k] = rgamma(rng, hyper.a_tau, hyper.b_tau / static_cast<double>(J));
    s.phi.col(k) = rdirichlet(rng, J, hyper.a_phi);
    for (Index j = 0; j < J; ++j) {
      const double aux = rinv_gamma(rng, 0.5, 1.0);
      const double zeta2 = rinv_gamma(rng, 0.5, 1.0 / aux);
      s.zeta_aux(j, k) = aux;
      s.zeta(j, k) = std::sqrt(zeta2);
      const double var = zeta2 * s.phi(j, k) * s.tau[k];
      s.q(j, k) = std::sqrt(var) * rng.normal();
    }
  }
  return s;
}

double dirhs_q_log_density(const DirHsState& s) {
  double total = 0.0;
  for (Index k = 0; k < s.q.cols(); ++k)
    for (Index j = 0; j < s.q.rows(); ++j) {
      const double var = s.zeta(j, k) * s.zeta(j, k) * s.phi(j, k) * s.tau[k];
      total += -0.5 * (std::log(var) + s.q(j, k) * s.q(j, k) / var);
    }
  return total;
}

Vector stick_break(std::span<const double> v) {
  require(!v.empty(), "stick_break: empty input");
  for (double x : v) require(x > 0.0 && x <= 1.0, "stick_break: V must lie in (0, 1]");
  require(v.back() == 1.0, "stick_break: the last stick must be 1");
  const Index L = static_cast<Index>(v.size());
  Vector psi(L);
  double remaining = 1.0;
  double partial = 0.0;
  for (Index l = 0; l + 1 < L; ++l) {
    psi[l] = v[static_cast<std::size_t>(l)] * remaining;
    remaining *= 1.0 - v[static_cast<std::size_t>(l)];
    partial += psi[l];
  }
  psi[L - 1] = std::max(0.0, 1.0 - partial);
  return psi;
}

std::pair<double, double> constrained_atom_pair(double xi, double omega, double nu) {
  require(omega > 0.0 && omega < 1.0, "constrained_atom_pair: omega must lie in (0, 1)");
  return {xi, (nu - omega * xi) / (1.0 - omega)};
}

double ConstrainedDpStack::atom(Index row, Index l, int inner) const {
  const double x = xi(mode == AtomMode::kPerFeature ? row : 0, l);
  if (inner == 0) return x;
  return (hyper.nu - omega[l] * x) / (1.0 - omega[l]);
}

double sample_omega_prior(Rng& rng, double a, double b) {
  for (;;) {
    const double w = rbeta(rng, a, b);
    if (w >= kOmegaMin && w <= 1.0 - kOmegaMin) return w;
  }
}

ConstrainedDpStack sample_stack_prior(AtomMode mode, const DpStackHyper& hyper, Index J, Rng& rng) {
  require(hyper.L >= 2, "stack truncation level must be at least 2");
  require(hyper.concentration > 0 && hyper.a_omega > 0 && hyper.b_omega > 0 && hyper.xi_var > 0,
          "stack hyperparameters must be positive");
  require(mode != AtomMode::kKernel || hyper.kernel_sd >= 0.0, "kernel sd must be non-negative");
  ConstrainedDpStack s;
  s.mode = mode;
  s.hyper = hyper;
  const Index L = hyper.L;
  s.v.resize(L);
  for (Index l = 0; l + 1 < L; ++l) s.v[l] = rbeta(rng, 1.0, hyper.concentration);
  s.v[L - 1] = 1.0;
  s.psi = stick_break(std::span<const double>(s.v.data(), static_cast<std::size_t>(L)));
  s.omega.resize(L);
  for (Index l = 0; l < L; ++l) s.omega[l] = sample_omega_prior(rng, hyper.a_omega, hyper.b_omega);
  const Index rows = mode == AtomMode::kPerFeature ? J : 1;
  s.xi.resize(rows, L);
  const double sd = std::sqrt(hyper.xi_var);
  for (Index l = 0; l < L; ++l)
    for (Index r = 0; r < rows; ++r) s.xi(r, l) = hyper.nu + sd * rng.normal();
  return s;
}

namespace {

std::pair<int, int> draw_indicator(const ConstrainedDpStack& stack, Rng& rng) {
  double u = rng.uniform();
  Index l = 0;
  for (; l + 1 < stack.L(); ++l) {
    if (u < stack.psi[l]) break;
    u -= stack.psi[l];
  }
  const int inner = rng.uniform() < stack.omega[l] ? 0 : 1;
  return {static_cast<int>(l), inner};
}

}  // namespace

MixtureDraw sample_alpha_prior(const ConstrainedDpStack& stack, Index rows, Index J, Rng& rng) {
  require(stack.mode != AtomMode::kKernel, "sample_alpha_prior: needs a point-mass stack");
  require(stack.mode != AtomMode::kPerFeature || stack.xi.rows() == J,
          "sample_alpha_prior: per-feature stack has the wrong number of features");
  require(rows >= 1 && J >= 1, "sample_alpha_prior: empty shape");
  MixtureDraw d;
  d.value.resize(rows, J);
  d.component.resize(rows, J);
  d.inner.resize(rows, J);
  for (Index s = 0; s < rows; ++s)
    for (Index j = 0; j < J; ++j) {
      const auto [l, b] = draw_indicator(stack, rng);
      d.component(s, j) = l;
      d.inner(s, j) = b;
      d.value(s, j) = stack.atom(j, l, b);
    }
  return d;
}

MixtureDraw sample_r_prior(const ConstrainedDpStack& stack, Index N, Rng& rng) {
  require(stack.mode == AtomMode::kKernel, "sample_r_prior: needs a kernel stack");
  MixtureDraw d;
  d.value.resize(N, 1);
  d.component.resize(N, 1);
  d.inner.resize(N, 1);
  for (Index i = 0; i < N; ++i) {
    const auto [l, b] = draw_indicator(stack, rng);
    d.component(i, 0) = l;
    d.inner(i, 0) = b;
    d.value(i, 0) = stack.atom(0, l, b) + stack.hyper.kernel_sd * rng.normal();
  }
  return d;
}

}  // namespace cvfm
