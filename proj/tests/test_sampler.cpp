#include "cvfm/distributions.hpp"
#include "cvfm/model.hpp"
#include "cvfm/posterior.hpp"
#include "cvfm/sampler.hpp"
#include "cvfm/simgen.hpp"

#include "doctest.h"
#include "support.hpp"

#include <cmath>
#include <limits>
#include <vector>

using namespace cvfm;
using cvfm::test::mean_of;
using cvfm::test::var_of;

namespace {

ModelData toy_data(Index N, Index J, Index P, Index Pm, std::uint64_t seed, bool subjects = false) {
  Rng rng(seed);
  ModelData d;
  d.y.resize(N, J);
  for (Index i = 0; i < N; ++i)
    for (Index j = 0; j < J; ++j) d.y(i, j) = static_cast<std::int64_t>(std::floor(std::exp(1.5 + rng.normal())));
  d.x_cov = Matrix::Ones(N, P);
  for (Index i = 0; i < N; ++i)
    for (Index p = 1; p < P; ++p) d.x_cov(i, p) = rng.normal();
  d.x_mean.resize(N, Pm);
  for (Index i = 0; i < N; ++i)
    for (Index p = 0; p < Pm; ++p) d.x_mean(i, p) = rng.normal();
  if (subjects) {
    for (Index i = 0; i < N; ++i) d.subject.push_back(static_cast<int>(i % 2));
    d.n_subjects = 2;
  }
  return d;
}

HyperConfig toy_hyper(int K, Index J) {
  HyperConfig h;
  h.K = K;
  h.a_phi = 1.0 / (0.2 * static_cast<double>(J));
  h.b_tau = 1.0 / static_cast<double>(J);
  h.nu_r = 2.0;
  h.nu_alpha = -1.0;
  h.L_alpha = 3;
  h.L_r = 3;
  return h;
}

SamplerConfig quick_config(std::uint64_t seed = 1) {
  SamplerConfig c;
  c.n_iter = 10;
  c.n_burn = 5;
  c.thin = 1;
  c.seed = seed;
  return c;
}

// Batch-means standard error of the mean of an autocorrelated series.
double batch_se(const std::vector<double>& x, std::size_t batches = 50) {
  const std::size_t b = x.size() / batches;
  std::vector<double> means;
  for (std::size_t k = 0; k < batches; ++k) {
    double s = 0;
    for (std::size_t i = k * b; i < (k + 1) * b; ++i) s += x[i];
    means.push_back(s / static_cast<double>(b));
  }
  return std::sqrt(var_of(means) / static_cast<double>(batches));
}

// Log density of the latents given everything else.
double latent_loglik(const ChainState& s, const ModelData& d) {
  const Matrix r = s.latent_y - mean_matrix(s, d) - factor_term(s, d);
  double t = 0;
  for (Index i = 0; i < r.rows(); ++i)
    for (Index j = 0; j < r.cols(); ++j) t += normal_logpdf(r(i, j), 0.0, s.factor.sigma2);
  return t;
}

}  // namespace

TEST_SUITE("sampler") {

TEST_CASE("config validation") {
  SamplerConfig c;
  c.validate();
  c.n_burn = c.n_iter;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = SamplerConfig{};
  c.thin = 0;
  CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("initial state and forward simulation respect the count cells") {
  ModelData d = toy_data(6, 4, 2, 1, 1);
  const HyperConfig h = toy_hyper(2, 4);
  ChainState s = initial_state(d, h, quick_config());
  CHECK(latent_within_bounds(s.latent_y, d.y));
  CHECK(s.mean.alpha.rows() == 1);

  ChainState p = sample_prior_state(d, h, quick_config(3));
  forward_simulate(d, p);
  CHECK(latent_within_bounds(p.latent_y, d.y));
  for (Index i = 0; i < d.N(); ++i)
    for (Index j = 0; j < d.J(); ++j)
      CHECK(d.y(i, j) == static_cast<std::int64_t>(std::floor(std::exp(p.latent_y(i, j)))));

  ModelData sd = toy_data(6, 4, 2, 1, 1, true);
  const ChainState ss = initial_state(sd, h, quick_config());
  CHECK(ss.mean.alpha.rows() == 2);
  CHECK(ss.mean.alpha_stack.xi.rows() == 4);
}

TEST_CASE("latent update") {
  ModelData d = toy_data(5, 3, 2, 1, 2);
  d.y(0, 0) = 0;
  d.y(1, 1) = 7;
  const HyperConfig h = toy_hyper(2, 3);
  ChainState s = initial_state(d, h, quick_config());
  for (int rep = 0; rep < 50; ++rep) {
    update_latent_y(s, d, h);
    REQUIRE(latent_within_bounds(s.latent_y, d.y));
    REQUIRE(s.latent_y(0, 0) < 0.0);
  }

  // Degenerate variance: the draw sits at the mean projected into the cell.
  s.factor.sigma2 = 1e-12;
  update_latent_y(s, d, h);
  const Matrix m = mean_matrix(s, d) + factor_term(s, d);
  const LatentBounds b = latent_bounds(d.y(1, 1));
  CHECK(s.latent_y(1, 1) == doctest::Approx(std::clamp(m(1, 1), b.lo, b.hi)).epsilon(1e-4));

  // Closed-form truncated-normal mean for one cell.
  s.factor.sigma2 = 0.8;
  const Matrix mm = mean_matrix(s, d) + factor_term(s, d);
  const double sd = std::sqrt(0.8);
  const double a = (b.lo - mm(1, 1)) / sd, bb = (b.hi - mm(1, 1)) / sd;
  const double z = norm_cdf(bb) - norm_cdf(a);
  const double pa = std::exp(-0.5 * a * a) / std::sqrt(2 * kPi), pb = std::exp(-0.5 * bb * bb) / std::sqrt(2 * kPi);
  const double tmean = mm(1, 1) + sd * (pa - pb) / z;
  const double tvar = 0.8 * (1 + (a * pa - bb * pb) / z - ((pa - pb) / z) * ((pa - pb) / z));
  const int n = 100000;
  std::vector<double> draws(n);
  for (auto& x : draws) {
    update_latent_y(s, d, h);
    x = s.latent_y(1, 1);
  }
  CHECK(std::abs(mean_of(draws) - tmean) < 3.0 * std::sqrt(tvar / n));
}

TEST_CASE("eta update") {
  // Zero loadings: eta recovers its N(0, I) prior.
  ModelData d = toy_data(1, 3, 1, 0, 3);
  HyperConfig h = toy_hyper(2, 3);
  ChainState s = initial_state(d, h, quick_config());
  s.factor.dirhs.q.setZero();
  const int n = 100000;
  std::vector<double> e(n);
  for (auto& x : e) {
    update_eta(s, d, h);
    x = s.factor.eta(0, 1);
  }
  CHECK(std::abs(mean_of(e)) < 3.0 / std::sqrt(n));
  CHECK(std::abs(var_of(e) - 1.0) < 3.0 * std::sqrt(2.0 / n));

  // Scalar conjugacy: lambda (y - mu) / (sigma2 + lambda^2).
  ModelData d1 = toy_data(1, 1, 1, 0, 4);
  HyperConfig h1 = toy_hyper(1, 1);
  ChainState s1 = initial_state(d1, h1, quick_config());
  s1.factor.dirhs.q(0, 0) = 1.5;
  s1.factor.f(0, 0) = 0.8;
  s1.factor.sigma2 = 0.3;
  const double lambda = 1.2;
  const double resid = s1.latent_y(0, 0) - mean_matrix(s1, d1)(0, 0);
  const double pm = lambda * resid / (0.3 + lambda * lambda);
  const double pv = 0.3 / (0.3 + lambda * lambda);
  for (auto& x : e) {
    update_eta(s1, d1, h1);
    x = s1.factor.eta(0, 0);
  }
  CHECK(std::abs(mean_of(e) - pm) < 3.0 * std::sqrt(pv / n));
  CHECK(std::abs(var_of(e) - pv) < 3.0 * pv * std::sqrt(2.0 / n));
}

TEST_CASE("loading update") {
  // Scalar case: prior N(0, v), data g_i with residual e_i.
  ModelData d = toy_data(4, 1, 1, 0, 5);
  HyperConfig h = toy_hyper(1, 1);
  ChainState s = initial_state(d, h, quick_config());
  s.factor.f(0, 0) = 1.0;
  s.factor.sigma2 = 0.5;
  s.factor.eta.col(0) << 0.5, -1.0, 2.0, 0.3;
  s.factor.dirhs.zeta(0, 0) = 1.0;
  s.factor.dirhs.phi(0, 0) = 1.0;
  s.factor.dirhs.tau[0] = 2.0;
  const Vector e = (s.latent_y - mean_matrix(s, d)).col(0);
  const Vector g = s.factor.eta.col(0);
  const double prec = 1.0 / 2.0 + g.squaredNorm() / 0.5;
  const double pm = g.dot(e) / 0.5 / prec;
  const int n = 100000;
  std::vector<double> q(n);
  for (auto& x : q) {
    update_q(s, d, h);
    x = s.factor.dirhs.q(0, 0);
  }
  CHECK(std::abs(mean_of(q) - pm) < 3.0 * std::sqrt(1.0 / prec / n));
  CHECK(std::abs(var_of(q) - 1.0 / prec) < 3.0 / prec * std::sqrt(2.0 / n));

  // Vanishing prior variance forces the loading to zero.
  s.factor.dirhs.tau[0] = 1e-20;
  update_q(s, d, h);
  CHECK(std::abs(s.factor.dirhs.q(0, 0)) < 1e-8);

  // Many samples: the posterior mean approaches least squares of the
  // residual on G.
  const Index N = 5000;
  ModelData big = toy_data(N, 2, 2, 0, 6);
  HyperConfig hb = toy_hyper(2, 2);
  ChainState sb = initial_state(big, hb, quick_config());
  Rng rng(7);
  for (Index i = 0; i < N; ++i)
    for (Index k = 0; k < 2; ++k) sb.factor.eta(i, k) = rng.normal();
  sb.factor.f << 1.0, 0.5, -0.5, 1.0;
  Matrix qtrue(2, 2);
  qtrue << 0.8, -0.4, 0.3, 1.1;
  sb.factor.dirhs.q = qtrue;
  sb.factor.sigma2 = 0.25;
  sb.latent_y = mean_matrix(sb, big) + factor_term(sb, big);
  for (Index i = 0; i < N; ++i)
    for (Index j = 0; j < 2; ++j) sb.latent_y(i, j) += 0.5 * rng.normal();
  const Matrix G = factor_scales(sb, big).cwiseProduct(sb.factor.eta);
  const Matrix E = sb.latent_y - mean_matrix(sb, big);
  const Matrix ols = (G.transpose() * G).ldlt().solve(G.transpose() * E).transpose();
  Matrix avg = Matrix::Zero(2, 2);
  for (int rep = 0; rep < 200; ++rep) {
    update_q(sb, big, hb);
    avg += sb.factor.dirhs.q / 200.0;
  }
  CHECK((avg - ols).cwiseAbs().maxCoeff() < 0.05);
  CHECK((ols - qtrue).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("local scale update recovers the half-Cauchy") {
  // With no data: q | scales from the prior, then the expansion update.
  ModelData d = toy_data(1, 1, 1, 0, 8);
  HyperConfig h = toy_hyper(1, 1);
  ChainState s = initial_state(d, h, quick_config());
  s.factor.dirhs.phi(0, 0) = 1.0;
  s.factor.dirhs.tau[0] = 1.0;
  const int n = 100000;
  std::vector<double> zeta(n);
  for (auto& x : zeta) {
    const double z = s.factor.dirhs.zeta(0, 0);
    s.factor.dirhs.q(0, 0) = z * s.rng.normal();
    update_zeta(s, d, h);
    REQUIRE(s.factor.dirhs.zeta(0, 0) > 0.0);
    x = s.factor.dirhs.zeta(0, 0);
  }
  std::sort(zeta.begin(), zeta.end());
  double ks = 0;
  for (int i = 0; i < n; ++i) {
    const double cdf = 2.0 / kPi * std::atan(zeta[static_cast<std::size_t>(i)]);
    ks = std::max({ks, std::abs(cdf - double(i) / n), std::abs(cdf - double(i + 1) / n)});
  }
  CHECK(ks < 0.02);

  // q = 0: zeta^2 | aux ~ IG(1, 1 / aux), so P(zeta^2 < 1 / aux) = e^{-1}.
  s.factor.dirhs.q(0, 0) = 0.0;
  int below = 0;
  for (int i = 0; i < n; ++i) {
    s.factor.dirhs.zeta_aux(0, 0) = 2.0;
    update_zeta(s, d, h);
    below += s.factor.dirhs.zeta(0, 0) * s.factor.dirhs.zeta(0, 0) < 0.5;
  }
  CHECK(std::abs(below / double(n) - std::exp(-1.0)) < 4.0 * std::sqrt(0.25 / n));
}

TEST_CASE("global scale update recovers the gamma prior") {
  // Alternating q | tau from the prior with the GIG update leaves
  // Ga(a_tau, b_tau / J) invariant.
  const Index J = 3;
  ModelData d = toy_data(1, J, 1, 0, 9);
  HyperConfig h = toy_hyper(1, J);
  h.a_tau = 2.0;
  h.b_tau = 1.0;
  ChainState s = initial_state(d, h, quick_config());
  const int n = 100000;
  std::vector<double> tau(n);
  for (auto& x : tau) {
    for (Index j = 0; j < J; ++j)
      s.factor.dirhs.q(j, 0) = std::sqrt(s.factor.dirhs.zeta(j, 0) * s.factor.dirhs.zeta(j, 0) *
                                         s.factor.dirhs.phi(j, 0) * s.factor.dirhs.tau[0]) *
                               s.rng.normal();
    update_tau(s, d, h);
    REQUIRE(s.factor.dirhs.tau[0] > 0.0);
    x = s.factor.dirhs.tau[0];
  }
  const double expected = h.a_tau * static_cast<double>(J) / h.b_tau;
  CHECK(std::abs(mean_of(tau) - expected) < 3.0 * batch_se(tau));

  // GIG full conditional equals the joint density ratio in tau.
  const double chi = 1.7, a = 0.1, b = 1.0 / 3.0;
  auto joint = [&](double t) {
    // Ga(a, b / J) prior times prod_j N(q_j; 0, c_j t) with sum q^2 / c = chi.
    return (a - 1) * std::log(t) - b / 3.0 * t - 1.5 * std::log(t) - chi / (2 * t);
  };
  auto gig = [&](double t) { return (a - 1.5 - 1) * std::log(t) - 0.5 * (chi / t + 2 * b / 3.0 * t); };
  CHECK(joint(2.3) - joint(0.4) == doctest::Approx(gig(2.3) - gig(0.4)).epsilon(1e-12));
}

TEST_CASE("phi target and prior recovery") {
  const Index J = 4;
  const double a = 0.7;
  Vector q(J), zeta(J);
  q << 0.3, -1.2, 0.0, 0.5;
  zeta << 1.0, 0.5, 2.0, 1.5;
  const double tau = 0.8;
  // Independent oracle: Dir(a) density x Jacobian prod phi x normal likelihood.
  auto oracle = [&](const Vector& z) {
    Vector phi(J);
    phi.head(J - 1) = z.array().exp();
    phi[J - 1] = 1.0;
    phi /= phi.sum();
    double t = 0;
    for (Index j = 0; j < J; ++j) {
      t += (a - 1) * std::log(phi[j]) + std::log(phi[j]);
      t += normal_logpdf(q[j], 0.0, zeta[j] * zeta[j] * phi[j] * tau);
    }
    return t;
  };
  const Vector z1 = (Vector(3) << 0.2, -0.5, 1.0).finished();
  const Vector z2 = (Vector(3) << -1.0, 0.3, 0.1).finished();
  CHECK(phi_log_target(z1, q, zeta, tau, a, true) - phi_log_target(z2, q, zeta, tau, a, true) ==
        doctest::Approx(oracle(z1) - oracle(z2)).epsilon(1e-12));

  // Likelihood off: the adaptive chain recovers Dir(a) moments.
  Rng rng(10);
  AdaptiveProposal prop(J - 1, 0.5);
  AdaptConfig cfg;
  Vector z = Vector::Zero(J - 1);
  auto target = [&](const Vector& v) { return phi_log_target(v, q, zeta, tau, a, false); };
  double logp = target(z);
  const int n = 200000;
  std::vector<double> phi0(n);
  for (int i = 0; i < n + 5000; ++i) {
    adaptive_mh_step(prop, z, logp, target, rng, i < 5000, cfg);
    if (i < 5000) continue;
    Vector e(J);
    e.head(J - 1) = z.array().exp();
    e[J - 1] = 1.0;
    phi0[static_cast<std::size_t>(i - 5000)] = e[0] / e.sum();
  }
  CHECK(std::abs(mean_of(phi0) - 0.25) < 3.0 * batch_se(phi0));
  const double var = a * (3 * a) / ((4 * a) * (4 * a) * (4 * a + 1));
  CHECK(var_of(phi0) == doctest::Approx(var).epsilon(0.1));
  CHECK(prop.frozen_acceptance_rate() > 0.1);
  CHECK(prop.frozen_acceptance_rate() < 0.5);
}

TEST_CASE("collapsed likelihood and sign flips") {
  Rng rng(11);
  const Index N = 4, J = 5, K = 2;
  Matrix h(N, K), q(J, K), e(N, J);
  for (auto* m : {&h, &q, &e})
    for (Index i = 0; i < m->rows(); ++i)
      for (Index j = 0; j < m->cols(); ++j) (*m)(i, j) = rng.normal();
  const double s2 = 0.4;
  double oracle = 0;
  for (Index i = 0; i < N; ++i) {
    const Matrix lam = q * h.row(i).transpose().asDiagonal();
    Matrix cov = lam * lam.transpose();
    cov.diagonal().array() += s2;
    const Eigen::LLT<Matrix> llt(cov);
    const Vector w = llt.matrixL().solve(e.row(i).transpose());
    double logdet = 0;
    for (Index j = 0; j < J; ++j) logdet += 2 * std::log(llt.matrixL()(j, j));
    oracle += -0.5 * (J * std::log(2 * kPi) + logdet + w.squaredNorm());
  }
  CHECK(collapsed_loglik(h, q, e, s2) == doctest::Approx(oracle).epsilon(1e-12));

  // (q_k, f_k) -> (-q_k, -f_k) flips h_k as well.
  Matrix h2 = h, q2 = q;
  h2.col(1) *= -1;
  q2.col(1) *= -1;
  CHECK(collapsed_loglik(h2, q2, e, s2) == doctest::Approx(oracle).epsilon(1e-12));
  Matrix f(K, 2);
  f << 0.3, -1.0, 1.2, 0.4;
  FactorLoadingParams p{q, f, s2}, flipped{q2, f, s2};
  flipped.f.row(1) *= -1;
  const CovariateVector x((Vector(2) << 1.0, 0.7).finished());
  CHECK((sigma_at(p, x) - sigma_at(flipped, x)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("sigma2 update") {
  ModelData d = toy_data(6, 4, 2, 1, 12);
  HyperConfig h = toy_hyper(2, 4);
  ChainState s = initial_state(d, h, quick_config());
  const Matrix r = s.latent_y - mean_matrix(s, d) - factor_term(s, d);
  const double shape = h.a_sigma + 12.0, scale = h.b_sigma + 0.5 * r.squaredNorm();
  const int n = 100000;
  std::vector<double> v(n);
  for (auto& x : v) {
    update_sigma2(s, d, h);
    x = s.factor.sigma2;
  }
  const double mean = scale / (shape - 1), var = mean * mean / (shape - 2);
  CHECK(std::abs(mean_of(v) - mean) < 3.0 * std::sqrt(var / n));

  // The conjugate form agrees with the joint density in sigma2.
  auto joint = [&](double t) {
    ChainState c = s;
    c.factor.sigma2 = t;
    return latent_loglik(c, d) + (-h.a_sigma - 1) * std::log(t) - h.b_sigma / t;
  };
  auto conditional = [&](double t) { return (-shape - 1) * std::log(t) - scale / t; };
  CHECK(joint(0.7) - joint(1.9) == doctest::Approx(conditional(0.7) - conditional(1.9)).epsilon(1e-10));

  // Zero residuals and many cells: mean b / (a + NJ / 2 - 1).
  ModelData big = toy_data(500, 20, 1, 0, 13);
  ChainState sb = initial_state(big, h, quick_config());
  sb.latent_y = mean_matrix(sb, big) + factor_term(sb, big);
  for (auto& x : v) {
    update_sigma2(sb, big, h);
    x = sb.factor.sigma2;
  }
  CHECK(mean_of(v) == doctest::Approx(h.b_sigma / (h.a_sigma + 5000.0 - 1.0)).epsilon(0.01));

  // No data: the prior, mean 1.5 for a = b = 3.
  ModelData empty;
  empty.y.resize(0, 0);
  empty.x_cov.resize(0, 1);
  empty.x_mean.resize(0, 0);
  ChainState se = s;
  se.latent_y.resize(0, 0);
  se.mean.r.resize(0);
  se.mean.alpha.resize(1, 0);
  se.factor.eta.resize(0, 2);
  se.factor.dirhs.q.resize(0, 2);
  for (auto& x : v) {
    update_sigma2(se, empty, h);
    x = se.factor.sigma2;
  }
  CHECK(std::abs(mean_of(v) - 1.5) < 3.0 * std::sqrt(1.5 * 1.5 / 1.0 / n) * 2);
}

TEST_CASE("beta update") {
  // Scalar conjugacy.
  ModelData d = toy_data(5, 1, 1, 1, 14);
  HyperConfig h = toy_hyper(1, 1);
  ChainState s = initial_state(d, h, quick_config());
  s.factor.sigma2 = 0.6;
  Vector w = (s.latent_y - factor_term(s, d)).col(0);
  for (Index i = 0; i < 5; ++i) w[i] -= s.mean.r[i] + s.mean.alpha(0, 0);
  const Vector x = d.x_mean.col(0);
  const double prec = 1.0 / h.u2_beta + x.squaredNorm() / 0.6;
  const double pm = x.dot(w) / 0.6 / prec;
  const int n = 100000;
  std::vector<double> b(n);
  for (auto& v : b) {
    update_beta(s, d, h);
    v = s.mean.beta(0, 0);
  }
  CHECK(std::abs(mean_of(b) - pm) < 3.0 * std::sqrt(1.0 / prec / n));
  CHECK(std::abs(var_of(b) - 1.0 / prec) < 3.0 / prec * std::sqrt(2.0 / n));

  // Density-ratio check of the conditional.
  auto joint = [&](double beta) {
    ChainState c = s;
    c.mean.beta(0, 0) = beta;
    return latent_loglik(c, d) + normal_logpdf(beta, 0.0, h.u2_beta);
  };
  auto cond = [&](double beta) { return normal_logpdf(beta, pm, 1.0 / prec); };
  CHECK(joint(0.4) - joint(-1.3) == doctest::Approx(cond(0.4) - cond(-1.3)).epsilon(1e-10));

  // Tiny prior variance shrinks to zero.
  HyperConfig tight = h;
  tight.u2_beta = 1e-16;
  update_beta(s, d, tight);
  CHECK(std::abs(s.mean.beta(0, 0)) < 1e-6);

  // Least-squares limit.
  const Index N = 5000;
  ModelData big = toy_data(N, 3, 1, 2, 15);
  ChainState sb = initial_state(big, toy_hyper(1, 3), quick_config());
  Matrix btrue(3, 2);
  btrue << 1.0, -0.5, 0.0, 2.0, -1.5, 0.3;
  sb.mean.beta = btrue;
  sb.factor.sigma2 = 0.25;
  Rng rng(16);
  sb.latent_y = mean_matrix(sb, big) + factor_term(sb, big);
  for (Index i = 0; i < N; ++i)
    for (Index j = 0; j < 3; ++j) sb.latent_y(i, j) += 0.5 * rng.normal();
  Matrix avg = Matrix::Zero(3, 2);
  for (int rep = 0; rep < 100; ++rep) {
    update_beta(sb, big, toy_hyper(1, 3));
    avg += sb.mean.beta / 100.0;
  }
  CHECK((avg - btrue).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("baseline stack") {
  // One feature whose data mean is exactly nu; with omega = 1/2 the two atoms
  // sit symmetrically, so the location posterior is centred at nu.
  ModelData d = toy_data(4, 1, 1, 0, 17);
  HyperConfig h = toy_hyper(1, 1);
  h.L_alpha = 2;
  const SamplerConfig c = quick_config();
  ChainState base = initial_state(d, h, c);
  base.factor.dirhs.q.setZero();
  base.mean.r.setZero();
  base.latent_y.col(0) << h.nu_alpha - 0.3, h.nu_alpha + 0.3, h.nu_alpha - 0.1, h.nu_alpha + 0.1;
  const int n = 20000;
  std::vector<double> occupied, empty;
  for (int rep = 0; rep < n; ++rep) {
    ChainState s = base;
    s.rng = Rng(1000 + static_cast<std::uint64_t>(rep));
    s.mean.alpha_stack.omega.setConstant(0.5);
    update_alpha_stack(s, d, h, c);
    const int l = s.mean.alpha_component(0, 0);
    occupied.push_back(s.mean.alpha_stack.xi(0, l));
    empty.push_back(s.mean.alpha_stack.xi(0, 1 - l));
    REQUIRE(s.mean.alpha_stack.psi.sum() == doctest::Approx(1.0));
    REQUIRE(s.mean.alpha(0, 0) == s.mean.alpha_stack.atom(0, l, s.mean.alpha_inner(0, 0)));
  }
  CHECK(std::abs(mean_of(occupied) - h.nu_alpha) < 3.0 * std::sqrt(var_of(occupied) / n));
  // Empty components draw from N(nu, u2_alpha).
  CHECK(std::abs(mean_of(empty) - h.nu_alpha) < 3.0 * std::sqrt(h.u2_alpha / n));
  CHECK(var_of(empty) == doctest::Approx(h.u2_alpha).epsilon(0.05));
}

TEST_CASE("size-factor stack") {
  ModelData d = toy_data(3, 4, 1, 0, 18);
  HyperConfig h = toy_hyper(1, 4);
  h.L_r = 4;
  const SamplerConfig c = quick_config();
  ChainState base = initial_state(d, h, c);
  const int n = 20000;
  std::vector<double> empty, r0;
  // Conditional of r_0 given its kernel centre.
  for (int rep = 0; rep < n; ++rep) {
    ChainState s = base;
    s.rng = Rng(5000 + static_cast<std::uint64_t>(rep));
    update_r_stack(s, d, h, c);
    std::vector<bool> used(4, false);
    for (Index i = 0; i < 3; ++i) {
      REQUIRE(s.mean.r_component[i] >= 0);
      REQUIRE(s.mean.r_component[i] < 4);
      used[static_cast<std::size_t>(s.mean.r_component[i])] = true;
    }
    for (Index l = 0; l < 4; ++l)
      if (!used[static_cast<std::size_t>(l)]) empty.push_back(s.mean.r_stack.xi(0, l));
    // r_0 given its kernel centre: precision 1/u + J/sigma2.
    const double centre = s.mean.r_stack.atom(0, s.mean.r_component[0], s.mean.r_inner[0]);
    Matrix w = s.latent_y - factor_term(s, d);
    w.row(0) -= s.mean.alpha.row(0);
    const double prec = 1.0 / h.u_r2 + 4.0 / s.factor.sigma2;
    const double pm = (centre / h.u_r2 + w.row(0).sum() / s.factor.sigma2) / prec;
    r0.push_back((s.mean.r[0] - pm) * std::sqrt(prec));
  }
  CHECK(std::abs(mean_of(empty) - h.nu_r) < 3.0 * std::sqrt(h.u2_xi_r / static_cast<double>(empty.size())));
  // Standardized r_0 draws are N(0, 1).
  CHECK(std::abs(mean_of(r0)) < 3.0 / std::sqrt(n));
  CHECK(var_of(r0) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("sweeps keep invariants and are reproducible") {
  ModelData d = toy_data(8, 5, 2, 1, 19, true);
  HyperConfig h = toy_hyper(2, 5);
  SamplerConfig c = quick_config(4);
  ChainState s = initial_state(d, h, c);
  for (long it = 1; it <= 300; ++it) {
    s.iteration = it;
    sweep(s, d, h, c, it <= 150);
    REQUIRE(latent_within_bounds(s.latent_y, d.y));
    REQUIRE((s.factor.dirhs.tau.array() > 0).all());
    REQUIRE((s.factor.dirhs.zeta.array() > 0).all());
    for (Index k = 0; k < 2; ++k) REQUIRE(s.factor.dirhs.phi.col(k).sum() == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE((s.mean.alpha_stack.omega.array() > 0).all());
    REQUIRE((s.mean.alpha_stack.omega.array() < 1).all());
    REQUIRE(s.mean.alpha_stack.psi.sum() == doctest::Approx(1.0));
  }
  // Subjects sharing a row share the baseline.
  CHECK(mean_matrix(s, d)(0, 0) - s.mean.r[0] == doctest::Approx(mean_matrix(s, d)(2, 0) - s.mean.r[2] -
                                                                  (d.x_mean(2, 0) - d.x_mean(0, 0)) * s.mean.beta(0, 0)));

  c.n_iter = 60;
  c.n_burn = 20;
  c.thin = 4;
  const ChainResult a = run_chain(d, h, c);
  const ChainResult b = run_chain(d, h, c);
  CHECK(a.draws.n_draws() == 10);
  CHECK(a.draws.values == b.draws.values);
  CHECK(a.draws.iterations.front() == 24);
  c.seed = 5;
  CHECK(run_chain(d, h, c).draws.values != a.draws.values);
  CHECK(a.draws.columns.at("Q")[1] == "Q_1_2");
}

TEST_CASE("non-finite state aborts with the block name") {
  ModelData d = toy_data(5, 3, 2, 1, 20);
  HyperConfig h = toy_hyper(2, 3);
  SamplerConfig c = quick_config();
  ChainState s = initial_state(d, h, c);
  s.iteration = 7;
  d.x_mean(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    sweep(s, d, h, c, false);
    FAIL("expected a numerical abort");
  } catch (const NumericalError& e) {
    CHECK(e.iteration() == 7);
    CHECK(e.block() == "latent_y");
  }
}

TEST_CASE("adaptive proposals reach reasonable acceptance on Sim-1-sized data") {
  const SimData sim = gen_sim1(1);
  const ModelData d = ModelData::build(sim.counts, sim.design, false);
  HyperConfig h = default_hypers(sim.counts);
  h.K = 8;
  SamplerConfig c;
  c.n_iter = 3000;
  c.n_burn = 1500;
  c.thin = 10;
  const ChainResult r = run_chain(d, h, c);
  CHECK(r.summary.phi_acceptance >= 0.1);
  CHECK(r.summary.phi_acceptance <= 0.5);
  CHECK(r.summary.f_acceptance >= 0.1);
  CHECK(r.summary.f_acceptance <= 0.5);
}

}  // TEST_SUITE
