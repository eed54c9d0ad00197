#include "cvfm/sampler.hpp"

#include "cvfm/distributions.hpp"
#include "cvfm/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace cvfm {

namespace {

constexpr double kVarianceFloor = 1e-300;

double loading_variance(const DirHsState& s, Index j, Index k) {
  const double z = s.zeta(j, k);
  return std::max(z * z * s.phi(j, k) * s.tau[k], kVarianceFloor);
}

bool all_finite(const Matrix& m) { return m.allFinite(); }
bool all_finite(const Vector& v) { return v.allFinite(); }

// Residual of the latents after removing everything except the named part.
Matrix latent_minus_factor(const ChainState& s, const ModelData& d) {
  return s.latent_y - mean_matrix(s, d);
}

// Sorts units by value and assigns them to L groups of near-equal size.
// Returns the component of each unit and the mean of each group (NaN if empty).
std::pair<std::vector<int>, Vector> quantile_groups(const Vector& values, Index L) {
  const Index n = values.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values[a] < values[b]; });
  std::vector<int> comp(static_cast<std::size_t>(n));
  Vector sum = Vector::Zero(L);
  Vector cnt = Vector::Zero(L);
  const Index groups = std::min(L, n);
  for (Index rank = 0; rank < n; ++rank) {
    const Index g = rank * groups / n;
    const Index unit = order[static_cast<std::size_t>(rank)];
    comp[static_cast<std::size_t>(unit)] = static_cast<int>(g);
    sum[g] += values[unit];
    cnt[g] += 1.0;
  }
  Vector mean(L);
  for (Index l = 0; l < L; ++l) mean[l] = cnt[l] > 0 ? sum[l] / cnt[l] : std::numeric_limits<double>::quiet_NaN();
  return {comp, mean};
}

void init_proposals(ChainState& s, const ModelData& d, const HyperConfig& h, const SamplerConfig& c) {
  const Index J = d.J();
  s.phi_proposal.clear();
  s.f_proposal.clear();
  for (int k = 0; k < h.K; ++k) {
    if (J >= 2) s.phi_proposal.emplace_back(J - 1, c.adapt.initial_scale);
    s.f_proposal.emplace_back(d.P(), c.adapt.initial_scale);
  }
}

AtomMode alpha_mode(const ModelData& d) { return d.subject_mode() ? AtomMode::kPerFeature : AtomMode::kShared; }

double logit(double w) { return std::log(w) - std::log1p(-w); }
double inv_logit(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

// Stick-breaking weights given per-component occupancy.
void update_sticks(ConstrainedDpStack& stack, const Vector& occupancy, Rng& rng) {
  const Index L = stack.L();
  double above = occupancy.sum();
  for (Index l = 0; l + 1 < L; ++l) {
    above -= occupancy[l];
    const double v = rbeta(rng, 1.0 + occupancy[l], stack.hyper.concentration + std::max(above, 0.0));
    stack.v[l] = std::clamp(v, std::numeric_limits<double>::min(), 1.0);
  }
  stack.v[L - 1] = 1.0;
  stack.psi = stick_break(std::span<const double>(stack.v.data(), static_cast<std::size_t>(L)));
}

// Random-walk update of omega_l on the logit scale, restricted to
// [kOmegaMin, 1 - kOmegaMin]. `loglik(omega)` covers the units allocated to
// the constrained atom of component l.
template <class LogLik>
void update_omega(ConstrainedDpStack& stack, Index l, double n_first, double n_second, LogLik&& loglik, double step,
                  Rng& rng) {
  // Prior Be(a, b) times Bernoulli allocations, plus the logit Jacobian w (1 - w).
  auto target = [&](double w) {
    return (stack.hyper.a_omega + n_first) * std::log(w) + (stack.hyper.b_omega + n_second) * std::log1p(-w) +
           loglik(w);
  };
  const double w0 = stack.omega[l];
  const double w1 = inv_logit(logit(w0) + step * rng.normal());
  if (!(w1 >= kOmegaMin && w1 <= 1.0 - kOmegaMin)) return;
  const double log_ratio = target(w1) - target(w0);
  if (std::log(rng.uniform()) < log_ratio) stack.omega[l] = w1;
}

// Conjugate update of the location xi given Gaussian pseudo-observations:
// first-atom units contribute (prec_a, lin_a) directly; second-atom units
// contribute through the affine map atom2 = offset - kappa xi.
double draw_xi(double nu, double xi_var, double prec_data, double lin_data, Rng& rng) {
  const double prec = 1.0 / xi_var + prec_data;
  const double lin = nu / xi_var + lin_data;
  return lin / prec + rng.normal() / std::sqrt(prec);
}

}  // namespace

void SamplerConfig::validate() const {
  require(n_iter >= 1, "iterations must be positive");
  require(n_burn >= 0 && n_burn < n_iter, "burn-in must be non-negative and smaller than the iteration count");
  require(thin >= 1, "thinning interval must be positive");
  require(omega_step > 0.0, "omega step must be positive");
  require(adapt.initial_scale > 0.0 && adapt.target > 0.0 && adapt.target < 1.0 && adapt.epsilon > 0.0,
          "invalid adaptation settings");
}

// Derived quantities ---------------------------------------------------------

Matrix factor_scales(const ChainState& s, const ModelData& d) { return d.x_cov * s.factor.f.transpose(); }

Matrix mean_matrix(const ChainState& s, const ModelData& d) {
  const Index N = d.N();
  const Index J = d.J();
  Matrix mu(N, J);
  for (Index i = 0; i < N; ++i) mu.row(i) = s.mean.alpha.row(d.alpha_row(i)).array() + s.mean.r[i];
  if (d.P_mean() > 0) mu.noalias() += d.x_mean * s.mean.beta.transpose();
  return mu;
}

Matrix factor_term(const ChainState& s, const ModelData& d) {
  const Matrix g = factor_scales(s, d).cwiseProduct(s.factor.eta);
  return g * s.factor.dirhs.q.transpose();
}

void refresh_alpha(MeanState& m) {
  const Index rows = m.alpha_component.rows();
  const Index J = m.alpha_component.cols();
  m.alpha.resize(rows, J);
  for (Index s = 0; s < rows; ++s)
    for (Index j = 0; j < J; ++j) m.alpha(s, j) = m.alpha_stack.atom(j, m.alpha_component(s, j), m.alpha_inner(s, j));
}

bool latent_within_bounds(const Matrix& latent, const CountMatrix& y) {
  if (latent.rows() != y.rows() || latent.cols() != y.cols()) return false;
  for (Index i = 0; i < y.rows(); ++i)
    for (Index j = 0; j < y.cols(); ++j) {
      const LatentBounds b = latent_bounds(y(i, j));
      const double v = latent(i, j);
      if (!(v >= b.lo && (v < b.hi || v == b.lo))) return false;
    }
  return true;
}

// Initialization ---------------------------------------------------------------

ChainState initial_state(const ModelData& d, const HyperConfig& h, const SamplerConfig& c) {
  h.validate();
  c.validate();
  const Index N = d.N();
  const Index J = d.J();
  const Index K = h.K;
  const Index P = d.P();
  require(N >= 1 && J >= 1 && P >= 1, "initial_state: empty data");

  ChainState s;
  s.rng = Rng(c.seed);

  s.latent_y.resize(N, J);
  for (Index i = 0; i < N; ++i)
    for (Index j = 0; j < J; ++j) {
      const std::int64_t y = d.y(i, j);
      s.latent_y(i, j) = y == 0 ? std::log(0.5) : std::log(static_cast<double>(y) + 0.5);
    }

  DirHsState& dh = s.factor.dirhs;
  dh.tau = Vector::Ones(K);
  dh.phi = Matrix::Constant(J, K, 1.0 / static_cast<double>(J));
  dh.zeta = Matrix::Ones(J, K);
  dh.zeta_aux = Matrix::Ones(J, K);
  dh.q.resize(J, K);
  for (Index j = 0; j < J; ++j)
    for (Index k = 0; k < K; ++k) dh.q(j, k) = 0.1 * s.rng.normal();
  s.factor.f = Matrix::Zero(K, P);
  s.factor.f.col(0).setOnes();
  s.factor.sigma2 = 1.0;
  s.factor.eta.resize(N, K);
  for (Index i = 0; i < N; ++i)
    for (Index k = 0; k < K; ++k) s.factor.eta(i, k) = s.rng.normal();

  MeanState& m = s.mean;
  m.beta = Matrix::Zero(J, d.P_mean());

  // Size factors: log library size of the latent abundances, grouped by rank.
  const DpStackHyper rh = h.r_stack();
  m.r_stack = sample_stack_prior(AtomMode::kKernel, rh, J, s.rng);
  m.r.resize(N);
  for (Index i = 0; i < N; ++i) {
    const double lib = s.latent_y.row(i).array().exp().sum();
    m.r[i] = std::log(lib);
  }
  m.r.array() += h.nu_r - m.r.mean();
  {
    const auto [comp, mean] = quantile_groups(m.r, rh.L);
    m.r_component.resize(N);
    m.r_inner = IntVector::Zero(N);
    for (Index i = 0; i < N; ++i) m.r_component[i] = comp[static_cast<std::size_t>(i)];
    for (Index l = 0; l < rh.L; ++l) {
      m.r_stack.omega[l] = 0.5;
      if (std::isfinite(mean[l])) m.r_stack.xi(0, l) = mean[l];
    }
  }

  // Baselines: per-feature mean of the latents after removing size factors.
  const DpStackHyper ah = h.alpha_stack();
  m.alpha_stack = sample_stack_prior(alpha_mode(d), ah, J, s.rng);
  for (Index l = 0; l < ah.L; ++l) m.alpha_stack.omega[l] = 0.5;
  const Index rows = d.alpha_rows();
  m.alpha_component = IntMatrix::Zero(rows, J);
  m.alpha_inner = IntMatrix::Zero(rows, J);
  Vector feature_mean = Vector::Zero(J);
  for (Index i = 0; i < N; ++i) feature_mean += (s.latent_y.row(i).array() - m.r[i]).matrix().transpose();
  feature_mean /= static_cast<double>(N);
  if (d.subject_mode()) {
    for (Index j = 0; j < J; ++j) m.alpha_stack.xi(j, 0) = feature_mean[j];
  } else {
    const auto [comp, mean] = quantile_groups(feature_mean, ah.L);
    for (Index j = 0; j < J; ++j) m.alpha_component(0, j) = comp[static_cast<std::size_t>(j)];
    for (Index l = 0; l < ah.L; ++l)
      if (std::isfinite(mean[l])) m.alpha_stack.xi(0, l) = mean[l];
  }
  refresh_alpha(m);

  init_proposals(s, d, h, c);
  return s;
}

ChainState sample_prior_state(const ModelData& d, const HyperConfig& h, const SamplerConfig& c) {
  h.validate();
  c.validate();
  const Index N = d.N();
  const Index J = d.J();
  const Index K = h.K;
  const Index P = d.P();
  ChainState s;
  s.rng = Rng(c.seed);
  s.factor.dirhs = sample_dirhs_prior(h.dirhs(), J, s.rng);
  s.factor.f.resize(K, P);
  for (Index k = 0; k < K; ++k)
    for (Index p = 0; p < P; ++p) s.factor.f(k, p) = s.rng.normal();
  s.factor.sigma2 = rinv_gamma(s.rng, h.a_sigma, h.b_sigma);
  s.factor.eta = Matrix::Zero(N, K);

  MeanState& m = s.mean;
  m.beta.resize(J, d.P_mean());
  const double sd_beta = std::sqrt(h.u2_beta);
  for (Index j = 0; j < J; ++j)
    for (Index p = 0; p < d.P_mean(); ++p) m.beta(j, p) = sd_beta * s.rng.normal();

  m.alpha_stack = sample_stack_prior(alpha_mode(d), h.alpha_stack(), J, s.rng);
  const MixtureDraw a = sample_alpha_prior(m.alpha_stack, d.alpha_rows(), J, s.rng);
  m.alpha_component = a.component;
  m.alpha_inner = a.inner;
  refresh_alpha(m);

  m.r_stack = sample_stack_prior(AtomMode::kKernel, h.r_stack(), J, s.rng);
  const MixtureDraw r = sample_r_prior(m.r_stack, N, s.rng);
  m.r = r.value.col(0);
  m.r_component = r.component.col(0);
  m.r_inner = r.inner.col(0);

  s.latent_y = Matrix::Zero(N, J);
  init_proposals(s, d, h, c);
  return s;
}

void forward_simulate(ModelData& d, ChainState& s) {
  const Index N = d.N();
  const Index J = d.J();
  const Index K = s.factor.f.rows();
  for (Index i = 0; i < N; ++i)
    for (Index k = 0; k < K; ++k) s.factor.eta(i, k) = s.rng.normal();
  const Matrix m = mean_matrix(s, d) + factor_term(s, d);
  const double sd = std::sqrt(s.factor.sigma2);
  constexpr double kMaxLog = 43.0;  // exp(43) < 2^63
  s.latent_y.resize(N, J);
  for (Index i = 0; i < N; ++i)
    for (Index j = 0; j < J; ++j) {
      double v = m(i, j) + sd * s.rng.normal();
      v = std::min(v, kMaxLog);
      s.latent_y(i, j) = v;
      const double e = std::floor(std::exp(v));
      d.y(i, j) = static_cast<std::int64_t>(e);
      // Keep the latent consistent with the count it produced.
      const LatentBounds b = latent_bounds(d.y(i, j));
      if (!(v >= b.lo && v < b.hi)) s.latent_y(i, j) = std::clamp(v, b.lo, std::nextafter(b.hi, b.lo));
    }
}

// Blocks ---------------------------------------------------------------------

void update_latent_y(ChainState& s, const ModelData& d, const HyperConfig&) {
  const Matrix m = mean_matrix(s, d) + factor_term(s, d);
  const double sd = std::sqrt(s.factor.sigma2);
  for (Index i = 0; i < d.N(); ++i)
    for (Index j = 0; j < d.J(); ++j) {
      const LatentBounds b = latent_bounds(d.y(i, j));
      s.latent_y(i, j) = rtruncnorm(s.rng, m(i, j), sd, b.lo, b.hi);
    }
}

void update_eta(ChainState& s, const ModelData& d, const HyperConfig&) {
  const Matrix& q = s.factor.dirhs.q;
  const Matrix hmat = factor_scales(s, d);
  const Matrix c = q.transpose() * q;
  const Matrix b = latent_minus_factor(s, d) * q;
  const double inv_s2 = 1.0 / s.factor.sigma2;
  for (Index i = 0; i < d.N(); ++i) {
    const Vector h = hmat.row(i).transpose();
    Matrix prec = (h.asDiagonal() * c * h.asDiagonal()) * inv_s2;
    prec.diagonal().array() += 1.0;
    Eigen::LLT<Matrix> llt(prec);
    if (llt.info() != Eigen::Success) throw NumericalError(s.iteration, "eta", "eta precision is not positive definite");
    const Vector rhs = h.cwiseProduct(b.row(i).transpose()) * inv_s2;
    const Vector mean = llt.solve(rhs);
    s.factor.eta.row(i) = rmvnorm_precision(s.rng, mean, llt).transpose();
  }
}

void update_q(ChainState& s, const ModelData& d, const HyperConfig&) {
  DirHsState& dh = s.factor.dirhs;
  const Index J = d.J();
  const Index K = dh.q.cols();
  const Matrix g = factor_scales(s, d).cwiseProduct(s.factor.eta);
  const double inv_s2 = 1.0 / s.factor.sigma2;
  const Matrix gtg = g.transpose() * g * inv_s2;
  const Matrix gte = g.transpose() * latent_minus_factor(s, d) * inv_s2;
  for (Index j = 0; j < J; ++j) {
    Matrix prec = gtg;
    for (Index k = 0; k < K; ++k) prec(k, k) += 1.0 / loading_variance(dh, j, k);
    Eigen::LLT<Matrix> llt(prec);
    if (llt.info() != Eigen::Success) throw NumericalError(s.iteration, "Q", "loading precision is not positive definite");
    const Vector mean = llt.solve(Vector(gte.col(j)));
    dh.q.row(j) = rmvnorm_precision(s.rng, mean, llt).transpose();
  }
}

void update_zeta(ChainState& s, const ModelData&, const HyperConfig&) {
  DirHsState& dh = s.factor.dirhs;
  for (Index j = 0; j < dh.q.rows(); ++j)
    for (Index k = 0; k < dh.q.cols(); ++k) {
      const double q = dh.q(j, k);
      const double scale = std::max(dh.phi(j, k) * dh.tau[k], kVarianceFloor);
      const double z2 = rinv_gamma(s.rng, 1.0, 1.0 / dh.zeta_aux(j, k) + q * q / (2.0 * scale));
      dh.zeta(j, k) = std::sqrt(z2);
      dh.zeta_aux(j, k) = rinv_gamma(s.rng, 1.0, 1.0 + 1.0 / z2);
    }
}

void update_tau(ChainState& s, const ModelData& d, const HyperConfig& h) {
  DirHsState& dh = s.factor.dirhs;
  const double Jd = static_cast<double>(d.J());
  for (Index k = 0; k < dh.q.cols(); ++k) {
    double chi = 0.0;
    for (Index j = 0; j < dh.q.rows(); ++j) {
      const double z = dh.zeta(j, k);
      chi += dh.q(j, k) * dh.q(j, k) / std::max(z * z * dh.phi(j, k), kVarianceFloor);
    }
    chi = std::max(chi, kVarianceFloor);
    dh.tau[k] = std::max(rgig(s.rng, h.a_tau - Jd / 2.0, chi, 2.0 * h.b_tau / Jd), kVarianceFloor);
  }
}

double phi_log_target(const Vector& z, const Vector& q_col, const Vector& zeta_col, double tau, double a_phi,
                      bool with_likelihood) {
  const Index J = q_col.size();
  Vector logphi(J);
  logphi.head(J - 1) = z;
  logphi[J - 1] = 0.0;
  const double mx = logphi.maxCoeff();
  const double lse = mx + std::log((logphi.array() - mx).exp().sum());
  logphi.array() -= lse;
  double t = a_phi * logphi.sum();
  if (with_likelihood) {
    for (Index j = 0; j < J; ++j) {
      t -= 0.5 * logphi[j];
      const double q = q_col[j];
      if (q != 0.0) t -= q * q / (2.0 * zeta_col[j] * zeta_col[j] * tau) * std::exp(-logphi[j]);
    }
  }
  return t;
}

void update_phi(ChainState& s, const ModelData& d, const HyperConfig& h, const SamplerConfig& c, bool adapting) {
  const Index J = d.J();
  if (J < 2) return;
  DirHsState& dh = s.factor.dirhs;
  for (Index k = 0; k < dh.q.cols(); ++k) {
    const Vector q_col = dh.q.col(k);
    const Vector zeta_col = dh.zeta.col(k);
    const double tau = dh.tau[k];
    Vector z = (dh.phi.col(k).head(J - 1).array().log() - std::log(dh.phi(J - 1, k))).matrix();
    auto target = [&](const Vector& v) { return phi_log_target(v, q_col, zeta_col, tau, h.a_phi, true); };
    double logp = target(z);
    adaptive_mh_step(s.phi_proposal[static_cast<std::size_t>(k)], z, logp, target, s.rng, adapting, c.adapt);
    Vector logphi(J);
    logphi.head(J - 1) = z;
    logphi[J - 1] = 0.0;
    const double mx = logphi.maxCoeff();
    Vector phi = (logphi.array() - mx).exp().matrix();
    phi /= phi.sum();
    dh.phi.col(k) = phi.cwiseMax(std::numeric_limits<double>::min());
  }
}

double collapsed_loglik(const Matrix& hmat, const Matrix& q, const Matrix& residual, double sigma2) {
  const Index N = residual.rows();
  const Index J = residual.cols();
  const Index K = q.cols();
  const Matrix c = q.transpose() * q;
  const Matrix b = residual * q;
  const double log_s2 = std::log(sigma2);
  double total = 0.0;
  for (Index i = 0; i < N; ++i) {
    const Vector h = hmat.row(i).transpose();
    Matrix m = h.asDiagonal() * c * h.asDiagonal();
    m.diagonal().array() += sigma2;
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const Vector bi = h.cwiseProduct(b.row(i).transpose());
    const Vector w = llt.matrixL().solve(bi);
    double logdet = 0.0;
    for (Index k = 0; k < K; ++k) logdet += 2.0 * std::log(llt.matrixL()(k, k));
    const double ee = residual.row(i).squaredNorm();
    total -= 0.5 * (static_cast<double>(J - K) * log_s2 + logdet + (ee - w.squaredNorm()) / sigma2);
  }
  return total - 0.5 * static_cast<double>(N * J) * std::log(2.0 * kPi);
}

void update_f(ChainState& s, const ModelData& d, const HyperConfig& h, const SamplerConfig& c, bool adapting) {
  const Matrix residual = latent_minus_factor(s, d);
  const Matrix& q = s.factor.dirhs.q;
  const double sigma2 = s.factor.sigma2;
  Matrix hmat = factor_scales(s, d);
  for (Index k = 0; k < s.factor.f.rows(); ++k) {
    Vector fk = s.factor.f.row(k).transpose();
    auto target = [&](const Vector& v) {
      Matrix hh = hmat;
      hh.col(k) = d.x_cov * v;
      return -0.5 * v.squaredNorm() + collapsed_loglik(hh, q, residual, sigma2);
    };
    double logp = target(fk);
    adaptive_mh_step(s.f_proposal[static_cast<std::size_t>(k)], fk, logp, target, s.rng, adapting, c.adapt);
    s.factor.f.row(k) = fk.transpose();
    hmat.col(k) = d.x_cov * fk;
  }
  update_eta(s, d, h);
}

void update_sigma2(ChainState& s, const ModelData& d, const HyperConfig& h) {
  const Matrix r = s.latent_y - mean_matrix(s, d) - factor_term(s, d);
  const double n = static_cast<double>(d.N() * d.J());
  s.factor.sigma2 = rinv_gamma(s.rng, h.a_sigma + n / 2.0, h.b_sigma + 0.5 * r.squaredNorm());
}

void update_beta(ChainState& s, const ModelData& d, const HyperConfig& h) {
  const Index Pm = d.P_mean();
  if (Pm == 0) return;
  Matrix w = s.latent_y - factor_term(s, d);
  for (Index i = 0; i < d.N(); ++i) w.row(i).array() -= s.mean.alpha.row(d.alpha_row(i)).array() + s.mean.r[i];
  const double inv_s2 = 1.0 / s.factor.sigma2;
  Matrix prec = d.x_mean.transpose() * d.x_mean * inv_s2;
  prec.diagonal().array() += 1.0 / h.u2_beta;
  Eigen::LLT<Matrix> llt(prec);
  if (llt.info() != Eigen::Success) throw NumericalError(s.iteration, "beta", "beta precision is not positive definite");
  const Matrix xtw = d.x_mean.transpose() * w * inv_s2;
  for (Index j = 0; j < d.J(); ++j) {
    const Vector mean = llt.solve(Vector(xtw.col(j)));
    s.mean.beta.row(j) = rmvnorm_precision(s.rng, mean, llt).transpose();
  }
}

void update_alpha_stack(ChainState& s, const ModelData& d, const HyperConfig&, const SamplerConfig& c) {
  MeanState& m = s.mean;
  ConstrainedDpStack& st = m.alpha_stack;
  const Index J = d.J();
  const Index L = st.L();
  const Index rows = d.alpha_rows();
  const double inv_s2 = 1.0 / s.factor.sigma2;

  // Sufficient statistics per unit (row, feature): count and sum of the
  // latents with every other mean and factor term removed.
  Matrix z = s.latent_y - factor_term(s, d);
  for (Index i = 0; i < d.N(); ++i) z.row(i).array() -= m.r[i];
  if (d.P_mean() > 0) z.noalias() -= d.x_mean * m.beta.transpose();
  Vector n_unit = Vector::Zero(rows);
  Matrix sum_unit = Matrix::Zero(rows, J);
  for (Index i = 0; i < d.N(); ++i) {
    n_unit[d.alpha_row(i)] += 1.0;
    sum_unit.row(d.alpha_row(i)) += z.row(i);
  }
  auto loglik = [&](Index row, Index j, double a) {
    return -(n_unit[row] * a * a - 2.0 * a * sum_unit(row, j)) * 0.5 * inv_s2;
  };

  // Indicators over (component, inner atom).
  std::vector<double> lw(static_cast<std::size_t>(2 * L));
  Vector occupancy = Vector::Zero(L);
  for (Index row = 0; row < rows; ++row)
    for (Index j = 0; j < J; ++j) {
      for (Index l = 0; l < L; ++l) {
        const double lpsi = std::log(st.psi[l]);
        lw[static_cast<std::size_t>(2 * l)] = lpsi + std::log(st.omega[l]) + loglik(row, j, st.atom(j, l, 0));
        lw[static_cast<std::size_t>(2 * l + 1)] = lpsi + std::log1p(-st.omega[l]) + loglik(row, j, st.atom(j, l, 1));
      }
      const Index pick = rcategorical_log(s.rng, lw);
      m.alpha_component(row, j) = static_cast<int>(pick / 2);
      m.alpha_inner(row, j) = static_cast<int>(pick % 2);
      occupancy[pick / 2] += 1.0;
    }
  update_sticks(st, occupancy, s.rng);

  // Locations.
  const Index xi_rows = st.xi.rows();
  for (Index l = 0; l < L; ++l) {
    const double w = st.omega[l];
    const double kappa = w / (1.0 - w);
    const double offset = st.hyper.nu / (1.0 - w);
    for (Index xr = 0; xr < xi_rows; ++xr) {
      double prec = 0.0, lin = 0.0;
      const Index j_lo = st.mode == AtomMode::kPerFeature ? xr : 0;
      const Index j_hi = st.mode == AtomMode::kPerFeature ? xr + 1 : J;
      for (Index row = 0; row < rows; ++row)
        for (Index j = j_lo; j < j_hi; ++j) {
          if (m.alpha_component(row, j) != l) continue;
          const double n = n_unit[row];
          const double sm = sum_unit(row, j);
          if (m.alpha_inner(row, j) == 0) {
            prec += n * inv_s2;
            lin += sm * inv_s2;
          } else {
            prec += kappa * kappa * n * inv_s2;
            lin -= kappa * (sm - n * offset) * inv_s2;
          }
        }
      st.xi(xr, l) = draw_xi(st.hyper.nu, st.hyper.xi_var, prec, lin, s.rng);
    }
  }

  // Inner weights.
  for (Index l = 0; l < L; ++l) {
    double n1 = 0.0, n2 = 0.0;
    for (Index row = 0; row < rows; ++row)
      for (Index j = 0; j < J; ++j)
        if (m.alpha_component(row, j) == l) (m.alpha_inner(row, j) == 0 ? n1 : n2) += 1.0;
    auto ll = [&](double w) {
      double t = 0.0;
      for (Index row = 0; row < rows; ++row)
        for (Index j = 0; j < J; ++j)
          if (m.alpha_component(row, j) == l && m.alpha_inner(row, j) == 1) {
            const double xi = st.xi(st.mode == AtomMode::kPerFeature ? j : 0, l);
            t += loglik(row, j, (st.hyper.nu - w * xi) / (1.0 - w));
          }
      return t;
    };
    update_omega(st, l, n1, n2, ll, c.omega_step, s.rng);
  }
  refresh_alpha(m);
}

void update_r_stack(ChainState& s, const ModelData& d, const HyperConfig& h, const SamplerConfig& c) {
  MeanState& m = s.mean;
  ConstrainedDpStack& st = m.r_stack;
  const Index N = d.N();
  const Index L = st.L();
  const double u2 = h.u_r2;

  std::vector<double> lw(static_cast<std::size_t>(2 * L));
  Vector occupancy = Vector::Zero(L);
  for (Index i = 0; i < N; ++i) {
    for (Index l = 0; l < L; ++l) {
      const double lpsi = std::log(st.psi[l]);
      lw[static_cast<std::size_t>(2 * l)] = lpsi + std::log(st.omega[l]) + normal_logpdf(m.r[i], st.atom(0, l, 0), u2);
      lw[static_cast<std::size_t>(2 * l + 1)] =
          lpsi + std::log1p(-st.omega[l]) + normal_logpdf(m.r[i], st.atom(0, l, 1), u2);
    }
    const Index pick = rcategorical_log(s.rng, lw);
    m.r_component[i] = static_cast<int>(pick / 2);
    m.r_inner[i] = static_cast<int>(pick % 2);
    occupancy[pick / 2] += 1.0;
  }
  update_sticks(st, occupancy, s.rng);

  for (Index l = 0; l < L; ++l) {
    const double w = st.omega[l];
    const double kappa = w / (1.0 - w);
    const double offset = st.hyper.nu / (1.0 - w);
    double prec = 0.0, lin = 0.0;
    for (Index i = 0; i < N; ++i) {
      if (m.r_component[i] != l) continue;
      if (m.r_inner[i] == 0) {
        prec += 1.0 / u2;
        lin += m.r[i] / u2;
      } else {
        prec += kappa * kappa / u2;
        lin -= kappa * (m.r[i] - offset) / u2;
      }
    }
    st.xi(0, l) = draw_xi(st.hyper.nu, st.hyper.xi_var, prec, lin, s.rng);
  }

  for (Index l = 0; l < L; ++l) {
    double n1 = 0.0, n2 = 0.0;
    for (Index i = 0; i < N; ++i)
      if (m.r_component[i] == l) (m.r_inner[i] == 0 ? n1 : n2) += 1.0;
    auto ll = [&](double w) {
      const double atom2 = (st.hyper.nu - w * st.xi(0, l)) / (1.0 - w);
      double t = 0.0;
      for (Index i = 0; i < N; ++i)
        if (m.r_component[i] == l && m.r_inner[i] == 1) t += normal_logpdf(m.r[i], atom2, u2);
      return t;
    };
    update_omega(st, l, n1, n2, ll, c.omega_step, s.rng);
  }

  // Size factors given their kernels.
  Matrix w = s.latent_y - factor_term(s, d);
  for (Index i = 0; i < N; ++i) w.row(i) -= m.alpha.row(d.alpha_row(i));
  if (d.P_mean() > 0) w.noalias() -= d.x_mean * m.beta.transpose();
  const double inv_s2 = 1.0 / s.factor.sigma2;
  const double prec = 1.0 / u2 + static_cast<double>(d.J()) * inv_s2;
  for (Index i = 0; i < N; ++i) {
    const double centre = st.atom(0, m.r_component[i], m.r_inner[i]);
    const double lin = centre / u2 + w.row(i).sum() * inv_s2;
    m.r[i] = lin / prec + s.rng.normal() / std::sqrt(prec);
  }
}

void sweep(ChainState& s, const ModelData& d, const HyperConfig& h, const SamplerConfig& c, bool adapting) {
  auto guard = [&](bool ok, const char* block) {
    if (!ok)
      throw NumericalError(s.iteration, block,
                           "non-finite value in block '" + std::string(block) + "' at iteration " +
                               std::to_string(s.iteration));
  };
  update_latent_y(s, d, h);
  guard(all_finite(s.latent_y), "latent_y");
  update_eta(s, d, h);
  guard(all_finite(s.factor.eta), "eta");
  update_q(s, d, h);
  guard(all_finite(s.factor.dirhs.q), "Q");
  update_zeta(s, d, h);
  guard(all_finite(s.factor.dirhs.zeta) && all_finite(s.factor.dirhs.zeta_aux), "zeta");
  update_tau(s, d, h);
  guard(all_finite(s.factor.dirhs.tau), "tau");
  update_phi(s, d, h, c, adapting);
  guard(all_finite(s.factor.dirhs.phi), "phi");
  update_f(s, d, h, c, adapting);
  guard(all_finite(s.factor.f) && all_finite(s.factor.eta), "F");
  update_sigma2(s, d, h);
  guard(std::isfinite(s.factor.sigma2) && s.factor.sigma2 > 0.0, "sigma2");
  update_beta(s, d, h);
  guard(all_finite(s.mean.beta), "beta");
  update_alpha_stack(s, d, h, c);
  guard(all_finite(s.mean.alpha) && all_finite(s.mean.alpha_stack.xi), "alpha");
  update_r_stack(s, d, h, c);
  guard(all_finite(s.mean.r) && all_finite(s.mean.r_stack.xi), "r");
}

// Draw storage -----------------------------------------------------------------

Matrix ChainDraws::table(const std::string& name) const {
  const auto it = values.find(name);
  require(it != values.end(), "no stored draws named '" + name + "'");
  const Index cols = static_cast<Index>(columns.at(name).size());
  const Index rows = n_draws();
  require(static_cast<Index>(it->second.size()) == rows * cols, "stored draws of '" + name + "' have the wrong size");
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = it->second[static_cast<std::size_t>(r * cols + c)];
  return m;
}

namespace {

void append(ChainDraws& draws, const std::string& name, const std::vector<std::string>& cols,
            const std::vector<double>& row) {
  auto& header = draws.columns[name];
  if (header.empty()) header = cols;
  auto& v = draws.values[name];
  v.insert(v.end(), row.begin(), row.end());
}

std::string label(const std::string& name, Index a) { return name + "_" + std::to_string(a + 1); }
std::string label(const std::string& name, Index a, Index b) {
  return name + "_" + std::to_string(a + 1) + "_" + std::to_string(b + 1);
}

void append_matrix(ChainDraws& draws, const std::string& name, const Matrix& m) {
  std::vector<std::string> cols;
  std::vector<double> row;
  for (Index a = 0; a < m.rows(); ++a)
    for (Index b = 0; b < m.cols(); ++b) {
      if (draws.columns[name].empty()) cols.push_back(label(name, a, b));
      row.push_back(m(a, b));
    }
  append(draws, name, cols, row);
}

void append_vector(ChainDraws& draws, const std::string& name, const Vector& v) {
  std::vector<std::string> cols;
  std::vector<double> row(v.data(), v.data() + v.size());
  if (draws.columns[name].empty())
    for (Index a = 0; a < v.size(); ++a) cols.push_back(label(name, a));
  append(draws, name, cols, row);
}

}  // namespace

void record_draw(ChainDraws& draws, const ChainState& s, const ModelData&) {
  draws.iterations.push_back(s.iteration);
  append_matrix(draws, "Q", s.factor.dirhs.q);
  append_matrix(draws, "F", s.factor.f);
  append_vector(draws, "sigma2", Vector::Constant(1, s.factor.sigma2));
  append_vector(draws, "tau", s.factor.dirhs.tau);
  append_matrix(draws, "beta", s.mean.beta);
  append_matrix(draws, "alpha", s.mean.alpha);
  append_vector(draws, "r", s.mean.r);
}

ChainResult run_chain(const ModelData& d, const HyperConfig& h, const SamplerConfig& c, const ProgressFn& progress) {
  const auto start = std::chrono::steady_clock::now();
  ChainResult result;
  ChainState s = initial_state(d, h, c);
  for (long it = 1; it <= c.n_iter; ++it) {
    s.iteration = it;
    const bool adapting = c.adapt.enabled && it <= c.n_burn;
    sweep(s, d, h, c, adapting);
    if (it > c.n_burn && (it - c.n_burn) % c.thin == 0) record_draw(result.draws, s, d);
    if (progress) progress(it);
  }
  auto mean_rate = [](const std::vector<AdaptiveProposal>& props) {
    if (props.empty()) return 0.0;
    double t = 0.0;
    for (const auto& p : props) t += p.frozen_acceptance_rate();
    return t / static_cast<double>(props.size());
  };
  result.summary.phi_acceptance = mean_rate(s.phi_proposal);
  result.summary.f_acceptance = mean_rate(s.f_proposal);
  result.summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.final_state = std::move(s);
  return result;
}

}  // namespace cvfm
