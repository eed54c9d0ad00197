#include "geweke.hpp"

#include "cvfm/posterior.hpp"
#include "cvfm/sampler.hpp"
#include "support.hpp"

#include <algorithm>
#include <array>

namespace cvfm::test {

namespace {

constexpr Index kN = 4, kJ = 3, kK = 2, kP = 2;

ModelData toy_model() {
  ModelData d;
  d.y = CountMatrix::Zero(kN, kJ);
  d.x_cov.resize(kN, kP);
  d.x_cov << 1.0, -1.0, 1.0, -0.3, 1.0, 0.4, 1.0, 1.2;
  d.x_mean.resize(kN, 1);
  d.x_mean << 0.0, 1.0, 0.0, 1.0;
  return d;
}

// Scales chosen to keep the toy prior well inside the range where counts fit
// in 64 bits; the sampler is exact for any admissible values.
HyperConfig toy_hyper() {
  HyperConfig h;
  h.K = static_cast<int>(kK);
  h.a_phi = 1.5;
  h.a_tau = 2.0;
  h.b_tau = 30.0;
  h.a_sigma = 4.0;
  h.b_sigma = 3.0;
  h.u2_beta = 0.5;
  h.nu_alpha = 0.0;
  h.nu_r = 1.0;
  h.u2_alpha = 0.5;
  h.u_r2 = 0.1;
  h.u2_xi_r = 0.25;
  h.c_alpha = h.c_r = 1.0;
  h.L_alpha = h.L_r = 3;
  return h;
}

std::array<double, 4> observe(const ChainState& s) {
  return {s.factor.sigma2, s.factor.dirhs.tau[0], s.mean.beta(0, 0), s.mean.alpha(0, 0)};
}

}  // namespace

double GewekeResult::min_p() const {
  double p = 1.0;
  for (const auto& q : quantities) p = std::min(p, q.p_value);
  return p;
}

GewekeResult run_geweke(int draws, int thin, unsigned long long seed) {
  const HyperConfig h = toy_hyper();
  SamplerConfig c;
  c.n_iter = 2;
  c.n_burn = 1;
  c.adapt.enabled = false;
  c.adapt.initial_scale = 0.5;
  c.seed = seed;

  std::array<std::vector<double>, 4> marginal, successive;

  // Marginal-conditional: independent prior draws.
  ModelData d = toy_model();
  for (int t = 0; t < draws; ++t) {
    c.seed = substream_seed(seed, static_cast<std::uint64_t>(t) + 1);
    const ChainState s = sample_prior_state(d, h, c);
    const auto v = observe(s);
    for (std::size_t q = 0; q < 4; ++q) marginal[q].push_back(v[q]);
  }

  // Successive-conditional: sweep, then regenerate (eta, Y*, y) given theta.
  c.seed = substream_seed(seed, 0);
  ChainState s = sample_prior_state(d, h, c);
  forward_simulate(d, s);
  for (int t = 0; t < draws; ++t) {
    for (int k = 0; k < thin; ++k) {
      ++s.iteration;
      sweep(s, d, h, c, false);
      forward_simulate(d, s);
    }
    const auto v = observe(s);
    for (std::size_t q = 0; q < 4; ++q) successive[q].push_back(v[q]);
  }

  GewekeResult r;
  const std::array<const char*, 4> names{"sigma2", "tau_1", "beta_1_1", "alpha_1"};
  for (std::size_t q = 0; q < 4; ++q) {
    const Vector chain = Eigen::Map<const Vector>(successive[q].data(), static_cast<Index>(successive[q].size()));
    const double ess = std::min<double>(effective_sample_size({chain}), static_cast<double>(draws));
    const double d_stat = ks_statistic(marginal[q], successive[q]);
    const auto n_eff = static_cast<std::size_t>(std::max(1.0, ess));
    r.quantities.push_back({names[q], d_stat, ess, ks_pvalue(d_stat, marginal[q].size(), n_eff)});
  }
  return r;
}

}  // namespace cvfm::test
