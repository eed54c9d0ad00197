#pragma once

// Prior distributions: the Dirichlet-horseshoe prior on the loadings and the
// mean-constrained truncated stick-breaking mixtures for baselines and size
// factors.

#include "cvfm/random.hpp"
#include "cvfm/types.hpp"

#include <span>
#include <utility>

namespace cvfm {

/// Inner mixture weights are confined to [kOmegaMin, 1 - kOmegaMin]; both the
/// prior draws and the Metropolis updates respect this range.
inline constexpr double kOmegaMin = 1e-6;

struct DirHsHyper {
  double a_phi = 1.0;
  double a_tau = 0.1;
  double b_tau = 1.0;
  int K = 1;
};

/// Loading-side shrinkage state. phi is J x K with each column on the simplex.
/// zeta_aux holds the inverse-gamma expansion variable of the half-Cauchy
/// local scales: zeta^2 | aux ~ IG(1/2, 1/aux), aux ~ IG(1/2, 1).
struct DirHsState {
  Vector tau;
  Matrix phi;
  Matrix zeta;
  Matrix zeta_aux;
  Matrix q;
};

DirHsState sample_dirhs_prior(const DirHsHyper& hyper, Index J, Rng& rng);

/// Log prior density of q (J x K) given the scales, up to a constant.
double dirhs_q_log_density(const DirHsState& state);

/// Truncated stick-breaking weights. V must lie in (0, 1] with V_L = 1; the
/// last weight absorbs the remaining stick so the result sums to one.
Vector stick_break(std::span<const double> v);

/// (xi, (nu - omega xi) / (1 - omega)): the two atoms whose omega-weighted
/// mean is nu.
std::pair<double, double> constrained_atom_pair(double xi, double omega, double nu);

enum class AtomMode {
  kShared,      ///< one location per component, shared by all features
  kPerFeature,  ///< one location per (feature, component); subject-indexed baselines
  kKernel,      ///< normal kernels around the atoms (size factors)
};

/// Fixed hyperparameters of one mean-constrained stack.
struct DpStackHyper {
  Index L = 2;
  double concentration = 1.0;  ///< c in V_l ~ Be(1, c)
  double a_omega = 1.0;
  double b_omega = 1.0;
  double nu = 0.0;             ///< constraint target
  double xi_var = 1.0;         ///< prior variance of the locations around nu
  double kernel_sd = 0.0;      ///< 0 for point-mass atoms
};

/// Random part of a stack. xi is 1 x L, or J x L in per-feature mode.
struct ConstrainedDpStack {
  AtomMode mode = AtomMode::kShared;
  DpStackHyper hyper;
  Vector v;
  Vector psi;
  Vector omega;
  Matrix xi;

  Index L() const { return hyper.L; }
  double atom(Index row, Index l, int inner) const;
};

ConstrainedDpStack sample_stack_prior(AtomMode mode, const DpStackHyper& hyper, Index J, Rng& rng);

/// Draws omega ~ Be(a, b) restricted to [kOmegaMin, 1 - kOmegaMin].
double sample_omega_prior(Rng& rng, double a, double b);

struct MixtureDraw {
  Matrix value;       ///< S x J for baselines (S = 1 in shared mode), N x 1 for size factors
  IntMatrix component;
  IntMatrix inner;    ///< 0 = first atom, 1 = constrained second atom
};

/// Baselines from the stack. Shared and per-feature modes give `rows` rows
/// (1 in shared mode, S in subject mode) of J values.
MixtureDraw sample_alpha_prior(const ConstrainedDpStack& stack, Index rows, Index J, Rng& rng);

/// Size factors from a kernel-mode stack.
MixtureDraw sample_r_prior(const ConstrainedDpStack& stack, Index N, Rng& rng);

}  // namespace cvfm
