#pragma once

// Ground-truth generators for the three simulation scenarios, plus the
// on-disk format of a simulated data set:
//
//   <dir>/counts.csv, <dir>/design.csv   data in the standard formats
//   <dir>/fit.cfg                        config for `cvfm fit` (roles, subjects)
//   <dir>/manifest.json                  scenario, seed, dimensions
//   <dir>/truth/eval_points.csv          point,<covariance covariates...>
//   <dir>/truth/sigma.csv                point,j,k,value for j <= k (1-based)
//   <dir>/truth/beta.csv, alpha.csv, r.csv, mu.csv, latent.csv
//   <dir>/truth/contrasts.csv            feature,first,second,value

#include "cvfm/data.hpp"
#include "cvfm/random.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cvfm {

/// A truth contrast beta_{j,first} - beta_{j,second}; `second` empty means
/// the coefficient beta_{j,first} itself.
struct TruthContrast {
  Index feature;
  std::string first;
  std::string second;
  double value;
};

struct SimTruth {
  std::string scenario;
  std::uint64_t seed = 0;
  std::vector<std::string> covariance_names;  ///< starts with "intercept"
  std::vector<std::string> mean_names;
  Matrix eval_points;          ///< points x P, covariance design rows
  std::vector<Matrix> sigma;   ///< one J x J matrix per evaluation point
  Matrix mu;                   ///< N x J
  Matrix latent;               ///< N x J log-scale draws; counts = floor(exp(latent))
  Matrix beta;                 ///< J x P_mean
  Matrix alpha;                ///< rows x J
  Vector r;                    ///< N
  std::vector<TruthContrast> contrasts;

  std::vector<Matrix> correlations() const;
};

struct SimData {
  CountTable counts;
  CovariateDesign design;
  bool subjects = false;
  SimTruth truth;
};

/// Two categorical covariates (2 and 3 levels), six conditions with
/// `per_condition` samples each, two true factors.
SimData gen_sim1(std::uint64_t seed, Index J = 15, Index per_condition = 5);

/// Repeated samples: S subjects with one sample per level of a binary
/// covariate and a continuous subject covariate; common plus
/// covariate-dependent factors; subject-indexed baselines.
SimData gen_sim2(std::uint64_t seed, Index S = 25, Index J = 100);

/// As gen_sim2 but the correlation changes arbitrarily between the two
/// levels of the binary covariate (vine construction).
SimData gen_sim3(std::uint64_t seed, Index S = 25, Index J = 100, double partial_threshold = 0.8);

/// Correlation matrix from C-vine partial correlations: entry (k, i), k < i,
/// is the partial correlation of variables k and i given variables 0..k-1.
Matrix vine_correlation(const Matrix& partial);

/// Partial correlations uniform on (-1, 1), those with |p| < threshold set to
/// zero, converted by vine_correlation.
Matrix random_vine_correlation(Rng& rng, Index J, double threshold);

/// Applies v + sign(v) * shift to a standard normal draw.
double shifted_normal(Rng& rng, double shift);

void write_simulation(const std::filesystem::path& dir, const SimData& sim);

/// Reads a truth directory written by write_simulation.
SimTruth read_truth(const std::filesystem::path& truth_dir);

}  // namespace cvfm
