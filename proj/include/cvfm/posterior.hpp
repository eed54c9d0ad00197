#pragma once

// Posterior summaries, covariance reconstruction, evaluation metrics and
// convergence diagnostics over draw stores.
//
// Quantiles use linear interpolation between order statistics: for sorted
// draws x_(1) <= ... <= x_(n), the p-quantile is x_(h) + (h - floor h)
// (x_(h+1) - x_(h)) with h = 1 + (n - 1) p.

#include "cvfm/draw_store.hpp"
#include "cvfm/model.hpp"
#include "cvfm/simgen.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace cvfm {

/// Linear-interpolation quantile of unsorted values.
double quantile(std::vector<double> values, double p);

struct PosteriorSummary {
  std::vector<std::string> names;  ///< one per scalar component
  std::vector<double> probs;
  Matrix quantiles;  ///< components x probs
  Vector mean;
  std::vector<bool> excludes_zero;  ///< central interval (first, last prob) excludes 0

  Index size() const { return static_cast<Index>(names.size()); }
};

/// Summaries of every column of a draws x components matrix.
PosteriorSummary summarize_draws(const Matrix& draws, const std::vector<std::string>& names,
                                 const std::vector<double>& probs = {0.025, 0.5, 0.975});

/// All chains of one stored parameter, stacked.
Matrix pooled_draws(const DrawStore& store, const std::string& name);

/// Summaries of a stored parameter pooled over chains.
PosteriorSummary summarize(const DrawStore& store, const std::string& quantity,
                           const std::vector<double>& probs = {0.025, 0.5, 0.975});

/// Loading parameters of pooled draw d.
FactorLoadingParams draw_params(const DrawStore& store, Index d);

/// Sigma(x) for every pooled draw.
std::vector<Matrix> sigma_draws(const DrawStore& store, const CovariateVector& x);

/// Elementwise correlation transform of each covariance draw.
std::vector<Matrix> correlation_draws(const std::vector<Matrix>& sigma);

struct MatrixSummary {
  Matrix median;
  Matrix mean;
  Matrix lower;  ///< 2.5%
  Matrix upper;  ///< 97.5%
};

/// Entrywise summaries of a sequence of equally sized matrices.
MatrixSummary summarize_matrices(const std::vector<Matrix>& draws);

/// Root mean square of (estimate - truth) over the strictly upper triangle
/// (j < k) of every evaluation point.
double rmse_correlations(const std::vector<Matrix>& estimate, const std::vector<Matrix>& truth);

/// A difference of two mean-design columns, named by their labels.
struct Contrast {
  Index first;   ///< 0-based column of beta
  Index second;  ///< -1 for the single coefficient beta_{j,first}
};

/// Summaries of beta_{j,first} - beta_{j,second} for every feature j and
/// contrast; names are "<feature>:<col_a>-<col_b>".
PosteriorSummary beta_contrasts(const DrawStore& store, const std::vector<Contrast>& contrasts,
                                const std::vector<double>& probs = {0.025, 0.5, 0.975});

/// Split R-hat over chains (each chain split in halves). NaN when fewer than
/// four draws per chain or zero within-chain variance.
double split_rhat(const std::vector<Vector>& chains);

/// Effective sample size from Geyer's initial monotone sequence applied to the
/// multi-chain autocorrelation estimate. Returns 0 for constant draws.
double effective_sample_size(const std::vector<Vector>& chains);

struct Diagnostic {
  std::string name;
  double ess;
  double rhat;
};

/// ESS and split R-hat for every scalar column of the stored parameters.
/// Constant columns get ESS 0 and are reported through `warnings`.
std::vector<Diagnostic> diagnostics(const DrawStore& store, std::vector<std::string>* warnings = nullptr);

/// Posterior median correlation matrix at every row of `points`.
std::vector<Matrix> correlation_medians(const DrawStore& store, const Matrix& points);

struct EvaluationMetrics {
  double rmse_correlation = 0.0;
  double coverage_beta_95 = 0.0;  ///< NaN when the truth lists no contrasts
  Index n_draws = 0;
};

/// Correlation RMSE of posterior medians at the truth's evaluation points and
/// the share of truth contrasts inside their central 95% intervals.
EvaluationMetrics evaluate_against_truth(const DrawStore& store, const SimTruth& truth);

/// One row of the plot-ready long table.
struct LongRow {
  std::string quantity;
  std::string index;
  std::string level;
  double q025;
  double median;
  double q975;
};

void write_long_table(const std::filesystem::path& path, const std::vector<LongRow>& rows);

/// Rows for a summary with the given quantity and level labels (probs must be
/// {0.025, 0.5, 0.975}).
std::vector<LongRow> long_rows(const PosteriorSummary& s, const std::string& quantity, const std::string& level = "");

}  // namespace cvfm
