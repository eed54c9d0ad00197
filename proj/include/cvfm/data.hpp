#pragma once

// Count tables, covariate designs and their delimited-text formats.
//
// counts.csv: header row; first column sample id, optionally a subject-id
// column second, then one column per feature holding non-negative integers.
// design.csv: header row; first column sample id, then one numeric column per
// covariate. The intercept is implicit. An explicit column named "intercept"
// is accepted only if every entry is 1 and is then dropped.

#include "cvfm/types.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cvfm {

struct CountTable {
  std::vector<std::string> sample_ids;
  std::vector<std::string> feature_names;
  CountMatrix counts;                 ///< N x J
  std::vector<std::string> subjects;  ///< empty, or one label per sample

  Index n_samples() const { return counts.rows(); }
  Index n_features() const { return counts.cols(); }
};

enum class CovariateRole { kMean, kCovariance, kBoth };

CovariateRole parse_role(const std::string& text);
std::string to_string(CovariateRole role);

struct CovariateDesign {
  std::vector<std::string> sample_ids;
  std::vector<std::string> names;   ///< non-intercept covariates
  Matrix values;                    ///< N x C
  std::vector<CovariateRole> roles; ///< one per covariate

  /// N x P: intercept followed by covariates whose role includes covariance.
  Matrix covariance_design() const;
  /// N x P_mean: covariates whose role includes the mean (no intercept).
  Matrix mean_design() const;
  std::vector<std::string> covariance_names() const;
  std::vector<std::string> mean_names() const;
};

/// Everything the sampler reads from the data, in numeric form.
struct ModelData {
  CountMatrix y;
  Matrix x_cov;   ///< N x P, column 0 = 1
  Matrix x_mean;  ///< N x P_mean
  std::vector<int> subject;  ///< empty in shared-baseline mode
  int n_subjects = 0;

  Index N() const { return y.rows(); }
  Index J() const { return y.cols(); }
  Index P() const { return x_cov.cols(); }
  Index P_mean() const { return x_mean.cols(); }
  bool subject_mode() const { return !subject.empty(); }
  /// Rows of the baseline matrix: n_subjects in subject mode, else 1.
  Index alpha_rows() const { return subject_mode() ? n_subjects : 1; }
  Index alpha_row(Index i) const { return subject_mode() ? subject[static_cast<std::size_t>(i)] : 0; }

  /// Validates shapes and builds subject indices in order of first appearance.
  static ModelData build(const CountTable& counts, const CovariateDesign& design, bool use_subjects);
};

CountTable read_counts_csv(const std::filesystem::path& path,
                           const std::optional<std::string>& subject_column = std::nullopt);
CovariateDesign read_design_csv(const std::filesystem::path& path);

void write_counts_csv(const std::filesystem::path& path, const CountTable& table);
void write_design_csv(const std::filesystem::path& path, const CovariateDesign& design);

/// Writes a numeric matrix with a header; doubles use round-trip precision.
void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const Matrix& values, const std::vector<std::string>& row_labels = {});

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
CsvTable read_csv(const std::filesystem::path& path);

/// Shortest decimal representation that round-trips.
std::string format_double(double v);

}  // namespace cvfm
