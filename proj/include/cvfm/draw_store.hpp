#pragma once

// On-disk layout of a fit:
//
//   <dir>/manifest.json          run metadata, data dimensions, labels, the
//                                covariate rows of every sample, resolved
//                                hyperparameters and sampler settings
//   <dir>/chain_<c>/<name>.csv   one table per saved parameter
//
// Each table has the header "iter,<name>_<a>[_<b>],..." (1-based indices,
// matrices in row-major order) and one row per saved draw. Values are written
// in shortest round-trip decimal form, so a store reads back bit-exactly.
// Saved parameters: Q (J x K), F (K x P), sigma2, tau (K), beta (J x P_mean),
// alpha (rows x J) and r (N).

#include "cvfm/sampler.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cvfm {

inline const std::vector<std::string>& stored_parameters() {
  static const std::vector<std::string> names{"Q", "F", "sigma2", "tau", "beta", "alpha", "r"};
  return names;
}

/// Labels carried alongside the numeric data.
struct DataLabels {
  std::vector<std::string> sample_ids;
  std::vector<std::string> feature_names;
  std::vector<std::string> covariance_names;  ///< starts with "intercept"
  std::vector<std::string> mean_names;
};

DataLabels labels_from(const CountTable& counts, const CovariateDesign& design);

struct DrawStore {
  nlohmann::json manifest;
  std::vector<ChainDraws> chains;

  Index J() const { return manifest.at("dims").at("J").get<Index>(); }
  Index K() const { return manifest.at("dims").at("K").get<Index>(); }
  Index P() const { return manifest.at("dims").at("P").get<Index>(); }
  Index P_mean() const { return manifest.at("dims").at("P_mean").get<Index>(); }
  Index N() const { return manifest.at("dims").at("N").get<Index>(); }
  /// N x P covariance design with intercept.
  Matrix x_cov() const;
  std::vector<std::string> covariance_names() const;
  std::vector<std::string> mean_names() const;
  std::vector<std::string> feature_names() const;
  Index total_draws() const;
};

nlohmann::json hyper_to_json(const HyperConfig& h);
HyperConfig hyper_from_json(const nlohmann::json& j);
nlohmann::json sampler_to_json(const SamplerConfig& c);

/// Runs `n_chains` chains, chain c seeded with substream_seed(config.seed, c),
/// on up to `threads` worker threads. Results are independent of `threads`.
std::vector<ChainResult> run_chains(const ModelData& data, const HyperConfig& hyper, const SamplerConfig& config,
                                    int n_chains, int threads = 1);

/// Assembles a store from finished chains.
DrawStore make_store(const ModelData& data, const DataLabels& labels, const HyperConfig& hyper,
                     const SamplerConfig& config, std::vector<ChainResult> chains);

void write_draw_store(const std::filesystem::path& dir, const DrawStore& store);
DrawStore read_draw_store(const std::filesystem::path& dir);

/// Reads a table written by write_draw_store; returns the iteration column
/// through `iterations` and the labels through `columns`.
Matrix read_draw_table(const std::filesystem::path& path, std::vector<std::string>& columns,
                       std::vector<long>& iterations);

}  // namespace cvfm
