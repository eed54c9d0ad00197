#pragma once

// Run configuration: one `key = value` pair per line, `#` starts a comment.
//
//   counts = counts.csv              count table (required for fit)
//   design = design.csv              covariate table (required for fit)
//   out = fits/run1                  draw-store directory
//   subject_column = subject         optional; enables subject-indexed baselines
//   role.<covariate> = mean|cov|both default both
//   seed, chains, threads, iters, burn, thin
//   adapt = true|false, adapt_start, omega_step
//   any HyperConfig field by name (K, a_phi, ..., L_r)
//
// Relative paths are resolved against the directory of the config file.
// Unknown keys and repeated keys are errors.

#include "cvfm/calibrate.hpp"
#include "cvfm/data.hpp"
#include "cvfm/sampler.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace cvfm {

struct RunConfig {
  std::filesystem::path counts;
  std::filesystem::path design;
  std::filesystem::path out;
  std::optional<std::string> subject_column;
  std::map<std::string, CovariateRole> roles;
  std::map<std::string, double> hyper_overrides;
  SamplerConfig sampler;
  int chains = 1;
  int threads = 1;
};

RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir,
                            const std::string& source = "config");
RunConfig parse_config_file(const std::filesystem::path& path);

/// Applies overrides by field name; throws ContractError on an unknown name.
void apply_hyper_override(HyperConfig& h, const std::string& key, double value);
bool is_hyper_key(const std::string& key);

struct FitInputs {
  CountTable counts;
  CovariateDesign design;
  ModelData data;
  HyperConfig hyper;
};

/// Reads both tables, assigns roles, calibrates defaults from the counts and
/// applies the overrides.
FitInputs load_fit_inputs(const RunConfig& config);

}  // namespace cvfm
