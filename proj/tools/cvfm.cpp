// cvfm: simulate, fit, summarize and evaluate from the command line.
//
// Exit codes: 0 success, 1 user error (bad flags, files or configuration),
// 2 numerical abort during sampling.

#include "cvfm/config.hpp"
#include "cvfm/draw_store.hpp"
#include "cvfm/posterior.hpp"
#include "cvfm/simgen.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace cvfm;

namespace {

constexpr int kExitUser = 1;
constexpr int kExitNumerical = 2;
constexpr const char* kOutputRootEnv = "CVFM_OUTPUT_ROOT";

fs::path output_root() {
  const char* root = std::getenv(kOutputRootEnv);
  return root && *root ? fs::path(root) : fs::current_path();
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

struct SimulateArgs {
  std::string scenario = "sim1";
  std::uint64_t seed = 1;
  std::string out;
  std::optional<long> features, subjects, per_condition;
  double threshold = 0.8;
};

int cmd_simulate(const SimulateArgs& a) {
  SimData sim;
  if (a.scenario == "sim1") {
    sim = gen_sim1(a.seed, a.features.value_or(15), a.per_condition.value_or(5));
  } else if (a.scenario == "sim2") {
    sim = gen_sim2(a.seed, a.subjects.value_or(25), a.features.value_or(100));
  } else if (a.scenario == "sim3") {
    sim = gen_sim3(a.seed, a.subjects.value_or(25), a.features.value_or(100), a.threshold);
  } else {
    throw ContractError("unknown scenario '" + a.scenario + "' (expected sim1, sim2 or sim3)");
  }
  const fs::path out = a.out.empty() ? output_root() / (a.scenario + "_seed" + std::to_string(a.seed)) : fs::path(a.out);
  write_simulation(out, sim);
  std::cout << "wrote " << sim.counts.n_samples() << " x " << sim.counts.n_features() << " counts to " << out.string()
            << "\n";
  return 0;
}

struct FitArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> chains, threads;
  std::optional<long> iters, burn, thin;
  std::string out;
  bool quiet = false;
};

int cmd_fit(const FitArgs& a) {
  RunConfig cfg = parse_config_file(a.config);
  if (a.seed) cfg.sampler.seed = *a.seed;
  if (a.chains) cfg.chains = *a.chains;
  if (a.threads) cfg.threads = *a.threads;
  if (a.iters) cfg.sampler.n_iter = *a.iters;
  if (a.burn) cfg.sampler.n_burn = *a.burn;
  if (a.thin) cfg.sampler.thin = *a.thin;
  if (!a.out.empty()) cfg.out = a.out;
  if (cfg.out.empty()) cfg.out = output_root() / ("fit_seed" + std::to_string(cfg.sampler.seed));
  cfg.sampler.validate();
  require(cfg.chains >= 1, "chains must be at least 1");
  require(cfg.threads >= 1, "threads must be at least 1");

  FitInputs in = load_fit_inputs(cfg);
  if (!a.quiet)
    std::cerr << "fitting N=" << in.data.N() << " J=" << in.data.J() << " P=" << in.data.P() << " K=" << in.hyper.K
              << " with " << cfg.chains << " chain(s) of " << cfg.sampler.n_iter << " iterations\n";
  const auto start = std::chrono::steady_clock::now();
  auto results = run_chains(in.data, in.hyper, cfg.sampler, cfg.chains, cfg.threads);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const DrawStore store = make_store(in.data, labels_from(in.counts, in.design), in.hyper, cfg.sampler, std::move(results));
  write_draw_store(cfg.out, store);
  // Wall-clock timing is kept apart from the deterministic store contents.
  write_json(cfg.out / "timing.json", {{"runtime_seconds", seconds}});
  std::cout << "wrote " << store.total_draws() << " draws to " << cfg.out.string() << " (" << seconds << " s)\n";
  return 0;
}

struct SummarizeArgs {
  std::string store;
  std::string out;
  std::vector<std::string> targets;
};

int cmd_summarize(const SummarizeArgs& a) {
  const DrawStore store = read_draw_store(a.store);
  const fs::path out = a.out.empty() ? fs::path(a.store) / "summary" : fs::path(a.out);
  fs::create_directories(out);
  std::vector<std::string> targets = a.targets;
  if (targets.empty()) targets = {"Q", "F", "sigma2", "tau", "beta", "alpha", "r", "correlation", "diagnostics"};

  for (const auto& t : targets) {
    if (t == "correlation" || t == "covariance") {
      // One level per distinct covariance covariate row.
      const Matrix x = store.x_cov();
      std::vector<Vector> seen;
      std::vector<LongRow> rows;
      const auto features = store.feature_names();
      for (Index i = 0; i < x.rows(); ++i) {
        const Vector xi = x.row(i).transpose();
        bool dup = false;
        for (const auto& s : seen) dup = dup || s == xi;
        if (dup) continue;
        seen.push_back(xi);
        std::string level;
        for (Index p = 0; p < xi.size(); ++p) level += (p ? ";" : "") + format_double(xi[p]);
        auto draws = sigma_draws(store, CovariateVector(xi));
        if (t == "correlation") draws = correlation_draws(draws);
        const MatrixSummary s = summarize_matrices(draws);
        for (Index j = 0; j < s.median.rows(); ++j)
          for (Index k = j; k < s.median.cols(); ++k)
            rows.push_back({t, features[static_cast<std::size_t>(j)] + ":" + features[static_cast<std::size_t>(k)],
                            level, s.lower(j, k), s.median(j, k), s.upper(j, k)});
      }
      write_long_table(out / (t + ".csv"), rows);
    } else if (t == "contrasts") {
      const auto names = store.mean_names();
      std::vector<Contrast> pairs;
      for (Index a1 = 0; a1 < static_cast<Index>(names.size()); ++a1)
        for (Index b1 = a1 + 1; b1 < static_cast<Index>(names.size()); ++b1) pairs.push_back({a1, b1});
      if (pairs.empty()) continue;
      write_long_table(out / "contrasts.csv", long_rows(beta_contrasts(store, pairs), "contrast"));
    } else if (t == "diagnostics") {
      std::vector<std::string> warnings;
      const auto diag = diagnostics(store, &warnings);
      std::ofstream f(out / "diagnostics.csv");
      f << "name,ess,rhat\n";
      for (const auto& d : diag) f << d.name << ',' << format_double(d.ess) << ',' << format_double(d.rhat) << '\n';
      for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    } else {
      bool known = false;
      for (const auto& p : stored_parameters()) known = known || p == t;
      if (!known) throw ContractError("unknown summary target '" + t + "'");
      write_long_table(out / (t + ".csv"), long_rows(summarize(store, t), t));
    }
  }
  std::cout << "wrote summaries to " << out.string() << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string store;
  std::string truth;
  std::string out;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  const DrawStore store = read_draw_store(a.store);
  const SimTruth truth = read_truth(a.truth);
  const EvaluationMetrics m = evaluate_against_truth(store, truth);
  double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const fs::path timing = fs::path(a.store) / "timing.json";
  if (fs::exists(timing)) {
    std::ifstream in(timing);
    runtime = nlohmann::json::parse(in).at("runtime_seconds").get<double>();
  }
  nlohmann::json j;
  j["rmse_correlation"] = m.rmse_correlation;
  j["coverage_beta_95"] = std::isnan(m.coverage_beta_95) ? nlohmann::json(nullptr) : nlohmann::json(m.coverage_beta_95);
  j["n_draws"] = m.n_draws;
  j["runtime_seconds"] = runtime;
  const fs::path out = a.out.empty() ? fs::path(a.store) / "metrics.json" : fs::path(a.out);
  write_json(out, j);
  std::cout << j.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Covariate-varying sparse factor model for count tables"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Generate a simulated data set with its ground truth");
  s->add_option("scenario", sim.scenario, "sim1, sim2 or sim3")->check(CLI::IsMember({"sim1", "sim2", "sim3"}));
  s->add_option("--seed", sim.seed, "Random seed");
  s->add_option("--out", sim.out, "Output directory (default: $" + std::string(kOutputRootEnv) + "/<scenario>_seed<seed>)");
  s->add_option("--features", sim.features, "Number of features J");
  s->add_option("--subjects", sim.subjects, "Number of subjects S (sim2, sim3)");
  s->add_option("--per-condition", sim.per_condition, "Samples per condition (sim1)");
  s->add_option("--threshold", sim.threshold, "Partial correlations below this magnitude are zeroed (sim3)");

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Run the sampler and write a draw store");
  f->add_option("--config", fit.config, "Run configuration file")->required()->check(CLI::ExistingFile);
  f->add_option("--seed", fit.seed, "Random seed");
  f->add_option("--chains", fit.chains, "Number of chains");
  f->add_option("--threads", fit.threads, "Worker threads for chains");
  f->add_option("--iters", fit.iters, "Iterations per chain");
  f->add_option("--burn", fit.burn, "Burn-in iterations");
  f->add_option("--thin", fit.thin, "Thinning interval");
  f->add_option("--out", fit.out, "Draw-store directory");
  f->add_flag("--quiet", fit.quiet, "Suppress progress output");

  SummarizeArgs sum;
  auto* u = app.add_subcommand("summarize", "Posterior summaries and diagnostics of a draw store");
  u->add_option("store", sum.store, "Draw-store directory")->required()->check(CLI::ExistingDirectory);
  u->add_option("--out", sum.out, "Output directory (default: <store>/summary)");
  u->add_option("--targets", sum.targets,
                "Parameters (Q F sigma2 tau beta alpha r), correlation, covariance, contrasts, diagnostics");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Compare a draw store with simulation truth");
  e->add_option("store", ev.store, "Draw-store directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--truth", ev.truth, "Truth directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--out", ev.out, "metrics.json path (default: <store>/metrics.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitUser;
  }

  try {
    if (s->parsed()) return cmd_simulate(sim);
    if (f->parsed()) return cmd_fit(fit);
    if (u->parsed()) return cmd_summarize(sum);
    if (e->parsed()) return cmd_evaluate(ev);
  } catch (const NumericalError& err) {
    std::cerr << "numerical abort in block '" << err.block() << "' at iteration " << err.iteration() << ": "
              << err.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitUser;
  }
  return kExitUser;
}
