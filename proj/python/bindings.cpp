#include "cvfm/calibrate.hpp"
#include "cvfm/config.hpp"
#include "cvfm/draw_store.hpp"
#include "cvfm/model.hpp"
#include "cvfm/posterior.hpp"
#include "cvfm/simgen.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace cvfm;

namespace {

py::dict simulate(const std::string& scenario, std::uint64_t seed, const fs::path& out, std::optional<Index> features,
                  std::optional<Index> subjects, std::optional<Index> per_condition, double threshold) {
  SimData sim;
  if (scenario == "sim1")
    sim = gen_sim1(seed, features.value_or(15), per_condition.value_or(5));
  else if (scenario == "sim2")
    sim = gen_sim2(seed, subjects.value_or(25), features.value_or(100));
  else if (scenario == "sim3")
    sim = gen_sim3(seed, subjects.value_or(25), features.value_or(100), threshold);
  else
    throw ContractError("unknown scenario '" + scenario + "' (expected sim1, sim2 or sim3)");
  write_simulation(out, sim);
  py::dict d;
  d["counts"] = Matrix(sim.counts.counts.cast<double>());
  d["design"] = sim.design.values;
  d["covariates"] = sim.design.names;
  d["correlations"] = sim.truth.correlations();
  return d;
}

long fit(const fs::path& config, const fs::path& out, std::optional<std::uint64_t> seed, std::optional<int> chains,
         std::optional<long> iters, std::optional<long> burn, std::optional<long> thin, std::optional<int> threads) {
  RunConfig cfg = parse_config_file(config);
  if (seed) cfg.sampler.seed = *seed;
  if (chains) cfg.chains = *chains;
  if (threads) cfg.threads = *threads;
  if (iters) cfg.sampler.n_iter = *iters;
  if (burn) cfg.sampler.n_burn = *burn;
  if (thin) cfg.sampler.thin = *thin;
  cfg.sampler.validate();
  require(cfg.chains >= 1 && cfg.threads >= 1, "chains and threads must be at least 1");
  const FitInputs in = load_fit_inputs(cfg);
  std::vector<ChainResult> results;
  {
    py::gil_scoped_release release;
    results = run_chains(in.data, in.hyper, cfg.sampler, cfg.chains, cfg.threads);
  }
  const DrawStore store = make_store(in.data, labels_from(in.counts, in.design), in.hyper, cfg.sampler, std::move(results));
  write_draw_store(out, store);
  return static_cast<long>(store.total_draws());
}

py::dict summary_dict(const PosteriorSummary& s) {
  py::dict d;
  d["names"] = s.names;
  d["probs"] = s.probs;
  d["quantiles"] = s.quantiles;
  d["mean"] = s.mean;
  d["excludes_zero"] = s.excludes_zero;
  return d;
}

py::dict summarize_store(const fs::path& store_dir, const std::string& quantity) {
  const DrawStore store = read_draw_store(store_dir);
  if (quantity == "correlation" || quantity == "covariance") {
    const Matrix x = store.x_cov();
    py::list medians, lower, upper;
    for (Index i = 0; i < x.rows(); ++i) {
      auto draws = sigma_draws(store, CovariateVector(x.row(i).transpose()));
      if (quantity == "correlation") draws = correlation_draws(draws);
      const MatrixSummary s = summarize_matrices(draws);
      medians.append(s.median);
      lower.append(s.lower);
      upper.append(s.upper);
    }
    py::dict d;
    d["points"] = x;
    d["median"] = medians;
    d["lower"] = lower;
    d["upper"] = upper;
    return d;
  }
  return summary_dict(summarize(store, quantity));
}

py::dict evaluate(const fs::path& store_dir, const fs::path& truth_dir) {
  const EvaluationMetrics m = evaluate_against_truth(read_draw_store(store_dir), read_truth(truth_dir));
  py::dict d;
  d["rmse_correlation"] = m.rmse_correlation;
  d["coverage_beta_95"] = m.coverage_beta_95;
  d["n_draws"] = m.n_draws;
  return d;
}

}  // namespace

PYBIND11_MODULE(_cvfm, m) {
  m.doc() = "Covariate-varying sparse factor model for count tables";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("simulate", &simulate, py::arg("scenario"), py::arg("seed"), py::arg("out"), py::arg("features") = py::none(),
        py::arg("subjects") = py::none(), py::arg("per_condition") = py::none(), py::arg("threshold") = 0.8,
        "Writes a simulated data set with its truth to `out`; returns counts, design and true correlations.");
  m.def("fit", &fit, py::arg("config"), py::arg("out"), py::arg("seed") = py::none(), py::arg("chains") = py::none(),
        py::arg("iters") = py::none(), py::arg("burn") = py::none(), py::arg("thin") = py::none(),
        py::arg("threads") = py::none(), "Runs the sampler from a config file and writes a draw store; returns the draw count.");
  m.def("summarize", &summarize_store, py::arg("store"), py::arg("quantity"),
        "Posterior summaries of a stored parameter, or of correlation/covariance at every sample's covariates.");
  m.def("evaluate", &evaluate, py::arg("store"), py::arg("truth"), "Correlation RMSE and contrast coverage against truth.");

  m.def(
      "sigma_at",
      [](const Matrix& q, const Matrix& f, double sigma2, const Vector& x) {
        return sigma_at(FactorLoadingParams{q, f, sigma2}, CovariateVector(x));
      },
      py::arg("q"), py::arg("f"), py::arg("sigma2"), py::arg("x"), "Sigma(x) = Lambda(x) Lambda(x)' + sigma2 I.");
  m.def(
      "rounded_pmf",
      [](const std::vector<std::int64_t>& y, const Vector& mean, double sd) { return rounded_pmf(y, mean, sd); },
      py::arg("y"), py::arg("mean"), py::arg("sd"), "Probability of counts y under independent rounded log-normals.");
  m.def(
      "choose_k_by_pca",
      [](const CountMatrix& counts, double target) {
        CountTable t;
        t.counts = counts;
        return choose_k_by_pca(t, target);
      },
      py::arg("counts"), py::arg("variance_target") = 0.95, "Factor count from PCA of clr-transformed counts.");
}
