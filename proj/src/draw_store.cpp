#include "cvfm/draw_store.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <fstream>
#include <thread>

namespace cvfm {

namespace fs = std::filesystem;
using nlohmann::json;

DataLabels labels_from(const CountTable& counts, const CovariateDesign& design) {
  return {counts.sample_ids, counts.feature_names, design.covariance_names(), design.mean_names()};
}

Matrix DrawStore::x_cov() const {
  const auto& rows = manifest.at("x_cov");
  Matrix x(static_cast<Index>(rows.size()), P());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index p = 0; p < x.cols(); ++p) x(i, p) = rows.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(p));
  return x;
}

std::vector<std::string> DrawStore::covariance_names() const {
  return manifest.at("covariance_covariates").get<std::vector<std::string>>();
}
std::vector<std::string> DrawStore::mean_names() const {
  return manifest.at("mean_covariates").get<std::vector<std::string>>();
}
std::vector<std::string> DrawStore::feature_names() const {
  return manifest.at("features").get<std::vector<std::string>>();
}

Index DrawStore::total_draws() const {
  Index n = 0;
  for (const auto& c : chains) n += c.n_draws();
  return n;
}

json hyper_to_json(const HyperConfig& h) {
  return json{{"K", h.K},
              {"a_phi", h.a_phi},
              {"a_tau", h.a_tau},
              {"b_tau", h.b_tau},
              {"a_sigma", h.a_sigma},
              {"b_sigma", h.b_sigma},
              {"u2_beta", h.u2_beta},
              {"nu_alpha", h.nu_alpha},
              {"nu_r", h.nu_r},
              {"u2_alpha", h.u2_alpha},
              {"u_r2", h.u_r2},
              {"u2_xi_r", h.u2_xi_r},
              {"c_alpha", h.c_alpha},
              {"c_r", h.c_r},
              {"a_omega_alpha", h.a_omega_alpha},
              {"b_omega_alpha", h.b_omega_alpha},
              {"a_omega_r", h.a_omega_r},
              {"b_omega_r", h.b_omega_r},
              {"L_alpha", h.L_alpha},
              {"L_r", h.L_r}};
}

HyperConfig hyper_from_json(const json& j) {
  HyperConfig h;
  h.K = j.at("K");
  h.a_phi = j.at("a_phi");
  h.a_tau = j.at("a_tau");
  h.b_tau = j.at("b_tau");
  h.a_sigma = j.at("a_sigma");
  h.b_sigma = j.at("b_sigma");
  h.u2_beta = j.at("u2_beta");
  h.nu_alpha = j.at("nu_alpha");
  h.nu_r = j.at("nu_r");
  h.u2_alpha = j.at("u2_alpha");
  h.u_r2 = j.at("u_r2");
  h.u2_xi_r = j.at("u2_xi_r");
  h.c_alpha = j.at("c_alpha");
  h.c_r = j.at("c_r");
  h.a_omega_alpha = j.at("a_omega_alpha");
  h.b_omega_alpha = j.at("b_omega_alpha");
  h.a_omega_r = j.at("a_omega_r");
  h.b_omega_r = j.at("b_omega_r");
  h.L_alpha = j.at("L_alpha");
  h.L_r = j.at("L_r");
  return h;
}

json sampler_to_json(const SamplerConfig& c) {
  return json{{"iterations", c.n_iter},
              {"burn_in", c.n_burn},
              {"thin", c.thin},
              {"seed", c.seed},
              {"omega_step", c.omega_step},
              {"adapt",
               {{"enabled", c.adapt.enabled},
                {"initial_scale", c.adapt.initial_scale},
                {"start", c.adapt.start},
                {"target", c.adapt.target},
                {"epsilon", c.adapt.epsilon}}}};
}

std::vector<ChainResult> run_chains(const ModelData& data, const HyperConfig& hyper, const SamplerConfig& config,
                                    int n_chains, int threads) {
  require(n_chains >= 1, "at least one chain is required");
  std::vector<ChainResult> results(static_cast<std::size_t>(n_chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_chains));
  auto work = [&](int c) {
    try {
      SamplerConfig cc = config;
      cc.seed = substream_seed(config.seed, static_cast<std::uint64_t>(c));
      results[static_cast<std::size_t>(c)] = run_chain(data, hyper, cc);
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };
  const int workers = std::clamp(threads, 1, n_chains);
  if (workers == 1) {
    for (int c = 0; c < n_chains; ++c) work(c);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int c = next++; c < n_chains; c = next++) work(c);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

DrawStore make_store(const ModelData& data, const DataLabels& labels, const HyperConfig& hyper,
                     const SamplerConfig& config, std::vector<ChainResult> chains) {
  DrawStore store;
  json& m = store.manifest;
  m["format"] = "cvfm-draws-1";
  m["dims"] = {{"N", data.N()},
               {"J", data.J()},
               {"K", hyper.K},
               {"P", data.P()},
               {"P_mean", data.P_mean()},
               {"alpha_rows", data.alpha_rows()}};
  m["samples"] = labels.sample_ids;
  m["features"] = labels.feature_names;
  m["covariance_covariates"] = labels.covariance_names;
  m["mean_covariates"] = labels.mean_names;
  json xc = json::array();
  for (Index i = 0; i < data.N(); ++i) {
    std::vector<double> row(data.x_cov.cols());
    for (Index p = 0; p < data.P(); ++p) row[static_cast<std::size_t>(p)] = data.x_cov(i, p);
    xc.push_back(row);
  }
  m["x_cov"] = xc;
  m["subject"] = data.subject;
  m["hyper"] = hyper_to_json(hyper);
  m["sampler"] = sampler_to_json(config);
  m["parameters"] = stored_parameters();
  json cj = json::array();
  for (std::size_t c = 0; c < chains.size(); ++c) {
    cj.push_back({{"seed", substream_seed(config.seed, c)},
                  {"draws", chains[c].draws.n_draws()},
                  {"phi_acceptance", chains[c].summary.phi_acceptance},
                  {"f_acceptance", chains[c].summary.f_acceptance}});
    store.chains.push_back(std::move(chains[c].draws));
  }
  m["chains"] = cj;
  return store;
}

void write_draw_store(const fs::path& dir, const DrawStore& store) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw ParseError("cannot write " + (dir / "manifest.json").string());
    out << store.manifest.dump(2) << '\n';
  }
  for (std::size_t c = 0; c < store.chains.size(); ++c) {
    const ChainDraws& d = store.chains[c];
    const fs::path cdir = dir / ("chain_" + std::to_string(c + 1));
    fs::create_directories(cdir);
    for (const auto& [name, cols] : d.columns) {
      std::ofstream out(cdir / (name + ".csv"));
      if (!out) throw ParseError("cannot write " + (cdir / (name + ".csv")).string());
      out << "iter";
      for (const auto& col : cols) out << ',' << col;
      out << '\n';
      const auto& v = d.values.at(name);
      const std::size_t width = cols.size();
      for (std::size_t r = 0; r < d.iterations.size(); ++r) {
        out << d.iterations[r];
        for (std::size_t k = 0; k < width; ++k) out << ',' << format_double(v[r * width + k]);
        out << '\n';
      }
    }
  }
}

Matrix read_draw_table(const fs::path& path, std::vector<std::string>& columns, std::vector<long>& iterations) {
  const CsvTable t = read_csv(path);
  if (t.header.empty() || t.header.front() != "iter")
    throw ParseError(path.string() + ": first column must be 'iter'");
  columns.assign(t.header.begin() + 1, t.header.end());
  iterations.clear();
  Matrix m(static_cast<Index>(t.rows.size()), static_cast<Index>(columns.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t c = 0; c < t.header.size(); ++c) {
      const std::string& s = t.rows[r][c];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size())
        throw ParseError(path.string() + ": row " + std::to_string(r + 2) + ", column " + std::to_string(c + 1) +
                         ": expected a number, got '" + s + "'");
      if (c == 0)
        iterations.push_back(static_cast<long>(v));
      else
        m(static_cast<Index>(r), static_cast<Index>(c - 1)) = v;
    }
  }
  return m;
}

DrawStore read_draw_store(const fs::path& dir) {
  DrawStore store;
  const fs::path mpath = dir / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw ParseError("cannot open " + mpath.string());
  try {
    store.manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(mpath.string() + ": " + e.what());
  }
  const std::size_t n_chains = store.manifest.at("chains").size();
  for (std::size_t c = 0; c < n_chains; ++c) {
    const fs::path cdir = dir / ("chain_" + std::to_string(c + 1));
    ChainDraws d;
    bool first = true;
    for (const auto& name : stored_parameters()) {
      std::vector<std::string> cols;
      std::vector<long> iters;
      const Matrix m = read_draw_table(cdir / (name + ".csv"), cols, iters);
      if (first) {
        d.iterations = iters;
        first = false;
      } else if (iters != d.iterations) {
        throw ParseError(cdir.string() + ": table '" + name + "' has different iterations from the others");
      }
      std::vector<double> flat(static_cast<std::size_t>(m.size()));
      for (Index r = 0; r < m.rows(); ++r)
        for (Index k = 0; k < m.cols(); ++k) flat[static_cast<std::size_t>(r * m.cols() + k)] = m(r, k);
      d.columns[name] = std::move(cols);
      d.values[name] = std::move(flat);
    }
    store.chains.push_back(std::move(d));
  }
  return store;
}

}  // namespace cvfm
