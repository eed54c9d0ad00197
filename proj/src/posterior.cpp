#include "cvfm/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace cvfm {

double quantile(std::vector<double> values, double p) {
  require(!values.empty(), "quantile: no values");
  require(p >= 0.0 && p <= 1.0, "quantile: probability must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

PosteriorSummary summarize_draws(const Matrix& draws, const std::vector<std::string>& names,
                                 const std::vector<double>& probs) {
  require(static_cast<Index>(names.size()) == draws.cols(), "summarize: one name per column is required");
  require(draws.rows() >= 1, "summarize: no draws");
  require(!probs.empty(), "summarize: no probabilities");
  PosteriorSummary s;
  s.names = names;
  s.probs = probs;
  s.quantiles.resize(draws.cols(), static_cast<Index>(probs.size()));
  s.mean = draws.colwise().mean().transpose();
  s.excludes_zero.resize(names.size());
  std::vector<double> col(static_cast<std::size_t>(draws.rows()));
  for (Index c = 0; c < draws.cols(); ++c) {
    for (Index r = 0; r < draws.rows(); ++r) col[static_cast<std::size_t>(r)] = draws(r, c);
    std::sort(col.begin(), col.end());
    for (std::size_t k = 0; k < probs.size(); ++k) s.quantiles(c, static_cast<Index>(k)) = quantile(col, probs[k]);
    const double lo = s.quantiles(c, 0);
    const double hi = s.quantiles(c, static_cast<Index>(probs.size()) - 1);
    s.excludes_zero[static_cast<std::size_t>(c)] = lo > 0.0 || hi < 0.0;
  }
  return s;
}

Matrix pooled_draws(const DrawStore& store, const std::string& name) {
  require(!store.chains.empty(), "draw store has no chains");
  std::vector<Matrix> parts;
  Index rows = 0;
  for (const auto& c : store.chains) {
    parts.push_back(c.table(name));
    rows += parts.back().rows();
  }
  Matrix out(rows, parts.front().cols());
  Index r = 0;
  for (const auto& p : parts) {
    require(p.cols() == out.cols(), "chains disagree on the width of '" + name + "'");
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

PosteriorSummary summarize(const DrawStore& store, const std::string& quantity, const std::vector<double>& probs) {
  const Matrix d = pooled_draws(store, quantity);
  return summarize_draws(d, store.chains.front().columns.at(quantity), probs);
}

namespace {

struct PooledLoadings {
  Matrix q, f, sigma2;
};

PooledLoadings pooled_loadings(const DrawStore& store) {
  return {pooled_draws(store, "Q"), pooled_draws(store, "F"), pooled_draws(store, "sigma2")};
}

FactorLoadingParams params_at(const PooledLoadings& p, Index d, Index J, Index K, Index P) {
  FactorLoadingParams out;
  out.q.resize(J, K);
  out.f.resize(K, P);
  for (Index j = 0; j < J; ++j)
    for (Index k = 0; k < K; ++k) out.q(j, k) = p.q(d, j * K + k);
  for (Index k = 0; k < K; ++k)
    for (Index c = 0; c < P; ++c) out.f(k, c) = p.f(d, k * P + c);
  out.sigma2 = p.sigma2(d, 0);
  return out;
}

}  // namespace

FactorLoadingParams draw_params(const DrawStore& store, Index d) {
  const PooledLoadings p = pooled_loadings(store);
  require(d >= 0 && d < p.q.rows(), "draw index out of range");
  return params_at(p, d, store.J(), store.K(), store.P());
}

std::vector<Matrix> sigma_draws(const DrawStore& store, const CovariateVector& x) {
  require(x.size() == store.P(), "covariate vector has the wrong length for this store");
  const PooledLoadings p = pooled_loadings(store);
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(p.q.rows()));
  for (Index d = 0; d < p.q.rows(); ++d) out.push_back(sigma_at(params_at(p, d, store.J(), store.K(), store.P()), x));
  return out;
}

std::vector<Matrix> correlation_draws(const std::vector<Matrix>& sigma) {
  std::vector<Matrix> out;
  out.reserve(sigma.size());
  for (const auto& s : sigma) out.push_back(correlation_from_covariance(s));
  return out;
}

MatrixSummary summarize_matrices(const std::vector<Matrix>& draws) {
  require(!draws.empty(), "summarize_matrices: no draws");
  const Index R = draws.front().rows();
  const Index C = draws.front().cols();
  MatrixSummary s{Matrix(R, C), Matrix(R, C), Matrix(R, C), Matrix(R, C)};
  std::vector<double> v(draws.size());
  for (Index r = 0; r < R; ++r)
    for (Index c = 0; c < C; ++c) {
      double sum = 0.0;
      for (std::size_t d = 0; d < draws.size(); ++d) {
        v[d] = draws[d](r, c);
        sum += v[d];
      }
      std::sort(v.begin(), v.end());
      s.median(r, c) = quantile(v, 0.5);
      s.lower(r, c) = quantile(v, 0.025);
      s.upper(r, c) = quantile(v, 0.975);
      s.mean(r, c) = sum / static_cast<double>(draws.size());
    }
  return s;
}

double rmse_correlations(const std::vector<Matrix>& estimate, const std::vector<Matrix>& truth) {
  require(estimate.size() == truth.size() && !truth.empty(), "rmse_correlations: point counts differ");
  double ss = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < truth.size(); ++p) {
    require(estimate[p].rows() == truth[p].rows() && estimate[p].cols() == truth[p].cols(),
            "rmse_correlations: matrix shapes differ");
    for (Index j = 0; j < truth[p].rows(); ++j)
      for (Index k = j + 1; k < truth[p].cols(); ++k) {
        const double e = estimate[p](j, k) - truth[p](j, k);
        ss += e * e;
        ++n;
      }
  }
  require(n > 0, "rmse_correlations: no off-diagonal pairs");
  return std::sqrt(ss / static_cast<double>(n));
}

PosteriorSummary beta_contrasts(const DrawStore& store, const std::vector<Contrast>& contrasts,
                                const std::vector<double>& probs) {
  const Matrix b = pooled_draws(store, "beta");
  const Index J = store.J();
  const Index Pm = store.P_mean();
  const auto features = store.feature_names();
  const auto cols = store.mean_names();
  Matrix d(b.rows(), J * static_cast<Index>(contrasts.size()));
  std::vector<std::string> names;
  Index out = 0;
  for (const auto& c : contrasts) {
    require(c.first >= 0 && c.first < Pm && c.second >= -1 && c.second < Pm, "contrast column out of range");
    for (Index j = 0; j < J; ++j) {
      std::string name = features[static_cast<std::size_t>(j)] + ":" + cols[static_cast<std::size_t>(c.first)];
      if (c.second >= 0) {
        d.col(out++) = b.col(j * Pm + c.first) - b.col(j * Pm + c.second);
        name += "-" + cols[static_cast<std::size_t>(c.second)];
      } else {
        d.col(out++) = b.col(j * Pm + c.first);
      }
      names.push_back(std::move(name));
    }
  }
  return summarize_draws(d, names, probs);
}

namespace {

std::vector<Vector> split_halves(const std::vector<Vector>& chains) {
  std::vector<Vector> out;
  for (const auto& c : chains) {
    const Index h = c.size() / 2;
    out.push_back(c.head(h));
    out.push_back(c.segment(c.size() - h, h));
  }
  return out;
}

double variance(const Vector& v) {
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace

double split_rhat(const std::vector<Vector>& chains) {
  require(!chains.empty(), "split_rhat: no chains");
  Index n_min = chains.front().size();
  for (const auto& c : chains) n_min = std::min(n_min, c.size());
  if (n_min < 4) return std::numeric_limits<double>::quiet_NaN();
  std::vector<Vector> trimmed;
  for (const auto& c : chains) trimmed.push_back(c.head(n_min));
  const auto halves = split_halves(trimmed);
  const double m = static_cast<double>(halves.size());
  const double n = static_cast<double>(halves.front().size());
  Vector means(halves.size());
  double w = 0.0;
  for (std::size_t k = 0; k < halves.size(); ++k) {
    means[static_cast<Index>(k)] = halves[k].mean();
    w += variance(halves[k]);
  }
  w /= m;
  const double b = n * variance(means);
  if (!(w > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

double effective_sample_size(const std::vector<Vector>& chains) {
  require(!chains.empty(), "effective_sample_size: no chains");
  Index n = chains.front().size();
  for (const auto& c : chains) n = std::min(n, c.size());
  const Index m = static_cast<Index>(chains.size());
  if (n < 4) return 0.0;

  // Per-chain autocovariances (biased estimator, divisor n).
  Vector means(m), vars(m);
  std::vector<Vector> acov(static_cast<std::size_t>(m));
  for (Index c = 0; c < m; ++c) {
    const Vector x = chains[static_cast<std::size_t>(c)].head(n);
    means[c] = x.mean();
    const Vector z = x.array() - means[c];
    Vector a(n);
    for (Index t = 0; t < n; ++t) a[t] = z.head(n - t).dot(z.tail(n - t)) / static_cast<double>(n);
    acov[static_cast<std::size_t>(c)] = a;
    vars[c] = a[0] * static_cast<double>(n) / static_cast<double>(n - 1);
  }
  const double w = vars.mean();
  if (!(w > 0.0)) return 0.0;
  const double nd = static_cast<double>(n);
  const double b_over_n = m > 1 ? variance(means) : 0.0;
  const double var_plus = (nd - 1.0) / nd * w + b_over_n;

  auto rho = [&](Index t) {
    double mean_acov = 0.0;
    for (const auto& a : acov) mean_acov += a[t];
    mean_acov /= static_cast<double>(m);
    return 1.0 - (w - mean_acov) / var_plus;
  };

  // Geyer: sum pairs Gamma_k = rho_{2k} + rho_{2k+1} while positive, enforced
  // monotone non-increasing.
  double tau = -1.0;
  double prev = std::numeric_limits<double>::infinity();
  for (Index k = 0; 2 * k + 1 < n; ++k) {
    double g = rho(2 * k) + rho(2 * k + 1);
    if (!(g > 0.0)) break;
    g = std::min(g, prev);
    prev = g;
    tau += 2.0 * g;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(m) * nd));
  return static_cast<double>(m) * nd / tau;
}

std::vector<Diagnostic> diagnostics(const DrawStore& store, std::vector<std::string>* warnings) {
  std::vector<Diagnostic> out;
  for (const auto& name : stored_parameters()) {
    std::vector<Matrix> tables;
    for (const auto& c : store.chains) tables.push_back(c.table(name));
    const auto& cols = store.chains.front().columns.at(name);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      std::vector<Vector> per_chain;
      bool constant = true;
      for (const auto& t : tables) {
        per_chain.push_back(t.col(static_cast<Index>(k)));
        if (t.rows() > 0 && (t.col(static_cast<Index>(k)).array() != t(0, static_cast<Index>(k))).any())
          constant = false;
      }
      if (constant && tables.size() > 1)
        for (const auto& t : tables)
          if (t.rows() > 0 && t(0, static_cast<Index>(k)) != tables.front()(0, static_cast<Index>(k))) constant = false;
      Diagnostic d{cols[k], 0.0, std::numeric_limits<double>::quiet_NaN()};
      if (constant) {
        if (warnings) warnings->push_back(cols[k] + ": draws are constant; effective sample size set to 0");
      } else {
        d.ess = effective_sample_size(per_chain);
        d.rhat = split_rhat(per_chain);
      }
      out.push_back(d);
    }
  }
  return out;
}

std::vector<Matrix> correlation_medians(const DrawStore& store, const Matrix& points) {
  std::vector<Matrix> out;
  for (Index p = 0; p < points.rows(); ++p) {
    const auto rho = correlation_draws(sigma_draws(store, CovariateVector(points.row(p).transpose())));
    out.push_back(summarize_matrices(rho).median);
  }
  return out;
}

EvaluationMetrics evaluate_against_truth(const DrawStore& store, const SimTruth& truth) {
  const auto cov_names = store.covariance_names();
  require(cov_names == truth.covariance_names,
          "evaluation points use different covariance covariates from the fitted model");
  require(truth.beta.rows() == store.J(), "truth and fit have different numbers of features");
  EvaluationMetrics m;
  m.n_draws = store.total_draws();
  m.rmse_correlation = rmse_correlations(correlation_medians(store, truth.eval_points), truth.correlations());

  if (truth.contrasts.empty()) {
    m.coverage_beta_95 = std::numeric_limits<double>::quiet_NaN();
    return m;
  }
  const auto mean_names = store.mean_names();
  auto column = [&](const std::string& name) -> Index {
    if (name.empty()) return -1;
    for (std::size_t k = 0; k < mean_names.size(); ++k)
      if (mean_names[k] == name) return static_cast<Index>(k);
    throw ContractError("truth contrast uses covariate '" + name + "', which is not in the mean design");
  };
  const Matrix b = pooled_draws(store, "beta");
  const Index Pm = store.P_mean();
  std::size_t covered = 0;
  std::vector<double> v(static_cast<std::size_t>(b.rows()));
  for (const auto& c : truth.contrasts) {
    const Index a = column(c.first);
    const Index z = column(c.second);
    require(a >= 0, "truth contrast has no first covariate");
    for (Index d = 0; d < b.rows(); ++d)
      v[static_cast<std::size_t>(d)] = b(d, c.feature * Pm + a) - (z >= 0 ? b(d, c.feature * Pm + z) : 0.0);
    std::sort(v.begin(), v.end());
    if (quantile(v, 0.025) <= c.value && c.value <= quantile(v, 0.975)) ++covered;
  }
  m.coverage_beta_95 = static_cast<double>(covered) / static_cast<double>(truth.contrasts.size());
  return m;
}

void write_long_table(const std::filesystem::path& path, const std::vector<LongRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "quantity,index,level,q025,median,q975\n";
  for (const auto& r : rows)
    out << r.quantity << ',' << r.index << ',' << r.level << ',' << format_double(r.q025) << ','
        << format_double(r.median) << ',' << format_double(r.q975) << '\n';
}

std::vector<LongRow> long_rows(const PosteriorSummary& s, const std::string& quantity, const std::string& level) {
  require(s.probs.size() == 3, "long table needs three probabilities");
  std::vector<LongRow> rows;
  for (Index c = 0; c < s.size(); ++c)
    rows.push_back({quantity, s.names[static_cast<std::size_t>(c)], level, s.quantiles(c, 0), s.quantiles(c, 1),
                    s.quantiles(c, 2)});
  return rows;
}

}  // namespace cvfm
