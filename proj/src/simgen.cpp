#include "cvfm/simgen.hpp"

#include "cvfm/model.hpp"

#include "json.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

namespace cvfm {

namespace fs = std::filesystem;

namespace {

constexpr double kMaxLatent = 43.0;  // exp(43) < 2^63
constexpr double kPsdTolerance = 1e-10;  // relative to the largest eigenvalue

std::int64_t floor_count(double latent) {
  return static_cast<std::int64_t>(std::floor(std::exp(std::min(latent, kMaxLatent))));
}

std::string numbered(const std::string& prefix, Index i, Index n) {
  const std::string num = std::to_string(i + 1);
  const std::size_t width = std::to_string(n).size();
  return prefix + std::string(width - num.size(), '0') + num;
}

std::vector<std::string> feature_names(Index J) {
  std::vector<std::string> out;
  for (Index j = 0; j < J; ++j) out.push_back(numbered("otu", j, J));
  return out;
}

std::vector<std::string> sample_names(Index N) {
  std::vector<std::string> out;
  for (Index i = 0; i < N; ++i) out.push_back(numbered("s", i, N));
  return out;
}

// Zero with probability 0.5, otherwise a standard normal pushed away from zero.
double sparse_shifted(Rng& rng, double shift) {
  const bool zero = rng.uniform() < 0.5;
  const double v = shifted_normal(rng, shift);
  return zero ? 0.0 : v;
}

double runif(Rng& rng, double a, double b) { return a + (b - a) * rng.uniform(); }

// Counts and latents from Y* = mu + noise(i), noise supplied per sample.
template <class Noise>
void draw_counts(SimData& sim, Noise&& noise) {
  const Index N = sim.truth.mu.rows();
  const Index J = sim.truth.mu.cols();
  sim.truth.latent.resize(N, J);
  sim.counts.counts.resize(N, J);
  for (Index i = 0; i < N; ++i) {
    const Vector e = noise(i);
    for (Index j = 0; j < J; ++j) {
      const double v = std::min(sim.truth.mu(i, j) + e[j], kMaxLatent);
      sim.truth.latent(i, j) = v;
      sim.counts.counts(i, j) = floor_count(v);
    }
  }
}

// Shared layout of the repeated-measures scenarios: subject s owns samples
// s (binary level 1) and s + S (level 0); a continuous covariate per subject.
struct RepeatedLayout {
  Index S, N;
  Vector xd, xc;
  std::vector<int> subject;
};

RepeatedLayout repeated_layout(Rng& rng, Index S) {
  RepeatedLayout l{S, 2 * S, Vector(2 * S), Vector(2 * S), std::vector<int>(static_cast<std::size_t>(2 * S))};
  Vector subject_xc(S);
  for (Index s = 0; s < S; ++s) subject_xc[s] = rng.normal();
  for (Index i = 0; i < l.N; ++i) {
    const Index s = i < S ? i : i - S;
    l.subject[static_cast<std::size_t>(i)] = static_cast<int>(s);
    l.xd[i] = i < S ? 1.0 : 0.0;
    l.xc[i] = subject_xc[s];
  }
  return l;
}

// Subject-indexed baselines from three per-feature atoms (zero, small, large
// abundance) with Dir(30, 40, 30) weights; then size factors and beta.
void repeated_mean(SimData& sim, Rng& rng, const RepeatedLayout& l, Index J) {
  SimTruth& t = sim.truth;
  t.alpha.resize(l.S, J);
  const double atom_sd = std::sqrt(0.5);
  const double conc[3] = {30.0, 40.0, 30.0};
  for (Index j = 0; j < J; ++j) {
    const double xi[3] = {-5.0, 2.5 + atom_sd * rng.normal(), 5.0 + atom_sd * rng.normal()};
    double w[3], total = 0.0;
    for (int a = 0; a < 3; ++a) total += (w[a] = rgamma(rng, conc[a], 1.0));
    for (Index s = 0; s < l.S; ++s) {
      double u = rng.uniform() * total;
      int pick = 0;
      while (pick < 2 && u >= w[pick]) u -= w[pick++];
      t.alpha(s, j) = xi[pick];
    }
  }
  t.r.resize(l.N);
  for (Index i = 0; i < l.N; ++i) t.r[i] = runif(rng, 0.0, 2.0);
  const Index Pm = static_cast<Index>(sim.design.mean_names().size());
  t.beta.resize(J, Pm);
  for (Index j = 0; j < J; ++j)
    for (Index p = 0; p < Pm; ++p) t.beta(j, p) = sparse_shifted(rng, 1.0);
  const Matrix xm = sim.design.mean_design();
  t.mu.resize(l.N, J);
  for (Index i = 0; i < l.N; ++i)
    t.mu.row(i) = t.alpha.row(l.subject[static_cast<std::size_t>(i)]).array() + t.r[i] +
                  (xm.row(i) * t.beta.transpose()).array();
  for (Index j = 0; j < J; ++j)
    for (std::size_t p = 0; p < static_cast<std::size_t>(Pm); ++p)
      t.contrasts.push_back({j, sim.design.mean_names()[p], "", t.beta(j, static_cast<Index>(p))});
}

void repeated_tables(SimData& sim, const RepeatedLayout& l, Index J) {
  sim.subjects = true;
  sim.counts.sample_ids = sample_names(l.N);
  sim.counts.feature_names = feature_names(J);
  sim.counts.subjects.clear();
  for (Index i = 0; i < l.N; ++i)
    sim.counts.subjects.push_back(numbered("subj", l.subject[static_cast<std::size_t>(i)], l.S));
  sim.design.sample_ids = sim.counts.sample_ids;
}

}  // namespace

double shifted_normal(Rng& rng, double shift) {
  const double v = rng.normal();
  return v + (v >= 0.0 ? shift : -shift);
}

std::vector<Matrix> SimTruth::correlations() const {
  std::vector<Matrix> out;
  for (const auto& s : sigma) out.push_back(correlation_from_covariance(s));
  return out;
}

SimData gen_sim1(std::uint64_t seed, Index J, Index per_condition) {
  require(J >= 2 && per_condition >= 1, "gen_sim1: needs J >= 2 and at least one sample per condition");
  Rng truth_rng(substream_seed(seed, 1));
  Rng noise_rng(substream_seed(seed, 2));
  const Index N = 6 * per_condition;
  SimData sim;
  SimTruth& t = sim.truth;
  t.scenario = "sim1";
  t.seed = seed;

  // Design: one-hot binary (b0, b1) and ternary (t0, t1, t2) factors. The
  // covariance uses the intercept plus b1, t1, t2; the mean uses all five.
  CovariateDesign& d = sim.design;
  d.sample_ids = sample_names(N);
  d.names = {"b0", "b1", "t0", "t1", "t2"};
  d.roles = {CovariateRole::kMean, CovariateRole::kBoth, CovariateRole::kMean, CovariateRole::kBoth,
             CovariateRole::kBoth};
  d.values = Matrix::Zero(N, 5);
  for (Index i = 0; i < N; ++i) {
    const Index cond = i / per_condition;
    const Index b = cond / 3;
    const Index tl = cond % 3;
    d.values(i, b) = 1.0;
    d.values(i, 2 + tl) = 1.0;
  }
  sim.counts.sample_ids = d.sample_ids;
  sim.counts.feature_names = feature_names(J);

  const Index K = 2;
  Matrix q(J, K);
  for (Index j = 0; j < J; ++j)
    for (Index k = 0; k < K; ++k) q(j, k) = sparse_shifted(truth_rng, 1.0);
  Matrix f(K, 4);
  for (Index k = 0; k < K; ++k)
    for (Index p = 0; p < 4; ++p) f(k, p) = runif(truth_rng, -1.0, 1.0);
  f(0, 2) = -f(0, 0);  // factor 1 vanishes at (1, 0, 1, 0)
  f(1, 1) = -f(1, 0);  // factor 2 vanishes at (1, 1, 0, 0)
  const double sigma2 = 0.25;

  t.r.resize(N);
  for (Index i = 0; i < N; ++i) t.r[i] = runif(truth_rng, 0.0, 2.0);
  t.alpha.resize(1, J);
  for (Index j = 0; j < J; ++j)
    t.alpha(0, j) = truth_rng.uniform() < 0.3 ? -1.0 + truth_rng.normal() : 5.0 + 0.5 * truth_rng.normal();
  t.beta.resize(J, 5);
  for (Index j = 0; j < J; ++j)
    for (Index p = 0; p < 5; ++p) t.beta(j, p) = sparse_shifted(truth_rng, 1.0);

  t.covariance_names = d.covariance_names();
  t.mean_names = d.mean_names();
  const Matrix xcov = d.covariance_design();
  const Matrix xm = d.mean_design();
  t.eval_points = xcov;
  const FactorLoadingParams params{q, f, sigma2};
  for (Index i = 0; i < N; ++i) t.sigma.push_back(sigma_at(params, CovariateVector(xcov.row(i).transpose())));
  t.mu.resize(N, J);
  for (Index i = 0; i < N; ++i) t.mu.row(i) = (xm.row(i) * t.beta.transpose()).array() + t.alpha.row(0).array() + t.r[i];

  const std::pair<Index, Index> pairs[] = {{0, 1}, {2, 3}, {2, 4}, {3, 4}};
  for (const auto& [a, b] : pairs)
    for (Index j = 0; j < J; ++j)
      t.contrasts.push_back({j, d.names[static_cast<std::size_t>(a)], d.names[static_cast<std::size_t>(b)],
                             t.beta(j, a) - t.beta(j, b)});

  const double sd = std::sqrt(sigma2);
  draw_counts(sim, [&](Index i) {
    const Matrix lam = loading_at(params, CovariateVector(xcov.row(i).transpose()));
    Vector eta(K);
    for (Index k = 0; k < K; ++k) eta[k] = noise_rng.normal();
    Vector e = lam * eta;
    for (Index j = 0; j < J; ++j) e[j] += sd * noise_rng.normal();
    return e;
  });
  return sim;
}

SimData gen_sim2(std::uint64_t seed, Index S, Index J) {
  require(S >= 1 && J >= 4, "gen_sim2: needs S >= 1 and J >= 4");
  Rng truth_rng(substream_seed(seed, 1));
  Rng noise_rng(substream_seed(seed, 2));
  SimData sim;
  SimTruth& t = sim.truth;
  t.scenario = "sim2";
  t.seed = seed;
  const RepeatedLayout l = repeated_layout(truth_rng, S);
  CovariateDesign& d = sim.design;
  d.names = {"xd", "xc"};
  d.roles = {CovariateRole::kBoth, CovariateRole::kBoth};
  d.values.resize(l.N, 2);
  d.values.col(0) = l.xd;
  d.values.col(1) = l.xc;
  repeated_tables(sim, l, J);
  t.covariance_names = d.covariance_names();
  t.mean_names = d.mean_names();

  // Features [0, J/4) and [J/2, J) load on the common factors; [J/2, J) also
  // on the covariate-dependent ones; [J/4, J/2) are independent.
  const Index quarter = J / 4;
  const Index half = J / 2;
  const Index K0 = 2, K1 = 3;
  Matrix lam0 = Matrix::Zero(J, K0);
  for (Index j = 0; j < J; ++j)
    for (Index k = 0; k < K0; ++k) {
      const double v = shifted_normal(truth_rng, 0.5);
      if (j < quarter || j >= half) lam0(j, k) = v;
    }
  Matrix q = Matrix::Zero(J, K1);
  for (Index j = 0; j < J; ++j)
    for (Index k = 0; k < K1; ++k) {
      const double v = shifted_normal(truth_rng, 0.5);
      if (j >= half) q(j, k) = v;
    }
  Matrix f(K1, 3);
  for (Index k = 0; k < K1; ++k)
    for (Index p = 0; p < 3; ++p) f(k, p) = runif(truth_rng, -1.0, 1.0);
  const double sigma2 = 0.25;
  repeated_mean(sim, truth_rng, l, J);

  const Matrix xcov = d.covariance_design();
  t.eval_points = xcov;
  const FactorLoadingParams params{q, f, sigma2};
  const Matrix base = lam0 * lam0.transpose();
  for (Index i = 0; i < l.N; ++i) t.sigma.push_back(base + sigma_at(params, CovariateVector(xcov.row(i).transpose())));

  const double sd = std::sqrt(sigma2);
  draw_counts(sim, [&](Index i) {
    const Matrix lam = loading_at(params, CovariateVector(xcov.row(i).transpose()));
    Vector e0(K0), e1(K1);
    for (Index k = 0; k < K0; ++k) e0[k] = noise_rng.normal();
    for (Index k = 0; k < K1; ++k) e1[k] = noise_rng.normal();
    Vector e = lam0 * e0 + lam * e1;
    for (Index j = 0; j < J; ++j) e[j] += sd * noise_rng.normal();
    return e;
  });
  return sim;
}

Matrix vine_correlation(const Matrix& partial) {
  const Index J = partial.rows();
  require(partial.cols() == J, "vine_correlation: partial correlations must be square");
  Matrix rho = Matrix::Identity(J, J);
  for (Index k = 0; k + 1 < J; ++k)
    for (Index i = k + 1; i < J; ++i) {
      require(std::abs(partial(k, i)) < 1.0, "vine_correlation: partial correlations must lie in (-1, 1)");
      double p = partial(k, i);
      for (Index l = k - 1; l >= 0; --l)
        p = p * std::sqrt((1.0 - partial(l, i) * partial(l, i)) * (1.0 - partial(l, k) * partial(l, k))) +
            partial(l, i) * partial(l, k);
      rho(k, i) = rho(i, k) = p;
    }
  return rho;
}

Matrix random_vine_correlation(Rng& rng, Index J, double threshold) {
  Matrix partial = Matrix::Zero(J, J);
  for (Index k = 0; k + 1 < J; ++k)
    for (Index i = k + 1; i < J; ++i) {
      const double p = 2.0 * rbeta(rng, 1.0, 1.0) - 1.0;
      partial(k, i) = std::abs(p) < threshold ? 0.0 : p;
    }
  return vine_correlation(partial);
}

SimData gen_sim3(std::uint64_t seed, Index S, Index J, double partial_threshold) {
  require(S >= 1 && J >= 2, "gen_sim3: needs S >= 1 and J >= 2");
  require(partial_threshold >= 0.0 && partial_threshold <= 1.0, "gen_sim3: threshold must lie in [0, 1]");
  Rng truth_rng(substream_seed(seed, 1));
  Rng noise_rng(substream_seed(seed, 2));
  SimData sim;
  SimTruth& t = sim.truth;
  t.scenario = "sim3";
  t.seed = seed;
  const RepeatedLayout l = repeated_layout(truth_rng, S);
  CovariateDesign& d = sim.design;
  d.names = {"xd", "xc"};
  d.roles = {CovariateRole::kBoth, CovariateRole::kMean};
  d.values.resize(l.N, 2);
  d.values.col(0) = l.xd;
  d.values.col(1) = l.xc;
  repeated_tables(sim, l, J);
  t.covariance_names = d.covariance_names();
  t.mean_names = d.mean_names();

  // One covariance per level of xd. With many large partial correlations the
  // vine determinant prod(1 - p^2) underflows, so the check is positive
  // semi-definiteness up to round-off and noise uses a clipped eigen square
  // root. A failed check regenerates from the next substream.
  std::vector<Matrix> root;
  std::uint64_t stream = 100;
  t.eval_points.resize(2, 2);
  for (int level = 0; level < 2; ++level) {
    for (;;) {
      Rng rng(substream_seed(seed, stream++));
      const Matrix rho = random_vine_correlation(rng, J, partial_threshold);
      Vector s2(J);
      for (Index j = 0; j < J; ++j) s2[j] = runif(rng, 1.0, 1.5);
      Matrix sigma = s2.asDiagonal() * rho * s2.asDiagonal();
      sigma = 0.5 * (sigma + sigma.transpose()).eval();
      const Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma);
      const Vector ev = eig.eigenvalues();
      if (eig.info() == Eigen::Success && ev.minCoeff() >= -kPsdTolerance * ev.cwiseAbs().maxCoeff()) {
        t.sigma.push_back(sigma);
        root.push_back(eig.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal());
        break;
      }
    }
    t.eval_points(level, 0) = 1.0;
    t.eval_points(level, 1) = static_cast<double>(level);
  }
  repeated_mean(sim, truth_rng, l, J);

  draw_counts(sim, [&](Index i) {
    Vector z(J);
    for (Index j = 0; j < J; ++j) z[j] = noise_rng.normal();
    const int level = l.xd[i] > 0.5 ? 1 : 0;
    return Vector(root[static_cast<std::size_t>(level)] * z);
  });
  return sim;
}

// Files ----------------------------------------------------------------------

namespace {

void write_named_rows(const fs::path& path, const std::string& key, const std::vector<std::string>& row_labels,
                      const std::vector<std::string>& header, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << key;
  for (const auto& h : header) out << ',' << h;
  out << '\n';
  for (Index r = 0; r < m.rows(); ++r) {
    out << row_labels[static_cast<std::size_t>(r)];
    for (Index c = 0; c < m.cols(); ++c) out << ',' << format_double(m(r, c));
    out << '\n';
  }
}

double to_double(const std::string& s, const fs::path& path) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError(path.string() + ": bad number '" + s + "'");
  return v;
}

Matrix numeric_block(const CsvTable& t, const fs::path& path) {
  Matrix m(static_cast<Index>(t.rows.size()), static_cast<Index>(t.header.size()) - 1);
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t c = 1; c < t.header.size(); ++c)
      m(static_cast<Index>(r), static_cast<Index>(c - 1)) = to_double(t.rows[r][c], path);
  return m;
}

}  // namespace

void write_simulation(const fs::path& dir, const SimData& sim) {
  const SimTruth& t = sim.truth;
  fs::create_directories(dir / "truth");
  write_counts_csv(dir / "counts.csv", sim.counts);
  write_design_csv(dir / "design.csv", sim.design);

  {
    std::ofstream cfg(dir / "fit.cfg");
    cfg << "# generated for scenario " << t.scenario << "\n";
    cfg << "counts = counts.csv\n";
    cfg << "design = design.csv\n";
    if (sim.subjects) cfg << "subject_column = subject\n";
    for (std::size_t c = 0; c < sim.design.names.size(); ++c)
      cfg << "role." << sim.design.names[c] << " = " << to_string(sim.design.roles[c]) << "\n";
    if (t.scenario == "sim1") cfg << "K = 8\n";
    if (t.scenario == "sim2") cfg << "K = 7\n";
  }
  {
    nlohmann::json m;
    m["scenario"] = t.scenario;
    m["seed"] = t.seed;
    m["N"] = sim.counts.n_samples();
    m["J"] = sim.counts.n_features();
    m["covariance_covariates"] = t.covariance_names;
    m["mean_covariates"] = t.mean_names;
    m["files"] = {"counts.csv", "design.csv", "fit.cfg", "truth/"};
    std::ofstream out(dir / "manifest.json");
    out << m.dump(2) << '\n';
  }

  const fs::path td = dir / "truth";
  std::vector<std::string> points;
  for (Index p = 0; p < t.eval_points.rows(); ++p) points.push_back(std::to_string(p + 1));
  write_named_rows(td / "eval_points.csv", "point", points, t.covariance_names, t.eval_points);
  {
    std::ofstream out(td / "sigma.csv");
    out << "point,j,k,value\n";
    for (std::size_t p = 0; p < t.sigma.size(); ++p)
      for (Index j = 0; j < t.sigma[p].rows(); ++j)
        for (Index k = j; k < t.sigma[p].cols(); ++k)
          out << p + 1 << ',' << j + 1 << ',' << k + 1 << ',' << format_double(t.sigma[p](j, k)) << '\n';
  }
  const auto& features = sim.counts.feature_names;
  write_named_rows(td / "beta.csv", "feature", features, t.mean_names, t.beta);
  std::vector<std::string> alpha_rows;
  for (Index r = 0; r < t.alpha.rows(); ++r)
    alpha_rows.push_back(sim.subjects ? numbered("subj", r, t.alpha.rows()) : std::string("all"));
  write_named_rows(td / "alpha.csv", "row", alpha_rows, features, t.alpha);
  write_named_rows(td / "r.csv", "sample", sim.counts.sample_ids, {"r"}, t.r);
  write_named_rows(td / "mu.csv", "sample", sim.counts.sample_ids, features, t.mu);
  write_named_rows(td / "latent.csv", "sample", sim.counts.sample_ids, features, t.latent);
  {
    std::ofstream out(td / "contrasts.csv");
    out << "feature,first,second,value\n";
    for (const auto& c : t.contrasts)
      out << features[static_cast<std::size_t>(c.feature)] << ',' << c.first << ',' << c.second << ','
          << format_double(c.value) << '\n';
  }
}

SimTruth read_truth(const fs::path& td) {
  SimTruth t;
  const fs::path ep = td / "eval_points.csv";
  const CsvTable e = read_csv(ep);
  t.covariance_names.assign(e.header.begin() + 1, e.header.end());
  t.eval_points = numeric_block(e, ep);
  const Index points = t.eval_points.rows();

  const fs::path bp = td / "beta.csv";
  const CsvTable b = read_csv(bp);
  t.mean_names.assign(b.header.begin() + 1, b.header.end());
  t.beta = numeric_block(b, bp);
  const Index J = t.beta.rows();
  std::map<std::string, Index> feature_index;
  for (std::size_t j = 0; j < b.rows.size(); ++j) feature_index[b.rows[j][0]] = static_cast<Index>(j);

  const fs::path sp = td / "sigma.csv";
  const CsvTable s = read_csv(sp);
  t.sigma.assign(static_cast<std::size_t>(points), Matrix::Zero(J, J));
  for (const auto& row : s.rows) {
    if (row.size() != 4) throw ParseError(sp.string() + ": expected point,j,k,value rows");
    const auto p = static_cast<Index>(to_double(row[0], sp)) - 1;
    const auto j = static_cast<Index>(to_double(row[1], sp)) - 1;
    const auto k = static_cast<Index>(to_double(row[2], sp)) - 1;
    if (p < 0 || p >= points || j < 0 || j >= J || k < 0 || k >= J)
      throw ParseError(sp.string() + ": index out of range");
    t.sigma[static_cast<std::size_t>(p)](j, k) = t.sigma[static_cast<std::size_t>(p)](k, j) = to_double(row[3], sp);
  }

  const fs::path cp = td / "contrasts.csv";
  if (fs::exists(cp)) {
    const CsvTable c = read_csv(cp);
    for (const auto& row : c.rows) {
      const auto it = feature_index.find(row[0]);
      if (it == feature_index.end()) throw ParseError(cp.string() + ": unknown feature '" + row[0] + "'");
      t.contrasts.push_back({it->second, row[1], row[2], to_double(row[3], cp)});
    }
  }
  return t;
}

}  // namespace cvfm
