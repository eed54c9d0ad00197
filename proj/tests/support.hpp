#pragma once

// Oracles and helpers shared by the test binaries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace cvfm::test {

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

/// Asymptotic p-value of the two-sample KS statistic (Kolmogorov series with
/// the Stephens small-sample correction).
inline double ks_pvalue(double d, std::size_t n1, std::size_t n2) {
  const double ne = static_cast<double>(n1) * static_cast<double>(n2) / static_cast<double>(n1 + n2);
  const double sq = std::sqrt(ne);
  const double lambda = (sq + 0.12 + 0.11 / sq) * d;
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0, sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-12) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

inline double ks_pvalue(const std::vector<double>& a, const std::vector<double>& b) {
  return ks_pvalue(ks_statistic(a, b), a.size(), b.size());
}

/// First two raw moments of GIG(lambda, chi, psi) by trapezoidal quadrature of
/// the unnormalized density on the log scale.
struct Moments {
  double m1;
  double m2;
};

inline Moments gig_moments_quadrature(double lambda, double chi, double psi) {
  // log density of t = log x: lambda t - (chi e^{-t} + psi e^{t}) / 2.
  auto logf = [&](double t) { return lambda * t - 0.5 * (chi * std::exp(-t) + psi * std::exp(t)); };
  // Locate the mode on a coarse grid, then integrate over a window around it.
  double best_t = 0.0, best = -INFINITY;
  for (double t = -60.0; t <= 60.0; t += 0.01) {
    const double v = logf(t);
    if (v > best) {
      best = v;
      best_t = t;
    }
  }
  const int n = 400000;
  const double lo = best_t - 40.0, hi = best_t + 40.0, h = (hi - lo) / n;
  double z = 0.0, s1 = 0.0, s2 = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t = lo + i * h;
    const double w = (i == 0 || i == n ? 0.5 : 1.0) * std::exp(logf(t) - best);
    const double x = std::exp(t);
    z += w;
    s1 += w * x;
    s2 += w * x * x;
  }
  return {s1 / z, s2 / z};
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

/// Fresh, empty scratch directory under the system temp directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("cvfm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Byte contents of a file.
std::string read_file(const std::filesystem::path& path);

/// True when both directory trees hold the same files with identical bytes,
/// ignoring files named in `skip`.
bool same_tree(const std::filesystem::path& a, const std::filesystem::path& b,
               const std::vector<std::string>& skip = {});

}  // namespace cvfm::test
