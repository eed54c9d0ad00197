#include "cvfm/calibrate.hpp"
#include "cvfm/simgen.hpp"

#include "doctest.h"

#include <cmath>

using namespace cvfm;

namespace {

CountTable table_from(const CountMatrix& y) {
  CountTable t;
  t.counts = y;
  for (Index i = 0; i < y.rows(); ++i) t.sample_ids.push_back("s" + std::to_string(i));
  for (Index j = 0; j < y.cols(); ++j) t.feature_names.push_back("f" + std::to_string(j));
  return t;
}

}  // namespace

TEST_SUITE("calibrate") {

TEST_CASE("PCA choice of K") {
  // Three composition profiles, each at three sequencing depths. The clr
  // transform removes depth, leaving three points: a rank-2 covariance.
  const std::vector<std::vector<std::int64_t>> profiles{
      {4000, 9000, 1000, 30000, 7000, 2000},
      {20000, 1000, 5000, 3000, 3000, 8000},
      {1000, 6000, 6000, 6000, 40000, 1000}};
  CountMatrix y(9, 6);
  for (Index i = 0; i < 9; ++i)
    for (Index j = 0; j < 6; ++j) y(i, j) = profiles[static_cast<std::size_t>(i % 3)][static_cast<std::size_t>(j)] * (1 + i / 3 * 9);
  const CountTable rank2 = table_from(y);
  CHECK(choose_k_by_pca(rank2, 0.95) == 2);
  CHECK(choose_k_by_pca(rank2, 1.0) == 2);

  // Four generic samples: covariance rank N - 1 = 3.
  CountMatrix g(4, 10);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 10; ++j) g(i, j) = (i * 7 + j * j * 3 + (i * j) % 5) % 23 + 1;
  const CountTable generic = table_from(g);
  CHECK(choose_k_by_pca(generic, 1.0) == 3);

  // Monotone in the target.
  int prev = 0;
  for (double t : {0.3, 0.5, 0.7, 0.9, 0.95, 0.99, 1.0}) {
    const int k = choose_k_by_pca(generic, t);
    CHECK(k >= prev);
    prev = k;
  }

  CHECK(choose_k_by_pca(table_from(CountMatrix::Constant(5, 4, 7)), 0.95) == 1);
  CHECK_THROWS_AS(choose_k_by_pca(table_from(CountMatrix::Constant(1, 4, 7))), ContractError);
}

TEST_CASE("PCA on regenerated Sim-3 data needs many components") {
  const SimData sim = gen_sim3(1);
  CHECK(choose_k_by_pca(sim.counts) >= 10);
}

TEST_CASE("default hyperparameters") {
  // One sample with total count near e^5 (148 = e^4.997).
  CountMatrix one(1, 2);
  one << 100, 48;
  CHECK(default_hypers(table_from(one)).nu_r == doctest::Approx(std::log(148.0)));
  CountMatrix e5(1, 1);
  e5 << 148;
  CHECK(default_hypers(table_from(e5)).nu_r == doctest::Approx(5.0).epsilon(1e-3));

  const SimData sim = gen_sim1(4);
  const HyperConfig h = default_hypers(sim.counts);
  CHECK(h.a_phi == doctest::Approx(1.0 / 3.0));
  CHECK(h.a_tau == 0.1);
  CHECK(h.b_tau == doctest::Approx(1.0 / 15.0));
  CHECK(h.a_sigma == 3.0);
  CHECK(h.b_sigma == 3.0);
  CHECK(h.c_alpha == 3.0);
  CHECK(h.c_r == 3.0);
  CHECK(h.L_alpha == 35);
  CHECK(h.L_r == 30);
  CHECK(h.a_omega_alpha == 5.0);
  CHECK(h.b_omega_r == 5.0);
  h.validate();

  // Loop oracles for the two centring constants.
  const auto& y = sim.counts.counts;
  double nu_r = 0.0, s = 0.0;
  for (Index i = 0; i < y.rows(); ++i) {
    double total = 0.0;
    for (Index j = 0; j < y.cols(); ++j) {
      total += static_cast<double>(y(i, j));
      s += std::log(static_cast<double>(y(i, j)) + 0.01);
    }
    nu_r += std::log(total);
  }
  nu_r /= static_cast<double>(y.rows());
  CHECK(h.nu_r == doctest::Approx(nu_r).epsilon(1e-12));
  CHECK(h.nu_alpha == doctest::Approx(s / static_cast<double>(y.size()) - nu_r).epsilon(1e-12));

  // Deterministic.
  const HyperConfig again = default_hypers(sim.counts);
  CHECK(again.nu_alpha == h.nu_alpha);
  CHECK(again.K == h.K);

  CHECK_THROWS_AS(default_hypers(table_from(CountMatrix(0, 3))), ContractError);
}

TEST_CASE("hyperparameter validation") {
  HyperConfig h;
  h.validate();
  h.K = 0;
  CHECK_THROWS_AS(h.validate(), ContractError);
  h = HyperConfig{};
  h.L_r = 1;
  CHECK_THROWS_AS(h.validate(), ContractError);
  h = HyperConfig{};
  h.u_r2 = -1.0;
  CHECK_THROWS_AS(h.validate(), ContractError);
}

}  // TEST_SUITE
