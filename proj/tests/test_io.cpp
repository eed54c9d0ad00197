#include "cvfm/config.hpp"
#include "cvfm/data.hpp"

#include "doctest.h"
#include "support.hpp"

#include <fstream>

using namespace cvfm;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("count and design tables") {
  const fs::path dir = test::scratch_dir("io_tables");
  write_text(dir / "counts.csv", "sample,subject,a,b\ns1,p1,3,0\ns2,p2,10,4\ns3,p1,0,1\n");
  write_text(dir / "design.csv", "sample,intercept,g,t\ns1,1,0,0.5\ns2,1,1,-1\ns3,1,0,2\n");

  const CountTable c = read_counts_csv(dir / "counts.csv", std::string("subject"));
  CHECK(c.n_samples() == 3);
  CHECK(c.n_features() == 2);
  CHECK(c.counts(1, 0) == 10);
  CHECK(c.subjects[2] == "p1");

  CovariateDesign d = read_design_csv(dir / "design.csv");
  CHECK(d.names == std::vector<std::string>{"g", "t"});
  d.roles = {CovariateRole::kMean, CovariateRole::kBoth};
  CHECK(d.covariance_design().cols() == 2);
  CHECK(d.covariance_design()(1, 0) == 1.0);
  CHECK(d.covariance_design()(1, 1) == -1.0);
  CHECK(d.mean_design().cols() == 2);
  CHECK(d.covariance_names() == std::vector<std::string>{"intercept", "t"});

  const ModelData m = ModelData::build(c, d, true);
  CHECK(m.n_subjects == 2);
  CHECK(m.subject == std::vector<int>{0, 1, 0});
  CHECK(m.alpha_rows() == 2);

  // Round trip.
  write_counts_csv(dir / "c2.csv", c);
  write_design_csv(dir / "d2.csv", d);
  const CountTable c2 = read_counts_csv(dir / "c2.csv", std::string("subject"));
  CHECK(c2.counts == c.counts);
  CHECK(read_design_csv(dir / "d2.csv").values == d.values);
}

TEST_CASE("malformed tables name the row and column") {
  const fs::path dir = test::scratch_dir("io_bad");
  write_text(dir / "frac.csv", "sample,a,b\ns1,3,0\ns2,1.5,4\n");
  CHECK(error_of([&] { read_counts_csv(dir / "frac.csv"); }).find("row 3, column 2") != std::string::npos);
  write_text(dir / "neg.csv", "sample,a\ns1,-3\n");
  CHECK_THROWS_AS(read_counts_csv(dir / "neg.csv"), ParseError);
  write_text(dir / "icpt.csv", "sample,intercept,g\ns1,1,0\ns2,2,1\n");
  CHECK(error_of([&] { read_design_csv(dir / "icpt.csv"); }).find("intercept") != std::string::npos);
  write_text(dir / "short.csv", "sample,a,b\ns1,3\n");
  CHECK_THROWS_AS(read_counts_csv(dir / "short.csv"), ParseError);
  CHECK(error_of([&] { read_counts_csv(dir / "missing.csv"); }).find("missing.csv") != std::string::npos);

  // Sample ids must line up between the two tables.
  write_text(dir / "c.csv", "sample,a\ns1,3\ns2,4\n");
  write_text(dir / "d.csv", "sample,g\ns1,0\ns3,1\n");
  CHECK_THROWS_AS(ModelData::build(read_counts_csv(dir / "c.csv"), read_design_csv(dir / "d.csv"), false),
                  ContractError);
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e300, 123456789.0, 0.0})
    CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("config parsing") {
  const std::string text =
      "# fit settings\n"
      "counts = data/counts.csv\n"
      "design = /abs/design.csv\n"
      "subject_column = subject\n"
      "role.g = mean   # mean only\n"
      "seed = 9\n"
      "iters = 400\nburn = 100\nthin = 5\n"
      "chains = 2\n"
      "K = 3\n"
      "u_r2 = 0.02\n"
      "adapt = false\n";
  const RunConfig c = parse_config_text(text, "/base", "run.cfg");
  CHECK(c.counts == fs::path("/base/data/counts.csv"));
  CHECK(c.design == fs::path("/abs/design.csv"));
  CHECK(c.subject_column == std::optional<std::string>("subject"));
  CHECK(c.roles.at("g") == CovariateRole::kMean);
  CHECK(c.sampler.seed == 9);
  CHECK(c.sampler.n_iter == 400);
  CHECK(c.sampler.thin == 5);
  CHECK(c.chains == 2);
  CHECK(c.hyper_overrides.at("K") == 3.0);
  CHECK(!c.sampler.adapt.enabled);

  HyperConfig h;
  apply_hyper_override(h, "K", 3.0);
  apply_hyper_override(h, "u_r2", 0.02);
  CHECK(h.K == 3);
  CHECK(h.u_r2 == 0.02);
  CHECK_THROWS_AS(apply_hyper_override(h, "K", 2.5), ContractError);
  CHECK_THROWS_AS(apply_hyper_override(h, "bogus", 1.0), ContractError);

  CHECK(error_of([] { parse_config_text("seed = 1\nfoo = 2\n", ".", "x.cfg"); }).find("x.cfg:2") != std::string::npos);
  CHECK(error_of([] { parse_config_text("K = 1\nK = 2\n", ".", "x.cfg"); }).find("twice") != std::string::npos);
  CHECK_THROWS_AS(parse_config_text("seed 1\n", "."), ParseError);
  CHECK_THROWS_AS(parse_config_text("iters = ten\n", "."), ParseError);
  CHECK_THROWS_AS(parse_config_text("role.g = sideways\n", "."), ParseError);
}

TEST_CASE("fit inputs report missing files and unknown role columns") {
  const fs::path dir = test::scratch_dir("io_fit");
  RunConfig c;
  c.counts = dir / "nope.csv";
  c.design = dir / "d.csv";
  CHECK(error_of([&] { load_fit_inputs(c); }).find("nope.csv") != std::string::npos);

  write_text(dir / "c.csv", "sample,a,b\ns1,3,5\ns2,4,1\ns3,0,9\n");
  write_text(dir / "d.csv", "sample,g\ns1,0\ns2,1\ns3,1\n");
  c.counts = dir / "c.csv";
  c.roles["h"] = CovariateRole::kMean;
  CHECK_THROWS_AS(load_fit_inputs(c), ParseError);
  c.roles.clear();
  c.roles["g"] = CovariateRole::kCovariance;
  c.hyper_overrides["K"] = 2;
  const FitInputs in = load_fit_inputs(c);
  CHECK(in.hyper.K == 2);
  CHECK(in.data.P() == 2);
  CHECK(in.data.P_mean() == 0);
}

}  // TEST_SUITE
