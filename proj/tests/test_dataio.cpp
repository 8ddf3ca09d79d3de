#include "iuq/dataio.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <random>

#include "iuq/common.hpp"

using namespace iuq;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name, const std::string& content)
      : path(name) {
    std::ofstream out(path);
    out << content;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

const char* kSmallCsv =
    "test_id,pressure,massflow,power,t_inlet,void1,void2,void3,void4\n"
    "1,7.2,1100,4.5,551,5.0,20.0,45.0,70.0\n"
    "2,3.9,800,2.1,545,-0.4,8.0,30.0,55.0\n"
    "3,1.2,400,6.8,560,12.0,35.0,60.0,82.0\n";

}  // namespace

TEST_CASE("load_tests parses a well-formed file") {
  TempFile f("dataio_ok.csv", kSmallCsv);
  const auto table = io::load_tests(f.path);
  REQUIRE(table.tests.size() == 3);
  CHECK(table.r() == 4);
  CHECK(table.m() == 4);
  CHECK(table.tests[0].test_id == 1);
  CHECK(table.tests[1].y_meas(0) == Catch::Approx(-0.4));
  CHECK(table.x_names[0] == "pressure");
  CHECK(table.y_names[3] == "void4");
}

TEST_CASE("load_tests reports duplicate ids and bad cells with locations") {
  TempFile dup("dataio_dup.csv", "test_id,x1,y1\n1,0.5,10\n1,0.7,12\n");
  try {
    io::load_tests(dup.path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("duplicate test_id 1") != std::string::npos);
    CHECK(msg.find(":3") != std::string::npos);
  }

  TempFile bad("dataio_bad.csv", "test_id,x1,y1\n1,0.5,abc\n");
  try {
    io::load_tests(bad.path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("abc") != std::string::npos);
    CHECK(msg.find(":2") != std::string::npos);
  }
}

TEST_CASE("write/load round-trip preserves values") {
  TempFile f("dataio_rt_in.csv", kSmallCsv);
  const auto table = io::load_tests(f.path);
  io::write_tests("dataio_rt_out.csv", table);
  const auto back = io::load_tests("dataio_rt_out.csv");
  REQUIRE(back.tests.size() == table.tests.size());
  for (std::size_t i = 0; i < table.tests.size(); ++i) {
    CHECK((back.tests[i].x - table.tests[i].x).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.tests[i].y_meas - table.tests[i].y_meas)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
  std::remove("dataio_rt_out.csv");
}

TEST_CASE("void fraction correction matches the published equation") {
  bool flag = false;
  CHECK(io::correct_void_fraction(50.0, &flag) ==
        Catch::Approx(50.0 / 1.117).margin(1e-10));
  CHECK(io::correct_void_fraction(50.0) == Catch::Approx(44.7628).margin(1e-4));
  CHECK(flag);
  CHECK(io::correct_void_fraction(20.0) == Catch::Approx(17.4368).margin(1e-4));
  CHECK(io::correct_void_fraction(10.0, &flag) == 10.0);
  CHECK_FALSE(flag);
  CHECK(io::correct_void_fraction(90.4) == 90.4);
  CHECK(io::correct_void_fraction(-0.5) == -0.5);
}

TEST_CASE("correction is monotone increasing and shrinking on [20,90]") {
  double prev = io::correct_void_fraction(20.0);
  for (double a = 20.5; a <= 90.0; a += 0.5) {
    const double c = io::correct_void_fraction(a);
    CHECK(c > prev);
    CHECK(c < a);
    prev = c;
  }
}

TEST_CASE("filter flags non-physical elevation ordering") {
  TempFile f("dataio_filter.csv",
             "test_id,x1,void1,void2,void3,void4\n"
             "1,0.1,10,20,30,40\n"
             "2,0.2,10,20,30,29.5\n"   // within the 2-point tolerance
             "3,0.3,10,20,30,20\n"     // inversion beyond tolerance
             "4,0.4,-0.5,5,20,40\n");  // slightly negative stays
  auto table = io::load_tests(f.path);
  io::filter_tests(table, {0, 1, 2, 3});
  CHECK_FALSE(table.tests[0].excluded);
  CHECK_FALSE(table.tests[1].excluded);
  CHECK(table.tests[2].excluded);
  CHECK(table.tests[2].exclusion_reason.find("non-physical ordering") !=
        std::string::npos);
  CHECK_FALSE(table.tests[3].excluded);
}

TEST_CASE("filter removes exactly the planted outliers and is idempotent") {
  std::string csv = "test_id,x1,void1,void2\n";
  for (int i = 1; i <= 20; ++i)
    csv += std::to_string(i) + ",0." + std::to_string(10 + i) + ",10,20\n";
  TempFile f("dataio_outlier.csv", csv);
  auto table = io::load_tests(f.path);

  Eigen::MatrixXd residuals(20, 2);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < 20; ++i)
    for (int q = 0; q < 2; ++q) residuals(i, q) = gauss(rng);
  residuals(4, 0) = 25.0;    // planted
  residuals(11, 1) = -30.0;  // planted

  io::filter_tests(table, {0, 1}, &residuals);
  int excluded = 0;
  for (const auto& t : table.tests) excluded += t.excluded ? 1 : 0;
  CHECK(excluded == 2);
  CHECK(table.tests[4].excluded);
  CHECK(table.tests[11].excluded);
  CHECK(table.tests[4].exclusion_reason.rfind("outlier", 0) == 0);

  io::filter_tests(table, {0, 1}, &residuals);
  int excluded2 = 0;
  for (const auto& t : table.tests) excluded2 += t.excluded ? 1 : 0;
  CHECK(excluded2 == 2);
}

TEST_CASE("build_sigma_exp covers both error modes and the floor") {
  io::MeasErrorConfig cfg;
  cfg.rel = 0.02;

  Eigen::VectorXd y(4);
  y << 50.0, 0.0, -10.0, 100.0;
  const auto var = io::build_sigma_exp(y, cfg, 2);
  CHECK(var(0) == Catch::Approx(1.0));   // (0.02*50)^2
  CHECK(var(1) == Catch::Approx(0.25));  // floor 0.5 squared
  CHECK(var(2) == Catch::Approx(0.25));  // |y|*rel below the floor
  CHECK(var(3) == Catch::Approx(4.0));
  CHECK((var.array() > 0.0).all());

  cfg.mode = io::ErrorMode::AbsolutePoints;
  cfg.rel = 2.0;
  const auto var_abs = io::build_sigma_exp(y, cfg, 2);
  for (int i = 0; i < 4; ++i) CHECK(var_abs(i) == Catch::Approx(4.0));

  io::MeasErrorConfig per_qoi;
  per_qoi.rel = 0.02;
  per_qoi.per_qoi_rel = {0.02, 0.04};
  const auto var_pq = io::build_sigma_exp(y, per_qoi, 2);
  CHECK(var_pq(0) == Catch::Approx(1.0));
  CHECK(var_pq(3) == Catch::Approx(16.0));  // 0.04 * 100

  io::MeasErrorConfig bad;
  bad.rel = 0.0;
  CHECK_THROWS_AS(io::build_sigma_exp(y, bad, 2), ConfigError);
}

TEST_CASE("config parsing applies defaults and rejects bad settings") {
  const auto cfg = io::parse_config(
      "[tsa]\nalpha = 0.3\nbeta = 0.06\nmeasure = centered\n"
      "[mcmc]\nn_samples = 20000\nburn_in = 4000\nthin = 5\nseed = 7\n"
      "[prior]\ncount = 5\nupper = 4.0\n",
      "test");
  CHECK(cfg.alpha == 0.3);
  CHECK(cfg.beta == 0.06);
  CHECK(cfg.measure == tsa::Measure::CenteredL2);
  CHECK(cfg.mcmc.seed == 7);
  CHECK(cfg.prior.upper[0] == 4.0);
  CHECK(cfg.prior.names.size() == 5);
  CHECK(cfg.n_design == 20);
  CHECK(cfg.q2_threshold == 0.95);

  // alpha <= beta is rejected at parse time
  CHECK_THROWS_AS(io::parse_config("[tsa]\nalpha = 0.05\nbeta = 0.25\n", "t"),
                  ConfigError);
  // misspelled keys fail loudly
  CHECK_THROWS_AS(io::parse_config("[tsa]\nalhpa = 0.3\n", "t"), ConfigError);
  // n_samples must exceed burn_in
  CHECK_THROWS_AS(
      io::parse_config("[mcmc]\nn_samples = 100\nburn_in = 200\n", "t"),
      ConfigError);
}

TEST_CASE("config hash is stable and content-sensitive") {
  TempFile a("cfg_a.ini", "[tsa]\nalpha = 0.25\n");
  TempFile b("cfg_b.ini", "[tsa]\nalpha = 0.25\n");
  TempFile c("cfg_c.ini", "[tsa]\nalpha = 0.26\n");
  CHECK(io::config_hash_hex(a.path) == io::config_hash_hex(b.path));
  CHECK(io::config_hash_hex(a.path) != io::config_hash_hex(c.path));
  CHECK(io::config_hash_hex(a.path).size() == 16);
}
