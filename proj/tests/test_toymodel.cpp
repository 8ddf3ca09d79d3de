#include "iuq/toymodel.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "iuq/common.hpp"

using namespace iuq;

namespace {

Eigen::VectorXd random_x(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto box = toy::design_box();
  Eigen::VectorXd x(toy::kDesignDim);
  for (int k = 0; k < toy::kDesignDim; ++k) {
    const auto [lo, hi] = box[static_cast<std::size_t>(k)];
    x(k) = lo + unif(rng) * (hi - lo);
  }
  return x;
}

Eigen::VectorXd random_theta(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.05, 4.95);
  Eigen::VectorXd theta(toy::kParamDim);
  for (int k = 0; k < toy::kParamDim; ++k) theta(k) = unif(rng);
  return theta;
}

}  // namespace

TEST_CASE("simulate is deterministic") {
  std::mt19937_64 rng(1);
  const auto x = random_x(rng);
  const auto theta = random_theta(rng);
  const auto a = toy::simulate(x, theta);
  const auto b = toy::simulate(x, theta);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("outputs stay in [0,100] over 10^4 random inputs") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10000; ++t) {
    const auto y = toy::simulate(random_x(rng), random_theta(rng));
    REQUIRE(y.size() == toy::kQoiCount);
    for (int q = 0; q < toy::kQoiCount; ++q) {
      REQUIRE(y(q) >= 0.0);
      REQUIRE(y(q) <= 100.0);
    }
  }
}

TEST_CASE("outputs are monotone in elevation") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 1000; ++t) {
    const auto y = toy::simulate(random_x(rng), random_theta(rng));
    for (int q = 1; q < toy::kQoiCount; ++q) CHECK(y(q) >= y(q - 1));
  }
}

TEST_CASE("every QoI is sensitive to every parameter (finite differences)") {
  std::mt19937_64 rng(4);
  const auto x = random_x(rng);
  Eigen::VectorXd theta = Eigen::VectorXd::Ones(toy::kParamDim);
  const double h = 1e-5;
  for (int k = 0; k < toy::kParamDim; ++k) {
    Eigen::VectorXd up = theta, dn = theta;
    up(k) += h;
    dn(k) -= h;
    const Eigen::VectorXd grad =
        (toy::simulate(x, up) - toy::simulate(x, dn)) / (2.0 * h);
    for (int q = 0; q < toy::kQoiCount; ++q) {
      INFO("qoi " << q << " parameter " << k);
      CHECK(std::abs(grad(q)) > 1e-3);
    }
  }
}

TEST_CASE("noise- and bias-free corpus reproduces the simulator exactly") {
  toy::ToySpec spec = toy::default_spec();
  spec.noise_rel = 0.0;
  spec.bias_amplitude = 0.0;
  const auto table = toy::generate_experiments(spec, 12, 77);
  REQUIRE(table.tests.size() == 12);
  for (const auto& t : table.tests) {
    const auto clean = toy::simulate(t.x, spec.theta_true);
    CHECK((t.y_meas - clean).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("same seed reproduces the corpus; different seed does not") {
  const toy::ToySpec spec = toy::default_spec();
  const auto a = toy::generate_experiments(spec, 15, 5);
  const auto b = toy::generate_experiments(spec, 15, 5);
  const auto c = toy::generate_experiments(spec, 15, 6);
  bool same = true, diff = false;
  for (std::size_t i = 0; i < a.tests.size(); ++i) {
    same = same && (a.tests[i].y_meas - b.tests[i].y_meas).cwiseAbs().maxCoeff() == 0.0;
    diff = diff || (a.tests[i].y_meas - c.tests[i].y_meas).cwiseAbs().maxCoeff() > 0.0;
  }
  CHECK(same);
  CHECK(diff);
}

TEST_CASE("measurement noise has the configured relative scale") {
  toy::ToySpec spec = toy::default_spec();
  spec.noise_rel = 0.02;
  spec.bias_amplitude = 0.0;
  const int n = 400;
  const auto table = toy::generate_experiments(spec, n, 11);

  // Pool the standardized residuals (yE - clean) / (0.02 * clean) over all
  // tests and QoIs; they should look standard normal.
  double ss = 0.0;
  long count = 0;
  for (const auto& t : table.tests) {
    const auto clean = toy::simulate(t.x, spec.theta_true);
    for (int q = 0; q < toy::kQoiCount; ++q) {
      if (clean(q) < 1.0) continue;  // skip near-zero signals
      const double z = (t.y_meas(q) - clean(q)) / (0.02 * clean(q));
      ss += z * z;
      ++count;
    }
  }
  const double sd = std::sqrt(ss / static_cast<double>(count));
  CHECK(sd == Catch::Approx(1.0).epsilon(0.1));
}

TEST_CASE("bias term depends only on x and has a few-percent scale") {
  std::mt19937_64 rng(12);
  double max_abs = 0.0;
  for (int t = 0; t < 2000; ++t) {
    const auto x = random_x(rng);
    const auto b = toy::bias_term(x);
    REQUIRE(b.size() == toy::kQoiCount);
    max_abs = std::max(max_abs, b.cwiseAbs().maxCoeff());
  }
  CHECK(max_abs > 2.0);
  CHECK(max_abs < 15.0);

  // independent of theta by construction: same x twice
  const auto x = random_x(rng);
  CHECK((toy::bias_term(x) - toy::bias_term(x)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("generated corpus uses the dataio schema") {
  const auto table = toy::generate_experiments(toy::default_spec(), 10, 3);
  CHECK(table.x_names == toy::design_var_names());
  CHECK(table.y_names == toy::qoi_names());
  io::write_tests("toy_schema_test.csv", table);
  const auto back = io::load_tests("toy_schema_test.csv");
  CHECK(back.r() == toy::kDesignDim);
  CHECK(back.m() == toy::kQoiCount);
  CHECK(back.tests.size() == 10);
  std::remove("toy_schema_test.csv");
}

TEST_CASE("generate_experiments validates its inputs") {
  CHECK_THROWS_AS(toy::generate_experiments(toy::default_spec(), 5, 1),
                  ConfigError);
  toy::ToySpec bad = toy::default_spec();
  bad.noise_rel = -0.1;
  CHECK_THROWS_AS(toy::generate_experiments(bad, 20, 1), ConfigError);
}
