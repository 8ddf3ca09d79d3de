#include "iuq/modular_bayes.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "iuq/common.hpp"
#include "iuq/doe.hpp"
#include "iuq/toymodel.hpp"

using namespace iuq;

namespace {

gp::GpConfig fast_config() {
  gp::GpConfig cfg;
  cfg.n_starts = 5;
  cfg.max_iters = 150;
  return cfg;
}

io::TestTable clean_corpus(int n, std::uint64_t seed) {
  toy::ToySpec spec = toy::default_spec();
  spec.noise_rel = 0.0;
  spec.bias_amplitude = 0.0;
  return toy::generate_experiments(spec, n, seed);
}

bayes::PriorSpec toy_prior() {
  return bayes::PriorSpec::from_table(toy::default_prior());
}

const sim::Simulator kToySim = [](const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& theta) {
  return toy::simulate(x, theta);
};

}  // namespace

TEST_CASE("residuals vanish when the simulator reproduces the measurements") {
  const auto table = clean_corpus(12, 3);
  const Eigen::VectorXd theta_true = toy::default_spec().theta_true;
  const auto residuals = bayes::compute_residuals(table, kToySim, theta_true);
  CHECK(residuals.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a constant simulator offset appears as -c in every residual") {
  const auto table = clean_corpus(12, 4);
  const Eigen::VectorXd theta_true = toy::default_spec().theta_true;
  const sim::Simulator offset_sim = [&](const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& theta) {
    return Eigen::VectorXd(toy::simulate(x, theta).array() + 3.0);
  };
  const auto residuals = bayes::compute_residuals(table, offset_sim, theta_true);
  for (Eigen::Index i = 0; i < residuals.rows(); ++i)
    for (Eigen::Index q = 0; q < residuals.cols(); ++q)
      CHECK(residuals(i, q) == Catch::Approx(-3.0).margin(1e-10));
}

TEST_CASE("residuals recover an injected bias term") {
  toy::ToySpec spec = toy::default_spec();
  spec.noise_rel = 0.002;
  spec.bias_amplitude = 1.0;
  const auto table = toy::generate_experiments(spec, 20, 6);
  const auto residuals = bayes::compute_residuals(table, kToySim, spec.theta_true);
  for (std::size_t i = 0; i < table.tests.size(); ++i) {
    const Eigen::VectorXd b = toy::bias_term(table.tests[i].x);
    for (int q = 0; q < toy::kQoiCount; ++q)
      CHECK(residuals(static_cast<Eigen::Index>(i), q) ==
            Catch::Approx(b(q)).margin(1.0));
  }
}

TEST_CASE("simulator failures name the offending test") {
  auto table = clean_corpus(10, 5);
  const sim::Simulator broken = [&](const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& theta) {
    if (std::abs(x(0) - table.tests[3].x(0)) < 1e-12)
      throw std::runtime_error("solver diverged");
    return toy::simulate(x, theta);
  };
  try {
    bayes::compute_residuals(table, broken, toy::default_spec().theta_true);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("test " +
                                     std::to_string(table.tests[3].test_id)) !=
          std::string::npos);
  }
}

TEST_CASE("zero residuals give a near-zero discrepancy surface") {
  const auto table = clean_corpus(14, 7);
  const Eigen::MatrixXd x_val = table.retained_x().topRows(10);
  const Eigen::MatrixXd residuals = Eigen::MatrixXd::Zero(10, toy::kQoiCount);
  const auto bias = bayes::train_gpbias(x_val, residuals, fast_config(), 1);

  Eigen::MatrixXd delta;
  Eigen::VectorXd sigma_bias;
  bayes::evaluate_bias(bias, table.retained_x().bottomRows(4), delta, sigma_bias);
  CHECK(delta.cwiseAbs().maxCoeff() < 1e-9);
  CHECK(sigma_bias.maxCoeff() < 1e-9);
}

TEST_CASE("linear residuals are interpolated within 5%") {
  const auto table = clean_corpus(16, 8);
  const Eigen::MatrixXd X = table.retained_x();
  const Eigen::MatrixXd x_val = X.topRows(12);

  Eigen::MatrixXd residuals(12, 1);
  auto linear = [](const Eigen::VectorXd& x) {
    return 2.0 + 0.5 * x(0) + 0.001 * x(1) - 0.3 * x(2) + 0.01 * x(3);
  };
  for (int i = 0; i < 12; ++i) residuals(i, 0) = linear(x_val.row(i));
  const auto bias = bayes::train_gpbias(x_val, residuals, fast_config(), 9);

  Eigen::MatrixXd queries(3, 4);
  queries.row(0) = 0.5 * (x_val.row(0) + x_val.row(1));
  queries.row(1) = 0.25 * (x_val.row(2) + x_val.row(3) + x_val.row(4) + x_val.row(5));
  queries.row(2) = x_val.colwise().mean();
  Eigen::MatrixXd delta;
  Eigen::VectorXd sigma_bias;
  bayes::evaluate_bias(bias, queries, delta, sigma_bias);
  for (int i = 0; i < 3; ++i) {
    const double want = linear(queries.row(i));
    CHECK(delta(i, 0) == Catch::Approx(want).epsilon(0.05));
  }
}

TEST_CASE("interpolation vs informative queries (zero-nugget bias model)") {
  gp::GpConfig cfg = fast_config();
  cfg.nugget_rel = 0.0;
  const auto table = clean_corpus(14, 10);
  const Eigen::MatrixXd x_val = table.retained_x().topRows(10);
  Eigen::MatrixXd residuals(10, 1);
  for (int i = 0; i < 10; ++i)
    residuals(i, 0) = std::sin(0.5 * x_val(i, 0)) + 0.1 * x_val(i, 2);
  const auto bias = bayes::train_gpbias(x_val, residuals, cfg, 11);

  // At a training test the residual comes back with ~zero MSE: the
  // non-informative case.
  Eigen::MatrixXd at_train = x_val.row(4);
  Eigen::MatrixXd delta;
  Eigen::VectorXd sigma_bias;
  bayes::evaluate_bias(bias, at_train, delta, sigma_bias);
  CHECK(delta(0, 0) == Catch::Approx(residuals(4, 0)).margin(1e-6));
  CHECK(sigma_bias(0) <= 1e-8);

  // Between tests: nonzero predictive MSE, the informative case.
  Eigen::MatrixXd between = 0.5 * (x_val.row(0) + x_val.row(7));
  bayes::evaluate_bias(bias, between, delta, sigma_bias);
  CHECK(sigma_bias(0) > 1e-8);
}

TEST_CASE("gpbias training is deterministic for a fixed seed") {
  const auto table = clean_corpus(12, 12);
  const Eigen::MatrixXd x_val = table.retained_x().topRows(9);
  Eigen::MatrixXd residuals(9, 2);
  for (int i = 0; i < 9; ++i) {
    residuals(i, 0) = 0.2 * x_val(i, 0);
    residuals(i, 1) = std::cos(x_val(i, 3) / 100.0);
  }
  const auto a = bayes::train_gpbias(x_val, residuals, fast_config(), 77);
  const auto b = bayes::train_gpbias(x_val, residuals, fast_config(), 77);
  for (int q = 0; q < 2; ++q)
    CHECK((a.qoi_models[q].lengthscales - b.qoi_models[q].lengthscales)
              .cwiseAbs()
              .maxCoeff() == 0.0);
}

TEST_CASE("code design has the published row count and structure") {
  const auto table = clean_corpus(30, 13);
  const Eigen::MatrixXd X = table.retained_x();
  std::vector<int> iuq_ids;
  Eigen::MatrixXd x_iuq(19, 4);
  for (int i = 0; i < 19; ++i) {
    iuq_ids.push_back(table.tests[static_cast<std::size_t>(i)].test_id);
    x_iuq.row(i) = X.row(i);
  }
  const auto design = bayes::build_code_design(iuq_ids, x_iuq, toy_prior(), 20, 99);

  CHECK(design.inputs.rows() == 380);  // 19 x 20
  CHECK(design.inputs.cols() == 4 + 5);
  CHECK(design.row_test_ids.size() == 380);

  const auto prior = toy_prior();
  for (int i = 0; i < 19; ++i) {
    Eigen::MatrixXd block_theta(20, 5);
    for (int s = 0; s < 20; ++s) {
      const Eigen::Index row = i * 20 + s;
      CHECK((design.inputs.row(row).head(4).transpose() -
             x_iuq.row(i).transpose())
                .cwiseAbs()
                .maxCoeff() == 0.0);
      CHECK(design.row_test_ids[static_cast<std::size_t>(row)] ==
            iuq_ids[static_cast<std::size_t>(i)]);
      for (int k = 0; k < 5; ++k) {
        const double t = design.inputs(row, 4 + k);
        CHECK(t > prior.lower(k));
        CHECK(t < prior.upper(k));
        block_theta(s, k) =
            (t - prior.lower(k)) / (prior.upper(k) - prior.lower(k));
      }
    }
    CHECK(doe::is_latin_hypercube(block_theta));
  }

  const auto again = bayes::build_code_design(iuq_ids, x_iuq, toy_prior(), 20, 99);
  CHECK((design.inputs - again.inputs).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("code emulator predicts all QoIs and matches per-model predict") {
  const auto table = clean_corpus(16, 14);
  const Eigen::MatrixXd X = table.retained_x();
  std::vector<int> iuq_ids;
  Eigen::MatrixXd x_iuq(6, 4);
  for (int i = 0; i < 6; ++i) {
    iuq_ids.push_back(table.tests[static_cast<std::size_t>(i)].test_id);
    x_iuq.row(i) = X.row(i);
  }
  const auto design = bayes::build_code_design(iuq_ids, x_iuq, toy_prior(), 8, 5);
  const auto outputs = bayes::evaluate_design(design, kToySim, toy::kQoiCount);

  const auto result = bayes::train_and_validate_gpcode(
      design, outputs, table.y_names, kToySim, iuq_ids, x_iuq, toy_prior(),
      0.25, 0.0, fast_config(), 5);

  const Eigen::VectorXd theta = Eigen::VectorXd::Ones(5) * 1.3;
  Eigen::MatrixXd mean, mse;
  result.emulator.predict(x_iuq, theta, mean, mse);
  CHECK(mean.rows() == 6);
  CHECK(mean.cols() == 4);
  CHECK((mse.array() >= 0.0).all());

  Eigen::MatrixXd inputs(6, 9);
  inputs.leftCols(4) = x_iuq;
  inputs.rightCols(5) = theta.transpose().replicate(6, 1);
  Eigen::VectorXd m0, v0;
  gp::predict(result.emulator.qoi_models[2], inputs, m0, v0);
  CHECK((mean.col(2) - m0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("validation gate reports failure without throwing") {
  const auto table = clean_corpus(16, 15);
  const Eigen::MatrixXd X = table.retained_x();
  std::vector<int> iuq_ids;
  Eigen::MatrixXd x_iuq(6, 4);
  for (int i = 0; i < 6; ++i) {
    iuq_ids.push_back(table.tests[static_cast<std::size_t>(i)].test_id);
    x_iuq.row(i) = X.row(i);
  }
  // Three parameter samples per test cannot resolve a 5D parameter effect.
  const auto design = bayes::build_code_design(iuq_ids, x_iuq, toy_prior(), 3, 7);
  const auto outputs = bayes::evaluate_design(design, kToySim, toy::kQoiCount);
  const auto result = bayes::train_and_validate_gpcode(
      design, outputs, table.y_names, kToySim, iuq_ids, x_iuq, toy_prior(),
      0.25, 0.95, fast_config(), 7);

  CHECK_FALSE(result.report.all_passed);
  bool any_fail = false;
  for (const auto& q : result.report.qoi) {
    CHECK(q.loocv >= 0.0);
    any_fail = any_fail || !q.gate_passed;
  }
  CHECK(any_fail);

  const std::string json = result.report.to_json();
  CHECK(json.find("\"q2_threshold\"") != std::string::npos);
  CHECK(json.find("void3") != std::string::npos);
}

TEST_CASE("design CSV feeds the tabulated simulator") {
  const auto table = clean_corpus(14, 16);
  const Eigen::MatrixXd X = table.retained_x();
  std::vector<int> iuq_ids;
  Eigen::MatrixXd x_iuq(4, 4);
  for (int i = 0; i < 4; ++i) {
    iuq_ids.push_back(table.tests[static_cast<std::size_t>(i)].test_id);
    x_iuq.row(i) = X.row(i);
  }
  const auto design = bayes::build_code_design(iuq_ids, x_iuq, toy_prior(), 5, 3);
  const auto outputs = bayes::evaluate_design(design, kToySim, toy::kQoiCount);
  bayes::write_design_csv("design_table_test.csv", design, outputs);

  sim::TabulatedSimulator tab("design_table_test.csv", 4, 5, 4);
  CHECK(tab.rows() == 20);
  const Eigen::VectorXd x = design.inputs.row(7).head(4);
  const Eigen::VectorXd theta = design.inputs.row(7).tail(5);
  CHECK((tab(x, theta) - outputs.row(7).transpose()).cwiseAbs().maxCoeff() <
        1e-12);

  Eigen::VectorXd other = theta;
  other(0) += 0.123;
  CHECK_THROWS_AS(tab(x, other), DataError);
  std::remove("design_table_test.csv");
}
