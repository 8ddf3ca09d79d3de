// Microbenchmarks for emulator training, prediction and likelihood cost.

#include <benchmark/benchmark.h>

#include "iuq/gp.hpp"
#include "iuq/inference.hpp"
#include "iuq/modular_bayes.hpp"
#include "iuq/toymodel.hpp"

namespace {

using namespace iuq;

const sim::Simulator kToySim = [](const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& theta) {
  return toy::simulate(x, theta);
};

struct EmulatorFixture {
  bayes::CodeEmulator emulator;
  Eigen::MatrixXd x_iuq;
  inference::LikelihoodContext ctx;

  EmulatorFixture() {
    const auto table = toy::generate_experiments(toy::default_spec(), 30, 1);
    const auto prior = bayes::PriorSpec::from_table(toy::default_prior());
    std::vector<int> iuq_ids;
    x_iuq.resize(19, toy::kDesignDim);
    for (int i = 0; i < 19; ++i) {
      iuq_ids.push_back(table.tests[static_cast<std::size_t>(i)].test_id);
      x_iuq.row(i) = table.tests[static_cast<std::size_t>(i)].x.transpose();
    }
    gp::GpConfig cfg;
    cfg.n_starts = 4;
    cfg.max_iters = 150;
    const auto design = bayes::build_code_design(iuq_ids, x_iuq, prior, 20, 2);
    const auto outputs = bayes::evaluate_design(design, kToySim, 4);
    auto trained = bayes::train_and_validate_gpcode(
        design, outputs, table.y_names, kToySim, iuq_ids, x_iuq, prior, 0.25,
        0.0, cfg, 2);
    emulator = std::move(trained.emulator);

    ctx.x_iuq = x_iuq;
    ctx.y_obs.resize(19 * 4);
    for (int i = 0; i < 19; ++i)
      for (int q = 0; q < 4; ++q)
        ctx.y_obs(i * 4 + q) = table.tests[static_cast<std::size_t>(i)].y_meas(q);
    ctx.delta = Eigen::VectorXd::Zero(19 * 4);
    ctx.sigma_bias = Eigen::VectorXd::Zero(19 * 4);
    io::MeasErrorConfig meas;
    ctx.sigma_exp = io::build_sigma_exp(ctx.y_obs, meas, 4);
    ctx.emulator = &emulator;
  }
};

EmulatorFixture& fixture() {
  static EmulatorFixture f;
  return f;
}

void BM_GpFit_380x9(benchmark::State& state) {
  const auto table = toy::generate_experiments(toy::default_spec(), 30, 1);
  const auto prior = bayes::PriorSpec::from_table(toy::default_prior());
  std::vector<int> iuq_ids;
  Eigen::MatrixXd x_iuq(19, toy::kDesignDim);
  for (int i = 0; i < 19; ++i) {
    iuq_ids.push_back(table.tests[static_cast<std::size_t>(i)].test_id);
    x_iuq.row(i) = table.tests[static_cast<std::size_t>(i)].x.transpose();
  }
  const auto design = bayes::build_code_design(iuq_ids, x_iuq, prior, 20, 3);
  const auto outputs = bayes::evaluate_design(design, kToySim, 4);
  gp::GpConfig cfg;
  cfg.n_starts = 2;
  cfg.max_iters = 100;
  std::uint64_t seed = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(gp::fit(design.inputs, outputs.col(0), cfg, ++seed));
}
BENCHMARK(BM_GpFit_380x9)->Unit(benchmark::kMillisecond);

void BM_EmulatorPredict_19sites(benchmark::State& state) {
  auto& f = fixture();
  const Eigen::VectorXd theta = Eigen::VectorXd::Ones(5) * 1.2;
  Eigen::MatrixXd mean, mse;
  for (auto _ : state) {
    f.emulator.predict(f.x_iuq, theta, mean, mse);
    benchmark::DoNotOptimize(mean);
  }
}
BENCHMARK(BM_EmulatorPredict_19sites)->Unit(benchmark::kMillisecond);

void BM_LogLikelihood(benchmark::State& state) {
  auto& f = fixture();
  const Eigen::VectorXd theta = Eigen::VectorXd::Ones(5) * 1.2;
  for (auto _ : state)
    benchmark::DoNotOptimize(inference::log_likelihood(
        theta, f.ctx, inference::LikelihoodMode::NoBias));
}
BENCHMARK(BM_LogLikelihood)->Unit(benchmark::kMillisecond);

}  // namespace
