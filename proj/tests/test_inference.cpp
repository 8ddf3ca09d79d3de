#include "iuq/inference.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "iuq/common.hpp"
#include "iuq/toymodel.hpp"

using namespace iuq;

namespace {

bayes::PriorSpec toy_prior() {
  return bayes::PriorSpec::from_table(toy::default_prior());
}

bayes::PriorSpec box_prior(int p, double lo, double hi) {
  bayes::PriorSpec prior;
  prior.lower = Eigen::VectorXd::Constant(p, lo);
  prior.upper = Eigen::VectorXd::Constant(p, hi);
  prior.nominal = Eigen::VectorXd::Constant(p, 0.5 * (lo + hi));
  for (int i = 0; i < p; ++i) prior.names.push_back("t" + std::to_string(i));
  return prior;
}

inference::AdaptConfig gaussian_adapt(int p, double step) {
  inference::AdaptConfig cfg;
  cfg.initial_step = Eigen::VectorXd::Constant(p, step);
  cfg.epsilon = 1e-8;
  cfg.warmup = 1000;
  return cfg;
}

// Builds a tiny toy-backed likelihood context shared by several tests.
struct ToyProblem {
  io::TestTable table;
  bayes::CodeEmulator emulator;
  inference::LikelihoodContext ctx;

  explicit ToyProblem(double noise_rel = 0.02, int n_tests = 14,
                      int n_iuq = 5, int n_design = 8) {
    toy::ToySpec spec = toy::default_spec();
    spec.noise_rel = noise_rel;
    spec.bias_amplitude = 0.0;
    table = toy::generate_experiments(spec, n_tests, 21);

    std::vector<int> iuq_ids;
    Eigen::MatrixXd x_iuq(n_iuq, toy::kDesignDim);
    for (int i = 0; i < n_iuq; ++i) {
      iuq_ids.push_back(table.tests[static_cast<std::size_t>(i)].test_id);
      x_iuq.row(i) = table.tests[static_cast<std::size_t>(i)].x.transpose();
    }
    const sim::Simulator sim_fn = [](const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& theta) {
      return toy::simulate(x, theta);
    };
    gp::GpConfig gp_cfg;
    gp_cfg.n_starts = 4;
    gp_cfg.max_iters = 150;
    const auto design =
        bayes::build_code_design(iuq_ids, x_iuq, toy_prior(), n_design, 31);
    const auto outputs = bayes::evaluate_design(design, sim_fn, toy::kQoiCount);
    auto trained = bayes::train_and_validate_gpcode(
        design, outputs, table.y_names, sim_fn, iuq_ids, x_iuq, toy_prior(),
        0.25, 0.0, gp_cfg, 31);
    emulator = std::move(trained.emulator);

    const int m = toy::kQoiCount;
    ctx.x_iuq = x_iuq;
    ctx.y_obs.resize(n_iuq * m);
    for (int i = 0; i < n_iuq; ++i)
      for (int q = 0; q < m; ++q)
        ctx.y_obs(i * m + q) = table.tests[static_cast<std::size_t>(i)].y_meas(q);
    ctx.delta = Eigen::VectorXd::Zero(n_iuq * m);
    ctx.sigma_bias = Eigen::VectorXd::Zero(n_iuq * m);
    io::MeasErrorConfig meas;
    ctx.sigma_exp = io::build_sigma_exp(ctx.y_obs, meas, m);
    ctx.emulator = &emulator;
    ctx.validate();
  }
};

}  // namespace

TEST_CASE("log_prior is 0 inside the open box and -inf outside") {
  const auto prior = toy_prior();
  Eigen::VectorXd theta = Eigen::VectorXd::Ones(5);
  CHECK(inference::log_prior(theta, prior) == 0.0);

  theta(2) = 5.0001;
  CHECK(std::isinf(inference::log_prior(theta, prior)));

  theta(2) = 5.0;  // boundary counts as outside (open-interval convention)
  CHECK(std::isinf(inference::log_prior(theta, prior)));

  theta(2) = 0.0;
  CHECK(std::isinf(inference::log_prior(theta, prior)));
}

TEST_CASE("scalar Gaussian likelihood kernel has the textbook value") {
  // One test, one QoI: a constant-zero emulator, observation 1, unit total
  // variance. Expect -1/2 r^2 - 1/2 log 1 = -0.5.
  Eigen::MatrixXd X(3, 1);
  X << 0.0, 0.5, 1.0;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(3);
  gp::GpConfig cfg;
  cfg.n_starts = 2;
  cfg.max_iters = 50;
  bayes::CodeEmulator emulator;
  emulator.r = 1;
  emulator.p = 0;
  emulator.qoi_models.push_back(gp::fit(X, y, cfg, 1));

  inference::LikelihoodContext ctx;
  ctx.y_obs = Eigen::VectorXd::Ones(1);
  ctx.delta = Eigen::VectorXd::Zero(1);
  ctx.sigma_bias = Eigen::VectorXd::Zero(1);
  ctx.sigma_exp = Eigen::VectorXd::Ones(1);
  ctx.emulator = &emulator;
  ctx.x_iuq = Eigen::MatrixXd::Constant(1, 1, 0.5);

  const Eigen::VectorXd theta(0);
  const double ll =
      inference::log_likelihood(theta, ctx, inference::LikelihoodMode::NoBias);
  CHECK(ll == Catch::Approx(-0.5).margin(1e-9));

  // exact data match: only the log-determinant term remains
  ctx.y_obs(0) = 0.0;
  ctx.sigma_exp(0) = 2.0;
  const double ll0 =
      inference::log_likelihood(theta, ctx, inference::LikelihoodMode::NoBias);
  CHECK(ll0 == Catch::Approx(-0.5 * std::log(2.0)).margin(1e-6));
}

TEST_CASE("WithBias reduces to NoBias when the discrepancy terms vanish") {
  const ToyProblem prob;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unif(0.3, 3.0);
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd theta(5);
    for (int k = 0; k < 5; ++k) theta(k) = unif(rng);
    const double with_bias = inference::log_likelihood(
        theta, prob.ctx, inference::LikelihoodMode::WithBias);
    const double no_bias = inference::log_likelihood(
        theta, prob.ctx, inference::LikelihoodMode::NoBias);
    REQUIRE(with_bias == Catch::Approx(no_bias).margin(1e-12));
  }
}

TEST_CASE("nonpositive total variance is a numerical error") {
  ToyProblem prob;
  prob.ctx.sigma_exp.setZero();
  prob.ctx.freeze_sigma_code = true;
  prob.ctx.frozen_sigma_code = Eigen::VectorXd::Zero(prob.ctx.y_obs.size());
  const Eigen::VectorXd theta = Eigen::VectorXd::Ones(5);
  CHECK_THROWS_AS(
      inference::log_likelihood(theta, prob.ctx, inference::LikelihoodMode::NoBias),
      NumericalError);
}

TEST_CASE("widening the measurement variance flattens the likelihood") {
  ToyProblem prob;
  Eigen::VectorXd theta = Eigen::VectorXd::Ones(5) * 1.4;
  const double base_quad = [&] {
    // isolate the quadratic term by comparing against a huge-variance run
    return inference::log_likelihood(theta, prob.ctx,
                                     inference::LikelihoodMode::NoBias);
  }();
  ToyProblem wide;
  wide.ctx.sigma_exp = prob.ctx.sigma_exp * 16.0;
  const double wide_ll = inference::log_likelihood(
      theta, wide.ctx, inference::LikelihoodMode::NoBias);
  // log-likelihoods differ, and the wide version is closer to its own
  // maximum: check the quadratic part shrinks by computing both pieces.
  Eigen::MatrixXd mean, mse;
  prob.emulator.predict(prob.ctx.x_iuq, theta, mean, mse);
  double quad_tight = 0.0, quad_wide = 0.0;
  const int m = prob.emulator.qoi_count();
  for (Eigen::Index i = 0; i < prob.ctx.x_iuq.rows(); ++i)
    for (int q = 0; q < m; ++q) {
      const Eigen::Index idx = i * m + q;
      const double r = prob.ctx.y_obs(idx) - mean(i, q);
      quad_tight += r * r / (prob.ctx.sigma_exp(idx) + mse(i, q));
      quad_wide += r * r / (16.0 * prob.ctx.sigma_exp(idx) + mse(i, q));
    }
  CHECK(quad_wide < quad_tight);
  (void)base_quad;
  (void)wide_ll;
}

TEST_CASE("adaptive Metropolis recovers a 1D standard normal") {
  const auto log_post = [](const Eigen::VectorXd& t) {
    return -0.5 * t(0) * t(0);
  };
  const auto chain = inference::adaptive_metropolis(
      log_post, Eigen::VectorXd::Zero(1), 50000, 17, gaussian_adapt(1, 0.5));

  const auto kept = inference::postprocess_chain(chain, 5000, 1);
  const double mean = kept.col(0).mean();
  double var = 0.0;
  for (Eigen::Index i = 0; i < kept.rows(); ++i)
    var += (kept(i, 0) - mean) * (kept(i, 0) - mean);
  var /= static_cast<double>(kept.rows() - 1);

  // Monte Carlo standard error from batch means.
  const int n_batches = 45;
  const Eigen::Index batch = kept.rows() / n_batches;
  std::vector<double> means;
  for (int b = 0; b < n_batches; ++b)
    means.push_back(kept.col(0).segment(b * batch, batch).mean());
  double bm = 0.0, bs = 0.0;
  for (double v : means) bm += v;
  bm /= n_batches;
  for (double v : means) bs += (v - bm) * (v - bm);
  const double mcse = std::sqrt(bs / (n_batches - 1) / n_batches);

  CHECK(std::abs(mean) <= 3.0 * mcse);
  CHECK(var == Catch::Approx(1.0).epsilon(0.10));
  CHECK(chain.acceptance_rate > 0.1);
  CHECK(chain.acceptance_rate < 0.5);
}

TEST_CASE("adaptive Metropolis recovers a correlated 2D Gaussian") {
  const double rho = 0.8;
  const double det = 1.0 - rho * rho;
  const auto log_post = [&](const Eigen::VectorXd& t) {
    // N(0, [[1, rho], [rho, 1]])
    return -0.5 * (t(0) * t(0) - 2.0 * rho * t(0) * t(1) + t(1) * t(1)) / det;
  };
  const auto chain = inference::adaptive_metropolis(
      log_post, Eigen::VectorXd::Zero(2), 50000, 23, gaussian_adapt(2, 0.4));
  const auto kept = inference::postprocess_chain(chain, 5000, 1);

  const double mx = kept.col(0).mean(), my = kept.col(1).mean();
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (Eigen::Index i = 0; i < kept.rows(); ++i) {
    sxx += (kept(i, 0) - mx) * (kept(i, 0) - mx);
    syy += (kept(i, 1) - my) * (kept(i, 1) - my);
    sxy += (kept(i, 0) - mx) * (kept(i, 1) - my);
  }
  const double corr = sxy / std::sqrt(sxx * syy);
  CHECK(corr == Catch::Approx(rho).margin(0.05));
  CHECK(sxx / static_cast<double>(kept.rows() - 1) == Catch::Approx(1.0).epsilon(0.10));
  CHECK(chain.acceptance_rate > 0.1);
  CHECK(chain.acceptance_rate < 0.5);
}

TEST_CASE("chains are bit-identical for the same seed") {
  const auto log_post = [](const Eigen::VectorXd& t) {
    return -0.5 * t.squaredNorm();
  };
  const auto a = inference::adaptive_metropolis(
      log_post, Eigen::VectorXd::Zero(2), 5000, 4242, gaussian_adapt(2, 0.3));
  const auto b = inference::adaptive_metropolis(
      log_post, Eigen::VectorXd::Zero(2), 5000, 4242, gaussian_adapt(2, 0.3));
  CHECK((a.samples - b.samples).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.acceptance_rate == b.acceptance_rate);
}

TEST_CASE("sampler rejects an infeasible start") {
  const auto log_post = [](const Eigen::VectorXd&) {
    return -std::numeric_limits<double>::infinity();
  };
  CHECK_THROWS_AS(
      inference::adaptive_metropolis(log_post, Eigen::VectorXd::Zero(1), 2000,
                                     1, gaussian_adapt(1, 0.1)),
      NumericalError);
}

TEST_CASE("posterior support stays strictly inside the prior box") {
  const auto prior = box_prior(2, -1.0, 2.0);
  const auto log_post = [&](const Eigen::VectorXd& t) {
    const double lp = inference::log_prior(t, prior);
    if (std::isinf(lp)) return lp;
    return lp - 0.5 * t.squaredNorm() / 0.25;
  };
  const auto chain = inference::adaptive_metropolis(
      log_post, Eigen::VectorXd::Constant(2, 0.5), 20000, 5,
      inference::AdaptConfig::from_prior(prior));
  for (Eigen::Index i = 0; i < chain.samples.rows(); ++i)
    for (Eigen::Index k = 0; k < 2; ++k) {
      REQUIRE(chain.samples(i, k) > prior.lower(k));
      REQUIRE(chain.samples(i, k) < prior.upper(k));
    }
}

TEST_CASE("postprocessing keeps the documented sample counts") {
  inference::PosteriorChain chain;
  chain.samples = Eigen::MatrixXd::Random(50000, 2);
  chain.log_posts = Eigen::VectorXd::Zero(50000);
  chain.accepted.assign(50000, 1);

  CHECK(inference::postprocess_chain(chain, 10000, 10).rows() == 4000);
  CHECK(inference::postprocess_chain(chain, 0, 1).rows() == 50000);
  CHECK_THROWS_AS(inference::postprocess_chain(chain, 50000, 1), ConfigError);
  CHECK_THROWS_AS(inference::postprocess_chain(chain, 100, 0), ConfigError);

  // identity when nothing is dropped
  const auto all = inference::postprocess_chain(chain, 0, 1);
  CHECK((all - chain.samples).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("thinning reduces the lag-1 autocorrelation") {
  const auto log_post = [](const Eigen::VectorXd& t) {
    return -0.5 * t(0) * t(0);
  };
  const auto chain = inference::adaptive_metropolis(
      log_post, Eigen::VectorXd::Zero(1), 50000, 31, gaussian_adapt(1, 0.25));

  auto lag1 = [](const Eigen::MatrixXd& s) {
    const double mu = s.col(0).mean();
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i + 1 < s.rows(); ++i)
      num += (s(i, 0) - mu) * (s(i + 1, 0) - mu);
    for (Eigen::Index i = 0; i < s.rows(); ++i)
      den += (s(i, 0) - mu) * (s(i, 0) - mu);
    return num / den;
  };
  const auto raw = inference::postprocess_chain(chain, 10000, 1);
  const auto thinned = inference::postprocess_chain(chain, 10000, 10);
  CHECK(lag1(thinned) < lag1(raw));
}

TEST_CASE("frozen-proposal sampler passes a chi-square check on a 1D Gaussian") {
  // Freeze adaptation by pushing the warm-up beyond the run length.
  inference::AdaptConfig cfg = gaussian_adapt(1, 2.4);
  cfg.warmup = 1 << 30;
  const auto log_post = [](const Eigen::VectorXd& t) {
    return -0.5 * t(0) * t(0);
  };
  const auto chain = inference::adaptive_metropolis(
      log_post, Eigen::VectorXd::Zero(1), 100000, 271828, cfg);
  const auto kept = inference::postprocess_chain(chain, 10000, 15);

  // 20 equiprobable bins from the normal quantiles.
  const int bins = 20;
  std::vector<long> count(bins, 0);
  for (Eigen::Index i = 0; i < kept.rows(); ++i) {
    const double u = 0.5 * std::erfc(-kept(i, 0) / std::sqrt(2.0));
    int b = static_cast<int>(u * bins);
    b = std::min(std::max(b, 0), bins - 1);
    ++count[static_cast<std::size_t>(b)];
  }
  const double expected = static_cast<double>(kept.rows()) / bins;
  double chi2 = 0.0;
  for (long c : count) chi2 += (c - expected) * (c - expected) / expected;
  // chi-square(19) 1% critical value
  CHECK(chi2 < 36.19);
}

TEST_CASE("chain CSV round-trip") {
  const auto log_post = [](const Eigen::VectorXd& t) {
    return -0.5 * t.squaredNorm();
  };
  auto chain = inference::adaptive_metropolis(
      log_post, Eigen::VectorXd::Zero(2), 2000, 8, gaussian_adapt(2, 0.4));
  chain.burn_in = 500;
  chain.thin = 5;
  inference::write_chain_csv("chain_rt_test.csv", chain);
  const auto back = inference::read_chain_csv("chain_rt_test.csv");
  CHECK(back.samples.rows() == chain.samples.rows());
  CHECK((back.samples - chain.samples).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.log_posts - chain.log_posts).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.accepted == chain.accepted);
  std::remove("chain_rt_test.csv");
}
