#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "iuq/modular_bayes.hpp"

namespace iuq::inference {

enum class LikelihoodMode { WithBias, NoBias };

/// Everything the Gaussian likelihood needs at a proposal: the stacked
/// observations, the discrepancy mean and its variance (zero in NoBias
/// mode), the measurement variances, and the code emulator that supplies
/// both the model prediction and the code variance at each theta. All
/// stacked vectors are test-major with the QoI index minor.
struct LikelihoodContext {
  Eigen::VectorXd y_obs;
  Eigen::VectorXd delta;
  Eigen::VectorXd sigma_exp;
  Eigen::VectorXd sigma_bias;
  const bayes::CodeEmulator* emulator = nullptr;
  Eigen::MatrixXd x_iuq;
  bool freeze_sigma_code = false;
  Eigen::VectorXd frozen_sigma_code;

  void validate() const;
  /// Precomputes sigma_code at theta0 for the freeze option.
  void freeze_code_variance_at(const Eigen::VectorXd& theta0);
};

/// 0 inside the open prior box, -inf outside (uniform density up to a
/// constant); boundary values count as outside.
double log_prior(const Eigen::VectorXd& theta, const bayes::PriorSpec& prior);

/// Gaussian log-likelihood kernel -r' S^{-1} r / 2 - log|S| / 2 with
/// diagonal S = sigma_exp (+ sigma_bias) + sigma_code and
/// r = y_obs - yM(theta) (- delta). WithBias keeps the discrepancy terms,
/// NoBias removes them.
double log_likelihood(const Eigen::VectorXd& theta,
                      const LikelihoodContext& ctx, LikelihoodMode mode);

struct AdaptConfig {
  Eigen::VectorXd initial_step;  // per-dimension proposal std before adaptation
  double epsilon = 1e-8;         // ridge added to the adapted covariance
  int warmup = 1000;             // iterations before covariance adaptation

  /// Paper-style defaults from a prior box: initial step 1% of each range,
  /// epsilon = 1e-6 * mean squared range.
  static AdaptConfig from_prior(const bayes::PriorSpec& prior);
};

struct PosteriorChain {
  Eigen::MatrixXd samples;  // one row per iteration
  Eigen::VectorXd log_posts;
  std::vector<std::uint8_t> accepted;
  double acceptance_rate = 0.0;
  int burn_in = 0;
  int thin = 1;
  std::uint64_t seed = 0;
};

using LogPostFn = std::function<double(const Eigen::VectorXd&)>;

/// Adaptive random-walk Metropolis: a fixed diagonal Gaussian proposal for
/// the warm-up, then the empirical covariance scaled by 2.38^2/p plus an
/// epsilon ridge. Deterministic for a fixed seed.
PosteriorChain adaptive_metropolis(const LogPostFn& log_post,
                                   const Eigen::VectorXd& init, int n_samples,
                                   std::uint64_t seed, const AdaptConfig& cfg);

/// Drops the first burn_in samples, then keeps every thin-th of the rest.
Eigen::MatrixXd postprocess_chain(const PosteriorChain& chain, int burn_in,
                                  int thin);
Eigen::MatrixXd postprocess_samples(const Eigen::MatrixXd& samples,
                                    int burn_in, int thin);

/// CSV with header `iter,theta1..thetap,log_post,accepted`.
void write_chain_csv(const std::string& path, const PosteriorChain& chain);
PosteriorChain read_chain_csv(const std::string& path);

}  // namespace iuq::inference
