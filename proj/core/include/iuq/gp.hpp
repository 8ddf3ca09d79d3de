#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace iuq::gp {

struct GpConfig {
  int n_starts = 10;       // multi-start count for the hyperparameter search
  int max_iters = 300;     // simplex iterations per start
  double lengthscale_min = 1e-2;  // search box, in normalized input units
  double lengthscale_max = 1e2;
  double nugget_rel = 1e-8;  // nugget as a fraction of the signal variance
  double simplex_tol = 1e-7;
};

/// Gaussian-process regressor with an anisotropic squared-exponential kernel
/// and a constant mean estimated by generalized least squares. Inputs are
/// normalized to [0,1]^d and outputs standardized internally; predictions are
/// reported in the original units.
struct GpModel {
  Eigen::MatrixXd train_u;  // n x d, normalized inputs
  Eigen::VectorXd train_z;  // n, standardized outputs
  std::vector<std::pair<double, double>> input_bounds;
  Eigen::VectorXd lengthscales;  // d, normalized input units
  double signal_variance = 1.0;  // standardized output units^2
  double nugget_rel = 0.0;
  double mean_const = 0.0;  // standardized units
  double y_mean = 0.0;
  double y_std = 1.0;
  double log_lik = 0.0;  // concentrated log marginal likelihood at optimum

  // cached factorization of R = correlation + nugget_rel * I
  Eigen::LLT<Eigen::MatrixXd> chol;
  Eigen::VectorXd alpha;     // R^{-1} (z - mean_const)
  Eigen::VectorXd rinv_one;  // R^{-1} 1
  double one_rinv_one = 0.0;

  int n() const { return static_cast<int>(train_u.rows()); }
  int dim() const { return static_cast<int>(train_u.cols()); }

  Eigen::MatrixXd normalize_inputs(const Eigen::MatrixXd& X) const;

  /// Signal variance in original output units^2.
  double signal_variance_output() const { return signal_variance * y_std * y_std; }
};

/// Trains hyperparameters by maximizing the log marginal likelihood with a
/// multi-start Nelder-Mead search over log lengthscales; the constant mean
/// and signal variance are profiled out analytically at each candidate.
/// Deterministic for a fixed seed.
GpModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
            const GpConfig& config, std::uint64_t seed);

/// Conditional mean and mean-squared error at each query row, in original
/// output units. The MSE includes the mean-estimation term and is clamped
/// at 0.
void predict(const GpModel& model, const Eigen::MatrixXd& Xstar,
             Eigen::VectorXd& mean, Eigen::VectorXd& mse);
Eigen::VectorXd predict_mean(const GpModel& model, const Eigen::MatrixXd& Xstar);

/// Mean squared leave-one-out residual in output units, via the closed-form
/// identity on the cached factorization (no refits). Each virtual fold
/// re-estimates the constant mean but keeps the kernel hyperparameters.
double loocv_error(const GpModel& model);

/// Q2 = 1 - sum((y - yhat)^2) / sum((y - mean(y))^2) on held-out data.
double predictivity_q2(const GpModel& model, const Eigen::MatrixXd& Xtest,
                       const Eigen::VectorXd& ytest);

std::string to_json(const GpModel& model);
GpModel from_json(const std::string& text);

}  // namespace iuq::gp
